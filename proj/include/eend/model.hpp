// Copyright (c) 2026 eend authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EEND_MODEL_HPP
#define EEND_MODEL_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "eend/kv.hpp"
#include "eend/nncore.hpp"

namespace eend {

enum class AttractorVariant { kEda, kNa };

inline std::string to_string(AttractorVariant v) {
  return v == AttractorVariant::kEda ? "eda" : "na";
}

inline AttractorVariant attractor_variant_from_string(const std::string& s) {
  if (s == "eda") return AttractorVariant::kEda;
  if (s == "na") return AttractorVariant::kNa;
  throw ConfigError("unknown attractor variant: " + s + " (expected eda|na)");
}

struct ModelConfig {
  AttractorVariant variant = AttractorVariant::kEda;
  int num_layers = 4;
  int model_dim = 256;
  int heads = 4;
  int ff_dim = 2048;
  int num_speakers = 2;
  int input_dim = 345;
  bool inter_loss = false;
  bool self_cond = false;
  double dropout = 0.1;
  uint64_t seed = 0;
  std::vector<int> tap_mask;  // 1-based tapped layers; empty means all of 1..L-1

  void validate() const {
    if (num_layers < 1) throw ConfigError("model.num_layers must be >= 1");
    if (model_dim < 2) throw ConfigError("model.dim must be >= 2");
    if (heads < 1 || model_dim % heads != 0)
      throw ConfigError("model.dim " + std::to_string(model_dim) + " not divisible by model.heads " +
                        std::to_string(heads));
    if (ff_dim < 1) throw ConfigError("model.ff_dim must be >= 1");
    if (num_speakers < 1 || num_speakers > 8)
      throw ConfigError("model.num_speakers must be in [1,8]");
    if (input_dim < 1) throw ConfigError("model.input_dim must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout must be in [0,1)");
    if (self_cond && !inter_loss) throw ConfigError("model.self_cond requires model.inter_loss");
    for (int l : tap_mask)
      if (l < 1 || l > num_layers - 1)
        throw ConfigError("model.tap_mask entry " + std::to_string(l) + " outside [1," +
                          std::to_string(num_layers - 1) + "]");
    for (size_t i = 1; i < tap_mask.size(); ++i)
      if (tap_mask[i] <= tap_mask[i - 1]) throw ConfigError("model.tap_mask must be strictly increasing");
  }

  /// Tapped layers in ascending order; default is every layer 1..L-1.
  std::vector<int> taps() const {
    if (!tap_mask.empty()) return tap_mask;
    std::vector<int> all;
    for (int l = 1; l < num_layers; ++l) all.push_back(l);
    return all;
  }
};

/// Canonical flat key=value form, one key per line, fixed order.
inline std::string model_config_text(const ModelConfig& c) {
  std::string taps = "all";
  if (!c.tap_mask.empty()) {
    taps.clear();
    for (size_t i = 0; i < c.tap_mask.size(); ++i) {
      if (i) taps += ',';
      taps += std::to_string(c.tap_mask[i]);
    }
  }
  std::string out;
  out += "model.variant=" + to_string(c.variant) + "\n";
  out += "model.layers=" + std::to_string(c.num_layers) + "\n";
  out += "model.dim=" + std::to_string(c.model_dim) + "\n";
  out += "model.heads=" + std::to_string(c.heads) + "\n";
  out += "model.ff_dim=" + std::to_string(c.ff_dim) + "\n";
  out += "model.speakers=" + std::to_string(c.num_speakers) + "\n";
  out += "model.input_dim=" + std::to_string(c.input_dim) + "\n";
  out += "model.inter_loss=" + kv::bool_text(c.inter_loss) + "\n";
  out += "model.self_cond=" + kv::bool_text(c.self_cond) + "\n";
  out += "model.dropout=" + kv::format_double(c.dropout) + "\n";
  out += "model.seed=" + std::to_string(c.seed) + "\n";
  out += "model.tap_mask=" + taps + "\n";
  return out;
}

/// Applies one "model.*" key. Unknown keys raise ConfigError.
inline void apply_model_key(ModelConfig& c, const std::string& key, const std::string& value) {
  if (key == "model.variant") {
    c.variant = attractor_variant_from_string(value);
  } else if (key == "model.layers") {
    c.num_layers = static_cast<int>(kv::to_int(value, key));
  } else if (key == "model.dim") {
    c.model_dim = static_cast<int>(kv::to_int(value, key));
  } else if (key == "model.heads") {
    c.heads = static_cast<int>(kv::to_int(value, key));
  } else if (key == "model.ff_dim") {
    c.ff_dim = static_cast<int>(kv::to_int(value, key));
  } else if (key == "model.speakers") {
    c.num_speakers = static_cast<int>(kv::to_int(value, key));
  } else if (key == "model.input_dim") {
    c.input_dim = static_cast<int>(kv::to_int(value, key));
  } else if (key == "model.inter_loss") {
    c.inter_loss = kv::to_bool(value, key);
  } else if (key == "model.self_cond") {
    c.self_cond = kv::to_bool(value, key);
  } else if (key == "model.dropout") {
    c.dropout = kv::to_double(value, key);
  } else if (key == "model.seed") {
    c.seed = kv::to_uint(value, key);
  } else if (key == "model.tap_mask") {
    c.tap_mask.clear();
    if (value != "all" && !value.empty()) {
      size_t pos = 0;
      while (pos <= value.size()) {
        size_t comma = value.find(',', pos);
        if (comma == std::string::npos) comma = value.size();
        c.tap_mask.push_back(static_cast<int>(kv::to_int(value.substr(pos, comma - pos), key)));
        pos = comma + 1;
      }
    }
  } else {
    throw ConfigError("unknown model config key: " + key);
  }
}

inline ModelConfig parse_model_config_text(const std::string& text) {
  ModelConfig c;
  for (const auto& [key, value] : kv::parse_lines(text)) apply_model_key(c, key, value);
  c.validate();
  return c;
}

namespace detail {
inline std::string layer_prefix(int l) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "enc.%02d", l);
  return std::string(buf);
}
}  // namespace detail

/// Registers every learnable tensor for the configured variant. Weight
/// matrices are Xavier-uniform, biases and norm offsets zero, norm gains one.
/// Conditioning starts at exactly zero so it begins as an identity map.
template <class T>
ParameterStore<T> init_parameters(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  ParameterStore<T> ps;
  const int64_t d = cfg.model_dim;
  const int64_t ff = cfg.ff_dim;
  const int64_t c = cfg.num_speakers;
  auto ones = [](int64_t r) {
    Matrix<T> m(r, 1, T(1));
    return m;
  };
  auto add_linear = [&](const std::string& prefix, int64_t out, int64_t in) {
    ps.add(prefix + ".w", xavier_uniform<T>(out, in, rng));
    ps.add(prefix + ".b", Matrix<T>::zeros(out, 1));
  };
  auto add_norm = [&](const std::string& prefix) {
    ps.add(prefix + ".gain", ones(d));
    ps.add(prefix + ".bias", Matrix<T>::zeros(d, 1));
  };
  auto add_attention = [&](const std::string& prefix) {
    add_linear(prefix + ".q", d, d);
    add_linear(prefix + ".k", d, d);
    add_linear(prefix + ".v", d, d);
    add_linear(prefix + ".out", d, d);
  };
  auto add_lstm = [&](const std::string& prefix) {
    ps.add(prefix + ".w_ih", xavier_uniform<T>(4 * d, d, rng));
    ps.add(prefix + ".w_hh", xavier_uniform<T>(4 * d, d, rng));
    ps.add(prefix + ".b_ih", Matrix<T>::zeros(4 * d, 1));
    ps.add(prefix + ".b_hh", Matrix<T>::zeros(4 * d, 1));
  };

  add_linear("frontend.proj", d, cfg.input_dim);
  add_norm("frontend.norm");
  for (int l = 1; l <= cfg.num_layers; ++l) {
    const std::string p = detail::layer_prefix(l);
    add_attention(p + ".attn");
    add_norm(p + ".norm1");
    add_linear(p + ".ff1", ff, d);
    add_linear(p + ".ff2", d, ff);
    add_norm(p + ".norm2");
  }
  if (cfg.variant == AttractorVariant::kEda) {
    add_lstm("eda.enc");
    add_lstm("eda.dec");
    ps.add("eda.exist.w", xavier_uniform<T>(1, d, rng));
    ps.add("eda.exist.b", Matrix<T>::zeros(1, 1));
  } else {
    ps.add("na.queries", xavier_uniform<T>(d, c, rng));
    add_attention("na.attn");
  }
  if (cfg.self_cond) {
    ps.add("cond.w", Matrix<T>::zeros(d, d));
    ps.add("cond.b", Matrix<T>::zeros(d, 1));
  }
  return ps;
}

/// Closed-form scalar parameter total; must agree with the instantiated
/// store's total_scalars() for every config.
inline int64_t param_count(const ModelConfig& cfg) {
  cfg.validate();
  const int64_t d = cfg.model_dim;
  const int64_t ff = cfg.ff_dim;
  const int64_t c = cfg.num_speakers;
  const int64_t frontend = static_cast<int64_t>(cfg.input_dim) * d + d + 2 * d;
  const int64_t per_layer = 4 * (d * d + d) + 2 * (2 * d) + (d * ff + ff) + (ff * d + d);
  const int64_t lstm = 2 * (4 * d * d) + 2 * (4 * d);
  const int64_t extractor =
      cfg.variant == AttractorVariant::kEda ? 2 * lstm + (d + 1) : c * d + 4 * (d * d + d);
  const int64_t cond = cfg.self_cond ? d * d + d : 0;
  return frontend + cfg.num_layers * per_layer + extractor + cond;
}

/// Projection to model dim followed by one layer_norm; produces the feed into
/// encoder layer 1.
template <class T>
Var<T> input_frontend(Graph<T>& g, ParameterStore<T>& ps, Var<T> x_raw) {
  Var<T> e = linear(g, ps, "frontend.proj", x_raw);
  return layer_norm(e, g.param(ps, "frontend.norm.gain"), g.param(ps, "frontend.norm.bias"),
                    T(1e-5));
}

/// Post-norm Transformer layer: self-attention and ReLU feed-forward
/// sublayers, each with residual then layer_norm. No positional encoding.
template <class T>
Var<T> encoder_layer_forward(Graph<T>& g, ParameterStore<T>& ps, int layer, Var<T> e_prev,
                             int heads, double drop_rate = 0.0, std::mt19937_64* rng = nullptr) {
  const std::string p = detail::layer_prefix(layer);
  const T eps = T(1e-5);
  Var<T> att = multi_head_attention(g, ps, p + ".attn", e_prev, e_prev, e_prev, heads);
  if (drop_rate > 0.0 && rng != nullptr) att = dropout(att, drop_rate, *rng);
  Var<T> h1 = layer_norm(add(e_prev, att), g.param(ps, p + ".norm1.gain"),
                         g.param(ps, p + ".norm1.bias"), eps);
  Var<T> f = linear(g, ps, p + ".ff2", relu(linear(g, ps, p + ".ff1", h1)));
  if (drop_rate > 0.0 && rng != nullptr) f = dropout(f, drop_rate, *rng);
  return layer_norm(add(h1, f), g.param(ps, p + ".norm2.gain"), g.param(ps, p + ".norm2.bias"),
                    eps);
}

/// LSTM encoder over embedding columns in time order, then an LSTM decoder
/// fed C zero vectors; decoder hidden states are the attractor columns.
/// Returns (attractors D×C, existence logits 1×C). The existence head is kept
/// for parameter parity; its loss is never trained here.
template <class T>
std::pair<Var<T>, Var<T>> eda_attractors(Graph<T>& g, ParameterStore<T>& ps, Var<T> embeddings,
                                         int num_speakers) {
  const int64_t d = embeddings.rows();
  const int64_t t_len = embeddings.cols();
  LstmState<T> s{g.leaf(Matrix<T>::zeros(d, 1)), g.leaf(Matrix<T>::zeros(d, 1))};
  for (int64_t t = 0; t < t_len; ++t)
    s = lstm_step(g, ps, "eda.enc", slice_cols(embeddings, t, t + 1), s);
  Var<T> zero_in = g.leaf(Matrix<T>::zeros(d, 1));
  std::vector<Var<T>> cols;
  for (int c = 0; c < num_speakers; ++c) {
    s = lstm_step(g, ps, "eda.dec", zero_in, s);
    cols.push_back(s.h);
  }
  Var<T> a = num_speakers == 1 ? cols[0] : concat_cols(cols);
  Var<T> logits = add_col(matmul(g.param(ps, "eda.exist.w"), a), g.param(ps, "eda.exist.b"));
  return {a, logits};
}

/// Learned queries cross-attend to the embeddings as keys and values; all
/// attractors come out in one attention call, so the result is invariant to
/// any permutation of embedding columns.
template <class T>
Var<T> na_attractors(Graph<T>& g, ParameterStore<T>& ps, Var<T> embeddings, int heads) {
  Var<T> q = g.param(ps, "na.queries");
  return multi_head_attention(g, ps, "na.attn", q, embeddings, embeddings, heads);
}

/// Y = Sigmoid(A^T E).
template <class T>
Var<T> readout(Var<T> attractors, Var<T> embeddings) {
  return sigmoid(matmul(transpose(attractors), embeddings));
}

/// e + W (A Y) + b with b broadcast over frames. A Y is the per-frame
/// posterior-weighted average of attractor vectors.
template <class T>
Var<T> condition(Var<T> e, Var<T> attractors, Var<T> posteriors, Var<T> w, Var<T> b) {
  return add_col(add(e, matmul(w, matmul(attractors, posteriors))), b);
}

template <class T>
struct ForwardOutput {
  Var<T> final_posteriors;                     // C x T
  Var<T> final_attractors;                     // D x C
  std::vector<int> tap_layers;                 // which layer each entry below came from
  std::vector<Var<T>> intermediate_posteriors; // C x T each
  std::vector<Var<T>> intermediate_attractors; // D x C each
  std::vector<Var<T>> embeddings;              // E_1 .. E_L
};

/// Full pass: frontend, then per layer optional conditioning (from the
/// previous layer's tap), encoder layer, and a tap if configured. The final
/// attractors reuse the same extractor parameters as every tap.
template <class T>
ForwardOutput<T> forward(Graph<T>& g, ParameterStore<T>& ps, const ModelConfig& cfg,
                         const Matrix<T>& x_raw, bool train_mode = false,
                         std::mt19937_64* rng = nullptr) {
  cfg.validate();
  if (x_raw.rows != cfg.input_dim)
    throw ConfigError("input has " + std::to_string(x_raw.rows) + " rows, model expects " +
                      std::to_string(cfg.input_dim));
  const double drop = train_mode ? cfg.dropout : 0.0;
  if (drop > 0.0 && rng == nullptr) throw ConfigError("train-mode dropout requires an rng");
  const std::vector<int> taps = cfg.taps();
  auto tapped = [&](int l) {
    return cfg.inter_loss && std::find(taps.begin(), taps.end(), l) != taps.end();
  };
  auto extract = [&](Var<T> e) {
    return cfg.variant == AttractorVariant::kEda
               ? eda_attractors(g, ps, e, cfg.num_speakers).first
               : na_attractors(g, ps, e, cfg.heads);
  };

  ForwardOutput<T> out;
  Var<T> e = input_frontend(g, ps, g.leaf(x_raw));
  std::map<int, size_t> tap_index;
  for (int l = 1; l <= cfg.num_layers; ++l) {
    if (cfg.self_cond && l >= 2) {
      auto it = tap_index.find(l - 1);
      if (it != tap_index.end())
        e = condition(e, out.intermediate_attractors[it->second],
                      out.intermediate_posteriors[it->second], g.param(ps, "cond.w"),
                      g.param(ps, "cond.b"));
    }
    e = encoder_layer_forward(g, ps, l, e, cfg.heads, drop, rng);
    out.embeddings.push_back(e);
    if (l < cfg.num_layers && tapped(l)) {
      Var<T> a = extract(e);
      tap_index[l] = out.tap_layers.size();
      out.tap_layers.push_back(l);
      out.intermediate_attractors.push_back(a);
      out.intermediate_posteriors.push_back(readout(a, e));
    }
  }
  out.final_attractors = extract(e);
  out.final_posteriors = readout(out.final_attractors, e);
  return out;
}

}  // namespace eend

#endif  // EEND_MODEL_HPP
