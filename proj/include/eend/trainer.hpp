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

// Optimizer, batching and the training loop. Training is bit-reproducible
// per seed: item gradients are reduced in index order, so results do not
// depend on the worker thread count.

#ifndef EEND_TRAINER_HPP
#define EEND_TRAINER_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "eend/checkpoint.hpp"
#include "eend/io.hpp"
#include "eend/loss.hpp"
#include "eend/model.hpp"
#include "eend/threading.hpp"

namespace eend {

struct TrainConfig {
  int batch_size = 32;
  double segment_seconds = 50.0;
  int64_t warmup_steps = 200000;
  int epochs = 100;
  double adapt_lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  int average_last_k = 10;
  uint64_t seed = 0;
  double grad_clip = 5.0;  // global norm; 0 disables
  double inter_mix = 1.0;  // weight on the averaged intermediate losses

  void validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (segment_seconds <= 0) throw ConfigError("train.segment_seconds must be positive");
    if (warmup_steps < 1) throw ConfigError("train.warmup_steps must be >= 1");
    if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (adapt_lr <= 0) throw ConfigError("train.adapt_lr must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("train.beta1/beta2 must be in [0,1)");
    if (adam_eps <= 0) throw ConfigError("train.adam_eps must be positive");
    if (average_last_k < 1) throw ConfigError("train.average_last_k must be >= 1");
    if (epochs > 0 && average_last_k > epochs)
      throw ConfigError("train.average_last_k must not exceed train.epochs");
    if (grad_clip < 0) throw ConfigError("train.grad_clip must be >= 0");
    if (inter_mix < 0) throw ConfigError("train.inter_mix must be >= 0");
  }
};

inline std::string train_config_text(const TrainConfig& c) {
  std::string out;
  out += "train.batch_size=" + std::to_string(c.batch_size) + "\n";
  out += "train.segment_seconds=" + kv::format_double(c.segment_seconds) + "\n";
  out += "train.warmup_steps=" + std::to_string(c.warmup_steps) + "\n";
  out += "train.epochs=" + std::to_string(c.epochs) + "\n";
  out += "train.adapt_lr=" + kv::format_double(c.adapt_lr) + "\n";
  out += "train.beta1=" + kv::format_double(c.beta1) + "\n";
  out += "train.beta2=" + kv::format_double(c.beta2) + "\n";
  out += "train.adam_eps=" + kv::format_double(c.adam_eps) + "\n";
  out += "train.average_last_k=" + std::to_string(c.average_last_k) + "\n";
  out += "train.seed=" + std::to_string(c.seed) + "\n";
  out += "train.grad_clip=" + kv::format_double(c.grad_clip) + "\n";
  out += "train.inter_mix=" + kv::format_double(c.inter_mix) + "\n";
  return out;
}

/// Applies one "train.*" key. Unknown keys raise ConfigError.
inline void apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "train.batch_size") {
    c.batch_size = static_cast<int>(kv::to_int(value, key));
  } else if (key == "train.segment_seconds") {
    c.segment_seconds = kv::to_double(value, key);
  } else if (key == "train.warmup_steps") {
    c.warmup_steps = kv::to_int(value, key);
  } else if (key == "train.epochs") {
    c.epochs = static_cast<int>(kv::to_int(value, key));
  } else if (key == "train.adapt_lr") {
    c.adapt_lr = kv::to_double(value, key);
  } else if (key == "train.beta1") {
    c.beta1 = kv::to_double(value, key);
  } else if (key == "train.beta2") {
    c.beta2 = kv::to_double(value, key);
  } else if (key == "train.adam_eps") {
    c.adam_eps = kv::to_double(value, key);
  } else if (key == "train.average_last_k") {
    c.average_last_k = static_cast<int>(kv::to_int(value, key));
  } else if (key == "train.seed") {
    c.seed = kv::to_uint(value, key);
  } else if (key == "train.grad_clip") {
    c.grad_clip = kv::to_double(value, key);
  } else if (key == "train.inter_mix") {
    c.inter_mix = kv::to_double(value, key);
  } else {
    throw ConfigError("unknown train config key: " + key);
  }
}

/// lr = D^(-1/2) * min(step^(-1/2), step * warmup^(-3/2)). Peaks at step ==
/// warmup where both branches meet.
inline double noam_lr(int64_t step, int model_dim, int64_t warmup_steps) {
  if (step < 1) throw std::invalid_argument("noam_lr: step must be >= 1");
  if (model_dim < 1) throw ConfigError("noam_lr: model_dim must be >= 1");
  if (warmup_steps < 1) throw ConfigError("noam_lr: warmup_steps must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return std::pow(static_cast<double>(model_dim), -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

template <class T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  int64_t step = 0;
  std::map<std::string, Matrix<T>> m;
  std::map<std::string, Matrix<T>> v;
};

/// Scales every stored gradient so the global L2 norm is at most max_norm.
/// Returns the pre-clip norm. max_norm <= 0 disables clipping.
template <class T>
double clip_global_norm(ParameterStore<T>& ps, double max_norm) {
  double ss = 0;
  for (const auto& [name, e] : ps)
    for (const T& v : e.grad.data) ss += static_cast<double>(v) * static_cast<double>(v);
  const double norm = std::sqrt(ss);
  if (max_norm > 0 && norm > max_norm) {
    const T s = static_cast<T>(max_norm / norm);
    for (auto& [name, e] : ps)
      for (T& v : e.grad.data) v *= s;
  }
  return norm;
}

/// Bias-corrected Adam on the store's gradient slots.
template <class T>
void adam_step(ParameterStore<T>& ps, AdamState<T>& st, double lr) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (auto& [name, e] : ps) {
    if (!e.grad.all_finite()) throw DivergenceError("non-finite gradient for parameter " + name);
    auto& m = st.m.try_emplace(name, Matrix<T>::zeros(e.grad.rows, e.grad.cols)).first->second;
    auto& v = st.v.try_emplace(name, Matrix<T>::zeros(e.grad.rows, e.grad.cols)).first->second;
    for (size_t i = 0; i < e.grad.data.size(); ++i) {
      const double g = static_cast<double>(e.grad.data[i]);
      const double mi = st.beta1 * static_cast<double>(m.data[i]) + (1.0 - st.beta1) * g;
      const double vi = st.beta2 * static_cast<double>(v.data[i]) + (1.0 - st.beta2) * g * g;
      m.data[i] = static_cast<T>(mi);
      v.data[i] = static_cast<T>(vi);
      e.value.data[i] -= static_cast<T>(lr * (mi / bc1) / (std::sqrt(vi / bc2) + st.eps));
    }
  }
}

/// One windowed training example.
template <class T>
struct TrainItem {
  Matrix<T> features;  // input_dim x t
  Matrix<T> labels;    // num_speakers x t
  std::string recording_id;
};

/// Chops one recording into non-overlapping windows of window_frames columns.
/// The final short window is kept when it has at least min_frames frames.
inline std::vector<std::pair<int64_t, int64_t>> window_spans(int64_t t_frames, int64_t window_frames,
                                                             int64_t min_frames = 10) {
  if (window_frames < 1) throw ConfigError("window length must be >= 1 frame");
  std::vector<std::pair<int64_t, int64_t>> spans;
  for (int64_t begin = 0; begin < t_frames; begin += window_frames) {
    const int64_t len = std::min(window_frames, t_frames - begin);
    if (len >= std::min(min_frames, window_frames)) spans.emplace_back(begin, len);
  }
  return spans;
}

/// Loads manifest recordings and windows them into training items. Reference
/// speakers are mapped to label rows in sorted-name order; recordings with
/// more speakers than the model raise ConfigError.
template <class T>
std::vector<TrainItem<T>> load_training_windows(const std::vector<ManifestEntry>& manifest,
                                                const ModelConfig& mcfg, double segment_seconds) {
  if (manifest.empty()) throw ConfigError("empty manifest");
  const int64_t window_frames = seconds_to_ms(segment_seconds) / kFrameMs;
  std::vector<TrainItem<T>> items;
  for (const auto& entry : manifest) {
    Matrix<float> feats = read_features(entry.feature_path);
    if (feats.rows != mcfg.input_dim)
      throw ConfigError(entry.feature_path + ": feature dim " + std::to_string(feats.rows) +
                        " does not match model.input_dim " + std::to_string(mcfg.input_dim));
    const SegmentAnnotation ref = find_recording(rttm_read(entry.rttm_path), entry.id, entry.rttm_path);
    std::vector<std::string> order = ref.speakers();
    if (static_cast<int>(order.size()) > mcfg.num_speakers)
      throw ConfigError(entry.id + ": " + std::to_string(order.size()) + " speakers exceed model.speakers " +
                        std::to_string(mcfg.num_speakers));
    while (static_cast<int>(order.size()) < mcfg.num_speakers)
      order.push_back("\x01pad" + std::to_string(order.size()));
    const Matrix<T> labels = labels_from_segments<T>(ref, 0.1, feats.cols, order);
    for (const auto& [begin, len] : window_spans(feats.cols, window_frames)) {
      TrainItem<T> item;
      item.recording_id = entry.id;
      item.features = Matrix<T>::zeros(feats.rows, len);
      item.labels = Matrix<T>::zeros(labels.rows, len);
      for (int64_t r = 0; r < feats.rows; ++r)
        for (int64_t c = 0; c < len; ++c) item.features(r, c) = static_cast<T>(feats(r, begin + c));
      for (int64_t r = 0; r < labels.rows; ++r)
        for (int64_t c = 0; c < len; ++c) item.labels(r, c) = labels(r, begin + c);
      items.push_back(std::move(item));
    }
  }
  if (items.empty()) throw ConfigError("manifest produced no usable training windows");
  return items;
}

/// Deterministic epoch shuffle into batches; the last partial batch is kept.
inline std::vector<std::vector<int>> make_batches(int n_items, int batch_size, uint64_t seed, int epoch) {
  if (n_items < 1) throw ConfigError("no training items to batch");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  std::vector<int> order(static_cast<size_t>(n_items));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(epoch)));
  for (int i = n_items - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
  }
  std::vector<std::vector<int>> batches;
  for (int b = 0; b < n_items; b += batch_size) {
    const int end = std::min(n_items, b + batch_size);
    batches.emplace_back(order.begin() + b, order.begin() + end);
  }
  return batches;
}

struct StepLog {
  int64_t step = 0;
  int epoch = 0;
  double lr = 0;
  double total_loss = 0;
  double final_loss = 0;
  double inter_loss = 0;  // mean over taps; 0 when inter_loss is off
  double wall_seconds = 0;
};

struct TrainResult {
  std::vector<StepLog> logs;
  std::vector<std::string> checkpoint_paths;
  int64_t steps = 0;
};

struct TrainOptions {
  bool adapt = false;          // constant adapt_lr instead of the Noam schedule
  std::string out_dir;         // empty: no checkpoints written
  std::ostream* log = nullptr;  // newline-delimited step records
  int threads = 1;
  int64_t max_steps = 0;  // 0 = no cap
  std::function<bool(const StepLog&)> on_step;  // return true to stop early
};

namespace detail {

struct ItemLossParts {
  double total = 0;
  double final_part = 0;
  double inter_part = 0;
};

/// Forward + loss + backward for one item; gradients land in `out`.
template <class T>
ItemLossParts item_gradients(ParameterStore<T>& ps, const ModelConfig& cfg, const TrainItem<T>& item,
                             double inter_mix, uint64_t dropout_seed, GradMap<T>* out) {
  Graph<T> g;
  std::mt19937_64 rng(dropout_seed);
  ForwardOutput<T> fwd = forward(g, ps, cfg, item.features, true, &rng);
  auto [final_term, perm] = pit_loss(item.labels, fwd.final_posteriors);
  Var<T> total = final_term;
  ItemLossParts parts;
  if (cfg.inter_loss && !fwd.intermediate_posteriors.empty()) {
    Var<T> inter_sum = pit_loss(item.labels, fwd.intermediate_posteriors[0]).first;
    for (size_t i = 1; i < fwd.intermediate_posteriors.size(); ++i)
      inter_sum = add(inter_sum, pit_loss(item.labels, fwd.intermediate_posteriors[i]).first);
    const double n = static_cast<double>(fwd.intermediate_posteriors.size());
    parts.inter_part = static_cast<double>(inter_sum.value()(0, 0)) / n;
    total = add(total, scale(inter_sum, static_cast<T>(inter_mix / n)));
  }
  parts.final_part = static_cast<double>(final_term.value()(0, 0));
  parts.total = static_cast<double>(total.value()(0, 0));
  g.backward(total, out);
  return parts;
}

}  // namespace detail

/// Accumulates batch-mean gradients into the store and reports the loss
/// decomposition. Items run in parallel but are reduced in index order.
template <class T>
StepLog compute_step_gradients(ParameterStore<T>& ps, const ModelConfig& cfg,
                               const std::vector<TrainItem<T>>& items, const std::vector<int>& batch,
                               double inter_mix, uint64_t step_seed, int threads) {
  if (batch.empty()) throw ConfigError("empty batch");
  const int n = static_cast<int>(batch.size());
  std::vector<GradMap<T>> grads(static_cast<size_t>(n));
  std::vector<detail::ItemLossParts> parts(static_cast<size_t>(n));
  parallel_for(n, threads, [&](int i) {
    parts[static_cast<size_t>(i)] = detail::item_gradients(
        ps, cfg, items[static_cast<size_t>(batch[static_cast<size_t>(i)])], inter_mix,
        mix_seed(step_seed, static_cast<uint64_t>(i)), &grads[static_cast<size_t>(i)]);
  });
  ps.zero_grads();
  for (int i = 0; i < n; ++i) ps.accumulate(grads[static_cast<size_t>(i)]);
  const T inv = T(1) / static_cast<T>(n);
  StepLog log;
  for (auto& [name, e] : ps)
    for (T& v : e.grad.data) v *= inv;
  for (const auto& p : parts) {
    log.total_loss += p.total / n;
    log.final_loss += p.final_part / n;
    log.inter_loss += p.inter_part / n;
  }
  return log;
}

/// Runs the optimization loop; writes epoch_<n>.ckpt after each epoch when
/// out_dir is set. Aborts with DivergenceError when a loss goes non-finite.
template <class T>
TrainResult train(ParameterStore<T>& ps, const ModelConfig& mcfg, const TrainConfig& tcfg,
                  const std::vector<TrainItem<T>>& items, const TrainOptions& opt) {
  mcfg.validate();
  tcfg.validate();
  if (items.empty()) throw ConfigError("no training items");
  for (const auto& item : items)
    if (item.features.rows != mcfg.input_dim || item.labels.rows != mcfg.num_speakers ||
        item.features.cols != item.labels.cols)
      throw ConfigError("training item shapes do not match the model config");
  if (!opt.out_dir.empty()) std::filesystem::create_directories(opt.out_dir);

  AdamState<T> adam;
  adam.beta1 = tcfg.beta1;
  adam.beta2 = tcfg.beta2;
  adam.eps = tcfg.adam_eps;
  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();
  int64_t step = 0;
  bool stop_requested = false;
  for (int epoch = 1; epoch <= tcfg.epochs && !stop_requested; ++epoch) {
    const auto batches = make_batches(static_cast<int>(items.size()), tcfg.batch_size, tcfg.seed, epoch);
    for (const auto& batch : batches) {
      if (opt.max_steps > 0 && step >= opt.max_steps) break;
      ++step;
      StepLog log = compute_step_gradients(ps, mcfg, items, batch, tcfg.inter_mix,
                                           mix_seed(tcfg.seed, static_cast<uint64_t>(step)), opt.threads);
      if (!std::isfinite(log.total_loss))
        throw DivergenceError("step " + std::to_string(step) + ": non-finite training loss");
      clip_global_norm(ps, tcfg.grad_clip);
      log.step = step;
      log.epoch = epoch;
      log.lr = opt.adapt ? tcfg.adapt_lr : noam_lr(step, mcfg.model_dim, tcfg.warmup_steps);
      adam_step(ps, adam, log.lr);
      log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (opt.log != nullptr)
        (*opt.log) << "step=" << log.step << " epoch=" << log.epoch << " lr="
                   << kv::format_double(log.lr) << " loss=" << kv::format_double(log.total_loss)
                   << " final=" << kv::format_double(log.final_loss) << " inter="
                   << kv::format_double(log.inter_loss) << " wall="
                   << kv::format_double(log.wall_seconds) << "\n";
      result.logs.push_back(log);
      if (opt.on_step && opt.on_step(log)) {
        stop_requested = true;
        break;
      }
    }
    if (stop_requested) break;
    if (!opt.out_dir.empty()) {
      const std::string path = opt.out_dir + "/epoch_" + std::to_string(epoch) + ".ckpt";
      save_checkpoint(path, ps, mcfg);
      result.checkpoint_paths.push_back(path);
    }
    if (opt.max_steps > 0 && step >= opt.max_steps) break;
  }
  result.steps = step;
  return result;
}

/// Median full-train-step throughput in batches/sec on a fixed synthetic
/// batch; the first `warmup` steps are excluded from the measurement.
template <class T>
double bench_throughput(const ModelConfig& cfg, int batch_size, int64_t t_frames, int steps,
                        int warmup = 3, int threads = 1, uint64_t seed = 0) {
  cfg.validate();
  if (batch_size < 1 || t_frames < 1 || steps < 1) throw ConfigError("bench needs positive sizes");
  ParameterStore<T> ps = init_parameters<T>(cfg);
  std::mt19937_64 rng(mix_seed(seed, 0xbe7c));
  std::vector<TrainItem<T>> items;
  for (int i = 0; i < batch_size; ++i) {
    TrainItem<T> item;
    item.recording_id = "bench" + std::to_string(i);
    item.features = Matrix<T>::zeros(cfg.input_dim, t_frames);
    for (T& v : item.features.data) v = static_cast<T>(unit_normal(rng));
    item.labels = Matrix<T>::zeros(cfg.num_speakers, t_frames);
    for (T& v : item.labels.data) v = unit_uniform(rng) < 0.5 ? T(0) : T(1);
    items.push_back(std::move(item));
  }
  std::vector<int> batch(static_cast<size_t>(batch_size));
  std::iota(batch.begin(), batch.end(), 0);
  AdamState<T> adam;
  std::vector<double> rates;
  for (int s = 0; s < warmup + steps; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    compute_step_gradients(ps, cfg, items, batch, 1.0, mix_seed(seed, static_cast<uint64_t>(s)), threads);
    clip_global_norm(ps, 5.0);
    adam_step(ps, adam, 1e-4);
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s >= warmup) rates.push_back(1.0 / dt);
  }
  std::sort(rates.begin(), rates.end());
  const size_t mid = rates.size() / 2;
  return rates.size() % 2 == 1 ? rates[mid] : 0.5 * (rates[mid - 1] + rates[mid]);
}

}  // namespace eend

#endif  // EEND_TRAINER_HPP
