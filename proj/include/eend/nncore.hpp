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

#ifndef EEND_NNCORE_HPP
#define EEND_NNCORE_HPP

#include <cmath>
#include <string>
#include <vector>

#include "eend/autodiff.hpp"
#include "eend/errors.hpp"

namespace eend {

/// y[:,t] = weight * x[:,t] + bias.
template <class T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  return add_col(matmul(weight, x), bias);
}

/// Linear layer whose weight/bias live in the store as `<prefix>.w` / `<prefix>.b`.
template <class T>
Var<T> linear(Graph<T>& g, ParameterStore<T>& ps, const std::string& prefix, Var<T> x) {
  return linear(x, g.param(ps, prefix + ".w"), g.param(ps, prefix + ".b"));
}

/// Scaled dot-product attention over column sequences. Queries, keys and
/// values are D×Tq / D×Tk / D×Tk; four projections named
/// `<prefix>.{q,k,v,out}.{w,b}`. Per-head scale is 1/sqrt(D/H).
template <class T>
Var<T> multi_head_attention(Graph<T>& g, ParameterStore<T>& ps, const std::string& prefix,
                            Var<T> query, Var<T> key, Var<T> value, int heads) {
  const int64_t d = query.rows();
  if (heads < 1 || d % heads != 0)
    throw ConfigError("attention dim " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  if (key.cols() != value.cols() || key.rows() != d || value.rows() != d)
    detail::shape_fail("multi_head_attention", key.value().shape_str(), value.value().shape_str());
  Var<T> q = linear(g, ps, prefix + ".q", query);
  Var<T> k = linear(g, ps, prefix + ".k", key);
  Var<T> v = linear(g, ps, prefix + ".v", value);
  const int64_t dh = d / heads;
  const T sc = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Var<T>> ctx;
  ctx.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    Var<T> qh = slice_rows(q, h * dh, (h + 1) * dh);
    Var<T> kh = slice_rows(k, h * dh, (h + 1) * dh);
    Var<T> vh = slice_rows(v, h * dh, (h + 1) * dh);
    Var<T> scores = scale(matmul(transpose(kh), qh), sc);  // Tk x Tq
    Var<T> weights = softmax_columns(scores);
    ctx.push_back(matmul(vh, weights));  // dh x Tq
  }
  Var<T> cat = heads == 1 ? ctx[0] : concat_rows(ctx);
  return linear(g, ps, prefix + ".out", cat);
}

template <class T>
struct LstmState {
  Var<T> h;
  Var<T> c;
};

/// Single LSTM cell step on one column vector. Gate layout in the 4D
/// pre-activation is [i; f; g; o]; both bias vectors are applied.
/// Parameters: `<prefix>.w_ih` (4D×Din), `<prefix>.w_hh` (4D×D),
/// `<prefix>.b_ih`, `<prefix>.b_hh` (4D×1).
template <class T>
LstmState<T> lstm_step(Graph<T>& g, ParameterStore<T>& ps, const std::string& prefix, Var<T> x,
                       LstmState<T> state) {
  Var<T> pre = add(linear(x, g.param(ps, prefix + ".w_ih"), g.param(ps, prefix + ".b_ih")),
                   linear(state.h, g.param(ps, prefix + ".w_hh"), g.param(ps, prefix + ".b_hh")));
  const int64_t d = state.h.rows();
  if (pre.rows() != 4 * d) detail::shape_fail("lstm_step", pre.value().shape_str(), state.h.value().shape_str());
  Var<T> gi = sigmoid(slice_rows(pre, 0, d));
  Var<T> gf = sigmoid(slice_rows(pre, d, 2 * d));
  Var<T> gg = tanh(slice_rows(pre, 2 * d, 3 * d));
  Var<T> go = sigmoid(slice_rows(pre, 3 * d, 4 * d));
  Var<T> c = add(hadamard(gf, state.c), hadamard(gi, gg));
  Var<T> h = hadamard(go, tanh(c));
  return {h, c};
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central finite differences against gradients ALREADY accumulated in the
/// store (run one backward pass before calling). `loss_value` re-evaluates
/// the scalar loss from current store values. The floor blends in an absolute
/// tolerance so exactly-zero gradients are not scored against FD noise.
template <class T, class LossFn>
GradCheckReport grad_check(ParameterStore<T>& ps, LossFn&& loss_value, T epsilon,
                           T floor = T(1e-6)) {
  GradCheckReport rep;
  for (auto& [name, e] : ps) {
    for (int64_t i = 0; i < e.value.numel(); ++i) {
      const T orig = e.value.data[i];
      e.value.data[i] = orig + epsilon;
      const T fp = loss_value();
      e.value.data[i] = orig - epsilon;
      const T fm = loss_value();
      e.value.data[i] = orig;
      if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
        throw DivergenceError("non-finite loss while probing " + name);
      const double num = static_cast<double>(fp - fm) / (2.0 * static_cast<double>(epsilon));
      const double ana = static_cast<double>(e.grad.data[i]);
      const double rel = std::abs(ana - num) / (std::abs(ana) + std::abs(num) + static_cast<double>(floor));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = name;
        rep.worst_index = i;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

}  // namespace eend

#endif  // EEND_NNCORE_HPP
