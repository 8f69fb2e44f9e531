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

#ifndef EEND_LOSS_HPP
#define EEND_LOSS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

#include "eend/autodiff.hpp"

namespace eend {

inline constexpr double kBceClampEps = 1e-7;

/// Binary cross-entropy on one cell; prediction clamped to [eps, 1-eps].
template <class T>
T bce(T y_true, T y_pred) {
  const T eps = static_cast<T>(kBceClampEps);
  const T p = std::min(std::max(y_pred, eps), T(1) - eps);
  return -y_true * std::log(p) - (T(1) - y_true) * std::log(T(1) - p);
}

template <class T>
struct PitResult {
  T loss = T(0);
  std::vector<int> permutation;  // prediction row c is scored against truth row permutation[c]
};

namespace detail {
template <class T>
T mean_bce_under(const Matrix<T>& y_true, const Matrix<T>& y_pred, const std::vector<int>& perm) {
  T acc = T(0);
  for (int64_t c = 0; c < y_pred.rows; ++c)
    for (int64_t t = 0; t < y_pred.cols; ++t) acc += bce(y_true(perm[static_cast<size_t>(c)], t), y_pred(c, t));
  return acc / static_cast<T>(y_pred.numel());
}

template <class T>
std::vector<int> best_permutation(const Matrix<T>& y_true, const Matrix<T>& y_pred) {
  if (!y_true.same_shape(y_pred)) shape_fail("pit_loss", y_true.shape_str(), y_pred.shape_str());
  const int64_t c = y_true.rows;
  if (c > 8) throw ConfigError("pit_loss limited to 8 speakers, got " + std::to_string(c));
  std::vector<int> perm(static_cast<size_t>(c));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  T best_loss = mean_bce_under(y_true, y_pred, perm);
  while (std::next_permutation(perm.begin(), perm.end())) {
    const T l = mean_bce_under(y_true, y_pred, perm);
    if (l < best_loss) {
      best_loss = l;
      best = perm;
    }
  }
  return best;
}
}  // namespace detail

/// Minimum over speaker permutations of mean BCE; ties resolve to the
/// lexicographically smallest permutation.
template <class T>
PitResult<T> pit_loss(const Matrix<T>& y_true, const Matrix<T>& y_pred) {
  PitResult<T> r;
  r.permutation = detail::best_permutation(y_true, y_pred);
  r.loss = detail::mean_bce_under(y_true, y_pred, r.permutation);
  return r;
}

/// Tape version: the winning permutation is chosen outside the tape, then the
/// loss node is built under that fixed row assignment, which makes the
/// gradient the deterministic subgradient of the minimum.
template <class T>
std::pair<Var<T>, std::vector<int>> pit_loss(const Matrix<T>& y_true, Var<T> y_pred) {
  const std::vector<int> perm = detail::best_permutation(y_true, y_pred.value());
  Matrix<T> permuted(y_true.rows, y_true.cols);
  for (int64_t c = 0; c < y_true.rows; ++c)
    for (int64_t t = 0; t < y_true.cols; ++t) permuted(c, t) = y_true(perm[static_cast<size_t>(c)], t);
  return {bce_mean(permuted, y_pred, static_cast<T>(kBceClampEps)), perm};
}

/// Final PIT loss plus the mean of per-tap PIT losses, each tap minimizing
/// over its own permutation. `mix` scales the intermediate term (default 1).
template <class T>
Var<T> intermediate_loss(const Matrix<T>& y_true, Var<T> final_pred,
                         const std::vector<Var<T>>& intermediates, T mix = T(1)) {
  if (intermediates.empty())
    throw std::invalid_argument("intermediate_loss needs at least one intermediate tap");
  Var<T> total = pit_loss(y_true, final_pred).first;
  Var<T> inter_sum = pit_loss(y_true, intermediates[0]).first;
  for (size_t i = 1; i < intermediates.size(); ++i)
    inter_sum = add(inter_sum, pit_loss(y_true, intermediates[i]).first);
  return add(total, scale(inter_sum, mix / static_cast<T>(intermediates.size())));
}

}  // namespace eend

#endif  // EEND_LOSS_HPP
