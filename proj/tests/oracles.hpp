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

// Deliberately naive reference implementations, written with explicit loops
// and no shared code with the library, used as independent oracles.

#ifndef EEND_TESTS_ORACLES_HPP
#define EEND_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "eend/datagen.hpp"
#include "eend/matrix.hpp"
#include "eend/params.hpp"

namespace oracle {

using eend::Matrix;

// Scaled dot-product attention for one head, written frame by frame.
// q: d x tq, k: d x tk, v: d x tk.
inline Matrix<double> single_head_attention(const Matrix<double>& q, const Matrix<double>& k,
                                            const Matrix<double>& v, double scl) {
  Matrix<double> out = Matrix<double>::zeros(v.rows, q.cols);
  for (int64_t tq = 0; tq < q.cols; ++tq) {
    std::vector<double> logits(static_cast<size_t>(k.cols), 0.0);
    for (int64_t tk = 0; tk < k.cols; ++tk) {
      double dot = 0;
      for (int64_t d = 0; d < q.rows; ++d) dot += q(d, tq) * k(d, tk);
      logits[static_cast<size_t>(tk)] = dot * scl;
    }
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double z = 0;
    for (double& l : logits) {
      l = std::exp(l - mx);
      z += l;
    }
    for (int64_t tk = 0; tk < k.cols; ++tk)
      for (int64_t d = 0; d < v.rows; ++d) out(d, tq) += (logits[static_cast<size_t>(tk)] / z) * v(d, tk);
  }
  return out;
}

// Full multi-head attention against raw projection parameters, explicit
// slicing per head.
inline Matrix<double> multi_head_attention(const Matrix<double>& query, const Matrix<double>& key,
                                           const Matrix<double>& value, int heads,
                                           const Matrix<double>& wq, const Matrix<double>& bq,
                                           const Matrix<double>& wk, const Matrix<double>& bk,
                                           const Matrix<double>& wv, const Matrix<double>& bv,
                                           const Matrix<double>& wo, const Matrix<double>& bo) {
  const int64_t d = query.rows;
  const int64_t dh = d / heads;
  auto project = [](const Matrix<double>& w, const Matrix<double>& b, const Matrix<double>& x) {
    Matrix<double> y = Matrix<double>::zeros(w.rows, x.cols);
    for (int64_t r = 0; r < w.rows; ++r)
      for (int64_t t = 0; t < x.cols; ++t) {
        double acc = b(r, 0);
        for (int64_t c = 0; c < w.cols; ++c) acc += w(r, c) * x(c, t);
        y(r, t) = acc;
      }
    return y;
  };
  const Matrix<double> q = project(wq, bq, query);
  const Matrix<double> k = project(wk, bk, key);
  const Matrix<double> v = project(wv, bv, value);
  Matrix<double> ctx = Matrix<double>::zeros(d, query.cols);
  for (int h = 0; h < heads; ++h) {
    Matrix<double> qh = Matrix<double>::zeros(dh, q.cols);
    Matrix<double> kh = Matrix<double>::zeros(dh, k.cols);
    Matrix<double> vh = Matrix<double>::zeros(dh, v.cols);
    for (int64_t r = 0; r < dh; ++r) {
      for (int64_t t = 0; t < q.cols; ++t) qh(r, t) = q(h * dh + r, t);
      for (int64_t t = 0; t < k.cols; ++t) {
        kh(r, t) = k(h * dh + r, t);
        vh(r, t) = v(h * dh + r, t);
      }
    }
    const Matrix<double> oh = single_head_attention(qh, kh, vh, 1.0 / std::sqrt(static_cast<double>(dh)));
    for (int64_t r = 0; r < dh; ++r)
      for (int64_t t = 0; t < oh.cols; ++t) ctx(h * dh + r, t) = oh(r, t);
  }
  return project(wo, bo, ctx);
}

struct LstmOut {
  std::vector<double> h, c;
};

// One LSTM step, gate by gate, scalar loops. Gate order in the 4D blocks is
// [input; forget; cell; output].
inline LstmOut lstm_step(const std::vector<double>& x, const std::vector<double>& h0,
                         const std::vector<double>& c0, const Matrix<double>& w_ih,
                         const Matrix<double>& w_hh, const Matrix<double>& b_ih,
                         const Matrix<double>& b_hh) {
  const int64_t d = static_cast<int64_t>(h0.size());
  auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
  LstmOut out;
  out.h.resize(static_cast<size_t>(d));
  out.c.resize(static_cast<size_t>(d));
  for (int64_t j = 0; j < d; ++j) {
    double pre[4];
    for (int g = 0; g < 4; ++g) {
      const int64_t row = g * d + j;
      double acc = b_ih(row, 0) + b_hh(row, 0);
      for (int64_t i = 0; i < static_cast<int64_t>(x.size()); ++i) acc += w_ih(row, i) * x[static_cast<size_t>(i)];
      for (int64_t i = 0; i < d; ++i) acc += w_hh(row, i) * h0[static_cast<size_t>(i)];
      pre[g] = acc;
    }
    const double gi = sig(pre[0]);
    const double gf = sig(pre[1]);
    const double gg = std::tanh(pre[2]);
    const double go = sig(pre[3]);
    const double c1 = gf * c0[static_cast<size_t>(j)] + gi * gg;
    out.c[static_cast<size_t>(j)] = c1;
    out.h[static_cast<size_t>(j)] = go * std::tanh(c1);
  }
  return out;
}

// Mean BCE over all cells under an explicit row permutation, then brute-force
// minimum over every permutation.
inline double pit_loss_bruteforce(const Matrix<double>& y_true, const Matrix<double>& y_pred,
                                  std::vector<int>* best_perm = nullptr) {
  const int64_t c = y_true.rows;
  const int64_t t = y_true.cols;
  std::vector<int> perm(static_cast<size_t>(c));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0;
  bool first = true;
  do {
    double acc = 0;
    for (int64_t r = 0; r < c; ++r)
      for (int64_t j = 0; j < t; ++j) {
        double p = y_pred(r, j);
        p = std::min(1.0 - 1e-7, std::max(1e-7, p));
        const double yt = y_true(perm[static_cast<size_t>(r)], j);
        acc += -yt * std::log(p) - (1.0 - yt) * std::log(1.0 - p);
      }
    acc /= static_cast<double>(c * t);
    if (first || acc < best) {
      best = acc;
      first = false;
      if (best_perm != nullptr) *best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Frame-level overlap statistics sampled at 1 ms resolution.
inline eend::OverlapStats overlap_stats_bruteforce(const eend::SegmentAnnotation& ann) {
  int64_t end_ms = 0;
  for (const auto& e : ann.entries) end_ms = std::max(end_ms, e.onset_ms + e.duration_ms);
  eend::OverlapStats st;
  std::vector<std::string> speakers = ann.speakers();
  for (int64_t t = 0; t < end_ms; ++t) {
    int active = 0;
    for (const auto& spk : speakers) {
      bool on = false;
      for (const auto& e : ann.entries)
        if (e.speaker == spk && e.onset_ms <= t && t < e.onset_ms + e.duration_ms) on = true;
      if (on) ++active;
    }
    if (active >= 1) ++st.speech_union_ms;
    if (active >= 2) ++st.overlap_ms;
    st.total_speaker_ms += active;
  }
  return st;
}

}  // namespace oracle

#endif  // EEND_TESTS_ORACLES_HPP
