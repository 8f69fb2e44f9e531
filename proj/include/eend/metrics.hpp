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

#ifndef EEND_METRICS_HPP
#define EEND_METRICS_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "eend/datagen.hpp"
#include "eend/model.hpp"

namespace eend {

struct DecodeConfig {
  double threshold = 0.5;
  int median_frames = 11;
  double collar = 0.25;  // seconds, scoring only
};

inline std::string decode_config_text(const DecodeConfig& c) {
  std::string out;
  out += "decode.threshold=" + kv::format_double(c.threshold) + "\n";
  out += "decode.median_frames=" + std::to_string(c.median_frames) + "\n";
  out += "decode.collar=" + kv::format_double(c.collar) + "\n";
  return out;
}

/// Applies one "decode.*" key. Unknown keys raise ConfigError.
inline void apply_decode_key(DecodeConfig& c, const std::string& key, const std::string& value) {
  if (key == "decode.threshold") {
    c.threshold = kv::to_double(value, key);
  } else if (key == "decode.median_frames") {
    c.median_frames = static_cast<int>(kv::to_int(value, key));
  } else if (key == "decode.collar") {
    c.collar = kv::to_double(value, key);
  } else {
    throw ConfigError("unknown decode config key: " + key);
  }
}

/// Threshold, median-filter (zero-padded at the edges), then turn maximal
/// runs of active frames into segments at the 100 ms frame period.
inline SegmentAnnotation decode_posteriors(const Matrix<double>& y, double threshold,
                                           int median_frames, const std::string& recording_id) {
  if (threshold <= 0.0 || threshold >= 1.0) throw ConfigError("decode.threshold must be in (0,1)");
  if (median_frames < 1 || median_frames % 2 == 0)
    throw ConfigError("decode.median_frames must be odd and positive");
  SegmentAnnotation ann;
  ann.recording_id = recording_id;
  const int half = median_frames / 2;
  std::vector<int> raw(static_cast<size_t>(y.cols));
  for (int64_t c = 0; c < y.rows; ++c) {
    for (int64_t t = 0; t < y.cols; ++t) raw[static_cast<size_t>(t)] = y(c, t) > threshold ? 1 : 0;
    const std::string spk = "spk" + std::to_string(c);
    int64_t run_start = -1;
    for (int64_t t = 0; t <= y.cols; ++t) {
      int on = 0;
      if (t < y.cols) {
        int ones = 0;
        for (int64_t k = t - half; k <= t + half; ++k)
          if (k >= 0 && k < y.cols) ones += raw[static_cast<size_t>(k)];
        on = ones > half ? 1 : 0;  // majority of a zero-padded odd window
      }
      if (on && run_start < 0) run_start = t;
      if (!on && run_start >= 0) {
        ann.entries.push_back({spk, run_start * kFrameMs, (t - run_start) * kFrameMs});
        run_start = -1;
      }
    }
  }
  return ann;
}

struct DerReport {
  double der = 0;
  double miss = 0;
  double fa = 0;
  double confusion = 0;
  double sad_miss = 0;
  double sad_fa = 0;
  double scored_speech_seconds = 0;  // denominator: total reference speaker time
};

namespace detail {

using Intervals = std::vector<std::pair<int64_t, int64_t>>;

inline int64_t intersection_ms(const Intervals& a, const Intervals& b) {
  int64_t total = 0;
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const int64_t lo = std::max(a[i].first, b[j].first);
    const int64_t hi = std::min(a[i].second, b[j].second);
    if (hi > lo) total += hi - lo;
    if (a[i].second < b[j].second)
      ++i;
    else
      ++j;
  }
  return total;
}

/// Exhaustive one-to-one speaker assignment maximizing whole-recording
/// overlap; ties resolve to the lexicographically smallest mapping vector
/// (ref index -> hyp index or -1).
inline std::vector<int> best_mapping(const std::vector<Intervals>& ref,
                                     const std::vector<Intervals>& hyp) {
  const int nr = static_cast<int>(ref.size());
  const int nh = static_cast<int>(hyp.size());
  if (nr > 8 || nh > 8) throw ConfigError("speaker mapping limited to 8 speakers per side");
  Matrix<int64_t> ov = Matrix<int64_t>::zeros(std::max(nr, 1), std::max(nh, 1));
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j < nh; ++j) ov(i, j) = intersection_ms(ref[static_cast<size_t>(i)], hyp[static_cast<size_t>(j)]);

  std::vector<int> best(static_cast<size_t>(nr), -1);
  int64_t best_score = -1;
  std::vector<int> assign(static_cast<size_t>(nr), -1);
  std::vector<char> used(static_cast<size_t>(nh), 0);
  // depth-first over ref speakers, trying "unmapped" last so equal-score
  // mappings surface in lexicographic order of the mapping vector with -1
  // greater than any index
  auto consider = [&]() {
    int64_t s = 0;
    for (int i = 0; i < nr; ++i)
      if (assign[static_cast<size_t>(i)] >= 0) s += ov(i, assign[static_cast<size_t>(i)]);
    if (s > best_score) {
      best_score = s;
      best = assign;
    }
  };
  std::function<void(int)> rec = [&](int i) {
    if (i == nr) {
      consider();
      return;
    }
    for (int j = 0; j < nh; ++j) {
      if (used[static_cast<size_t>(j)]) continue;
      used[static_cast<size_t>(j)] = 1;
      assign[static_cast<size_t>(i)] = j;
      rec(i + 1);
      used[static_cast<size_t>(j)] = 0;
    }
    assign[static_cast<size_t>(i)] = -1;
    rec(i + 1);
    assign[static_cast<size_t>(i)] = -1;
  };
  rec(0);
  return best;
}

inline Intervals collar_zones(const std::vector<Intervals>& ref, int64_t collar_ms) {
  Intervals zones;
  for (const auto& iv : ref)
    for (const auto& [a, b] : iv) {
      zones.emplace_back(std::max<int64_t>(0, a - collar_ms), a + collar_ms);
      zones.emplace_back(std::max<int64_t>(0, b - collar_ms), b + collar_ms);
    }
  std::sort(zones.begin(), zones.end());
  Intervals merged;
  for (const auto& [a, b] : zones) {
    if (!merged.empty() && a <= merged.back().second)
      merged.back().second = std::max(merged.back().second, b);
    else
      merged.emplace_back(a, b);
  }
  return merged;
}
}  // namespace detail

/// md-eval style scoring. The optimal speaker mapping is computed over the
/// whole recording; errors accumulate only outside +-collar of every
/// reference segment boundary; every rate is divided by the total reference
/// speaker time of the full recording, so growing the collar can only shrink
/// the numerators.
inline DerReport der(const SegmentAnnotation& ref, const SegmentAnnotation& hyp, double collar_s) {
  if (ref.recording_id != hyp.recording_id)
    throw std::invalid_argument("scoring mismatched recordings: " + ref.recording_id + " vs " +
                                hyp.recording_id);
  if (collar_s < 0) throw ConfigError("collar must be non-negative");
  const int64_t collar_ms = seconds_to_ms(collar_s);

  std::vector<detail::Intervals> riv, hiv;
  for (auto& [spk, iv] : merged_by_speaker(ref)) riv.push_back(iv);
  for (auto& [spk, iv] : merged_by_speaker(hyp)) hiv.push_back(iv);

  int64_t denom_ms = 0;
  for (const auto& iv : riv)
    for (const auto& [a, b] : iv) denom_ms += b - a;

  const std::vector<int> mapping = detail::best_mapping(riv, hiv);
  const detail::Intervals zones = detail::collar_zones(riv, collar_ms);

  std::vector<int64_t> points;
  auto add_points = [&](const detail::Intervals& iv) {
    for (const auto& [a, b] : iv) {
      points.push_back(a);
      points.push_back(b);
    }
  };
  for (const auto& iv : riv) add_points(iv);
  for (const auto& iv : hiv) add_points(iv);
  add_points(zones);
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  auto active = [](const detail::Intervals& iv, int64_t t) {
    for (const auto& [a, b] : iv)
      if (a <= t && t < b) return true;
    return false;
  };

  int64_t miss_ms = 0, fa_ms = 0, conf_ms = 0, sad_miss_ms = 0, sad_fa_ms = 0;
  for (size_t k = 0; k + 1 < points.size(); ++k) {
    const int64_t lo = points[k], hi = points[k + 1];
    const int64_t len = hi - lo;
    if (len <= 0 || active(zones, lo)) continue;
    int nref = 0, nhyp = 0, ncorrect = 0;
    std::vector<char> hyp_on(hiv.size(), 0);
    for (size_t j = 0; j < hiv.size(); ++j)
      if (active(hiv[j], lo)) {
        hyp_on[j] = 1;
        ++nhyp;
      }
    for (size_t i = 0; i < riv.size(); ++i) {
      if (!active(riv[i], lo)) continue;
      ++nref;
      const int j = mapping[i];
      if (j >= 0 && hyp_on[static_cast<size_t>(j)]) ++ncorrect;
    }
    miss_ms += std::max(0, nref - nhyp) * len;
    fa_ms += std::max(0, nhyp - nref) * len;
    conf_ms += (std::min(nref, nhyp) - ncorrect) * len;
    if (nref > 0 && nhyp == 0) sad_miss_ms += len;
    if (nhyp > 0 && nref == 0) sad_fa_ms += len;
  }

  DerReport r;
  r.scored_speech_seconds = ms_to_seconds(denom_ms);
  if (denom_ms > 0) {
    const double d = static_cast<double>(denom_ms);
    r.miss = static_cast<double>(miss_ms) / d;
    r.fa = static_cast<double>(fa_ms) / d;
    r.confusion = static_cast<double>(conf_ms) / d;
    r.sad_miss = static_cast<double>(sad_miss_ms) / d;
    r.sad_fa = static_cast<double>(sad_fa_ms) / d;
    r.der = r.miss + r.fa + r.confusion;
  }
  return r;
}

/// Independent brute-force scorer sampling activity at the center of every
/// 10 ms cell. Exact on inputs whose boundaries sit on the 10 ms grid; used
/// as a cross-check for der().
inline DerReport der_frame_oracle(const SegmentAnnotation& ref, const SegmentAnnotation& hyp,
                                  double collar_s, int64_t cell_ms = 10) {
  if (ref.recording_id != hyp.recording_id)
    throw std::invalid_argument("scoring mismatched recordings");
  const int64_t collar_ms = seconds_to_ms(collar_s);
  const int64_t horizon =
      std::max(ref.timeline_end_ms(), hyp.timeline_end_ms()) + collar_ms + cell_ms;
  const int64_t n_cells = horizon / cell_ms + 1;

  const auto rmap = merged_by_speaker(ref);
  const auto hmap = merged_by_speaker(hyp);
  std::vector<detail::Intervals> riv, hiv;
  for (auto& [spk, iv] : rmap) riv.push_back(iv);
  for (auto& [spk, iv] : hmap) hiv.push_back(iv);

  auto at = [](const detail::Intervals& iv, int64_t t) {
    for (const auto& [a, b] : iv)
      if (a <= t && t < b) return true;
    return false;
  };

  // whole-recording overlap counts in cells, then the same exhaustive
  // assignment and tie-break as the sweep scorer
  Matrix<int64_t> ov = Matrix<int64_t>::zeros(std::max<int64_t>(riv.size(), 1),
                                              std::max<int64_t>(hiv.size(), 1));
  int64_t denom_cells = 0;
  for (int64_t k = 0; k < n_cells; ++k) {
    const int64_t t = k * cell_ms + cell_ms / 2;
    for (size_t i = 0; i < riv.size(); ++i) {
      if (!at(riv[i], t)) continue;
      ++denom_cells;
      for (size_t j = 0; j < hiv.size(); ++j)
        if (at(hiv[j], t)) ++ov(static_cast<int64_t>(i), static_cast<int64_t>(j));
    }
  }
  // same assignment search as the sweep scorer, run on the cell counts
  const int nr = static_cast<int>(riv.size());
  const int nh = static_cast<int>(hiv.size());
  std::vector<int> best(static_cast<size_t>(nr), -1), assign(static_cast<size_t>(nr), -1);
  std::vector<char> used(static_cast<size_t>(nh), 0);
  int64_t best_score = -1;
  std::function<void(int)> rec = [&](int i) {
    if (i == nr) {
      int64_t s = 0;
      for (int q = 0; q < nr; ++q)
        if (assign[static_cast<size_t>(q)] >= 0) s += ov(q, assign[static_cast<size_t>(q)]);
      if (s > best_score) {
        best_score = s;
        best = assign;
      }
      return;
    }
    for (int j = 0; j < nh; ++j) {
      if (used[static_cast<size_t>(j)]) continue;
      used[static_cast<size_t>(j)] = 1;
      assign[static_cast<size_t>(i)] = j;
      rec(i + 1);
      used[static_cast<size_t>(j)] = 0;
    }
    assign[static_cast<size_t>(i)] = -1;
    rec(i + 1);
  };
  rec(0);

  const detail::Intervals zones = detail::collar_zones(riv, collar_ms);
  int64_t miss = 0, fa = 0, conf = 0, sad_miss = 0, sad_fa = 0;
  for (int64_t k = 0; k < n_cells; ++k) {
    const int64_t t = k * cell_ms + cell_ms / 2;
    if (at(zones, t)) continue;
    int nref = 0, nhyp = 0, ncorrect = 0;
    std::vector<char> hyp_on(hiv.size(), 0);
    for (size_t j = 0; j < hiv.size(); ++j)
      if (at(hiv[j], t)) {
        hyp_on[j] = 1;
        ++nhyp;
      }
    for (size_t i = 0; i < riv.size(); ++i) {
      if (!at(riv[i], t)) continue;
      ++nref;
      const int j = best[i];
      if (j >= 0 && hyp_on[static_cast<size_t>(j)]) ++ncorrect;
    }
    miss += std::max(0, nref - nhyp);
    fa += std::max(0, nhyp - nref);
    conf += std::min(nref, nhyp) - ncorrect;
    if (nref > 0 && nhyp == 0) ++sad_miss;
    if (nhyp > 0 && nref == 0) ++sad_fa;
  }

  DerReport r;
  r.scored_speech_seconds = ms_to_seconds(denom_cells * cell_ms);
  if (denom_cells > 0) {
    const double d = static_cast<double>(denom_cells);
    r.miss = static_cast<double>(miss) / d;
    r.fa = static_cast<double>(fa) / d;
    r.confusion = static_cast<double>(conf) / d;
    r.sad_miss = static_cast<double>(sad_miss) / d;
    r.sad_fa = static_cast<double>(sad_fa) / d;
    r.der = r.miss + r.fa + r.confusion;
  }
  return r;
}

/// Dataset-level rates: every component re-weighted by each recording's
/// reference speaker time, not a plain mean of per-file rates.
inline DerReport combine_reports(const std::vector<DerReport>& reports) {
  DerReport total;
  double denom = 0;
  for (const auto& r : reports) denom += r.scored_speech_seconds;
  total.scored_speech_seconds = denom;
  if (denom <= 0) return total;
  for (const auto& r : reports) {
    const double w = r.scored_speech_seconds / denom;
    total.miss += w * r.miss;
    total.fa += w * r.fa;
    total.confusion += w * r.confusion;
    total.sad_miss += w * r.sad_miss;
    total.sad_fa += w * r.sad_fa;
  }
  total.der = total.miss + total.fa + total.confusion;
  return total;
}

/// Decodes and scores every tap of every recording; entry i covers tap i and
/// the last entry is the final output, each combined across recordings.
template <class T>
std::vector<DerReport> score_per_layer(
    ParameterStore<T>& ps, const ModelConfig& cfg,
    const std::vector<std::pair<Matrix<T>, SegmentAnnotation>>& dataset, const DecodeConfig& dec,
    double collar_s) {
  if (!cfg.inter_loss) throw ConfigError("per-layer scoring requires model.inter_loss");
  const size_t n_taps = cfg.taps().size();
  std::vector<std::vector<DerReport>> per_tap(n_taps + 1);
  for (const auto& [features, ref] : dataset) {
    Graph<T> g;
    ForwardOutput<T> out = forward(g, ps, cfg, features, false);
    for (size_t i = 0; i <= n_taps; ++i) {
      const Matrix<T>& y = i < n_taps ? out.intermediate_posteriors[i].value()
                                      : out.final_posteriors.value();
      SegmentAnnotation hyp = decode_posteriors(y.template cast<double>(), dec.threshold,
                                                dec.median_frames, ref.recording_id);
      per_tap[i].push_back(der(ref, hyp, collar_s));
    }
  }
  std::vector<DerReport> combined;
  combined.reserve(per_tap.size());
  for (const auto& reports : per_tap) combined.push_back(combine_reports(reports));
  return combined;
}

}  // namespace eend

#endif  // EEND_METRICS_HPP
