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

#ifndef EEND_DATAGEN_HPP
#define EEND_DATAGEN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eend/errors.hpp"
#include "eend/kv.hpp"
#include "eend/matrix.hpp"
#include "eend/params.hpp"

namespace eend {

// Segment times are integer milliseconds throughout; RTTM's 3-decimal fields
// and the scorer's arithmetic are both exact at this resolution.
inline constexpr int64_t kFrameMs = 100;
inline constexpr double kPi = 3.14159265358979323846;

inline int64_t seconds_to_ms(double s) { return std::llround(s * 1000.0); }
inline double ms_to_seconds(int64_t ms) { return static_cast<double>(ms) / 1000.0; }

struct Segment {
  std::string speaker;
  int64_t onset_ms = 0;
  int64_t duration_ms = 0;

  int64_t end_ms() const { return onset_ms + duration_ms; }
};

struct SegmentAnnotation {
  std::string recording_id;
  std::vector<Segment> entries;

  /// Unique speaker ids in sorted order.
  std::vector<std::string> speakers() const {
    std::set<std::string> s;
    for (const auto& e : entries) s.insert(e.speaker);
    return {s.begin(), s.end()};
  }

  int64_t timeline_end_ms() const {
    int64_t end = 0;
    for (const auto& e : entries) end = std::max(end, e.end_ms());
    return end;
  }
};

/// Per-speaker intervals, merged and sorted. The scorer and the overlap
/// statistics both start from this normal form.
inline std::map<std::string, std::vector<std::pair<int64_t, int64_t>>> merged_by_speaker(
    const SegmentAnnotation& ann) {
  std::map<std::string, std::vector<std::pair<int64_t, int64_t>>> out;
  for (const auto& e : ann.entries) {
    if (e.duration_ms <= 0) throw std::invalid_argument("segment with non-positive duration");
    out[e.speaker].emplace_back(e.onset_ms, e.end_ms());
  }
  for (auto& [spk, iv] : out) {
    std::sort(iv.begin(), iv.end());
    std::vector<std::pair<int64_t, int64_t>> merged;
    for (const auto& [a, b] : iv) {
      if (!merged.empty() && a <= merged.back().second)
        merged.back().second = std::max(merged.back().second, b);
      else
        merged.emplace_back(a, b);
    }
    iv = std::move(merged);
  }
  return out;
}

struct OverlapStats {
  int64_t speech_union_ms = 0;
  int64_t overlap_ms = 0;
  int64_t total_speaker_ms = 0;

  double overlap_ratio() const {
    return speech_union_ms == 0 ? 0.0
                                : static_cast<double>(overlap_ms) / static_cast<double>(speech_union_ms);
  }
};

/// Event-sweep overlap statistics: time where >= 2 speakers are active over
/// time where >= 1 is active.
inline OverlapStats overlap_stats(const SegmentAnnotation& ann) {
  std::vector<std::pair<int64_t, int>> events;
  for (const auto& [spk, iv] : merged_by_speaker(ann)) {
    for (const auto& [a, b] : iv) {
      events.emplace_back(a, +1);
      events.emplace_back(b, -1);
    }
  }
  std::sort(events.begin(), events.end());
  OverlapStats st;
  int active = 0;
  int64_t prev = 0;
  for (const auto& [t, d] : events) {
    const int64_t len = t - prev;
    if (len > 0 && active >= 1) {
      st.speech_union_ms += len;
      st.total_speaker_ms += static_cast<int64_t>(active) * len;
      if (active >= 2) st.overlap_ms += len;
    }
    active += d;
    prev = t;
  }
  return st;
}

struct FeatureSequence {
  Matrix<float> data;         // input_dim x T
  double frame_period = 0.1;  // seconds
  std::string recording_id;
};

struct SimConfig {
  int num_speakers = 2;
  double target_duration = 120.0;  // seconds
  double mean_turn = 2.5;          // seconds
  double mean_pause = 0.8;         // seconds
  double overlap_ratio_target = 0.15;
  double speaker_profile_separation = 2.0;
  double noise_std = 0.3;
  uint64_t seed = 0;
  int base_dim = 23;
  int stack = 15;

  int input_dim() const { return base_dim * stack; }

  void validate() const {
    if (num_speakers != 2) throw ConfigError("sim.num_speakers is fixed at 2");
    if (target_duration <= 0) throw ConfigError("sim.target_duration must be positive");
    if (mean_turn <= 0 || mean_pause <= 0) throw ConfigError("sim.mean_turn/mean_pause must be positive");
    if (overlap_ratio_target < 0 || overlap_ratio_target > 0.5)
      throw ConfigError("sim.overlap_ratio_target must be in [0,0.5]");
    if (speaker_profile_separation <= 0) throw ConfigError("sim.separation must be positive");
    if (noise_std <= 0) throw ConfigError("sim.noise_std must be positive");
    if (base_dim < 1 || stack < 1 || stack % 2 == 0)
      throw ConfigError("sim.base_dim must be >= 1 and sim.stack odd");
  }
};

inline std::string sim_config_text(const SimConfig& c) {
  std::string out;
  out += "sim.speakers=" + std::to_string(c.num_speakers) + "\n";
  out += "sim.duration=" + kv::format_double(c.target_duration) + "\n";
  out += "sim.mean_turn=" + kv::format_double(c.mean_turn) + "\n";
  out += "sim.mean_pause=" + kv::format_double(c.mean_pause) + "\n";
  out += "sim.overlap=" + kv::format_double(c.overlap_ratio_target) + "\n";
  out += "sim.separation=" + kv::format_double(c.speaker_profile_separation) + "\n";
  out += "sim.noise_std=" + kv::format_double(c.noise_std) + "\n";
  out += "sim.seed=" + std::to_string(c.seed) + "\n";
  out += "sim.base_dim=" + std::to_string(c.base_dim) + "\n";
  out += "sim.stack=" + std::to_string(c.stack) + "\n";
  return out;
}

/// Applies one "sim.*" key. Unknown keys raise ConfigError.
inline void apply_sim_key(SimConfig& c, const std::string& key, const std::string& value) {
  if (key == "sim.speakers") {
    c.num_speakers = static_cast<int>(kv::to_int(value, key));
  } else if (key == "sim.duration") {
    c.target_duration = kv::to_double(value, key);
  } else if (key == "sim.mean_turn") {
    c.mean_turn = kv::to_double(value, key);
  } else if (key == "sim.mean_pause") {
    c.mean_pause = kv::to_double(value, key);
  } else if (key == "sim.overlap") {
    c.overlap_ratio_target = kv::to_double(value, key);
  } else if (key == "sim.separation") {
    c.speaker_profile_separation = kv::to_double(value, key);
  } else if (key == "sim.noise_std") {
    c.noise_std = kv::to_double(value, key);
  } else if (key == "sim.seed") {
    c.seed = kv::to_uint(value, key);
  } else if (key == "sim.base_dim") {
    c.base_dim = static_cast<int>(kv::to_int(value, key));
  } else if (key == "sim.stack") {
    c.stack = static_cast<int>(kv::to_int(value, key));
  } else {
    throw ConfigError("unknown sim config key: " + key);
  }
}

namespace detail {
inline int64_t exp_ms(double mean_s, std::mt19937_64& rng, double min_s = 0.1) {
  const double d = -mean_s * std::log1p(-unit_uniform(rng));
  return seconds_to_ms(std::max(d, min_s));
}
}  // namespace detail

/// Alternating two-speaker turn sampler. Turn and pause lengths are
/// exponential; a junction becomes an overlap (negative pause) with
/// probability p. An overlap draw Exp(mu) is capped at half of both adjacent
/// turns, which keeps each speaker's own segments disjoint; the cap equals
/// 0.5*min of two Exp(mean_turn) turns, itself Exp(mean_turn/4), so the
/// realized overlap per overlapped junction has mean e = 1/(1/mu +
/// 4/mean_turn). Solving p*e = f*mean_turn/(1+f) (with mu widened once p
/// saturates at 1) makes the expected overlapped fraction of the speech union
/// equal the target f; targets at or above 1/3 are structurally unreachable
/// under alternation and error out. Features live directly in the stacked
/// log-Mel space: each speaker is a fixed profile vector (orthogonal pair,
/// separated by exactly `speaker_profile_separation`), frames sum the active
/// profiles plus isotropic noise, and silence is pure noise.
inline std::pair<SegmentAnnotation, FeatureSequence> simulate_conversation(
    const SimConfig& cfg, const std::string& recording_id) {
  cfg.validate();
  const double f = cfg.overlap_ratio_target;
  double p_overlap = 0.0;
  double ov_mean = cfg.mean_turn;
  if (f > 0.0) {
    const double required = f * cfg.mean_turn / (1.0 + f);
    const double e_default = 1.0 / (1.0 / ov_mean + 4.0 / cfg.mean_turn);
    if (required <= e_default) {
      p_overlap = required / e_default;
    } else {
      p_overlap = 1.0;
      if (f >= 1.0 / 3.0)
        throw ConfigError("sim.overlap_ratio_target " + std::to_string(f) +
                          " unreachable with alternating turns (limit 1/3)");
      ov_mean = f * cfg.mean_turn / (1.0 - 3.0 * f);
    }
  }
  std::mt19937_64 rng(cfg.seed);

  const int64_t target_ms = seconds_to_ms(cfg.target_duration);
  SegmentAnnotation ann;
  ann.recording_id = recording_id;
  int spk = 0;
  int64_t prev_dur = detail::exp_ms(cfg.mean_turn, rng);
  ann.entries.push_back({"spk0", 0, prev_dur});
  int64_t end = prev_dur;
  while (end < target_ms) {
    spk = 1 - spk;
    const int64_t dur = detail::exp_ms(cfg.mean_turn, rng);
    int64_t onset;
    if (unit_uniform(rng) < p_overlap) {
      const int64_t cap = std::min(prev_dur, dur) / 2;
      const int64_t ov = std::min(detail::exp_ms(ov_mean, rng, 0.0), cap);
      onset = end - ov;
    } else {
      onset = end + detail::exp_ms(cfg.mean_pause, rng);
    }
    ann.entries.push_back({spk == 0 ? "spk0" : "spk1", onset, dur});
    end = onset + dur;
    prev_dur = dur;
  }
  std::vector<Segment> trimmed;
  for (auto& e : ann.entries) {
    if (e.onset_ms >= target_ms) continue;
    e.duration_ms = std::min(e.duration_ms, target_ms - e.onset_ms);
    trimmed.push_back(e);
  }
  ann.entries = std::move(trimmed);

  const int64_t t_frames = (target_ms + kFrameMs - 1) / kFrameMs;
  const int dim = cfg.input_dim();
  Matrix<double> mu(dim, 2);
  {
    std::vector<double> u1(static_cast<size_t>(dim)), u2(static_cast<size_t>(dim));
    for (auto& v : u1) v = unit_normal(rng);
    for (auto& v : u2) v = unit_normal(rng);
    double n1 = 0;
    for (double v : u1) n1 += v * v;
    n1 = std::sqrt(n1);
    double dot = 0;
    for (int i = 0; i < dim; ++i) dot += u2[static_cast<size_t>(i)] * u1[static_cast<size_t>(i)] / (n1 * n1);
    double n2 = 0;
    for (int i = 0; i < dim; ++i) {
      u2[static_cast<size_t>(i)] -= dot * u1[static_cast<size_t>(i)];
      n2 += u2[static_cast<size_t>(i)] * u2[static_cast<size_t>(i)];
    }
    n2 = std::sqrt(n2);
    const double r = cfg.speaker_profile_separation / std::sqrt(2.0);
    for (int i = 0; i < dim; ++i) {
      mu(i, 0) = r * u1[static_cast<size_t>(i)] / n1;
      mu(i, 1) = r * u2[static_cast<size_t>(i)] / n2;
    }
  }

  FeatureSequence feats;
  feats.recording_id = recording_id;
  feats.data = Matrix<float>(dim, t_frames);
  const auto merged = merged_by_speaker(ann);
  for (int64_t t = 0; t < t_frames; ++t) {
    const int64_t lo = t * kFrameMs;
    const int64_t hi = lo + kFrameMs;
    bool active[2] = {false, false};
    for (int s = 0; s < 2; ++s) {
      const auto it = merged.find(s == 0 ? "spk0" : "spk1");
      if (it == merged.end()) continue;
      for (const auto& [a, b] : it->second)
        if (a < hi && b > lo) {
          active[s] = true;
          break;
        }
    }
    for (int i = 0; i < dim; ++i) {
      double v = cfg.noise_std * unit_normal(rng);
      if (active[0]) v += mu(i, 0);
      if (active[1]) v += mu(i, 1);
      feats.data(i, t) = static_cast<float>(v);
    }
  }
  return {std::move(ann), std::move(feats)};
}

/// C×T activity matrix: cell (c,t)=1 iff speaker c intersects frame t's
/// interval [t*period, (t+1)*period).
template <class T>
Matrix<T> labels_from_segments(const SegmentAnnotation& ann, double frame_period, int64_t t_frames,
                               const std::vector<std::string>& speaker_order) {
  const int64_t frame_ms = seconds_to_ms(frame_period);
  if (frame_ms <= 0) throw std::invalid_argument("frame_period must be positive");
  std::map<std::string, int64_t> row;
  for (size_t i = 0; i < speaker_order.size(); ++i) row[speaker_order[i]] = static_cast<int64_t>(i);
  Matrix<T> y = Matrix<T>::zeros(static_cast<int64_t>(speaker_order.size()), t_frames);
  for (const auto& e : ann.entries) {
    auto it = row.find(e.speaker);
    if (it == row.end()) throw std::invalid_argument("unknown speaker id: " + e.speaker);
    const int64_t first = std::max<int64_t>(0, e.onset_ms / frame_ms);
    for (int64_t t = first; t < t_frames; ++t) {
      if (e.onset_ms >= (t + 1) * frame_ms) continue;
      if (e.end_ms() <= t * frame_ms) break;
      y(it->second, t) = T(1);
    }
  }
  return y;
}

/// Log Mel-filterbank energies: 25 ms Hamming window, 10 ms hop, triangular
/// filters on the HTK Mel scale up to Nyquist, natural log with floor 1e-10.
/// Frame count is 1 + floor((N - win)/hop); trailing samples that do not fill
/// a window are dropped.
inline Matrix<float> logmel(const std::vector<double>& audio, int sample_rate, int n_mels = 23) {
  if (audio.empty()) throw std::invalid_argument("logmel on empty audio");
  if (sample_rate <= 0) throw std::invalid_argument("bad sample rate");
  const int win = sample_rate / 40;  // 25 ms
  const int hop = sample_rate / 100; // 10 ms
  if (static_cast<int>(audio.size()) < win)
    throw std::invalid_argument("audio shorter than one 25 ms window");
  int nfft = 1;
  while (nfft < win) nfft *= 2;
  const int n_bins = nfft / 2 + 1;
  const int64_t t_out = 1 + (static_cast<int64_t>(audio.size()) - win) / hop;

  std::vector<double> window(static_cast<size_t>(win));
  for (int i = 0; i < win; ++i)
    window[static_cast<size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (win - 1));

  auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
  auto mel_to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<size_t>(n_mels) + 2);
  for (int m = 0; m < n_mels + 2; ++m)
    centers[static_cast<size_t>(m)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (n_mels + 1));
  // filter weight per (mel, fft bin)
  Matrix<double> fb = Matrix<double>::zeros(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double lo = centers[static_cast<size_t>(m)];
    const double mid = centers[static_cast<size_t>(m) + 1];
    const double hi = centers[static_cast<size_t>(m) + 2];
    for (int b = 0; b < n_bins; ++b) {
      const double hz = static_cast<double>(b) * sample_rate / nfft;
      if (hz <= lo || hz >= hi) continue;
      fb(m, b) = hz <= mid ? (hz - lo) / (mid - lo) : (hi - hz) / (hi - mid);
    }
  }

  Matrix<float> out(n_mels, t_out);
  std::vector<double> frame(static_cast<size_t>(win));
  std::vector<double> power(static_cast<size_t>(n_bins));
  for (int64_t t = 0; t < t_out; ++t) {
    for (int i = 0; i < win; ++i)
      frame[static_cast<size_t>(i)] =
          audio[static_cast<size_t>(t * hop + i)] * window[static_cast<size_t>(i)];
    for (int b = 0; b < n_bins; ++b) {
      double re = 0, im = 0;
      for (int i = 0; i < win; ++i) {
        const double ang = 2.0 * kPi * b * i / nfft;
        re += frame[static_cast<size_t>(i)] * std::cos(ang);
        im -= frame[static_cast<size_t>(i)] * std::sin(ang);
      }
      power[static_cast<size_t>(b)] = re * re + im * im;
    }
    for (int m = 0; m < n_mels; ++m) {
      double e = 0;
      for (int b = 0; b < n_bins; ++b) e += fb(m, b) * power[static_cast<size_t>(b)];
      out(m, t) = static_cast<float>(std::log(std::max(e, 1e-10)));
    }
  }
  return out;
}

/// Stacks `stack` consecutive frames (edge-replicated) around every hop-th
/// frame: output column t covers input columns hop*t-(stack-1)/2 ..
/// hop*t+(stack-1)/2 and T_out = ceil(T_in/hop).
inline Matrix<float> stack_subsample(const Matrix<float>& feats, int stack = 15, int hop = 10) {
  if (stack < 1 || stack % 2 == 0) throw std::invalid_argument("stack must be odd and positive");
  if (hop < 1) throw std::invalid_argument("hop must be positive");
  if (feats.cols < 1) throw std::invalid_argument("stack_subsample on empty features");
  const int64_t t_out = (feats.cols + hop - 1) / hop;
  const int half = (stack - 1) / 2;
  Matrix<float> out(feats.rows * stack, t_out);
  for (int64_t t = 0; t < t_out; ++t) {
    const int64_t center = t * hop;
    for (int k = 0; k < stack; ++k) {
      const int64_t src = std::clamp<int64_t>(center - half + k, 0, feats.cols - 1);
      for (int64_t r = 0; r < feats.rows; ++r) out(k * feats.rows + r, t) = feats(r, src);
    }
  }
  return out;
}

}  // namespace eend

#endif  // EEND_DATAGEN_HPP
