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

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "eend/datagen.hpp"
#include "oracles.hpp"

using namespace eend;

namespace {

SimConfig base_sim(uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.target_duration = 60.0;
  return cfg;
}

}  // namespace

TEST_CASE("simulator determinism per seed") {
  SimConfig cfg = base_sim(42);
  auto [ann1, feat1] = simulate_conversation(cfg, "rec");
  auto [ann2, feat2] = simulate_conversation(cfg, "rec");
  REQUIRE(ann1.entries.size() == ann2.entries.size());
  for (size_t i = 0; i < ann1.entries.size(); ++i) {
    CHECK(ann1.entries[i].speaker == ann2.entries[i].speaker);
    CHECK(ann1.entries[i].onset_ms == ann2.entries[i].onset_ms);
    CHECK(ann1.entries[i].duration_ms == ann2.entries[i].duration_ms);
  }
  REQUIRE(feat1.data.numel() == feat2.data.numel());
  for (int64_t i = 0; i < feat1.data.numel(); ++i) CHECK(feat1.data.data[i] == feat2.data.data[i]);

  auto [ann3, feat3] = simulate_conversation(base_sim(43), "rec");
  CHECK(ann3.entries.size() != ann1.entries.size());
}

TEST_CASE("simulator output geometry") {
  SimConfig cfg = base_sim(7);
  auto [ann, feat] = simulate_conversation(cfg, "rec");

  SECTION("feature matrix is input_dim x ceil(duration/frame)") {
    CHECK(feat.data.rows == cfg.input_dim());
    CHECK(feat.data.rows == 345);
    CHECK(feat.data.cols == 600);
    CHECK(feat.frame_period == 0.1);
    for (auto v : feat.data.data) CHECK(std::isfinite(v));
  }

  SECTION("annotation ends within one frame of the target") {
    CHECK(ann.timeline_end_ms() <= 60000);
    CHECK(ann.timeline_end_ms() >= 60000 - kFrameMs);
  }

  SECTION("exactly two speakers, both present") {
    CHECK(ann.speakers().size() == 2);
  }

  SECTION("per-speaker segments never self-overlap") {
    std::map<std::string, int64_t> last_end;
    std::map<std::string, std::vector<Segment>> per;
    for (const auto& e : ann.entries) per[e.speaker].push_back(e);
    for (auto& [spk, segs] : per) {
      std::sort(segs.begin(), segs.end(),
                [](const Segment& a, const Segment& b) { return a.onset_ms < b.onset_ms; });
      for (size_t i = 1; i < segs.size(); ++i)
        CHECK(segs[i].onset_ms >= segs[i - 1].end_ms());
    }
  }
}

TEST_CASE("zero overlap target means no overlap at all") {
  SimConfig cfg = base_sim(11);
  cfg.overlap_ratio_target = 0.0;
  for (uint64_t s = 0; s < 5; ++s) {
    cfg.seed = 100 + s;
    auto [ann, feat] = simulate_conversation(cfg, "rec");
    CHECK(overlap_stats(ann).overlap_ms == 0);
  }
}

TEST_CASE("measured overlap tracks the target over 100 conversations") {
  SimConfig cfg = base_sim(0);
  cfg.target_duration = 120.0;

  SECTION("target 0.08") {
    cfg.overlap_ratio_target = 0.08;
    int64_t overlap = 0, speech = 0;
    for (uint64_t s = 0; s < 100; ++s) {
      cfg.seed = s;
      OverlapStats st = overlap_stats(simulate_conversation(cfg, "rec").first);
      overlap += st.overlap_ms;
      speech += st.speech_union_ms;
    }
    const double measured = static_cast<double>(overlap) / static_cast<double>(speech);
    CHECK(measured == Catch::Approx(0.08).margin(0.05));
  }

  SECTION("target 0.15") {
    cfg.overlap_ratio_target = 0.15;
    int64_t overlap = 0, speech = 0;
    for (uint64_t s = 0; s < 100; ++s) {
      cfg.seed = 1000 + s;
      OverlapStats st = overlap_stats(simulate_conversation(cfg, "rec").first);
      overlap += st.overlap_ms;
      speech += st.speech_union_ms;
    }
    const double measured = static_cast<double>(overlap) / static_cast<double>(speech);
    CHECK(measured == Catch::Approx(0.15).margin(0.05));
  }
}

TEST_CASE("unreachable overlap targets are rejected") {
  SimConfig cfg = base_sim(1);
  cfg.overlap_ratio_target = 0.4;
  CHECK_THROWS_AS(simulate_conversation(cfg, "rec"), ConfigError);
  cfg.overlap_ratio_target = 0.6;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("overlap statistics match a 1 ms brute-force count") {
  SECTION("hand-built annotation") {
    SegmentAnnotation ann;
    ann.recording_id = "rec";
    ann.entries = {{"A", 0, 2000}, {"B", 1500, 1000}, {"A", 2600, 400}, {"B", 3500, 500}};
    OverlapStats fast = overlap_stats(ann);
    OverlapStats slow = oracle::overlap_stats_bruteforce(ann);
    CHECK(fast.overlap_ms == slow.overlap_ms);
    CHECK(fast.speech_union_ms == slow.speech_union_ms);
    CHECK(fast.total_speaker_ms == slow.total_speaker_ms);
    CHECK(fast.overlap_ratio() == Catch::Approx(slow.overlap_ratio()).margin(1e-9));
    CHECK(fast.overlap_ms == 500);
    CHECK(fast.speech_union_ms == 3400);
  }

  SECTION("simulated annotations") {
    SimConfig cfg = base_sim(5);
    cfg.target_duration = 30.0;
    for (uint64_t s = 0; s < 5; ++s) {
      cfg.seed = 50 + s;
      SegmentAnnotation ann = simulate_conversation(cfg, "rec").first;
      OverlapStats fast = overlap_stats(ann);
      OverlapStats slow = oracle::overlap_stats_bruteforce(ann);
      CHECK(fast.overlap_ms == slow.overlap_ms);
      CHECK(fast.speech_union_ms == slow.speech_union_ms);
      CHECK(fast.overlap_ratio() == Catch::Approx(slow.overlap_ratio()).margin(1e-9));
    }
  }
}

TEST_CASE("label matrices from segments") {
  SECTION("single segment 0.0-0.35 at T=5") {
    SegmentAnnotation ann;
    ann.entries = {{"A", 0, 350}};
    Matrix<double> y = labels_from_segments<double>(ann, 0.1, 5, {"A"});
    const double want[5] = {1, 1, 1, 1, 0};
    for (int64_t t = 0; t < 5; ++t) CHECK(y(0, t) == want[t]);
  }

  SECTION("empty annotation is all zeros") {
    SegmentAnnotation ann;
    Matrix<double> y = labels_from_segments<double>(ann, 0.1, 4, {"A", "B"});
    for (auto v : y.data) CHECK(v == 0.0);
  }

  SECTION("fully overlapping speakers both get ones") {
    SegmentAnnotation ann;
    ann.entries = {{"A", 100, 300}, {"B", 100, 300}};
    Matrix<double> y = labels_from_segments<double>(ann, 0.1, 6, {"A", "B"});
    for (int64_t t = 1; t < 4; ++t) {
      CHECK(y(0, t) == 1.0);
      CHECK(y(1, t) == 1.0);
    }
    CHECK(y(0, 0) == 0.0);
    CHECK(y(0, 4) == 0.0);
    CHECK(y(1, 5) == 0.0);
  }

  SECTION("unknown speaker is rejected") {
    SegmentAnnotation ann;
    ann.entries = {{"C", 0, 100}};
    CHECK_THROWS_AS(labels_from_segments<double>(ann, 0.1, 2, {"A", "B"}),
                    std::invalid_argument);
  }

  SECTION("labels agree with simulator annotations") {
    SimConfig cfg = base_sim(9);
    cfg.target_duration = 20.0;
    auto [ann, feat] = simulate_conversation(cfg, "rec");
    Matrix<float> y = labels_from_segments<float>(ann, 0.1, feat.data.cols, ann.speakers());
    CHECK(y.rows == 2);
    CHECK(y.cols == feat.data.cols);
    int64_t active = 0;
    for (auto v : y.data) {
      CHECK((v == 0.0f || v == 1.0f));
      if (v == 1.0f) ++active;
    }
    CHECK(active > 0);
  }
}

TEST_CASE("log Mel filterbank") {
  const int sr = 8000;

  SECTION("one second gives 98 frames with 25 ms window and 10 ms hop") {
    std::vector<double> audio(static_cast<size_t>(sr), 0.1);
    Matrix<float> m = logmel(audio, sr);
    CHECK(m.rows == 23);
    CHECK(m.cols >= 98);
    CHECK(m.cols <= 100);
  }

  SECTION("silence hits the log floor everywhere") {
    std::vector<double> audio(static_cast<size_t>(sr), 0.0);
    Matrix<float> m = logmel(audio, sr);
    const float floor_val = static_cast<float>(std::log(1e-10));
    for (auto v : m.data) CHECK(v == floor_val);
  }

  SECTION("1 kHz sine concentrates energy in the matching Mel bin") {
    std::vector<double> audio(static_cast<size_t>(sr));
    for (size_t i = 0; i < audio.size(); ++i)
      audio[i] = std::sin(2.0 * kPi * 1000.0 * static_cast<double>(i) / sr);
    Matrix<float> m = logmel(audio, sr);

    // independent center-frequency computation on the HTK Mel scale
    auto hz_to_mel = [](double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); };
    auto mel_to_hz = [](double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); };
    const double mel_hi = hz_to_mel(sr / 2.0);
    int expect = 0;
    double best = 1e18;
    for (int b = 0; b < 23; ++b) {
      const double peak_hz = mel_to_hz(mel_hi * (b + 1) / 24.0);
      if (std::abs(peak_hz - 1000.0) < best) {
        best = std::abs(peak_hz - 1000.0);
        expect = b;
      }
    }

    double mean_energy[23] = {};
    for (int64_t b = 0; b < 23; ++b)
      for (int64_t t = 0; t < m.cols; ++t) mean_energy[b] += m(b, t);
    int got = static_cast<int>(std::max_element(mean_energy, mean_energy + 23) - mean_energy);
    CHECK(got == expect);
  }

  SECTION("empty audio is rejected") {
    CHECK_THROWS_AS(logmel({}, sr), std::invalid_argument);
  }
}

TEST_CASE("frame stacking and subsampling") {
  SECTION("100 frames at hop 10 give 10 columns of 345 rows") {
    Matrix<float> f = Matrix<float>::zeros(23, 100);
    Matrix<float> out = stack_subsample(f, 15, 10);
    CHECK(out.rows == 345);
    CHECK(out.cols == 10);
  }

  SECTION("constant input stays constant") {
    Matrix<float> f(23, 47, 3.25f);
    Matrix<float> out = stack_subsample(f, 15, 10);
    CHECK(out.cols == 5);
    for (auto v : out.data) CHECK(v == 3.25f);
  }

  SECTION("center slice of column t is input column 10t") {
    Matrix<float> f = Matrix<float>::zeros(3, 100);
    for (int64_t r = 0; r < 3; ++r)
      for (int64_t t = 0; t < 100; ++t) f(r, t) = static_cast<float>(100 * r + t);
    Matrix<float> out = stack_subsample(f, 15, 10);
    const int half = 7;
    for (int64_t t = 1; t < 9; ++t)
      for (int64_t r = 0; r < 3; ++r) CHECK(out(half * 3 + r, t) == f(r, 10 * t));
    // edges replicate the first/last input column
    for (int64_t r = 0; r < 3; ++r) CHECK(out(r, 0) == f(r, 0));
  }

  SECTION("even stack is rejected") {
    Matrix<float> f = Matrix<float>::zeros(4, 10);
    CHECK_THROWS_AS(stack_subsample(f, 14, 10), std::invalid_argument);
  }
}

TEST_CASE("sim config text") {
  SimConfig cfg = base_sim(3);
  cfg.overlap_ratio_target = 0.12;
  std::string text = sim_config_text(cfg);
  SimConfig back;
  for (const auto& [k, v] : kv::parse_lines(text)) apply_sim_key(back, k, v);
  CHECK(sim_config_text(back) == text);
  CHECK_THROWS_AS(apply_sim_key(back, "sim.bogus", "1"), ConfigError);
}
