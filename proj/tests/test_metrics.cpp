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
#include <random>

#include "eend/datagen.hpp"
#include "eend/metrics.hpp"
#include "eend/model.hpp"

using namespace eend;

namespace {

// Random two-sided annotation; boundaries land on multiples of grid_ms.
SegmentAnnotation random_annotation(std::mt19937_64& rng, const std::string& id,
                                    int speakers = 2, int64_t grid_ms = 1) {
  SegmentAnnotation ann;
  ann.recording_id = id;
  for (int s = 0; s < speakers; ++s) {
    const std::string spk = "spk" + std::to_string(s);
    int64_t cursor = static_cast<int64_t>(unit_uniform(rng) * 2000.0);
    const int n = 2 + static_cast<int>(unit_uniform(rng) * 4.0);
    for (int i = 0; i < n; ++i) {
      int64_t dur = 300 + static_cast<int64_t>(unit_uniform(rng) * 2500.0);
      int64_t gap = static_cast<int64_t>(unit_uniform(rng) * 1500.0);
      cursor = (cursor / grid_ms) * grid_ms;
      dur = std::max<int64_t>(grid_ms, (dur / grid_ms) * grid_ms);
      gap = (gap / grid_ms) * grid_ms;
      ann.entries.push_back({spk, cursor, dur});
      cursor += dur + gap;
    }
  }
  return ann;
}

}  // namespace

TEST_CASE("posterior decoding") {
  SECTION("all 0.9 over 10 frames gives one segment 0.0-1.0") {
    Matrix<double> y(1, 10, 0.9);
    for (int median : {1, 3, 11}) {
      SegmentAnnotation ann = decode_posteriors(y, 0.5, median, "rec");
      REQUIRE(ann.entries.size() == 1);
      CHECK(ann.entries[0].onset_ms == 0);
      CHECK(ann.entries[0].duration_ms == 1000);
      CHECK(ann.entries[0].speaker == "spk0");
    }
  }

  SECTION("isolated spike is removed by a 3-frame median") {
    Matrix<double> y = Matrix<double>::zeros(1, 9);
    y(0, 4) = 0.9;
    CHECK(decode_posteriors(y, 0.5, 3, "rec").entries.empty());
    CHECK(decode_posteriors(y, 0.5, 1, "rec").entries.size() == 1);
  }

  SECTION("1,1,0,1,1 with a 3-frame median closes the gap") {
    Matrix<double> y = Matrix<double>::zeros(1, 5);
    y(0, 0) = y(0, 1) = y(0, 3) = y(0, 4) = 0.9;
    y(0, 2) = 0.1;
    SegmentAnnotation ann = decode_posteriors(y, 0.5, 3, "rec");
    REQUIRE(ann.entries.size() == 1);
    CHECK(ann.entries[0].onset_ms == 0);
    CHECK(ann.entries[0].duration_ms == 500);
  }

  SECTION("speakers decode independently") {
    Matrix<double> y = Matrix<double>::zeros(2, 6);
    for (int64_t t = 0; t < 3; ++t) y(0, t) = 0.8;
    for (int64_t t = 3; t < 6; ++t) y(1, t) = 0.8;
    SegmentAnnotation ann = decode_posteriors(y, 0.5, 1, "rec");
    REQUIRE(ann.entries.size() == 2);
    CHECK(ann.entries[0].speaker == "spk0");
    CHECK(ann.entries[1].speaker == "spk1");
    CHECK(ann.entries[1].onset_ms == 300);
  }

  SECTION("bad decode settings are rejected") {
    Matrix<double> y(1, 4, 0.5);
    CHECK_THROWS_AS(decode_posteriors(y, 0.0, 3, "rec"), ConfigError);
    CHECK_THROWS_AS(decode_posteriors(y, 0.5, 4, "rec"), ConfigError);
  }
}

TEST_CASE("der hand cases") {
  SECTION("identical annotations score zero") {
    std::mt19937_64 rng(3);
    SegmentAnnotation ann = random_annotation(rng, "rec");
    DerReport r = der(ann, ann, 0.25);
    CHECK(r.der == 0.0);
    CHECK(r.miss == 0.0);
    CHECK(r.fa == 0.0);
    CHECK(r.confusion == 0.0);
    CHECK(r.sad_miss == 0.0);
    CHECK(r.sad_fa == 0.0);
    CHECK(r.scored_speech_seconds > 0.0);
  }

  SECTION("ref 0-10 s vs hyp 0-12 s gives FA 17.5%") {
    SegmentAnnotation ref;
    ref.recording_id = "rec";
    ref.entries = {{"A", 0, 10000}};
    SegmentAnnotation hyp;
    hyp.recording_id = "rec";
    hyp.entries = {{"A", 0, 12000}};
    DerReport r = der(ref, hyp, 0.25);
    CHECK(r.fa == Catch::Approx(0.175).margin(1e-9));
    CHECK(r.miss == 0.0);
    CHECK(r.confusion == 0.0);
    CHECK(r.der == Catch::Approx(0.175).margin(1e-9));
    CHECK(r.sad_fa == Catch::Approx(0.175).margin(1e-9));
    CHECK(r.scored_speech_seconds == Catch::Approx(10.0).margin(1e-9));
  }

  SECTION("hypothesis relabeling is free") {
    SegmentAnnotation ref;
    ref.recording_id = "rec";
    ref.entries = {{"A", 0, 10000}};
    SegmentAnnotation hyp;
    hyp.recording_id = "rec";
    hyp.entries = {{"B", 0, 10000}};
    CHECK(der(ref, hyp, 0.25).der == 0.0);
  }

  SECTION("swapping reference speaker ids changes nothing") {
    std::mt19937_64 rng(5);
    SegmentAnnotation ref = random_annotation(rng, "rec");
    SegmentAnnotation hyp = random_annotation(rng, "rec");
    SegmentAnnotation swapped = ref;
    for (auto& e : swapped.entries) e.speaker = e.speaker == "spk0" ? "spk1" : "spk0";
    DerReport a = der(ref, hyp, 0.25);
    DerReport b = der(swapped, hyp, 0.25);
    CHECK(a.der == Catch::Approx(b.der).margin(1e-12));
    CHECK(a.miss == Catch::Approx(b.miss).margin(1e-12));
  }

  SECTION("mismatched recording ids are rejected") {
    SegmentAnnotation a, b;
    a.recording_id = "x";
    a.entries = {{"A", 0, 100}};
    b.recording_id = "y";
    b.entries = {{"A", 0, 100}};
    CHECK_THROWS_AS(der(a, b, 0.25), std::invalid_argument);
  }

  SECTION("more than 8 speakers per side is rejected") {
    SegmentAnnotation ref;
    ref.recording_id = "rec";
    for (int s = 0; s < 9; ++s)
      ref.entries.push_back({"s" + std::to_string(s), s * 1000, 500});
    CHECK_THROWS_AS(der(ref, ref, 0.25), ConfigError);
  }
}

TEST_CASE("der properties on random annotation pairs") {
  std::mt19937_64 rng(11);

  SECTION("decomposition and non-negativity") {
    for (int rep = 0; rep < 30; ++rep) {
      SegmentAnnotation ref = random_annotation(rng, "rec");
      SegmentAnnotation hyp = random_annotation(rng, "rec");
      DerReport r = der(ref, hyp, 0.25);
      CHECK(r.der == Catch::Approx(r.miss + r.fa + r.confusion).margin(1e-9));
      CHECK(r.miss >= 0.0);
      CHECK(r.fa >= 0.0);
      CHECK(r.confusion >= 0.0);
    }
  }

  SECTION("growing the collar never raises DER") {
    for (int rep = 0; rep < 10; ++rep) {
      SegmentAnnotation ref = random_annotation(rng, "rec");
      SegmentAnnotation hyp = random_annotation(rng, "rec");
      double prev = der(ref, hyp, 0.0).der;
      for (double collar : {0.1, 0.25, 0.5, 1.0}) {
        const double cur = der(ref, hyp, collar).der;
        CHECK(cur <= prev + 1e-12);
        prev = cur;
      }
    }
  }
}

TEST_CASE("event sweep agrees with the 10 ms frame oracle") {
  std::mt19937_64 rng(17);

  // the oracle samples 10 ms cell centers, so cases live on its grid
  SECTION("0.1% absolute over 100 random pairs with collar") {
    double worst = 0;
    for (int rep = 0; rep < 100; ++rep) {
      SegmentAnnotation ref = random_annotation(rng, "rec", 2, 10);
      SegmentAnnotation hyp = random_annotation(rng, "rec", 2, 10);
      DerReport fast = der(ref, hyp, 0.25);
      DerReport slow = der_frame_oracle(ref, hyp, 0.25);
      worst = std::max(worst, std::abs(fast.der - slow.der));
      CHECK(fast.der == Catch::Approx(slow.der).margin(1e-3));
      CHECK(fast.miss == Catch::Approx(slow.miss).margin(1e-3));
      CHECK(fast.fa == Catch::Approx(slow.fa).margin(1e-3));
      CHECK(fast.confusion == Catch::Approx(slow.confusion).margin(1e-3));
    }
    INFO("worst |der-oracle| = " << worst);
    CHECK(worst <= 1e-3);
  }

  SECTION("exact on frame-aligned annotations") {
    for (int rep = 0; rep < 20; ++rep) {
      SegmentAnnotation ref = random_annotation(rng, "rec", 2, 100);
      SegmentAnnotation hyp = random_annotation(rng, "rec", 2, 100);
      DerReport fast = der(ref, hyp, 0.25);
      DerReport slow = der_frame_oracle(ref, hyp, 0.25);
      CHECK(fast.der == Catch::Approx(slow.der).margin(1e-9));
    }
  }
}

TEST_CASE("combining per-recording reports") {
  DerReport a;
  a.miss = 0.1;
  a.der = 0.1;
  a.scored_speech_seconds = 10.0;
  DerReport b;
  b.fa = 0.3;
  b.der = 0.3;
  b.scored_speech_seconds = 30.0;
  DerReport total = combine_reports({a, b});
  CHECK(total.der == Catch::Approx(0.25).margin(1e-12));
  CHECK(total.miss == Catch::Approx(0.025).margin(1e-12));
  CHECK(total.fa == Catch::Approx(0.225).margin(1e-12));
  CHECK(total.scored_speech_seconds == 40.0);

  DerReport empty = combine_reports({});
  CHECK(empty.der == 0.0);
  CHECK(empty.scored_speech_seconds == 0.0);
}

TEST_CASE("per-layer scoring") {
  ModelConfig cfg;
  cfg.variant = AttractorVariant::kNa;
  cfg.num_layers = 2;
  cfg.model_dim = 32;
  cfg.heads = 2;
  cfg.ff_dim = 64;
  cfg.input_dim = 345;
  cfg.inter_loss = true;
  cfg.seed = 3;
  ParameterStore<double> ps = init_parameters<double>(cfg);

  SimConfig sim;
  sim.target_duration = 20.0;
  std::vector<std::pair<Matrix<double>, SegmentAnnotation>> dataset;
  for (uint64_t s = 0; s < 3; ++s) {
    sim.seed = 70 + s;
    auto [ann, feat] = simulate_conversation(sim, "rec" + std::to_string(s));
    dataset.emplace_back(feat.data.cast<double>(), ann);
  }
  DecodeConfig dec;

  SECTION("report per tap plus final, untrained stays near chance") {
    std::vector<DerReport> reports = score_per_layer(ps, cfg, dataset, dec, 0.25);
    REQUIRE(reports.size() == 2);  // one tap + final
    for (const DerReport& r : reports) {
      CHECK(r.der > 0.30);
      CHECK(r.scored_speech_seconds > 0.0);
    }
  }

  SECTION("requires intermediate taps") {
    ModelConfig off = cfg;
    off.inter_loss = false;
    ParameterStore<double> ps2 = init_parameters<double>(off);
    CHECK_THROWS_AS(score_per_layer(ps2, off, dataset, dec, 0.25), ConfigError);
  }
}

TEST_CASE("decode config text") {
  DecodeConfig dec;
  dec.threshold = 0.4;
  dec.median_frames = 7;
  dec.collar = 0.1;
  std::string text = decode_config_text(dec);
  DecodeConfig back;
  for (const auto& [k, v] : kv::parse_lines(text)) apply_decode_key(back, k, v);
  CHECK(decode_config_text(back) == text);
  CHECK_THROWS_AS(apply_decode_key(back, "decode.bogus", "1"), ConfigError);
}
