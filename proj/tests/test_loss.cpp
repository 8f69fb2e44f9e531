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

#include "eend/loss.hpp"
#include "eend/nncore.hpp"
#include "oracles.hpp"

using namespace eend;

namespace {

Matrix<double> random_posteriors(int64_t c, int64_t t, std::mt19937_64& rng) {
  Matrix<double> m = Matrix<double>::zeros(c, t);
  for (auto& v : m.data) v = 0.02 + 0.96 * unit_uniform(rng);
  return m;
}

Matrix<double> random_labels(int64_t c, int64_t t, std::mt19937_64& rng) {
  Matrix<double> m = Matrix<double>::zeros(c, t);
  for (auto& v : m.data) v = unit_uniform(rng) < 0.5 ? 0.0 : 1.0;
  return m;
}

}  // namespace

TEST_CASE("per-cell bce") {
  CHECK(bce(1.0, 0.5) == Catch::Approx(std::log(2.0)).margin(1e-9));
  CHECK(bce(0.0, 0.5) == Catch::Approx(std::log(2.0)).margin(1e-9));
  CHECK(bce(1.0, 0.9) == Catch::Approx(-std::log(0.9)).margin(1e-9));
  CHECK(bce(1.0, 0.9) == Catch::Approx(0.105361).margin(1e-6));
  // clamp keeps confident mistakes finite
  CHECK(std::isfinite(bce(1.0, 0.0)));
  CHECK(std::isfinite(bce(0.0, 1.0)));
}

TEST_CASE("pit picks the swapped permutation when it wins") {
  Matrix<double> y_true = Matrix<double>::zeros(2, 2);
  y_true(0, 0) = 1.0;
  y_true(0, 1) = 1.0;
  Matrix<double> y_pred = Matrix<double>::zeros(2, 2);
  y_pred(0, 0) = 0.1;
  y_pred(0, 1) = 0.1;
  y_pred(1, 0) = 0.9;
  y_pred(1, 1) = 0.9;
  PitResult<double> r = pit_loss(y_true, y_pred);
  CHECK(r.permutation == std::vector<int>{1, 0});
  CHECK(r.loss == Catch::Approx(-std::log(0.9)).margin(1e-12));
}

TEST_CASE("pit tie resolves to the identity permutation") {
  Matrix<double> y_true = Matrix<double>::zeros(2, 3);
  y_true(0, 0) = 1.0;
  y_true(1, 2) = 1.0;
  Matrix<double> y_pred(2, 3, 0.5);
  PitResult<double> r = pit_loss(y_true, y_pred);
  CHECK(r.permutation == std::vector<int>{0, 1});
  CHECK(r.loss == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("pit loss is invariant to permuting truth rows") {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix<double> y_true = random_labels(3, 6, rng);
    Matrix<double> y_pred = random_posteriors(3, 6, rng);
    Matrix<double> swapped = Matrix<double>::zeros(3, 6);
    const int map[3] = {2, 0, 1};
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t t = 0; t < 6; ++t) swapped(map[c], t) = y_true(c, t);
    CHECK(pit_loss(y_true, y_pred).loss ==
          Catch::Approx(pit_loss(swapped, y_pred).loss).margin(1e-12));
  }
}

TEST_CASE("pit matches the brute-force oracle for C in 1..3") {
  std::mt19937_64 rng(11);
  for (int64_t c : {1, 2, 3}) {
    for (int rep = 0; rep < 10; ++rep) {
      Matrix<double> y_true = random_labels(c, 5, rng);
      Matrix<double> y_pred = random_posteriors(c, 5, rng);
      std::vector<int> oracle_perm;
      const double want = oracle::pit_loss_bruteforce(y_true, y_pred, &oracle_perm);
      PitResult<double> got = pit_loss(y_true, y_pred);
      CHECK(got.loss == Catch::Approx(want).margin(1e-12));
      CHECK(got.permutation == oracle_perm);
    }
  }
}

TEST_CASE("pit rejects bad inputs") {
  Matrix<double> a = Matrix<double>::zeros(2, 3);
  Matrix<double> b = Matrix<double>::zeros(3, 3);
  CHECK_THROWS_AS(pit_loss(a, b), std::invalid_argument);
  Matrix<double> big = Matrix<double>::zeros(9, 2);
  CHECK_THROWS_AS(pit_loss(big, big), ConfigError);
}

TEST_CASE("tape pit loss agrees with the matrix overload") {
  std::mt19937_64 rng(13);
  Matrix<double> y_true = random_labels(2, 7, rng);
  Matrix<double> y_pred = random_posteriors(2, 7, rng);
  Graph<double> g;
  auto [node, perm] = pit_loss(y_true, g.leaf(y_pred));
  PitResult<double> plain = pit_loss(y_true, y_pred);
  CHECK(node.value()(0, 0) == Catch::Approx(plain.loss).margin(1e-12));
  CHECK(perm == plain.permutation);
}

TEST_CASE("pit gradient matches finite differences away from ties") {
  std::mt19937_64 rng(17);
  ParameterStore<double> ps;
  Matrix<double> logits = Matrix<double>::zeros(2, 5);
  for (auto& v : logits.data) v = 2.0 * unit_normal(rng);
  ps.add("logits", logits);
  Matrix<double> y_true = random_labels(2, 5, rng);

  auto build = [&](Graph<double>& g) {
    return pit_loss(y_true, sigmoid(g.param(ps, "logits"))).first;
  };
  auto loss_value = [&]() {
    Graph<double> g;
    return build(g).value()(0, 0);
  };
  ps.zero_grads();
  {
    Graph<double> g;
    g.backward(build(g));
  }
  CHECK(grad_check(ps, loss_value, 1e-6).max_rel_err < 1e-5);
}

TEST_CASE("intermediate loss aggregation") {
  std::mt19937_64 rng(19);
  Matrix<double> y_true = random_labels(2, 6, rng);
  Matrix<double> yf = random_posteriors(2, 6, rng);
  Matrix<double> yi1 = random_posteriors(2, 6, rng);
  Matrix<double> yi2 = random_posteriors(2, 6, rng);

  SECTION("final plus mean of taps") {
    Graph<double> g;
    double got = intermediate_loss(y_true, g.leaf(yf), {g.leaf(yi1), g.leaf(yi2)}).value()(0, 0);
    const double want = pit_loss(y_true, yf).loss +
                        0.5 * (pit_loss(y_true, yi1).loss + pit_loss(y_true, yi2).loss);
    CHECK(got == Catch::Approx(want).margin(1e-12));
  }

  SECTION("mix scales only the intermediate term") {
    Graph<double> g;
    double got =
        intermediate_loss(y_true, g.leaf(yf), {g.leaf(yi1), g.leaf(yi2)}, 0.25).value()(0, 0);
    const double want = pit_loss(y_true, yf).loss +
                        0.25 * 0.5 * (pit_loss(y_true, yi1).loss + pit_loss(y_true, yi2).loss);
    CHECK(got == Catch::Approx(want).margin(1e-12));
  }

  SECTION("identical taps double the final term") {
    Graph<double> g;
    double got = intermediate_loss(y_true, g.leaf(yf), {g.leaf(yf), g.leaf(yf)}).value()(0, 0);
    CHECK(got == Catch::Approx(2.0 * pit_loss(y_true, yf).loss).margin(1e-12));
  }

  SECTION("total is at least the final term") {
    Graph<double> g;
    double total = intermediate_loss(y_true, g.leaf(yf), {g.leaf(yi1)}).value()(0, 0);
    CHECK(total >= pit_loss(y_true, yf).loss);
  }

  SECTION("no taps is an error") {
    Graph<double> g;
    CHECK_THROWS_AS(intermediate_loss(y_true, g.leaf(yf), std::vector<Var<double>>{}),
                    std::invalid_argument);
  }
}
