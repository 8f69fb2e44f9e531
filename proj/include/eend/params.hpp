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

#ifndef EEND_PARAMS_HPP
#define EEND_PARAMS_HPP

#include <cmath>
#include <map>
#include <random>
#include <string>

#include "eend/errors.hpp"
#include "eend/matrix.hpp"

namespace eend {

template <class T>
using GradMap = std::map<std::string, Matrix<T>>;

/// Named learnable tensors plus same-shaped gradient slots. Iteration is in
/// lexicographic name order, which fixes the checkpoint layout.
template <class T>
class ParameterStore {
 public:
  struct Entry {
    Matrix<T> value;
    Matrix<T> grad;
  };

  Matrix<T>& add(const std::string& name, Matrix<T> init) {
    if (entries_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    Entry e;
    e.grad = Matrix<T>::zeros(init.rows, init.cols);
    e.value = std::move(init);
    return entries_.emplace(name, std::move(e)).first->second.value;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Matrix<T>& value(const std::string& name) { return entry(name).value; }
  const Matrix<T>& value(const std::string& name) const { return entry(name).value; }
  Matrix<T>& grad(const std::string& name) { return entry(name).grad; }
  const Matrix<T>& grad(const std::string& name) const { return entry(name).grad; }

  void zero_grads() {
    for (auto& [name, e] : entries_) e.grad.fill(T(0));
  }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& [name, e] : entries_) n += e.value.numel();
    return n;
  }

  size_t size() const { return entries_.size(); }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Adds a gradient map into the stored gradient slots.
  void accumulate(const GradMap<T>& grads) {
    for (const auto& [name, g] : grads) add_inplace(grad(name), g);
  }

  template <class U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>());
    return out;
  }

 private:
  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  std::map<std::string, Entry> entries_;
};

/// Engine output mapped to [0,1) by the 53-bit shift-multiply idiom. Unlike
/// std::uniform_real_distribution this is bit-identical across standard
/// library implementations.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal draw via Box-Muller on unit_uniform; bit-stable for the
/// same reason.
inline double unit_normal(std::mt19937_64& rng) {
  const double u1 = unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(6.283185307179586 * u2);
}

/// SplitMix64-style combiner for deriving independent stream seeds.
inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 1);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

/// Xavier-uniform draw; biases and norm offsets are simply zero-filled.
template <class T>
Matrix<T> xavier_uniform(int64_t rows, int64_t cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<T> m(rows, cols);
  for (int64_t i = 0; i < m.numel(); ++i)
    m.data[i] = static_cast<T>(limit * (2.0 * unit_uniform(rng) - 1.0));
  return m;
}

}  // namespace eend

#endif  // EEND_PARAMS_HPP
