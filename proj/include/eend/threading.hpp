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

#ifndef EEND_THREADING_HPP
#define EEND_THREADING_HPP

#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "eend/errors.hpp"

namespace eend {

/// Thread count from EEND_THREADS, else 1.
inline int default_threads() {
  const char* env = std::getenv("EEND_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == nullptr || *end != '\0' || v < 1 || v > 1024)
    throw ConfigError("EEND_THREADS must be an integer in [1,1024], got '" + std::string(env) + "'");
  return static_cast<int>(v);
}

/// Runs fn(0..n-1) over contiguous index chunks. Results must be written to
/// per-index slots so callers can reduce them in index order; that keeps every
/// outcome independent of the thread count. The first worker exception is
/// rethrown on the calling thread.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (threads < 1) throw ConfigError("thread count must be >= 1");
  if (threads > n) threads = n;
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&](int begin, int end_idx) {
    try {
      for (int i = begin; i < end_idx; ++i) fn(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!first_error) first_error = std::current_exception();
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  const int base = n / threads;
  const int rem = n % threads;
  int begin = 0;
  for (int t = 0; t < threads; ++t) {
    const int len = base + (t < rem ? 1 : 0);
    pool.emplace_back(worker, begin, begin + len);
    begin += len;
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace eend

#endif  // EEND_THREADING_HPP
