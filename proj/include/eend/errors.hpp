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

#ifndef EEND_ERRORS_HPP
#define EEND_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace eend {

// Error taxonomy maps onto CLI exit codes: config 2, io 3, divergence 4,
// checkpoint mismatch 5.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

struct CheckpointMismatchError : std::runtime_error {
  explicit CheckpointMismatchError(const std::string& msg)
      : std::runtime_error(msg) {}
};

}  // namespace eend

#endif  // EEND_ERRORS_HPP
