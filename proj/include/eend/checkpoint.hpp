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

// Model checkpoints: "EENDCKPT", u32 version, length-prefixed model config
// text, then tensors in lexicographic name order as (u64 name_len, name,
// u64 rows, u64 cols, rows*cols float32 little-endian, row-major).

#ifndef EEND_CHECKPOINT_HPP
#define EEND_CHECKPOINT_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "eend/io.hpp"
#include "eend/model.hpp"

namespace eend {

inline constexpr char kCheckpointMagic[9] = "EENDCKPT";
inline constexpr uint32_t kCheckpointVersion = 1;

template <class T>
struct Checkpoint {
  ModelConfig config;
  std::string config_text;
  ParameterStore<T> params;
};

template <class T>
void save_checkpoint(const std::string& path, const ParameterStore<T>& ps,
                     const ModelConfig& cfg) {
  auto os = detail::open_out(path, true);
  os.write(kCheckpointMagic, 8);
  detail::write_u32(os, kCheckpointVersion);
  const std::string cfg_text = model_config_text(cfg);
  detail::write_u64(os, cfg_text.size());
  os.write(cfg_text.data(), static_cast<std::streamsize>(cfg_text.size()));
  detail::write_u64(os, ps.size());
  std::vector<float> buf;
  for (const auto& [name, entry] : ps) {
    detail::write_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    const Matrix<T>& m = entry.value;
    detail::write_u64(os, static_cast<uint64_t>(m.rows));
    detail::write_u64(os, static_cast<uint64_t>(m.cols));
    buf.resize(m.data.size());
    for (size_t i = 0; i < m.data.size(); ++i) buf[i] = static_cast<float>(m.data[i]);
    os.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!os) throw IoError("failed writing checkpoint: " + path);
}

/// Reads a checkpoint and validates the tensor set against a store freshly
/// built from the embedded config: every registered parameter must be present
/// with its exact shape, and no extra tensors are allowed.
template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  auto is = detail::open_in(path, true);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::string(magic, 8) != std::string(kCheckpointMagic, 8))
    throw IoError(path + ": not a checkpoint file");
  const uint32_t version = detail::read_u32(is, path + ": version");
  if (version != kCheckpointVersion)
    throw CheckpointMismatchError(path + ": unsupported checkpoint version " + std::to_string(version));
  const uint64_t cfg_len = detail::read_u64(is, path + ": config length");
  if (cfg_len > (1u << 20)) throw IoError(path + ": implausible config length");
  std::string cfg_text(cfg_len, '\0');
  is.read(cfg_text.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) throw IoError(path + ": truncated config text");

  Checkpoint<T> out;
  out.config_text = cfg_text;
  out.config = parse_model_config_text(cfg_text);
  out.params = init_parameters<T>(out.config);

  const uint64_t n_tensors = detail::read_u64(is, path + ": tensor count");
  if (n_tensors != out.params.size())
    throw CheckpointMismatchError(path + ": has " + std::to_string(n_tensors) + " tensors, config implies " +
                                  std::to_string(out.params.size()));
  std::string prev_name;
  std::vector<float> buf;
  for (uint64_t i = 0; i < n_tensors; ++i) {
    const uint64_t name_len = detail::read_u64(is, path + ": tensor name length");
    if (name_len == 0 || name_len > 4096) throw IoError(path + ": implausible tensor name length");
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!is) throw IoError(path + ": truncated tensor name");
    if (i > 0 && !(prev_name < name))
      throw IoError(path + ": tensor names not in lexicographic order at '" + name + "'");
    prev_name = name;
    const uint64_t rows = detail::read_u64(is, path + ": tensor rows");
    const uint64_t cols = detail::read_u64(is, path + ": tensor cols");
    if (rows == 0 || cols == 0 || rows > (1u << 30) || cols > (1u << 30))
      throw IoError(path + ": implausible tensor shape for '" + name + "'");
    if (!out.params.has(name))
      throw CheckpointMismatchError(path + ": unexpected tensor '" + name + "'");
    Matrix<T>& dst = out.params.value(name);
    if (static_cast<uint64_t>(dst.rows) != rows || static_cast<uint64_t>(dst.cols) != cols)
      throw CheckpointMismatchError(path + ": tensor '" + name + "' is " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", config implies " + dst.shape_str());
    buf.resize(rows * cols);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw IoError(path + ": truncated tensor data for '" + name + "'");
    for (size_t k = 0; k < buf.size(); ++k) dst.data[k] = static_cast<T>(buf[k]);
  }
  return out;
}

/// Element-wise mean over checkpoints whose embedded config texts are
/// byte-identical. Sums run in double so averaging k identical checkpoints
/// reproduces them exactly.
template <class T>
Checkpoint<T> average_checkpoints(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ConfigError("checkpoint averaging needs at least one path");
  Checkpoint<T> acc = load_checkpoint<T>(paths[0]);
  std::map<std::string, std::vector<double>> sums;
  for (const auto& [name, entry] : acc.params)
    sums.emplace(name, std::vector<double>(entry.value.data.begin(), entry.value.data.end()));
  for (size_t i = 1; i < paths.size(); ++i) {
    Checkpoint<T> next = load_checkpoint<T>(paths[i]);
    if (next.config_text != acc.config_text)
      throw CheckpointMismatchError(paths[i] + ": config differs from " + paths[0]);
    for (auto& [name, sum] : sums) {
      const Matrix<T>& src = next.params.value(name);
      for (size_t k = 0; k < sum.size(); ++k) sum[k] += static_cast<double>(src.data[k]);
    }
  }
  const double count = static_cast<double>(paths.size());
  for (auto& [name, entry] : acc.params) {
    const std::vector<double>& sum = sums.at(name);
    for (size_t k = 0; k < sum.size(); ++k)
      entry.value.data[k] = static_cast<T>(sum[k] / count);
  }
  return acc;
}

}  // namespace eend

#endif  // EEND_CHECKPOINT_HPP
