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

#ifndef EEND_IO_HPP
#define EEND_IO_HPP

#include <bit>
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "eend/datagen.hpp"
#include "eend/errors.hpp"
#include "eend/matrix.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and this code writes memory directly");

namespace eend {
namespace detail {

inline void write_u64(std::ostream& os, uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline uint64_t read_u64(std::istream& is, const std::string& what) {
  uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) throw IoError("truncated " + what);
  return v;
}

inline void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline uint32_t read_u32(std::istream& is, const std::string& what) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(v))) throw IoError("truncated " + what);
  return v;
}

inline std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
  if (!is) throw IoError("cannot open: " + path);
  return is;
}

inline std::string format_ms(int64_t ms) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%" PRId64 ".%03" PRId64, ms / 1000, ms % 1000);
  return std::string(buf);
}
}  // namespace detail

inline constexpr char kFeatureMagic[9] = "EENDFEAT";

inline void write_features(const std::string& path, const Matrix<float>& m) {
  auto os = detail::open_out(path, true);
  os.write(kFeatureMagic, 8);
  detail::write_u64(os, static_cast<uint64_t>(m.rows));
  detail::write_u64(os, static_cast<uint64_t>(m.cols));
  os.write(reinterpret_cast<const char*>(m.data.data()),
           static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!os) throw IoError("write failed: " + path);
}

inline Matrix<float> read_features(const std::string& path) {
  auto is = detail::open_in(path, true);
  char magic[8];
  if (!is.read(magic, 8) || std::string(magic, 8) != std::string(kFeatureMagic, 8))
    throw IoError("not a feature file: " + path);
  const auto rows = static_cast<int64_t>(detail::read_u64(is, "feature header in " + path));
  const auto cols = static_cast<int64_t>(detail::read_u64(is, "feature header in " + path));
  if (rows <= 0 || cols <= 0 || rows > (1 << 20) || cols > (1 << 30))
    throw IoError("implausible feature shape in " + path);
  Matrix<float> m(rows, cols);
  if (!is.read(reinterpret_cast<char*>(m.data.data()),
               static_cast<std::streamsize>(m.data.size() * sizeof(float))))
    throw IoError("truncated feature data in " + path);
  return m;
}

/// RTTM v1.3 SPEAKER lines, onset/duration at 3 decimals (exactly the
/// internal millisecond resolution), sorted by (recording, onset).
inline void rttm_write(const std::vector<SegmentAnnotation>& anns, const std::string& path) {
  struct Line {
    std::string rec;
    int64_t onset;
    int64_t dur;
    std::string spk;
    bool operator<(const Line& o) const {
      return rec != o.rec ? rec < o.rec : onset != o.onset ? onset < o.onset : spk < o.spk;
    }
  };
  std::vector<Line> lines;
  for (const auto& ann : anns)
    for (const auto& e : ann.entries) {
      if (e.onset_ms < 0 || e.duration_ms <= 0)
        throw std::invalid_argument("segment outside RTTM domain in " + ann.recording_id);
      lines.push_back({ann.recording_id, e.onset_ms, e.duration_ms, e.speaker});
    }
  std::sort(lines.begin(), lines.end());
  auto os = detail::open_out(path, false);
  for (const auto& l : lines)
    os << "SPEAKER " << l.rec << " 1 " << detail::format_ms(l.onset) << ' '
       << detail::format_ms(l.dur) << " <NA> <NA> " << l.spk << " <NA> <NA>\n";
  if (!os) throw IoError("write failed: " + path);
}

/// Returns one annotation per recording id, sorted by id; lines within a
/// recording keep file order. Non-SPEAKER lines are ignored.
inline std::vector<SegmentAnnotation> rttm_read(const std::string& path) {
  auto is = detail::open_in(path, false);
  std::map<std::string, SegmentAnnotation> by_rec;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    std::string t;
    while (ls >> t) tok.push_back(t);
    if (tok.empty() || tok[0] != "SPEAKER") continue;
    if (tok.size() < 8)
      throw IoError(path + ":" + std::to_string(lineno) + ": SPEAKER line has " +
                    std::to_string(tok.size()) + " fields, need at least 8");
    double onset_s, dur_s;
    try {
      size_t p1, p2;
      onset_s = std::stod(tok[3], &p1);
      dur_s = std::stod(tok[4], &p2);
      if (p1 != tok[3].size() || p2 != tok[4].size()) throw std::invalid_argument("trailing junk");
    } catch (const std::exception&) {
      throw IoError(path + ":" + std::to_string(lineno) + ": bad onset/duration '" + tok[3] +
                    "' '" + tok[4] + "'");
    }
    const int64_t onset = seconds_to_ms(onset_s);
    const int64_t dur = seconds_to_ms(dur_s);
    if (onset < 0 || dur <= 0)
      throw IoError(path + ":" + std::to_string(lineno) + ": non-positive duration or negative onset");
    auto& ann = by_rec[tok[1]];
    ann.recording_id = tok[1];
    ann.entries.push_back({tok[7], onset, dur});
  }
  std::vector<SegmentAnnotation> out;
  out.reserve(by_rec.size());
  for (auto& [rec, ann] : by_rec) out.push_back(std::move(ann));
  return out;
}

/// Picks one recording out of a parsed RTTM by id.
inline const SegmentAnnotation& find_recording(const std::vector<SegmentAnnotation>& anns,
                                               const std::string& recording_id, const std::string& path) {
  for (const auto& a : anns)
    if (a.recording_id == recording_id) return a;
  throw IoError(path + ": no RTTM lines for recording '" + recording_id + "'");
}

struct ManifestEntry {
  std::string id;
  std::string feature_path;
  std::string rttm_path;
};

inline void manifest_write(const std::vector<ManifestEntry>& entries, const std::string& path) {
  auto os = detail::open_out(path, false);
  for (const auto& e : entries) os << e.id << '\t' << e.feature_path << '\t' << e.rttm_path << '\n';
  if (!os) throw IoError("write failed: " + path);
}

inline std::vector<ManifestEntry> manifest_read(const std::string& path) {
  auto is = detail::open_in(path, false);
  std::vector<ManifestEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!std::getline(ls, e.id, '\t') || !std::getline(ls, e.feature_path, '\t') ||
        !std::getline(ls, e.rttm_path, '\t'))
      throw IoError(path + ":" + std::to_string(lineno) + ": need 3 tab-separated fields");
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace eend

#endif  // EEND_IO_HPP
