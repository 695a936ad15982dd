// Copyright 2026 The Subnav Authors.
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

#include "subnav/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "subnav/instr.h"

namespace subnav::num {

using instr::FormatError;
using instr::IoError;
namespace {

constexpr char kMagic[4] = {'M', 'L', 'A', 'P'};
constexpr std::uint32_t kMaxNameLength = 4096;

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw FormatError("checkpoint truncated while reading " + what);
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes, bytes + sizeof(T));
  }
  T v;
  std::memcpy(&v, bytes, sizeof(T));
  return v;
}

}  // namespace

void save_checkpoint(const ParamStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Parameter& p = store[i];
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
    for (double v : p.value.values()) put<double>(out, v);
  }
  out.flush();
  if (!out) throw IoError("error writing checkpoint " + path.string());
}

void load_checkpoint(ParamStore& store, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, "parameter count");
  // Decode everything before touching the store so a bad file changes nothing.
  std::vector<std::pair<Parameter*, Tensor>> loaded;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, "name length");
    if (len == 0 || len > kMaxNameLength) {
      throw FormatError(path.string() + ": bad parameter name length");
    }
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) {
      throw FormatError(path.string() + ": truncated parameter name");
    }
    if (!store.contains(name)) {
      throw FormatError(path.string() + ": unknown parameter " + name);
    }
    if (!seen.insert(name).second) {
      throw FormatError(path.string() + ": duplicate parameter " + name);
    }
    const auto rank = get<std::uint32_t>(in, name + " rank");
    if (rank > Tensor::kMaxRank) {
      throw FormatError(path.string() + ": bad rank for " + name);
    }
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in, name + " dims");
    Parameter& p = store.get(name);
    if (shape != p.value.shape()) {
      throw FormatError(path.string() + ": " + name + " has shape " +
                        shape_string(shape) + ", model expects " +
                        shape_string(p.value.shape()));
    }
    std::vector<double> values(element_count(shape));
    for (double& v : values) v = get<double>(in, name + " values");
    Tensor t(shape, std::move(values));
    if (!t.all_finite()) {
      throw FormatError(path.string() + ": non-finite values in " + name);
    }
    loaded.emplace_back(&p, std::move(t));
  }
  if (seen.size() != store.size()) {
    for (std::size_t i = 0; i < store.size(); ++i) {
      if (!seen.count(store[i].name)) {
        throw FormatError(path.string() + ": missing parameter " + store[i].name);
      }
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after last parameter");
  }
  for (auto& [p, t] : loaded) p->value = std::move(t);
}

}  // namespace subnav::num
