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

// Parameter checkpoint files.
//
// Layout, all integers and reals little-endian:
//
//   "MLAP"                 4-byte magic
//   u32 version            currently 1
//   u32 count              number of parameters
//   count times:
//     u32 name_length, name bytes (UTF-8, no terminator)
//     u32 rank, then rank x u64 dims
//     product(dims) x f64 values, row-major
//
// Parameters are written in store order. Loading matches by name, so a file
// written by an older build with the same parameter set stays readable.

#ifndef SUBNAV_CHECKPOINT_H_
#define SUBNAV_CHECKPOINT_H_

#include <filesystem>

#include "subnav/autodiff.h"

namespace subnav::num {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Throws subnav::instr::IoError when the file cannot be written.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path);

// Overwrites every parameter of `store` from the file. Throws subnav::instr::IoError
// on I/O problems and subnav::instr::FormatError on a bad header, a missing or
// unknown parameter, or a shape that does not match the store.
void load_checkpoint(ParamStore& store, const std::filesystem::path& path);

}  // namespace subnav::num

#endif  // SUBNAV_CHECKPOINT_H_
