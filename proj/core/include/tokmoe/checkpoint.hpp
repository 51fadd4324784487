// Copyright 2026 The TokenMoE Authors. All Rights Reserved.
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

#ifndef TOKMOE_CHECKPOINT_HPP_
#define TOKMOE_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "tokmoe/params.hpp"

namespace tokmoe {

// Binary checkpoint layout, all integers unsigned 64-bit little-endian:
//
//   "TOKMOE1\n"
//   tensor count
//   per tensor: name length, name bytes, rank, dims..., float64 LE values
//   FNV-1a 64 checksum of every byte between the magic and the checksum
//
// Slot order is preserved, so save(load(x)) reproduces x byte for byte.

inline constexpr std::string_view kCheckpointMagic = "TOKMOE1\n";

std::uint64_t fnv1a64(std::string_view bytes);

std::string serialize_checkpoint(const ParamStore& params);
// Throws IntegrityError on bad magic, truncation or checksum mismatch.
ParamStore parse_checkpoint(std::string_view bytes);

// Writes to a temporary sibling and renames, so readers never see a
// partial file.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace tokmoe

#endif  // TOKMOE_CHECKPOINT_HPP_
