// Copyright 2026 The cimrag Authors
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

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cimrag/types.hpp"

namespace cimrag {

// All binary containers are little-endian and start with a 4-byte magic.
//
//   EMB1: "EMB1" u32 count u32 dim, then count*dim f32.
//   TRP1: "TRP1" u32 count u32 dim, then count groups of (anchor, positive,
//         negative), each dim f32.
//
// EMB1 files may have an ids sidecar at <path>.ids.jsonl holding one
// {"id": int} per row; without it, ids are the row indices.

namespace io {

void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in);
void write_f32_array(std::ostream& out, std::span<const float> values);
void read_f32_array(std::istream& in, std::span<float> values);

/// Reads the 12-byte header and checks the magic; returns {count, dim}.
std::array<std::uint32_t, 2> read_header(std::istream& in,
                                         std::string_view magic,
                                         const std::filesystem::path& path);
void write_header(std::ostream& out, std::string_view magic,
                  std::uint32_t count, std::uint32_t dim);

/// FNV-1a 64 over bytes, used for config hashes.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace io

std::filesystem::path ids_sidecar_path(const std::filesystem::path& emb_path);

/// Writes the EMB1 payload and the ids sidecar.
void write_emb1(const std::filesystem::path& path, const EmbeddingMatrix& m);

/// Reads and validates an EMB1 file (size check, finite values, sidecar row
/// count, unique ids). Throws FormatError.
EmbeddingMatrix read_emb1(const std::filesystem::path& path);

}  // namespace cimrag
