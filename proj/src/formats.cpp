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

#include "cimrag/formats.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

namespace cimrag {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

void EmbeddingMatrix::validate() const {
  if (ids.size() != static_cast<std::size_t>(rows.rows())) {
    throw FormatError("embedding matrix: " + std::to_string(ids.size()) +
                      " ids for " + std::to_string(rows.rows()) + " rows");
  }
  std::unordered_set<DocId> seen;
  for (DocId id : ids) {
    if (!seen.insert(id).second) {
      throw FormatError("embedding matrix: duplicate id " + std::to_string(id));
    }
  }
}

namespace io {

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("unexpected end of file");
  return v;
}

void write_f32_array(std::ostream& out, std::span<const float> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
}

void read_f32_array(std::istream& in, std::span<float> values) {
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size_bytes()));
  if (!in) throw FormatError("unexpected end of file");
}

std::array<std::uint32_t, 2> read_header(std::istream& in,
                                         std::string_view magic,
                                         const std::filesystem::path& path) {
  char got[4] = {};
  in.read(got, 4);
  if (!in || std::string_view(got, 4) != magic) {
    throw FormatError(path.string() + ": bad magic, expected " +
                      std::string(magic));
  }
  const std::uint32_t count = read_u32(in);
  const std::uint32_t dim = read_u32(in);
  return {count, dim};
}

void write_header(std::ostream& out, std::string_view magic,
                  std::uint32_t count, std::uint32_t dim) {
  out.write(magic.data(), 4);
  write_u32(out, count);
  write_u32(out, dim);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace io

std::filesystem::path ids_sidecar_path(const std::filesystem::path& emb_path) {
  return std::filesystem::path(emb_path.string() + ".ids.jsonl");
}

void write_emb1(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  m.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  io::write_header(out, "EMB1", static_cast<std::uint32_t>(m.count()),
                   static_cast<std::uint32_t>(m.dim()));
  io::write_f32_array(out, std::span<const float>(m.rows.data(),
                                                  static_cast<std::size_t>(m.rows.size())));
  if (!out) throw FormatError("write failed: " + path.string());

  std::ofstream ids(ids_sidecar_path(path), std::ios::trunc);
  for (DocId id : m.ids) ids << nlohmann::json{{"id", id}}.dump() << '\n';
}

EmbeddingMatrix read_emb1(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const auto [count, dim] = io::read_header(in, "EMB1", path);
  const auto expected = 12 + 4ULL * count * dim;
  if (std::filesystem::file_size(path) != expected) {
    throw FormatError(path.string() + ": size does not match header (" +
                      std::to_string(count) + " x " + std::to_string(dim) + ")");
  }
  EmbeddingMatrix m;
  m.rows.resize(count, dim);
  io::read_f32_array(in, std::span<float>(m.rows.data(),
                                          static_cast<std::size_t>(m.rows.size())));
  if (!m.rows.allFinite()) throw FormatError(path.string() + ": non-finite value");

  const auto sidecar = ids_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) {
    std::ifstream ids(sidecar);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ids, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        m.ids.push_back(nlohmann::json::parse(line).at("id").get<DocId>());
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(sidecar.string() + ":" + std::to_string(line_no) +
                          ": " + e.what());
      }
    }
  } else {
    m.ids.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) m.ids[i] = i;
  }
  m.validate();
  return m;
}

}  // namespace cimrag
