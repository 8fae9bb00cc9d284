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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cimrag {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using DocId = std::int64_t;

/// Precondition violated by a value (out-of-range level, non-finite input,
/// degenerate vector).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Incompatible or out-of-range configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed file or record.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major fp32 embeddings, one row per document, with parallel ids.
struct EmbeddingMatrix {
  RowMatrix<float> rows;
  std::vector<DocId> ids;

  Eigen::Index count() const { return rows.rows(); }
  Eigen::Index dim() const { return rows.cols(); }

  // Throws FormatError when ids and rows disagree or ids repeat.
  void validate() const;
};

}  // namespace cimrag
