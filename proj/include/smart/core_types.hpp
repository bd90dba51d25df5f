// Copyright 2026 The SMART Retrieval Authors.
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

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "smart/error.hpp"
#include "smart/matrix.hpp"

namespace smart {

using SeqId = std::uint64_t;

inline constexpr double kZeroNormThreshold = 1e-12;
inline constexpr double kPooledNormTolerance = 1e-5;

// Numeric values are the on-disk role bytes.
enum class TokenRole : std::uint8_t {
  kText = 0,
  kVision = 1,
  kSpecial = 2,
  kPooling = 3,
  kPadding = 4,
};

inline constexpr std::uint8_t kNumTokenRoles = 5;

inline std::string_view token_role_name(TokenRole role) {
  switch (role) {
    case TokenRole::kText: return "text";
    case TokenRole::kVision: return "vision";
    case TokenRole::kSpecial: return "special";
    case TokenRole::kPooling: return "pooling";
    case TokenRole::kPadding: return "padding";
  }
  return "unknown";
}

inline std::optional<TokenRole> parse_token_role(std::string_view name) {
  for (std::uint8_t r = 0; r < kNumTokenRoles; ++r) {
    auto role = static_cast<TokenRole>(r);
    if (token_role_name(role) == name) return role;
  }
  return std::nullopt;
}

// Small bitset over TokenRole.
class RoleSet {
 public:
  constexpr RoleSet() = default;
  constexpr RoleSet(std::initializer_list<TokenRole> roles) {
    for (auto r : roles) insert(r);
  }

  // Pooling and Padding: the exclusion every scorer starts from.
  static constexpr RoleSet structural() {
    return {TokenRole::kPooling, TokenRole::kPadding};
  }

  constexpr void insert(TokenRole r) { bits_ |= bit(r); }
  constexpr bool contains(TokenRole r) const { return (bits_ & bit(r)) != 0; }
  constexpr RoleSet with(TokenRole r) const {
    RoleSet s = *this;
    s.insert(r);
    return s;
  }
  constexpr RoleSet operator|(RoleSet other) const {
    RoleSet s;
    s.bits_ = bits_ | other.bits_;
    return s;
  }
  friend constexpr bool operator==(RoleSet, RoleSet) = default;

 private:
  static constexpr std::uint8_t bit(TokenRole r) {
    return static_cast<std::uint8_t>(1u << static_cast<std::uint8_t>(r));
  }
  std::uint8_t bits_ = 0;
};

// One encoded query or candidate at one layer. Token rows are raw hidden
// states; the pooled vector is unit norm. Immutable once constructed.
class SequenceEmbedding {
 public:
  SequenceEmbedding(SeqId seq_id, std::uint16_t layer_id,
                    std::vector<float> pooled, Matrix tokens,
                    std::vector<TokenRole> roles)
      : seq_id_(seq_id),
        layer_id_(layer_id),
        pooled_(std::move(pooled)),
        tokens_(std::move(tokens)),
        roles_(std::move(roles)) {
    if (pooled_.empty()) {
      throw Error(ErrorCode::kInvalidEmbedding, "dim must be positive",
                  seq_id_);
    }
    if (tokens_.rows() != roles_.size()) {
      throw Error(ErrorCode::kInvalidEmbedding,
                  "token row count differs from role count", seq_id_);
    }
    if (tokens_.rows() > 0 && tokens_.cols() != pooled_.size()) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "token width differs from pooled width", seq_id_);
    }
    int pooling = 0;
    for (auto r : roles_) {
      if (static_cast<std::uint8_t>(r) >= kNumTokenRoles) {
        throw Error(ErrorCode::kInvalidEmbedding, "role out of range",
                    seq_id_);
      }
      pooling += r == TokenRole::kPooling;
    }
    if (pooling > 1) {
      throw Error(ErrorCode::kInvalidEmbedding, "more than one pooling token",
                  seq_id_);
    }
    double n = norm64(std::span<const float>(pooled_));
    if (!(std::abs(n - 1.0) <= kPooledNormTolerance)) {
      throw Error(ErrorCode::kInvalidEmbedding,
                  "pooled vector is not unit norm (" + std::to_string(n) + ")",
                  seq_id_);
    }
  }

  SeqId seq_id() const noexcept { return seq_id_; }
  std::uint16_t layer_id() const noexcept { return layer_id_; }
  std::size_t dim() const noexcept { return pooled_.size(); }
  std::size_t num_tokens() const noexcept { return roles_.size(); }
  std::span<const float> pooled() const noexcept { return pooled_; }
  const Matrix& tokens() const noexcept { return tokens_; }
  std::span<const TokenRole> roles() const noexcept { return roles_; }

  std::optional<std::size_t> pooling_index() const {
    for (std::size_t i = 0; i < roles_.size(); ++i) {
      if (roles_[i] == TokenRole::kPooling) return i;
    }
    return std::nullopt;
  }

  friend bool operator==(const SequenceEmbedding&,
                         const SequenceEmbedding&) = default;

 private:
  SeqId seq_id_;
  std::uint16_t layer_id_;
  std::vector<float> pooled_;
  Matrix tokens_;
  std::vector<TokenRole> roles_;
};

enum class ScoreMode { kSingle, kLate, kHybrid };

inline std::string_view score_mode_name(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::kSingle: return "single";
    case ScoreMode::kLate: return "late";
    case ScoreMode::kHybrid: return "hybrid";
  }
  return "unknown";
}

inline std::optional<ScoreMode> parse_score_mode(std::string_view name) {
  if (name == "single") return ScoreMode::kSingle;
  if (name == "late") return ScoreMode::kLate;
  if (name == "hybrid") return ScoreMode::kHybrid;
  return std::nullopt;
}

struct ScoreBreakdown {
  double s_single = 0.0;
  double s_late = 0.0;
  double s_hybrid = 0.0;

  double select(ScoreMode mode) const noexcept {
    switch (mode) {
      case ScoreMode::kSingle: return s_single;
      case ScoreMode::kLate: return s_late;
      case ScoreMode::kHybrid: return s_hybrid;
    }
    return s_hybrid;
  }

  friend bool operator==(const ScoreBreakdown&,
                         const ScoreBreakdown&) = default;
};

struct RankedCandidate {
  SeqId candidate_id = 0;
  ScoreBreakdown scores;

  friend bool operator==(const RankedCandidate&,
                         const RankedCandidate&) = default;
};

// `ranked` is sorted descending by the mode's score, ties by ascending id.
struct RetrievalResult {
  SeqId query_id = 0;
  ScoreMode mode = ScoreMode::kHybrid;
  std::vector<RankedCandidate> ranked;

  friend bool operator==(const RetrievalResult&,
                         const RetrievalResult&) = default;
};

// Indices of tokens whose role is not excluded, ascending. Pooling and
// Padding are always excluded regardless of `exclude_roles`.
inline std::vector<std::size_t> valid_indices(const SequenceEmbedding& emb,
                                              RoleSet exclude_roles) {
  RoleSet exclude = exclude_roles | RoleSet::structural();
  std::vector<std::size_t> out;
  auto roles = emb.roles();
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (!exclude.contains(roles[i])) out.push_back(i);
  }
  return out;
}

// Row-wise L2 normalization. Norms are taken in 64-bit.
template <typename T>
BasicMatrix<T> normalize_rows(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto src = m.row(i);
    double n = norm64(src);
    if (!(n > kZeroNormThreshold)) {
      throw Error(ErrorCode::kZeroNormToken, "token row has zero norm", i);
    }
    auto dst = out.row(i);
    for (std::size_t k = 0; k < src.size(); ++k) {
      dst[k] = static_cast<T>(static_cast<double>(src[k]) / n);
    }
  }
  return out;
}

// Gathers the rows at `indices` and normalizes them.
template <typename T>
BasicMatrix<T> gather_normalized(const Matrix& tokens,
                                 std::span<const std::size_t> indices) {
  BasicMatrix<T> out(indices.size(), tokens.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = tokens.row(indices[r]);
    double n = norm64(src);
    if (!(n > kZeroNormThreshold)) {
      throw Error(ErrorCode::kZeroNormToken, "token row has zero norm",
                  indices[r]);
    }
    auto dst = out.row(r);
    for (std::size_t k = 0; k < src.size(); ++k) {
      dst[k] = static_cast<T>(static_cast<double>(src[k]) / n);
    }
  }
  return out;
}

// Unit-normalizes `v` in 64-bit and returns 32-bit values.
inline std::vector<float> unit_vector(std::span<const double> v) {
  double n = norm64(v);
  if (!(n > kZeroNormThreshold)) {
    throw Error(ErrorCode::kZeroNormToken, "cannot normalize zero vector");
  }
  std::vector<float> out(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    out[k] = static_cast<float>(v[k] / n);
  }
  return out;
}

}  // namespace smart
