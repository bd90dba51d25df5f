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

#include <gtest/gtest.h>

#include <cmath>

#include "smart/core_types.hpp"
#include "test_util.hpp"

namespace smart {
namespace {

SequenceEmbedding with_roles(std::vector<TokenRole> roles) {
  const std::size_t n = roles.size();
  Matrix tokens(n, 2, 1.0f);
  return SequenceEmbedding(1, 0, {1.f, 0.f}, std::move(tokens),
                           std::move(roles));
}

TEST(ValidIndices, DropsPoolingAndPadding) {
  auto e = with_roles({TokenRole::kText, TokenRole::kText, TokenRole::kPooling});
  EXPECT_EQ(valid_indices(e, RoleSet::structural()),
            (std::vector<std::size_t>{0, 1}));
}

TEST(ValidIndices, VisionMaskForComposedQueries) {
  auto e =
      with_roles({TokenRole::kVision, TokenRole::kText, TokenRole::kPooling});
  EXPECT_EQ(valid_indices(e, RoleSet::structural().with(TokenRole::kVision)),
            (std::vector<std::size_t>{1}));
}

TEST(ValidIndices, PoolingOnlyGivesEmpty) {
  auto e = with_roles({TokenRole::kPooling});
  EXPECT_TRUE(valid_indices(e, RoleSet::structural()).empty());
}

TEST(ValidIndices, StructuralRolesAlwaysExcluded) {
  auto e = with_roles({TokenRole::kPadding, TokenRole::kSpecial,
                       TokenRole::kPooling, TokenRole::kText});
  EXPECT_EQ(valid_indices(e, RoleSet{}), (std::vector<std::size_t>{1, 3}));
}

TEST(ValidIndices, IdempotentAndOrderPreserving) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 1 + rng.below(30);
    std::vector<TokenRole> roles;
    for (std::size_t i = 0; i < n; ++i) {
      auto r = static_cast<TokenRole>(rng.below(kNumTokenRoles));
      if (r == TokenRole::kPooling) r = TokenRole::kText;
      roles.push_back(r);
    }
    auto e = with_roles(roles);
    RoleSet exclude = RoleSet::structural();
    if (rng.below(2)) exclude.insert(TokenRole::kVision);
    auto idx = valid_indices(e, exclude);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    // Restricting to the selected tokens selects all of them again.
    std::vector<TokenRole> kept;
    for (auto i : idx) kept.push_back(roles[i]);
    if (kept.empty()) continue;
    auto again = valid_indices(with_roles(kept), exclude);
    EXPECT_EQ(again.size(), kept.size());
  }
}

TEST(NormalizeRows, ThreeFourFive) {
  auto out = normalize_rows(Matrix::from_rows({{3.f, 4.f}}));
  EXPECT_NEAR(out(0, 0), 0.6f, 1e-6);
  EXPECT_NEAR(out(0, 1), 0.8f, 1e-6);
}

TEST(NormalizeRows, AxisVectors) {
  auto out = normalize_rows(Matrix::from_rows({{1.f, 0.f}, {0.f, 2.f}}));
  EXPECT_EQ(out, Matrix::from_rows({{1.f, 0.f}, {0.f, 1.f}}));
}

TEST(NormalizeRows, ZeroRowReportsIndex) {
  try {
    normalize_rows(Matrix::from_rows({{1.f, 1.f}, {0.f, 0.f}}));
    FAIL() << "expected ZeroNormToken";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroNormToken);
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(NormalizeRows, IdempotentAndUnitNorm) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto m = testing::random_matrix(rng, 1 + rng.below(20), 1 + rng.below(64),
                                    rng.uniform(0.01, 100.0));
    auto once = normalize_rows(m);
    auto twice = normalize_rows(once);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      EXPECT_NEAR(norm64(once.row(i)), 1.0, 1e-6);
      for (std::size_t k = 0; k < m.cols(); ++k) {
        EXPECT_NEAR(once(i, k), twice(i, k), 1e-6);
        // direction preserved
        EXPECT_GE(static_cast<double>(once(i, k)) * m(i, k), 0.0);
      }
    }
  }
}

TEST(SequenceEmbedding, RejectsNonUnitPooled) {
  EXPECT_THROW(SequenceEmbedding(0, 0, {2.f, 0.f}, Matrix(), {}), Error);
}

TEST(SequenceEmbedding, RejectsRoleCountMismatch) {
  EXPECT_THROW(SequenceEmbedding(0, 0, {1.f, 0.f}, Matrix(2, 2, 1.f),
                                 {TokenRole::kText}),
               Error);
}

TEST(SequenceEmbedding, RejectsTwoPoolingTokens) {
  EXPECT_THROW(with_roles({TokenRole::kPooling, TokenRole::kPooling}), Error);
}

TEST(SequenceEmbedding, RejectsWidthMismatch) {
  EXPECT_THROW(SequenceEmbedding(0, 0, {1.f, 0.f}, Matrix(1, 3, 1.f),
                                 {TokenRole::kText}),
               Error);
}

TEST(SequenceEmbedding, PoolingIndex) {
  auto e = with_roles({TokenRole::kText, TokenRole::kPooling});
  EXPECT_EQ(e.pooling_index(), 1u);
  EXPECT_FALSE(with_roles({TokenRole::kText}).pooling_index().has_value());
}

TEST(ScoreBreakdown, SelectsByMode) {
  ScoreBreakdown s{0.6, 0.7, 0.6 + 0.7};
  EXPECT_EQ(s.select(ScoreMode::kSingle), 0.6);
  EXPECT_EQ(s.select(ScoreMode::kLate), 0.7);
  EXPECT_EQ(s.select(ScoreMode::kHybrid), 0.6 + 0.7);
}

TEST(Names, RoundTrip) {
  for (std::uint8_t r = 0; r < kNumTokenRoles; ++r) {
    auto role = static_cast<TokenRole>(r);
    EXPECT_EQ(parse_token_role(token_role_name(role)), role);
  }
  for (auto m : {ScoreMode::kSingle, ScoreMode::kLate, ScoreMode::kHybrid}) {
    EXPECT_EQ(parse_score_mode(score_mode_name(m)), m);
  }
  EXPECT_FALSE(parse_score_mode("both").has_value());
}

}  // namespace
}  // namespace smart
