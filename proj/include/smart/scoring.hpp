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

// Pooled, MaxSim late-interaction and hybrid scoring.
//
// Two MaxSim paths exist on purpose. maxsim_reference is a plain double loop
// in 64-bit over freshly normalized rows and is the oracle. maxsim_blocked
// tiles the similarity computation into (query block x candidate block)
// tiles in 32-bit, keeping only a running maximum per query token, and is
// what corpus scoring uses. Tests hold the two within 1e-5 of each other.

#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smart/core_types.hpp"
#include "smart/error.hpp"
#include "smart/matrix.hpp"
#include "smart/parallel.hpp"

namespace smart {

struct BlockShape {
  std::size_t query_rows = 32;
  std::size_t candidate_rows = 128;
};

struct ScoringConfig {
  ScoreMode mode = ScoreMode::kHybrid;
  RoleSet query_exclude_roles = RoleSet::structural();
  RoleSet candidate_exclude_roles = RoleSet::structural();
  // Ablation knob only; unit weighting is the default everywhere.
  double hybrid_weight = 1.0;
  BlockShape block;
};

// Maps the raw valid token rows of one sequence to unit-norm readout rows.
// The default readout is plain row normalization; the adapter supplies a
// learned one.
using TokenReadout = std::function<Matrix(const Matrix& raw_valid_rows)>;

// A sequence ready for repeated scoring: pooled vector plus the normalized
// (or adapted) valid token rows and their original positions.
struct PreparedEmbedding {
  SeqId id = 0;
  std::vector<float> pooled;
  Matrix tokens;
  std::vector<std::size_t> token_index;
  bool has_tokens = false;
};

inline PreparedEmbedding prepare(const SequenceEmbedding& emb,
                                 RoleSet exclude_roles, bool with_tokens,
                                 const TokenReadout* readout = nullptr) {
  PreparedEmbedding p;
  p.id = emb.seq_id();
  p.pooled.assign(emb.pooled().begin(), emb.pooled().end());
  if (!with_tokens) return p;
  p.has_tokens = true;
  p.token_index = valid_indices(emb, exclude_roles);
  if (readout == nullptr) {
    p.tokens = gather_normalized<float>(emb.tokens(), p.token_index);
  } else {
    Matrix raw(p.token_index.size(), emb.dim());
    for (std::size_t r = 0; r < p.token_index.size(); ++r) {
      auto src = emb.tokens().row(p.token_index[r]);
      std::copy(src.begin(), src.end(), raw.row(r).begin());
    }
    p.tokens = (*readout)(raw);
  }
  return p;
}

namespace detail {

inline void check_dims(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " +
                    std::to_string(b));
  }
}

inline void check_nonempty(std::size_t q_rows, std::size_t c_rows) {
  if (q_rows == 0) {
    throw Error(ErrorCode::kEmptyQueryTokens, "query has no valid tokens");
  }
  if (c_rows == 0) {
    throw Error(ErrorCode::kEmptyCandidateTokens,
                "candidate has no valid tokens");
  }
}

// Fixed four-lane accumulation so the result does not depend on how the
// compiler chooses to vectorize.
inline float dot32(const float* a, const float* b, std::size_t n) {
  float s0 = 0.f, s1 = 0.f, s2 = 0.f, s3 = 0.f;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

}  // namespace detail

// Blocked MaxSim over already-normalized rows. Never holds more than one
// tile of similarities; per-query maxima in 32-bit, final mean in 64-bit.
inline double maxsim_kernel(const Matrix& q, const Matrix& c,
                            BlockShape shape = {}) {
  detail::check_nonempty(q.rows(), c.rows());
  detail::check_dims(q.cols(), c.cols(), "token width");
  const std::size_t d = q.cols();
  const std::size_t qb = std::max<std::size_t>(1, shape.query_rows);
  const std::size_t cb = std::max<std::size_t>(1, shape.candidate_rows);
  std::vector<float> best(q.rows(), -std::numeric_limits<float>::infinity());

  for (std::size_t i0 = 0; i0 < q.rows(); i0 += qb) {
    const std::size_t i1 = std::min(q.rows(), i0 + qb);
    for (std::size_t j0 = 0; j0 < c.rows(); j0 += cb) {
      const std::size_t j1 = std::min(c.rows(), j0 + cb);
      for (std::size_t i = i0; i < i1; ++i) {
        const float* qi = q.row(i).data();
        float m = best[i];
        for (std::size_t j = j0; j < j1; ++j) {
          float s = detail::dot32(qi, c.row(j).data(), d);
          if (s > m) m = s;
        }
        best[i] = m;
      }
    }
  }
  double sum = 0.0;
  for (float b : best) sum += b;
  return sum / static_cast<double>(best.size());
}

// Oracle over already-normalized 64-bit rows.
inline double maxsim_reference_normalized(const MatrixD& q, const MatrixD& c) {
  detail::check_nonempty(q.rows(), c.rows());
  detail::check_dims(q.cols(), c.cols(), "token width");
  double sum = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q.cols(); ++k) s += q(i, k) * c(j, k);
      if (s > best) best = s;
    }
    sum += best;
  }
  return sum / static_cast<double>(q.rows());
}

inline double pooled_score(const SequenceEmbedding& q,
                           const SequenceEmbedding& c) {
  detail::check_dims(q.dim(), c.dim(), "pooled width");
  return dot64(q.pooled(), c.pooled());
}

inline double maxsim_reference(const SequenceEmbedding& q,
                               const SequenceEmbedding& c,
                               const ScoringConfig& cfg) {
  detail::check_dims(q.dim(), c.dim(), "embedding width");
  auto qi = valid_indices(q, cfg.query_exclude_roles);
  auto ci = valid_indices(c, cfg.candidate_exclude_roles);
  detail::check_nonempty(qi.size(), ci.size());
  return maxsim_reference_normalized(gather_normalized<double>(q.tokens(), qi),
                                     gather_normalized<double>(c.tokens(), ci));
}

inline double maxsim_blocked(const SequenceEmbedding& q,
                             const SequenceEmbedding& c,
                             const ScoringConfig& cfg) {
  detail::check_dims(q.dim(), c.dim(), "embedding width");
  auto qp = prepare(q, cfg.query_exclude_roles, true);
  auto cp = prepare(c, cfg.candidate_exclude_roles, true);
  return maxsim_kernel(qp.tokens, cp.tokens, cfg.block);
}

inline ScoreBreakdown combine(double s_single, double s_late,
                              const ScoringConfig& cfg) {
  return {s_single, s_late, s_single + cfg.hybrid_weight * s_late};
}

// Scores a prepared pair. Single mode never touches tokens and reports
// s_late = 0, so pooled-only records can be ranked.
inline ScoreBreakdown score_prepared(const PreparedEmbedding& q,
                                     const PreparedEmbedding& c,
                                     const ScoringConfig& cfg) {
  detail::check_dims(q.pooled.size(), c.pooled.size(), "pooled width");
  double s_single = dot64(std::span<const float>(q.pooled),
                          std::span<const float>(c.pooled));
  if (cfg.mode == ScoreMode::kSingle) return combine(s_single, 0.0, cfg);
  return combine(s_single, maxsim_kernel(q.tokens, c.tokens, cfg.block), cfg);
}

inline ScoreBreakdown hybrid_score(const SequenceEmbedding& q,
                                   const SequenceEmbedding& c,
                                   const ScoringConfig& cfg) {
  double s_single = pooled_score(q, c);
  double s_late = maxsim_blocked(q, c, cfg);
  return combine(s_single, s_late, cfg);
}

// True when `a` ranks strictly before `b` under `mode`.
inline bool ranks_before(const RankedCandidate& a, const RankedCandidate& b,
                         ScoreMode mode) {
  double sa = a.scores.select(mode), sb = b.scores.select(mode);
  if (sa != sb) return sa > sb;
  return a.candidate_id < b.candidate_id;
}

// Corpus prepared once for a given config and reused across queries.
class PreparedCorpus {
 public:
  PreparedCorpus(std::span<const SequenceEmbedding> corpus,
                 const ScoringConfig& cfg, std::size_t workers = 1,
                 const TokenReadout* readout = nullptr) {
    if (corpus.empty()) {
      throw Error(ErrorCode::kEmptyCorpus, "corpus is empty");
    }
    const std::size_t dim = corpus.front().dim();
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus[i].dim() != dim) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "corpus record width differs", i);
      }
    }
    bool with_tokens = cfg.mode != ScoreMode::kSingle;
    items_.resize(corpus.size());
    parallel_for(corpus.size(), workers, [&](std::size_t i) {
      items_[i] = prepare(corpus[i], cfg.candidate_exclude_roles, with_tokens,
                          readout);
    });
  }

  std::size_t size() const noexcept { return items_.size(); }
  const PreparedEmbedding& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::vector<PreparedEmbedding> items_;
};

// Top-k over a prepared corpus. Each worker keeps a bounded heap over a
// contiguous slice; the merge sorts the union under the global order, so the
// output does not depend on `workers`.
inline RetrievalResult score_corpus(const PreparedEmbedding& query,
                                    const PreparedCorpus& corpus,
                                    const ScoringConfig& cfg, std::size_t k,
                                    std::size_t workers = 1) {
  if (corpus.size() == 0) {
    throw Error(ErrorCode::kEmptyCorpus, "corpus is empty");
  }
  if (k == 0 || k > corpus.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "k must be in [1, corpus size]", k);
  }
  const ScoreMode mode = cfg.mode;
  auto worse = [mode](const RankedCandidate& a, const RankedCandidate& b) {
    return ranks_before(a, b, mode);
  };
  using Heap = std::priority_queue<RankedCandidate,
                                   std::vector<RankedCandidate>,
                                   decltype(worse)>;

  auto chunks = make_chunks(corpus.size(), workers);
  std::vector<std::vector<RankedCandidate>> local(chunks.size());
  run_chunks(chunks, [&](const Chunk& chunk) {
    Heap heap(worse);
    for (std::size_t i = chunk.begin; i < chunk.end; ++i) {
      ScoreBreakdown s;
      try {
        s = score_prepared(query, corpus[i], cfg);
      } catch (const Error& e) {
        throw Error(e.code(),
                    std::string("candidate ") + std::to_string(corpus[i].id) +
                        ": " + e.what(),
                    i);
      }
      RankedCandidate rc{corpus[i].id, s};
      if (heap.size() < k) {
        heap.push(rc);
      } else if (ranks_before(rc, heap.top(), mode)) {
        heap.pop();
        heap.push(rc);
      }
    }
    auto& out = local[chunk.worker];
    out.reserve(heap.size());
    while (!heap.empty()) {
      out.push_back(heap.top());
      heap.pop();
    }
  });

  RetrievalResult result;
  result.query_id = query.id;
  result.mode = mode;
  for (auto& l : local) {
    result.ranked.insert(result.ranked.end(), l.begin(), l.end());
  }
  std::sort(result.ranked.begin(), result.ranked.end(),
            [mode](const RankedCandidate& a, const RankedCandidate& b) {
              return ranks_before(a, b, mode);
            });
  result.ranked.resize(k);
  return result;
}

inline RetrievalResult score_corpus(const SequenceEmbedding& query,
                                    std::span<const SequenceEmbedding> corpus,
                                    const ScoringConfig& cfg, std::size_t k,
                                    std::size_t workers = 1) {
  if (corpus.empty()) {
    throw Error(ErrorCode::kEmptyCorpus, "corpus is empty");
  }
  PreparedCorpus prepared(corpus, cfg, workers);
  auto q = prepare(query, cfg.query_exclude_roles,
                   cfg.mode != ScoreMode::kSingle);
  return score_corpus(q, prepared, cfg, k, workers);
}

// ---------------------------------------------------------------------------
// Match explanations

struct MatchExplanation {
  std::size_t query_index = 0;
  std::size_t best_candidate_index = 0;
  double similarity = 0.0;
  std::vector<std::pair<std::size_t, double>> alternatives;

  friend bool operator==(const MatchExplanation&,
                         const MatchExplanation&) = default;
};

// Per valid query token: the argmax candidate token (lowest index on ties)
// and the top `alternatives_k` candidate tokens by cosine. Indices are
// positions in the original token sequences. Uses the 64-bit reference
// arithmetic so the mean of `similarity` reproduces maxsim_reference.
inline std::vector<MatchExplanation> explain_matches(
    const SequenceEmbedding& q, const SequenceEmbedding& c,
    const ScoringConfig& cfg, std::size_t alternatives_k) {
  detail::check_dims(q.dim(), c.dim(), "embedding width");
  auto qi = valid_indices(q, cfg.query_exclude_roles);
  auto ci = valid_indices(c, cfg.candidate_exclude_roles);
  detail::check_nonempty(qi.size(), ci.size());
  auto qn = gather_normalized<double>(q.tokens(), qi);
  auto cn = gather_normalized<double>(c.tokens(), ci);

  std::vector<MatchExplanation> out;
  out.reserve(qi.size());
  std::vector<std::pair<std::size_t, double>> sims(ci.size());
  for (std::size_t i = 0; i < qi.size(); ++i) {
    for (std::size_t j = 0; j < ci.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < qn.cols(); ++k) s += qn(i, k) * cn(j, k);
      sims[j] = {ci[j], s};
    }
    auto order = sims;
    std::stable_sort(order.begin(), order.end(),
                     [](const auto& a, const auto& b) {
                       return a.second > b.second;
                     });
    MatchExplanation m;
    m.query_index = qi[i];
    m.best_candidate_index = order.front().first;
    m.similarity = order.front().second;
    order.resize(std::min(alternatives_k, order.size()));
    m.alternatives = std::move(order);
    out.push_back(std::move(m));
  }
  return out;
}

inline nlohmann::json to_json(const MatchExplanation& m) {
  nlohmann::json alts = nlohmann::json::array();
  for (const auto& [j, s] : m.alternatives) alts.push_back({j, s});
  return {{"query_index", m.query_index},
          {"best_index", m.best_candidate_index},
          {"similarity", m.similarity},
          {"alternatives", alts}};
}

inline MatchExplanation match_explanation_from_json(const nlohmann::json& j) {
  try {
    MatchExplanation m;
    m.query_index = j.at("query_index").get<std::size_t>();
    m.best_candidate_index = j.at("best_index").get<std::size_t>();
    m.similarity = j.at("similarity").get<double>();
    for (const auto& a : j.at("alternatives")) {
      m.alternatives.emplace_back(a.at(0).get<std::size_t>(),
                                  a.at(1).get<double>());
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

// One JSON object per line.
inline std::string write_explanations(std::span<const MatchExplanation> ms) {
  std::string out;
  for (const auto& m : ms) {
    out += to_json(m).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Retrieval records

inline nlohmann::json to_json(const RetrievalResult& r) {
  nlohmann::json ranked = nlohmann::json::array();
  for (const auto& c : r.ranked) {
    ranked.push_back({{"candidate_id", c.candidate_id},
                      {"s_single", c.scores.s_single},
                      {"s_late", c.scores.s_late},
                      {"s_hybrid", c.scores.s_hybrid}});
  }
  return {{"query_id", r.query_id},
          {"mode", score_mode_name(r.mode)},
          {"ranked", ranked}};
}

inline RetrievalResult retrieval_result_from_json(const nlohmann::json& j) {
  try {
    RetrievalResult r;
    r.query_id = j.at("query_id").get<SeqId>();
    auto mode = parse_score_mode(j.at("mode").get<std::string>());
    if (!mode) throw Error(ErrorCode::kParseError, "unknown mode");
    r.mode = *mode;
    for (const auto& c : j.at("ranked")) {
      r.ranked.push_back({c.at("candidate_id").get<SeqId>(),
                          {c.at("s_single").get<double>(),
                           c.at("s_late").get<double>(),
                           c.at("s_hybrid").get<double>()}});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

}  // namespace smart
