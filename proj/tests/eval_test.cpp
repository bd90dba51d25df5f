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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "smart/eval.hpp"
#include "smart/toy_bench.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace smart {
namespace {

using testing::oracle_ndcg;
using testing::oracle_recall;

TEST(Metrics, HandExamples) {
  std::vector<SeqId> ranked{3, 1, 2};
  std::set<SeqId> rel{1};
  EXPECT_EQ(recall_at_k(ranked, rel, 1), 0.0);
  EXPECT_EQ(recall_at_k(ranked, rel, 2), 1.0);
  std::map<SeqId, std::uint32_t> gains{{1, 1}};
  EXPECT_NEAR(ndcg_at_k(ranked, gains, 2), 1.0 / std::log2(3.0), 1e-12);
  EXPECT_EQ(ndcg_at_k(ranked, gains, 1), 0.0);
  std::vector<SeqId> perfect{1, 3, 2};
  EXPECT_EQ(ndcg_at_k(perfect, gains, 5), 1.0);
}

TEST(Metrics, RecallDenominatorIsCapped) {
  std::vector<SeqId> ranked{1, 2, 3, 4};
  std::set<SeqId> rel{1, 2, 3};
  EXPECT_EQ(recall_at_k(ranked, rel, 1), 1.0);
  EXPECT_EQ(recall_at_k(ranked, rel, 2), 1.0);
  EXPECT_EQ(recall_at_k(ranked, rel, 10), 1.0);
}

TEST(Metrics, MatchOraclesOnRandomRankings) {
  Rng rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<SeqId> ranked(n);
    std::iota(ranked.begin(), ranked.end(), 100);
    rng.shuffle(ranked);
    std::map<SeqId, std::uint32_t> gains;
    std::set<SeqId> rel;
    const std::size_t nrel = 1 + rng.below(n);
    for (std::size_t i = 0; i < nrel; ++i) {
      SeqId id = 100 + rng.below(n + 5);  // may fall outside the ranking
      gains[id] = 1 + static_cast<std::uint32_t>(rng.below(3));
      rel.insert(id);
    }
    const std::size_t k = 1 + rng.below(n + 3);
    EXPECT_NEAR(recall_at_k(ranked, rel, k), oracle_recall(ranked, rel, k), 1e-9);
    EXPECT_NEAR(ndcg_at_k(ranked, gains, k), oracle_ndcg(ranked, gains, k), 1e-9);
    double r = recall_at_k(ranked, rel, k), g = ndcg_at_k(ranked, gains, k);
    EXPECT_TRUE(r >= 0 && r <= 1 && g >= 0 && g <= 1);
  }
}

TEST(Metrics, Errors) {
  std::vector<SeqId> ranked{1};
  EXPECT_THROW(recall_at_k(ranked, {}, 1), Error);
  EXPECT_THROW(recall_at_k(ranked, {1}, 0), Error);
  EXPECT_THROW(ndcg_at_k(ranked, {{1, 0}}, 1), Error);
}

TEST(Metrics, Parse) {
  EXPECT_EQ(parse_metric("recall@1").name(), "recall@1");
  EXPECT_EQ(parse_metric("ndcg@10").k, 10u);
  for (const char* bad : {"recall", "mrr@3", "ndcg@0", "ndcg@x", "ndcg@3x"}) {
    EXPECT_THROW(parse_metric(bad), Error) << bad;
  }
}

TEST(Qrels, ParseAndWrite) {
  std::istringstream in("# header\n1 10\n1 11 2\n\n2 20 1   \n2 21 0\n");
  auto q = parse_qrels(in);
  EXPECT_EQ(q.size(), 2u);
  EXPECT_EQ(q.gains(1).at(11), 2u);
  EXPECT_EQ(q.relevant(2), (std::set<SeqId>{20}));
  std::istringstream again(write_qrels(q));
  EXPECT_EQ(parse_qrels(again).all(), q.all());
}

TEST(Qrels, ParseErrors) {
  for (const char* bad : {"1\n", "1 2 x\n", "1 2 3 4\n", "1 2 -1\n", "1 2 0\n"}) {
    std::istringstream in(bad);
    EXPECT_THROW(parse_qrels(in), Error) << bad;
  }
  std::istringstream in("1 2\n3\n");
  try {
    parse_qrels(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
    EXPECT_EQ(e.index(), 2u);
  }
}

struct SmallCorpus {
  std::vector<SequenceEmbedding> corpus, queries;
  Qrels qrels;
};

SmallCorpus small_corpus(std::uint64_t seed, std::size_t nc = 30, std::size_t nq = 8) {
  Rng rng(seed);
  SmallCorpus s;
  for (std::size_t i = 0; i < nc; ++i) {
    s.corpus.push_back(testing::random_embedding(rng, 1000 + i, 1 + rng.below(6), 16));
  }
  for (std::size_t q = 0; q < nq; ++q) {
    s.queries.push_back(testing::random_embedding(rng, q, 1 + rng.below(4), 16));
    s.qrels.add(q, 1000 + rng.below(nc), 1);
    s.qrels.add(q, 1000 + rng.below(nc), 2);
  }
  return s;
}

TEST(RunEval, MatchesManualEvaluation) {
  auto s = small_corpus(1);
  std::vector<Metric> metrics{parse_metric("recall@5"), parse_metric("ndcg@10")};
  for (auto mode : {ScoreMode::kSingle, ScoreMode::kLate, ScoreMode::kHybrid}) {
    ScoringConfig cfg;
    cfg.mode = mode;
    auto report = run_eval(s.corpus, s.queries, s.qrels, cfg, metrics, 2);
    ASSERT_EQ(report.per_query.size(), s.queries.size());
    std::vector<double> macro(2, 0.0);
    for (std::size_t i = 0; i < s.queries.size(); ++i) {
      // full brute-force ranking with the 64-bit reference
      std::vector<std::pair<double, SeqId>> scored;
      for (const auto& c : s.corpus) {
        auto b = hybrid_score(s.queries[i], c, cfg);
        scored.push_back({b.select(mode), c.seq_id()});
      }
      std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      std::vector<SeqId> ranked;
      for (auto& p : scored) ranked.push_back(p.second);
      double r = oracle_recall(ranked, s.qrels.relevant(i), 5);
      double n = oracle_ndcg(ranked, s.qrels.gains(i), 10);
      EXPECT_NEAR(report.per_query[i].values[0], r, 1e-9);
      EXPECT_NEAR(report.per_query[i].values[1], n, 1e-9);
      macro[0] += r / s.queries.size();
      macro[1] += n / s.queries.size();
    }
    EXPECT_NEAR(report.macro[0], macro[0], 1e-9);
    EXPECT_NEAR(report.macro[1], macro[1], 1e-9);
  }
}

TEST(RunEval, WorkerInvariant) {
  auto s = small_corpus(2);
  std::vector<Metric> metrics{parse_metric("ndcg@5")};
  ScoringConfig cfg;
  auto a = run_eval(s.corpus, s.queries, s.qrels, cfg, metrics, 1);
  auto b = run_eval(s.corpus, s.queries, s.qrels, cfg, metrics, 7);
  EXPECT_EQ(a.format_records(), b.format_records());
}

TEST(RunEval, MissingQrelsAborts) {
  auto s = small_corpus(3);
  Qrels partial;
  partial.add(0, 1000);
  try {
    run_eval(s.corpus, s.queries, partial, {}, {parse_metric("recall@1")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingQrels);
    EXPECT_EQ(e.index(), 1u);
  }
}

TEST(RunEval, OutputFormats) {
  auto s = small_corpus(4, 10, 3);
  auto report = run_eval(s.corpus, s.queries, s.qrels, {}, {parse_metric("recall@1")});
  std::istringstream lines(report.format_records());
  std::string line;
  std::size_t count = 0;
  nlohmann::json last;
  while (std::getline(lines, line)) {
    last = nlohmann::json::parse(line);
    ++count;
  }
  EXPECT_EQ(count, 4u);
  EXPECT_EQ(last.at("summary"), "macro");
  EXPECT_EQ(last.at("mode"), "hybrid");
  EXPECT_NE(report.format_table().find("mean"), std::string::npos);
}

TEST(Layers, ParseAndName) {
  EXPECT_EQ(parse_layer("last"), kLastLayer);
  EXPECT_EQ(parse_layer("12"), 12);
  EXPECT_THROW(parse_layer("-1"), Error);
  EXPECT_THROW(parse_layer("x"), Error);
  EXPECT_EQ(layer_name(kLastLayer), "last");
}

struct Layered {
  LayeredBenchmark bench;
  Qrels qrels;
};

Layered layered(std::size_t pairs, std::size_t bindings, std::uint64_t seed) {
  auto spec = generate_benchmark(pairs, bindings, seed);
  auto cb = SyntheticCodebook::for_benchmark(spec, 32, seed);
  Layered l{encode_layered_benchmark(spec, cb, seed + 1), {}};
  for (auto [q, c] : l.bench.positives) l.qrels.add(q, c);
  return l;
}

std::vector<SequenceEmbedding> at_layer(const std::vector<SequenceEmbedding>& all,
                                        std::uint16_t layer) {
  std::vector<SequenceEmbedding> out;
  for (const auto& e : all) if (e.layer_id() == layer) out.push_back(e);
  return out;
}

TEST(LayerSweep, LastLastRowEqualsRunEval) {
  auto l = layered(6, 5, 3);
  std::vector<Metric> metrics{parse_metric("recall@1"), parse_metric("ndcg@5")};
  for (auto mode : {ScoreMode::kLate, ScoreMode::kHybrid}) {
    LayerSweepConfig sweep;
    sweep.mode = mode;
    auto rows = layer_sweep(l.bench.documents, l.bench.queries, l.qrels, sweep, metrics);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].pool_layer, 1);
    EXPECT_EQ(rows[0].token_layer, 1);
    ScoringConfig cfg;
    cfg.mode = mode;
    auto plain = run_eval(at_layer(l.bench.documents, 1), at_layer(l.bench.queries, 1),
                          l.qrels, cfg, metrics);
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      EXPECT_NEAR(rows[0].report.macro[m], plain.macro[m], 1e-9);
    }
  }
}

TEST(LayerSweep, NoiseLayerIsNoBetter) {
  auto l = layered(10, 8, 5);
  LayerSweepConfig sweep;
  sweep.mode = ScoreMode::kLate;
  sweep.token_layers = {0, kLastLayer};
  auto rows = layer_sweep(l.bench.documents, l.bench.queries, l.qrels, sweep,
                          {parse_metric("recall@1")});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].token_layer, 0);
  EXPECT_LE(rows[0].report.macro[0], rows[1].report.macro[0]);
  EXPECT_GT(rows[1].report.macro[0], 0.5);
  EXPECT_NE(format_sweep_table(rows).find("recall@1"), std::string::npos);
  EXPECT_NE(format_sweep_records(rows).find("\"token_layer\":0"), std::string::npos);
}

TEST(LayerSweep, MissingLayer) {
  auto l = layered(3, 3, 1);
  LayerSweepConfig sweep;
  sweep.token_layers = {4};
  try {
    layer_sweep(l.bench.documents, l.bench.queries, l.qrels, sweep,
                {parse_metric("recall@1")});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingLayer);
    EXPECT_EQ(e.index(), 4u);
  }
}

}  // namespace
}  // namespace smart
