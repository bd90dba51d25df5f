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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "smart/core_types.hpp"
#include "smart/error.hpp"
#include "smart/parallel.hpp"
#include "smart/scoring.hpp"

namespace smart {

// query_id -> (candidate_id -> gain). Gain 0 entries are kept but are not
// relevant.
class Qrels {
 public:
  void add(SeqId query, SeqId candidate, std::uint32_t gain = 1) {
    judgments_[query][candidate] = gain;
  }

  bool contains(SeqId query) const { return judgments_.count(query) != 0; }

  const std::map<SeqId, std::uint32_t>& gains(SeqId query) const {
    auto it = judgments_.find(query);
    if (it == judgments_.end()) {
      throw Error(ErrorCode::kMissingQrels, "no judgments for query", query);
    }
    return it->second;
  }

  std::set<SeqId> relevant(SeqId query) const {
    std::set<SeqId> out;
    for (const auto& [cand, gain] : gains(query)) {
      if (gain > 0) out.insert(cand);
    }
    return out;
  }

  std::size_t size() const { return judgments_.size(); }
  const std::map<SeqId, std::map<SeqId, std::uint32_t>>& all() const {
    return judgments_;
  }

  // Throws EmptyRelevantSet for the first query without a positive gain.
  void validate() const {
    for (const auto& [q, g] : judgments_) {
      bool any = std::any_of(g.begin(), g.end(),
                             [](const auto& kv) { return kv.second > 0; });
      if (!any) {
        throw Error(ErrorCode::kEmptyRelevantSet,
                    "query has no relevant candidate", q);
      }
    }
  }

 private:
  std::map<SeqId, std::map<SeqId, std::uint32_t>> judgments_;
};

// `query_id candidate_id [gain]` per line, whitespace separated; blank lines
// and lines starting with '#' are skipped.
inline Qrels parse_qrels(std::istream& in) {
  Qrels qrels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::uint64_t q = 0, c = 0;
    long long gain = 1;
    if (!(ls >> q >> c)) {
      throw Error(ErrorCode::kParseError, "expected 'query candidate [gain]'",
                  lineno);
    }
    if (!(ls >> gain)) {
      if (!ls.eof()) {
        throw Error(ErrorCode::kParseError, "bad gain", lineno);
      }
      gain = 1;
    }
    std::string rest;
    if (ls >> rest) {
      throw Error(ErrorCode::kParseError, "trailing fields", lineno);
    }
    if (gain < 0) throw Error(ErrorCode::kParseError, "negative gain", lineno);
    qrels.add(q, c, static_cast<std::uint32_t>(gain));
  }
  qrels.validate();
  return qrels;
}

inline std::string write_qrels(const Qrels& qrels) {
  std::ostringstream out;
  for (const auto& [q, g] : qrels.all()) {
    for (const auto& [c, gain] : g) out << q << ' ' << c << ' ' << gain << '\n';
  }
  return out.str();
}

// |top-k  intersect  relevant| / min(k, |relevant|)
inline double recall_at_k(std::span<const SeqId> ranked,
                          const std::set<SeqId>& relevant, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (relevant.empty()) {
    throw Error(ErrorCode::kEmptyRelevantSet, "no relevant candidates");
  }
  std::size_t hits = 0;
  const std::size_t depth = std::min(k, ranked.size());
  for (std::size_t i = 0; i < depth; ++i) hits += relevant.count(ranked[i]);
  double r = static_cast<double>(hits) /
             static_cast<double>(std::min(k, relevant.size()));
  return std::clamp(r, 0.0, 1.0);
}

// Linear gains with a log2(rank + 1) discount.
inline double ndcg_at_k(std::span<const SeqId> ranked,
                        const std::map<SeqId, std::uint32_t>& gains,
                        std::size_t k) {
  if (k == 0) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::vector<double> ideal;
  for (const auto& [c, g] : gains) {
    if (g > 0) ideal.push_back(static_cast<double>(g));
  }
  if (ideal.empty()) {
    throw Error(ErrorCode::kEmptyRelevantSet, "no relevant candidates");
  }
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double dcg = 0.0, idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    auto it = gains.find(ranked[i]);
    if (it != gains.end()) {
      dcg += static_cast<double>(it->second) / std::log2(static_cast<double>(i) + 2.0);
    }
  }
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  return std::clamp(dcg / idcg, 0.0, 1.0);
}

struct Metric {
  enum class Kind { kRecall, kNdcg };
  Kind kind = Kind::kRecall;
  std::size_t k = 1;

  std::string name() const {
    return (kind == Kind::kRecall ? "recall@" : "ndcg@") + std::to_string(k);
  }

  double evaluate(std::span<const SeqId> ranked, const Qrels& qrels,
                  SeqId query) const {
    return kind == Kind::kRecall ? recall_at_k(ranked, qrels.relevant(query), k)
                                 : ndcg_at_k(ranked, qrels.gains(query), k);
  }

  friend bool operator==(const Metric&, const Metric&) = default;
};

// "recall@1", "ndcg@5"
inline Metric parse_metric(const std::string& text) {
  auto at = text.find('@');
  if (at == std::string::npos) {
    throw Error(ErrorCode::kParseError, "metric must look like name@k: " + text);
  }
  Metric m;
  std::string name = text.substr(0, at);
  if (name == "recall") {
    m.kind = Metric::Kind::kRecall;
  } else if (name == "ndcg") {
    m.kind = Metric::Kind::kNdcg;
  } else {
    throw Error(ErrorCode::kParseError, "unknown metric: " + name);
  }
  try {
    std::size_t used = 0;
    long long k = std::stoll(text.substr(at + 1), &used);
    if (used != text.size() - at - 1 || k < 1) throw std::invalid_argument("k");
    m.k = static_cast<std::size_t>(k);
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::kParseError, "bad cutoff in metric: " + text);
  }
  return m;
}

struct QueryEval {
  SeqId query_id = 0;
  std::vector<double> values;
};

struct EvalReport {
  ScoreMode mode = ScoreMode::kHybrid;
  std::vector<Metric> metrics;
  std::vector<QueryEval> per_query;  // in input query order
  std::vector<double> macro;

  std::string format_table() const {
    std::ostringstream out;
    out << std::left << std::setw(12) << "query";
    for (const auto& m : metrics) out << std::right << std::setw(12) << m.name();
    out << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& q : per_query) {
      out << std::left << std::setw(12) << q.query_id;
      for (double v : q.values) out << std::right << std::setw(12) << v;
      out << '\n';
    }
    out << std::left << std::setw(12) << "mean";
    for (double v : macro) out << std::right << std::setw(12) << v;
    out << '\n';
    return out.str();
  }

  std::string format_records() const {
    std::string out;
    auto record = [&](nlohmann::json j, const std::vector<double>& values) {
      for (std::size_t i = 0; i < metrics.size(); ++i) {
        j[metrics[i].name()] = values[i];
      }
      out += j.dump();
      out += '\n';
    };
    for (const auto& q : per_query) {
      record({{"query_id", q.query_id}, {"mode", score_mode_name(mode)}},
             q.values);
    }
    record({{"summary", "macro"},
            {"mode", score_mode_name(mode)},
            {"queries", per_query.size()}},
           macro);
    return out;
  }
};

inline std::size_t ranking_depth(std::span<const Metric> metrics,
                                 std::size_t corpus_size) {
  std::size_t depth = 1;
  for (const auto& m : metrics) depth = std::max(depth, m.k);
  return std::min(depth, corpus_size);
}

// Scores every query against the corpus and evaluates `metrics`. Any
// missing judgment or scoring failure aborts the whole run.
inline EvalReport run_eval(std::span<const SequenceEmbedding> corpus,
                           std::span<const SequenceEmbedding> queries,
                           const Qrels& qrels, const ScoringConfig& cfg,
                           const std::vector<Metric>& metrics,
                           std::size_t workers = 1,
                           const TokenReadout* readout = nullptr) {
  if (metrics.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no metrics requested");
  }
  for (const auto& q : queries) {
    if (!qrels.contains(q.seq_id())) {
      throw Error(ErrorCode::kMissingQrels, "query has no qrels", q.seq_id());
    }
    if (qrels.relevant(q.seq_id()).empty()) {
      throw Error(ErrorCode::kEmptyRelevantSet,
                  "query has no relevant candidate", q.seq_id());
    }
  }
  PreparedCorpus prepared(corpus, cfg, workers, readout);
  const std::size_t depth = ranking_depth(metrics, prepared.size());
  const bool tokens = cfg.mode != ScoreMode::kSingle;

  EvalReport report;
  report.mode = cfg.mode;
  report.metrics = metrics;
  report.per_query.resize(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    const auto& q = queries[i];
    auto pq = prepare(q, cfg.query_exclude_roles, tokens, readout);
    RetrievalResult r;
    try {
      r = score_corpus(pq, prepared, cfg, depth, 1);
    } catch (const Error& e) {
      throw Error(e.code(),
                  "query " + std::to_string(q.seq_id()) + ": " + e.what(),
                  q.seq_id());
    }
    std::vector<SeqId> ranked;
    for (const auto& c : r.ranked) ranked.push_back(c.candidate_id);
    QueryEval qe{q.seq_id(), {}};
    for (const auto& m : metrics) {
      qe.values.push_back(m.evaluate(ranked, qrels, q.seq_id()));
    }
    report.per_query[i] = std::move(qe);
  });

  report.macro.assign(metrics.size(), 0.0);
  for (const auto& q : report.per_query) {
    for (std::size_t m = 0; m < metrics.size(); ++m) report.macro[m] += q.values[m];
  }
  if (!report.per_query.empty()) {
    for (auto& v : report.macro) v /= static_cast<double>(report.per_query.size());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Layer sweep

inline constexpr int kLastLayer = -1;

inline std::string layer_name(int layer) {
  return layer == kLastLayer ? "last" : std::to_string(layer);
}

// "last" or a non-negative integer.
inline int parse_layer(const std::string& text) {
  if (text == "last") return kLastLayer;
  try {
    std::size_t used = 0;
    long v = std::stol(text, &used);
    if (used == text.size() && v >= 0 && v <= 0xFFFF) return static_cast<int>(v);
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorCode::kParseError, "bad layer: " + text);
}

struct LayerSweepConfig {
  int pool_layer = kLastLayer;
  std::vector<int> token_layers{kLastLayer};
  ScoreMode mode = ScoreMode::kHybrid;
};

struct LayerSweepRow {
  int pool_layer = 0;   // resolved layer id
  int token_layer = 0;  // resolved layer id
  EvalReport report;
};

// Records of one sequence set spanning several layers, addressable by
// (seq_id, layer_id).
class MultiLayerSet {
 public:
  explicit MultiLayerSet(std::span<const SequenceEmbedding> records)
      : records_(records) {
    for (std::size_t i = 0; i < records.size(); ++i) {
      auto id = records[i].seq_id();
      if (index_.find(id) == index_.end()) order_.push_back(id);
      index_[id][records[i].layer_id()] = i;
      last_ = std::max<int>(last_, records[i].layer_id());
    }
  }

  int last_layer() const { return last_; }
  int resolve(int layer) const { return layer == kLastLayer ? last_ : layer; }

  // pooled from `pool_layer`, tokens and roles from `token_layer`
  std::vector<SequenceEmbedding> compose(int pool_layer, int token_layer) const {
    std::vector<SequenceEmbedding> out;
    out.reserve(order_.size());
    for (SeqId id : order_) {
      const auto& layers = index_.at(id);
      auto find = [&](int layer) -> const SequenceEmbedding& {
        auto it = layers.find(static_cast<std::uint16_t>(layer));
        if (layer < 0 || it == layers.end()) {
          throw Error(ErrorCode::kMissingLayer,
                      "sequence " + std::to_string(id) + " lacks layer",
                      static_cast<std::uint64_t>(layer));
        }
        return records_[it->second];
      };
      const auto& pooled = find(pool_layer);
      const auto& tokens = find(token_layer);
      out.emplace_back(id, static_cast<std::uint16_t>(token_layer),
                       std::vector<float>(pooled.pooled().begin(),
                                          pooled.pooled().end()),
                       tokens.tokens(),
                       std::vector<TokenRole>(tokens.roles().begin(),
                                              tokens.roles().end()));
    }
    return out;
  }

 private:
  std::span<const SequenceEmbedding> records_;
  std::map<SeqId, std::map<std::uint16_t, std::size_t>> index_;
  std::vector<SeqId> order_;
  int last_ = -1;
};

// One row per token layer, all anchored on the same pooled layer.
inline std::vector<LayerSweepRow> layer_sweep(
    std::span<const SequenceEmbedding> corpus_records,
    std::span<const SequenceEmbedding> query_records, const Qrels& qrels,
    const LayerSweepConfig& sweep, const std::vector<Metric>& metrics,
    const ScoringConfig& base = {}, std::size_t workers = 1) {
  MultiLayerSet corpus(corpus_records), queries(query_records);
  if (corpus.last_layer() != queries.last_layer()) {
    throw Error(ErrorCode::kMissingLayer,
                "query and corpus dumps disagree on the last layer",
                static_cast<std::uint64_t>(
                    std::max(corpus.last_layer(), queries.last_layer())));
  }
  ScoringConfig cfg = base;
  cfg.mode = sweep.mode;
  std::vector<LayerSweepRow> rows;
  const int pool = corpus.resolve(sweep.pool_layer);
  for (int requested : sweep.token_layers) {
    const int token = corpus.resolve(requested);
    auto c = corpus.compose(pool, token);
    auto q = queries.compose(pool, token);
    rows.push_back({pool, token, run_eval(c, q, qrels, cfg, metrics, workers)});
  }
  return rows;
}

inline std::string format_sweep_table(const std::vector<LayerSweepRow>& rows) {
  std::ostringstream out;
  if (rows.empty()) return {};
  const auto& metrics = rows.front().report.metrics;
  out << std::left << std::setw(8) << "pool" << std::setw(8) << "tokens";
  for (const auto& m : metrics) out << std::right << std::setw(12) << m.name();
  out << '\n' << std::fixed << std::setprecision(4);
  for (const auto& r : rows) {
    out << std::left << std::setw(8) << r.pool_layer << std::setw(8)
        << r.token_layer;
    for (double v : r.report.macro) out << std::right << std::setw(12) << v;
    out << '\n';
  }
  return out.str();
}

inline std::string format_sweep_records(const std::vector<LayerSweepRow>& rows) {
  std::string out;
  for (const auto& r : rows) {
    nlohmann::json j{{"pool_layer", r.pool_layer},
                     {"token_layer", r.token_layer},
                     {"mode", score_mode_name(r.report.mode)}};
    for (std::size_t i = 0; i < r.report.metrics.size(); ++i) {
      j[r.report.metrics[i].name()] = r.report.macro[i];
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace smart
