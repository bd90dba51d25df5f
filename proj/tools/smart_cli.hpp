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

// Command-line front end. run_cli() is the whole program; main() only binds
// it to the process streams so tests can drive it in-process.

#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "smart/smart.hpp"

namespace smart::cli {

namespace detail {

enum class Format { kTable, kRecords };

struct Common {
  std::string mode;
  std::size_t workers = 1;
  std::string format = "table";
  std::string mask_query = "none";
  std::string mask_candidate = "none";
  double hybrid_weight = 1.0;
  std::string layer = "last";

  Format fmt() const { return format == "records" ? Format::kRecords : Format::kTable; }
};

inline RoleSet parse_roles(const std::string& list) {
  RoleSet set = RoleSet::structural();
  if (list == "none" || list.empty()) return set;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto r = parse_token_role(item);
    if (!r) throw CLI::ValidationError("role list", "unknown token role '" + item + "'");
    set.insert(*r);
  }
  return set;
}

inline std::string check_roles(const std::string& list) {
  try {
    parse_roles(list);
  } catch (const CLI::ValidationError& e) {
    return e.what();
  }
  return {};
}

inline std::string check_layer(const std::string& text) {
  try {
    parse_layer(text);
  } catch (const Error&) {
    return "expected 'last' or a layer index, got '" + text + "'";
  }
  return {};
}

inline std::string check_metrics(const std::string& text) {
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      parse_metric(item);
    } catch (const Error& e) {
      return e.what();
    }
  }
  return {};
}

inline ScoringConfig scoring_config(const Common& c) {
  ScoringConfig cfg;
  cfg.mode = parse_score_mode(c.mode).value();
  cfg.query_exclude_roles = parse_roles(c.mask_query);
  cfg.candidate_exclude_roles = parse_roles(c.mask_candidate);
  cfg.hybrid_weight = c.hybrid_weight;
  return cfg;
}

inline std::vector<Metric> parse_metrics(const std::string& text) {
  std::vector<Metric> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_metric(item));
  return out;
}

// Records of one layer ("last" = highest layer present).
inline std::vector<SequenceEmbedding> load_layer(const std::string& path,
                                                 const std::string& layer_text) {
  auto all = read_dump(path);
  if (all.empty()) return all;
  int layer = parse_layer(layer_text);
  if (layer == kLastLayer) {
    for (const auto& r : all) layer = std::max<int>(layer, r.layer_id());
  }
  std::vector<SequenceEmbedding> out;
  for (auto& r : all) {
    if (r.layer_id() == layer) out.push_back(std::move(r));
  }
  if (out.empty()) {
    throw Error(ErrorCode::kMissingLayer, path + " has no records at that layer",
                static_cast<std::uint64_t>(layer));
  }
  return out;
}

inline Qrels load_qrels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  return parse_qrels(in);
}

inline std::string fixed(double v, int digits = 6) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline void add_common(CLI::App* sub, Common& c, bool scoring) {
  if (scoring) {
    sub->add_option("--mode", c.mode, "single | late | hybrid")
        ->required()
        ->check(CLI::IsMember({"single", "late", "hybrid"}));
    sub->add_option("--mask-query-roles", c.mask_query,
                    "extra query token roles to exclude (comma list or none)")
        ->check(CLI::Validator(check_roles, "ROLES"));
    sub->add_option("--mask-candidate-roles", c.mask_candidate,
                    "extra candidate token roles to exclude (comma list or none)")
        ->check(CLI::Validator(check_roles, "ROLES"));
    sub->add_option("--hybrid-weight", c.hybrid_weight,
                    "weight on s_late in the hybrid score");
  }
  sub->add_option("--workers", c.workers, "worker threads")
      ->check(CLI::PositiveNumber);
  sub->add_option("--format", c.format, "table | records")
      ->check(CLI::IsMember({"table", "records"}));
}

// ---------------------------------------------------------------------------
// Subcommands

inline void print_results(const std::vector<RetrievalResult>& results, Format fmt,
                          std::ostream& out) {
  if (fmt == Format::kRecords) {
    for (const auto& r : results) out << to_json(r).dump() << '\n';
    return;
  }
  out << std::left << std::setw(10) << "query" << std::setw(6) << "rank"
      << std::setw(12) << "candidate" << std::right << std::setw(12) << "single"
      << std::setw(12) << "late" << std::setw(12) << "hybrid" << '\n';
  for (const auto& r : results) {
    for (std::size_t i = 0; i < r.ranked.size(); ++i) {
      const auto& c = r.ranked[i];
      out << std::left << std::setw(10) << r.query_id << std::setw(6) << i + 1
          << std::setw(12) << c.candidate_id << std::right << std::setw(12)
          << fixed(c.scores.s_single) << std::setw(12) << fixed(c.scores.s_late)
          << std::setw(12) << fixed(c.scores.s_hybrid) << '\n';
    }
  }
}

inline std::vector<RetrievalResult> retrieve_all(
    const std::vector<SequenceEmbedding>& corpus,
    const std::vector<SequenceEmbedding>& queries, const ScoringConfig& cfg,
    std::size_t k, std::size_t workers, const TokenReadout* readout) {
  PreparedCorpus prepared(corpus, cfg, workers, readout);
  std::vector<RetrievalResult> results(queries.size());
  const bool tokens = cfg.mode != ScoreMode::kSingle;
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    auto q = prepare(queries[i], cfg.query_exclude_roles, tokens, readout);
    results[i] = score_corpus(q, prepared, cfg, std::min(k, prepared.size()), 1);
  });
  return results;
}

struct RetrieveArgs {
  Common common;
  std::string corpus, queries, params;
  std::size_t k = 10;
};

inline int cmd_retrieve(const RetrieveArgs& a, std::ostream& out) {
  auto cfg = scoring_config(a.common);
  auto corpus = load_layer(a.corpus, a.common.layer);
  auto queries = load_layer(a.queries, a.common.layer);
  std::optional<TokenReadout> readout;
  if (!a.params.empty()) readout = make_readout(read_adapter_params(a.params));
  auto results = retrieve_all(corpus, queries, cfg, a.k, a.common.workers,
                              readout ? &*readout : nullptr);
  print_results(results, a.common.fmt(), out);
  return 0;
}

struct ScoreArgs {
  Common common;
  std::string query, candidate;
};

inline int cmd_score(const ScoreArgs& a, std::ostream& out) {
  auto cfg = scoring_config(a.common);
  auto queries = load_layer(a.query, a.common.layer);
  auto cands = load_layer(a.candidate, a.common.layer);
  const bool tokens = cfg.mode != ScoreMode::kSingle;
  if (a.common.fmt() == Format::kTable) {
    out << std::left << std::setw(10) << "query" << std::setw(12) << "candidate"
        << std::right << std::setw(12) << "single" << std::setw(12) << "late"
        << std::setw(12) << "hybrid" << '\n';
  }
  for (const auto& q : queries) {
    auto pq = prepare(q, cfg.query_exclude_roles, tokens);
    for (const auto& c : cands) {
      auto pc = prepare(c, cfg.candidate_exclude_roles, tokens);
      ScoreBreakdown s;
      try {
        s = score_prepared(pq, pc, cfg);
      } catch (const Error& e) {
        throw Error(e.code(),
                    "query " + std::to_string(q.seq_id()) + " vs candidate " +
                        std::to_string(c.seq_id()) + ": " + e.what());
      }
      if (a.common.fmt() == Format::kRecords) {
        out << nlohmann::json{{"query_id", q.seq_id()},
                              {"candidate_id", c.seq_id()},
                              {"mode", score_mode_name(cfg.mode)},
                              {"s_single", s.s_single},
                              {"s_late", s.s_late},
                              {"s_hybrid", s.s_hybrid}}
                   .dump()
            << '\n';
      } else {
        out << std::left << std::setw(10) << q.seq_id() << std::setw(12)
            << c.seq_id() << std::right << std::setw(12) << fixed(s.s_single)
            << std::setw(12) << fixed(s.s_late) << std::setw(12)
            << fixed(s.s_hybrid) << '\n';
      }
    }
  }
  return 0;
}

struct EvalArgs {
  Common common;
  std::string corpus, queries, qrels, params;
  std::string metrics = "recall@1,ndcg@10";
};

inline int cmd_eval(const EvalArgs& a, std::ostream& out) {
  auto cfg = scoring_config(a.common);
  auto corpus = load_layer(a.corpus, a.common.layer);
  auto queries = load_layer(a.queries, a.common.layer);
  auto qrels = load_qrels(a.qrels);
  std::optional<TokenReadout> readout;
  if (!a.params.empty()) readout = make_readout(read_adapter_params(a.params));
  auto report = run_eval(corpus, queries, qrels, cfg, parse_metrics(a.metrics),
                         a.common.workers, readout ? &*readout : nullptr);
  out << (a.common.fmt() == Format::kRecords ? report.format_records()
                                             : report.format_table());
  return 0;
}

struct SweepArgs {
  Common common;
  std::string corpus, queries, qrels;
  std::string metrics = "recall@1,ndcg@10";
  std::string pool_layer = "last";
  std::string token_layers = "last";
};

inline int cmd_layer_sweep(const SweepArgs& a, std::ostream& out) {
  auto base = scoring_config(a.common);
  LayerSweepConfig sweep;
  sweep.mode = base.mode;
  sweep.pool_layer = parse_layer(a.pool_layer);
  sweep.token_layers.clear();
  std::stringstream ss(a.token_layers);
  std::string item;
  while (std::getline(ss, item, ',')) sweep.token_layers.push_back(parse_layer(item));
  auto corpus = read_dump(a.corpus);
  auto queries = read_dump(a.queries);
  auto rows = layer_sweep(corpus, queries, load_qrels(a.qrels), sweep,
                          parse_metrics(a.metrics), base, a.common.workers);
  out << (a.common.fmt() == Format::kRecords ? format_sweep_records(rows)
                                             : format_sweep_table(rows));
  return 0;
}

struct ExplainArgs {
  Common common;
  std::string query, candidate;
  std::optional<SeqId> query_id, candidate_id;
  std::size_t alternatives = 3;
};

inline const SequenceEmbedding& pick(const std::vector<SequenceEmbedding>& recs,
                                     const std::optional<SeqId>& id,
                                     const std::string& path) {
  if (recs.empty()) throw Error(ErrorCode::kEmptyCorpus, path + " has no records");
  if (!id) return recs.front();
  for (const auto& r : recs) {
    if (r.seq_id() == *id) return r;
  }
  throw Error(ErrorCode::kUnknownId, "no record with that seq_id in " + path, *id);
}

inline int cmd_explain(const ExplainArgs& a, std::ostream& out) {
  auto cfg = scoring_config(a.common);
  auto queries = load_layer(a.query, a.common.layer);
  auto cands = load_layer(a.candidate, a.common.layer);
  const auto& q = pick(queries, a.query_id, a.query);
  const auto& c = pick(cands, a.candidate_id, a.candidate);
  auto ms = explain_matches(q, c, cfg, a.alternatives);
  if (a.common.fmt() == Format::kRecords) {
    out << write_explanations(ms);
    return 0;
  }
  out << std::left << std::setw(8) << "q_tok" << std::setw(8) << "c_tok"
      << std::right << std::setw(12) << "cosine" << "  alternatives\n";
  double sum = 0.0;
  for (const auto& m : ms) {
    out << std::left << std::setw(8) << m.query_index << std::setw(8)
        << m.best_candidate_index << std::right << std::setw(12)
        << fixed(m.similarity) << ' ';
    for (const auto& [j, s] : m.alternatives) out << ' ' << j << ':' << fixed(s, 4);
    out << '\n';
    sum += m.similarity;
  }
  out << "s_late " << fixed(sum / static_cast<double>(ms.size())) << '\n';
  return 0;
}

struct GenerateArgs {
  Common common;
  std::size_t pairs = 40, bindings = 25;
  std::size_t code_pool = kDefaultPoolSize, marker_pool = kDefaultPoolSize;
  std::uint64_t seed = 0;
  std::string out_path, emit_dir, created_at = "unspecified";
  std::size_t dim = 64;
};

inline int cmd_toybench_generate(const GenerateArgs& a, std::ostream& out) {
  auto spec = generate_benchmark(a.pairs, a.bindings, a.seed, a.code_pool,
                                 a.marker_pool);
  {
    std::ofstream f(a.out_path, std::ios::trunc);
    if (!f) throw Error(ErrorCode::kIoFailure, "cannot open for writing: " + a.out_path);
    f << to_json(spec).dump() << '\n';
    if (!f) throw Error(ErrorCode::kIoFailure, "write failed: " + a.out_path);
  }
  nlohmann::json summary{{"pairs", spec.pairs.size()},
                         {"queries", spec.queries.size()},
                         {"out", a.out_path}};
  if (!a.emit_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(a.emit_dir);
    auto cb = SyntheticCodebook::for_benchmark(spec, a.dim, a.seed);
    auto layered = encode_layered_benchmark(spec, cb, a.seed + 1);
    auto path = [&](const char* name) { return (fs::path(a.emit_dir) / name).string(); };
    auto cs = write_dump(layered.documents, path("corpus.smrt"));
    auto qs = write_dump(layered.queries, path("queries.smrt"));
    write_manifest(make_manifest(cs, "synthetic-binding-encoder", a.created_at),
                   path("corpus.json"));
    write_manifest(make_manifest(qs, "synthetic-binding-encoder", a.created_at),
                   path("queries.json"));
    Qrels qrels;
    for (auto [q, c] : layered.positives) qrels.add(q, c);
    std::ofstream f(path("qrels.txt"), std::ios::trunc);
    f << write_qrels(qrels);
    if (!f) throw Error(ErrorCode::kIoFailure, "write failed: " + path("qrels.txt"));
    summary["dumps"] = a.emit_dir;
    summary["dim"] = a.dim;
  }
  if (a.common.fmt() == Format::kRecords) {
    out << summary.dump() << '\n';
  } else {
    out << "wrote " << spec.queries.size() << " queries over " << spec.pairs.size()
        << " pairs to " << a.out_path << '\n';
    if (!a.emit_dir.empty()) out << "dumps in " << a.emit_dir << '\n';
  }
  return 0;
}

struct RunArgs {
  Common common;
  std::string bench;
  std::size_t pairs = 40, bindings = 25, dim = 64;
  std::uint64_t seed = 0;
};

inline int cmd_toybench_run(const RunArgs& a, std::ostream& out) {
  BenchmarkSpec spec;
  if (!a.bench.empty()) {
    std::ifstream f(a.bench);
    if (!f) throw Error(ErrorCode::kIoFailure, "cannot open " + a.bench);
    try {
      spec = benchmark_from_json(nlohmann::json::parse(f));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, a.bench + ": " + e.what());
    }
  } else {
    spec = generate_benchmark(a.pairs, a.bindings, a.seed);
  }
  auto cb = SyntheticCodebook::for_benchmark(spec, a.dim, a.seed);
  std::vector<ScoreMode> modes;
  if (a.common.mode == "all") {
    modes = {ScoreMode::kSingle, ScoreMode::kLate, ScoreMode::kHybrid};
  } else {
    modes = {parse_score_mode(a.common.mode).value()};
  }
  if (a.common.fmt() == Format::kTable) {
    out << std::left << std::setw(8) << "mode" << std::right << std::setw(10)
        << "accuracy" << std::setw(8) << "ties" << std::setw(9) << "queries" << '\n';
  }
  for (auto mode : modes) {
    auto r = pairwise_accuracy(spec, cb, mode, a.common.workers);
    if (a.common.fmt() == Format::kRecords) {
      out << nlohmann::json{{"mode", score_mode_name(mode)},
                            {"accuracy", r.accuracy},
                            {"tie_fraction", r.tie_fraction},
                            {"queries", r.queries}}
                 .dump()
          << '\n';
    } else {
      out << std::left << std::setw(8) << score_mode_name(mode) << std::right
          << std::setw(10) << fixed(r.accuracy, 4) << std::setw(8)
          << fixed(r.tie_fraction, 3) << std::setw(9) << r.queries << '\n';
    }
  }
  return 0;
}

struct TrainArgs {
  Common common;
  std::string corpus, queries, qrels, out_path;
  std::size_t pairs = 200, bindings = 25, dim = 64, out_dim = 128;
  std::size_t steps = 300, batch = 8;
  double lr = 1e-2, tau = 0.05;
  std::string optimizer = "adam";
  std::uint64_t seed = 0;
};

// (query, lowest-id relevant candidate) per query of a dump-backed task.
inline std::vector<TrainingPair<double>> dump_pairs(const TrainArgs& a,
                                                    const ScoringConfig& cfg) {
  auto corpus = load_layer(a.corpus, a.common.layer);
  auto queries = load_layer(a.queries, a.common.layer);
  auto qrels = load_qrels(a.qrels);
  std::map<SeqId, const SequenceEmbedding*> by_id;
  for (const auto& c : corpus) by_id[c.seq_id()] = &c;
  std::vector<TrainingPair<double>> out;
  for (const auto& q : queries) {
    const SequenceEmbedding* pos = nullptr;
    for (SeqId id : qrels.relevant(q.seq_id())) {
      auto it = by_id.find(id);
      if (it != by_id.end()) {
        pos = it->second;
        break;
      }
    }
    if (pos == nullptr) {
      throw Error(ErrorCode::kUnknownId, "no relevant candidate in corpus for query",
                  q.seq_id());
    }
    out.push_back(make_training_pair<double>(q, *pos, cfg));
  }
  return out;
}

inline int cmd_adapter_train(const TrainArgs& a, std::ostream& out) {
  ScoringConfig cfg;
  cfg.query_exclude_roles = parse_roles(a.common.mask_query);
  cfg.candidate_exclude_roles = parse_roles(a.common.mask_candidate);
  std::vector<TrainingPair<double>> train, held_out;
  if (!a.corpus.empty()) {
    train = dump_pairs(a, cfg);
  } else {
    BindingTaskConfig task;
    task.pairs = a.pairs;
    task.bindings_per_doc = a.bindings;
    task.dim = a.dim;
    task.seed = a.seed;
    auto t = make_binding_task(task);
    train = std::move(t.train);
    held_out = std::move(t.held_out);
  }
  if (train.empty()) throw Error(ErrorCode::kInvalidArgument, "no training pairs");
  TrainConfig tc;
  tc.temperature = a.tau;
  tc.learning_rate = a.lr;
  tc.steps = a.steps;
  tc.batch_size = a.batch;
  tc.seed = a.seed;
  tc.optimizer = a.optimizer == "sgd" ? OptimizerKind::kSgd : OptimizerKind::kAdam;
  auto init = AdapterParams<double>::initialize(train.front().query.cols(),
                                                a.out_dim, a.seed);
  const double before = mean_infonce_loss<double>(train, init, tc.temperature, tc.batch_size);
  auto result = train_adapter<double>(train, init, tc);
  const double after =
      mean_infonce_loss<double>(train, result.params, tc.temperature, tc.batch_size);
  write_adapter_params(result.params, a.out_path);

  nlohmann::json summary{{"summary", "adapter-train"},
                         {"pairs", train.size()},
                         {"steps", tc.steps},
                         {"initial_loss", before},
                         {"final_loss", after},
                         {"out", a.out_path}};
  if (!held_out.empty()) {
    summary["held_out_initial_loss"] =
        mean_infonce_loss<double>(held_out, init, tc.temperature, tc.batch_size);
    summary["held_out_final_loss"] =
        mean_infonce_loss<double>(held_out, result.params, tc.temperature, tc.batch_size);
  }
  if (a.common.fmt() == Format::kRecords) {
    for (std::size_t s = 0; s < result.loss_trace.size(); ++s) {
      out << nlohmann::json{{"step", s}, {"batch_loss", result.loss_trace[s]}}.dump()
          << '\n';
    }
    out << summary.dump() << '\n';
  } else {
    out << "pairs         " << train.size() << '\n'
        << "steps         " << tc.steps << '\n'
        << "initial loss  " << fixed(before) << '\n'
        << "final loss    " << fixed(after) << '\n';
    if (!held_out.empty()) {
      out << "held-out      " << fixed(summary["held_out_initial_loss"].get<double>())
          << " -> " << fixed(summary["held_out_final_loss"].get<double>()) << '\n';
    }
    out << "wrote         " << a.out_path << '\n';
  }
  return 0;
}

struct ValidateArgs {
  Common common;
  std::string path, manifest;
};

inline int cmd_dump_validate(const ValidateArgs& a, std::ostream& out) {
  auto report = validate_dump(a.path, a.manifest.empty()
                                          ? std::nullopt
                                          : std::optional<std::string>(a.manifest));
  if (a.common.fmt() == Format::kRecords) {
    for (const auto& v : report.violations) {
      nlohmann::json j{{"kind", v.kind}, {"message", v.message}};
      j["record"] = v.record ? nlohmann::json(*v.record) : nlohmann::json(nullptr);
      out << j.dump() << '\n';
    }
    out << nlohmann::json{{"summary", "dump-validate"},
                          {"ok", report.ok()},
                          {"violations", report.violations.size()}}
               .dump()
        << '\n';
  } else if (report.ok()) {
    out << a.path << ": ok (" << report.header.record_count << " records, dim "
        << report.header.dim << ")\n";
  } else {
    out << report.format();
    out << a.path << ": " << report.violations.size() << " violation(s)\n";
  }
  return report.ok() ? 0 : 1;
}

struct InspectArgs {
  Common common;
  std::string path;
  std::size_t limit = 20;
};

inline int cmd_dump_inspect(const InspectArgs& a, std::ostream& out) {
  DumpReader reader(a.path);
  const auto& h = reader.header();
  const bool records = a.common.fmt() == Format::kRecords;
  nlohmann::json head{{"version", h.version},
                      {"dim", h.dim},
                      {"record_count", h.record_count},
                      {"flags", h.flags},
                      {"bytes", reader.file_size()}};
  if (h.flags & kFlagAdapterParams) {
    auto p = read_adapter_params(a.path);
    head["adapter"] = {{"hidden", p.hidden_dim()}, {"out", p.output_dim()},
                       {"ln_epsilon", p.ln_epsilon}};
    out << (records ? head.dump() : head.dump(2)) << '\n';
    return 0;
  }
  if (records) {
    out << head.dump() << '\n';
  } else {
    out << "SMRT v" << h.version << "  dim " << h.dim << "  records "
        << h.record_count << "  flags 0x" << std::hex << h.flags << std::dec
        << "  bytes " << reader.file_size() << '\n';
    out << std::left << std::setw(8) << "index" << std::setw(12) << "seq_id"
        << std::setw(7) << "layer" << std::setw(8) << "tokens" << std::setw(30)
        << "roles" << "pooled_norm\n";
  }
  const std::size_t n = std::min(a.limit, reader.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto r = reader.record(i);
    std::map<std::string, std::size_t> counts;
    for (auto role : r.roles()) ++counts[std::string(token_role_name(role))];
    const double norm = norm64(r.pooled());
    if (records) {
      out << nlohmann::json{{"index", i},
                            {"seq_id", r.seq_id()},
                            {"layer_id", r.layer_id()},
                            {"n_tokens", r.num_tokens()},
                            {"roles", counts},
                            {"pooled_norm", norm}}
                 .dump()
          << '\n';
    } else {
      std::string roles;
      for (const auto& [name, c] : counts) {
        roles += (roles.empty() ? "" : ",") + name + "=" + std::to_string(c);
      }
      out << std::left << std::setw(8) << i << std::setw(12) << r.seq_id()
          << std::setw(7) << r.layer_id() << std::setw(8) << r.num_tokens()
          << std::setw(30) << roles << fixed(norm) << '\n';
    }
  }
  if (!records && n < reader.size()) {
    out << "... " << reader.size() - n << " more\n";
  }
  return 0;
}

}  // namespace detail

// Exit status: 0 success, 1 domain error, 2 usage error.
inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
  using namespace detail;
  CLI::App app{"smart: late-interaction scoring, evaluation and toy benchmarks",
               "smart_cli"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  RetrieveArgs retrieve, apply;
  ScoreArgs score;
  EvalArgs eval;
  SweepArgs sweep;
  ExplainArgs explain;
  GenerateArgs gen;
  RunArgs run;
  TrainArgs train;
  ValidateArgs validate;
  InspectArgs inspect;

  auto layer_opt = [](CLI::App* s, Common& c) {
    s->add_option("--layer", c.layer, "layer to read from each dump (index or last)")
        ->check(CLI::Validator(check_layer, "LAYER"));
  };

  auto* s_score = app.add_subcommand("score", "score every query record against every candidate record");
  s_score->add_option("--query", score.query, "query dump")->required()->check(CLI::ExistingFile);
  s_score->add_option("--candidate", score.candidate, "candidate dump")->required()->check(CLI::ExistingFile);
  add_common(s_score, score.common, true);
  layer_opt(s_score, score.common);

  auto retrieve_opts = [&](CLI::App* s, RetrieveArgs& r) {
    s->add_option("--corpus", r.corpus, "candidate dump")->required()->check(CLI::ExistingFile);
    s->add_option("--queries", r.queries, "query dump")->required()->check(CLI::ExistingFile);
    s->add_option("--k", r.k, "results per query")->check(CLI::PositiveNumber);
    add_common(s, r.common, true);
    layer_opt(s, r.common);
  };
  auto* s_retrieve = app.add_subcommand("retrieve", "top-k retrieval over a corpus dump");
  retrieve_opts(s_retrieve, retrieve);
  s_retrieve->add_option("--adapter", retrieve.params, "adapter parameter file")
      ->check(CLI::ExistingFile);

  auto* s_eval = app.add_subcommand("eval", "recall / ndcg over a corpus with qrels");
  s_eval->add_option("--corpus", eval.corpus)->required()->check(CLI::ExistingFile);
  s_eval->add_option("--queries", eval.queries)->required()->check(CLI::ExistingFile);
  s_eval->add_option("--qrels", eval.qrels, "lines of 'query candidate [gain]'")
      ->required()->check(CLI::ExistingFile);
  s_eval->add_option("--metrics", eval.metrics, "comma list, e.g. recall@1,ndcg@10")
      ->check(CLI::Validator(check_metrics, "METRICS"));
  s_eval->add_option("--adapter", eval.params, "adapter parameter file")->check(CLI::ExistingFile);
  add_common(s_eval, eval.common, true);
  layer_opt(s_eval, eval.common);

  auto* s_gen = app.add_subcommand("toybench-generate", "generate a binding benchmark");
  s_gen->add_option("--pairs", gen.pairs)->check(CLI::PositiveNumber);
  s_gen->add_option("--bindings", gen.bindings)->check(CLI::Range(2, 1 << 20));
  s_gen->add_option("--code-pool", gen.code_pool)->check(CLI::PositiveNumber);
  s_gen->add_option("--marker-pool", gen.marker_pool)->check(CLI::PositiveNumber);
  s_gen->add_option("--seed", gen.seed)->required();
  s_gen->add_option("--out", gen.out_path, "benchmark spec output")->required();
  s_gen->add_option("--emit-dumps", gen.emit_dir,
                    "also write encoded two-layer dumps, manifests and qrels here");
  s_gen->add_option("--dim", gen.dim, "synthetic encoder width")->check(CLI::PositiveNumber);
  s_gen->add_option("--created-at", gen.created_at, "manifest timestamp");
  add_common(s_gen, gen.common, false);

  auto* s_run = app.add_subcommand("toybench-run", "pairwise accuracy on a binding benchmark");
  s_run->add_option("--bench", run.bench, "benchmark spec (generated from --seed if absent)")
      ->check(CLI::ExistingFile);
  s_run->add_option("--pairs", run.pairs)->check(CLI::PositiveNumber);
  s_run->add_option("--bindings", run.bindings)->check(CLI::Range(2, 1 << 20));
  s_run->add_option("--dim", run.dim)->check(CLI::PositiveNumber);
  s_run->add_option("--seed", run.seed, "benchmark and codebook seed")->required();
  s_run->add_option("--mode", run.common.mode, "single | late | hybrid | all")
      ->required()
      ->check(CLI::IsMember({"single", "late", "hybrid", "all"}));
  add_common(s_run, run.common, false);

  auto* s_train = app.add_subcommand("adapter-train", "train the token readout adapter");
  s_train->add_option("--corpus", train.corpus, "candidate dump (omit for the synthetic task)")
      ->check(CLI::ExistingFile);
  s_train->add_option("--queries", train.queries)->check(CLI::ExistingFile);
  s_train->add_option("--qrels", train.qrels)->check(CLI::ExistingFile);
  s_train->add_option("--pairs", train.pairs)->check(CLI::Range(2, 1 << 24));
  s_train->add_option("--bindings", train.bindings)->check(CLI::Range(2, 1 << 20));
  s_train->add_option("--dim", train.dim, "synthetic task width")->check(CLI::PositiveNumber);
  s_train->add_option("--out-dim", train.out_dim, "adapter output width")->check(CLI::PositiveNumber);
  s_train->add_option("--steps", train.steps);
  s_train->add_option("--batch", train.batch)->check(CLI::Range(2, 1 << 20));
  s_train->add_option("--lr", train.lr)->check(CLI::NonNegativeNumber);
  s_train->add_option("--tau", train.tau)->check(CLI::PositiveNumber);
  s_train->add_option("--optimizer", train.optimizer)->check(CLI::IsMember({"sgd", "adam"}));
  s_train->add_option("--seed", train.seed)->required();
  s_train->add_option("--out", train.out_path, "adapter parameter file")->required();
  s_train->add_option("--mask-query-roles", train.common.mask_query)
      ->check(CLI::Validator(check_roles, "ROLES"));
  s_train->add_option("--mask-candidate-roles", train.common.mask_candidate)
      ->check(CLI::Validator(check_roles, "ROLES"));
  layer_opt(s_train, train.common);
  add_common(s_train, train.common, false);

  auto* s_apply = app.add_subcommand("adapter-apply", "retrieve with adapted token readouts");
  s_apply->add_option("--params", apply.params, "adapter parameter file")
      ->required()->check(CLI::ExistingFile);
  retrieve_opts(s_apply, apply);

  auto* s_validate = app.add_subcommand("dump-validate", "check an SMRT file");
  s_validate->add_option("path", validate.path)->required();
  s_validate->add_option("--manifest", validate.manifest)->check(CLI::ExistingFile);
  add_common(s_validate, validate.common, false);

  auto* s_inspect = app.add_subcommand("dump-inspect", "summarize an SMRT file");
  s_inspect->add_option("path", inspect.path)->required()->check(CLI::ExistingFile);
  s_inspect->add_option("--limit", inspect.limit, "records to list");
  add_common(s_inspect, inspect.common, false);

  auto* s_sweep = app.add_subcommand("layer-sweep", "metrics per token layer at a fixed pooled layer");
  s_sweep->add_option("--corpus", sweep.corpus)->required()->check(CLI::ExistingFile);
  s_sweep->add_option("--queries", sweep.queries)->required()->check(CLI::ExistingFile);
  s_sweep->add_option("--qrels", sweep.qrels)->required()->check(CLI::ExistingFile);
  s_sweep->add_option("--metrics", sweep.metrics)->check(CLI::Validator(check_metrics, "METRICS"));
  s_sweep->add_option("--pool-layer", sweep.pool_layer)->check(CLI::Validator(check_layer, "LAYER"));
  s_sweep->add_option("--token-layers", sweep.token_layers, "comma list, e.g. 0,4,last");
  add_common(s_sweep, sweep.common, true);

  auto* s_explain = app.add_subcommand("explain", "per-token best matches for one pair");
  s_explain->add_option("--query", explain.query)->required()->check(CLI::ExistingFile);
  s_explain->add_option("--candidate", explain.candidate)->required()->check(CLI::ExistingFile);
  s_explain->add_option("--query-id", explain.query_id, "seq_id (default: first record)");
  s_explain->add_option("--candidate-id", explain.candidate_id, "seq_id (default: first record)");
  s_explain->add_option("--alternatives", explain.alternatives);
  add_common(s_explain, explain.common, true);
  layer_opt(s_explain, explain.common);

  try {
    app.parse(argc, argv);
    // layer lists are checked here so a bad entry is still a usage error
    std::stringstream ss(sweep.token_layers);
    for (std::string item; std::getline(ss, item, ',');) {
      if (*s_sweep && !check_layer(item).empty()) {
        throw CLI::ValidationError("--token-layers", check_layer(item));
      }
    }
    const bool dump_task = !train.corpus.empty() || !train.queries.empty() ||
                           !train.qrels.empty();
    if (*s_train && dump_task &&
        (train.corpus.empty() || train.queries.empty() || train.qrels.empty())) {
      throw CLI::ValidationError("--corpus/--queries/--qrels",
                                 "give all three or none");
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (*s_score) return cmd_score(score, out);
    if (*s_retrieve) return cmd_retrieve(retrieve, out);
    if (*s_eval) return cmd_eval(eval, out);
    if (*s_gen) return cmd_toybench_generate(gen, out);
    if (*s_run) return cmd_toybench_run(run, out);
    if (*s_train) return cmd_adapter_train(train, out);
    if (*s_apply) return cmd_retrieve(apply, out);
    if (*s_validate) {
      int rc = cmd_dump_validate(validate, out);
      if (rc != 0) err << "error: " << validate.path << " failed validation\n";
      return rc;
    }
    if (*s_inspect) return cmd_dump_inspect(inspect, out);
    if (*s_sweep) return cmd_layer_sweep(sweep, out);
    if (*s_explain) return cmd_explain(explain, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace smart::cli
