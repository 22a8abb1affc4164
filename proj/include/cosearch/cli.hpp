#pragma once

// cosearch index | search | run-topics | tuples | evaluate | serve

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "cosearch/corpus.hpp"
#include "cosearch/errors.hpp"
#include "cosearch/eval.hpp"
#include "cosearch/http_service.hpp"
#include "cosearch/pipeline.hpp"
#include "cosearch/scorer_process.hpp"
#include "cosearch/snapshot.hpp"

namespace cosearch {

namespace cli_detail {

struct FusionFlags {
  std::optional<double> mu;
  std::optional<double> rrf_k;
  std::optional<std::size_t> pool_size;

  void add_to(CLI::App& app) {
    app.add_option("--mu", mu, "dense/keyword blend weight in [0,1]");
    app.add_option("--rrf-k", rrf_k, "reciprocal rank fusion constant (> 0)");
    app.add_option("--pool-size", pool_size, "candidates kept per retriever");
  }

  void apply(FusionConfig& f) const {
    if (mu) f.mu = *mu;
    if (rrf_k) f.rrf_k = *rrf_k;
    if (pool_size) f.pool_size = *pool_size;
    f.validate();
  }
};

struct ScorerFlags {
  std::string qa_command;
  std::string summarizer_command;

  void add_to(CLI::App& app) {
    app.add_option("--qa-command", qa_command, "external answer extractor (JSON lines on stdin/stdout)");
    app.add_option("--summarizer-command", summarizer_command, "external summarizer (JSON lines on stdin/stdout)");
  }
};

inline std::shared_ptr<const Engine> open_engine(const std::string& snapshot_dir, const FusionFlags& fusion,
                                                 const ScorerFlags& scorers) {
  auto snap = load_snapshot(snapshot_dir);
  fusion.apply(snap.config.fusion);
  std::shared_ptr<const AnswerExtractor> extractor;
  std::shared_ptr<const Summarizer> summarizer;
  if (!scorers.qa_command.empty()) extractor = std::make_shared<ProcessAnswerExtractor>(scorers.qa_command);
  if (!scorers.summarizer_command.empty()) summarizer = std::make_shared<ProcessSummarizer>(scorers.summarizer_command);
  return std::make_shared<const Engine>(snap.index, snap.config, nullptr, extractor, summarizer);
}

inline void print_hits_table(const SearchResult& r, std::ostream& out) {
  std::size_t rank = 0;
  for (const auto& h : r.hits) {
    out << ++rank << '\t' << h.score.doc_id << '\t' << format_score(h.score.final_score) << '\t'
        << format_score(h.score.rrf) << '\t' << format_score(h.score.q_factor) << '\t'
        << format_score(h.score.s_factor) << '\t' << h.title << '\n';
  }
}

inline std::atomic<httplib::Server*>& active_server() {
  static std::atomic<httplib::Server*> s{nullptr};
  return s;
}

inline void stop_server(int) {
  if (auto* s = active_server().load()) s->stop();
}

}  // namespace cli_detail

/// Runs the command line (`args` without the program name). Returns the process exit status; diagnostics go to
/// `err`, results to `out`.
inline int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  using namespace cli_detail;

  CLI::App app{"hybrid dense/keyword search over scientific literature", "cosearch"};
  app.require_subcommand(1);

  // index
  std::string corpus_path, snapshot_out;
  bool strict = false;
  EmbedderConfig embedder;
  FusionFlags index_fusion;
  std::string run_tag = "cosearch";
  auto* index_cmd = app.add_subcommand("index", "build a snapshot from a corpus file or directory");
  index_cmd->add_option("corpus", corpus_path, "corpus JSON-lines file or directory")->required();
  index_cmd->add_option("snapshot", snapshot_out, "output snapshot directory")->required();
  index_cmd->add_flag("--strict", strict, "fail on the first malformed record");
  index_cmd->add_option("--dimension", embedder.dimension, "embedding dimension");
  index_cmd->add_option("--seed", embedder.seed, "embedder seed");
  index_cmd->add_option("--run-tag", run_tag, "tag written in run files");
  index_fusion.add_to(*index_cmd);

  // search
  std::string snapshot_dir, query, format = "table";
  std::size_t n = 10;
  int topic_id = 1;
  FusionFlags search_fusion;
  ScorerFlags search_scorers;
  auto* search_cmd = app.add_subcommand("search", "run one query end to end");
  search_cmd->add_option("-s,--snapshot", snapshot_dir, "snapshot directory")->envname("COSEARCH_SNAPSHOT")->required();
  search_cmd->add_option("query", query, "query text")->required();
  search_cmd->add_option("-n", n, "number of results")->check(CLI::Range(std::size_t{0}, kMaxRunDepth));
  search_cmd->add_option("--format", format, "table | trec | json")->check(CLI::IsMember({"table", "trec", "json"}));
  search_cmd->add_option("--topic", topic_id, "topic number used in trec output")->check(CLI::PositiveNumber);
  search_fusion.add_to(*search_cmd);
  search_scorers.add_to(*search_cmd);

  // run-topics
  std::string topics_path, run_out, field = "query";
  std::size_t depth = kMaxRunDepth;
  FusionFlags topics_fusion;
  ScorerFlags topics_scorers;
  auto* topics_cmd = app.add_subcommand("run-topics", "rank every topic and write a run file");
  topics_cmd->add_option("-s,--snapshot", snapshot_dir, "snapshot directory")->envname("COSEARCH_SNAPSHOT")->required();
  topics_cmd->add_option("topics", topics_path, "topics JSON-lines file")->required();
  topics_cmd->add_option("run", run_out, "output run file")->required();
  topics_cmd->add_option("--field", field, "query | question | narrative | concat")
      ->check(CLI::IsMember({"query", "question", "narrative", "concat"}));
  topics_cmd->add_option("--depth", depth, "documents per topic")->check(CLI::Range(std::size_t{1}, kMaxRunDepth));
  topics_fusion.add_to(*topics_cmd);
  topics_scorers.add_to(*topics_cmd);

  // tuples
  std::string tuples_out;
  std::uint64_t tuple_seed = 1;
  auto* tuples_cmd = app.add_subcommand("tuples", "export labelled paragraph/citation tuples");
  tuples_cmd->add_option("corpus", corpus_path, "corpus JSON-lines file or directory")->required();
  tuples_cmd->add_option("out", tuples_out, "output TSV")->required();
  tuples_cmd->add_option("--seed", tuple_seed, "sampling seed");
  tuples_cmd->add_flag("--strict", strict, "fail on the first malformed record");

  // evaluate
  std::string qrels_path, run_path, report_out, ndcg_variant = "paper", bpref_variant = "paper";
  EvalConfig eval_cfg;
  auto* eval_cmd = app.add_subcommand("evaluate", "score a run file against relevance judgements");
  eval_cmd->add_option("qrels", qrels_path, "qrels file")->required();
  eval_cmd->add_option("run", run_path, "run file")->required();
  eval_cmd->add_flag("--judged-only", eval_cfg.judged_only, "drop unjudged documents before P@n, nDCG and AP");
  eval_cmd->add_option("--ndcg-variant", ndcg_variant, "paper | standard")->check(CLI::IsMember({"paper", "standard"}));
  eval_cmd->add_option("--bpref-variant", bpref_variant, "paper | trec")->check(CLI::IsMember({"paper", "trec"}));
  eval_cmd->add_option("--rel-threshold", eval_cfg.rel_threshold, "minimum relevant grade")->check(CLI::Range(1, 2));
  eval_cmd->add_option("--report-out", report_out, "write the JSON report here");

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  FusionFlags serve_fusion;
  ScorerFlags serve_scorers;
  auto* serve_cmd = app.add_subcommand("serve", "serve GET /search and GET /health");
  serve_cmd->add_option("-s,--snapshot", snapshot_dir, "snapshot directory")->envname("COSEARCH_SNAPSHOT")->required();
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "TCP port")->envname("COSEARCH_PORT")->check(CLI::Range(1, 65535));
  serve_fusion.add_to(*serve_cmd);
  serve_scorers.add_to(*serve_cmd);

  // CLI11 consumes the vector form back to front.
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (index_cmd->parsed()) {
      auto loaded = load_corpus(corpus_path, LoadOptions{.strict = strict}, err);
      if (loaded.skipped > 0) err << "warning: skipped " << loaded.skipped << " malformed record(s)\n";
      PipelineConfig config;
      config.embedder = embedder;
      config.run_tag = run_tag;
      index_fusion.apply(config.fusion);
      config.validate();
      const auto emb = make_embedder(config.embedder);
      const auto index = SearchIndex::build(std::move(loaded.documents), *emb);
      const auto manifest = save_snapshot(index, config, snapshot_out);
      out << "documents: " << index.doc_count() << '\n'
          << "paragraphs: " << index.paragraphs().size() << '\n'
          << "checksum: " << manifest.at("checksum").get<std::string>() << '\n';
      return 0;
    }

    if (search_cmd->parsed()) {
      const auto engine = open_engine(snapshot_dir, search_fusion, search_scorers);
      if (n == 0) return 0;
      const auto result = engine->search(query, n);
      if (format == "table") {
        print_hits_table(result, out);
      } else if (format == "trec") {
        std::vector<std::pair<std::string, double>> ranked;
        for (const auto& h : result.hits) ranked.emplace_back(h.score.doc_id, h.score.final_score);
        RunFile run;
        run.add_ranking(topic_id, ranked, engine->config().run_tag);
        write_run(run, out);
      } else {
        out << SearchService::to_json(result, engine->config().fusion, n).dump() << '\n';
      }
      return 0;
    }

    if (topics_cmd->parsed()) {
      const auto engine = open_engine(snapshot_dir, topics_fusion, topics_scorers);
      const auto topics = load_topics(std::filesystem::path(topics_path));
      const auto run = run_topics(*engine, topics, topic_field_from_string(field), depth);
      write_run(run, std::filesystem::path(run_out));
      out << "topics: " << topics.size() << '\n';
      return 0;
    }

    if (tuples_cmd->parsed()) {
      const auto loaded = load_corpus(corpus_path, LoadOptions{.strict = strict}, err);
      const auto graph = build_bipartite_graph(loaded.documents);
      const auto tuples = generate_tuples(graph, tuple_seed);
      std::ofstream f(tuples_out, std::ios::binary | std::ios::trunc);
      if (!f) throw IoError("cannot open '" + tuples_out + "' for writing");
      write_tuples(tuples, f);
      if (!f) throw IoError("failed writing '" + tuples_out + "'");
      out << "positives: " << graph.edges().size() << '\n' << "negatives: " << tuples.size() - graph.edges().size() << '\n';
      return 0;
    }

    if (eval_cmd->parsed()) {
      eval_cfg.ndcg_variant = ndcg_variant == "standard" ? NdcgVariant::standard : NdcgVariant::paper;
      eval_cfg.bpref_variant = bpref_variant == "trec" ? BprefVariant::trec : BprefVariant::paper;
      const auto qrels = parse_qrels(std::filesystem::path(qrels_path));
      const auto run = parse_run(std::filesystem::path(run_path));
      const auto report = evaluate_run(run, qrels, eval_cfg);
      print_report(report, out);
      if (!report_out.empty()) {
        std::ofstream f(report_out, std::ios::trunc);
        if (!f) throw IoError("cannot open '" + report_out + "' for writing");
        f << to_json(report).dump(2) << '\n';
      }
      return 0;
    }

    if (serve_cmd->parsed()) {
      SearchService service;
      httplib::Server server;
      service.bind(server);
      if (!server.bind_to_port(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
      // Requests get 503 until the snapshot is in.
      std::atomic<bool> load_failed{false};
      std::thread loader([&] {
        try {
          service.install(open_engine(snapshot_dir, serve_fusion, serve_scorers));
          err << "snapshot loaded from " << snapshot_dir << '\n';
        } catch (const std::exception& e) {
          err << "error: " << e.what() << '\n';
          load_failed = true;
          server.wait_until_ready();
          server.stop();
        }
      });
      active_server().store(&server);
      std::signal(SIGINT, stop_server);
      std::signal(SIGTERM, stop_server);
      err << "listening on " << host << ':' << port << '\n';
      server.listen_after_bind();
      active_server().store(nullptr);
      loader.join();
      return load_failed ? 1 : 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace cosearch
