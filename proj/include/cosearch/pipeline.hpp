#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cosearch/embedding.hpp"
#include "cosearch/errors.hpp"
#include "cosearch/eval.hpp"
#include "cosearch/fusion.hpp"
#include "cosearch/inverted_index.hpp"
#include "cosearch/rank.hpp"
#include "cosearch/search_index.hpp"

namespace cosearch {

struct EmbedderConfig {
  std::string kind = "hash-trigram-v1";
  std::size_t dimension = HashEmbedder::kDefaultDimension;
  std::uint64_t seed = HashEmbedder::kDefaultSeed;
  bool operator==(const EmbedderConfig&) const = default;
};

struct PipelineConfig {
  FusionConfig fusion;
  Bm25Params bm25;
  RankConstants rank;
  EmbedderConfig embedder;
  /// Top documents whose best paragraphs feed answer extraction and
  /// summarization.
  std::size_t context_docs = 10;
  std::string run_tag = "cosearch";

  void validate() const {
    fusion.validate();
    bm25.validate();
    rank.validate();
    if (embedder.dimension == 0) throw std::invalid_argument("config: embedder dimension must be >= 1");
    if (context_docs == 0) throw std::invalid_argument("config: context_docs must be >= 1");
    if (run_tag.empty() || run_tag.find_first_of(" \t\r\n") != std::string::npos) {
      throw std::invalid_argument("config: run tag must be a non-empty word");
    }
  }
  bool operator==(const PipelineConfig&) const = default;
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {
      {"fusion",
       {{"mu", c.fusion.mu},
        {"rrf_k", c.fusion.rrf_k},
        {"pool_size", c.fusion.pool_size},
        {"tfidf_scaling", c.fusion.tfidf_scaling == TfidfScaling::raw ? "raw" : "max"}}},
      {"bm25", {{"k1", c.bm25.k1}, {"b", c.bm25.b}}},
      {"rank",
       {{"answer_base", c.rank.answer_base},
        {"summary_blend", c.rank.summary_blend},
        {"max_spans", c.rank.max_spans},
        {"summary_token_limit", c.rank.summary_token_limit},
        {"summary_input_tokens", c.rank.summary_input_tokens},
        {"sentences_per_paragraph", c.rank.sentences_per_paragraph}}},
      {"embedder", {{"kind", c.embedder.kind}, {"dimension", c.embedder.dimension}, {"seed", c.embedder.seed}}},
      {"context_docs", c.context_docs},
      {"run_tag", c.run_tag},
  };
}

inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    const auto& f = j.at("fusion");
    c.fusion.mu = f.at("mu").get<double>();
    c.fusion.rrf_k = f.at("rrf_k").get<double>();
    c.fusion.pool_size = f.at("pool_size").get<std::size_t>();
    const auto scaling = f.at("tfidf_scaling").get<std::string>();
    if (scaling != "raw" && scaling != "max") throw std::invalid_argument("unknown tfidf_scaling '" + scaling + "'");
    c.fusion.tfidf_scaling = scaling == "raw" ? TfidfScaling::raw : TfidfScaling::max_normalized;
    c.bm25.k1 = j.at("bm25").at("k1").get<double>();
    c.bm25.b = j.at("bm25").at("b").get<double>();
    const auto& r = j.at("rank");
    c.rank.answer_base = r.at("answer_base").get<double>();
    c.rank.summary_blend = r.at("summary_blend").get<double>();
    c.rank.max_spans = r.at("max_spans").get<std::size_t>();
    c.rank.summary_token_limit = r.at("summary_token_limit").get<std::size_t>();
    c.rank.summary_input_tokens = r.at("summary_input_tokens").get<std::size_t>();
    c.rank.sentences_per_paragraph = r.at("sentences_per_paragraph").get<std::size_t>();
    const auto& e = j.at("embedder");
    c.embedder.kind = e.at("kind").get<std::string>();
    c.embedder.dimension = e.at("dimension").get<std::size_t>();
    c.embedder.seed = e.at("seed").get<std::uint64_t>();
    c.context_docs = j.at("context_docs").get<std::size_t>();
    c.run_tag = j.at("run_tag").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

inline std::shared_ptr<const Embedder> make_embedder(const EmbedderConfig& c) {
  if (c.kind == "hash-trigram-v1") return std::make_shared<HashEmbedder>(c.dimension, c.seed);
  throw std::invalid_argument("unknown embedder kind '" + c.kind + "'");
}

struct SearchHit {
  RankScore score;
  std::string title;
  std::string snippet;
};

struct SearchResult {
  std::string query;
  std::vector<SearchHit> hits;
  AnswerSet answers;
  std::optional<Summary> summary;
  std::size_t retrieved = 0;  // length of the fused list before truncation to n
};

/// Retrieve-then-rank over an immutable index. Scorers that are not safe for
/// concurrent use are called under a lock; everything else is lock-free.
class Engine {
 public:
  static constexpr std::size_t kSnippetChars = 200;

  Engine(std::shared_ptr<const SearchIndex> index, PipelineConfig config,
         std::shared_ptr<const Embedder> embedder = nullptr,
         std::shared_ptr<const AnswerExtractor> extractor = nullptr,
         std::shared_ptr<const Summarizer> summarizer = nullptr)
      : index_(std::move(index)), config_(std::move(config)) {
    if (!index_) throw std::invalid_argument("Engine: null index");
    config_.validate();
    embedder_ = embedder ? std::move(embedder) : make_embedder(config_.embedder);
    if (embedder_->id() != index_->embedder_id()) {
      throw Error("embedder '" + embedder_->id() + "' does not match the index ('" + index_->embedder_id() + "')");
    }
    extractor_ = extractor ? std::move(extractor) : std::make_shared<ReferenceAnswerExtractor>(config_.rank.max_spans);
    summarizer_ = summarizer ? std::move(summarizer) : std::make_shared<ReferenceSummarizer>(embedder_, config_.rank);
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  const SearchIndex& index() const noexcept { return *index_; }
  std::shared_ptr<const SearchIndex> shared_index() const noexcept { return index_; }
  const PipelineConfig& config() const noexcept { return config_; }
  const Embedder& embedder() const noexcept { return *embedder_; }

  /// Top `n` documents after rank modulation.
  SearchResult search(std::string_view query, std::size_t n) const { return search(query, n, config_.fusion); }

  SearchResult search(std::string_view query, std::size_t n, const FusionConfig& fusion) const {
    const auto retrieval = locked(*embedder_, embed_mu_, [&] {
      return retrieve(query, fusion, *index_, *embedder_, config_.bm25);
    });

    SearchResult out;
    out.query = std::string(query);
    out.retrieved = retrieval.fused.size();

    const auto context = context_paragraphs(retrieval);
    if (!context.empty()) {
      out.answers = locked(*extractor_, extract_mu_, [&] {
        return extract_answers(*extractor_, query, context, config_.rank.max_spans);
      });
      auto text = locked(*summarizer_, summarize_mu_, [&] { return summarizer_->summarize(query, context); });
      out.summary = locked(*embedder_, embed_mu_, [&] {
        return make_summary(std::move(text), *embedder_, config_.rank.summary_token_limit);
      });
    }

    const auto ranked = rerank(retrieval.fused, out.answers, out.summary, *index_, config_.rank);
    for (std::size_t i = 0; i < std::min(n, ranked.size()); ++i) {
      const auto doc = *index_->find_doc(ranked[i].doc_id);
      out.hits.push_back({ranked[i], index_->document(doc).title,
                          snippet(doc, retrieval.best_paragraph[doc], out.answers)});
    }
    return out;
  }

  /// Ranked documents for a run file, cut at the run depth.
  std::vector<std::pair<std::string, double>> ranking(std::string_view query, std::size_t depth = kMaxRunDepth) const {
    const auto result = search(query, std::min(depth, kMaxRunDepth));
    std::vector<std::pair<std::string, double>> out;
    for (const auto& h : result.hits) out.emplace_back(h.score.doc_id, h.score.final_score);
    return out;
  }

 private:
  template <typename Scorer, typename Fn>
  static std::invoke_result_t<Fn&> locked(const Scorer& scorer, std::mutex& mu, Fn&& fn) {
    if (scorer.concurrent_safe()) return fn();
    std::lock_guard lock(mu);
    return fn();
  }

  /// Best paragraph of each of the top context_docs fused documents, in rank
  /// order.
  std::vector<std::string> context_paragraphs(const Retrieval& r) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < r.fused.size() && out.size() < config_.context_docs; ++i) {
      const auto doc = *index_->find_doc(r.fused[i].doc_id);
      const auto p = r.best_paragraph[doc];
      if (p != kNoParagraph) out.push_back(index_->paragraphs()[p].text);
    }
    return out;
  }

  /// First answer span found in the document, else the head of its best
  /// paragraph.
  std::string snippet(std::uint32_t doc, std::size_t best_paragraph, const AnswerSet& answers) const {
    const auto& d = index_->document(doc);
    const auto normalized = normalize_for_match(full_text(d));
    for (const auto& span : answers.spans) {
      if (normalized.find(normalize_for_match(span)) != std::string::npos) return span;
    }
    const std::string text = best_paragraph != kNoParagraph ? index_->paragraphs()[best_paragraph].text : full_text(d);
    return std::string(utf8::prefix(text, kSnippetChars));
  }

  std::shared_ptr<const SearchIndex> index_;
  PipelineConfig config_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<const AnswerExtractor> extractor_;
  std::shared_ptr<const Summarizer> summarizer_;
  mutable std::mutex embed_mu_;
  mutable std::mutex extract_mu_;
  mutable std::mutex summarize_mu_;
};

/// The text a topic contributes as a query.
enum class TopicField { query, question, narrative, concat };

inline TopicField topic_field_from_string(std::string_view s) {
  if (s == "query") return TopicField::query;
  if (s == "question") return TopicField::question;
  if (s == "narrative") return TopicField::narrative;
  if (s == "concat") return TopicField::concat;
  throw std::invalid_argument("unknown topic field '" + std::string(s) + "'");
}

inline std::string topic_text(const Topic& t, TopicField field) {
  switch (field) {
    case TopicField::query: return t.query;
    case TopicField::question: return t.question;
    case TopicField::narrative: return t.narrative;
    case TopicField::concat: {
      std::string out = t.query;
      for (const auto* s : {&t.question, &t.narrative}) {
        if (!s->empty()) out += " " + *s;
      }
      return out;
    }
  }
  return t.query;
}

/// Runs every topic through the engine. A topic whose selected field is
/// empty after tokenization gets an empty block.
inline RunFile run_topics(const Engine& engine, std::span<const Topic> topics, TopicField field,
                          std::size_t depth = kMaxRunDepth) {
  RunFile run;
  for (const auto& t : topics) {
    const auto text = topic_text(t, field);
    std::vector<std::pair<std::string, double>> ranked;
    if (!tokenize(text).empty()) ranked = engine.ranking(text, depth);
    run.add_ranking(t.id, ranked, engine.config().run_tag, depth);
  }
  return run;
}

}  // namespace cosearch
