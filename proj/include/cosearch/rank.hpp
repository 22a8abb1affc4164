#pragma once

// Rank modulation: the retrieval score of each document is scaled by how many
// extracted answer spans it contains and by how close its best paragraph is
// to the summary of the retrieved set.
//
//   Q(q, d) = base^N             N = answer spans contained in d
//   S(q, d) = (1 - w) + w * max_p cos(p, summary)     w = 1/2 by default
//   R(q, d) = S * Q * RRF

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cosearch/corpus.hpp"
#include "cosearch/embedding.hpp"
#include "cosearch/errors.hpp"
#include "cosearch/fusion.hpp"
#include "cosearch/search_index.hpp"
#include "cosearch/text.hpp"

namespace cosearch {

struct RankConstants {
  double answer_base = 1.1;
  double summary_blend = 0.5;
  std::size_t max_spans = 10;
  /// Summaries stay strictly below this many tokens (the shortest length
  /// bucket, "<65").
  std::size_t summary_token_limit = 65;
  std::size_t summary_input_tokens = 512;
  std::size_t sentences_per_paragraph = 4;

  void validate() const {
    if (!(answer_base >= 1.0) || !std::isfinite(answer_base)) throw std::invalid_argument("rank: answer_base must be >= 1");
    if (!(summary_blend >= 0.0 && summary_blend <= 1.0)) throw std::invalid_argument("rank: summary_blend must lie in [0, 1]");
    if (max_spans == 0) throw std::invalid_argument("rank: max_spans must be >= 1");
    if (summary_token_limit < 2) throw std::invalid_argument("rank: summary_token_limit must be >= 2");
    if (summary_input_tokens == 0) throw std::invalid_argument("rank: summary_input_tokens must be >= 1");
    if (sentences_per_paragraph == 0) throw std::invalid_argument("rank: sentences_per_paragraph must be >= 1");
  }
  bool operator==(const RankConstants&) const = default;
};

/// Answer candidates. Non-empty, deduplicated after normalization, capped.
struct AnswerSet {
  std::vector<std::string> spans;
  bool operator==(const AnswerSet&) const = default;
};

inline AnswerSet make_answer_set(std::span<const std::string> raw, std::size_t max_spans) {
  AnswerSet out;
  std::set<std::string> seen;
  for (const auto& s : raw) {
    if (out.spans.size() == max_spans) break;
    auto t = trim(s);
    if (t.empty()) continue;
    auto norm = normalize_for_match(t);
    if (norm.empty() || !seen.insert(std::move(norm)).second) continue;
    out.spans.emplace_back(t);
  }
  return out;
}

struct Summary {
  std::string text;
  std::size_t token_length = 0;
  EmbeddingVector embedding;
  bool operator==(const Summary&) const = default;
};

struct RankScore {
  std::string doc_id;
  double rrf = 0.0;
  double q_factor = 1.0;
  double s_factor = 1.0;
  double final_score = 0.0;
  bool operator==(const RankScore&) const = default;
};

/// Cuts `text` after its `max_tokens`-th token.
inline std::string truncate_to_tokens(std::string_view text, std::size_t max_tokens) {
  const auto spans = tokenize_with_offsets(text);
  if (spans.size() <= max_tokens) return std::string(text);
  if (max_tokens == 0) return {};
  return std::string(text.substr(0, spans[max_tokens - 1].end));
}

/// Wraps summary text: enforces the token limit and embeds it.
inline Summary make_summary(std::string text, const Embedder& embedder, std::size_t token_limit = 65) {
  Summary s;
  s.text = truncate_to_tokens(trim(text), token_limit - 1);
  s.token_length = token_count(s.text);
  s.embedding = embedder.embed(s.text);
  return s;
}

// ---------------------------------------------------------------------------
// Pluggable scorers

class AnswerExtractor {
 public:
  virtual ~AnswerExtractor() = default;
  virtual std::string id() const = 0;
  /// Raw candidate spans, best first.
  virtual std::vector<std::string> extract(std::string_view query, std::span<const std::string> paragraphs) const = 0;
  virtual bool concurrent_safe() const { return true; }
};

class Summarizer {
 public:
  virtual ~Summarizer() = default;
  virtual std::string id() const = 0;
  virtual std::string summarize(std::string_view query, std::span<const std::string> paragraphs) const = 0;
  virtual bool concurrent_safe() const { return true; }
};

/// Scores every sentence by the summed idf of the distinct query terms it
/// contains (idf over the retrieved sentences) and returns the best ones,
/// ties by first occurrence.
class ReferenceAnswerExtractor final : public AnswerExtractor {
 public:
  explicit ReferenceAnswerExtractor(std::size_t max_spans = 10) : max_spans_(max_spans) {}

  std::string id() const override { return "reference-idf-overlap-v1"; }

  std::vector<std::string> extract(std::string_view query, std::span<const std::string> paragraphs) const override {
    const auto query_tokens = tokenize(query);
    const std::set<std::string> query_terms(query_tokens.begin(), query_tokens.end());

    struct Candidate {
      std::string text;
      std::set<std::string> terms;
      double score = 0.0;
    };
    std::vector<Candidate> sentences;
    for (const auto& p : paragraphs) {
      for (auto& s : split_sentences(p)) {
        const auto toks = tokenize(s);
        sentences.push_back({std::move(s), std::set<std::string>(toks.begin(), toks.end()), 0.0});
      }
    }
    std::unordered_map<std::string, std::size_t> df;
    for (const auto& c : sentences) {
      for (const auto& t : query_terms) df[t] += c.terms.contains(t) ? 1 : 0;
    }
    const auto n = static_cast<double>(sentences.size());
    for (auto& c : sentences) {
      for (const auto& t : query_terms) {
        if (c.terms.contains(t)) c.score += std::log((1.0 + n) / (1.0 + static_cast<double>(df[t]))) + 1.0;
      }
    }
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (sentences[i].score > 0.0) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sentences[a].score > sentences[b].score; });
    std::vector<std::string> raw;
    for (const auto i : order) raw.push_back(sentences[i].text);
    return make_answer_set(raw, max_spans_).spans;
  }

 private:
  std::size_t max_spans_;
};

/// Summarizer input: the first sentences of each paragraph in rank order,
/// stopping at the token budget (the last sentence may be cut).
struct SummaryInput {
  std::vector<std::string> sentences;
  std::size_t token_count = 0;
};

inline SummaryInput assemble_summary_input(std::span<const std::string> paragraphs, std::size_t sentences_per_paragraph,
                                           std::size_t max_tokens) {
  SummaryInput in;
  for (const auto& p : paragraphs) {
    auto sentences = split_sentences(p);
    if (sentences.size() > sentences_per_paragraph) sentences.resize(sentences_per_paragraph);
    for (auto& s : sentences) {
      const auto n = token_count(s);
      if (n == 0) continue;
      if (in.token_count + n > max_tokens) {
        auto cut = truncate_to_tokens(s, max_tokens - in.token_count);
        if (!cut.empty()) {
          in.token_count += token_count(cut);
          in.sentences.push_back(std::move(cut));
        }
        return in;
      }
      in.token_count += n;
      in.sentences.push_back(std::move(s));
    }
  }
  return in;
}

/// Extractive stand-in for the abstractive model: ranks input sentences by
/// cosine to the centroid of all input-sentence embeddings and keeps them
/// greedily while the total stays below the token limit. Output keeps input
/// order.
class ReferenceSummarizer final : public Summarizer {
 public:
  ReferenceSummarizer(std::shared_ptr<const Embedder> embedder, RankConstants constants = {})
      : embedder_(std::move(embedder)), constants_(constants) {
    if (!embedder_) throw std::invalid_argument("ReferenceSummarizer: null embedder");
    constants_.validate();
  }

  std::string id() const override { return "reference-centroid-v1"; }
  bool concurrent_safe() const override { return embedder_->concurrent_safe(); }

  std::string summarize(std::string_view /*query*/, std::span<const std::string> paragraphs) const override {
    const auto input = assemble_summary_input(paragraphs, constants_.sentences_per_paragraph,
                                              constants_.summary_input_tokens);
    const auto& sentences = input.sentences;
    if (sentences.empty()) return {};

    const auto dim = embedder_->dimension();
    std::vector<EmbeddingVector> emb;
    std::vector<double> centroid(dim, 0.0);
    for (const auto& s : sentences) {
      emb.push_back(embedder_->embed(s));
      for (std::size_t i = 0; i < dim; ++i) centroid[i] += emb.back().values()[i];
    }
    const double cnorm = std::sqrt(dot(centroid, centroid));
    std::vector<double> score(sentences.size(), 0.0);
    if (cnorm > 0.0) {
      for (std::size_t i = 0; i < sentences.size(); ++i) score[i] = dot(emb[i].values(), centroid) / cnorm;
    }
    std::vector<std::size_t> order(sentences.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

    const auto limit = constants_.summary_token_limit;
    std::vector<bool> chosen(sentences.size(), false);
    std::size_t total = 0;
    for (const auto i : order) {
      const auto n = token_count(sentences[i]);
      if (total + n >= limit) continue;
      chosen[i] = true;
      total += n;
    }
    if (total == 0) return truncate_to_tokens(sentences[order.front()], limit - 1);

    std::string out;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      if (!chosen[i]) continue;
      if (!out.empty()) out.push_back(' ');
      out += sentences[i];
    }
    return out;
  }

 private:
  std::shared_ptr<const Embedder> embedder_;
  RankConstants constants_;
};

// ---------------------------------------------------------------------------
// Factors

inline AnswerSet extract_answers(const AnswerExtractor& extractor, std::string_view query,
                                 std::span<const std::string> paragraphs, std::size_t max_spans = 10) {
  if (paragraphs.empty()) throw std::invalid_argument("extract_answers: no retrieved paragraphs");
  const auto raw = extractor.extract(query, paragraphs);
  return make_answer_set(raw, max_spans);
}

inline Summary summarize(const Summarizer& summarizer, const Embedder& embedder, std::string_view query,
                         std::span<const std::string> paragraphs, std::size_t token_limit = 65) {
  if (paragraphs.empty()) throw Error("nothing to summarize");
  return make_summary(summarizer.summarize(query, paragraphs), embedder, token_limit);
}

/// Number of spans contained in an already normalized document text.
inline std::size_t contained_spans(const AnswerSet& answers, std::string_view normalized_text) {
  std::size_t n = 0;
  for (const auto& span : answers.spans) {
    if (normalized_text.find(normalize_for_match(span)) != std::string_view::npos) ++n;
  }
  return n;
}

/// base^n by repeated multiplication, so q(n + 1) == q(n) * base bit for bit.
inline double answer_factor(std::size_t n, double base = 1.1) {
  double q = 1.0;
  for (std::size_t i = 0; i < n; ++i) q *= base;
  return q;
}

inline double q_factor(const AnswerSet& answers, const Document& d, double base = 1.1) {
  return answer_factor(contained_spans(answers, normalize_for_match(full_text(d))), base);
}

inline double summary_factor(double max_cosine, double blend = 0.5) {
  return (1.0 - blend) + blend * std::clamp(max_cosine, -1.0, 1.0);
}

/// Best paragraph cosine against the summary, 0 for a document without
/// paragraphs.
inline double max_summary_cosine(const Summary& summary, std::span<const Paragraph> paragraphs) {
  double best = -1.0;
  bool any = false;
  for (const auto& p : paragraphs) {
    if (!p.embedding) continue;
    best = std::max(best, cosine(*p.embedding, summary.embedding));
    any = true;
  }
  return any ? best : 0.0;
}

inline double s_factor(const Summary& summary, std::span<const Paragraph> paragraphs, double blend = 0.5) {
  return summary_factor(max_summary_cosine(summary, paragraphs), blend);
}

/// final = S * Q * RRF for every retrieved document, sorted by final score
/// descending with ties by ascending doc id. Without a summary S is 1.
inline std::vector<RankScore> rerank(const RankedList& retrieved, const AnswerSet& answers,
                                     const std::optional<Summary>& summary, const SearchIndex& index,
                                     const RankConstants& constants = {}) {
  std::vector<RankScore> out;
  out.reserve(retrieved.size());
  for (const auto& e : retrieved.entries()) {
    const auto doc = index.find_doc(e.doc_id);
    if (!doc) throw Error("rerank: unknown document '" + e.doc_id + "'");
    RankScore r;
    r.doc_id = e.doc_id;
    r.rrf = e.score;
    r.q_factor = q_factor(answers, index.document(*doc), constants.answer_base);
    r.s_factor = summary ? s_factor(*summary, index.paragraphs_of(*doc), constants.summary_blend) : 1.0;
    r.final_score = r.s_factor * r.q_factor * r.rrf;
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const RankScore& a, const RankScore& b) {
    if (a.final_score != b.final_score) return a.final_score > b.final_score;
    return a.doc_id < b.doc_id;
  });
  return out;
}

}  // namespace cosearch
