#pragma once

// Retrieval: dense/TF-IDF linear combination followed by reciprocal rank
// fusion with the BM25 ranking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cosearch/embedding.hpp"
#include "cosearch/errors.hpp"
#include "cosearch/inverted_index.hpp"
#include "cosearch/search_index.hpp"

namespace cosearch {

enum class TfidfScaling {
  max_normalized,  // divide by the query's best TF-IDF score
  raw,
};

struct FusionConfig {
  double mu = 0.7;
  double rrf_k = 60.0;
  std::size_t pool_size = 1000;
  TfidfScaling tfidf_scaling = TfidfScaling::max_normalized;

  void validate() const {
    if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("fusion: mu must lie in [0, 1]");
    if (!(rrf_k > 0.0) || !std::isfinite(rrf_k)) throw std::invalid_argument("fusion: rrf_k must be > 0");
    if (pool_size == 0) throw std::invalid_argument("fusion: pool_size must be >= 1");
  }
  bool operator==(const FusionConfig&) const = default;
};

/// Ordered (doc id, score) list. Scores are non-increasing, ids unique.
class RankedList {
 public:
  struct Entry {
    std::string doc_id;
    double score = 0.0;
    bool operator==(const Entry&) const = default;
  };

  RankedList() = default;

  /// Takes entries already in rank order; throws if they break the invariants.
  explicit RankedList(std::vector<Entry> ordered) : entries_(std::move(ordered)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (i > 0 && entries_[i].score > entries_[i - 1].score) {
        throw std::invalid_argument("ranked list: scores must be non-increasing");
      }
      if (!rank_.try_emplace(entries_[i].doc_id, i + 1).second) {
        throw std::invalid_argument("ranked list: duplicate doc id '" + entries_[i].doc_id + "'");
      }
    }
  }

  /// Sorts by score descending, ties by ascending doc id.
  static RankedList from_scores(std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    });
    return RankedList(std::move(entries));
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const Entry& operator[](std::size_t i) const { return entries_.at(i); }

  /// 1-based rank, or nullopt when absent.
  std::optional<std::size_t> rank_of(std::string_view doc_id) const {
    auto it = rank_.find(std::string(doc_id));
    if (it == rank_.end()) return std::nullopt;
    return it->second;
  }

  RankedList truncated(std::size_t n) const {
    if (n >= entries_.size()) return *this;
    return RankedList(std::vector<Entry>(entries_.begin(), entries_.begin() + static_cast<std::ptrdiff_t>(n)));
  }

  std::vector<std::string> doc_ids() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.doc_id);
    return out;
  }

  bool operator==(const RankedList& o) const { return entries_ == o.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> rank_;
};

/// C(q, d) = mu * max paragraph cosine + (1 - mu) * TF-IDF term.
inline double combine_scores(double max_cosine, double tfidf_term, double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw std::invalid_argument("combine_scores: mu must lie in [0, 1]");
  return mu * max_cosine + (1.0 - mu) * tfidf_term;
}

/// Sum of 1 / (k + rank) over both lists; a list missing the document adds 0.
/// Sorted by fused score descending, ties by ascending doc id.
inline RankedList rrf_fuse(const RankedList& list_c, const RankedList& list_b, double k) {
  if (!(k > 0.0) || !std::isfinite(k)) throw std::invalid_argument("rrf_fuse: k must be > 0");
  std::unordered_map<std::string, double> fused;
  auto accumulate = [&](const RankedList& list) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      fused[list[i].doc_id] += 1.0 / (k + static_cast<double>(i + 1));
    }
  };
  accumulate(list_c);
  accumulate(list_b);
  std::vector<RankedList::Entry> entries;
  entries.reserve(fused.size());
  for (auto& [id, score] : fused) entries.push_back({id, score});
  return RankedList::from_scores(std::move(entries));
}

/// Intermediate and final lists of one retrieval.
struct Retrieval {
  RankedList dense;     // documents by best paragraph cosine, top pool_size
  RankedList tfidf;     // documents with TF-IDF > 0, top pool_size
  RankedList combined;  // candidate pool ranked by C(q, d)
  RankedList bm25;      // documents with BM25 > 0, top pool_size
  RankedList fused;     // RRF(combined, bm25), truncated to pool_size
  /// Per document number: best paragraph cosine and that paragraph's index
  /// (npos for documents without paragraphs).
  std::vector<double> max_cosine;
  std::vector<std::size_t> best_paragraph;
  EmbeddingVector query_embedding;
};

inline constexpr std::size_t kNoParagraph = static_cast<std::size_t>(-1);

namespace detail {

inline RankedList top_by_score(const SearchIndex& index, const std::vector<double>& scores, std::size_t n,
                               bool positive_only) {
  std::vector<RankedList::Entry> entries;
  for (std::size_t d = 0; d < scores.size(); ++d) {
    if (positive_only && !(scores[d] > 0.0)) continue;
    entries.push_back({index.document(static_cast<std::uint32_t>(d)).id, scores[d]});
  }
  return RankedList::from_scores(std::move(entries)).truncated(n);
}

}  // namespace detail

/// Full retrieval for one query:
///  1. exhaustive dense search, reduced to the best paragraph per document;
///  2. C(q, d) over the union of the dense and TF-IDF top pool_size -> R_C;
///  3. BM25 top pool_size -> R_B;
///  4. RRF(R_C, R_B), truncated to pool_size.
inline Retrieval retrieve(std::string_view query, const FusionConfig& cfg, const SearchIndex& index,
                          const Embedder& embedder, const Bm25Params& bm25 = {}) {
  cfg.validate();
  const auto tokens = tokenize(query);
  if (tokens.empty()) throw Error("empty query");
  if (embedder.dimension() != index.dimension()) throw Error("embedder dimension does not match the index");

  Retrieval r;
  r.query_embedding = embedder.embed(query);

  const auto n_docs = index.doc_count();
  // Documents without paragraphs keep a neutral cosine of 0.
  r.max_cosine.assign(n_docs, 0.0);
  r.best_paragraph.assign(n_docs, kNoParagraph);
  const auto cos = index.dense().cosines(r.query_embedding);
  for (std::size_t i = 0; i < cos.size(); ++i) {
    const auto d = index.paragraph_doc(i);
    if (r.best_paragraph[d] == kNoParagraph || cos[i] > r.max_cosine[d]) {
      r.max_cosine[d] = cos[i];
      r.best_paragraph[d] = i;
    }
  }
  r.dense = detail::top_by_score(index, r.max_cosine, cfg.pool_size, false);

  auto tfidf = tfidf_scores(index.inverted(), tokens);
  r.tfidf = detail::top_by_score(index, tfidf, cfg.pool_size, true);
  if (cfg.tfidf_scaling == TfidfScaling::max_normalized) {
    const double best = tfidf.empty() ? 0.0 : *std::max_element(tfidf.begin(), tfidf.end());
    for (double& s : tfidf) s = best > 0.0 ? s / best : 0.0;
  }

  std::set<std::string> pool;
  for (const auto& e : r.dense.entries()) pool.insert(e.doc_id);
  for (const auto& e : r.tfidf.entries()) pool.insert(e.doc_id);
  std::vector<RankedList::Entry> combined;
  combined.reserve(pool.size());
  for (const auto& id : pool) {
    const auto d = *index.find_doc(id);
    combined.push_back({id, combine_scores(r.max_cosine[d], tfidf[d], cfg.mu)});
  }
  r.combined = RankedList::from_scores(std::move(combined));

  r.bm25 = detail::top_by_score(index, bm25_scores(index.inverted(), bm25, tokens), cfg.pool_size, true);
  r.fused = rrf_fuse(r.combined, r.bm25, cfg.rrf_k).truncated(cfg.pool_size);
  return r;
}

}  // namespace cosearch
