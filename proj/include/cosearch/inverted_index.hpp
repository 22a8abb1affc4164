#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cosearch/corpus.hpp"
#include "cosearch/errors.hpp"
#include "cosearch/text.hpp"

namespace cosearch {

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;

  void validate() const {
    if (!(k1 > 0.0) || !std::isfinite(k1)) throw std::invalid_argument("bm25: k1 must be > 0");
    if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("bm25: b must lie in [0, 1]");
  }
  bool operator==(const Bm25Params&) const = default;
};

struct Posting {
  std::uint32_t doc = 0;  // document number; numbers follow ascending doc id
  std::uint32_t tf = 0;

  bool operator==(const Posting&) const = default;
};

/// Document-level inverted index. Documents are numbered in ascending id
/// order, so posting lists sorted by number are also sorted by id.
class InvertedIndex {
 public:
  using Postings = std::vector<Posting>;

  /// Indexes title + abstract + body + captions of every document.
  static InvertedIndex build(std::span<const Document> corpus) {
    if (corpus.empty()) throw Error("empty corpus");
    std::vector<std::pair<std::string, TokenStream>> streams;
    streams.reserve(corpus.size());
    for (const auto& d : corpus) streams.emplace_back(d.id, tokenize(full_text(d)));
    return from_token_streams(std::move(streams));
  }

  static InvertedIndex from_token_streams(std::vector<std::pair<std::string, TokenStream>> docs) {
    if (docs.empty()) throw Error("empty corpus");
    std::sort(docs.begin(), docs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    InvertedIndex idx;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (i > 0 && docs[i].first == docs[i - 1].first) {
        throw std::invalid_argument("duplicate document id '" + docs[i].first + "'");
      }
      const auto n = static_cast<std::uint32_t>(i);
      idx.doc_ids_.push_back(docs[i].first);
      idx.doc_lengths_.push_back(static_cast<std::uint32_t>(docs[i].second.size()));
      std::map<std::string_view, std::uint32_t> tf;
      for (const auto& t : docs[i].second) ++tf[t];
      for (const auto& [term, count] : tf) idx.postings_[std::string(term)].push_back({n, count});
    }
    idx.finalize();
    return idx;
  }

  /// Reassembles an index from persisted parts; statistics are recomputed and
  /// the parts validated.
  static InvertedIndex from_parts(std::vector<std::string> doc_ids, std::vector<std::uint32_t> doc_lengths,
                                  std::map<std::string, Postings, std::less<>> postings) {
    if (doc_ids.empty()) throw Error("empty corpus");
    if (doc_ids.size() != doc_lengths.size()) throw Error("index: doc id/length count mismatch");
    if (!std::is_sorted(doc_ids.begin(), doc_ids.end()) ||
        std::adjacent_find(doc_ids.begin(), doc_ids.end()) != doc_ids.end()) {
      throw Error("index: document ids must be strictly ascending");
    }
    std::vector<std::uint64_t> tf_sum(doc_ids.size(), 0);
    for (const auto& [term, list] : postings) {
      if (list.empty()) throw Error("index: empty posting list for '" + term + "'");
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (list[i].doc >= doc_ids.size() || list[i].tf == 0 || (i > 0 && list[i].doc <= list[i - 1].doc)) {
          throw Error("index: invalid posting list for '" + term + "'");
        }
        tf_sum[list[i].doc] += list[i].tf;
      }
    }
    for (std::size_t d = 0; d < doc_ids.size(); ++d) {
      if (tf_sum[d] != doc_lengths[d]) throw Error("index: document length disagrees with postings");
    }
    InvertedIndex idx;
    idx.doc_ids_ = std::move(doc_ids);
    idx.doc_lengths_ = std::move(doc_lengths);
    idx.postings_ = std::move(postings);
    idx.finalize();
    return idx;
  }

  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  const std::vector<std::string>& doc_ids() const noexcept { return doc_ids_; }
  const std::string& doc_id(std::uint32_t n) const { return doc_ids_.at(n); }
  std::uint32_t doc_length(std::uint32_t n) const { return doc_lengths_.at(n); }
  const std::vector<std::uint32_t>& doc_lengths() const noexcept { return doc_lengths_; }
  double avg_doc_length() const noexcept { return avg_doc_length_; }
  const std::map<std::string, Postings, std::less<>>& postings() const noexcept { return postings_; }

  std::optional<std::uint32_t> find_doc(std::string_view id) const {
    auto it = std::lower_bound(doc_ids_.begin(), doc_ids_.end(), id);
    if (it == doc_ids_.end() || *it != id) return std::nullopt;
    return static_cast<std::uint32_t>(it - doc_ids_.begin());
  }

  std::uint32_t require_doc(std::string_view id) const {
    auto n = find_doc(id);
    if (!n) throw Error("unknown document id '" + std::string(id) + "'");
    return *n;
  }

  const Postings* find_postings(std::string_view term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
  }

  std::size_t df(std::string_view term) const {
    const auto* p = find_postings(term);
    return p ? p->size() : 0;
  }

  /// Smoothed TF-IDF idf: ln((1 + M) / (1 + df)) + 1.
  double tfidf_idf(std::size_t df) const noexcept {
    const auto m = static_cast<double>(doc_count());
    return std::log((1.0 + m) / (1.0 + static_cast<double>(df))) + 1.0;
  }

  /// BM25 idf: ln(1 + (M - df + 0.5) / (df + 0.5)).
  double bm25_idf(std::size_t df) const noexcept {
    const auto m = static_cast<double>(doc_count());
    const auto f = static_cast<double>(df);
    return std::log(1.0 + (m - f + 0.5) / (f + 0.5));
  }

  /// L2 norm of each document's TF-IDF vector.
  const std::vector<double>& tfidf_norms() const noexcept { return tfidf_norms_; }

  bool operator==(const InvertedIndex& o) const {
    return doc_ids_ == o.doc_ids_ && doc_lengths_ == o.doc_lengths_ && postings_ == o.postings_;
  }

 private:
  void finalize() {
    std::uint64_t total = 0;
    for (const auto len : doc_lengths_) total += len;
    avg_doc_length_ = static_cast<double>(total) / static_cast<double>(doc_ids_.size());
    tfidf_norms_.assign(doc_ids_.size(), 0.0);
    for (const auto& [term, list] : postings_) {
      const double idf = tfidf_idf(list.size());
      for (const auto& p : list) {
        const double w = (1.0 + std::log(static_cast<double>(p.tf))) * idf;
        tfidf_norms_[p.doc] += w * w;
      }
    }
    for (double& n : tfidf_norms_) n = std::sqrt(n);
  }

  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  std::map<std::string, Postings, std::less<>> postings_;
  double avg_doc_length_ = 0.0;
  std::vector<double> tfidf_norms_;
};

/// Cosine between the query's and every document's TF-IDF vectors, with
/// weight (1 + ln tf) * idf. Query terms absent from the vocabulary carry no
/// dimension. Indexed by document number; each value lies in [0, 1].
inline std::vector<double> tfidf_scores(const InvertedIndex& idx, const TokenStream& query) {
  std::vector<double> scores(idx.doc_count(), 0.0);
  std::map<std::string_view, std::uint32_t> qtf;
  for (const auto& t : query) ++qtf[t];

  double qnorm2 = 0.0;
  for (const auto& [term, count] : qtf) {
    const auto* list = idx.find_postings(term);
    if (list == nullptr) continue;
    const double idf = idx.tfidf_idf(list->size());
    const double wq = (1.0 + std::log(static_cast<double>(count))) * idf;
    qnorm2 += wq * wq;
    for (const auto& p : *list) {
      scores[p.doc] += wq * (1.0 + std::log(static_cast<double>(p.tf))) * idf;
    }
  }
  if (qnorm2 == 0.0) return scores;
  const double qnorm = std::sqrt(qnorm2);
  const auto& norms = idx.tfidf_norms();
  for (std::size_t d = 0; d < scores.size(); ++d) {
    if (scores[d] > 0.0) scores[d] = std::min(1.0, scores[d] / (qnorm * norms[d]));
  }
  return scores;
}

inline double tfidf_score(const InvertedIndex& idx, const TokenStream& query, std::string_view doc_id) {
  const auto n = idx.require_doc(doc_id);
  return tfidf_scores(idx, query)[n];
}

/// Okapi BM25 for every document, bag semantics over query tokens.
inline std::vector<double> bm25_scores(const InvertedIndex& idx, const Bm25Params& params,
                                       const TokenStream& query) {
  params.validate();
  std::vector<double> scores(idx.doc_count(), 0.0);
  const double avg = idx.avg_doc_length();
  for (const auto& term : query) {
    const auto* list = idx.find_postings(term);
    if (list == nullptr) continue;
    const double idf = idx.bm25_idf(list->size());
    for (const auto& p : *list) {
      const double tf = p.tf;
      const double len_ratio = avg > 0.0 ? idx.doc_length(p.doc) / avg : 0.0;
      scores[p.doc] += idf * (tf * (params.k1 + 1.0)) /
                       (tf + params.k1 * (1.0 - params.b + params.b * len_ratio));
    }
  }
  return scores;
}

inline double bm25_score(const InvertedIndex& idx, const Bm25Params& params, const TokenStream& query,
                         std::string_view doc_id) {
  const auto n = idx.require_doc(doc_id);
  return bm25_scores(idx, params, query)[n];
}

}  // namespace cosearch
