#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cosearch/corpus.hpp"
#include "cosearch/dense_index.hpp"
#include "cosearch/embedding.hpp"
#include "cosearch/errors.hpp"
#include "cosearch/inverted_index.hpp"

namespace cosearch {

/// Everything query time needs: documents, embedded paragraphs, the keyword
/// index and the dense paragraph index. Document numbers are shared with the
/// inverted index (ascending id). Immutable once built.
class SearchIndex {
 public:
  /// Splits, embeds and indexes `docs`. A document that splits into no
  /// paragraphs is represented by one paragraph holding its full text.
  static SearchIndex build(std::vector<Document> docs, const Embedder& embedder) {
    if (docs.empty()) throw Error("empty corpus");
    std::sort(docs.begin(), docs.end(), [](const Document& a, const Document& b) { return a.id < b.id; });
    std::vector<Paragraph> paragraphs;
    for (const auto& d : docs) {
      auto ps = split_paragraphs(d);
      if (ps.empty()) {
        auto text = std::string(trim(full_text(d)));
        if (token_count(text) > 0) ps.push_back({d.id, 0, ParagraphKind::body, std::move(text), std::nullopt});
      }
      for (auto& p : ps) {
        p.embedding = embedder.embed(p.text);
        paragraphs.push_back(std::move(p));
      }
    }
    auto inverted = InvertedIndex::build(docs);
    DenseIndex dense(embedder.dimension());
    for (const auto& p : paragraphs) dense.add(p.key(), *p.embedding);
    return assemble(std::move(docs), std::move(paragraphs), std::move(inverted), std::move(dense),
                    embedder.id());
  }

  /// Validates and links persisted parts.
  static SearchIndex assemble(std::vector<Document> docs, std::vector<Paragraph> paragraphs,
                              InvertedIndex inverted, DenseIndex dense, std::string embedder_id) {
    if (docs.size() != inverted.doc_count()) throw Error("search index: document count mismatch");
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (docs[i].id != inverted.doc_id(static_cast<std::uint32_t>(i))) {
        throw Error("search index: documents out of order with the inverted index");
      }
    }
    if (paragraphs.size() != dense.size()) throw Error("search index: paragraph count mismatch");
    SearchIndex s;
    s.doc_paragraphs_.assign(docs.size(), {0, 0});
    std::uint32_t doc = 0;
    for (std::size_t i = 0; i < paragraphs.size(); ++i) {
      const auto& p = paragraphs[i];
      if (!p.embedding || p.embedding->dimension() != dense.dimension()) {
        throw Error("search index: paragraph without a matching embedding");
      }
      if (!(p.key() == dense.keys()[i])) throw Error("search index: dense keys out of order");
      while (doc < docs.size() && docs[doc].id < p.doc_id) ++doc;
      if (doc == docs.size() || docs[doc].id != p.doc_id) {
        throw Error("search index: paragraph '" + p.doc_id + "' has no document or is out of order");
      }
      auto& range = s.doc_paragraphs_[doc];
      if (range.first == range.second) range.first = i;
      else if (range.second != i) throw Error("search index: paragraphs of a document are not contiguous");
      range.second = i + 1;
      s.paragraph_doc_.push_back(doc);
    }
    s.documents_ = std::move(docs);
    s.paragraphs_ = std::move(paragraphs);
    s.inverted_ = std::move(inverted);
    s.dense_ = std::move(dense);
    s.embedder_id_ = std::move(embedder_id);
    return s;
  }

  std::size_t doc_count() const noexcept { return documents_.size(); }
  const std::vector<Document>& documents() const noexcept { return documents_; }
  const Document& document(std::uint32_t n) const { return documents_.at(n); }
  const std::vector<Paragraph>& paragraphs() const noexcept { return paragraphs_; }
  std::uint32_t paragraph_doc(std::size_t i) const { return paragraph_doc_.at(i); }

  std::span<const Paragraph> paragraphs_of(std::uint32_t doc) const {
    const auto [b, e] = doc_paragraphs_.at(doc);
    return std::span<const Paragraph>(paragraphs_).subspan(b, e - b);
  }
  std::pair<std::size_t, std::size_t> paragraph_range(std::uint32_t doc) const { return doc_paragraphs_.at(doc); }

  const InvertedIndex& inverted() const noexcept { return inverted_; }
  const DenseIndex& dense() const noexcept { return dense_; }
  const std::string& embedder_id() const noexcept { return embedder_id_; }
  std::size_t dimension() const noexcept { return dense_.dimension(); }

  std::optional<std::uint32_t> find_doc(std::string_view id) const { return inverted_.find_doc(id); }

  bool operator==(const SearchIndex& o) const {
    return documents_ == o.documents_ && paragraphs_ == o.paragraphs_ && inverted_ == o.inverted_ &&
           dense_ == o.dense_ && embedder_id_ == o.embedder_id_;
  }

 private:
  SearchIndex() = default;

  std::vector<Document> documents_;
  std::vector<Paragraph> paragraphs_;
  std::vector<std::uint32_t> paragraph_doc_;
  std::vector<std::pair<std::size_t, std::size_t>> doc_paragraphs_;
  InvertedIndex inverted_;
  DenseIndex dense_;
  std::string embedder_id_;
};

}  // namespace cosearch
