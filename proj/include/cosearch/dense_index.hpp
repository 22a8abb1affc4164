#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "cosearch/corpus.hpp"
#include "cosearch/embedding.hpp"

namespace cosearch {

struct Neighbor {
  ParagraphKey key;
  double cosine = 0.0;

  bool operator==(const Neighbor&) const = default;
};

/// Exhaustive cosine index over paragraph embeddings. Entries keep insertion
/// order; keys are unique and all vectors share one dimension.
class DenseIndex {
 public:
  explicit DenseIndex(std::size_t dimension = 0) : dimension_(dimension) {}

  void add(ParagraphKey key, const EmbeddingVector& v) {
    if (dimension_ == 0) dimension_ = v.dimension();
    if (v.dimension() != dimension_) throw std::invalid_argument("dense index: dimension mismatch");
    if (!positions_.try_emplace(key, keys_.size()).second) {
      throw std::invalid_argument("dense index: duplicate paragraph key");
    }
    keys_.push_back(std::move(key));
    data_.insert(data_.end(), v.values().begin(), v.values().end());
  }

  std::size_t size() const noexcept { return keys_.size(); }
  bool empty() const noexcept { return keys_.empty(); }
  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<ParagraphKey>& keys() const noexcept { return keys_; }

  std::span<const double> vector_at(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * dimension_, dimension_);
  }

  /// Cosine of `q` with every entry, in entry order.
  std::vector<double> cosines(const EmbeddingVector& q) const {
    if (!empty() && q.dimension() != dimension_) throw std::invalid_argument("dense index: query dimension mismatch");
    std::vector<double> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = std::clamp(dot(vector_at(i), q.values()), -1.0, 1.0);
    return out;
  }

  /// Top `top_k` entries by descending cosine, ties by ascending key.
  std::vector<Neighbor> nn_search(const EmbeddingVector& q, std::size_t top_k) const {
    if (top_k == 0) throw std::invalid_argument("nn_search: top_k must be >= 1");
    if (empty()) return {};
    const auto cos = cosines(q);
    std::vector<std::size_t> order(size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const auto k = std::min(top_k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (cos[a] != cos[b]) return cos[a] > cos[b];
                        return keys_[a] < keys_[b];
                      });
    std::vector<Neighbor> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({keys_[order[i]], cos[order[i]]});
    return out;
  }

  bool operator==(const DenseIndex& o) const {
    return dimension_ == o.dimension_ && keys_ == o.keys_ && data_ == o.data_;
  }

 private:
  std::size_t dimension_;
  std::vector<ParagraphKey> keys_;
  std::vector<double> data_;
  std::map<ParagraphKey, std::size_t> positions_;
};

}  // namespace cosearch
