#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cosearch/text.hpp"

namespace cosearch {

/// Unit-norm dense vector. Construction normalizes; all entries are finite.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;

  /// Normalizes `values` to unit L2 norm. Throws std::invalid_argument on an
  /// empty, zero or non-finite input.
  static EmbeddingVector normalized(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("embedding: empty vector");
    double norm2 = 0.0;
    for (const double v : values) {
      if (!std::isfinite(v)) throw std::invalid_argument("embedding: non-finite entry");
      norm2 += v * v;
    }
    if (!(norm2 > 0.0) || !std::isfinite(norm2)) {
      throw std::invalid_argument("embedding: zero vector cannot be normalized");
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : values) v *= inv;
    EmbeddingVector out;
    out.values_ = std::move(values);
    return out;
  }

  /// Adopts values that are already unit-norm (within 1e-6) bit for bit.
  static EmbeddingVector from_unit(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("embedding: empty vector");
    double norm2 = 0.0;
    for (const double v : values) {
      if (!std::isfinite(v)) throw std::invalid_argument("embedding: non-finite entry");
      norm2 += v * v;
    }
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-6) throw std::invalid_argument("embedding: vector is not unit-norm");
    EmbeddingVector out;
    out.values_ = std::move(values);
    return out;
  }

  /// First standard basis vector; stands in for text with no features.
  static EmbeddingVector null_vector(std::size_t dimension) {
    std::vector<double> v(dimension, 0.0);
    v.at(0) = 1.0;
    return normalized(std::move(v));
  }

  std::size_t dimension() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  bool operator==(const EmbeddingVector&) const = default;

 private:
  std::vector<double> values_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("embedding: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Cosine of two unit vectors, clamped to [-1, 1] against rounding.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  return std::clamp(dot(a.values(), b.values()), -1.0, 1.0);
}

/// Text encoder. Implementations must be deterministic for a fixed instance.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dimension() const = 0;
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  /// False when `embed` must not be called from several threads at once.
  virtual bool concurrent_safe() const { return true; }
};

/// Reference encoder: character trigrams of every token (with word-boundary
/// markers) are hashed and summed as seeded random +/-1 projections, then
/// L2-normalized. Texts with overlapping vocabulary land close together;
/// texts with disjoint trigrams are near-orthogonal.
class HashEmbedder final : public Embedder {
 public:
  static constexpr std::size_t kDefaultDimension = 256;
  static constexpr std::uint64_t kDefaultSeed = 0x5eed'c0de'2020ULL;

  explicit HashEmbedder(std::size_t dimension = kDefaultDimension,
                        std::uint64_t seed = kDefaultSeed)
      : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw std::invalid_argument("HashEmbedder: dimension must be >= 1");
  }

  std::string id() const override {
    return "hash-trigram-v1:d=" + std::to_string(dimension_) + ":seed=" + std::to_string(seed_);
  }
  std::size_t dimension() const override { return dimension_; }
  std::uint64_t seed() const noexcept { return seed_; }

  EmbeddingVector embed(std::string_view text) const override {
    std::unordered_map<std::uint64_t, double> features;
    for (const auto& token : tokenize(text)) {
      for (auto& gram : trigrams(token)) features[feature_hash(gram)] += 1.0;
    }
    if (features.empty()) return EmbeddingVector::null_vector(dimension_);

    std::vector<double> acc(dimension_, 0.0);
    for (const auto& [hash, weight] : features) project(hash, weight, acc);
    // Coincidental cancellation to an exact zero vector is possible in tiny
    // dimensions only.
    if (std::all_of(acc.begin(), acc.end(), [](double v) { return v == 0.0; })) {
      return EmbeddingVector::null_vector(dimension_);
    }
    return EmbeddingVector::normalized(std::move(acc));
  }

  /// Character trigrams of "<token>" by code point.
  static std::vector<std::string> trigrams(std::string_view token) {
    std::vector<std::string> chars{"<"};
    for (std::size_t pos = 0; pos < token.size();) {
      const auto [cp, len] = utf8::decode(token, pos);
      std::string c;
      utf8::append(c, cp);
      chars.push_back(std::move(c));
      pos += len;
    }
    chars.emplace_back(">");
    std::vector<std::string> out;
    for (std::size_t i = 0; i + 2 < chars.size(); ++i) {
      out.push_back(chars[i] + chars[i + 1] + chars[i + 2]);
    }
    return out;
  }

 private:
  static std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t feature_hash(std::string_view gram) const noexcept {
    return fnv1a64(gram, 0xcbf29ce484222325ULL ^ seed_);
  }

  void project(std::uint64_t hash, double weight, std::vector<double>& acc) const {
    std::uint64_t state = hash;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < dimension_; ++i) {
      if (i % 64 == 0) bits = splitmix64(state);
      acc[i] += (bits & 1) ? weight : -weight;
      bits >>= 1;
    }
  }

  std::size_t dimension_;
  std::uint64_t seed_;
};

}  // namespace cosearch
