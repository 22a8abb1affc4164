#include <gtest/gtest.h>

#include <random>

#include "cosearch/fusion.hpp"
#include "cosearch/search_index.hpp"
#include "support/synthetic.hpp"

using namespace cosearch;

namespace {

RankedList list_of(std::vector<std::pair<std::string, double>> v) {
  std::vector<RankedList::Entry> e;
  for (auto& [id, s] : v) e.push_back({id, s});
  return RankedList::from_scores(std::move(e));
}

SearchIndex small_index(const HashEmbedder& e) {
  std::vector<Document> docs(4);
  docs[0] = {"d1", "Spike protein", "The spike protein binds ACE2.", {}, {}, {}, ""};
  docs[1] = {"d2", "Drug repurposing", "Existing drugs may be repurposed against coronavirus.", {}, {}, {}, ""};
  docs[2] = {"d3", "Masks", "Face masks reduce transmission.", {"Second paragraph on masks.\n\nThird one."}, {}, {}, ""};
  docs[3] = {"d4", "", "", {}, {}, {}, ""};
  return SearchIndex::build(std::move(docs), e);
}

}  // namespace

TEST(RankedList, InvariantsAndTieBreak) {
  EXPECT_THROW(RankedList({{"a", 1.0}, {"b", 2.0}}), std::invalid_argument);
  EXPECT_THROW(RankedList({{"a", 1.0}, {"a", 0.5}}), std::invalid_argument);
  const auto l = list_of({{"c", 1.0}, {"a", 1.0}, {"b", 2.0}});
  EXPECT_EQ(l.doc_ids(), (std::vector<std::string>{"b", "a", "c"}));
  EXPECT_EQ(l.rank_of("a"), 2u);
  EXPECT_FALSE(l.rank_of("zzz"));
  EXPECT_EQ(l.truncated(1).doc_ids(), std::vector<std::string>{"b"});
}

TEST(Combine, Arithmetic) {
  EXPECT_NEAR(combine_scores(0.5, 1.0, 0.7), 0.65, 1e-15);
  EXPECT_EQ(combine_scores(0.3, 0.9, 1.0), 0.3);
  EXPECT_EQ(combine_scores(0.3, 0.9, 0.0), 0.9);
  EXPECT_THROW(combine_scores(0.3, 0.9, 1.5), std::invalid_argument);
}

TEST(Rrf, Anchors) {
  const auto both = rrf_fuse(list_of({{"d", 3.0}}), list_of({{"d", 9.0}}), 60);
  EXPECT_NEAR(both[0].score, 2.0 / 61.0, 1e-12);
  const auto one = rrf_fuse(list_of({{"d", 3.0}}), list_of({{"e", 1.0}}), 60);
  EXPECT_NEAR(one[0].score, 1.0 / 61.0, 1e-15);
  EXPECT_EQ(one.doc_ids(), (std::vector<std::string>{"d", "e"}));  // tie by id
  EXPECT_THROW(rrf_fuse(RankedList{}, RankedList{}, 0.0), std::invalid_argument);
}

TEST(Rrf, IdenticalListsKeepOrderAndScoresBounded) {
  const auto l = list_of({{"x", 5}, {"y", 4}, {"z", 3}, {"w", 1}});
  const auto f = rrf_fuse(l, l, 60);
  EXPECT_EQ(f.doc_ids(), l.doc_ids());
  for (const auto& e : f.entries()) {
    EXPECT_GT(e.score, 0.0);
    EXPECT_LE(e.score, 2.0 / 61.0);
  }
}

TEST(Rrf, MonotoneInRank) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::string> ids;
    for (int i = 0; i < 8; ++i) ids.push_back("d" + std::to_string(i));
    std::shuffle(ids.begin(), ids.end(), rng);
    auto make = [](const std::vector<std::string>& order) {
      std::vector<RankedList::Entry> e;
      for (std::size_t i = 0; i < order.size(); ++i) e.push_back({order[i], double(order.size() - i)});
      return RankedList(std::move(e));
    };
    auto other = ids;
    std::shuffle(other.begin(), other.end(), rng);
    const auto pos = rng() % 7 + 1;
    const auto target = ids[pos];
    const auto before = rrf_fuse(make(ids), make(other), 60);
    std::swap(ids[pos], ids[pos - 1]);  // move target up one rank
    const auto after = rrf_fuse(make(ids), make(other), 60);
    double s0 = 0, s1 = 0;
    for (const auto& e : before.entries()) s0 = e.doc_id == target ? e.score : s0;
    for (const auto& e : after.entries()) s1 = e.doc_id == target ? e.score : s1;
    EXPECT_GE(s1, s0);
  }
}

TEST(Retrieve, EmptyQueryAndDimensionChecks) {
  HashEmbedder e;
  const auto idx = small_index(e);
  EXPECT_THROW(retrieve("  ?! ", {}, idx, e), Error);
  HashEmbedder other(32);
  EXPECT_THROW(retrieve("spike", {}, idx, other), Error);
}

TEST(Retrieve, ExactLexicalMatchWins) {
  HashEmbedder e;
  const auto idx = small_index(e);
  const auto r = retrieve("coronavirus drug repurposing", {}, idx, e);
  ASSERT_FALSE(r.fused.empty());
  EXPECT_EQ(r.fused[0].doc_id, "d2");
  EXPECT_LE(r.fused.size(), idx.doc_count());
  // Documents with no paragraphs get a neutral cosine.
  EXPECT_EQ(r.max_cosine[*idx.find_doc("d4")], 0.0);
  EXPECT_EQ(r.best_paragraph[*idx.find_doc("d4")], kNoParagraph);
}

TEST(Retrieve, NoLexicalOverlapFallsBackToDense) {
  HashEmbedder e;
  const auto idx = small_index(e);
  const auto r = retrieve("qqqq zzzz", {}, idx, e);
  EXPECT_TRUE(r.tfidf.empty());
  EXPECT_TRUE(r.bm25.empty());
  std::vector<RankedList::Entry> dense_scaled;
  for (const auto& x : r.dense.entries()) dense_scaled.push_back({x.doc_id, 0.7 * x.score});
  EXPECT_EQ(r.combined.doc_ids(), RankedList::from_scores(dense_scaled).doc_ids());
}

TEST(Retrieve, PoolClampAndDeterminism) {
  HashEmbedder e;
  auto docs = fixtures::random_corpus(100, 4);
  const auto idx = SearchIndex::build(docs, e);
  const auto q = docs[17].title;
  const auto r1 = retrieve(q, {.pool_size = 1000}, idx, e);
  EXPECT_LE(r1.fused.size(), 100u);
  EXPECT_EQ(r1.fused[0].doc_id, "doc0017");
  const auto r2 = retrieve(q, {.pool_size = 1000}, idx, e);
  EXPECT_EQ(r1.fused, r2.fused);
  const auto small = retrieve(q, {.pool_size = 5}, idx, e);
  EXPECT_LE(small.fused.size(), 5u);
  EXPECT_LE(small.dense.size(), 5u);
}

TEST(Retrieve, RawScalingKnob) {
  HashEmbedder e;
  const auto idx = small_index(e);
  const auto r = retrieve("spike protein", {.tfidf_scaling = TfidfScaling::raw}, idx, e);
  EXPECT_FALSE(r.fused.empty());
  EXPECT_THROW((FusionConfig{.mu = -0.1}.validate()), std::invalid_argument);
  EXPECT_THROW((FusionConfig{.rrf_k = 0}.validate()), std::invalid_argument);
  EXPECT_THROW((FusionConfig{.pool_size = 0}.validate()), std::invalid_argument);
}
