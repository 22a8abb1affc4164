#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cosearch/inverted_index.hpp"

using namespace cosearch;

namespace {

InvertedIndex index_of(std::vector<std::pair<std::string, std::string>> docs) {
  std::vector<std::pair<std::string, TokenStream>> streams;
  for (auto& [id, text] : docs) streams.emplace_back(id, tokenize(text));
  return InvertedIndex::from_token_streams(std::move(streams));
}

}  // namespace

TEST(InvertedIndex, HandBuiltPostings) {
  const auto idx = index_of({{"d2", "a c"}, {"d1", "a b"}});
  EXPECT_EQ(idx.doc_ids(), (std::vector<std::string>{"d1", "d2"}));
  ASSERT_EQ(idx.postings().size(), 3u);
  const auto& a = idx.postings().at("a");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(idx.doc_id(a[0].doc), "d1");
  EXPECT_EQ(a[0].tf, 1u);
  EXPECT_EQ(idx.doc_id(a[1].doc), "d2");
  EXPECT_EQ(idx.doc_id(idx.postings().at("b")[0].doc), "d1");
  EXPECT_EQ(idx.doc_id(idx.postings().at("c")[0].doc), "d2");
  EXPECT_DOUBLE_EQ(idx.avg_doc_length(), 2.0);
}

TEST(InvertedIndex, EmptyTextDocument) {
  const auto idx = index_of({{"e", ""}});
  EXPECT_EQ(idx.doc_length(0), 0u);
  EXPECT_TRUE(idx.postings().empty());
  EXPECT_EQ(bm25_scores(idx, {}, tokenize("x")), std::vector<double>{0.0});
  EXPECT_EQ(tfidf_scores(idx, tokenize("x")), std::vector<double>{0.0});
}

TEST(InvertedIndex, BuildIsDeterministicAndRejectsEmpty) {
  std::vector<Document> docs(2);
  docs[0].id = "b";
  docs[0].title = "Beta gamma";
  docs[0].captions = {"Figure of delta"};
  docs[1].id = "a";
  docs[1].abstract = "alpha";
  EXPECT_EQ(InvertedIndex::build(docs), InvertedIndex::build(docs));
  EXPECT_EQ(InvertedIndex::build(docs).df("delta"), 1u);  // captions count as document text
  EXPECT_THROW(InvertedIndex::build(std::vector<Document>{}), Error);
}

TEST(InvertedIndex, FromPartsValidates) {
  EXPECT_THROW(InvertedIndex::from_parts({"a"}, {1, 2}, {}), std::exception);
  std::map<std::string, InvertedIndex::Postings, std::less<>> bad{{"x", {{5, 1}}}};
  EXPECT_THROW(InvertedIndex::from_parts({"a"}, {1}, bad), std::exception);
}

TEST(Tfidf, HandComputation) {
  const auto idx = index_of({{"d1", "a b"}, {"d2", "a c"}});
  EXPECT_GT(tfidf_score(idx, tokenize("b"), "d1"), 0.0);
  EXPECT_EQ(tfidf_score(idx, tokenize("b"), "d2"), 0.0);
  // d1 = (idf_a, idf_b) with idf = ln(3/3)+1 = 1, ln(3/2)+1; query b = (0, 1).
  const double ia = 1.0, ib = std::log(1.5) + 1.0;
  EXPECT_NEAR(tfidf_score(idx, tokenize("b"), "d1"), ib / std::sqrt(ia * ia + ib * ib), 1e-12);
}

TEST(Tfidf, OutOfVocabularyAndIdentity) {
  const auto idx = index_of({{"d1", "alpha"}, {"d2", "alpha beta"}});
  for (double s : tfidf_scores(idx, tokenize("zeta omega"))) EXPECT_EQ(s, 0.0);
  EXPECT_NEAR(tfidf_score(idx, tokenize("alpha"), "d1"), 1.0, 1e-12);
  EXPECT_NEAR(tfidf_score(idx, tokenize("alpha zeta"), "d1"), 1.0, 1e-12);
  EXPECT_THROW(tfidf_score(idx, tokenize("alpha"), "nope"), std::exception);
}

TEST(Bm25, SingleDocumentAnchor) {
  const auto idx = index_of({{"d", "x"}});
  const double s = bm25_score(idx, {}, tokenize("x"), "d");
  EXPECT_NEAR(s, std::log(4.0 / 3.0), 1e-12);
  EXPECT_NEAR(s, 0.28768, 1e-5);
  EXPECT_NEAR(bm25_score(idx, {}, tokenize("x x"), "d"), 2.0 * s, 1e-12);
  EXPECT_EQ(bm25_score(idx, {}, tokenize("y"), "d"), 0.0);
}

TEST(Bm25, LengthNormalization) {
  // Same tf, the shorter document scores higher when b > 0.
  const auto idx = index_of({{"short", "x y"}, {"long", "x y z w v u t"}});
  EXPECT_GT(bm25_score(idx, {}, tokenize("x"), "short"), bm25_score(idx, {}, tokenize("x"), "long"));
  EXPECT_NEAR(bm25_score(idx, {.k1 = 0.9, .b = 0.0}, tokenize("x"), "short"),
              bm25_score(idx, {.k1 = 0.9, .b = 0.0}, tokenize("x"), "long"), 1e-12);
  EXPECT_THROW((Bm25Params{.k1 = -1.0, .b = 0.4}.validate()), std::invalid_argument);
  EXPECT_THROW((Bm25Params{.k1 = 0.9, .b = 1.5}.validate()), std::invalid_argument);
}

TEST(Scores, NonNegativeAndBounded) {
  const auto idx = index_of({{"a", "red green blue red"}, {"b", "green green"}, {"c", "blue"}, {"d", "purple"}});
  for (const char* q : {"red", "green blue", "red red purple", "nothing"}) {
    for (double s : tfidf_scores(idx, tokenize(q))) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
    for (double s : bm25_scores(idx, {}, tokenize(q))) EXPECT_GE(s, 0.0);
  }
}

TEST(Scores, DisjointDocumentKeepsRankOrder) {
  const std::vector<std::pair<std::string, std::string>> base{{"a", "red green"}, {"b", "green blue blue"}, {"c", "red"}};
  auto extended = base;
  extended.emplace_back("z", "unrelated words only");
  const auto i1 = index_of(base);
  const auto i2 = index_of(extended);
  // Growing M moves every idf, so only the orders are comparable.
  for (const char* q : {"red", "green blue", "blue red"}) {
    const auto t = tokenize(q);
    auto order = [](const std::vector<double>& s, std::size_t n) {
      std::vector<std::size_t> o(n);
      std::iota(o.begin(), o.end(), 0);
      std::stable_sort(o.begin(), o.end(), [&](auto x, auto y) { return s[x] > s[y]; });
      return o;
    };
    EXPECT_EQ(order(tfidf_scores(i1, t), 3), order(tfidf_scores(i2, t), 3)) << q;
    EXPECT_EQ(order(bm25_scores(i1, {}, t), 3), order(bm25_scores(i2, {}, t), 3)) << q;
  }
}
