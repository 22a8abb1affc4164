// Acceptance suite: one line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "cosearch/eval.hpp"
#include "cosearch/fusion.hpp"
#include "cosearch/pipeline.hpp"
#include "cosearch/rank.hpp"
#include "support/metric_oracle.hpp"
#include "support/synthetic.hpp"

using namespace cosearch;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------

Verdict metric_oracle() {
  Verdict v;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2020);
  double worst = 0.0;
  std::size_t checked = 0;
  for (int instance = 0; instance < 200; ++instance) {
    const int n_topics = static_cast<int>(rng() % 3) + 1;
    for (int t = 0; t < n_topics; ++t) {
      const auto m = fixtures::random_metric_instance(rng, 20);
      const oracle::Judgements q(m.qrels.begin(), m.qrels.end());
      const std::pair<double, double> pairs[] = {
          {precision_at_n(m.run, m.qrels, 5), oracle::precision(m.run, q, 5)},
          {precision_at_n(m.run, m.qrels, 10), oracle::precision(m.run, q, 10)},
          {ndcg_at_n(m.run, m.qrels, 10), oracle::ndcg(m.run, q, 10)},
          {average_precision(m.run, m.qrels), oracle::average_precision(m.run, q)},
          {bpref(m.run, m.qrels), oracle::bpref(m.run, q)},
      };
      for (const auto& [got, want] : pairs) {
        worst = std::max(worst, std::abs(got - want));
        v.check(std::abs(got - want) <= 1e-9, "instance " + std::to_string(instance) + ": " + fmt(got) + " vs " + fmt(want));
        ++checked;
      }
    }
  }
  const double secs = seconds_since(t0);
  v.check(secs < 10.0, "took " + fmt(secs) + " s");
  if (v.pass) v.detail = std::to_string(checked) + " values, max |diff| " + fmt(worst) + ", " + fmt(secs) + " s";
  return v;
}

Verdict anchors() {
  Verdict v;
  {
    const TopicJudgements q{{"a", 2}, {"b", 0}, {"c", 1}};
    const std::vector<std::string> run{"a", "b", "c"};
    const double n = ndcg_at_n(run, q, 10);
    v.check(std::abs(n - 0.876976) <= 1e-5, "nDCG " + fmt(n));
  }
  {
    const TopicJudgements q{{"a", 1}, {"b", 0}, {"c", 1}};
    const std::vector<std::string> run{"a", "b", "c"};
    const double ap = average_precision(run, q);
    v.check(std::abs(ap - 0.833333) <= 1e-6, "AP " + fmt(ap));
  }
  {
    const TopicJudgements q{{"n", 0}, {"r1", 1}, {"r2", 1}};
    const std::vector<std::string> run{"n", "r1", "r2"};
    const double b = bpref(run, q);
    v.check(b == 0.5, "Bpref " + fmt(b));
  }
  {
    const RankedList a({{"d", 0.9}}), b({{"d", 12.0}});
    const auto fused = rrf_fuse(a, b, 60.0);
    v.check(std::abs(fused[0].score - 2.0 / 61.0) <= 1e-12, "RRF " + fmt(fused[0].score));
  }
  if (v.pass) v.detail = "nDCG, AP, Bpref, RRF";
  return v;
}

Verdict bpref_unjudged_invariance() {
  Verdict v;
  std::mt19937_64 rng(613);
  std::size_t inserted = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const auto m = fixtures::random_metric_instance(rng, 20);
    const double before = bpref(m.run, m.qrels);
    auto run = m.run;
    const std::size_t extra = rng() % 11;
    for (std::size_t i = 0; i < extra; ++i) {
      const auto pos = rng() % (run.size() + 1);
      run.insert(run.begin() + static_cast<std::ptrdiff_t>(pos), "unjudged" + std::to_string(i));
    }
    inserted += extra;
    const double after = bpref(run, m.qrels);
    v.check(after == before, "instance " + std::to_string(instance) + ": " + fmt(before) + " -> " + fmt(after));
  }
  if (v.pass) v.detail = "100 instances, " + std::to_string(inserted) + " unjudged inserts, diff 0";
  return v;
}

std::vector<std::string> random_queries(std::mt19937_64& rng, std::size_t count, std::size_t vocabulary) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < count; ++i) {
    std::string q;
    const auto len = rng() % 4 + 1;
    for (std::size_t k = 0; k < len; ++k) q += (q.empty() ? "" : " ") + fixtures::word(rng() % vocabulary);
    out.push_back(q);
  }
  return out;
}

// Reference orderings computed directly from per-document scores.
std::vector<std::string> order_by(const SearchIndex& idx, const std::vector<double>& scores) {
  std::vector<std::uint32_t> ids(scores.size());
  for (std::uint32_t i = 0; i < ids.size(); ++i) ids[i] = i;
  std::sort(ids.begin(), ids.end(), [&](auto a, auto b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return idx.document(a).id < idx.document(b).id;
  });
  std::vector<std::string> out;
  for (auto i : ids) out.push_back(idx.document(i).id);
  return out;
}

Verdict fusion_degeneracy() {
  Verdict v;
  HashEmbedder e;
  const auto idx = SearchIndex::build(fixtures::random_corpus(50, 614, 300), e);
  std::mt19937_64 rng(614);
  const auto queries = random_queries(rng, 20, 300);
  for (const auto& q : queries) {
    // Dense-only: best paragraph cosine per document.
    std::vector<double> dense(idx.doc_count(), -2.0);
    const auto cos = idx.dense().cosines(e.embed(q));
    for (std::size_t p = 0; p < cos.size(); ++p) {
      const auto d = idx.paragraph_doc(p);
      dense[d] = std::max(dense[d], cos[p]);
    }
    const auto tfidf = tfidf_scores(idx.inverted(), tokenize(q));

    FusionConfig one;
    one.mu = 1.0;
    const auto r1 = retrieve(q, one, idx, e);
    v.check(r1.combined.doc_ids() == order_by(idx, dense), "mu=1 differs from dense order for '" + q + "'");

    FusionConfig zero;
    zero.mu = 0.0;
    const auto r0 = retrieve(q, zero, idx, e);
    v.check(r0.combined.doc_ids() == order_by(idx, tfidf), "mu=0 differs from TF-IDF order for '" + q + "'");
  }
  if (v.pass) v.detail = "50 docs, 20 queries, mu=1 and mu=0";
  return v;
}

Verdict rrf_rank_only() {
  Verdict v;
  std::mt19937_64 rng(615);
  std::uniform_real_distribution<double> score(0.0, 10.0);
  std::uniform_real_distribution<double> log_scale(-6.0, 6.0);
  for (int instance = 0; instance < 20; ++instance) {
    auto make = [&](double factor, std::uint64_t seed) {
      std::mt19937_64 local(seed);
      std::vector<RankedList::Entry> es;
      const auto n = local() % 30 + 1;
      for (std::size_t i = 0; i < n; ++i) {
        es.push_back({"d" + std::to_string(local() % 50), 0.0});
      }
      std::set<std::string> seen;
      std::vector<RankedList::Entry> uniq;
      for (auto& x : es) {
        if (seen.insert(x.doc_id).second) uniq.push_back({x.doc_id, std::uniform_real_distribution<double>(0.0, 10.0)(local) * factor});
      }
      return RankedList::from_scores(std::move(uniq));
    };
    const auto sa = rng(), sb = rng();
    const double ca = std::exp(log_scale(rng)), cb = std::exp(log_scale(rng));
    const auto base = rrf_fuse(make(1.0, sa), make(1.0, sb), 60.0).doc_ids();
    v.check(rrf_fuse(make(ca, sa), make(1.0, sb), 60.0).doc_ids() == base, "scaling list C changed the order");
    v.check(rrf_fuse(make(1.0, sa), make(cb, sb), 60.0).doc_ids() == base, "scaling list B changed the order");
    v.check(rrf_fuse(make(ca, sa), make(cb, sb), 60.0).doc_ids() == base, "scaling both lists changed the order");
    v.check(make(ca, sa).doc_ids() == make(1.0, sa).doc_ids(), "scaled input list reordered");
  }
  if (v.pass) v.detail = "20 instances";
  return v;
}

Verdict rank_algebra() {
  Verdict v;
  for (std::size_t n = 0; n < 64; ++n) {
    v.check(answer_factor(n + 1) == answer_factor(n) * 1.1, "q(" + std::to_string(n + 1) + ") != q(n) * 1.1");
  }
  std::mt19937_64 rng(616);
  std::uniform_real_distribution<double> cosine(-1.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double s = summary_factor(cosine(rng));
    v.check(s >= 0.0 && s <= 1.0, "s_factor out of bounds: " + fmt(s));
  }
  for (double c : {-1.0, 1.0}) v.check(summary_factor(c) >= 0.0 && summary_factor(c) <= 1.0, "endpoint");

  // Uniform modulation: a span present in every document and a summary held
  // fixed per document scale every RRF score by the same factor.
  HashEmbedder e;
  auto docs = fixtures::random_corpus(40, 616, 300);
  for (auto& d : docs) d.abstract += " Shared marker phrase.";
  const auto idx = SearchIndex::build(docs, e);
  const auto queries = random_queries(rng, 20, 300);
  const AnswerSet everywhere{{"shared marker phrase"}};
  for (const auto& q : queries) {
    const auto r = retrieve(q, {}, idx, e);
    for (const AnswerSet& a : {AnswerSet{}, everywhere}) {
      const auto ranked = rerank(r.fused, a, std::nullopt, idx);
      std::vector<std::string> got;
      for (const auto& x : ranked) got.push_back(x.doc_id);
      v.check(got == r.fused.doc_ids(), "uniform modulation reordered '" + q + "'");
    }
  }
  if (v.pass) v.detail = "64 ratios bitwise, 1000 cosines, 20 retrievals";
  return v;
}

Verdict planted_relevance() {
  Verdict v;
  const auto t0 = Clock::now();
  const auto f = fixtures::planted_corpus(100, 10, 617);
  Engine engine(std::make_shared<const SearchIndex>(SearchIndex::build(f.docs, HashEmbedder{})), PipelineConfig{});
  std::size_t hits = 0;
  std::string ranks;
  for (std::size_t t = 0; t < f.topics.size(); ++t) {
    const auto r = engine.search(f.topics[t].query, 5);
    std::size_t rank = 0;
    for (std::size_t i = 0; i < r.hits.size(); ++i) {
      if (r.hits[i].score.doc_id == f.planted[t]) rank = i + 1;
    }
    hits += rank > 0 ? 1 : 0;
    ranks += (ranks.empty() ? "" : ",") + (rank > 0 ? std::to_string(rank) : std::string("-"));
  }
  const double secs = seconds_since(t0);
  v.check(hits >= 9, std::to_string(hits) + "/10 in top 5 (ranks " + ranks + ")");
  v.check(secs < 60.0, "took " + fmt(secs) + " s");
  if (v.pass) v.detail = std::to_string(hits) + "/10 in top 5 (ranks " + ranks + "), " + fmt(secs) + " s";
  return v;
}

Verdict tuple_generation() {
  Verdict v;
  BipartiteGraph g;
  for (std::size_t p = 0; p < 60; ++p) g.add_paragraph({"doc" + std::to_string(p / 4), p % 4}, "paragraph " + std::to_string(p));
  for (std::size_t c = 0; c < 40; ++c) g.add_citation("title " + std::to_string(c));
  std::mt19937_64 rng(618);
  while (g.edges().size() < 200) {
    const auto p = rng() % 60;
    g.add_edge({"doc" + std::to_string(p / 4), p % 4}, "title " + std::to_string(rng() % 40));
  }
  const auto tuples = generate_tuples(g, 618);
  std::size_t pos = 0, neg = 0, bad = 0;
  std::set<std::pair<ParagraphKey, std::string>> negatives;
  for (const auto& t : tuples) {
    if (t.label == TupleLabel::positive) {
      ++pos;
      bad += g.has_edge(t.paragraph, t.normalized_title) ? 0 : 1;
    } else {
      ++neg;
      bad += g.has_edge(t.paragraph, t.normalized_title) ? 1 : 0;
      bad += negatives.emplace(t.paragraph, t.normalized_title).second ? 0 : 1;
    }
  }
  v.check(pos == 200, "positives " + std::to_string(pos));
  v.check(neg == 200, "negatives " + std::to_string(neg));
  v.check(bad == 0, std::to_string(bad) + " negatives coincide with edges or repeat");
  v.check(generate_tuples(g, 618) == tuples, "not reproducible with the same seed");
  std::ostringstream a, b;
  write_tuples(tuples, a);
  write_tuples(generate_tuples(g, 618), b);
  v.check(a.str() == b.str(), "TSV output differs across runs");
  if (v.pass) v.detail = "200 positives, 200 negatives, 0 collisions, reproducible";
  return v;
}

template <class Parse>
std::optional<std::size_t> failing_line(const std::string& text, Parse parse) {
  std::istringstream in(text);
  try {
    parse(in);
  } catch (const ParseError& e) {
    return e.line();
  }
  return std::nullopt;
}

Verdict format_fidelity() {
  Verdict v;
  std::mt19937_64 rng(619);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  RunFile run;
  for (int topic = 1; topic <= 35; ++topic) {
    std::vector<double> scores(rng() % 120 + 1);
    for (auto& s : scores) s = u(rng);
    std::sort(scores.rbegin(), scores.rend());
    std::vector<std::pair<std::string, double>> ranked;
    for (std::size_t i = 0; i < scores.size(); ++i) ranked.emplace_back("cord-" + std::to_string(i * 13 % 997), scores[i]);
    run.add_ranking(topic, ranked, "cosearch");
  }
  std::stringstream buf;
  write_run(run, buf);
  v.check(parse_run(buf) == run, "run round trip differs");
  Qrels q;
  for (int topic = 1; topic <= 35; ++topic) {
    for (int d = 0; d < 20; ++d) q.add(topic, "cord-" + std::to_string(d), static_cast<int>(rng() % 3));
  }
  std::stringstream qbuf;
  write_qrels(q, qbuf);
  v.check(parse_qrels(qbuf) == q, "qrels round trip differs");

  const std::vector<std::pair<std::string, std::size_t>> qrels_cases{
      {"1 0 d 1\n1 0 d 3\n", 2}, {"1 0 d\n", 1}, {"x 0 d 1\n", 1}, {"1 0 a 1\n\n1 0 a 0\n", 3}, {"1 0 d one\n", 1}};
  const std::vector<std::pair<std::string, std::size_t>> run_cases{
      {"1 Q0 a 1 1 t\n1 Q0 b 3 0 t\n", 2},
      {"1 Q0 a 1 1 t\n1 Q0 b 2 2 t\n", 2},
      {"1 X a 1 1 t\n", 1},
      {"1 Q0 a 1 nan t\n", 1},
      {"1 Q0 a 1 1 t\n1 Q0 a 2 1 t\n", 2}};
  std::size_t rejected = 0;
  for (const auto& [text, line] : qrels_cases) {
    const auto got = failing_line(text, [](std::istream& in) { parse_qrels(in); });
    v.check(got == line, "qrels fixture not rejected at line " + std::to_string(line));
    rejected += got == line ? 1 : 0;
  }
  for (const auto& [text, line] : run_cases) {
    const auto got = failing_line(text, [](std::istream& in) { parse_run(in); });
    v.check(got == line, "run fixture not rejected at line " + std::to_string(line));
    rejected += got == line ? 1 : 0;
  }

  std::vector<std::pair<std::string, double>> long_ranking;
  for (int i = 0; i < 1500; ++i) long_ranking.emplace_back("d" + std::to_string(i), 3000.0 - i);
  RunFile capped;
  capped.add_ranking(1, long_ranking, "t");
  v.check(capped.topic(1)->size() == kMaxRunDepth, "add_ranking kept more than 1000");
  std::string over;
  for (int i = 1; i <= 1001; ++i) over += "1 Q0 d" + std::to_string(i) + " " + std::to_string(i) + " 0 t\n";
  v.check(failing_line(over, [](std::istream& in) { parse_run(in); }) == std::size_t{1001}, "1001st line accepted");
  if (v.pass) v.detail = "round trip exact, " + std::to_string(rejected) + "/10 corrupt fixtures rejected, cap 1000";
  return v;
}

Verdict summarizer_contract() {
  Verdict v;
  auto embedder = std::make_shared<HashEmbedder>();
  const ReferenceSummarizer summarizer(embedder);
  const RankConstants limits;
  std::vector<std::vector<std::string>> fixtures_in;

  // Context windows from real retrievals.
  const auto f = fixtures::planted_corpus(100, 10, 620);
  const auto idx = std::make_shared<const SearchIndex>(SearchIndex::build(f.docs, *embedder));
  for (const auto& t : f.topics) {
    const auto r = retrieve(t.query, {}, *idx, *embedder);
    std::vector<std::string> ctx;
    for (std::size_t i = 0; i < r.fused.size() && ctx.size() < 10; ++i) {
      const auto d = *idx->find_doc(r.fused[i].doc_id);
      if (r.best_paragraph[d] != kNoParagraph) ctx.push_back(idx->paragraphs()[r.best_paragraph[d]].text);
    }
    fixtures_in.push_back(ctx);
  }
  // Long paragraphs, long sentences, a single huge sentence.
  std::mt19937_64 rng(620);
  for (int k = 0; k < 10; ++k) {
    std::vector<std::string> ps;
    for (int p = 0; p < 10; ++p) {
      std::string text;
      for (int s = 0; s < 6; ++s) {
        std::vector<std::string> ws(rng() % 40 + 3);
        for (auto& w : ws) w = fixtures::word(rng() % 500);
        text += fixtures::sentence(ws) + " ";
      }
      ps.push_back(text);
    }
    fixtures_in.push_back(ps);
  }
  {
    std::string huge;
    for (int i = 0; i < 2000; ++i) huge += fixtures::word(static_cast<std::size_t>(i)) + " ";
    fixtures_in.push_back({huge});
  }

  std::size_t worst_summary = 0, worst_input = 0;
  for (const auto& ps : fixtures_in) {
    const auto in = assemble_summary_input(ps, limits.sentences_per_paragraph, limits.summary_input_tokens);
    worst_input = std::max(worst_input, in.token_count);
    v.check(in.token_count <= 512, "assembly input " + std::to_string(in.token_count) + " tokens");
    const auto s = make_summary(summarizer.summarize("q", ps), *embedder, limits.summary_token_limit);
    worst_summary = std::max(worst_summary, s.token_length);
    v.check(s.token_length < 65, "summary " + std::to_string(s.token_length) + " tokens");
  }
  Engine engine(idx, PipelineConfig{});
  for (const auto& t : f.topics) {
    const auto r = engine.search(t.query, 10);
    if (r.summary) {
      worst_summary = std::max(worst_summary, r.summary->token_length);
      v.check(r.summary->token_length < 65, "engine summary " + std::to_string(r.summary->token_length) + " tokens");
    }
  }
  if (v.pass) {
    v.detail = std::to_string(fixtures_in.size()) + " fixtures, max summary " + std::to_string(worst_summary) +
               " tokens, max input " + std::to_string(worst_input) + " tokens";
  }
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"metric oracle equivalence (200 instances, 1e-9, <10 s)", metric_oracle},
      {"hand-computed anchors", anchors},
      {"Bpref unjudged invariance (100 instances)", bpref_unjudged_invariance},
      {"fusion degeneracy (mu=1 dense order, mu=0 TF-IDF order)", fusion_degeneracy},
      {"RRF depends on ranks only (20 instances)", rrf_rank_only},
      {"rank modulation algebra", rank_algebra},
      {"planted relevance (>=9/10 in top 5, <60 s)", planted_relevance},
      {"tuple generation (200 edges)", tuple_generation},
      {"format fidelity", format_fidelity},
      {"summarizer contract (<65 tokens, input <=512)", summarizer_contract},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "[PASS] " : "[FAIL] ") << name << ": " << v.detail << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
