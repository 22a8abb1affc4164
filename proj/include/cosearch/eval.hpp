#pragma once

// TREC-style evaluation: qrels and run files, P@n, nDCG@n, AP/MAP, Bpref and
// Judged@n.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "cosearch/errors.hpp"

namespace cosearch {

inline constexpr std::size_t kMaxRunDepth = 1000;

/// doc id -> grade for one topic.
using TopicJudgements = std::map<std::string, int, std::less<>>;

class Qrels {
 public:
  void add(int topic, std::string doc_id, int grade) {
    if (grade < 0 || grade > 2) throw std::invalid_argument("qrels: grade must be 0, 1 or 2");
    if (doc_id.empty()) throw std::invalid_argument("qrels: empty doc id");
    if (!topics_[topic].emplace(std::move(doc_id), grade).second) {
      throw std::invalid_argument("qrels: duplicate judgement");
    }
  }

  const TopicJudgements* topic(int id) const {
    auto it = topics_.find(id);
    return it == topics_.end() ? nullptr : &it->second;
  }

  const std::map<int, TopicJudgements>& topics() const noexcept { return topics_; }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, j] : topics_) n += j.size();
    return n;
  }
  bool operator==(const Qrels&) const = default;

 private:
  std::map<int, TopicJudgements> topics_;
};

struct RunEntry {
  std::string doc_id;
  std::size_t rank = 0;
  double score = 0.0;
  std::string tag;
  bool operator==(const RunEntry&) const = default;
};

/// Per-topic ranked output. Ranks are 1..n, scores non-increasing, documents
/// unique, at most 1,000 per topic.
class RunFile {
 public:
  void add_topic(int topic, std::vector<RunEntry> entries) {
    if (topics_.contains(topic)) throw std::invalid_argument("run: duplicate topic " + std::to_string(topic));
    validate_topic(entries);
    topics_.emplace(topic, std::move(entries));
  }

  /// Builds a topic block from (doc id, score) pairs in rank order, cut to
  /// `depth` (never more than 1,000).
  void add_ranking(int topic, std::span<const std::pair<std::string, double>> ranking, std::string_view tag,
                   std::size_t depth = kMaxRunDepth) {
    std::vector<RunEntry> entries;
    const auto n = std::min({ranking.size(), depth, kMaxRunDepth});
    for (std::size_t i = 0; i < n; ++i) entries.push_back({ranking[i].first, i + 1, ranking[i].second, std::string(tag)});
    add_topic(topic, std::move(entries));
  }

  const std::map<int, std::vector<RunEntry>>& topics() const noexcept { return topics_; }
  const std::vector<RunEntry>* topic(int id) const {
    auto it = topics_.find(id);
    return it == topics_.end() ? nullptr : &it->second;
  }

  /// Doc ids of a topic in rank order (empty for a missing topic).
  std::vector<std::string> ranking(int id) const {
    std::vector<std::string> out;
    if (const auto* t = topic(id)) {
      for (const auto& e : *t) out.push_back(e.doc_id);
    }
    return out;
  }

  static void validate_topic(const std::vector<RunEntry>& entries) {
    if (entries.size() > kMaxRunDepth) throw std::invalid_argument("run: more than 1000 documents for a topic");
    std::set<std::string_view> seen;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.rank != i + 1) throw std::invalid_argument("run: ranks must be contiguous from 1");
      if (i > 0 && e.score > entries[i - 1].score) throw std::invalid_argument("run: scores must be non-increasing");
      if (!std::isfinite(e.score)) throw std::invalid_argument("run: non-finite score");
      if (!seen.insert(e.doc_id).second) throw std::invalid_argument("run: duplicate document '" + e.doc_id + "'");
      if (e.doc_id.empty() || e.tag.empty()) throw std::invalid_argument("run: empty doc id or tag");
    }
  }

  bool operator==(const RunFile&) const = default;

 private:
  std::map<int, std::vector<RunEntry>> topics_;
};

// ---------------------------------------------------------------------------
// Formats

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const auto start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

inline std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream create_text(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

}  // namespace detail

/// Shortest decimal form that parses back to the same double.
inline std::string format_score(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("format_score failed");
  return std::string(buf, ptr);
}

/// "topic_id iteration doc_id grade" per line; iteration is ignored.
inline Qrels parse_qrels(std::istream& in) {
  Qrels q;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = detail::split_fields(line);
    if (f.empty()) continue;
    if (f.size() != 4) throw ParseError(line_no, "qrels: expected 4 fields, got " + std::to_string(f.size()));
    const auto topic = detail::parse_number<int>(f[0]);
    if (!topic) throw ParseError(line_no, "qrels: topic id is not an integer");
    const auto grade = detail::parse_number<int>(f[3]);
    if (!grade) throw ParseError(line_no, "qrels: grade is not an integer");
    if (*grade < 0 || *grade > 2) throw ParseError(line_no, "qrels: grade must be 0, 1 or 2");
    try {
      q.add(*topic, std::string(f[2]), *grade);
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return q;
}

inline Qrels parse_qrels(const std::filesystem::path& path) {
  auto in = detail::open_text(path);
  return parse_qrels(in);
}

inline void write_qrels(const Qrels& q, std::ostream& out) {
  for (const auto& [topic, judgements] : q.topics()) {
    for (const auto& [doc, grade] : judgements) out << topic << " 0 " << doc << ' ' << grade << '\n';
  }
}

/// "topic_id Q0 doc_id rank score tag" per line; topics ascending in
/// contiguous blocks, ranks ascending within a topic.
inline RunFile parse_run(std::istream& in) {
  RunFile run;
  std::map<int, std::vector<RunEntry>> blocks;
  std::optional<int> current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = detail::split_fields(line);
    if (f.empty()) continue;
    if (f.size() != 6) throw ParseError(line_no, "run: expected 6 fields, got " + std::to_string(f.size()));
    const auto topic = detail::parse_number<int>(f[0]);
    if (!topic) throw ParseError(line_no, "run: topic id is not an integer");
    if (f[1] != "Q0") throw ParseError(line_no, "run: second field must be Q0");
    const auto rank = detail::parse_number<std::size_t>(f[3]);
    if (!rank) throw ParseError(line_no, "run: rank is not a non-negative integer");
    const auto score = detail::parse_number<double>(f[4]);
    if (!score || !std::isfinite(*score)) throw ParseError(line_no, "run: score is not a finite number");

    if (!current || *current != *topic) {
      if (current && *topic < *current) throw ParseError(line_no, "run: topics must be ascending");
      if (blocks.contains(*topic)) throw ParseError(line_no, "run: topic block is not contiguous");
      current = *topic;
    }
    auto& entries = blocks[*topic];
    if (*rank != entries.size() + 1) throw ParseError(line_no, "run: ranks must be contiguous from 1");
    if (!entries.empty() && *score > entries.back().score) throw ParseError(line_no, "run: scores must be non-increasing");
    if (entries.size() == kMaxRunDepth) throw ParseError(line_no, "run: more than 1000 documents for a topic");
    for (const auto& e : entries) {
      if (e.doc_id == f[2]) throw ParseError(line_no, "run: duplicate document in topic");
    }
    entries.push_back({std::string(f[2]), *rank, *score, std::string(f[5])});
  }
  for (auto& [topic, entries] : blocks) run.add_topic(topic, std::move(entries));
  return run;
}

inline RunFile parse_run(const std::filesystem::path& path) {
  auto in = detail::open_text(path);
  return parse_run(in);
}

/// Validates every topic before emitting anything.
inline void write_run(const RunFile& run, std::ostream& out) {
  for (const auto& [_, entries] : run.topics()) RunFile::validate_topic(entries);
  for (const auto& [topic, entries] : run.topics()) {
    for (const auto& e : entries) {
      out << topic << " Q0 " << e.doc_id << ' ' << e.rank << ' ' << format_score(e.score) << ' ' << e.tag << '\n';
    }
  }
}

inline void write_run(const RunFile& run, const std::filesystem::path& path) {
  std::ostringstream buf;
  write_run(run, buf);
  auto out = detail::create_text(path);
  out << buf.str();
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Metrics

enum class NdcgVariant {
  paper,     // rel_1 + sum_{i>=2} rel_i / log2(i)
  standard,  // sum_{i>=1} rel_i / log2(i + 1)
};

enum class BprefVariant {
  paper,  // penalty min(n_above, R) / R
  trec,   // penalty min(n_above, R) / min(R, judged non-relevant)
};

struct EvalConfig {
  bool judged_only = false;
  NdcgVariant ndcg_variant = NdcgVariant::paper;
  BprefVariant bpref_variant = BprefVariant::paper;
  int rel_threshold = 1;
};

namespace detail {

inline std::optional<int> grade_of(const TopicJudgements& q, std::string_view doc) {
  auto it = q.find(doc);
  if (it == q.end()) return std::nullopt;
  return it->second;
}

inline std::size_t relevant_count(const TopicJudgements& q, int threshold) {
  return static_cast<std::size_t>(
      std::count_if(q.begin(), q.end(), [&](const auto& kv) { return kv.second >= threshold; }));
}

inline double discount(std::size_t position, NdcgVariant v) {
  if (v == NdcgVariant::standard) return 1.0 / std::log2(static_cast<double>(position) + 1.0);
  return position == 1 ? 1.0 : 1.0 / std::log2(static_cast<double>(position));
}

}  // namespace detail

/// Relevant documents among the top n over n; missing positions count as
/// non-relevant.
inline double precision_at_n(std::span<const std::string> run, const TopicJudgements& qrels, std::size_t n,
                             int threshold = 1) {
  if (n == 0) throw std::invalid_argument("precision_at_n: n must be >= 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(n, run.size()); ++i) {
    const auto g = detail::grade_of(qrels, run[i]);
    if (g && *g >= threshold) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

/// DCG of the top n with graded gains (unjudged = 0) over the DCG of the
/// topic's judgements sorted by grade; 0 when that ideal is 0.
inline double ndcg_at_n(std::span<const std::string> run, const TopicJudgements& qrels, std::size_t n,
                        NdcgVariant variant = NdcgVariant::paper) {
  if (n == 0) throw std::invalid_argument("ndcg_at_n: n must be >= 1");
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(n, run.size()); ++i) {
    const auto g = detail::grade_of(qrels, run[i]);
    if (g && *g > 0) dcg += *g * detail::discount(i + 1, variant);
  }
  std::vector<int> ideal;
  for (const auto& [_, g] : qrels) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(n, ideal.size()); ++i) {
    if (ideal[i] > 0) idcg += ideal[i] * detail::discount(i + 1, variant);
  }
  return idcg > 0.0 ? dcg / idcg : 0.0;
}

/// Sum of P@k at each relevant retrieved rank k over the number of judged
/// relevant documents.
inline double average_precision(std::span<const std::string> run, const TopicJudgements& qrels, int threshold = 1) {
  const auto total = detail::relevant_count(qrels, threshold);
  if (total == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < run.size(); ++i) {
    const auto g = detail::grade_of(qrels, run[i]);
    if (g && *g >= threshold) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total);
}

/// Unjudged documents are skipped. Each relevant retrieved document is
/// penalized by the judged non-relevant documents above it, counting at most
/// the first R of them.
inline double bpref(std::span<const std::string> run, const TopicJudgements& qrels, int threshold = 1,
                    BprefVariant variant = BprefVariant::paper) {
  const auto r = detail::relevant_count(qrels, threshold);
  if (r == 0) return 0.0;
  const auto nonrel_total = qrels.size() - r;
  const double denom = variant == BprefVariant::paper
                           ? static_cast<double>(r)
                           : static_cast<double>(std::min(r, nonrel_total));
  double sum = 0.0;
  std::size_t nonrel_seen = 0;
  for (const auto& doc : run) {
    const auto g = detail::grade_of(qrels, doc);
    if (!g) continue;
    if (*g >= threshold) {
      const double penalty = denom > 0.0 ? static_cast<double>(std::min(nonrel_seen, r)) / denom : 0.0;
      sum += 1.0 - penalty;
    } else {
      ++nonrel_seen;
    }
  }
  return sum / static_cast<double>(r);
}

/// Fraction of the top n positions holding a judged document.
inline double judged_at_n(std::span<const std::string> run, const TopicJudgements& qrels, std::size_t n) {
  if (n == 0) throw std::invalid_argument("judged_at_n: n must be >= 1");
  std::size_t judged = 0;
  for (std::size_t i = 0; i < std::min(n, run.size()); ++i) judged += qrels.contains(run[i]) ? 1 : 0;
  return static_cast<double>(judged) / static_cast<double>(n);
}

/// Mean AP over the qrels topics; a qrels topic absent from the run scores 0.
inline double mean_average_precision(const RunFile& run, const Qrels& qrels, int threshold = 1) {
  bool shared = false;
  double sum = 0.0;
  for (const auto& [topic, judgements] : qrels.topics()) {
    if (run.topic(topic) != nullptr) shared = true;
    sum += average_precision(run.ranking(topic), judgements, threshold);
  }
  if (!shared) throw Error("run and qrels share no topic");
  return sum / static_cast<double>(qrels.topics().size());
}

struct TopicMetrics {
  double p_at_5 = 0.0;
  double p_at_10 = 0.0;
  double ndcg_at_10 = 0.0;
  double ap = 0.0;
  double bpref = 0.0;
  double judged_at_5 = 0.0;
  double judged_at_10 = 0.0;
  bool operator==(const TopicMetrics&) const = default;
};

struct MetricReport {
  std::map<int, TopicMetrics> per_topic;
  TopicMetrics mean;  // unweighted over topics; mean.ap is MAP
  std::size_t topics_in_run = 0;
};

inline TopicMetrics evaluate_topic(std::span<const std::string> run, const TopicJudgements& qrels,
                                   const EvalConfig& cfg) {
  TopicMetrics m;
  m.judged_at_5 = judged_at_n(run, qrels, 5);
  m.judged_at_10 = judged_at_n(run, qrels, 10);
  m.bpref = bpref(run, qrels, cfg.rel_threshold, cfg.bpref_variant);

  std::vector<std::string> filtered;
  std::span<const std::string> scored = run;
  if (cfg.judged_only) {
    for (const auto& d : run) {
      if (qrels.contains(d)) filtered.push_back(d);
    }
    scored = filtered;
  }
  m.p_at_5 = precision_at_n(scored, qrels, 5, cfg.rel_threshold);
  m.p_at_10 = precision_at_n(scored, qrels, 10, cfg.rel_threshold);
  m.ndcg_at_10 = ndcg_at_n(scored, qrels, 10, cfg.ndcg_variant);
  m.ap = average_precision(scored, qrels, cfg.rel_threshold);
  return m;
}

/// Evaluates every qrels topic. In judged-only mode the run is restricted to
/// judged documents before the precision-family metrics (P@n, nDCG, AP);
/// Bpref ignores unjudged documents anyway and Judged@n uses the raw run.
inline MetricReport evaluate_run(const RunFile& run, const Qrels& qrels, const EvalConfig& cfg = {}) {
  MetricReport report;
  for (const auto& [topic, judgements] : qrels.topics()) {
    if (run.topic(topic) != nullptr) ++report.topics_in_run;
    report.per_topic.emplace(topic, evaluate_topic(run.ranking(topic), judgements, cfg));
  }
  if (report.topics_in_run == 0) throw Error("run and qrels share no topic");
  auto& mean = report.mean;
  for (const auto& [_, m] : report.per_topic) {
    mean.p_at_5 += m.p_at_5;
    mean.p_at_10 += m.p_at_10;
    mean.ndcg_at_10 += m.ndcg_at_10;
    mean.ap += m.ap;
    mean.bpref += m.bpref;
    mean.judged_at_5 += m.judged_at_5;
    mean.judged_at_10 += m.judged_at_10;
  }
  const auto n = static_cast<double>(report.per_topic.size());
  for (double* v : {&mean.p_at_5, &mean.p_at_10, &mean.ndcg_at_10, &mean.ap, &mean.bpref, &mean.judged_at_5,
                    &mean.judged_at_10}) {
    *v /= n;
  }
  return report;
}

inline nlohmann::json to_json(const TopicMetrics& m) {
  return {{"bpref", m.bpref},     {"map", m.ap},
          {"p_at_5", m.p_at_5},   {"p_at_10", m.p_at_10},
          {"ndcg_at_10", m.ndcg_at_10}, {"judged_at_5", m.judged_at_5},
          {"judged_at_10", m.judged_at_10}};
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json topics = nlohmann::json::object();
  for (const auto& [t, m] : r.per_topic) topics[std::to_string(t)] = to_json(m);
  return {{"topics", r.per_topic.size()}, {"topics_in_run", r.topics_in_run}, {"mean", to_json(r.mean)},
          {"per_topic", std::move(topics)}};
}

/// Plain-text table: one row per topic plus the mean row.
inline void print_report(const MetricReport& r, std::ostream& out) {
  auto row = [&](const std::string& label, const TopicMetrics& m) {
    out << std::left << std::setw(8) << label << std::right << std::fixed << std::setprecision(4) << std::setw(9)
        << m.bpref << std::setw(9) << m.ap << std::setw(9) << m.p_at_5 << std::setw(9) << m.p_at_10 << std::setw(10)
        << m.ndcg_at_10 << std::setw(10) << m.judged_at_5 << std::setw(10) << m.judged_at_10 << '\n';
  };
  out << std::left << std::setw(8) << "topic" << std::right << std::setw(9) << "Bpref" << std::setw(9) << "MAP"
      << std::setw(9) << "P@5" << std::setw(9) << "P@10" << std::setw(10) << "nDCG@10" << std::setw(10) << "Judged@5"
      << std::setw(10) << "Judged@10" << '\n';
  for (const auto& [t, m] : r.per_topic) row(std::to_string(t), m);
  row("all", r.mean);
  out.unsetf(std::ios::floatfield);
}

}  // namespace cosearch
