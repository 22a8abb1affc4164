#pragma once

// Document ingestion, paragraph splitting, the paragraph/citation bipartite
// graph and balanced training-tuple generation.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cosearch/embedding.hpp"
#include "cosearch/errors.hpp"
#include "cosearch/text.hpp"

namespace cosearch {

struct CitationRef {
  std::string raw;
  std::string title;             // as given; may be empty when raw carries it
  std::string normalized_title;  // never empty
  /// Ordinal of the citing paragraph when the record states it.
  std::optional<std::size_t> paragraph;

  bool operator==(const CitationRef&) const = default;
};

struct Document {
  std::string id;
  std::string title;
  std::string abstract;
  std::vector<std::string> body;
  std::vector<std::string> captions;
  std::vector<CitationRef> citations;
  std::string source_path;

  bool operator==(const Document&) const = default;
};

enum class ParagraphKind { abstract, body, caption };

inline std::string_view to_string(ParagraphKind kind) noexcept {
  switch (kind) {
    case ParagraphKind::abstract: return "abstract";
    case ParagraphKind::body: return "body";
    case ParagraphKind::caption: return "caption";
  }
  return "body";
}

inline ParagraphKind paragraph_kind_from_string(std::string_view s) {
  if (s == "abstract") return ParagraphKind::abstract;
  if (s == "body") return ParagraphKind::body;
  if (s == "caption") return ParagraphKind::caption;
  throw std::invalid_argument("unknown paragraph kind: " + std::string(s));
}

struct ParagraphKey {
  std::string doc_id;
  std::size_t ordinal = 0;

  auto operator<=>(const ParagraphKey&) const = default;
  bool operator==(const ParagraphKey&) const = default;
};

struct Paragraph {
  std::string doc_id;
  std::size_t ordinal = 0;
  ParagraphKind kind = ParagraphKind::body;
  std::string text;
  std::optional<EmbeddingVector> embedding;

  ParagraphKey key() const { return {doc_id, ordinal}; }
  bool operator==(const Paragraph&) const = default;
};

struct Topic {
  int id = 0;
  std::string query;
  std::string question;
  std::string narrative;

  bool operator==(const Topic&) const = default;
};

// ---------------------------------------------------------------------------
// Records

namespace detail {

inline std::string optional_string(const nlohmann::json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return {};
  if (!it->is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

inline std::vector<std::string> optional_string_list(const nlohmann::json& rec, const char* key) {
  auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return {};
  if (!it->is_array()) throw std::invalid_argument(std::string("field '") + key + "' must be a list");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace detail

/// Parses one corpus record. Throws std::invalid_argument describing the
/// first schema violation.
inline Document document_from_json(const nlohmann::json& rec) {
  if (!rec.is_object()) throw std::invalid_argument("record is not an object");
  Document d;
  auto id = rec.find("id");
  if (id == rec.end() || !id->is_string()) throw std::invalid_argument("missing string field 'id'");
  d.id = id->get<std::string>();
  if (d.id.empty()) throw std::invalid_argument("empty document id");
  d.title = detail::optional_string(rec, "title");
  d.abstract = detail::optional_string(rec, "abstract");
  d.body = detail::optional_string_list(rec, "body");
  d.captions = detail::optional_string_list(rec, "captions");
  d.source_path = detail::optional_string(rec, "source_path");

  if (auto cites = rec.find("citations"); cites != rec.end() && !cites->is_null()) {
    if (!cites->is_array()) throw std::invalid_argument("field 'citations' must be a list");
    for (const auto& c : *cites) {
      if (!c.is_object()) throw std::invalid_argument("citation is not an object");
      CitationRef ref;
      ref.raw = detail::optional_string(c, "raw");
      ref.title = detail::optional_string(c, "title");
      ref.normalized_title = normalize_title(ref.title.empty() ? ref.raw : ref.title);
      if (ref.normalized_title.empty()) throw std::invalid_argument("citation without a usable title");
      if (auto p = c.find("paragraph"); p != c.end() && !p->is_null()) {
        if (!p->is_number_unsigned()) throw std::invalid_argument("citation 'paragraph' must be a non-negative integer");
        ref.paragraph = p->get<std::size_t>();
      }
      d.citations.push_back(std::move(ref));
    }
  }

  const bool has_body = std::any_of(d.body.begin(), d.body.end(),
                                    [](const std::string& s) { return !trim(s).empty(); });
  if (trim(d.title).empty() && trim(d.abstract).empty() && !has_body) {
    throw std::invalid_argument("document has no title, abstract or body");
  }
  return d;
}

inline nlohmann::json document_to_json(const Document& d) {
  nlohmann::json cites = nlohmann::json::array();
  for (const auto& c : d.citations) {
    nlohmann::json j{{"raw", c.raw}, {"title", c.title}};
    if (c.paragraph) j["paragraph"] = *c.paragraph;
    cites.push_back(std::move(j));
  }
  nlohmann::json rec{{"id", d.id},           {"title", d.title},
                     {"abstract", d.abstract}, {"body", d.body},
                     {"captions", d.captions}, {"citations", std::move(cites)},
                     {"source_path", d.source_path}};
  return rec;
}

struct LoadOptions {
  bool strict = false;
};

struct CorpusLoad {
  std::vector<Document> documents;
  std::size_t skipped = 0;
};

namespace detail {

inline std::vector<std::filesystem::path> record_files(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec)) throw IoError("cannot read '" + path.string() + "': no such file or directory");
  if (!fs::is_directory(path, ec)) return {path};
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path, ec)) {
    const auto ext = entry.path().extension();
    if (entry.is_regular_file() && (ext == ".jsonl" || ext == ".json" || ext == ".ndjson")) {
      files.push_back(entry.path());
    }
  }
  if (ec) throw IoError("cannot list '" + path.string() + "': " + ec.message());
  std::sort(files.begin(), files.end());
  return files;
}

inline std::ifstream open_for_read(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open '" + file.string() + "' for reading");
  return in;
}

}  // namespace detail

/// Reads line-delimited document records from a stream. Blank lines are
/// ignored. Malformed records are skipped with a warning on `log`, or raise
/// ParseError in strict mode.
inline CorpusLoad load_corpus(std::istream& in, const LoadOptions& opts = {},
                              std::string_view source = "<stream>",
                              std::ostream& log = std::clog) {
  CorpusLoad out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      auto rec = nlohmann::json::parse(line);
      Document d = document_from_json(rec);
      if (d.source_path.empty()) d.source_path = std::string(source);
      if (!seen.insert(d.id).second) throw std::invalid_argument("duplicate document id '" + d.id + "'");
      out.documents.push_back(std::move(d));
    } catch (const std::exception& e) {
      if (opts.strict) throw ParseError(line_no, std::string(source) + ": " + e.what());
      log << "warning: " << source << ":" << line_no << ": skipping malformed record: " << e.what() << '\n';
      ++out.skipped;
    }
  }
  return out;
}

/// Loads a corpus file, or every *.jsonl / *.json / *.ndjson file of a
/// directory in name order. Document ids must be unique across files.
inline CorpusLoad load_corpus(const std::filesystem::path& path, const LoadOptions& opts = {},
                              std::ostream& log = std::clog) {
  CorpusLoad out;
  std::unordered_set<std::string> seen;
  for (const auto& file : detail::record_files(path)) {
    auto in = detail::open_for_read(file);
    auto part = load_corpus(in, opts, file.string(), log);
    out.skipped += part.skipped;
    for (auto& d : part.documents) {
      if (!seen.insert(d.id).second) {
        if (opts.strict) throw ParseError(0, file.string() + ": duplicate document id '" + d.id + "'");
        log << "warning: " << file.string() << ": skipping duplicate document id '" << d.id << "'\n";
        ++out.skipped;
        continue;
      }
      out.documents.push_back(std::move(d));
    }
  }
  return out;
}

inline void write_corpus(std::span<const Document> docs, std::ostream& out) {
  for (const auto& d : docs) out << document_to_json(d).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Paragraphs

namespace detail {

/// Groups of consecutive non-blank lines, each trimmed.
inline std::vector<std::string> blank_line_blocks(std::string_view section) {
  std::vector<std::string> blocks;
  std::string current;
  std::size_t pos = 0;
  while (pos <= section.size()) {
    const auto nl = section.find('\n', pos);
    const auto end = nl == std::string_view::npos ? section.size() : nl;
    const auto line = section.substr(pos, end - pos);
    if (trim(line).empty()) {
      if (!trim(current).empty()) blocks.emplace_back(trim(current));
      current.clear();
    } else {
      if (!current.empty()) current.push_back('\n');
      current.append(line);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  if (!trim(current).empty()) blocks.emplace_back(trim(current));
  return blocks;
}

}  // namespace detail

/// Abstract -> one paragraph, each body section -> its blank-line separated
/// blocks, each caption -> one paragraph. Ordinals follow document order from
/// 0; whitespace-only fragments are dropped.
inline std::vector<Paragraph> split_paragraphs(const Document& d) {
  std::vector<Paragraph> out;
  auto emit = [&](ParagraphKind kind, std::string_view text) {
    auto t = trim(text);
    if (t.empty()) return;
    out.push_back({d.id, out.size(), kind, std::string(t), std::nullopt});
  };
  emit(ParagraphKind::abstract, d.abstract);
  for (const auto& section : d.body) {
    for (const auto& block : detail::blank_line_blocks(section)) emit(ParagraphKind::body, block);
  }
  for (const auto& caption : d.captions) emit(ParagraphKind::caption, caption);
  return out;
}

/// Title, abstract, body and captions joined by blank lines.
inline std::string full_text(const Document& d) {
  std::string out = d.title;
  auto add = [&](const std::string& s) {
    if (s.empty()) return;
    if (!out.empty()) out += "\n\n";
    out += s;
  };
  add(d.abstract);
  for (const auto& s : d.body) add(s);
  for (const auto& s : d.captions) add(s);
  return out;
}

/// Ordinal of the paragraph a citation came from: the stated ordinal when
/// valid, else the first paragraph containing the raw citation string, else
/// the first body paragraph, else the first paragraph.
inline std::optional<std::size_t> citation_source(const CitationRef& c,
                                                  std::span<const Paragraph> paragraphs) {
  if (paragraphs.empty()) return std::nullopt;
  if (c.paragraph && *c.paragraph < paragraphs.size()) return *c.paragraph;
  if (!trim(c.raw).empty()) {
    for (const auto& p : paragraphs) {
      if (p.text.find(trim(c.raw)) != std::string::npos) return p.ordinal;
    }
  }
  for (const auto& p : paragraphs) {
    if (p.kind == ParagraphKind::body) return p.ordinal;
  }
  return paragraphs.front().ordinal;
}

// ---------------------------------------------------------------------------
// Bipartite graph

/// Paragraph nodes on one side, normalized citation titles on the other; an
/// edge means the paragraph cites the title.
class BipartiteGraph {
 public:
  using Edge = std::pair<ParagraphKey, std::string>;

  void add_paragraph(ParagraphKey key, std::string text) {
    paragraphs_.try_emplace(std::move(key), std::move(text));
  }

  /// Registers a citation node; `display` is kept from the first insertion.
  void add_citation(const std::string& normalized_title, std::string display = {}) {
    if (normalized_title.empty()) throw std::invalid_argument("citation node needs a non-empty title");
    citations_.try_emplace(normalized_title, display.empty() ? normalized_title : std::move(display));
  }

  /// Both endpoints must already exist.
  void add_edge(const ParagraphKey& p, const std::string& normalized_title) {
    if (!paragraphs_.contains(p)) throw std::invalid_argument("edge references unknown paragraph");
    if (!citations_.contains(normalized_title)) throw std::invalid_argument("edge references unknown citation");
    edges_.emplace(p, normalized_title);
  }

  bool has_edge(const ParagraphKey& p, const std::string& normalized_title) const {
    return edges_.contains(Edge{p, normalized_title});
  }

  const std::map<ParagraphKey, std::string>& paragraphs() const noexcept { return paragraphs_; }
  /// normalized title -> display title
  const std::map<std::string, std::string>& citations() const noexcept { return citations_; }
  const std::set<Edge>& edges() const noexcept { return edges_; }

  bool operator==(const BipartiteGraph&) const = default;

 private:
  std::map<ParagraphKey, std::string> paragraphs_;
  std::map<std::string, std::string> citations_;
  std::set<Edge> edges_;
};

/// Every paragraph of every document becomes a node; each citation adds an
/// edge from its source paragraph to its normalized title.
inline BipartiteGraph build_bipartite_graph(std::span<const Document> corpus) {
  BipartiteGraph g;
  for (const auto& d : corpus) {
    const auto paragraphs = split_paragraphs(d);
    for (const auto& p : paragraphs) g.add_paragraph(p.key(), p.text);
    for (const auto& c : d.citations) {
      const auto src = citation_source(c, paragraphs);
      if (!src) continue;
      g.add_citation(c.normalized_title, std::string(trim(c.title.empty() ? c.raw : c.title)));
      g.add_edge({d.id, *src}, c.normalized_title);
    }
  }
  return g;
}

enum class TupleLabel { negative = 0, positive = 1 };

struct TrainingTuple {
  std::string paragraph_text;
  std::string citation_title;
  TupleLabel label = TupleLabel::negative;
  ParagraphKey paragraph;
  std::string normalized_title;

  bool operator==(const TrainingTuple&) const = default;
};

/// One positive per edge and the same number of negatives drawn uniformly
/// without replacement from the non-edges, shuffled. Deterministic in `seed`.
inline std::vector<TrainingTuple> generate_tuples(const BipartiteGraph& g, std::uint64_t seed) {
  const auto& edges = g.edges();
  if (edges.empty()) throw Error("insufficient positives: graph has no edges");

  std::vector<const ParagraphKey*> pkeys;
  std::vector<const std::string*> ckeys;
  for (const auto& [k, _] : g.paragraphs()) pkeys.push_back(&k);
  for (const auto& [k, _] : g.citations()) ckeys.push_back(&k);
  const std::uint64_t total = static_cast<std::uint64_t>(pkeys.size()) * ckeys.size();
  const std::uint64_t non_edges = total - edges.size();
  if (non_edges < edges.size()) {
    throw Error("insufficient negatives: " + std::to_string(non_edges) + " non-edges for " +
                std::to_string(edges.size()) + " positives");
  }

  auto is_edge = [&](std::uint64_t cell) {
    return g.has_edge(*pkeys[cell / ckeys.size()], *ckeys[cell % ckeys.size()]);
  };

  std::mt19937_64 rng(seed);
  std::vector<std::uint64_t> picked;
  picked.reserve(edges.size());
  constexpr std::uint64_t kEnumerateLimit = 1ULL << 22;
  if (total <= kEnumerateLimit || non_edges < 2 * edges.size()) {
    std::vector<std::uint64_t> pool;
    pool.reserve(non_edges);
    for (std::uint64_t cell = 0; cell < total; ++cell) {
      if (!is_edge(cell)) pool.push_back(cell);
    }
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < edges.size(); ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      picked.push_back(pool[i]);
    }
  } else {
    std::unordered_set<std::uint64_t> chosen;
    std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
    while (picked.size() < edges.size()) {
      const auto cell = pick(rng);
      if (is_edge(cell) || !chosen.insert(cell).second) continue;
      picked.push_back(cell);
    }
  }

  std::vector<TrainingTuple> out;
  out.reserve(2 * edges.size());
  for (const auto& [p, c] : edges) {
    out.push_back({g.paragraphs().at(p), g.citations().at(c), TupleLabel::positive, p, c});
  }
  for (const auto cell : picked) {
    const auto& p = *pkeys[cell / ckeys.size()];
    const auto& c = *ckeys[cell % ckeys.size()];
    out.push_back({g.paragraphs().at(p), g.citations().at(c), TupleLabel::negative, p, c});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

/// Backslash-escapes tab, newline, carriage return and backslash.
inline std::string escape_tsv_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string unescape_tsv_field(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\' || i + 1 == s.size()) {
      out.push_back(s[i]);
      continue;
    }
    switch (s[++i]) {
      case 't': out.push_back('\t'); break;
      case 'n': out.push_back('\n'); break;
      case 'r': out.push_back('\r'); break;
      default: out.push_back(s[i]);
    }
  }
  return out;
}

/// `label<TAB>paragraph<TAB>title` per line, label 1 or 0.
inline void write_tuples(std::span<const TrainingTuple> tuples, std::ostream& out) {
  for (const auto& t : tuples) {
    out << (t.label == TupleLabel::positive ? '1' : '0') << '\t' << escape_tsv_field(t.paragraph_text)
        << '\t' << escape_tsv_field(t.citation_title) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Topics

/// One record per line: {id, query, question, narrative}. A missing query is
/// an error; missing question or narrative become empty strings.
inline std::vector<Topic> load_topics(std::istream& in) {
  std::vector<Topic> out;
  std::set<int> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid topic record: ") + e.what());
    }
    if (!rec.is_object()) throw ParseError(line_no, "topic record is not an object");
    Topic t;
    const auto id = rec.find("id");
    if (id != rec.end() && id->is_number_integer()) {
      t.id = id->get<int>();
    } else if (id != rec.end() && id->is_string()) {
      try {
        std::size_t used = 0;
        t.id = std::stoi(id->get<std::string>(), &used);
        if (used != id->get<std::string>().size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        throw ParseError(line_no, "topic id is not an integer");
      }
    } else {
      throw ParseError(line_no, "missing topic id");
    }
    if (t.id <= 0) throw ParseError(line_no, "topic id must be positive");
    if (!ids.insert(t.id).second) throw ParseError(line_no, "duplicate topic id " + std::to_string(t.id));
    try {
      const auto q = rec.find("query");
      if (q == rec.end() || !q->is_string()) throw std::invalid_argument("missing field 'query'");
      t.query = q->get<std::string>();
      if (trim(t.query).empty()) throw std::invalid_argument("empty field 'query'");
      t.question = detail::optional_string(rec, "question");
      t.narrative = detail::optional_string(rec, "narrative");
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<Topic> load_topics(const std::filesystem::path& path) {
  auto in = detail::open_for_read(path);
  return load_topics(in);
}

}  // namespace cosearch
