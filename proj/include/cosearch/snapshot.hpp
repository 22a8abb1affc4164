#pragma once

// Snapshot directory layout (format version 1):
//
//   manifest.json     format, versions, embedder, D, k1, b, full pipeline
//                     config, counts, per-file checksums, overall checksum
//   documents.jsonl   one corpus record per line, ascending id
//   paragraphs.jsonl  {doc_id, ordinal, kind, text} per line, index order
//   inverted.tsv      "docs N", N lines "<escaped id>\t<length>",
//                     "terms T", T lines "<term>\t<doc>:<tf> <doc>:<tf> ..."
//   dense.bin         paragraph embeddings, little-endian float64, row-major
//
// Checksums are 64-bit FNV-1a in hex. Nothing time- or host-dependent is
// written, so rebuilding from unchanged inputs reproduces every byte.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cosearch/corpus.hpp"
#include "cosearch/errors.hpp"
#include "cosearch/pipeline.hpp"
#include "cosearch/search_index.hpp"

namespace cosearch {

static_assert(std::endian::native == std::endian::little, "snapshot I/O assumes a little-endian host");

inline constexpr int kSnapshotVersion = 1;

struct Snapshot {
  std::shared_ptr<const SearchIndex> index;
  PipelineConfig config;
  nlohmann::json manifest;
};

namespace detail {

inline std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open '" + p.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + p.string() + "'");
}

inline std::vector<std::string_view> lines_of(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    auto nl = s.find('\n', pos);
    if (nl == std::string_view::npos) nl = s.size();
    out.push_back(s.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return out;
}

inline std::string encode_documents(const SearchIndex& idx) {
  std::ostringstream out;
  write_corpus(idx.documents(), out);
  return out.str();
}

inline std::string encode_paragraphs(const SearchIndex& idx) {
  std::string out;
  for (const auto& p : idx.paragraphs()) {
    out += nlohmann::json{{"doc_id", p.doc_id}, {"ordinal", p.ordinal}, {"kind", to_string(p.kind)}, {"text", p.text}}
               .dump();
    out += '\n';
  }
  return out;
}

inline std::string encode_inverted(const InvertedIndex& inv) {
  std::string out = "docs " + std::to_string(inv.doc_count()) + "\n";
  for (std::uint32_t d = 0; d < inv.doc_count(); ++d) {
    out += escape_tsv_field(inv.doc_id(d)) + "\t" + std::to_string(inv.doc_length(d)) + "\n";
  }
  out += "terms " + std::to_string(inv.postings().size()) + "\n";
  for (const auto& [term, list] : inv.postings()) {
    out += term;
    out += '\t';
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (i > 0) out += ' ';
      out += std::to_string(list[i].doc) + ":" + std::to_string(list[i].tf);
    }
    out += '\n';
  }
  return out;
}

inline std::string encode_dense(const DenseIndex& dense) {
  std::string out;
  out.reserve(dense.size() * dense.dimension() * sizeof(double));
  for (std::size_t i = 0; i < dense.size(); ++i) {
    const auto v = dense.vector_at(i);
    out.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }
  return out;
}

inline std::uint32_t parse_u32(std::string_view s, const char* what) {
  const auto v = parse_number<std::uint32_t>(s);
  if (!v) throw Error(std::string("snapshot: bad ") + what);
  return *v;
}

inline InvertedIndex decode_inverted(const std::string& bytes) {
  const auto lines = lines_of(bytes);
  std::size_t at = 0;
  auto next = [&]() -> std::string_view {
    if (at >= lines.size()) throw Error("snapshot: truncated inverted index");
    return lines[at++];
  };
  auto header = next();
  if (!header.starts_with("docs ")) throw Error("snapshot: inverted index lacks a docs header");
  const auto n_docs = parse_u32(header.substr(5), "doc count");
  std::vector<std::string> ids;
  std::vector<std::uint32_t> lengths;
  for (std::uint32_t i = 0; i < n_docs; ++i) {
    const auto line = next();
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos) throw Error("snapshot: bad document line");
    ids.push_back(unescape_tsv_field(line.substr(0, tab)));
    lengths.push_back(parse_u32(line.substr(tab + 1), "document length"));
  }
  header = next();
  if (!header.starts_with("terms ")) throw Error("snapshot: inverted index lacks a terms header");
  const auto n_terms = parse_u32(header.substr(6), "term count");
  std::map<std::string, InvertedIndex::Postings, std::less<>> postings;
  for (std::uint32_t i = 0; i < n_terms; ++i) {
    const auto line = next();
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0) throw Error("snapshot: bad term line");
    InvertedIndex::Postings list;
    for (const auto field : split_fields(line.substr(tab + 1))) {
      const auto colon = field.find(':');
      if (colon == std::string_view::npos) throw Error("snapshot: bad posting");
      list.push_back({parse_u32(field.substr(0, colon), "posting doc"), parse_u32(field.substr(colon + 1), "posting tf")});
    }
    if (!postings.emplace(std::string(line.substr(0, tab)), std::move(list)).second) {
      throw Error("snapshot: duplicate term");
    }
  }
  if (at != lines.size()) throw Error("snapshot: trailing data in inverted index");
  return InvertedIndex::from_parts(std::move(ids), std::move(lengths), std::move(postings));
}

inline const std::vector<std::string>& snapshot_files() {
  static const std::vector<std::string> files{"documents.jsonl", "paragraphs.jsonl", "inverted.tsv", "dense.bin"};
  return files;
}

}  // namespace detail

/// Writes `index` and `config` into `dir` (created if missing) and returns the
/// manifest.
inline nlohmann::json save_snapshot(const SearchIndex& index, const PipelineConfig& config,
                                    const std::filesystem::path& dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

  const std::map<std::string, std::string> contents{
      {"documents.jsonl", detail::encode_documents(index)},
      {"paragraphs.jsonl", detail::encode_paragraphs(index)},
      {"inverted.tsv", detail::encode_inverted(index.inverted())},
      {"dense.bin", detail::encode_dense(index.dense())},
  };
  nlohmann::json files = nlohmann::json::object();
  std::string combined;
  for (const auto& name : detail::snapshot_files()) {
    const auto& bytes = contents.at(name);
    detail::write_file(dir / name, bytes);
    files[name] = detail::hex64(fnv1a64(bytes));
    combined += name + "=" + files[name].get<std::string>() + "\n";
  }
  nlohmann::json manifest{
      {"format", "cosearch-snapshot"},
      {"version", kSnapshotVersion},
      {"tokenizer", kTokenizerVersion},
      {"embedder", index.embedder_id()},
      {"dimension", index.dimension()},
      {"bm25", {{"k1", config.bm25.k1}, {"b", config.bm25.b}}},
      {"config", to_json(config)},
      {"documents", index.doc_count()},
      {"paragraphs", index.paragraphs().size()},
      {"terms", index.inverted().postings().size()},
      {"files", files},
  };
  combined += manifest.dump();
  manifest["checksum"] = detail::hex64(fnv1a64(combined));
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

/// Reads and verifies a snapshot written by save_snapshot.
inline Snapshot load_snapshot(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("snapshot directory '" + dir.string() + "' not found");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(std::string("snapshot: malformed manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "cosearch-snapshot" || manifest.value("version", 0) != kSnapshotVersion) {
    throw Error("snapshot: unsupported format or version");
  }
  if (manifest.value("tokenizer", "") != kTokenizerVersion) throw Error("snapshot: tokenizer version mismatch");

  std::map<std::string, std::string> contents;
  for (const auto& name : detail::snapshot_files()) {
    auto bytes = detail::read_file(dir / name);
    if (manifest["files"].value(name, "") != detail::hex64(fnv1a64(bytes))) {
      throw Error("snapshot: checksum mismatch for " + name);
    }
    contents.emplace(name, std::move(bytes));
  }

  auto config = pipeline_config_from_json(manifest.at("config"));
  const auto dim = manifest.at("dimension").get<std::size_t>();

  std::vector<Document> docs;
  try {
    for (const auto line : detail::lines_of(contents.at("documents.jsonl"))) {
      docs.push_back(document_from_json(nlohmann::json::parse(line)));
    }
  } catch (const std::exception& e) {
    throw Error(std::string("snapshot: bad document record: ") + e.what());
  }

  std::vector<Paragraph> paragraphs;
  try {
    for (const auto line : detail::lines_of(contents.at("paragraphs.jsonl"))) {
      const auto j = nlohmann::json::parse(line);
      paragraphs.push_back({j.at("doc_id").get<std::string>(), j.at("ordinal").get<std::size_t>(),
                            paragraph_kind_from_string(j.at("kind").get<std::string>()),
                            j.at("text").get<std::string>(), std::nullopt});
    }
  } catch (const std::exception& e) {
    throw Error(std::string("snapshot: bad paragraph record: ") + e.what());
  }

  const auto& dense_bytes = contents.at("dense.bin");
  if (dense_bytes.size() != paragraphs.size() * dim * sizeof(double)) throw Error("snapshot: dense.bin has the wrong size");
  DenseIndex dense(dim);
  for (std::size_t i = 0; i < paragraphs.size(); ++i) {
    std::vector<double> v(dim);
    std::memcpy(v.data(), dense_bytes.data() + i * dim * sizeof(double), dim * sizeof(double));
    paragraphs[i].embedding = EmbeddingVector::from_unit(std::move(v));
    dense.add(paragraphs[i].key(), *paragraphs[i].embedding);
  }

  auto inverted = detail::decode_inverted(contents.at("inverted.tsv"));
  auto index = SearchIndex::assemble(std::move(docs), std::move(paragraphs), std::move(inverted), std::move(dense),
                                     manifest.at("embedder").get<std::string>());
  return {std::make_shared<const SearchIndex>(std::move(index)), std::move(config), std::move(manifest)};
}

}  // namespace cosearch
