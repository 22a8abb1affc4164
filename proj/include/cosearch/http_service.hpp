#pragma once

// GET /search?q=...&n=...[&mu=...&k=...&pool=...] and GET /health over a
// swappable immutable engine.

#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "cosearch/pipeline.hpp"
#include "cosearch/text.hpp"

namespace cosearch {

struct HttpReply {
  int status = 200;
  std::string body;  // JSON
};

/// Request handling is independent of the socket layer so it can be driven
/// directly. The installed engine is replaced atomically: a request sees
/// either the old engine or the new one, never a mix.
class SearchService {
 public:
  using Params = std::multimap<std::string, std::string>;

  static constexpr std::size_t kDefaultResults = 10;
  static constexpr std::size_t kMaxResults = kMaxRunDepth;

  void install(std::shared_ptr<const Engine> engine) {
    std::lock_guard lock(mu_);
    engine_ = std::move(engine);
  }

  std::shared_ptr<const Engine> engine() const {
    std::lock_guard lock(mu_);
    return engine_;
  }

  HttpReply health() const {
    const auto e = engine();
    if (!e) return {503, nlohmann::json{{"status", "loading"}}.dump()};
    return {200, nlohmann::json{{"status", "ok"},
                                {"documents", e->index().doc_count()},
                                {"paragraphs", e->index().paragraphs().size()}}
                     .dump()};
  }

  HttpReply search(const Params& params) const {
    const auto e = engine();
    if (!e) return error(503, "index loading");

    const auto q = param(params, "q");
    if (!q || trim(*q).empty()) return error(400, "missing or empty parameter 'q'");
    if (tokenize(*q).empty()) return error(400, "query has no searchable terms");

    std::size_t n = kDefaultResults;
    FusionConfig fusion = e->config().fusion;
    try {
      if (auto v = param(params, "n")) n = parse_count(*v, "n", 0, kMaxResults);
      if (auto v = param(params, "mu")) fusion.mu = parse_real(*v, "mu");
      if (auto v = param(params, "k")) fusion.rrf_k = parse_real(*v, "k");
      if (auto v = param(params, "pool")) fusion.pool_size = parse_count(*v, "pool", 1, kMaxRunDepth);
      fusion.validate();
    } catch (const std::invalid_argument& ex) {
      return error(400, ex.what());
    }

    SearchResult result;
    try {
      result = e->search(*q, n, fusion);
    } catch (const std::exception& ex) {
      return error(500, ex.what());
    }
    return {200, to_json(result, fusion, n).dump()};
  }

  static nlohmann::json to_json(const SearchResult& r, const FusionConfig& fusion, std::size_t n) {
    nlohmann::json results = nlohmann::json::array();
    for (const auto& h : r.hits) {
      results.push_back({{"doc_id", h.score.doc_id},
                         {"title", h.title},
                         {"snippet", h.snippet},
                         {"final", h.score.final_score},
                         {"rrf", h.score.rrf},
                         {"q_factor", h.score.q_factor},
                         {"s_factor", h.score.s_factor}});
    }
    return {{"query", r.query},
            {"n", n},
            {"config", {{"mu", fusion.mu}, {"rrf_k", fusion.rrf_k}, {"pool_size", fusion.pool_size}}},
            {"results", std::move(results)},
            {"summary", r.summary ? r.summary->text : std::string()},
            {"answers", r.answers.spans}};
  }

  /// Registers the routes on an httplib server.
  void bind(httplib::Server& server) const {
    server.Get("/search", [this](const httplib::Request& req, httplib::Response& res) {
      Params params(req.params.begin(), req.params.end());
      write(search(params), res);
    });
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) { write(health(), res); });
  }

 private:
  static void write(const HttpReply& reply, httplib::Response& res) {
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  }

  static HttpReply error(int status, const std::string& message) {
    return {status, nlohmann::json{{"error", message}}.dump()};
  }

  static std::optional<std::string> param(const Params& params, const std::string& key) {
    auto it = params.find(key);
    if (it == params.end()) return std::nullopt;
    return it->second;
  }

  static std::size_t parse_count(const std::string& s, const char* name, std::size_t lo, std::size_t hi) {
    const auto v = detail::parse_number<std::size_t>(s);
    if (!v || *v < lo || *v > hi) {
      throw std::invalid_argument(std::string("parameter '") + name + "' must be an integer in [" +
                                  std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
    return *v;
  }

  static double parse_real(const std::string& s, const char* name) {
    const auto v = detail::parse_number<double>(s);
    if (!v || !std::isfinite(*v)) throw std::invalid_argument(std::string("parameter '") + name + "' must be a number");
    return *v;
  }

  mutable std::mutex mu_;
  std::shared_ptr<const Engine> engine_;
};

}  // namespace cosearch
