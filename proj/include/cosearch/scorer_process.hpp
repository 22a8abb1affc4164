#pragma once

// Line-delimited subprocess protocol for external answer extractors and
// summarizers. Each request is one JSON record on the child's stdin:
//
//   {"op":"extract_answers","query":"...","paragraphs":["...", ...]}
//   {"op":"summarize","query":"...","paragraphs":["...", ...]}
//
// and the child answers with one JSON record on stdout:
//
//   {"spans":["...", ...]}      or      {"summary":"..."}
//
// A response carrying {"error":"..."} is reported as a failure.

#include <csignal>
#include <cstdio>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "cosearch/errors.hpp"
#include "cosearch/rank.hpp"

namespace cosearch {

/// A child process started with `/bin/sh -c command`, exchanging one line per
/// request. Not copyable; the child is terminated on destruction.
class LineProcess {
 public:
  explicit LineProcess(std::string command) : command_(std::move(command)) {
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) throw IoError("pipe failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      throw IoError("pipe failed");
    }
    pid_ = ::fork();
    if (pid_ < 0) {
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      throw IoError("fork failed");
    }
    if (pid_ == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      for (int fd : {to_child[0], to_child[1], from_child[0], from_child[1]}) ::close(fd);
      ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    ::fcntl(to_child[1], F_SETFD, FD_CLOEXEC);
    ::fcntl(from_child[0], F_SETFD, FD_CLOEXEC);
    in_ = ::fdopen(to_child[1], "w");
    out_ = ::fdopen(from_child[0], "r");
    if (in_ == nullptr || out_ == nullptr) throw IoError("fdopen failed");
  }

  LineProcess(const LineProcess&) = delete;
  LineProcess& operator=(const LineProcess&) = delete;

  ~LineProcess() {
    if (in_ != nullptr) std::fclose(in_);
    if (out_ != nullptr) std::fclose(out_);
    if (pid_ > 0) {
      int status = 0;
      if (::waitpid(pid_, &status, WNOHANG) == 0) {
        ::kill(pid_, SIGTERM);
        ::waitpid(pid_, &status, 0);
      }
    }
  }

  /// Sends one line (a trailing newline is appended) and reads one back.
  std::string exchange(std::string_view line) {
    std::lock_guard lock(mu_);
    // A dead child would otherwise raise SIGPIPE on write.
    struct sigaction ignore {};
    struct sigaction previous {};
    ignore.sa_handler = SIG_IGN;
    ::sigaction(SIGPIPE, &ignore, &previous);
    const bool wrote = std::fwrite(line.data(), 1, line.size(), in_) == line.size() &&
                       std::fputc('\n', in_) != EOF && std::fflush(in_) == 0;
    ::sigaction(SIGPIPE, &previous, nullptr);
    if (!wrote) throw IoError("scorer process '" + command_ + "': write failed");

    std::string reply;
    int c = 0;
    while ((c = std::fgetc(out_)) != EOF && c != '\n') reply.push_back(static_cast<char>(c));
    if (c == EOF && reply.empty()) throw IoError("scorer process '" + command_ + "' closed its output");
    return reply;
  }

  const std::string& command() const noexcept { return command_; }

 private:
  std::string command_;
  pid_t pid_ = -1;
  std::FILE* in_ = nullptr;
  std::FILE* out_ = nullptr;
  std::mutex mu_;
};

namespace detail {

inline nlohmann::json scorer_request(std::string_view op, std::string_view query,
                                     std::span<const std::string> paragraphs) {
  return {{"op", op},
          {"query", query},
          {"paragraphs", std::vector<std::string>(paragraphs.begin(), paragraphs.end())}};
}

inline nlohmann::json scorer_reply(LineProcess& proc, const nlohmann::json& request) {
  const auto line = proc.exchange(request.dump());
  nlohmann::json reply;
  try {
    reply = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw Error("scorer process '" + proc.command() + "' sent a malformed reply");
  }
  if (!reply.is_object()) throw Error("scorer process '" + proc.command() + "' sent a non-object reply");
  if (auto err = reply.find("error"); err != reply.end()) {
    throw Error("scorer process '" + proc.command() + "' failed: " + err->dump());
  }
  return reply;
}

}  // namespace detail

class ProcessAnswerExtractor final : public AnswerExtractor {
 public:
  explicit ProcessAnswerExtractor(std::string command) : proc_(std::move(command)) {}

  std::string id() const override { return "process:" + proc_.command(); }
  bool concurrent_safe() const override { return false; }

  std::vector<std::string> extract(std::string_view query, std::span<const std::string> paragraphs) const override {
    const auto reply = detail::scorer_reply(proc_, detail::scorer_request("extract_answers", query, paragraphs));
    const auto spans = reply.find("spans");
    if (spans == reply.end() || !spans->is_array()) throw Error("scorer reply lacks 'spans'");
    std::vector<std::string> out;
    for (const auto& s : *spans) {
      if (!s.is_string()) throw Error("scorer reply 'spans' must hold strings");
      out.push_back(s.get<std::string>());
    }
    return out;
  }

 private:
  mutable LineProcess proc_;
};

class ProcessSummarizer final : public Summarizer {
 public:
  explicit ProcessSummarizer(std::string command) : proc_(std::move(command)) {}

  std::string id() const override { return "process:" + proc_.command(); }
  bool concurrent_safe() const override { return false; }

  std::string summarize(std::string_view query, std::span<const std::string> paragraphs) const override {
    const auto reply = detail::scorer_reply(proc_, detail::scorer_request("summarize", query, paragraphs));
    const auto text = reply.find("summary");
    if (text == reply.end() || !text->is_string()) throw Error("scorer reply lacks 'summary'");
    return text->get<std::string>();
  }

 private:
  mutable LineProcess proc_;
};

}  // namespace cosearch
