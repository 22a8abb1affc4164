// JSON-lines scorer used by the subprocess tests.
//   fake_scorer            answer = first three words of each paragraph,
//                          summary = first sentence of the first paragraph
//   fake_scorer --error    every reply is {"error": ...}
//   fake_scorer --garbage  replies are not JSON
//   fake_scorer --exit     exits before replying

#include <iostream>
#include <sstream>
#include <string>

#include <json.hpp>

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "";
  std::string line;
  while (std::getline(std::cin, line)) {
    if (mode == "--exit") return 3;
    if (mode == "--garbage") {
      std::cout << "not json at all" << std::endl;
      continue;
    }
    if (mode == "--error") {
      std::cout << nlohmann::json{{"error", "scorer failed"}}.dump() << std::endl;
      continue;
    }
    const auto req = nlohmann::json::parse(line);
    const auto op = req.at("op").get<std::string>();
    const auto& paragraphs = req.at("paragraphs");
    if (op == "extract_answers") {
      nlohmann::json spans = nlohmann::json::array();
      for (const auto& p : paragraphs) {
        std::istringstream words(p.get<std::string>());
        std::string w, span;
        for (int i = 0; i < 3 && words >> w; ++i) span += (span.empty() ? "" : " ") + w;
        if (!span.empty()) spans.push_back(span);
      }
      std::cout << nlohmann::json{{"spans", spans}}.dump() << std::endl;
    } else if (op == "summarize") {
      std::string first = paragraphs.empty() ? "" : paragraphs[0].get<std::string>();
      const auto dot = first.find(". ");
      if (dot != std::string::npos) first = first.substr(0, dot + 1);
      std::cout << nlohmann::json{{"summary", first}}.dump() << std::endl;
    } else {
      std::cout << nlohmann::json{{"error", "unknown op"}}.dump() << std::endl;
    }
  }
  return 0;
}
