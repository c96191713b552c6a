#pragma once

// Plain-text prompt templates. File layout: the body, then zero or more
// demonstrations, each introduced by a line reading exactly
// "=== demonstration ===". Placeholders are {name} with name made of
// [a-z_]; "{{" and "}}" produce literal braces. The body may place
// {demonstrations}; otherwise demonstrations are rendered before the body.
// Demonstration text is inserted verbatim.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rationale/error.hpp"

namespace rationale {

struct PromptTemplate {
  std::string name;
  std::string body;
  std::vector<std::string> demonstrations;

  static constexpr const char* kDemoSeparator = "=== demonstration ===";

  static PromptTemplate parse(const std::string& name, const std::string& content) {
    PromptTemplate t;
    t.name = name;
    std::istringstream in(content);
    std::string line;
    std::string* current = &t.body;
    bool first_line = true;
    while (std::getline(in, line)) {
      if (line == kDemoSeparator) {
        t.demonstrations.emplace_back();
        current = &t.demonstrations.back();
        first_line = true;
        continue;
      }
      if (!first_line) current->push_back('\n');
      *current += line;
      first_line = false;
    }
    return t;
  }

  static PromptTemplate from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open template " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    auto slash = path.find_last_of('/');
    auto stem = path.substr(slash == std::string::npos ? 0 : slash + 1);
    if (auto dot = stem.rfind('.'); dot != std::string::npos) stem.resize(dot);
    return parse(stem, ss.str());
  }

  std::string render(const std::map<std::string, std::string>& values) const {
    std::string demos;
    for (const auto& d : demonstrations) {
      if (!demos.empty()) demos += "\n\n";
      demos += d;
    }
    bool demos_placed = false;
    std::string out = substitute(body, values, demos, demos_placed);
    if (!demos_placed && !demos.empty()) out = demos + "\n\n" + out;
    return out;
  }

 private:
  std::string substitute(const std::string& src, const std::map<std::string, std::string>& values,
                         const std::string& demos, bool& demos_placed) const {
    std::string out;
    for (std::size_t i = 0; i < src.size(); ++i) {
      char c = src[i];
      if ((c == '{' || c == '}') && i + 1 < src.size() && src[i + 1] == c) {
        out.push_back(c);
        ++i;
        continue;
      }
      if (c != '{') {
        out.push_back(c);
        continue;
      }
      std::size_t j = i + 1;
      while (j < src.size() && ((src[j] >= 'a' && src[j] <= 'z') || src[j] == '_')) ++j;
      if (j == i + 1 || j >= src.size() || src[j] != '}') {
        out.push_back(c);
        continue;
      }
      std::string key = src.substr(i + 1, j - i - 1);
      if (key == "demonstrations") {
        out += demos;
        demos_placed = true;
      } else if (auto it = values.find(key); it != values.end()) {
        out += it->second;
      } else {
        throw Error(ErrorCode::UnboundPlaceholder, "template '" + name + "': {" + key + "} is not bound");
      }
      i = j;
    }
    return out;
  }
};

}  // namespace rationale
