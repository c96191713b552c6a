#pragma once

#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rationale/error.hpp"

namespace rationale::jsonl {

using nlohmann::json;

/// Parses one JSON object per non-blank line. Errors name the 1-based line.
inline std::vector<json> parse(std::istream& in, const std::string& label = "<stream>") {
  std::vector<json> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      if (!j.is_object()) throw Error(ErrorCode::SchemaError, label + ":" + std::to_string(lineno) + ": not an object");
      out.push_back(std::move(j));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError, label + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<json> read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  return parse(in, path);
}

/// Applies `convert` to each record, reporting the record's line on failure.
template <typename T>
std::vector<T> read_records(const std::string& path, const std::function<T(const json&)>& convert) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(convert(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaError, path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::string dump_line(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::strict) + "\n"; }

inline void write(std::ostream& out, const std::vector<json>& rows) {
  for (const auto& r : rows) out << dump_line(r);
}

inline void write_file(const std::string& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  write(out, rows);
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path);
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << j.dump(2) << "\n";
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaError, path + ": " + e.what());
  }
}

}  // namespace rationale::jsonl
