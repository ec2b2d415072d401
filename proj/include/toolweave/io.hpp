#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "toolweave/error.hpp"

namespace toolweave {

using Json = nlohmann::json;

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << contents;
  if (!out) fail(ErrorCode::IoError, "short write to " + path.string());
}

inline Json parse_json_line(const std::string& line, std::size_t line_no,
                            const std::string& source = "") {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::MalformedRecord, (source.empty() ? "" : source + ": ") + "line " +
                                         std::to_string(line_no) + ", offset " +
                                         std::to_string(e.byte) + ": " + e.what());
  }
}

/// Calls `fn(record, line_no)` for every non-blank line; line numbers are 1-based.
inline void for_each_jsonl(const std::string& text, const std::string& source,
                           const std::function<void(const Json&, std::size_t)>& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    ++line_no;
    std::string line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") != std::string::npos) {
      fn(parse_json_line(line, line_no, source), line_no);
    }
    pos = nl + 1;
  }
}

inline std::string to_jsonl(const std::vector<Json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

inline const Json& require_field(const Json& record, const char* key, std::size_t line_no) {
  if (!record.is_object() || !record.contains(key)) {
    fail(ErrorCode::MalformedRecord,
         "line " + std::to_string(line_no) + ": missing field '" + key + "'");
  }
  return record.at(key);
}

inline std::string string_field(const Json& record, const char* key, std::size_t line_no,
                                const std::string& fallback = "") {
  if (!record.is_object() || !record.contains(key) || record.at(key).is_null()) return fallback;
  const Json& v = record.at(key);
  if (!v.is_string()) {
    fail(ErrorCode::MalformedRecord,
         "line " + std::to_string(line_no) + ": field '" + key + "' is not a string");
  }
  return v.get<std::string>();
}

}  // namespace toolweave
