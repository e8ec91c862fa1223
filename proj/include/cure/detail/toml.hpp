#pragma once

#include <json.hpp>

#include <string>
#include <string_view>
#include <vector>

#include "cure/detail/strings.hpp"
#include "cure/errors.hpp"

namespace cure::detail {

// Minimal TOML reader covering the subset this project's config files use:
// [dotted.table] headers, bare keys, and string / integer / float / boolean
// scalars, with '#' comments. Arrays, inline tables, dates and multi-line
// strings are rejected. The same structure is accepted natively as JSON.

inline std::string parse_toml_string(std::string_view v, std::size_t line_no) {
  if (v.size() < 2 || v.front() != '"' || v.back() != '"')
    throw ConfigError("toml line " + std::to_string(line_no) + ": unterminated string");
  std::string out;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) {
    char c = v[i];
    if (c == '\\') {
      if (i + 2 >= v.size())
        throw ConfigError("toml line " + std::to_string(line_no) + ": bad escape");
      char e = v[++i];
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        default:
          throw ConfigError("toml line " + std::to_string(line_no) + ": unsupported escape \\" +
                            std::string(1, e));
      }
    } else {
      out.push_back(c);
    }
  }
  return out;
}

inline nlohmann::json parse_toml_scalar(std::string_view v, std::size_t line_no) {
  if (!v.empty() && v.front() == '"') return parse_toml_string(v, line_no);
  if (v == "true") return true;
  if (v == "false") return false;
  std::string s(v);
  try {
    std::size_t used = 0;
    if (s.find_first_of(".eE") == std::string::npos) {
      long long i = std::stoll(s, &used);
      if (used == s.size()) return i;
    } else {
      double d = std::stod(s, &used);
      if (used == s.size()) return d;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("toml line " + std::to_string(line_no) + ": unsupported value '" + s + "'");
}

/// Strips a '#' comment that is not inside a double-quoted string.
inline std::string_view strip_toml_comment(std::string_view line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
    if (c == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline nlohmann::json parse_toml(std::string_view text) {
  nlohmann::json root = nlohmann::json::object();
  nlohmann::json* table = &root;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    line = trim(strip_toml_comment(line));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("toml line " + std::to_string(line_no) + ": malformed table header");
      std::string_view path = trim(line.substr(1, line.size() - 2));
      if (path.empty())
        throw ConfigError("toml line " + std::to_string(line_no) + ": empty table header");
      table = &root;
      while (!path.empty()) {
        std::size_t dot = path.find('.');
        std::string_view part = trim(path.substr(0, dot));
        if (part.empty())
          throw ConfigError("toml line " + std::to_string(line_no) + ": empty table name part");
        table = &(*table)[std::string(part)];
        if (table->is_null()) *table = nlohmann::json::object();
        path = dot == std::string_view::npos ? std::string_view{} : path.substr(dot + 1);
      }
      continue;
    }

    std::size_t eq = std::string_view::npos;
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '=' && !in_string) {
        eq = i;
        break;
      }
    }
    if (eq == std::string_view::npos)
      throw ConfigError("toml line " + std::to_string(line_no) + ": expected key = value");
    std::string key(trim(line.substr(0, eq)));
    std::string_view value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("toml line " + std::to_string(line_no) + ": expected key = value");
    (*table)[key] = parse_toml_scalar(value, line_no);
  }
  return root;
}

}  // namespace cure::detail
