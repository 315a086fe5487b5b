/*
 Copyright 2026 The lmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

/**
 * @file config.hpp
 * @brief Sectioned key = value configuration text and typed field registries.
 *
 * Format:
 *
 *   # comment
 *   [section]
 *   key = value        # trailing comment
 *   list = [1, 2, 3]   # or 1, 2, 3
 *   text = "quoted"    # quotes are optional
 *
 * Keys are addressed as "section.key". A registry maps each key to a getter
 * and a setter on a config struct; unknown keys and malformed values raise
 * ConfigError.
 */
#pragma once

#include "lmpc/csv.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmpc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigEntry {
  std::string key;  ///< section.key
  std::string value;
  int line = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

inline bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  return true;
}

}  // namespace detail

inline std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& origin = "config") {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string raw, section;
  int line = 0;
  auto fail = [&](const std::string& why) {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + why);
  };
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = detail::trim(detail::strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail("unterminated section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      if (!detail::valid_name(section)) fail("bad section name '" + section + "'");
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    std::string value = detail::trim(s.substr(eq + 1));
    if (!detail::valid_name(key)) fail("bad key '" + key + "'");
    if (section.empty()) fail("key '" + key + "' outside any [section]");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const std::string full = section + "." + key;
    for (const auto& e : out)
      if (e.key == full) fail("duplicate key '" + full + "'");
    out.push_back({full, value, line});
  }
  return out;
}

inline std::vector<ConfigEntry> load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

/// "section.key=value" from the command line.
inline ConfigEntry parse_override(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + s + "' must look like section.key=value");
  ConfigEntry e{detail::trim(s.substr(0, eq)), detail::trim(s.substr(eq + 1)), 0};
  const auto dot = e.key.find('.');
  if (dot == std::string::npos || !detail::valid_name(e.key.substr(0, dot)) || !detail::valid_name(e.key.substr(dot + 1)))
    throw ConfigError("override key '" + e.key + "' must look like section.key");
  return e;
}

// ---------------------------------------------------------------- value codecs

inline double parse_double(const std::string& key, const std::string& v) {
  const std::string s = detail::trim(v);
  if (s == "inf" || s == "+inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double out = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  const std::string s = detail::trim(v);
  long long out = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  const std::string s = detail::trim(v);
  std::uint64_t out = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  const std::string s = detail::trim(v);
  if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "off" || s == "0" || s == "no") return false;
  throw ConfigError(key + ": expected true/false or on/off, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::string s = detail::trim(v);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ConfigError(key + ": unterminated list");
    s = s.substr(1, s.size() - 2);
  }
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  return out;
}

inline std::string format_list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s + "]";
}

inline std::string format_bool(bool b) { return b ? "true" : "false"; }

// ---------------------------------------------------------------- registry

template <class Cfg>
struct ConfigField {
  std::string key;
  std::string help;
  std::function<std::string(const Cfg&)> get;
  std::function<void(Cfg&, const std::string&)> set;
};

template <class Cfg>
class ConfigRegistry {
 public:
  void add(std::string key, std::string help, std::function<std::string(const Cfg&)> get,
           std::function<void(Cfg&, const std::string&)> set) {
    fields_.push_back({std::move(key), std::move(help), std::move(get), std::move(set)});
  }

  const std::vector<ConfigField<Cfg>>& fields() const { return fields_; }

  const ConfigField<Cfg>* find(const std::string& key) const {
    for (const auto& f : fields_)
      if (f.key == key) return &f;
    return nullptr;
  }

  void apply(Cfg& cfg, const ConfigEntry& e) const {
    const auto* f = find(e.key);
    if (!f) throw ConfigError((e.line ? "line " + std::to_string(e.line) + ": " : std::string()) + "unknown key '" + e.key + "'");
    f->set(cfg, e.value);
  }

  void apply(Cfg& cfg, const std::vector<ConfigEntry>& es) const {
    for (const auto& e : es) apply(cfg, e);
  }

  /// Every key with its effective value, one "key = value" per line, in
  /// registry order. Two configs dump identically iff all values agree.
  std::string dump(const Cfg& cfg) const {
    std::string s;
    for (const auto& f : fields_) s += f.key + " = " + f.get(cfg) + "\n";
    return s;
  }

 private:
  std::vector<ConfigField<Cfg>> fields_;
};

/// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  static const char* digits = "0123456789abcdef";
  for (int i = 15; i >= 0; --i, h >>= 4) buf[i] = digits[h & 0xF];
  buf[16] = '\0';
  return buf;
}

}  // namespace lmpc
