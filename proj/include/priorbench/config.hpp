#pragma once

// Run configuration files.
//
// Grammar (one construct per line, surrounding whitespace ignored):
//
//   # comment            ; comment
//   [section]
//   key = value
//
// Keys are addressed as "section.key". Section and key names are
// [A-Za-z0-9_-]+. Values run to the end of the line. A key may appear once
// per section. Serialization is canonical: sections and keys sorted.

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "priorbench/errors.hpp"

namespace priorbench {

class Config {
 public:
  static Config parse(std::string_view text, const std::string& source = "<config>") {
    Config cfg;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string line = trim(text.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      auto fail = [&](const std::string& why) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": " + why);
      };
      if (line.empty() || line[0] == '#' || line[0] == ';') {
        if (end == text.size()) break;
        continue;
      }
      if (line.front() == '[') {
        if (line.back() != ']') fail("unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        if (!valid_name(section)) fail("invalid section name '" + section + "'");
      } else {
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail("expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty()) fail("key '" + key + "' appears before any [section]");
        if (!valid_name(key)) fail("invalid key name '" + key + "'");
        const std::string full = section + "." + key;
        if (cfg.values_.count(full) != 0) fail("duplicate key '" + full + "'");
        cfg.values_[full] = value;
      }
      if (end == text.size()) break;
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) {
    const auto dot = key.find('.');
    if (dot == std::string::npos || !valid_name(key.substr(0, dot)) ||
        !valid_name(key.substr(dot + 1))) {
      throw ConfigError("invalid config key '" + key + "'");
    }
    values_[key] = value;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::int64_t v = 0;
    const auto& s = it->second;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("config field '" + key + "': expected an integer, got '" + s + "'");
    }
    return v;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    const auto& s = it->second;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("config field '" + key + "': expected an unsigned integer, got '" + s + "'");
    }
    return v;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    double v = 0.0;
    const auto& s = it->second;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      throw ConfigError("config field '" + key + "': expected a number, got '" + s + "'");
    }
    return v;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Canonical text; parse(to_text()) reproduces the same Config.
  std::string to_text() const {
    std::string out;
    std::string current;
    for (const auto& [full, value] : values_) {
      const auto dot = full.find('.');
      const std::string section = full.substr(0, dot);
      if (section != current) {
        if (!out.empty()) out += "\n";
        out += "[" + section + "]\n";
        current = section;
      }
      out += full.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
  }

  /// FNV-1a over the canonical text.
  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_text()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  bool operator==(const Config&) const = default;

 private:
  static std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
  }

  static bool valid_name(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    }
    return true;
  }

  std::map<std::string, std::string> values_;
};

}  // namespace priorbench
