#pragma once

// Plain "key = value" text used by rule-set and scenario files. '#' starts a
// comment; blank lines are ignored; keys are unique.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gridsentry/error.hpp"

namespace gridsentry {

class KeyValues {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static KeyValues parse(std::istream& in) {
    KeyValues kv;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string_view body = trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos)
        throw Error(Errc::schema_error, "expected key = value", n, std::string(body));
      const std::string key{trim(body.substr(0, eq))};
      if (key.empty()) throw Error(Errc::schema_error, "empty key", n);
      if (kv.entries_.count(key)) throw Error(Errc::schema_error, "duplicate key", n, key);
      kv.entries_[key] = {std::string(trim(body.substr(eq + 1))), n};
    }
    return kv;
  }

  static KeyValues parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse(in);
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    return parse(in);
  }

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

  const Entry* find(const std::string& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  /// Rejects keys outside `known`.
  void expect_only(const std::vector<std::string_view>& known) const {
    for (const auto& [k, e] : entries_) {
      bool ok = false;
      for (auto name : known) ok = ok || name == k;
      if (!ok) throw Error(Errc::schema_error, "unknown key", e.line, k);
    }
  }

  template <class T>
  bool get_number(const std::string& key, T& out) const {
    const Entry* e = find(key);
    if (!e) return false;
    const auto& v = e->value;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size())
      throw Error(Errc::schema_error, "not a number: " + v, e->line, key);
    return true;
  }

  bool get_string(const std::string& key, std::string& out) const {
    const Entry* e = find(key);
    if (!e) return false;
    out = e->value;
    return true;
  }

  static std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= v.size()) {
      const auto comma = v.find(',', start);
      const auto piece = trim(v.substr(start, comma == std::string_view::npos
                                                  ? std::string_view::npos
                                                  : comma - start));
      if (!piece.empty()) out.emplace_back(piece);
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }

  static std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace gridsentry
