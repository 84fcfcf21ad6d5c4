#pragma once

// Line-oriented "key = value" text documents. '#' starts a comment, blank
// lines are ignored, keys are unique, values are trimmed.

#include <charconv>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "b2s/common/error.hpp"

namespace b2s::kv {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Splits on any of `seps`, dropping empty pieces.
inline std::vector<std::string> split(std::string_view s, std::string_view seps = " \t,") {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto j = s.find_first_of(seps, i);
    const auto piece = s.substr(i, j == std::string_view::npos ? s.size() - i : j - i);
    if (!trim(piece).empty()) out.emplace_back(trim(piece));
    if (j == std::string_view::npos) break;
    i = j + 1;
  }
  return out;
}

inline double to_double(std::string_view s, std::string_view what = "value") {
  s = trim(s);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    fail(ErrorKind::config, std::string(what) + ": expected a number, got \"" + std::string(s) + "\"");
  return v;
}

template <class Int = long long>
Int to_int(std::string_view s, std::string_view what = "value") {
  s = trim(s);
  Int v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    fail(ErrorKind::config, std::string(what) + ": expected an integer, got \"" + std::string(s) + "\"");
  return v;
}

/// Shortest text that parses back to the same double.
inline std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

class Document {
 public:
  static Document parse(std::string_view text, std::string_view origin = "document") {
    Document d;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      const auto nl = text.find('\n', pos);
      auto line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
      pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      const auto where = std::string(origin) + ":" + std::to_string(line_no);
      if (eq == std::string_view::npos) fail(ErrorKind::config, where + ": expected 'key = value'");
      const auto key = std::string(trim(line.substr(0, eq)));
      if (key.empty()) fail(ErrorKind::config, where + ": empty key");
      if (d.values_.contains(key)) fail(ErrorKind::config, where + ": duplicate key '" + key + "'");
      d.values_[key] = std::string(trim(line.substr(eq + 1)));
      d.order_.push_back(key);
    }
    return d;
  }

  bool has(const std::string& key) const { return values_.contains(key); }
  const std::string& get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) fail(ErrorKind::config, "missing key '" + key + "'");
    return it->second;
  }
  std::string get_or(const std::string& key, std::string fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  void set(const std::string& key, std::string value) {
    if (!values_.contains(key)) order_.push_back(key);
    values_[key] = std::move(value);
  }
  const std::vector<std::string>& keys() const { return order_; }
  const std::map<std::string, std::string>& sorted() const { return values_; }

  /// Keys in insertion order.
  std::string str() const {
    std::string out;
    for (const auto& k : order_) out += k + " = " + values_.at(k) + "\n";
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

}  // namespace b2s::kv
