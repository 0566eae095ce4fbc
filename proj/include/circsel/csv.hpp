#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "circsel/sim_engine.hpp"

namespace circsel::csv {

inline std::string fixed(double v, int precision) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed, precision);
  if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
  return std::string(buf, end);
}

/// Exact seconds with six decimals, formatted from the integer tick count.
inline std::string seconds(SimTime t) {
  std::int64_t us = t.us();
  std::string out;
  if (us < 0) {
    out.push_back('-');
    us = -us;
  }
  out += std::to_string(us / 1000000);
  std::string frac = std::to_string(us % 1000000);
  out.push_back('.');
  out.append(6 - frac.size(), '0');
  out += frac;
  return out;
}

inline std::string seconds(const std::optional<SimTime>& t) { return t ? seconds(*t) : std::string(); }

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
T parse_number(std::string_view s) {
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error("bad number in CSV: '" + std::string(s) + "'");
  return value;
}

/// Parses "123.456789" seconds back into exact ticks.
inline SimTime parse_seconds(std::string_view s) {
  bool neg = false;
  if (!s.empty() && s.front() == '-') {
    neg = true;
    s.remove_prefix(1);
  }
  const std::size_t dot = s.find('.');
  std::int64_t whole = parse_number<std::int64_t>(s.substr(0, dot));
  std::int64_t frac = 0;
  if (dot != std::string_view::npos) {
    std::string digits(s.substr(dot + 1));
    if (digits.size() > 6) digits.resize(6);
    digits.append(6 - digits.size(), '0');
    frac = parse_number<std::int64_t>(digits);
  }
  const std::int64_t us = whole * 1000000 + frac;
  return SimTime::from_us(neg ? -us : us);
}

inline std::optional<SimTime> parse_optional_seconds(std::string_view s) {
  if (s.empty()) return std::nullopt;
  return parse_seconds(s);
}

/// Reads a CSV file with a header row into (header, rows).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("missing CSV column: " + std::string(name));
  }
};

inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    for (auto f : split(line)) fields.emplace_back(f);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size())
        throw std::runtime_error("CSV row has " + std::to_string(fields.size()) +
                                 " fields, header has " + std::to_string(t.header.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (first) throw std::runtime_error("empty CSV input");
  return t;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_table(in);
}

}  // namespace circsel::csv
