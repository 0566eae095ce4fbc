#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace circsel::stats {

/// Linear-interpolated quantile of sorted data, q in [0, 1].
inline double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  if (sorted.size() == 1) return sorted.front();
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

inline std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  return s;
}

inline double quantile(std::span<const double> v, double q) {
  const auto s = sorted_copy(v);
  return quantile_sorted(s, q);
}

inline double median(std::span<const double> v) { return quantile(v, 0.5); }

inline double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

struct FiveNumber {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

inline FiveNumber five_number(std::span<const double> v) {
  const auto s = sorted_copy(v);
  return FiveNumber{s.front(), quantile_sorted(s, 0.25), quantile_sorted(s, 0.5),
                    quantile_sorted(s, 0.75), s.back()};
}

/// Empirical CDF as (value, fraction <= value), one point per distinct value.
inline std::vector<std::pair<double, double>> ecdf(std::span<const double> v) {
  const auto s = sorted_copy(v);
  std::vector<std::pair<double, double>> out;
  const double n = static_cast<double>(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i + 1 < s.size() && s[i + 1] == s[i]) continue;
    out.emplace_back(s[i], static_cast<double>(i + 1) / n);
  }
  return out;
}

}  // namespace circsel::stats
