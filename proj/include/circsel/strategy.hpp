#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "circsel/circuit_model.hpp"
#include "circsel/rng.hpp"

namespace circsel {

enum class StrategyId : std::uint8_t {
  vanilla,
  car,
  congestion_only,
  length_only,
  rtt_only,
  congestion_then_length,
  rtt_then_length,
  length_then_congestion,
  length_then_rtt,
  rtt_then_congestion,
  congestion_then_rtt,
};

inline constexpr std::array kAllStrategies{
    StrategyId::vanilla,
    StrategyId::car,
    StrategyId::congestion_only,
    StrategyId::length_only,
    StrategyId::rtt_only,
    StrategyId::congestion_then_length,
    StrategyId::rtt_then_length,
    StrategyId::length_then_congestion,
    StrategyId::length_then_rtt,
    StrategyId::rtt_then_congestion,
    StrategyId::congestion_then_rtt,
};

inline constexpr std::string_view to_string(StrategyId s) {
  switch (s) {
    case StrategyId::vanilla: return "vanilla";
    case StrategyId::car: return "car";
    case StrategyId::congestion_only: return "congestion_only";
    case StrategyId::length_only: return "length_only";
    case StrategyId::rtt_only: return "rtt_only";
    case StrategyId::congestion_then_length: return "congestion_then_length";
    case StrategyId::rtt_then_length: return "rtt_then_length";
    case StrategyId::length_then_congestion: return "length_then_congestion";
    case StrategyId::length_then_rtt: return "length_then_rtt";
    case StrategyId::rtt_then_congestion: return "rtt_then_congestion";
    case StrategyId::congestion_then_rtt: return "congestion_then_rtt";
  }
  return "?";
}

inline std::optional<StrategyId> parse_strategy(std::string_view name) {
  for (auto s : kAllStrategies)
    if (to_string(s) == name) return s;
  return std::nullopt;
}

/// Baselines keep the unmodified pool behaviour; the nine metric strategies
/// reap circuits left unused.
inline constexpr bool is_baseline(StrategyId s) {
  return s == StrategyId::vanilla || s == StrategyId::car;
}

enum class Metric : std::uint8_t { rtt, congestion, length };

struct CircuitScore {
  CircuitId circuit_id = 0;
  std::optional<double> mean_rtt_ms;
  std::optional<double> mean_congestion_ms;
  double length_km = 0.0;

  std::optional<double> get(Metric m) const {
    switch (m) {
      case Metric::rtt: return mean_rtt_ms;
      case Metric::congestion: return mean_congestion_ms;
      case Metric::length: return length_km;
    }
    return std::nullopt;
  }
};

inline CircuitScore score(const Circuit& c, double length_km) {
  return CircuitScore{c.id(), c.mean_rtt(), c.congestion_time(), length_km};
}

namespace detail {

// Strict weak order on one metric: measured values ascending, unmeasured
// last, ties by circuit id.
inline bool metric_less(const CircuitScore& a, const CircuitScore& b, Metric m) {
  const auto va = a.get(m);
  const auto vb = b.get(m);
  if (va.has_value() != vb.has_value()) return va.has_value();
  if (va && *va != *vb) return *va < *vb;
  return a.circuit_id < b.circuit_id;
}

inline CircuitId argmin(std::span<const CircuitScore> c, Metric m) {
  return std::min_element(c.begin(), c.end(),
                          [m](const auto& a, const auto& b) { return metric_less(a, b, m); })
      ->circuit_id;
}

inline CircuitId two_lowest_then(std::span<const CircuitScore> c, Metric first, Metric second) {
  std::vector<CircuitScore> sorted(c.begin(), c.end());
  const std::size_t keep = std::min<std::size_t>(2, sorted.size());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep),
                    sorted.end(),
                    [first](const auto& a, const auto& b) { return metric_less(a, b, first); });
  return argmin(std::span(sorted.data(), keep), second);
}

}  // namespace detail

inline constexpr std::size_t kCarSampleSize = 3;
inline constexpr double kCarAbandonThresholdMs = 500.0;

/// Picks one candidate. Every strategy but CAR is a pure function of the
/// candidate set; CAR draws from `rng`, sampling over id-sorted candidates so
/// input order never matters. Throws std::invalid_argument on an empty set.
inline CircuitId select(StrategyId strategy, std::span<const CircuitScore> candidates,
                        RngStream& rng) {
  if (candidates.empty()) throw std::invalid_argument("select: no candidate circuits");
  using detail::argmin;
  using detail::two_lowest_then;
  switch (strategy) {
    case StrategyId::vanilla:
      return std::min_element(candidates.begin(), candidates.end(),
                              [](const auto& a, const auto& b) {
                                return a.circuit_id < b.circuit_id;
                              })
          ->circuit_id;
    case StrategyId::car: {
      std::vector<CircuitScore> pool(candidates.begin(), candidates.end());
      std::sort(pool.begin(), pool.end(),
                [](const auto& a, const auto& b) { return a.circuit_id < b.circuit_id; });
      const std::size_t k = std::min(kCarSampleSize, pool.size());
      // Partial Fisher-Yates: the first k slots become the sample.
      for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.uniform_index(pool.size() - i);
        std::swap(pool[i], pool[j]);
      }
      return argmin(std::span(pool.data(), k), Metric::congestion);
    }
    case StrategyId::congestion_only: return argmin(candidates, Metric::congestion);
    case StrategyId::length_only: return argmin(candidates, Metric::length);
    case StrategyId::rtt_only: return argmin(candidates, Metric::rtt);
    case StrategyId::congestion_then_length:
      return two_lowest_then(candidates, Metric::congestion, Metric::length);
    case StrategyId::rtt_then_length:
      return two_lowest_then(candidates, Metric::rtt, Metric::length);
    case StrategyId::length_then_congestion:
      return two_lowest_then(candidates, Metric::length, Metric::congestion);
    case StrategyId::length_then_rtt:
      return two_lowest_then(candidates, Metric::length, Metric::rtt);
    case StrategyId::rtt_then_congestion:
      return two_lowest_then(candidates, Metric::rtt, Metric::congestion);
    case StrategyId::congestion_then_rtt:
      return two_lowest_then(candidates, Metric::congestion, Metric::rtt);
  }
  throw std::invalid_argument("select: unknown strategy");
}

/// CAR stops using a circuit for new streams once its mean congestion time
/// exceeds 0.5 s. Unmeasured circuits are kept.
inline bool car_abandon_check(const CircuitScore& c) {
  return c.mean_congestion_ms && *c.mean_congestion_ms > kCarAbandonThresholdMs;
}

}  // namespace circsel
