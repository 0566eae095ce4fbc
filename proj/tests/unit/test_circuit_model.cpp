#include <gtest/gtest.h>

#include <numbers>
#include <numeric>
#include <sstream>

#include "circsel/circuit_model.hpp"

using namespace circsel;

namespace {

Circuit open_circuit(CircuitId id = 1) {
  Circuit c(id, 0, RelayPath{0, 1, 2}, {80}, SimTime{});
  c.open(millis(100));
  return c;
}

void feed(Circuit& c, std::initializer_list<double> samples) {
  for (double s : samples) c.record_rtt({s, SimTime{}, RttSource::idle_probe});
}

std::vector<double> window_values(const Circuit& c) {
  std::vector<double> v;
  for (const auto& e : c.rtt_window()) v.push_back(e.sample.value_ms);
  return v;
}

}  // namespace

TEST(RttWindow, KeepsLastFive) {
  auto c = open_circuit();
  feed(c, {100, 110, 120, 130, 140});
  feed(c, {90});
  EXPECT_EQ(window_values(c), (std::vector<double>{110, 120, 130, 140, 90}));
  EXPECT_EQ(c.rtt_min(), 90.0);
}

TEST(RttWindow, FirstSampleSetsMinimum) {
  auto c = open_circuit();
  EXPECT_FALSE(c.rtt_min());
  EXPECT_FALSE(c.mean_rtt());
  EXPECT_FALSE(c.congestion_time());
  feed(c, {100});
  EXPECT_EQ(c.rtt_min(), 100.0);
}

TEST(RttWindow, MinimumIsGlobalMinimum) {
  auto c = open_circuit();
  RngStream rng(2, "samples");
  double oracle = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    const double s = rng.uniform(10, 2000);
    oracle = std::min(oracle, s);
    feed(c, {s});
  }
  EXPECT_EQ(c.rtt_min(), oracle);
}

TEST(CongestionTime, EqualSamplesGiveZero) {
  auto c = open_circuit();
  feed(c, {250, 250, 250});
  EXPECT_EQ(c.congestion_time(), 0.0);
}

TEST(CongestionTime, PerSampleAgainstRunningMinimum) {
  auto c = open_circuit();
  feed(c, {300, 400, 500});
  ASSERT_EQ(c.rtt_window().size(), 3u);
  EXPECT_EQ(c.rtt_window()[0].congestion_ms, 0.0);
  EXPECT_EQ(c.rtt_window()[1].congestion_ms, 100.0);
  EXPECT_EQ(c.rtt_window()[2].congestion_ms, 200.0);
  EXPECT_EQ(c.congestion_time(), 100.0);
}

TEST(CongestionTime, SingleSampleIsZero) {
  auto c = open_circuit();
  feed(c, {777});
  EXPECT_EQ(c.congestion_time(), 0.0);
}

TEST(CongestionTime, LaterMinimumDoesNotRewriteHistory) {
  auto c = open_circuit();
  feed(c, {300, 200});
  // 300 had no congestion when taken; 200 is the new minimum.
  EXPECT_EQ(c.congestion_time(), 0.0);
}

TEST(MeanRtt, Examples) {
  auto a = open_circuit();
  feed(a, {100});
  EXPECT_EQ(a.mean_rtt(), 100.0);
  auto b = open_circuit();
  feed(b, {100, 200, 300, 400, 500});
  EXPECT_EQ(b.mean_rtt(), 300.0);
}

TEST(MeanRtt, MatchesRecomputationFromLog) {
  RngStream rng(5, "windows");
  for (int trial = 0; trial < 200; ++trial) {
    auto c = open_circuit();
    std::vector<double> log;
    const int n = 1 + static_cast<int>(rng.uniform_index(12));
    for (int i = 0; i < n; ++i) {
      log.push_back(std::round(rng.uniform(20, 900)));
      feed(c, {log.back()});
    }
    const std::size_t k = std::min<std::size_t>(5, log.size());
    double sum_rtt = 0, sum_tc = 0;
    for (std::size_t i = log.size() - k; i < log.size(); ++i) {
      sum_rtt += log[i];
      const double min_so_far = *std::min_element(log.begin(), log.begin() + static_cast<long>(i) + 1);
      sum_tc += log[i] - min_so_far;
    }
    EXPECT_DOUBLE_EQ(*c.mean_rtt(), sum_rtt / k);
    EXPECT_DOUBLE_EQ(*c.congestion_time(), sum_tc / k);
    EXPECT_GE(*c.congestion_time(), 0.0);
  }
}

TEST(CircuitLifecycle, IllegalTransitionsThrow) {
  Circuit c(7, 3, RelayPath{0, 1, 2}, {80}, SimTime{});
  EXPECT_THROW(c.attach_stream(SimTime{}), std::logic_error);
  EXPECT_THROW(c.mark_dirty(SimTime{}), std::logic_error);
  EXPECT_THROW(c.record_rtt({100, SimTime{}, RttSource::build_handshake}), std::logic_error);
  c.open(millis(200));
  EXPECT_EQ(c.built_at(), millis(200));
  EXPECT_THROW(c.open(millis(300)), std::logic_error);
  EXPECT_THROW(c.record_rtt({0.0, SimTime{}, RttSource::idle_probe}), std::invalid_argument);
  c.attach_stream(seconds(1));
  c.attach_stream(seconds(2));
  EXPECT_EQ(c.first_used_at(), seconds(1));
  EXPECT_EQ(c.last_used_at(), seconds(2));
  EXPECT_EQ(c.active_streams(), 2u);
  c.detach_stream();
  c.mark_dirty(seconds(3));
  EXPECT_FALSE(c.is_clean());
  EXPECT_THROW(c.attach_stream(seconds(4)), std::logic_error);
  c.record_rtt({100, seconds(4), RttSource::stream_attach});  // dirty circuits still measure
  c.close(seconds(5));
  EXPECT_THROW(c.close(seconds(6)), std::logic_error);
  EXPECT_EQ(c.total_streams(), 2u);
}

TEST(GeoLength, ColocatedIsZero) {
  const Position p{48.0, 11.0};
  EXPECT_EQ(geo_length_km(p, p, p, p, p), 0.0);
}

TEST(GeoLength, EquatorSegments) {
  const double arc = great_circle_km({0, 0}, {0, 10});
  EXPECT_NEAR(arc, 6371.0 * std::numbers::pi / 18.0, 1e-9);
  const double without = geo_length_km({0, 0}, {0, 10}, {0, 20}, {0, 30}, std::nullopt);
  EXPECT_NEAR(without, 3 * arc, 1e-9);
  const double with = geo_length_km({0, 0}, {0, 10}, {0, 20}, {0, 30}, Position{0, 40});
  EXPECT_NEAR(with - without, 6371.0 * std::numbers::pi / 18.0, 1e-9);
}

TEST(BuildTiming, TelescopingHandshakes) {
  const auto t = telescoping_build_time({10, 20, 30});
  EXPECT_DOUBLE_EQ(t.build_ms, 200.0);
  EXPECT_DOUBLE_EQ(t.final_handshake_rtt_ms, 120.0);
}

TEST(CircuitLog, CsvLayout) {
  CircuitLog log;
  auto c = open_circuit(9);
  log.add(millis(1500), c, "rtt", 123.4567, "idle-probe");
  log.add(seconds(2), c, "closed");
  std::ostringstream out;
  log.write_csv(out);
  EXPECT_EQ(out.str(),
            "time,circuit_id,client_id,event,guard,middle,exit,value_ms,source\n"
            "1.500000,9,0,rtt,0,1,2,123.457,idle-probe\n"
            "2.000000,9,0,closed,0,1,2,,\n");
}
