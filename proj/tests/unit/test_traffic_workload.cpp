#include <gtest/gtest.h>

#include <sstream>

#include "circsel/traffic_workload.hpp"

using namespace circsel;

namespace {

StreamRecord done(std::uint64_t id, ClientId client, ClientKind kind, double req, double fb, double lb) {
  StreamRecord r;
  r.stream_id = id;
  r.client_id = client;
  r.client_kind = kind;
  r.requested_at = seconds(req);
  r.circuit_attached_at = seconds(req);
  r.first_byte_at = seconds(fb);
  r.last_byte_at = seconds(lb);
  r.circuit_id = id;
  r.path = RelayPath{1, 2, 3};
  r.outcome = StreamOutcome::completed;
  return r;
}

}  // namespace

TEST(StreamTiming, TtfbAndTtlb) {
  const auto r = done(1, 0, ClientKind::web, 10.0, 12.5, 14.0);
  EXPECT_DOUBLE_EQ(*ttfb(r), 2.5);
  EXPECT_DOUBLE_EQ(*ttlb(r), 4.0);
  StreamRecord failed;
  failed.requested_at = seconds(3);
  EXPECT_FALSE(ttfb(failed));
  EXPECT_FALSE(ttlb(failed));
}

TEST(Profiles, Defaults) {
  const auto w = ClientProfile::web();
  EXPECT_EQ(w.download_kib, 320.0);
  EXPECT_EQ(w.think_min_s, 1.0);
  EXPECT_EQ(w.think_max_s, 20.0);
  const auto b = ClientProfile::bulk();
  EXPECT_EQ(b.download_kib, 5120.0);
  EXPECT_EQ(b.think_max_s, 0.0);
  ClientProfile bad = w;
  bad.think_min_s = 30.0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = w;
  bad.download_kib = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Aggregate, MedianAndWindow) {
  std::vector<StreamRecord> rs;
  for (int i = 1; i <= 5; ++i) rs.push_back(done(i, 0, ClientKind::web, 100.0, 100.0 + i, 100.0 + 2 * i));
  rs.push_back(done(6, 0, ClientKind::web, 10.0, 1000.0, 1000.0));   // before the window
  rs.push_back(done(7, 1, ClientKind::bulk, 100.0, 100.5, 130.0));
  StreamRecord f;
  f.stream_id = 8;
  f.requested_at = seconds(150);
  rs.push_back(f);
  const std::vector<ClientKind> kinds{ClientKind::web, ClientKind::bulk};
  const auto m = aggregate(rs, {}, kinds, seconds(50), seconds(200));
  EXPECT_EQ(m.web.completed, 5u);
  EXPECT_EQ(m.web.failed, 1u);
  EXPECT_DOUBLE_EQ(m.web.ttfb.median, 3.0);
  EXPECT_DOUBLE_EQ(m.web.ttlb.median, 6.0);
  EXPECT_DOUBLE_EQ(m.web.ttfb.min, 1.0);
  EXPECT_DOUBLE_EQ(m.web.ttfb.max, 5.0);
  EXPECT_EQ(m.bulk.completed, 1u);
  EXPECT_DOUBLE_EQ(m.bulk.ttlb.median, 30.0);
}

TEST(Aggregate, CreatedAndUsedCircuits) {
  const std::vector<ClientKind> kinds{ClientKind::web, ClientKind::web, ClientKind::web, ClientKind::bulk};
  std::vector<CircuitUsage> cs;
  CircuitId id = 1;
  auto add = [&](ClientId c, double t, std::uint32_t streams) {
    cs.push_back(CircuitUsage{id++, c, seconds(t), true, streams});
  };
  add(0, 100, 2);
  add(0, 110, 0);
  add(0, 10, 5);  // before the window
  add(1, 120, 1);
  add(1, 130, 1);
  add(1, 140, 0);
  add(1, 150, 0);
  add(3, 100, 9);
  const auto m = aggregate({}, cs, kinds, seconds(50), seconds(500));
  ASSERT_EQ(m.clients.size(), 4u);
  EXPECT_EQ(m.clients[0].created, 2);
  EXPECT_EQ(m.clients[0].used, 1);
  EXPECT_EQ(m.clients[1].created, 4);
  EXPECT_EQ(m.clients[1].used, 2);
  EXPECT_EQ(m.clients[2].created, 0);
  for (const auto& c : m.clients) EXPECT_LE(c.used, c.created);
  // Web clients only: created {2, 4, 0}, used {1, 2, 0}.
  EXPECT_DOUBLE_EQ(m.web_created_median, 2.0);
  EXPECT_DOUBLE_EQ(m.web_used_median, 1.0);
}

TEST(Aggregate, OwnerOutOfRangeThrows) {
  const std::vector<ClientKind> kinds{ClientKind::web};
  const std::vector<CircuitUsage> cs{CircuitUsage{1, 5, seconds(1), true, 0}};
  EXPECT_THROW(aggregate({}, cs, kinds, SimTime{}, seconds(10)), std::out_of_range);
}

TEST(StreamsCsv, RoundTrip) {
  std::vector<StreamRecord> rs{done(1, 0, ClientKind::web, 10.25, 12.5, 14.000001),
                               done(2, 3, ClientKind::bulk, 20.0, 20.5, 90.0)};
  StreamRecord f;
  f.stream_id = 3;
  f.client_id = 1;
  f.port = 443;
  f.requested_at = seconds(33);
  rs.push_back(f);
  std::stringstream a;
  write_streams_csv(a, rs);
  const auto back = read_streams_csv(csv::read_table(a));
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[0].first_byte_at, seconds(12.5));
  EXPECT_EQ(back[0].last_byte_at, SimTime::from_us(14'000'001));
  EXPECT_EQ(back[1].client_kind, ClientKind::bulk);
  EXPECT_EQ(back[1].path, (RelayPath{1, 2, 3}));
  EXPECT_FALSE(back[2].completed());
  EXPECT_FALSE(back[2].path);
  EXPECT_EQ(back[2].port, 443);
  std::stringstream b;
  write_streams_csv(b, back);
  std::stringstream a2;
  write_streams_csv(a2, rs);
  EXPECT_EQ(a2.str(), b.str());
}

TEST(StreamsCsv, RejectsBadOutcome) {
  std::stringstream in(
      "stream_id,client_id,client_kind,server_id,port,requested_at,circuit_attached_at,"
      "first_byte_at,last_byte_at,circuit_id,guard,middle,exit,outcome\n"
      "1,0,web,0,80,1.000000,,,,,,,,lost\n");
  EXPECT_THROW(read_streams_csv(csv::read_table(in)), std::runtime_error);
}
