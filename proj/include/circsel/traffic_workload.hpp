#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "circsel/circuit_model.hpp"
#include "circsel/csv.hpp"
#include "circsel/stats.hpp"

namespace circsel {

enum class ClientKind : std::uint8_t { web, bulk };

inline constexpr std::string_view to_string(ClientKind k) {
  return k == ClientKind::web ? "web" : "bulk";
}

inline ClientKind parse_client_kind(std::string_view s) {
  if (s == "web") return ClientKind::web;
  if (s == "bulk") return ClientKind::bulk;
  throw std::invalid_argument("unknown client kind: " + std::string(s));
}

struct ClientProfile {
  ClientKind kind = ClientKind::web;
  double download_kib = 320.0;
  double think_min_s = 1.0;
  double think_max_s = 20.0;

  static ClientProfile web() { return {ClientKind::web, 320.0, 1.0, 20.0}; }
  static ClientProfile bulk() { return {ClientKind::bulk, 5120.0, 0.0, 0.0}; }

  void validate() const {
    if (!(download_kib > 0.0)) throw std::invalid_argument("profile: download size must be > 0");
    if (think_min_s < 0.0 || think_min_s > think_max_s)
      throw std::invalid_argument("profile: think time range must satisfy 0 <= low <= high");
  }
};

enum class StreamOutcome : std::uint8_t { completed, failed };

struct StreamRecord {
  std::uint64_t stream_id = 0;
  ClientId client_id = 0;
  ClientKind client_kind = ClientKind::web;
  std::uint32_t server_id = 0;
  Port port = 80;
  SimTime requested_at;
  std::optional<SimTime> circuit_attached_at;
  std::optional<SimTime> first_byte_at;
  std::optional<SimTime> last_byte_at;
  std::optional<CircuitId> circuit_id;
  std::optional<RelayPath> path;
  StreamOutcome outcome = StreamOutcome::failed;

  bool completed() const noexcept { return outcome == StreamOutcome::completed; }
};

/// Seconds from request to first payload byte; nullopt for failed streams.
inline std::optional<double> ttfb(const StreamRecord& r) {
  if (!r.completed() || !r.first_byte_at) return std::nullopt;
  return (*r.first_byte_at - r.requested_at).seconds();
}

/// Seconds from request to last payload byte; nullopt for failed streams.
inline std::optional<double> ttlb(const StreamRecord& r) {
  if (!r.completed() || !r.last_byte_at) return std::nullopt;
  return (*r.last_byte_at - r.requested_at).seconds();
}

inline void write_streams_csv(std::ostream& out, std::span<const StreamRecord> records) {
  out << "stream_id,client_id,client_kind,server_id,port,requested_at,circuit_attached_at,"
         "first_byte_at,last_byte_at,circuit_id,guard,middle,exit,outcome\n";
  for (const auto& r : records) {
    out << r.stream_id << ',' << r.client_id << ',' << to_string(r.client_kind) << ','
        << r.server_id << ',' << r.port << ',' << csv::seconds(r.requested_at) << ','
        << csv::seconds(r.circuit_attached_at) << ',' << csv::seconds(r.first_byte_at) << ','
        << csv::seconds(r.last_byte_at) << ',';
    if (r.circuit_id) out << *r.circuit_id;
    out << ',';
    if (r.path) out << r.path->guard << ',' << r.path->middle << ',' << r.path->exit;
    else out << ",,";
    out << ',' << (r.completed() ? "completed" : "failed") << '\n';
  }
}

inline std::vector<StreamRecord> read_streams_csv(const csv::Table& t) {
  const std::size_t c_id = t.column("stream_id"), c_client = t.column("client_id"),
                    c_kind = t.column("client_kind"), c_server = t.column("server_id"),
                    c_port = t.column("port"), c_req = t.column("requested_at"),
                    c_att = t.column("circuit_attached_at"), c_fb = t.column("first_byte_at"),
                    c_lb = t.column("last_byte_at"), c_circ = t.column("circuit_id"),
                    c_g = t.column("guard"), c_m = t.column("middle"), c_e = t.column("exit"),
                    c_out = t.column("outcome");
  std::vector<StreamRecord> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    StreamRecord r;
    r.stream_id = csv::parse_number<std::uint64_t>(row[c_id]);
    r.client_id = csv::parse_number<ClientId>(row[c_client]);
    r.client_kind = parse_client_kind(row[c_kind]);
    r.server_id = csv::parse_number<std::uint32_t>(row[c_server]);
    r.port = csv::parse_number<Port>(row[c_port]);
    r.requested_at = csv::parse_seconds(row[c_req]);
    r.circuit_attached_at = csv::parse_optional_seconds(row[c_att]);
    r.first_byte_at = csv::parse_optional_seconds(row[c_fb]);
    r.last_byte_at = csv::parse_optional_seconds(row[c_lb]);
    if (!row[c_circ].empty()) r.circuit_id = csv::parse_number<CircuitId>(row[c_circ]);
    if (!row[c_g].empty())
      r.path = RelayPath{csv::parse_number<RelayId>(row[c_g]), csv::parse_number<RelayId>(row[c_m]),
                         csv::parse_number<RelayId>(row[c_e])};
    if (row[c_out] == "completed") r.outcome = StreamOutcome::completed;
    else if (row[c_out] == "failed") r.outcome = StreamOutcome::failed;
    else throw std::runtime_error("bad outcome: " + row[c_out]);
    out.push_back(std::move(r));
  }
  return out;
}

// --- aggregation

struct Distribution {
  std::size_t count = 0;
  double mean = 0, min = 0, p10 = 0, p25 = 0, median = 0, p75 = 0, p90 = 0, max = 0;

  static Distribution of(std::span<const double> v) {
    Distribution d;
    d.count = v.size();
    if (v.empty()) return d;
    const auto s = stats::sorted_copy(v);
    d.mean = stats::mean(s);
    d.min = s.front();
    d.max = s.back();
    d.p10 = stats::quantile_sorted(s, 0.10);
    d.p25 = stats::quantile_sorted(s, 0.25);
    d.median = stats::quantile_sorted(s, 0.50);
    d.p75 = stats::quantile_sorted(s, 0.75);
    d.p90 = stats::quantile_sorted(s, 0.90);
    return d;
  }
};

struct KindMetrics {
  std::size_t completed = 0;
  std::size_t failed = 0;
  Distribution ttfb;
  Distribution ttlb;
};

/// Per-circuit facts aggregation needs.
struct CircuitUsage {
  CircuitId circuit_id = 0;
  ClientId client_id = 0;
  SimTime build_started;
  bool opened = false;
  std::uint32_t streams = 0;
};

struct ClientCircuitCounts {
  ClientId client_id = 0;
  ClientKind kind = ClientKind::web;
  int created = 0;
  int used = 0;
};

struct MetricsSummary {
  SimTime window_start;
  SimTime window_end;
  KindMetrics web;
  KindMetrics bulk;
  std::vector<ClientCircuitCounts> clients;
  double web_created_median = 0.0;
  double web_used_median = 0.0;
};

/// Summarises one run over [window_start, window_end]: streams requested in
/// the window feed the TTFB/TTLB distributions; circuits whose build began in
/// the window are "created", and those among them that carried a stream are
/// "used" (so used <= created per client).
inline MetricsSummary aggregate(std::span<const StreamRecord> records,
                                std::span<const CircuitUsage> circuits,
                                std::span<const ClientKind> client_kinds, SimTime window_start,
                                SimTime window_end) {
  MetricsSummary m;
  m.window_start = window_start;
  m.window_end = window_end;

  std::vector<double> ttfb_web, ttlb_web, ttfb_bulk, ttlb_bulk;
  for (const auto& r : records) {
    if (r.requested_at < window_start || r.requested_at > window_end) continue;
    KindMetrics& km = r.client_kind == ClientKind::web ? m.web : m.bulk;
    if (!r.completed()) {
      ++km.failed;
      continue;
    }
    ++km.completed;
    auto& fb = r.client_kind == ClientKind::web ? ttfb_web : ttfb_bulk;
    auto& lb = r.client_kind == ClientKind::web ? ttlb_web : ttlb_bulk;
    fb.push_back(*ttfb(r));
    lb.push_back(*ttlb(r));
  }
  m.web.ttfb = Distribution::of(ttfb_web);
  m.web.ttlb = Distribution::of(ttlb_web);
  m.bulk.ttfb = Distribution::of(ttfb_bulk);
  m.bulk.ttlb = Distribution::of(ttlb_bulk);

  m.clients.resize(client_kinds.size());
  for (std::size_t i = 0; i < client_kinds.size(); ++i) {
    m.clients[i].client_id = static_cast<ClientId>(i);
    m.clients[i].kind = client_kinds[i];
  }
  for (const auto& c : circuits) {
    if (c.build_started < window_start || c.build_started > window_end) continue;
    if (c.client_id >= m.clients.size()) throw std::out_of_range("circuit owner out of range");
    auto& cc = m.clients[c.client_id];
    ++cc.created;
    if (c.streams > 0) ++cc.used;
  }
  std::vector<double> created, used;
  for (const auto& cc : m.clients) {
    if (cc.kind != ClientKind::web) continue;
    created.push_back(cc.created);
    used.push_back(cc.used);
  }
  if (!created.empty()) {
    m.web_created_median = stats::median(created);
    m.web_used_median = stats::median(used);
  }
  return m;
}

}  // namespace circsel
