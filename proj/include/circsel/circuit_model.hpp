#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "circsel/csv.hpp"
#include "circsel/network_model.hpp"
#include "circsel/sim_engine.hpp"

namespace circsel {

using CircuitId = std::uint64_t;
using ClientId = std::uint32_t;

enum class CircuitState : std::uint8_t { building, open, dirty, closed };
enum class RttSource : std::uint8_t { build_handshake, stream_attach, idle_probe };

inline const char* to_string(CircuitState s) {
  switch (s) {
    case CircuitState::building: return "building";
    case CircuitState::open: return "open";
    case CircuitState::dirty: return "dirty";
    case CircuitState::closed: return "closed";
  }
  return "?";
}

inline const char* to_string(RttSource s) {
  switch (s) {
    case RttSource::build_handshake: return "build-handshake";
    case RttSource::stream_attach: return "stream-attach";
    case RttSource::idle_probe: return "idle-probe";
  }
  return "?";
}

struct RttSample {
  double value_ms = 0.0;
  SimTime measured_at;
  RttSource source = RttSource::idle_probe;
};

inline constexpr std::size_t kRttWindow = 5;

/// A three-hop circuit owned by one client.
///
/// The window keeps the last five samples together with the congestion time
/// each one had when it was taken (sample minus the running minimum at that
/// moment), so a later, lower minimum does not rewrite history.
class Circuit {
 public:
  struct WindowEntry {
    RttSample sample;
    double congestion_ms = 0.0;
  };

  Circuit(CircuitId id, ClientId owner, RelayPath path, std::set<Port> supported_ports,
          SimTime build_started)
      : id_(id),
        owner_(owner),
        path_(path),
        supported_ports_(std::move(supported_ports)),
        build_started_(build_started) {}

  CircuitId id() const noexcept { return id_; }
  ClientId owner() const noexcept { return owner_; }
  const RelayPath& path() const noexcept { return path_; }
  CircuitState state() const noexcept { return state_; }
  SimTime build_started_at() const noexcept { return build_started_; }
  std::optional<SimTime> built_at() const noexcept { return built_at_; }
  std::optional<SimTime> first_used_at() const noexcept { return first_used_at_; }
  std::optional<SimTime> last_used_at() const noexcept { return last_used_at_; }
  std::optional<SimTime> closed_at() const noexcept { return closed_at_; }
  const std::set<Port>& supported_ports() const noexcept { return supported_ports_; }
  bool supports(Port p) const { return supported_ports_.contains(p); }

  bool is_clean() const noexcept { return state_ == CircuitState::open; }
  bool is_live() const noexcept { return state_ != CircuitState::closed; }

  std::uint32_t active_streams() const noexcept { return active_streams_; }
  std::uint32_t total_streams() const noexcept { return total_streams_; }

  const std::deque<WindowEntry>& rtt_window() const noexcept { return window_; }
  std::optional<double> rtt_min() const noexcept { return rtt_min_; }

  // --- lifecycle: building -> open -> dirty -> closed, or building/open -> closed

  void open(SimTime now) {
    require(state_ == CircuitState::building, "open");
    state_ = CircuitState::open;
    built_at_ = now;
  }

  void mark_dirty(SimTime) {
    require(state_ == CircuitState::open, "mark_dirty");
    state_ = CircuitState::dirty;
  }

  void close(SimTime now) {
    require(state_ != CircuitState::closed, "close");
    state_ = CircuitState::closed;
    closed_at_ = now;
  }

  void attach_stream(SimTime now) {
    require(state_ == CircuitState::open, "attach_stream");
    if (!first_used_at_) first_used_at_ = now;
    last_used_at_ = now;
    ++active_streams_;
    ++total_streams_;
  }

  void detach_stream() {
    if (active_streams_ == 0) throw std::logic_error("detach_stream without attached stream");
    --active_streams_;
  }

  // --- measurements

  void record_rtt(const RttSample& s) {
    require(state_ == CircuitState::open || state_ == CircuitState::dirty, "record_rtt");
    if (!(s.value_ms > 0.0)) throw std::invalid_argument("RTT sample must be > 0");
    rtt_min_ = rtt_min_ ? std::min(*rtt_min_, s.value_ms) : s.value_ms;
    window_.push_back(WindowEntry{s, s.value_ms - *rtt_min_});
    while (window_.size() > kRttWindow) window_.pop_front();
  }

  /// Mean of the window; nullopt while unmeasured.
  std::optional<double> mean_rtt() const {
    if (window_.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& e : window_) sum += e.sample.value_ms;
    return sum / static_cast<double>(window_.size());
  }

  /// Mean congestion time over the window; nullopt while unmeasured.
  std::optional<double> congestion_time() const {
    if (window_.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& e : window_) sum += e.congestion_ms;
    return sum / static_cast<double>(window_.size());
  }

 private:
  void require(bool ok, const char* what) const {
    if (!ok)
      throw std::logic_error(std::string("circuit ") + std::to_string(id_) + ": illegal " + what +
                             " in state " + to_string(state_));
  }

  CircuitId id_;
  ClientId owner_;
  RelayPath path_;
  std::set<Port> supported_ports_;
  CircuitState state_ = CircuitState::building;
  SimTime build_started_;
  std::optional<SimTime> built_at_;
  std::optional<SimTime> first_used_at_;
  std::optional<SimTime> last_used_at_;
  std::optional<SimTime> closed_at_;
  std::uint32_t active_streams_ = 0;
  std::uint32_t total_streams_ = 0;
  std::deque<WindowEntry> window_;
  std::optional<double> rtt_min_;
};

/// Geographic circuit length: client-guard + guard-middle + middle-exit, plus
/// exit-destination when the destination is known (zero otherwise).
inline double geo_length_km(Position client, Position guard, Position middle, Position exit,
                            std::optional<Position> destination) {
  double km = great_circle_km(client, guard) + great_circle_km(guard, middle) +
              great_circle_km(middle, exit);
  if (destination) km += great_circle_km(exit, *destination);
  return km;
}

inline double geo_length_km(const Circuit& c, Position client,
                            std::span<const RelayDescriptor> relays,
                            std::optional<Position> destination) {
  const auto& p = c.path();
  return geo_length_km(client, relays[p.guard].position, relays[p.middle].position,
                       relays[p.exit].position, destination);
}

struct BuildTiming {
  double build_ms = 0.0;
  double final_handshake_rtt_ms = 0.0;
};

/// Telescoping build cost for fixed per-hop one-way latencies: handshake i is
/// one round trip through hops 1..i.
inline BuildTiming telescoping_build_time(const std::array<double, 3>& hop_one_way_ms) {
  BuildTiming t;
  double reach = 0.0;
  for (double hop : hop_one_way_ms) {
    reach += hop;
    t.build_ms += 2.0 * reach;
    t.final_handshake_rtt_ms = 2.0 * reach;
  }
  return t;
}

/// Append-only circuit event log, written as CSV.
class CircuitLog {
 public:
  struct Row {
    SimTime time;
    CircuitId circuit_id = 0;
    ClientId client_id = 0;
    std::string event;
    RelayPath path;
    std::optional<double> value_ms;
    std::string source;
  };

  void add(SimTime t, const Circuit& c, std::string event, std::optional<double> value = {},
           std::string source = {}) {
    rows_.push_back(Row{t, c.id(), c.owner(), std::move(event), c.path(), value, std::move(source)});
  }

  const std::vector<Row>& rows() const noexcept { return rows_; }

  void write_csv(std::ostream& out) const {
    out << "time,circuit_id,client_id,event,guard,middle,exit,value_ms,source\n";
    for (const auto& r : rows_) {
      out << csv::seconds(r.time) << ',' << r.circuit_id << ',' << r.client_id << ',' << r.event
          << ',' << r.path.guard << ',' << r.path.middle << ',' << r.path.exit << ','
          << (r.value_ms ? csv::fixed(*r.value_ms, 3) : std::string()) << ',' << r.source << '\n';
    }
  }

 private:
  std::vector<Row> rows_;
};

}  // namespace circsel
