#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "circsel/circuit_model.hpp"
#include "circsel/network_model.hpp"
#include "circsel/rng.hpp"
#include "circsel/sim_engine.hpp"

namespace circsel {

/// Pool size targets and timers. `target_n` unset means "unchanged": keep the
/// baseline two clean circuits, as an unmodified client does.
struct PoolConfig {
  std::optional<int> target_n;
  int baseline_target = 2;
  SimTime dirty_after = seconds(600);
  SimTime reap_unused_after = seconds(300);
  SimTime replenish_interval = seconds(1);
  SimTime port_memory = seconds(3600);
  bool reaping = false;

  int effective_target() const { return target_n ? *target_n : baseline_target; }

  void validate() const {
    if (target_n && *target_n < 1) throw std::invalid_argument("pool: N must be >= 1");
    if (baseline_target < 1) throw std::invalid_argument("pool: baseline target must be >= 1");
    const SimTime zero{};
    if (dirty_after <= zero || reap_unused_after <= zero || replenish_interval <= zero ||
        port_memory <= zero)
      throw std::invalid_argument("pool: durations must be > 0");
  }
};

struct PortClass {
  Port port = 0;
  SimTime last_used;
};

struct BuildRequest {
  RelayPath path;
  Port port = 0;
};

/// One client's circuits plus the ports it has recently needed.
///
/// Circuits are keyed by id, so iteration order is creation order. Closed
/// circuits stay in the map for accounting.
class CircuitPool {
 public:
  explicit CircuitPool(PoolConfig config) : config_(config) { config_.validate(); }

  const PoolConfig& config() const noexcept { return config_; }

  void note_port(Port port, SimTime now) {
    for (auto& pc : ports_) {
      if (pc.port == port) {
        pc.last_used = std::max(pc.last_used, now);
        return;
      }
    }
    ports_.push_back(PortClass{port, now});
    std::sort(ports_.begin(), ports_.end(),
              [](const PortClass& a, const PortClass& b) { return a.port < b.port; });
  }

  /// Ports used within the port-memory horizon, ascending.
  std::vector<Port> remembered_ports(SimTime now) const {
    std::vector<Port> out;
    for (const auto& pc : ports_)
      if (now - pc.last_used < config_.port_memory) out.push_back(pc.port);
    return out;
  }

  Circuit& add(Circuit c) {
    const CircuitId id = c.id();
    auto [it, inserted] = circuits_.emplace(id, std::move(c));
    if (!inserted) throw std::logic_error("duplicate circuit id");
    return it->second;
  }

  Circuit& at(CircuitId id) { return circuits_.at(id); }
  const Circuit& at(CircuitId id) const { return circuits_.at(id); }
  Circuit* find(CircuitId id) {
    auto it = circuits_.find(id);
    return it == circuits_.end() ? nullptr : &it->second;
  }
  const std::map<CircuitId, Circuit>& circuits() const noexcept { return circuits_; }

  /// Clean (open, non-dirty) or still-building circuits whose exit allows port.
  int clean_or_building(Port port) const {
    int n = 0;
    for (const auto& [id, c] : circuits_)
      if ((c.state() == CircuitState::open || c.state() == CircuitState::building) &&
          c.supports(port))
        ++n;
    return n;
  }

  /// Paths to build so every remembered port reaches the target. Requests
  /// issued for an earlier port count toward later ports their exit supports.
  /// Ports with no eligible exit are skipped and counted as path failures.
  std::vector<BuildRequest> replenish(std::span<const RelayDescriptor> consensus, SimTime now,
                                      RngStream& rng) {
    std::vector<BuildRequest> out;
    const int target = config_.effective_target();
    for (Port port : remembered_ports(now)) {
      int have = clean_or_building(port);
      for (const auto& req : out)
        if (consensus[req.path.exit].allows(port)) ++have;
      while (have < target) {
        auto path = select_path(consensus, port, rng);
        if (!path) {
          ++path_failures_;
          break;
        }
        out.push_back(BuildRequest{*path, port});
        ++have;
      }
    }
    return out;
  }

  /// Open circuits first used at least dirty_after ago become dirty.
  std::vector<CircuitId> mark_dirty(SimTime now) {
    std::vector<CircuitId> changed;
    for (auto& [id, c] : circuits_) {
      if (c.state() == CircuitState::open && c.first_used_at() &&
          now - *c.first_used_at() >= config_.dirty_after) {
        c.mark_dirty(now);
        changed.push_back(id);
      }
    }
    return changed;
  }

  /// Closes open circuits that never carried a stream and were built at least
  /// reap_unused_after ago. No-op when reaping is disabled.
  std::vector<CircuitId> reap_unused(SimTime now) {
    std::vector<CircuitId> closed;
    if (!config_.reaping) return closed;
    for (auto& [id, c] : circuits_) {
      if (c.state() == CircuitState::open && !c.first_used_at() && c.built_at() &&
          now - *c.built_at() >= config_.reap_unused_after) {
        c.close(now);
        closed.push_back(id);
      }
    }
    return closed;
  }

  /// Open, non-dirty circuits whose exit allows port, ascending id.
  std::vector<CircuitId> candidates(Port port) const {
    std::vector<CircuitId> out;
    for (const auto& [id, c] : circuits_)
      if (c.state() == CircuitState::open && c.supports(port)) out.push_back(id);
    return out;
  }

  struct Counts {
    int building = 0;
    int open = 0;
    int dirty = 0;
    int closed = 0;
  };

  Counts counts() const {
    Counts k;
    for (const auto& [id, c] : circuits_) {
      switch (c.state()) {
        case CircuitState::building: ++k.building; break;
        case CircuitState::open: ++k.open; break;
        case CircuitState::dirty: ++k.dirty; break;
        case CircuitState::closed: ++k.closed; break;
      }
    }
    return k;
  }

  std::uint64_t path_failures() const noexcept { return path_failures_; }

 private:
  PoolConfig config_;
  std::map<CircuitId, Circuit> circuits_;
  std::vector<PortClass> ports_;
  std::uint64_t path_failures_ = 0;
};

}  // namespace circsel
