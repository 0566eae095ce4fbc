#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "circsel/rng.hpp"
#include "circsel/sim_engine.hpp"

namespace circsel {

inline constexpr double kEarthRadiusKm = 6371.0;

struct Position {
  double lat_deg = 0.0;
  double lon_deg = 0.0;

  bool valid() const noexcept {
    return std::isfinite(lat_deg) && std::isfinite(lon_deg) && lat_deg >= -90.0 &&
           lat_deg <= 90.0 && lon_deg >= -180.0 && lon_deg <= 180.0;
  }
  bool operator==(const Position&) const = default;
};

/// Haversine distance on a sphere of radius kEarthRadiusKm.
inline double great_circle_km(Position a, Position b) {
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  const double dlat = (b.lat_deg - a.lat_deg) * kDeg;
  const double dlon = (b.lon_deg - a.lon_deg) * kDeg;
  const double s1 = std::sin(dlat / 2.0);
  const double s2 = std::sin(dlon / 2.0);
  double h = s1 * s1 + std::cos(a.lat_deg * kDeg) * std::cos(b.lat_deg * kDeg) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

using RelayId = std::uint32_t;
using Port = std::uint16_t;

struct RelayDescriptor {
  RelayId relay_id = 0;
  double bandwidth_kibps = 0.0;  // advertised; drives path selection
  double capacity_kibps = 0.0;   // actual forwarding rate; 0 means "as advertised"
  bool is_guard = false;
  bool is_exit = false;
  Position position;
  std::set<Port> exit_policy;
  bool is_malicious = false;

  bool allows(Port port) const { return is_exit && exit_policy.contains(port); }
  double effective_capacity_kibps() const {
    return capacity_kibps > 0.0 ? capacity_kibps : bandwidth_kibps;
  }

  void validate() const {
    if (!(bandwidth_kibps > 0.0))
      throw std::invalid_argument("relay " + std::to_string(relay_id) + ": bandwidth must be > 0");
    if (capacity_kibps < 0.0)
      throw std::invalid_argument("relay " + std::to_string(relay_id) + ": capacity must be >= 0");
    if (is_exit && exit_policy.empty())
      throw std::invalid_argument("relay " + std::to_string(relay_id) +
                                  ": exit relay needs a non-empty exit policy");
    if (!position.valid())
      throw std::invalid_argument("relay " + std::to_string(relay_id) + ": invalid position");
  }
};

enum class EndpointKind : std::uint8_t { client, server, directory };

struct EndpointDescriptor {
  std::uint32_t endpoint_id = 0;
  EndpointKind kind = EndpointKind::client;
  Position position;
  double bandwidth_kibps = 0.0;
  Port port = 80;  // listening port, servers only

  void validate() const {
    if (!position.valid())
      throw std::invalid_argument("endpoint " + std::to_string(endpoint_id) + ": invalid position");
    if (!(bandwidth_kibps > 0.0))
      throw std::invalid_argument("endpoint " + std::to_string(endpoint_id) +
                                  ": bandwidth must be > 0");
  }
};

/// Per-hop latency parameters shared by every link.
struct LinkModel {
  double floor_ms = 2.0;            // fixed processing floor per hop
  double km_per_ms = 200.0;         // ~2/3 c in fiber
  double jitter_mean_ms = 1.0;      // exponential jitter
  double packet_loss = 0.000025;    // per cell
  double rto_factor = 1.5;          // retransmission delay, in link RTTs

  double base_propagation_ms(double km) const { return floor_ms + km / km_per_ms; }

  void validate() const {
    if (floor_ms < 0.0 || !(km_per_ms > 0.0) || jitter_mean_ms < 0.0)
      throw std::invalid_argument("link model: negative latency parameter");
    if (packet_loss < 0.0 || packet_loss >= 1.0)
      throw std::invalid_argument("link model: packet_loss must be in [0, 1)");
    if (rto_factor < 0.0) throw std::invalid_argument("link model: rto_factor must be >= 0");
  }
};

struct Topology {
  std::vector<RelayDescriptor> relays;
  std::vector<EndpointDescriptor> clients;
  std::vector<EndpointDescriptor> servers;

  /// Ids are dense indices into their vectors.
  void validate() const {
    for (std::size_t i = 0; i < relays.size(); ++i) {
      if (relays[i].relay_id != i) throw std::invalid_argument("relay ids must be dense 0..n-1");
      relays[i].validate();
    }
    for (std::size_t i = 0; i < clients.size(); ++i) {
      if (clients[i].endpoint_id != i) throw std::invalid_argument("client ids must be dense 0..n-1");
      clients[i].validate();
    }
    for (std::size_t i = 0; i < servers.size(); ++i) {
      if (servers[i].endpoint_id != i) throw std::invalid_argument("server ids must be dense 0..n-1");
      servers[i].validate();
    }
  }
};

struct RelayPath {
  RelayId guard = 0;
  RelayId middle = 0;
  RelayId exit = 0;
  bool operator==(const RelayPath&) const = default;
};

namespace detail {

inline std::optional<std::size_t> weighted_pick(std::span<const RelayDescriptor> relays,
                                                const std::vector<std::size_t>& eligible,
                                                RngStream& rng) {
  double total = 0.0;
  for (std::size_t i : eligible) total += relays[i].bandwidth_kibps;
  if (eligible.empty() || !(total > 0.0)) return std::nullopt;
  const double target = rng.uniform01() * total;
  double acc = 0.0;
  for (std::size_t i : eligible) {
    acc += relays[i].bandwidth_kibps;
    if (target < acc) return i;
  }
  return eligible.back();
}

}  // namespace detail

/// Bandwidth-weighted three-hop path: exit first (policy must allow `port`),
/// then guard, then middle, all distinct. Returns nullopt when any position has
/// no eligible relay.
inline std::optional<RelayPath> select_path(std::span<const RelayDescriptor> consensus, Port port,
                                            RngStream& rng) {
  std::vector<std::size_t> eligible;
  eligible.reserve(consensus.size());

  for (std::size_t i = 0; i < consensus.size(); ++i)
    if (consensus[i].allows(port)) eligible.push_back(i);
  const auto exit = detail::weighted_pick(consensus, eligible, rng);
  if (!exit) return std::nullopt;

  eligible.clear();
  for (std::size_t i = 0; i < consensus.size(); ++i)
    if (consensus[i].is_guard && i != *exit) eligible.push_back(i);
  const auto guard = detail::weighted_pick(consensus, eligible, rng);
  if (!guard) return std::nullopt;

  eligible.clear();
  for (std::size_t i = 0; i < consensus.size(); ++i)
    if (i != *exit && i != *guard) eligible.push_back(i);
  const auto middle = detail::weighted_pick(consensus, eligible, rng);
  if (!middle) return std::nullopt;

  return RelayPath{consensus[*guard].relay_id, consensus[*middle].relay_id,
                   consensus[*exit].relay_id};
}

using NodeId = std::uint32_t;

/// A burst of cells moving hop by hop. `head` is when the first cell is
/// available at the current node, `tail` when the last one is.
struct CellTrain {
  SimTime head;
  SimTime tail;
  std::uint32_t cells = 1;
};

/// Latency/queuing model over all relays, clients and servers.
///
/// Every node owns one FIFO transmit queue served at its bandwidth. A train
/// starts transmitting when both the queue is free and its head has arrived;
/// its last cell leaves no earlier than its own tail arrival. The sending
/// cell's serialization is folded into the per-hop floor, so an idle queue
/// adds zero wait.
class NetworkModel {
 public:
  NetworkModel(Topology topology, LinkModel link, double cell_bytes = 512.0)
      : topo_(std::move(topology)), link_(link), cell_bytes_(cell_bytes) {
    topo_.validate();
    link_.validate();
    if (!(cell_bytes_ > 0.0)) throw std::invalid_argument("cell size must be > 0");
    const std::size_t n = topo_.relays.size() + topo_.clients.size() + topo_.servers.size();
    positions_.reserve(n);
    service_us_.reserve(n);
    auto add = [&](Position p, double bw_kibps) {
      positions_.push_back(p);
      service_us_.push_back(cell_bytes_ / (bw_kibps * 1024.0) * 1e6);
    };
    for (const auto& r : topo_.relays) add(r.position, r.effective_capacity_kibps());
    for (const auto& c : topo_.clients) add(c.position, c.bandwidth_kibps);
    for (const auto& s : topo_.servers) add(s.position, s.bandwidth_kibps);
    busy_until_.assign(n, SimTime{});
    reachable_.assign(n, true);
  }

  const Topology& topology() const noexcept { return topo_; }
  const LinkModel& link() const noexcept { return link_; }
  std::size_t node_count() const noexcept { return positions_.size(); }

  NodeId relay_node(RelayId r) const { return static_cast<NodeId>(r); }
  NodeId client_node(std::uint32_t c) const {
    return static_cast<NodeId>(topo_.relays.size() + c);
  }
  NodeId server_node(std::uint32_t s) const {
    return static_cast<NodeId>(topo_.relays.size() + topo_.clients.size() + s);
  }

  Position position(NodeId n) const { return positions_.at(n); }

  /// Floor plus great-circle propagation; the lower bound of any one-way hop.
  double base_latency_ms(NodeId a, NodeId b) const {
    return link_.base_propagation_ms(great_circle_km(positions_.at(a), positions_.at(b)));
  }

  double service_time_us(NodeId n) const { return service_us_.at(n); }

  SimTime queue_wait(NodeId from, SimTime now) const {
    const SimTime busy = busy_until_.at(from);
    return busy > now ? busy - now : SimTime{};
  }

  /// One-way latency a single cell sent now would see, without occupying the
  /// queue. Draws one jitter sample from `rng`.
  double one_way_latency_ms(NodeId a, NodeId b, SimTime now, RngStream& rng) const {
    return base_latency_ms(a, b) + sample_jitter(rng) + queue_wait(a, now).ms();
  }

  void set_reachable(NodeId n, bool up) { reachable_.at(n) = up; }
  bool reachable(NodeId n) const { return reachable_.at(n); }

  /// Sends a train from `from` to `to`, occupying the sender's queue.
  /// Returns the train as it will arrive at `to`, or nullopt if `to` is down.
  std::optional<CellTrain> transmit(NodeId from, NodeId to, const CellTrain& train,
                                    RngStream& rng) {
    const double service = service_us_.at(from);
    const SimTime start = std::max(train.head, busy_until_.at(from));
    const std::uint32_t k = std::max<std::uint32_t>(train.cells, 1);
    const SimTime span = SimTime::from_us(std::llround(service * (k - 1)));
    const SimTime tail_depart = std::max(start + span, train.tail);
    busy_until_[from] = tail_depart + SimTime::from_us(std::llround(service));
    cells_sent_ += k;

    if (!reachable_.at(to) || !reachable_.at(from)) return std::nullopt;

    const double base = base_latency_ms(from, to);
    const SimTime latency = SimTime::from_ms(base + sample_jitter(rng));
    CellTrain out{start + latency, tail_depart + latency, k};
    if (link_.packet_loss > 0.0) {
      const double p_any = 1.0 - std::pow(1.0 - link_.packet_loss, static_cast<double>(k));
      if (rng.bernoulli(p_any)) {
        const SimTime rto = SimTime::from_ms(link_.rto_factor * 2.0 * base);
        out.tail += rto;
        if (k == 1) out.head += rto;
        ++losses_;
      }
    }
    return out;
  }

  std::uint64_t cells_sent() const noexcept { return cells_sent_; }
  std::uint64_t losses() const noexcept { return losses_; }

 private:
  double sample_jitter(RngStream& rng) const {
    return link_.jitter_mean_ms > 0.0 ? rng.exponential(link_.jitter_mean_ms) : 0.0;
  }

  Topology topo_;
  LinkModel link_;
  double cell_bytes_;
  std::vector<Position> positions_;
  std::vector<double> service_us_;
  std::vector<SimTime> busy_until_;
  std::vector<bool> reachable_;
  std::uint64_t cells_sent_ = 0;
  std::uint64_t losses_ = 0;
};

}  // namespace circsel
