#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "circsel/network_model.hpp"
#include "circsel/rng.hpp"
#include "circsel/stats.hpp"
#include "circsel/traffic_workload.hpp"

namespace circsel {

// --- relay-level adversary

struct AdversaryConfig {
  double guard_bandwidth_fraction = 0.10;
  double exit_bandwidth_fraction = 0.10;
  int runs = 10;
  std::uint64_t marking_seed = 1;

  void validate() const {
    auto in_unit = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (!in_unit(guard_bandwidth_fraction) || !in_unit(exit_bandwidth_fraction))
      throw std::invalid_argument("adversary: bandwidth fractions must be in [0, 1]");
    if (runs < 1) throw std::invalid_argument("adversary: runs must be >= 1");
  }
};

struct Marking {
  std::set<RelayId> relays;  // every marked relay, whichever pool it came from
  std::vector<RelayId> guards;
  std::vector<RelayId> exits;
  double guard_bw_marked = 0.0, guard_bw_total = 0.0;
  double exit_bw_marked = 0.0, exit_bw_total = 0.0;

  bool contains(RelayId r) const { return relays.contains(r); }
  double guard_share() const { return guard_bw_total > 0 ? guard_bw_marked / guard_bw_total : 0; }
  double exit_share() const { return exit_bw_total > 0 ? exit_bw_marked / exit_bw_total : 0; }
};

namespace detail {

inline void mark_pool(std::span<const RelayDescriptor> relays, bool guards, double fraction,
                      RngStream& rng, Marking& m) {
  std::vector<std::size_t> pool;
  double total = 0.0;
  double& marked = guards ? m.guard_bw_marked : m.exit_bw_marked;
  for (std::size_t i = 0; i < relays.size(); ++i) {
    const bool in = guards ? relays[i].is_guard : relays[i].is_exit;
    if (!in) continue;
    total += relays[i].bandwidth_kibps;
    // An exit-guard already drawn as a guard is malicious in both positions.
    if (m.contains(relays[i].relay_id)) marked += relays[i].bandwidth_kibps;
    else pool.push_back(i);
  }
  (guards ? m.guard_bw_total : m.exit_bw_total) = total;
  const double target = fraction * total;
  const double eps = 1e-9 * total;
  // Uniform draws without replacement, stopping at the first crossing.
  for (std::size_t k = 0; k < pool.size() && marked < target - eps; ++k) {
    const std::size_t j = k + rng.uniform_index(pool.size() - k);
    std::swap(pool[k], pool[j]);
    const auto& r = relays[pool[k]];
    marked += r.bandwidth_kibps;
    m.relays.insert(r.relay_id);
    (guards ? m.guards : m.exits).push_back(r.relay_id);
  }
}

}  // namespace detail

/// Marks uniformly drawn guards until their bandwidth first reaches the guard
/// fraction of total guard bandwidth, then exits likewise. The result may
/// overshoot; guard_share()/exit_share() report what was actually marked.
inline Marking mark_malicious(std::span<const RelayDescriptor> relays, const AdversaryConfig& cfg,
                              RngStream& rng) {
  cfg.validate();
  double guard_bw = 0.0, exit_bw = 0.0;
  for (const auto& r : relays) {
    if (r.is_guard) guard_bw += r.bandwidth_kibps;
    if (r.is_exit) exit_bw += r.bandwidth_kibps;
  }
  if (!(guard_bw > 0.0) || !(exit_bw > 0.0))
    throw std::invalid_argument("adversary: total guard and exit bandwidth must be > 0");
  Marking m;
  detail::mark_pool(relays, true, cfg.guard_bandwidth_fraction, rng, m);
  detail::mark_pool(relays, false, cfg.exit_bandwidth_fraction, rng, m);
  return m;
}

/// Marking for run `run` of a series; each run draws from its own stream.
inline Marking mark_malicious_run(std::span<const RelayDescriptor> relays,
                                  const AdversaryConfig& cfg, int run) {
  RngStream rng(cfg.marking_seed, "marking/" + std::to_string(run));
  return mark_malicious(relays, cfg, rng);
}

inline bool relay_compromised(const RelayPath& p, const Marking& m) {
  return m.contains(p.guard) && m.contains(p.exit);
}

struct ClientRate {
  ClientId client_id = 0;
  std::size_t streams = 0;
  std::size_t compromised = 0;
  double rate() const { return streams ? static_cast<double>(compromised) / streams : 0.0; }
};

struct CompromiseResult {
  std::vector<ClientRate> clients;  // clients with at least one routed stream, by id
  std::size_t streams = 0;
  std::size_t compromised = 0;

  double rate() const { return streams ? static_cast<double>(compromised) / streams : 0.0; }
  std::vector<double> client_rates() const {
    std::vector<double> v;
    v.reserve(clients.size());
    for (const auto& c : clients) v.push_back(c.rate());
    return v;
  }
};

namespace detail {

template <class Pred>
CompromiseResult count_compromise(std::span<const StreamRecord> streams, Pred compromised) {
  std::map<ClientId, ClientRate> per;
  CompromiseResult out;
  for (const auto& s : streams) {
    if (!s.path) continue;  // never attached: no relay saw it
    auto& c = per[s.client_id];
    c.client_id = s.client_id;
    ++c.streams;
    ++out.streams;
    if (compromised(s)) {
      ++c.compromised;
      ++out.compromised;
    }
  }
  for (auto& [id, c] : per) out.clients.push_back(c);
  return out;
}

}  // namespace detail

/// A stream is compromised when both its guard and its exit are marked.
inline CompromiseResult relay_compromise_rate(std::span<const StreamRecord> streams,
                                              const Marking& marked) {
  return detail::count_compromise(
      streams, [&](const StreamRecord& s) { return relay_compromised(*s.path, marked); });
}

/// Box-plot statistics of per-client rates pooled over several runs.
inline stats::FiveNumber pooled_client_summary(std::span<const CompromiseResult> runs) {
  std::vector<double> all;
  for (const auto& r : runs)
    for (const auto& c : r.clients) all.push_back(c.rate());
  if (all.empty()) throw std::invalid_argument("no routed streams to summarise");
  return stats::five_number(all);
}

// --- AS-level adversary

using AsId = std::uint32_t;

enum class AsRelation : std::uint8_t {
  none,              // plain weighted link
  peer,              // settlement-free peering
  customer_provider  // `a` buys transit from `b`
};

inline std::string_view to_string(AsRelation r) {
  switch (r) {
    case AsRelation::none: return "none";
    case AsRelation::peer: return "peer";
    case AsRelation::customer_provider: return "customer-provider";
  }
  return "none";
}

inline AsRelation parse_as_relation(std::string_view s) {
  if (s == "none") return AsRelation::none;
  if (s == "peer") return AsRelation::peer;
  if (s == "customer-provider") return AsRelation::customer_provider;
  throw std::invalid_argument("unknown AS relation: " + std::string(s));
}

struct AsEdge {
  AsId a = 0;
  AsId b = 0;
  std::uint32_t weight_ab = 1;  // cost of forwarding a -> b
  std::uint32_t weight_ba = 1;
  AsRelation relation = AsRelation::none;
};

enum class AsRouting : std::uint8_t { shortest_path, valley_free };

inline std::string_view to_string(AsRouting r) {
  return r == AsRouting::shortest_path ? "shortest-path" : "valley-free";
}

inline AsRouting parse_as_routing(std::string_view s) {
  if (s == "shortest-path") return AsRouting::shortest_path;
  if (s == "valley-free") return AsRouting::valley_free;
  throw std::invalid_argument("unknown AS routing mode: " + std::string(s));
}

enum class HostKind : std::uint8_t { relay, client, server };

struct HostRef {
  HostKind kind = HostKind::client;
  std::uint32_t id = 0;
};

enum class PathDirection : std::uint8_t { forward, reverse };

/// AS graph, host placement and routing oracle.
///
/// Routes minimise total directed weight; among equal-cost routes the one
/// whose AS id sequence is lexicographically smallest wins, so a route and
/// its opposite direction can differ. With `symmetric` set, the route between
/// two ASes is computed once from the smaller id and reversed for the other
/// direction. Valley-free mode only admits routes that climb customer to
/// provider links, cross at most one peer link, then descend; unlabelled
/// links may appear anywhere.
class AsTopology {
 public:
  AsTopology() = default;

  AsTopology(std::vector<AsId> ases, std::vector<AsEdge> edges, AsRouting routing = AsRouting::shortest_path,
             bool symmetric = false)
      : ids_(std::move(ases)), edges_(std::move(edges)), routing_(routing), symmetric_(symmetric) {
    std::sort(ids_.begin(), ids_.end());
    if (std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end())
      throw std::invalid_argument("AS topology: duplicate AS id");
    for (std::size_t i = 0; i < ids_.size(); ++i) index_[ids_[i]] = i;
    adj_.assign(ids_.size(), {});
    for (const auto& e : edges_) {
      if (e.a == e.b) throw std::invalid_argument("AS topology: self-loop");
      const std::size_t a = index_of(e.a), b = index_of(e.b);
      if (e.weight_ab == 0 || e.weight_ba == 0)
        throw std::invalid_argument("AS topology: link weights must be > 0");
      // Step classes seen from the sender: up, peer, down, or free.
      Step ab = Step::free_step, ba = Step::free_step;
      if (e.relation == AsRelation::peer) ab = ba = Step::peer;
      else if (e.relation == AsRelation::customer_provider) ab = Step::up, ba = Step::down;
      adj_[a].push_back({b, e.weight_ab, ab});
      adj_[b].push_back({a, e.weight_ba, ba});
    }
    for (auto& nbrs : adj_)
      std::sort(nbrs.begin(), nbrs.end(), [](const Arc& x, const Arc& y) { return x.to < y.to; });
    radj_.assign(ids_.size(), {});
    for (std::size_t u = 0; u < adj_.size(); ++u)
      for (const auto& a : adj_[u]) radj_[a.to].push_back({u, a.w, a.step});
  }

  const std::vector<AsId>& ases() const { return ids_; }
  const std::vector<AsEdge>& edges() const { return edges_; }
  AsRouting routing() const { return routing_; }
  bool symmetric() const { return symmetric_; }

  // Host placement; every host the analysis touches must be mapped.
  std::vector<AsId> relay_as, client_as, server_as;

  AsId host_as(HostRef h) const {
    const auto& v = h.kind == HostKind::relay ? relay_as : h.kind == HostKind::client ? client_as : server_as;
    if (h.id >= v.size()) {
      static constexpr const char* kNames[] = {"relay", "client", "server"};
      throw std::out_of_range(std::string("AS topology: unmapped ") + kNames[static_cast<int>(h.kind)] +
                              " " + std::to_string(h.id));
    }
    return v[h.id];
  }

  /// AS-level route from AS `from` to AS `to`, both endpoints included.
  std::vector<AsId> route(AsId from, AsId to) const {
    if (symmetric_ && to < from) {
      auto p = route_directed(to, from);
      std::reverse(p.begin(), p.end());
      return p;
    }
    return route_directed(from, to);
  }

  /// forward: route a -> b. reverse: the route b -> a, listed from b.
  std::vector<AsId> as_path(HostRef a, HostRef b, PathDirection dir) const {
    const AsId x = host_as(a), y = host_as(b);
    return dir == PathDirection::forward ? route(x, y) : route(y, x);
  }

  void validate_hosts(const Topology& t) const {
    auto check = [&](const std::vector<AsId>& v, std::size_t n, const char* what) {
      if (v.size() < n) throw std::invalid_argument(std::string("AS topology: unmapped ") + what);
      for (AsId a : v) index_of(a);
    };
    check(relay_as, t.relays.size(), "relays");
    check(client_as, t.clients.size(), "clients");
    check(server_as, t.servers.size(), "servers");
  }

 private:
  enum class Step : std::uint8_t { up, peer, down, free_step };
  struct Arc {
    std::size_t to;
    std::uint32_t w;
    Step step;
  };
  // Valley-free phases: 0 still climbing, 1 crossed a peer link, 2 descending.
  static constexpr int kPhases = 3;
  static int next_phase(int phase, Step s) {
    switch (s) {
      case Step::free_step: return phase;
      case Step::up: return phase == 0 ? 0 : -1;
      case Step::peer: return phase == 0 ? 1 : -1;
      case Step::down: return 2;
    }
    return -1;
  }

  std::size_t index_of(AsId a) const {
    auto it = index_.find(a);
    if (it == index_.end()) throw std::out_of_range("AS topology: unknown AS " + std::to_string(a));
    return it->second;
  }

  std::vector<AsId> route_directed(AsId from, AsId to) const {
    const std::size_t s = index_of(from), t = index_of(to);
    const int phases = routing_ == AsRouting::valley_free ? kPhases : 1;
    auto state = [&](std::size_t v, int ph) { return v * phases + static_cast<std::size_t>(ph); };
    constexpr std::uint64_t kInf = std::numeric_limits<std::uint64_t>::max();

    // Cost-to-go from every (AS, phase) to the target, by Dijkstra over
    // reversed arcs.
    std::vector<std::uint64_t> dist(ids_.size() * phases, kInf);
    using Item = std::pair<std::uint64_t, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (int ph = 0; ph < phases; ++ph) {
      dist[state(t, ph)] = 0;
      pq.push({0, state(t, ph)});
    }
    while (!pq.empty()) {
      auto [d, st] = pq.top();
      pq.pop();
      if (d != dist[st]) continue;
      const std::size_t v = st / phases;
      const int ph = static_cast<int>(st % phases);
      for (const auto& in : radj_[v]) {  // arc in.to -> v
        for (int pph = 0; pph < phases; ++pph) {
          const int np = phases == 1 ? 0 : next_phase(pph, in.step);
          if (np != ph) continue;
          const std::size_t pst = state(in.to, pph);
          if (d + in.w < dist[pst]) {
            dist[pst] = d + in.w;
            pq.push({dist[pst], pst});
          }
        }
      }
    }
    if (dist[state(s, 0)] == kInf)
      throw std::runtime_error("AS topology: no route from AS " + std::to_string(from) + " to " +
                               std::to_string(to));
    // Walk forward, taking the smallest-id neighbour that stays optimal.
    std::vector<AsId> path{ids_[s]};
    std::size_t v = s;
    int ph = 0;
    while (v != t) {
      const std::uint64_t here = dist[state(v, ph)];
      bool moved = false;
      for (const auto& a : adj_[v]) {
        const int np = phases == 1 ? 0 : next_phase(ph, a.step);
        if (np < 0) continue;
        const std::uint64_t there = dist[state(a.to, np)];
        if (there != kInf && there + a.w == here) {
          v = a.to;
          ph = np;
          path.push_back(ids_[v]);
          moved = true;
          break;
        }
      }
      if (!moved) throw std::logic_error("AS topology: route reconstruction failed");
    }
    return path;
  }

  std::vector<AsId> ids_;
  std::vector<AsEdge> edges_;
  AsRouting routing_ = AsRouting::shortest_path;
  bool symmetric_ = false;
  std::unordered_map<AsId, std::size_t> index_;
  std::vector<std::vector<Arc>> adj_;
  std::vector<std::vector<Arc>> radj_;
};

struct StreamAsSides {
  std::set<AsId> entry;  // client<->guard, both directions
  std::set<AsId> exit;   // exit<->server, both directions
};

inline StreamAsSides stream_as_sides(const AsTopology& as, const StreamRecord& s) {
  if (!s.path) throw std::invalid_argument("stream has no path");
  StreamAsSides out;
  const HostRef client{HostKind::client, s.client_id}, guard{HostKind::relay, s.path->guard},
      exit{HostKind::relay, s.path->exit}, server{HostKind::server, s.server_id};
  for (auto dir : {PathDirection::forward, PathDirection::reverse}) {
    for (AsId a : as.as_path(client, guard, dir)) out.entry.insert(a);
    for (AsId a : as.as_path(exit, server, dir)) out.exit.insert(a);
  }
  return out;
}

/// A stream is compromised when any AS, endpoint ASes included, sits on both
/// the entry side and the exit side.
inline CompromiseResult network_compromise_rate(std::span<const StreamRecord> streams,
                                                const AsTopology& as) {
  std::map<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t, std::uint32_t>, bool> memo;
  return detail::count_compromise(streams, [&](const StreamRecord& s) {
    const AsId c = as.host_as({HostKind::client, s.client_id});
    const AsId g = as.host_as({HostKind::relay, s.path->guard});
    const AsId e = as.host_as({HostKind::relay, s.path->exit});
    const AsId d = as.host_as({HostKind::server, s.server_id});
    auto [it, fresh] = memo.try_emplace({c, g, e, d}, false);
    if (fresh) {
      const auto sides = stream_as_sides(as, s);
      it->second = std::any_of(sides.entry.begin(), sides.entry.end(),
                               [&](AsId a) { return sides.exit.contains(a); });
    }
    return it->second;
  });
}

// --- synthetic AS graphs

struct AsGeneratorParams {
  int ases = 60;
  int tier1 = 3;
  int max_providers = 2;
  double peer_probability = 0.04;  // per pair of non-tier-1 ASes
  std::uint32_t max_weight = 3;
  bool asymmetric_weights = true;
  AsRouting routing = AsRouting::shortest_path;
  bool symmetric = false;

  void validate() const {
    if (ases < 1 || tier1 < 1 || tier1 > ases) throw std::invalid_argument("AS generator: bad counts");
    if (max_providers < 1 || max_weight < 1) throw std::invalid_argument("AS generator: bad limits");
    if (peer_probability < 0.0 || peer_probability > 1.0)
      throw std::invalid_argument("AS generator: peer probability must be in [0, 1]");
  }
};

/// Tier-1 clique of peers; every later AS buys transit from one or more
/// earlier ones, so every pair is reachable under both routing modes. Hosts
/// land on non-tier-1 ASes (on tier-1 ones when there are no others).
inline AsTopology generate_as_topology(const AsGeneratorParams& p, const Topology& hosts,
                                       RngStream& rng) {
  p.validate();
  std::vector<AsId> ids;
  for (int i = 0; i < p.ases; ++i) ids.push_back(static_cast<AsId>(i));
  std::vector<AsEdge> edges;
  std::set<std::pair<AsId, AsId>> linked;
  auto weight = [&] { return static_cast<std::uint32_t>(1 + rng.uniform_index(p.max_weight)); };
  auto link = [&](AsId a, AsId b, AsRelation rel) {
    if (!linked.insert({std::min(a, b), std::max(a, b)}).second) return;
    const auto w = weight();
    edges.push_back({a, b, w, p.asymmetric_weights ? weight() : w, rel});
  };
  for (int a = 0; a < p.tier1; ++a)
    for (int b = a + 1; b < p.tier1; ++b) link(a, b, AsRelation::peer);
  for (int i = p.tier1; i < p.ases; ++i) {
    const int k = 1 + static_cast<int>(rng.uniform_index(static_cast<std::size_t>(p.max_providers)));
    for (int j = 0; j < k; ++j)
      link(static_cast<AsId>(i), static_cast<AsId>(rng.uniform_index(static_cast<std::size_t>(i))),
           AsRelation::customer_provider);
  }
  for (int a = p.tier1; a < p.ases; ++a)
    for (int b = a + 1; b < p.ases; ++b)
      if (rng.bernoulli(p.peer_probability)) link(a, b, AsRelation::peer);

  AsTopology as(ids, edges, p.routing, p.symmetric);
  const int first = p.ases > p.tier1 ? p.tier1 : 0;
  auto place = [&](std::size_t n) {
    std::vector<AsId> v(n);
    for (auto& a : v)
      a = static_cast<AsId>(first + rng.uniform_index(static_cast<std::size_t>(p.ases - first)));
    return v;
  };
  as.relay_as = place(hosts.relays.size());
  as.client_as = place(hosts.clients.size());
  as.server_as = place(hosts.servers.size());
  return as;
}

// --- AS topology file (JSON)

inline nlohmann::json as_topology_to_json(const AsTopology& as) {
  using nlohmann::json;
  json edges = json::array();
  for (const auto& e : as.edges())
    edges.push_back({{"a", e.a},
                     {"b", e.b},
                     {"weight_ab", e.weight_ab},
                     {"weight_ba", e.weight_ba},
                     {"relation", to_string(e.relation)}});
  return {{"ases", as.ases()},
          {"edges", edges},
          {"routing", {{"mode", to_string(as.routing())}, {"symmetric", as.symmetric()}}},
          {"hosts", {{"relays", as.relay_as}, {"clients", as.client_as}, {"servers", as.server_as}}}};
}

inline AsTopology as_topology_from_json(const nlohmann::json& j) {
  std::vector<AsEdge> edges;
  for (const auto& e : j.at("edges")) {
    AsEdge x;
    x.a = e.at("a").get<AsId>();
    x.b = e.at("b").get<AsId>();
    const auto w = e.value("weight", 1u);
    x.weight_ab = e.value("weight_ab", w);
    x.weight_ba = e.value("weight_ba", w);
    x.relation = parse_as_relation(e.value("relation", std::string("none")));
    edges.push_back(x);
  }
  const auto routing = j.value("routing", nlohmann::json::object());
  AsTopology as(j.at("ases").get<std::vector<AsId>>(), std::move(edges),
                parse_as_routing(routing.value("mode", std::string("shortest-path"))),
                routing.value("symmetric", false));
  const auto& hosts = j.at("hosts");
  as.relay_as = hosts.at("relays").get<std::vector<AsId>>();
  as.client_as = hosts.at("clients").get<std::vector<AsId>>();
  as.server_as = hosts.at("servers").get<std::vector<AsId>>();
  return as;
}

inline AsTopology load_as_topology(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open AS topology file: " + path);
  return as_topology_from_json(nlohmann::json::parse(in));
}

inline void save_as_topology(const AsTopology& as, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write AS topology file: " + path);
  out << as_topology_to_json(as).dump(1) << '\n';
}

// --- output

inline void write_compromise_csv(std::ostream& out, std::span<const CompromiseResult> runs,
                                 std::string_view label) {
  out << "label,run,client_id,streams,compromised,rate\n";
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (const auto& c : runs[r].clients)
      out << label << ',' << r << ',' << c.client_id << ',' << c.streams << ',' << c.compromised
          << ',' << csv::fixed(c.rate(), 6) << '\n';
}

}  // namespace circsel
