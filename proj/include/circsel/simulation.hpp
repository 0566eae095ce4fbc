#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "circsel/circuit_model.hpp"
#include "circsel/network_model.hpp"
#include "circsel/pool_manager.hpp"
#include "circsel/rng.hpp"
#include "circsel/sim_engine.hpp"
#include "circsel/strategy.hpp"
#include "circsel/traffic_workload.hpp"

namespace circsel {

struct SimulationConfig {
  StrategyId strategy = StrategyId::vanilla;
  PoolConfig pool;
  LinkModel link;
  double cell_bytes = 512.0;
  double cell_payload_bytes = 498.0;
  std::uint32_t chunk_cells = 32;
  std::uint32_t stream_window_cells = 500;
  SimTime handshake_timeout = seconds(60);
  SimTime probe_interval = seconds(30);
  SimTime probe_timeout = seconds(60);
  SimTime attach_timeout = seconds(120);
  bool idle_probing = true;
  bool destination_known = true;
  ClientProfile web = ClientProfile::web();
  ClientProfile bulk = ClientProfile::bulk();
  std::vector<Port> seeded_ports{80, 443};
  SimTime startup_spread = seconds(60);
  SimTime snapshot_interval = seconds(60);
  SimTime duration = seconds(2700);
  bool workload_enabled = true;
  std::uint64_t seed = 1;

  void validate() const {
    pool.validate();
    link.validate();
    web.validate();
    bulk.validate();
    if (!(cell_bytes > 0.0) || !(cell_payload_bytes > 0.0) || cell_payload_bytes > cell_bytes)
      throw std::invalid_argument("cell sizes must satisfy 0 < payload <= cell");
    if (chunk_cells == 0 || stream_window_cells < chunk_cells)
      throw std::invalid_argument("stream window must hold at least one chunk");
    const SimTime zero{};
    if (handshake_timeout <= zero || probe_interval <= zero || probe_timeout <= zero ||
        attach_timeout <= zero || snapshot_interval <= zero)
      throw std::invalid_argument("timeouts and intervals must be > 0");
    if (duration <= zero) throw std::invalid_argument("duration must be > 0");
  }
};

struct PoolSnapshot {
  SimTime time;
  ClientId client_id = 0;
  CircuitPool::Counts counts;
  std::vector<std::pair<Port, int>> clean_per_port;
};

inline void write_pool_log_csv(std::ostream& out, std::span<const PoolSnapshot> rows) {
  out << "time,client_id,building,open,dirty,closed,port,clean\n";
  for (const auto& r : rows) {
    for (const auto& [port, clean] : r.clean_per_port) {
      out << csv::seconds(r.time) << ',' << r.client_id << ',' << r.counts.building << ','
          << r.counts.open << ',' << r.counts.dirty << ',' << r.counts.closed << ',' << port << ','
          << clean << '\n';
    }
  }
}

struct SimulationResult {
  std::vector<StreamRecord> streams;
  std::vector<CircuitUsage> circuits;
  std::vector<ClientKind> client_kinds;
  CircuitLog circuit_log;
  std::vector<PoolSnapshot> pool_log;
  SimulationSummary engine;
  std::uint64_t trace_digest = 0;
  std::uint64_t builds_started = 0;
  std::uint64_t build_failures = 0;
  std::uint64_t probe_failures = 0;
  std::uint64_t path_failures = 0;
  std::uint64_t cars_abandoned = 0;
  std::uint64_t cells_sent = 0;
  std::uint64_t cell_losses = 0;
};

/// One isolated simulation instance: clients, their circuit pools, the relay
/// network and the event loop. Nothing is shared between instances.
///
/// Stream protocol per request: BEGIN cell client->exit, exit<->server TCP
/// connect, CONNECTED cell exit->client (the attach RTT sample excludes the
/// exit's connect time), GET cell client->server, then the response as cell
/// trains server->client, released under a per-stream window.
class Simulation {
 public:
  Simulation(Topology topology, std::vector<ClientKind> client_kinds, SimulationConfig config)
      : cfg_(std::move(config)),
        net_(std::move(topology), cfg_.link, cfg_.cell_bytes),
        rng_net_(cfg_.seed, "network"),
        rng_pool_(cfg_.seed, "pool"),
        rng_strategy_(cfg_.seed, "strategy"),
        rng_startup_(cfg_.seed, "startup") {
    cfg_.validate();
    cfg_.pool.reaping = !is_baseline(cfg_.strategy);
    if (client_kinds.size() != net_.topology().clients.size())
      throw std::invalid_argument("one client kind per topology client required");
    if (net_.topology().servers.empty()) throw std::invalid_argument("topology has no servers");
    clients_.reserve(client_kinds.size());
    for (std::size_t i = 0; i < client_kinds.size(); ++i) {
      clients_.push_back(ClientState{client_kinds[i], CircuitPool(cfg_.pool),
                                     RngStream(cfg_.seed, "workload/" + std::to_string(i)), {}});
    }
    sched_.set_trace([this](const SimEvent& e) { digest_.add(e); });
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  const SimulationConfig& config() const noexcept { return cfg_; }
  Scheduler& scheduler() noexcept { return sched_; }
  NetworkModel& network() noexcept { return net_; }
  const CircuitPool& pool(ClientId c) const { return clients_.at(c).pool; }
  CircuitPool& pool(ClientId c) { return clients_.at(c).pool; }
  SimTime now() const noexcept { return sched_.now(); }

  /// Schedules client ticks, pool seeding, snapshots and first requests.
  void start() {
    if (started_) return;
    started_ = true;
    for (ClientId c = 0; c < clients_.size(); ++c) {
      for (Port p : cfg_.seeded_ports) clients_[c].pool.note_port(p, SimTime{});
      const SimTime phase =
          SimTime::from_us(static_cast<std::int64_t>(rng_startup_.uniform01() *
                                                     static_cast<double>(cfg_.pool.replenish_interval.us())));
      sched_.schedule(phase, EventKind::timer_tick, [this, c] { client_tick(c); });
      if (cfg_.workload_enabled) {
        const SimTime first = SimTime::from_us(static_cast<std::int64_t>(
            rng_startup_.uniform01() * static_cast<double>(cfg_.startup_spread.us())));
        sched_.schedule(first, EventKind::stream_start, [this, c] { start_request(c); });
      }
    }
    sched_.schedule(cfg_.snapshot_interval, EventKind::timer_tick, [this] { snapshot(); });
  }

  SimulationSummary run_until(SimTime t) {
    start();
    return sched_.run_until(t);
  }

  SimulationResult run() {
    start();
    const auto summary = sched_.run_until(cfg_.duration);
    return collect(summary);
  }

  /// Starts building `path` for client `c` right now.
  CircuitId build_circuit(ClientId c, const RelayPath& path) {
    const CircuitId id = next_circuit_id_++;
    const auto& exit = net_.topology().relays.at(path.exit);
    Circuit& circ = clients_.at(c).pool.add(Circuit(id, c, path, exit.exit_policy, now()));
    runtime_[id] = CircuitRuntime{c, now(), false};
    log_.add(now(), circ, "build_start");
    ++builds_started_;
    handshake(c, id, 1);
    sched_.schedule(now() + cfg_.handshake_timeout, EventKind::circuit_transition, [this, c, id] {
      Circuit* circ = clients_[c].pool.find(id);
      if (circ && circ->state() == CircuitState::building) {
        circ->close(now());
        log_.add(now(), *circ, "build_failed");
        ++build_failures_;
      }
    });
    return id;
  }

  /// Sends one probe cell around the circuit; used by the idle prober.
  void probe(ClientId c, CircuitId id) {
    Circuit* circ = clients_.at(c).pool.find(id);
    if (!circ || circ->state() != CircuitState::open) return;
    auto& rt = runtime_.at(id);
    rt.probe_outstanding = true;
    const SimTime sent = now();
    send(round_trip_route(c, circ->path(), 3), 1, [this, c, id, sent](const CellTrain&) {
      auto& rt = runtime_.at(id);
      rt.probe_outstanding = false;
      rt.last_activity = now();
      Circuit* circ = clients_[c].pool.find(id);
      if (!circ || !(circ->state() == CircuitState::open || circ->state() == CircuitState::dirty))
        return;
      record_sample(*circ, (now() - sent).ms(), RttSource::idle_probe);
    });
    sched_.schedule(sent + cfg_.probe_timeout, EventKind::probe, [this, c, id, sent] {
      auto& rt = runtime_.at(id);
      Circuit* circ = clients_[c].pool.find(id);
      if (!rt.probe_outstanding || rt.last_activity > sent || !circ) return;
      rt.probe_outstanding = false;
      if (circ->state() == CircuitState::open && circ->active_streams() == 0) {
        circ->close(now());
        log_.add(now(), *circ, "probe_timeout");
        ++probe_failures_;
      }
    });
  }

 private:
  struct ClientState {
    ClientKind kind;
    CircuitPool pool;
    RngStream rng;
    std::deque<std::uint64_t> waiting;
  };

  struct CircuitRuntime {
    ClientId owner = 0;
    SimTime last_activity;
    bool probe_outstanding = false;
  };

  struct ActiveStream {
    StreamRecord record;
    std::uint32_t total_cells = 0;
    std::uint32_t sent_cells = 0;
    std::uint32_t in_flight = 0;
    std::uint32_t received = 0;
    bool waiting = true;
    bool done = false;
  };

  struct Route {
    std::vector<NodeId> nodes;
    std::function<void(const CellTrain&)> done;
  };

  const ClientProfile& profile(ClientId c) const {
    return clients_[c].kind == ClientKind::web ? cfg_.web : cfg_.bulk;
  }

  // --- transport

  void send(std::vector<NodeId> nodes, std::uint32_t cells,
            std::function<void(const CellTrain&)> done) {
    auto route = std::make_shared<Route>(Route{std::move(nodes), std::move(done)});
    hop(std::move(route), 0, CellTrain{now(), now(), cells});
  }

  void hop(std::shared_ptr<Route> route, std::size_t idx, CellTrain train) {
    if (idx + 1 >= route->nodes.size()) {
      route->done(train);
      return;
    }
    auto arrival = net_.transmit(route->nodes[idx], route->nodes[idx + 1], train, rng_net_);
    if (!arrival) return;  // unreachable hop: dropped, timeouts take over
    const bool last = idx + 2 == route->nodes.size();
    const SimTime when = last ? arrival->tail : arrival->head;
    sched_.schedule(when, EventKind::cell_arrival,
                    [this, route = std::move(route), idx, a = *arrival]() mutable {
                      hop(std::move(route), idx + 1, a);
                    });
  }

  std::vector<NodeId> relay_nodes(const RelayPath& p, int hops) const {
    std::vector<NodeId> v{net_.relay_node(p.guard), net_.relay_node(p.middle),
                          net_.relay_node(p.exit)};
    v.resize(static_cast<std::size_t>(hops));
    return v;
  }

  /// client -> hop1..hopN -> ... -> client
  std::vector<NodeId> round_trip_route(ClientId c, const RelayPath& p, int hops) const {
    std::vector<NodeId> r{net_.client_node(c)};
    const auto relays = relay_nodes(p, hops);
    r.insert(r.end(), relays.begin(), relays.end());
    r.insert(r.end(), relays.rbegin() + 1, relays.rend());
    r.push_back(net_.client_node(c));
    return r;
  }

  // --- circuit lifecycle

  void handshake(ClientId c, CircuitId id, int hop_count) {
    const Circuit& circ = clients_[c].pool.at(id);
    const SimTime sent = now();
    send(round_trip_route(c, circ.path(), hop_count), 1,
         [this, c, id, hop_count, sent](const CellTrain&) {
           Circuit* circ = clients_[c].pool.find(id);
           if (!circ || circ->state() != CircuitState::building) return;
           if (hop_count < 3) {
             handshake(c, id, hop_count + 1);
             return;
           }
           circ->open(now());
           log_.add(now(), *circ, "open", (now() - circ->build_started_at()).ms());
           runtime_.at(id).last_activity = now();
           record_sample(*circ, (now() - sent).ms(), RttSource::build_handshake);
           if (cfg_.idle_probing) schedule_probe_check(c, id, now() + cfg_.probe_interval);
           on_circuit_open(c);
         });
  }

  void record_sample(Circuit& circ, double value_ms, RttSource source) {
    circ.record_rtt(RttSample{std::max(value_ms, 1e-3), now(), source});
    log_.add(now(), circ, "rtt", circ.rtt_window().back().sample.value_ms, to_string(source));
    if (cfg_.strategy == StrategyId::car && circ.state() == CircuitState::open &&
        car_abandon_check(score(circ, 0.0))) {
      circ.mark_dirty(now());
      log_.add(now(), circ, "abandoned", circ.congestion_time());
      ++cars_abandoned_;
      close_if_idle(circ);
    }
  }

  void close_if_idle(Circuit& circ) {
    if (circ.state() == CircuitState::dirty && circ.active_streams() == 0) {
      circ.close(now());
      log_.add(now(), circ, "closed");
    }
  }

  void schedule_probe_check(ClientId c, CircuitId id, SimTime at) {
    sched_.schedule(at, EventKind::probe, [this, c, id] {
      Circuit* circ = clients_[c].pool.find(id);
      if (!circ || circ->state() != CircuitState::open) return;
      const auto& rt = runtime_.at(id);
      const SimTime idle_for = now() - rt.last_activity;
      if (circ->active_streams() == 0 && !rt.probe_outstanding && idle_for >= cfg_.probe_interval) {
        probe(c, id);
        schedule_probe_check(c, id, now() + cfg_.probe_interval);
      } else {
        SimTime next = rt.last_activity + cfg_.probe_interval;
        if (next <= now()) next = now() + cfg_.probe_interval;
        schedule_probe_check(c, id, next);
      }
    });
  }

  // --- pool maintenance

  void client_tick(ClientId c) {
    maintain(c);
    sched_.schedule(now() + cfg_.pool.replenish_interval, EventKind::timer_tick,
                    [this, c] { client_tick(c); });
  }

  void maintain(ClientId c) {
    auto& pool = clients_[c].pool;
    for (CircuitId id : pool.mark_dirty(now())) {
      Circuit& circ = pool.at(id);
      log_.add(now(), circ, "dirty");
      close_if_idle(circ);
    }
    for (CircuitId id : pool.reap_unused(now())) log_.add(now(), pool.at(id), "reaped");
    for (const auto& req : pool.replenish(net_.topology().relays, now(), rng_pool_))
      build_circuit(c, req.path);
  }

  void snapshot() {
    for (ClientId c = 0; c < clients_.size(); ++c) {
      const auto& pool = clients_[c].pool;
      PoolSnapshot s{now(), c, pool.counts(), {}};
      for (Port p : pool.remembered_ports(now()))
        s.clean_per_port.emplace_back(p, static_cast<int>(pool.candidates(p).size()));
      pool_log_.push_back(std::move(s));
    }
    sched_.schedule(now() + cfg_.snapshot_interval, EventKind::timer_tick, [this] { snapshot(); });
  }

  // --- workload

  void start_request(ClientId c) {
    auto& cl = clients_[c];
    const auto& servers = net_.topology().servers;
    const auto server = static_cast<std::uint32_t>(cl.rng.uniform_index(servers.size()));
    const std::uint64_t sid = next_stream_id_++;
    ActiveStream s;
    s.record.stream_id = sid;
    s.record.client_id = c;
    s.record.client_kind = cl.kind;
    s.record.server_id = server;
    s.record.port = servers[server].port;
    s.record.requested_at = now();
    s.total_cells = static_cast<std::uint32_t>(
        std::ceil(profile(c).download_kib * 1024.0 / cfg_.cell_payload_bytes));
    streams_.emplace(sid, std::move(s));
    cl.pool.note_port(servers[server].port, now());

    if (try_attach(c, sid)) return;
    cl.waiting.push_back(sid);
    maintain(c);  // launch builds right away instead of waiting for the tick
    sched_.schedule(now() + cfg_.attach_timeout, EventKind::stream_start, [this, c, sid] {
      auto it = streams_.find(sid);
      if (it == streams_.end() || !it->second.waiting) return;
      auto& w = clients_[c].waiting;
      w.erase(std::remove(w.begin(), w.end(), sid), w.end());
      finish_stream(c, sid, StreamOutcome::failed);
    });
  }

  bool try_attach(ClientId c, std::uint64_t sid) {
    auto& cl = clients_[c];
    auto& s = streams_.at(sid);
    const auto ids = cl.pool.candidates(s.record.port);
    if (ids.empty()) return false;

    const auto& topo = net_.topology();
    const Position client_pos = topo.clients[c].position;
    std::optional<Position> dest;
    if (cfg_.destination_known) dest = topo.servers[s.record.server_id].position;
    std::vector<CircuitScore> scores;
    scores.reserve(ids.size());
    for (CircuitId id : ids) {
      const Circuit& circ = cl.pool.at(id);
      scores.push_back(score(circ, geo_length_km(circ, client_pos, topo.relays, dest)));
    }
    const CircuitId chosen = select(cfg_.strategy, scores, rng_strategy_);
    attach(c, sid, chosen);
    return true;
  }

  void on_circuit_open(ClientId c) {
    auto& w = clients_[c].waiting;
    while (!w.empty()) {
      if (!try_attach(c, w.front())) break;
      w.pop_front();
    }
  }

  void attach(ClientId c, std::uint64_t sid, CircuitId id) {
    Circuit& circ = clients_[c].pool.at(id);
    circ.attach_stream(now());
    runtime_.at(id).last_activity = now();
    auto& s = streams_.at(sid);
    s.waiting = false;
    s.record.circuit_attached_at = now();
    s.record.circuit_id = id;
    s.record.path = circ.path();

    const RelayPath path = circ.path();
    const NodeId client = net_.client_node(c);
    const NodeId guard = net_.relay_node(path.guard);
    const NodeId middle = net_.relay_node(path.middle);
    const NodeId exit = net_.relay_node(path.exit);
    const NodeId server = net_.server_node(s.record.server_id);
    const SimTime begin_sent = now();

    send({client, guard, middle, exit}, 1, [=, this](const CellTrain&) {
      const SimTime connect_start = now();
      send({exit, server, exit}, 1, [=, this](const CellTrain&) {
        const SimTime connect_time = now() - connect_start;
        send({exit, middle, guard, client}, 1, [=, this](const CellTrain&) {
          Circuit* circ = clients_[c].pool.find(id);
          if (circ && (circ->state() == CircuitState::open || circ->state() == CircuitState::dirty))
            record_sample(*circ, (now() - begin_sent - connect_time).ms(), RttSource::stream_attach);
          send({client, guard, middle, exit, server}, 1,
               [=, this](const CellTrain&) { server_send(sid); });
        });
      });
    });
  }

  std::vector<NodeId> downstream_route(const StreamRecord& r) const {
    return {net_.server_node(r.server_id), net_.relay_node(r.path->exit),
            net_.relay_node(r.path->middle), net_.relay_node(r.path->guard),
            net_.client_node(r.client_id)};
  }

  void server_send(std::uint64_t sid) {
    auto it = streams_.find(sid);
    if (it == streams_.end()) return;
    auto& s = it->second;
    while (s.sent_cells < s.total_cells &&
           (s.in_flight == 0 || s.in_flight + cfg_.chunk_cells <= cfg_.stream_window_cells)) {
      const std::uint32_t k = std::min(cfg_.chunk_cells, s.total_cells - s.sent_cells);
      s.sent_cells += k;
      s.in_flight += k;
      send(downstream_route(s.record), k, [this, sid, k](const CellTrain& arrival) {
        on_chunk(sid, k, arrival);
      });
    }
  }

  void on_chunk(std::uint64_t sid, std::uint32_t cells, const CellTrain& arrival) {
    auto& s = streams_.at(sid);
    if (!s.record.first_byte_at || arrival.head < *s.record.first_byte_at)
      s.record.first_byte_at = arrival.head;
    if (!s.record.last_byte_at || arrival.tail > *s.record.last_byte_at)
      s.record.last_byte_at = arrival.tail;
    s.received += cells;
    s.in_flight -= cells;
    if (s.received >= s.total_cells) {
      finish_stream(s.record.client_id, sid, StreamOutcome::completed);
      return;
    }
    // Window credit travels back to the server at propagation speed.
    const auto up = downstream_route(s.record);
    double ack_ms = 0.0;
    for (std::size_t i = up.size() - 1; i > 0; --i) ack_ms += net_.base_latency_ms(up[i], up[i - 1]);
    sched_.schedule(now() + millis(ack_ms), EventKind::cell_arrival, [this, sid] { server_send(sid); });
  }

  void finish_stream(ClientId c, std::uint64_t sid, StreamOutcome outcome) {
    auto node = streams_.extract(sid);
    ActiveStream& s = node.mapped();
    s.record.outcome = outcome;
    if (s.record.circuit_id) {
      Circuit& circ = clients_[c].pool.at(*s.record.circuit_id);
      circ.detach_stream();
      runtime_.at(circ.id()).last_activity = now();
      close_if_idle(circ);
    }
    finished_.push_back(std::move(s.record));

    const auto& prof = profile(c);
    const double think = prof.think_max_s > 0.0
                             ? clients_[c].rng.uniform(prof.think_min_s, prof.think_max_s)
                             : prof.think_min_s;
    sched_.schedule(now() + seconds(think), EventKind::stream_start,
                    [this, c] { start_request(c); });
  }

  SimulationResult collect(const SimulationSummary& summary) {
    SimulationResult r;
    r.streams = finished_;
    std::sort(r.streams.begin(), r.streams.end(),
              [](const auto& a, const auto& b) { return a.stream_id < b.stream_id; });
    for (ClientId c = 0; c < clients_.size(); ++c) {
      r.client_kinds.push_back(clients_[c].kind);
      for (const auto& [id, circ] : clients_[c].pool.circuits())
        r.circuits.push_back(CircuitUsage{id, c, circ.build_started_at(), circ.built_at().has_value(),
                                          circ.total_streams()});
      r.path_failures += clients_[c].pool.path_failures();
    }
    std::sort(r.circuits.begin(), r.circuits.end(),
              [](const auto& a, const auto& b) { return a.circuit_id < b.circuit_id; });
    r.circuit_log = log_;
    r.pool_log = pool_log_;
    r.engine = summary;
    r.trace_digest = digest_.value();
    r.builds_started = builds_started_;
    r.build_failures = build_failures_;
    r.probe_failures = probe_failures_;
    r.cars_abandoned = cars_abandoned_;
    r.cells_sent = net_.cells_sent();
    r.cell_losses = net_.losses();
    return r;
  }

  SimulationConfig cfg_;
  NetworkModel net_;
  Scheduler sched_;
  RngStream rng_net_;
  RngStream rng_pool_;
  RngStream rng_strategy_;
  RngStream rng_startup_;
  std::vector<ClientState> clients_;
  std::unordered_map<CircuitId, CircuitRuntime> runtime_;
  std::unordered_map<std::uint64_t, ActiveStream> streams_;
  std::vector<StreamRecord> finished_;
  CircuitLog log_;
  std::vector<PoolSnapshot> pool_log_;
  TraceDigest digest_;
  CircuitId next_circuit_id_ = 1;
  std::uint64_t next_stream_id_ = 1;
  std::uint64_t builds_started_ = 0;
  std::uint64_t build_failures_ = 0;
  std::uint64_t probe_failures_ = 0;
  std::uint64_t cars_abandoned_ = 0;
  bool started_ = false;
};

}  // namespace circsel
