#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "circsel/adversary_analysis.hpp"
#include "circsel/simulation.hpp"
#include "circsel/stats.hpp"
#include "circsel/topology.hpp"

namespace circsel {

namespace fs = std::filesystem;
using nlohmann::json;

/// Bad configuration or unusable input; the CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AsSettings {
  std::optional<std::string> file;  // AS topology file; generated when unset
  AsGeneratorParams generator;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  std::optional<std::string> topology_file;
  std::optional<std::string> regions_file;
  TopologyParams topology;
  int web_clients = 200;
  int bulk_clients = 20;
  SimulationConfig sim;  // strategy, pool, link, workload, timeouts, duration
  double warmup_fraction = 1.0 / 3.0;
  std::vector<std::uint64_t> seeds{1};
  AdversaryConfig adversary;
  AsSettings as;
  std::string output_dir = "out";
  int jobs = 0;  // 0: one per hardware thread

  int clients() const { return web_clients + bulk_clients; }
  SimTime warmup() const {
    return SimTime::from_seconds(sim.duration.seconds() * warmup_fraction);
  }

  void validate() const {
    if (web_clients < 0 || bulk_clients < 0 || clients() < 1)
      throw ConfigError("clients: counts must be > 0");
    if (!(sim.duration > SimTime{})) throw ConfigError("duration must be > 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
      throw ConfigError("warmup_fraction must be in [0, 1) so that duration exceeds warm-up");
    if (seeds.empty()) throw ConfigError("seeds must not be empty");
    if (jobs < 0) throw ConfigError("jobs must be >= 0");
    try {
      sim.validate();
      adversary.validate();
      as.generator.validate();
      if (!topology_file) topology.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

// --- config tree

namespace detail {

/// Reads keys from one JSON object and rejects any it did not consume.
class JsonReader {
 public:
  JsonReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <class T>
  void get_optional(const char* key, std::optional<T>& out) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    T v{};
    try {
      v = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
    out = v;
  }

  void seconds(const char* key, SimTime& out) {
    double s = out.seconds();
    get(key, s);
    if (!std::isfinite(s)) throw ConfigError(where(key) + ": not a number");
    out = SimTime::from_seconds(s);
  }

  template <class F>
  void child(const char* key, F&& f) {
    if (!j_.contains(key)) return;
    used_.insert(key);
    JsonReader r(j_.at(key), where(key));
    f(r);
    r.finish();
  }

  const json* raw(const char* key) {
    if (!j_.contains(key)) return nullptr;
    used_.insert(key);
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.contains(k)) throw ConfigError("unknown config key: " + where(k.c_str()));
  }

  std::string where(const char* key = nullptr) const {
    if (!key) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline json optional_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

inline json profile_to_json(const ClientProfile& p) {
  return {{"download_kib", p.download_kib}, {"think_min_s", p.think_min_s}, {"think_max_s", p.think_max_s}};
}

inline json config_to_json(const ExperimentConfig& c) {
  const auto& s = c.sim;
  json regions = json::array();
  for (const auto& r : c.topology.regions) regions.push_back(region_to_json(r));
  const auto& tp = c.topology;
  const auto& g = c.as.generator;
  return {
      {"topology",
       {{"file", detail::optional_json(c.topology_file)},
        {"regions_file", detail::optional_json(c.regions_file)},
        {"exits", tp.exits},
        {"exit_guards", tp.exit_guards},
        {"guards", tp.guards},
        {"middles", tp.middles},
        {"servers", tp.servers},
        {"relay_bw_median_kibps", tp.relay_bw_median_kibps},
        {"relay_bw_sigma", tp.relay_bw_sigma},
        {"guard_bw_factor", tp.guard_bw_factor},
        {"exit_bw_factor", tp.exit_bw_factor},
        {"relay_bw_min_kibps", tp.relay_bw_min_kibps},
        {"capacity_error_sigma", tp.capacity_error_sigma},
        {"client_bw_kibps", tp.client_bw_kibps},
        {"server_bw_kibps", tp.server_bw_kibps},
        {"exit_ports", tp.exit_ports},
        {"server_port", tp.server_port},
        {"regions", regions}}},
      {"clients", {{"web", c.web_clients}, {"bulk", c.bulk_clients}}},
      {"workload",
       {{"web", profile_to_json(s.web)},
        {"bulk", profile_to_json(s.bulk)},
        {"startup_spread_s", s.startup_spread.seconds()},
        {"destination_known", s.destination_known}}},
      {"strategy", std::string(to_string(s.strategy))},
      {"pool",
       {{"circuits", s.pool.target_n ? json(*s.pool.target_n) : json(nullptr)},
        {"baseline_target", s.pool.baseline_target},
        {"dirty_after_s", s.pool.dirty_after.seconds()},
        {"reap_unused_after_s", s.pool.reap_unused_after.seconds()},
        {"replenish_interval_s", s.pool.replenish_interval.seconds()},
        {"port_memory_s", s.pool.port_memory.seconds()},
        {"seeded_ports", s.seeded_ports}}},
      {"measurement",
       {{"idle_probing", s.idle_probing},
        {"probe_interval_s", s.probe_interval.seconds()},
        {"probe_timeout_s", s.probe_timeout.seconds()}}},
      {"network",
       {{"floor_ms", s.link.floor_ms},
        {"km_per_ms", s.link.km_per_ms},
        {"jitter_mean_ms", s.link.jitter_mean_ms},
        {"packet_loss", s.link.packet_loss},
        {"rto_factor", s.link.rto_factor},
        {"cell_bytes", s.cell_bytes},
        {"cell_payload_bytes", s.cell_payload_bytes},
        {"chunk_cells", s.chunk_cells},
        {"stream_window_cells", s.stream_window_cells}}},
      {"timeouts",
       {{"build_s", s.handshake_timeout.seconds()}, {"attach_s", s.attach_timeout.seconds()}}},
      {"duration_s", s.duration.seconds()},
      {"warmup_fraction", c.warmup_fraction},
      {"snapshot_interval_s", s.snapshot_interval.seconds()},
      {"seeds", c.seeds},
      {"adversary",
       {{"guard_bandwidth_fraction", c.adversary.guard_bandwidth_fraction},
        {"exit_bandwidth_fraction", c.adversary.exit_bandwidth_fraction},
        {"runs", c.adversary.runs},
        {"marking_seed", c.adversary.marking_seed},
        {"as_topology",
         {{"file", detail::optional_json(c.as.file)},
          {"seed", c.as.seed},
          {"ases", g.ases},
          {"tier1", g.tier1},
          {"max_providers", g.max_providers},
          {"peer_probability", g.peer_probability},
          {"max_weight", g.max_weight},
          {"asymmetric_weights", g.asymmetric_weights},
          {"routing", std::string(to_string(g.routing))},
          {"symmetric", g.symmetric}}}}},
      {"output_dir", c.output_dir},
      {"jobs", c.jobs},
  };
}

inline ClientProfile profile_from(detail::JsonReader& r, ClientProfile p) {
  r.get("download_kib", p.download_kib);
  r.get("think_min_s", p.think_min_s);
  r.get("think_max_s", p.think_max_s);
  return p;
}

/// Applies `j` over `base`. Relative file paths resolve against `base_dir`.
inline ExperimentConfig config_from_json(const json& j, ExperimentConfig c = {},
                                         const fs::path& base_dir = {}) {
  auto resolve = [&](std::optional<std::string>& p) {
    if (p && !base_dir.empty() && fs::path(*p).is_relative()) p = (base_dir / *p).lexically_normal().string();
  };
  detail::JsonReader root(j, "");
  auto& s = c.sim;
  root.child("topology", [&](detail::JsonReader& r) {
    auto& tp = c.topology;
    r.get_optional("file", c.topology_file);
    r.get_optional("regions_file", c.regions_file);
    r.get("exits", tp.exits);
    r.get("exit_guards", tp.exit_guards);
    r.get("guards", tp.guards);
    r.get("middles", tp.middles);
    r.get("servers", tp.servers);
    r.get("relay_bw_median_kibps", tp.relay_bw_median_kibps);
    r.get("relay_bw_sigma", tp.relay_bw_sigma);
    r.get("guard_bw_factor", tp.guard_bw_factor);
    r.get("exit_bw_factor", tp.exit_bw_factor);
    r.get("relay_bw_min_kibps", tp.relay_bw_min_kibps);
    r.get("capacity_error_sigma", tp.capacity_error_sigma);
    r.get("client_bw_kibps", tp.client_bw_kibps);
    r.get("server_bw_kibps", tp.server_bw_kibps);
    r.get("exit_ports", tp.exit_ports);
    r.get("server_port", tp.server_port);
    if (const json* regions = r.raw("regions")) {
      tp.regions.clear();
      try {
        for (const auto& x : *regions) tp.regions.push_back(region_from_json(x));
      } catch (const json::exception& e) {
        throw ConfigError(std::string("topology.regions: ") + e.what());
      }
    }
  });
  resolve(c.topology_file);
  resolve(c.regions_file);
  root.child("clients", [&](detail::JsonReader& r) {
    r.get("web", c.web_clients);
    r.get("bulk", c.bulk_clients);
  });
  root.child("workload", [&](detail::JsonReader& r) {
    r.child("web", [&](detail::JsonReader& w) { s.web = profile_from(w, s.web); });
    r.child("bulk", [&](detail::JsonReader& w) { s.bulk = profile_from(w, s.bulk); });
    r.seconds("startup_spread_s", s.startup_spread);
    r.get("destination_known", s.destination_known);
  });
  std::string strategy(to_string(s.strategy));
  root.get("strategy", strategy);
  if (auto id = parse_strategy(strategy)) s.strategy = *id;
  else throw ConfigError("unknown strategy: " + strategy);
  root.child("pool", [&](detail::JsonReader& r) {
    r.get_optional("circuits", s.pool.target_n);
    r.get("baseline_target", s.pool.baseline_target);
    r.seconds("dirty_after_s", s.pool.dirty_after);
    r.seconds("reap_unused_after_s", s.pool.reap_unused_after);
    r.seconds("replenish_interval_s", s.pool.replenish_interval);
    r.seconds("port_memory_s", s.pool.port_memory);
    r.get("seeded_ports", s.seeded_ports);
  });
  root.child("measurement", [&](detail::JsonReader& r) {
    r.get("idle_probing", s.idle_probing);
    r.seconds("probe_interval_s", s.probe_interval);
    r.seconds("probe_timeout_s", s.probe_timeout);
  });
  root.child("network", [&](detail::JsonReader& r) {
    r.get("floor_ms", s.link.floor_ms);
    r.get("km_per_ms", s.link.km_per_ms);
    r.get("jitter_mean_ms", s.link.jitter_mean_ms);
    r.get("packet_loss", s.link.packet_loss);
    r.get("rto_factor", s.link.rto_factor);
    r.get("cell_bytes", s.cell_bytes);
    r.get("cell_payload_bytes", s.cell_payload_bytes);
    r.get("chunk_cells", s.chunk_cells);
    r.get("stream_window_cells", s.stream_window_cells);
  });
  root.child("timeouts", [&](detail::JsonReader& r) {
    r.seconds("build_s", s.handshake_timeout);
    r.seconds("attach_s", s.attach_timeout);
  });
  root.seconds("duration_s", s.duration);
  root.get("warmup_fraction", c.warmup_fraction);
  root.seconds("snapshot_interval_s", s.snapshot_interval);
  root.get("seeds", c.seeds);
  root.child("adversary", [&](detail::JsonReader& r) {
    r.get("guard_bandwidth_fraction", c.adversary.guard_bandwidth_fraction);
    r.get("exit_bandwidth_fraction", c.adversary.exit_bandwidth_fraction);
    r.get("runs", c.adversary.runs);
    r.get("marking_seed", c.adversary.marking_seed);
    r.child("as_topology", [&](detail::JsonReader& a) {
      auto& g = c.as.generator;
      a.get_optional("file", c.as.file);
      a.get("seed", c.as.seed);
      a.get("ases", g.ases);
      a.get("tier1", g.tier1);
      a.get("max_providers", g.max_providers);
      a.get("peer_probability", g.peer_probability);
      a.get("max_weight", g.max_weight);
      a.get("asymmetric_weights", g.asymmetric_weights);
      std::string routing(to_string(g.routing));
      a.get("routing", routing);
      try {
        g.routing = parse_as_routing(routing);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      a.get("symmetric", g.symmetric);
    });
  });
  resolve(c.as.file);
  root.get("output_dir", c.output_dir);
  root.get("jobs", c.jobs);
  root.finish();
  c.validate();
  return c;
}

/// Loads a config file. A run manifest is accepted too: its embedded config
/// reproduces that run.
inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (j.is_object() && j.contains("config") && j.contains("config_hash")) j = j.at("config");
  auto c = config_from_json(j, {}, fs::path(path).parent_path());
  if (c.regions_file && !c.topology_file) {
    std::ifstream rf(*c.regions_file);
    if (!rf) throw ConfigError("cannot open regions file: " + *c.regions_file);
    try {
      c.topology.regions.clear();
      for (const auto& x : json::parse(rf)) c.topology.regions.push_back(region_from_json(x));
    } catch (const json::exception& e) {
      throw ConfigError(*c.regions_file + ": " + e.what());
    }
    c.regions_file.reset();  // inlined above; keeps manifests self-contained
    c.validate();
  }
  return c;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex;
  o.width(16);
  o.fill('0');
  o << v;
  return o.str();
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(config_to_json(c).dump())); }

// --- single runs

struct RunOutcome {
  std::uint64_t seed = 0;
  fs::path dir;
  bool ok = false;
  std::string error;
  MetricsSummary metrics;
};

inline std::string cell_label(StrategyId s, std::optional<int> n) {
  std::string l(to_string(s));
  if (n) l += "-n" + std::to_string(*n);
  return l;
}

inline std::vector<ClientKind> client_kinds(const ExperimentConfig& c) {
  std::vector<ClientKind> k(static_cast<std::size_t>(c.web_clients), ClientKind::web);
  k.resize(static_cast<std::size_t>(c.clients()), ClientKind::bulk);
  return k;
}

inline Topology make_topology(const ExperimentConfig& c, std::uint64_t seed) {
  Topology t;
  if (c.topology_file) {
    try {
      t = load_topology(*c.topology_file);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (t.clients.size() != static_cast<std::size_t>(c.clients()))
      throw ConfigError("topology file has " + std::to_string(t.clients.size()) +
                        " clients but the config asks for " + std::to_string(c.clients()));
    return t;
  }
  TopologyParams p = c.topology;
  p.clients = c.clients();
  RngStream rng(seed, "topology");
  return generate_topology(p, rng);
}

inline json distribution_to_json(const Distribution& d) {
  return {{"count", d.count}, {"mean", d.mean}, {"min", d.min},   {"p10", d.p10}, {"p25", d.p25},
          {"median", d.median}, {"p75", d.p75}, {"p90", d.p90}, {"max", d.max}};
}

inline json metrics_to_json(const MetricsSummary& m, const SimulationResult& r) {
  auto kind = [](const KindMetrics& k) {
    return json{{"completed", k.completed},
                {"failed", k.failed},
                {"ttfb_s", distribution_to_json(k.ttfb)},
                {"ttlb_s", distribution_to_json(k.ttlb)}};
  };
  json clients = json::array();
  for (const auto& c : m.clients)
    clients.push_back({{"client_id", c.client_id},
                       {"kind", std::string(to_string(c.kind))},
                       {"created", c.created},
                       {"used", c.used}});
  return {{"window_s", {m.window_start.seconds(), m.window_end.seconds()}},
          {"web", kind(m.web)},
          {"bulk", kind(m.bulk)},
          {"web_circuits_created_median", m.web_created_median},
          {"web_circuits_used_median", m.web_used_median},
          {"clients", clients},
          {"counters",
           {{"events", r.engine.dispatched},
            {"builds_started", r.builds_started},
            {"build_failures", r.build_failures},
            {"probe_failures", r.probe_failures},
            {"path_failures", r.path_failures},
            {"car_abandoned", r.cars_abandoned},
            {"cells_sent", r.cells_sent},
            {"cell_losses", r.cell_losses}}},
          {"trace_digest", hex64(r.trace_digest)}};
}

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

template <class F>
void write_with(const fs::path& p, F&& f) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  f(out);
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

}  // namespace detail

inline constexpr const char* kFailedMarker = "FAILED";

/// Runs one seed into `dir`: topology.json, streams.csv, circuits.csv,
/// pool.csv, metrics.json and manifest.json. A FAILED marker is present
/// until the run completes and keeps the error text if it does not.
inline RunOutcome run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  RunOutcome out;
  out.seed = seed;
  out.dir = dir;
  fs::create_directories(dir);
  const fs::path marker = dir / kFailedMarker;
  detail::write_text(marker, "incomplete\n");
  try {
    const Topology topo = make_topology(cfg, seed);
    save_topology(topo, (dir / "topology.json").string());
    SimulationConfig sc = cfg.sim;
    sc.seed = seed;
    const auto kinds = client_kinds(cfg);
    Simulation sim(topo, kinds, sc);
    const auto result = sim.run();
    out.metrics = aggregate(result.streams, result.circuits, result.client_kinds, cfg.warmup(), sc.duration);

    detail::write_with(dir / "streams.csv", [&](std::ostream& o) { write_streams_csv(o, result.streams); });
    detail::write_with(dir / "circuits.csv", [&](std::ostream& o) { result.circuit_log.write_csv(o); });
    detail::write_with(dir / "pool.csv", [&](std::ostream& o) { write_pool_log_csv(o, result.pool_log); });
    detail::write_text(dir / "metrics.json", metrics_to_json(out.metrics, result).dump(1) + "\n");

    ExperimentConfig one = cfg;
    one.seeds = {seed};
    one.output_dir = dir.string();
    const json manifest{{"config", config_to_json(one)},
                        {"config_hash", config_hash(one)},
                        {"seed", seed},
                        {"label", cell_label(sc.strategy, sc.pool.target_n)},
                        {"strategy", std::string(to_string(sc.strategy))},
                        {"circuits", sc.pool.target_n ? json(*sc.pool.target_n) : json(nullptr)},
                        {"warmup_s", cfg.warmup().seconds()},
                        {"duration_s", sc.duration.seconds()},
                        {"trace_digest", hex64(result.trace_digest)}};
    detail::write_text(dir / "manifest.json", manifest.dump(1) + "\n");
    fs::remove(marker);
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
    std::ofstream(marker) << e.what() << '\n';
    if (dynamic_cast<const ConfigError*>(&e)) throw;
  }
  return out;
}

inline int effective_jobs(const ExperimentConfig& c) {
  if (c.jobs > 0) return c.jobs;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Runs fn(0..n-1) on up to `jobs` threads. Each index owns its own state, so
/// results never depend on the interleaving.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

inline fs::path seed_dir(const fs::path& base, std::uint64_t seed) {
  return base / ("seed-" + std::to_string(seed));
}

/// Every configured seed into <output_dir>/seed-<n>.
inline std::vector<RunOutcome> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<RunOutcome> out(cfg.seeds.size());
  parallel_for(cfg.seeds.size(), effective_jobs(cfg), [&](std::size_t i) {
    out[i] = run_seed(cfg, cfg.seeds[i], seed_dir(cfg.output_dir, cfg.seeds[i]));
  });
  return out;
}

// --- sweeps

struct SweepCell {
  StrategyId strategy = StrategyId::vanilla;
  std::optional<int> circuits;
  std::string label() const { return cell_label(strategy, circuits); }
};

/// Cross product of strategies and N values; baselines ignore N and appear
/// once.
inline std::vector<SweepCell> sweep_cells(const std::vector<StrategyId>& strategies,
                                          const std::vector<std::optional<int>>& ns) {
  std::vector<SweepCell> cells;
  for (auto s : strategies) {
    if (is_baseline(s) || ns.empty()) {
      cells.push_back({s, std::nullopt});
      continue;
    }
    for (const auto& n : ns) cells.push_back({s, n});
  }
  return cells;
}

struct CellResult {
  SweepCell cell;
  std::vector<RunOutcome> runs;
  std::vector<std::string> errors;

  bool ok() const { return errors.empty() && !runs.empty(); }
  std::vector<double> per_seed(double (*pick)(const MetricsSummary&)) const {
    std::vector<double> v;
    for (const auto& r : runs)
      if (r.ok) v.push_back(pick(r.metrics));
    return v;
  }
  double median_of(double (*pick)(const MetricsSummary&)) const {
    const auto v = per_seed(pick);
    return v.empty() ? 0.0 : stats::median(v);
  }
  double ttfb() const { return median_of([](const MetricsSummary& m) { return m.web.ttfb.median; }); }
  double ttlb() const { return median_of([](const MetricsSummary& m) { return m.web.ttlb.median; }); }
  double created() const { return median_of([](const MetricsSummary& m) { return m.web_created_median; }); }
  double used() const { return median_of([](const MetricsSummary& m) { return m.web_used_median; }); }
};

/// (a - b) / b, as a percentage.
inline double delta_percent(double a, double b) {
  if (b == 0.0) throw std::invalid_argument("delta against zero");
  return (a - b) / b * 100.0;
}

inline std::string format_percent(double pct) {
  std::string s = csv::fixed(pct, 1);
  if (pct >= 0.0 && s.front() != '-') s.insert(s.begin(), '+');
  if (s == "-0.0") s = "+0.0";
  return s + "%";
}

inline std::vector<CellResult> run_sweep(const ExperimentConfig& base, const std::vector<SweepCell>& cells) {
  base.validate();
  std::vector<CellResult> results(cells.size());
  struct Job {
    std::size_t cell, seed;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    results[c].cell = cells[c];
    results[c].runs.resize(base.seeds.size());
    for (std::size_t s = 0; s < base.seeds.size(); ++s) jobs.push_back({c, s});
  }
  std::vector<std::string> job_errors(jobs.size());
  parallel_for(jobs.size(), effective_jobs(base), [&](std::size_t j) {
    const auto [c, s] = jobs[j];
    ExperimentConfig cfg = base;
    cfg.sim.strategy = cells[c].strategy;
    cfg.sim.pool.target_n = cells[c].circuits;
    const auto seed = base.seeds[s];
    try {
      results[c].runs[s] = run_seed(cfg, seed, seed_dir(fs::path(base.output_dir) / cells[c].label(), seed));
      if (!results[c].runs[s].ok) job_errors[j] = results[c].runs[s].error;
    } catch (const std::exception& e) {
      job_errors[j] = e.what();
    }
  });
  for (std::size_t j = 0; j < jobs.size(); ++j)
    if (!job_errors[j].empty())
      results[jobs[j].cell].errors.push_back("seed " + std::to_string(base.seeds[jobs[j].seed]) + ": " +
                                             job_errors[j]);
  return results;
}

inline const CellResult* find_cell(const std::vector<CellResult>& rs, StrategyId s, std::optional<int> n = {}) {
  for (const auto& r : rs)
    if (r.cell.strategy == s && r.cell.circuits == n && r.ok()) return &r;
  return nullptr;
}

/// Plain-text comparison table: medians across seeds of each run's web
/// medians, with TTFB/TTLB deltas against CAR and Vanilla when present.
inline std::string sweep_table(const std::vector<CellResult>& rs) {
  const CellResult* car = find_cell(rs, StrategyId::car);
  const CellResult* vanilla = find_cell(rs, StrategyId::vanilla);
  std::ostringstream o;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  o << pad("strategy", 24) << pad("N", 4) << pad("seeds", 7) << pad("ttfb_s", 9) << pad("ttlb_s", 9)
    << pad("created", 9) << pad("used", 6) << pad("ttfb_vs_car", 13) << pad("ttlb_vs_car", 13)
    << pad("ttfb_vs_van", 13) << "ttlb_vs_van\n";
  for (const auto& r : rs) {
    o << pad(std::string(to_string(r.cell.strategy)), 24)
      << pad(r.cell.circuits ? std::to_string(*r.cell.circuits) : "-", 4);
    if (!r.ok()) {
      o << "FAILED (" << r.errors.size() << " runs): " << (r.errors.empty() ? "" : r.errors.front()) << '\n';
      continue;
    }
    auto delta = [](double a, const CellResult* b, double (CellResult::*f)() const) {
      return b ? format_percent(delta_percent(a, (b->*f)())) : std::string("-");
    };
    o << pad(std::to_string(r.runs.size()), 7) << pad(csv::fixed(r.ttfb(), 3), 9) << pad(csv::fixed(r.ttlb(), 3), 9)
      << pad(csv::fixed(r.created(), 1), 9) << pad(csv::fixed(r.used(), 1), 6)
      << pad(delta(r.ttfb(), car, &CellResult::ttfb), 13) << pad(delta(r.ttlb(), car, &CellResult::ttlb), 13)
      << pad(delta(r.ttfb(), vanilla, &CellResult::ttfb), 13) << delta(r.ttlb(), vanilla, &CellResult::ttlb)
      << '\n';
  }
  o << "reference (full scale): rtt_only vs car ttfb -15% at N=3, -22% at N=5\n";
  return o.str();
}

inline void write_sweep_csv(std::ostream& o, const std::vector<CellResult>& rs) {
  o << "label,strategy,circuits,seed,ok,web_ttfb_median,web_ttlb_median,bulk_ttlb_median,"
       "web_created_median,web_used_median\n";
  for (const auto& r : rs)
    for (const auto& run : r.runs) {
      o << r.cell.label() << ',' << to_string(r.cell.strategy) << ','
        << (r.cell.circuits ? std::to_string(*r.cell.circuits) : "") << ',' << run.seed << ','
        << (run.ok ? 1 : 0) << ',';
      if (run.ok)
        o << csv::fixed(run.metrics.web.ttfb.median, 6) << ',' << csv::fixed(run.metrics.web.ttlb.median, 6)
          << ',' << csv::fixed(run.metrics.bulk.ttlb.median, 6) << ','
          << csv::fixed(run.metrics.web_created_median, 1) << ',' << csv::fixed(run.metrics.web_used_median, 1);
      else
        o << ",,,,";
      o << '\n';
    }
}

// --- artifact discovery

struct RunArtifact {
  fs::path dir;
  json manifest;
  std::string label;
};

struct ArtifactScan {
  std::vector<RunArtifact> complete;
  std::vector<std::pair<fs::path, std::string>> skipped;  // dir, reason
};

/// Finds run directories (those holding manifest.json or a FAILED marker)
/// under each input path, in sorted order.
inline ArtifactScan scan_artifacts(const std::vector<std::string>& inputs) {
  std::set<fs::path> dirs;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (!fs::exists(p)) throw ConfigError("no such artifact path: " + in);
    auto consider = [&](const fs::path& d) {
      if (fs::exists(d / "manifest.json") || fs::exists(d / kFailedMarker)) dirs.insert(d);
    };
    if (!fs::is_directory(p)) throw ConfigError("not a directory: " + in);
    consider(p);
    for (const auto& e : fs::recursive_directory_iterator(p))
      if (e.is_directory()) consider(e.path());
  }
  ArtifactScan scan;
  for (const auto& d : dirs) {
    if (fs::exists(d / kFailedMarker)) {
      scan.skipped.push_back({d, "failure marker present"});
      continue;
    }
    bool missing = false;
    for (const char* f : {"manifest.json", "streams.csv", "metrics.json", "topology.json"})
      if (!fs::exists(d / f)) {
        scan.skipped.push_back({d, std::string("missing ") + f});
        missing = true;
        break;
      }
    if (missing) continue;
    RunArtifact a;
    a.dir = d;
    try {
      std::ifstream in(d / "manifest.json");
      a.manifest = json::parse(in);
      a.label = a.manifest.at("label").get<std::string>();
    } catch (const std::exception& e) {
      scan.skipped.push_back({d, std::string("unreadable manifest: ") + e.what()});
      continue;
    }
    scan.complete.push_back(std::move(a));
  }
  return scan;
}

inline std::vector<StreamRecord> load_streams(const fs::path& dir) {
  return read_streams_csv(csv::read_table((dir / "streams.csv").string()));
}

// --- adversary runs

struct AdversaryOutcome {
  RunArtifact run;
  std::vector<CompromiseResult> relay;  // one per marking run
  CompromiseResult network;
  std::vector<Marking> markings;
};

inline AsTopology as_topology_for(const ExperimentConfig& cfg, const Topology& topo) {
  if (cfg.as.file) {
    AsTopology as;
    try {
      as = load_as_topology(*cfg.as.file);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    as.validate_hosts(topo);
    return as;
  }
  RngStream rng(cfg.as.seed, "as-topology");
  return generate_as_topology(cfg.as.generator, topo, rng);
}

/// Offline compromise analysis of one completed run. Writes
/// relay_compromise.csv, network_compromise.csv, as_topology.json and
/// adversary.json next to the run's streams.
inline AdversaryOutcome analyse_run(const ExperimentConfig& cfg, const RunArtifact& run) {
  AdversaryOutcome out;
  out.run = run;
  const Topology topo = load_topology((run.dir / "topology.json").string());
  const auto streams = load_streams(run.dir);
  for (int k = 0; k < cfg.adversary.runs; ++k) {
    out.markings.push_back(mark_malicious_run(topo.relays, cfg.adversary, k));
    out.relay.push_back(relay_compromise_rate(streams, out.markings.back()));
  }
  const AsTopology as = as_topology_for(cfg, topo);
  save_as_topology(as, (run.dir / "as_topology.json").string());
  out.network = network_compromise_rate(streams, as);

  detail::write_with(run.dir / "relay_compromise.csv",
                     [&](std::ostream& o) { write_compromise_csv(o, out.relay, "relay"); });
  detail::write_with(run.dir / "network_compromise.csv", [&](std::ostream& o) {
    write_compromise_csv(o, std::span<const CompromiseResult>(&out.network, 1), "network");
  });
  json markings = json::array();
  for (std::size_t k = 0; k < out.markings.size(); ++k) {
    const auto& m = out.markings[k];
    markings.push_back({{"run", k},
                        {"guards", m.guards},
                        {"exits", m.exits},
                        {"guard_share", m.guard_share()},
                        {"exit_share", m.exit_share()},
                        {"streams", out.relay[k].streams},
                        {"compromised", out.relay[k].compromised},
                        {"rate", out.relay[k].rate()}});
  }
  const auto five = [](const stats::FiveNumber& f) {
    return json{{"min", f.min}, {"q1", f.q1}, {"median", f.median}, {"q3", f.q3}, {"max", f.max}};
  };
  json summary{{"label", run.label},
               {"relay", {{"markings", markings}, {"client_rates", five(pooled_client_summary(out.relay))}}},
               {"network",
                {{"streams", out.network.streams},
                 {"compromised", out.network.compromised},
                 {"rate", out.network.rate()},
                 {"client_rates", five(pooled_client_summary(std::span<const CompromiseResult>(&out.network, 1)))}}}};
  detail::write_text(run.dir / "adversary.json", summary.dump(1) + "\n");
  return out;
}

// --- reports

struct ReportSeries {
  std::string label;
  std::size_t runs = 0;
  std::vector<double> web_ttfb, web_ttlb, bulk_ttfb, bulk_ttlb;
  std::vector<double> created, used;  // per web client per run
  std::vector<double> relay_rates, network_rates;  // per client, pooled over runs
};

struct Report {
  std::vector<ReportSeries> series;
  std::vector<std::pair<fs::path, std::string>> skipped;
  std::string text;
};

inline void write_cdf(const fs::path& p, std::span<const double> values) {
  detail::write_with(p, [&](std::ostream& o) {
    o << "value fraction\n";
    for (const auto& [v, f] : stats::ecdf(values)) o << csv::fixed(v, 6) << ' ' << csv::fixed(f, 6) << '\n';
  });
}

namespace detail {

inline std::vector<double> column_rates(const fs::path& p) {
  std::vector<double> v;
  if (!fs::exists(p)) return v;
  const auto t = csv::read_table(p.string());
  const auto c = t.column("rate");
  for (const auto& row : t.rows) v.push_back(csv::parse_number<double>(row[c]));
  return v;
}

inline std::string five_text(std::span<const double> v, int prec) {
  if (v.empty()) return "-";
  const auto f = stats::five_number(v);
  return csv::fixed(f.min, prec) + " / " + csv::fixed(f.q1, prec) + " / " + csv::fixed(f.median, prec) + " / " +
         csv::fixed(f.q3, prec) + " / " + csv::fixed(f.max, prec);
}

}  // namespace detail

/// Pools every complete run by label and writes one CDF file per metric and
/// label into `out_dir`, plus summary.txt.
inline Report make_report(const std::vector<std::string>& inputs, const fs::path& out_dir) {
  if (inputs.empty()) throw ConfigError("report: no artifact directories given");
  auto scan = scan_artifacts(inputs);
  Report rep;
  rep.skipped = scan.skipped;
  if (scan.complete.empty()) throw ConfigError("report: no complete runs found");
  std::map<std::string, ReportSeries> by_label;
  for (const auto& a : scan.complete) {
    auto& s = by_label[a.label];
    s.label = a.label;
    ++s.runs;
    const SimTime lo = SimTime::from_seconds(a.manifest.at("warmup_s").get<double>());
    const SimTime hi = SimTime::from_seconds(a.manifest.at("duration_s").get<double>());
    for (const auto& r : load_streams(a.dir)) {
      if (r.requested_at < lo || r.requested_at > hi || !r.completed()) continue;
      const bool web = r.client_kind == ClientKind::web;
      (web ? s.web_ttfb : s.bulk_ttfb).push_back(*ttfb(r));
      (web ? s.web_ttlb : s.bulk_ttlb).push_back(*ttlb(r));
    }
    std::ifstream in(a.dir / "metrics.json");
    const json m = json::parse(in);
    for (const auto& c : m.at("clients"))
      if (c.at("kind") == "web") {
        s.created.push_back(c.at("created").get<double>());
        s.used.push_back(c.at("used").get<double>());
      }
    for (double r : detail::column_rates(a.dir / "relay_compromise.csv")) s.relay_rates.push_back(r);
    for (double r : detail::column_rates(a.dir / "network_compromise.csv")) s.network_rates.push_back(r);
  }

  fs::create_directories(out_dir);
  std::ostringstream o;
  o << "runs: " << scan.complete.size() << ", skipped: " << scan.skipped.size() << '\n';
  for (const auto& [d, why] : scan.skipped) o << "  skipped " << d.string() << ": " << why << '\n';
  o << "five-number summaries are min / q1 / median / q3 / max\n";
  for (auto& [label, s] : by_label) {
    const std::pair<const char*, const std::vector<double>*> files[] = {
        {"web_ttfb", &s.web_ttfb},       {"web_ttlb", &s.web_ttlb},         {"bulk_ttfb", &s.bulk_ttfb},
        {"bulk_ttlb", &s.bulk_ttlb},     {"circuits_created", &s.created}, {"circuits_used", &s.used},
        {"relay_compromise", &s.relay_rates}, {"network_compromise", &s.network_rates}};
    for (const auto& [name, values] : files)
      if (!values->empty()) write_cdf(out_dir / (label + "." + name + ".cdf"), *values);
    o << '\n' << label << " (" << s.runs << " runs)\n";
    o << "  web ttfb s:          " << detail::five_text(s.web_ttfb, 3) << '\n';
    o << "  web ttlb s:          " << detail::five_text(s.web_ttlb, 3) << '\n';
    o << "  bulk ttlb s:         " << detail::five_text(s.bulk_ttlb, 3) << '\n';
    o << "  circuits created:    " << detail::five_text(s.created, 1) << '\n';
    o << "  circuits used:       " << detail::five_text(s.used, 1) << '\n';
    if (!s.relay_rates.empty()) o << "  relay compromise:    " << detail::five_text(s.relay_rates, 4) << '\n';
    if (!s.network_rates.empty()) o << "  network compromise:  " << detail::five_text(s.network_rates, 4) << '\n';
    rep.series.push_back(std::move(s));
  }
  rep.text = o.str();
  detail::write_text(out_dir / "summary.txt", rep.text);
  return rep;
}

}  // namespace circsel
