// Acceptance gate: prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Usage: acceptance [work_dir]

#include <chrono>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

#include "../support/oracles.hpp"
#include "circsel/experiment.hpp"

using namespace circsel;

namespace {

// Pinned tolerances.
constexpr int kOracleSets = 10000;
constexpr int kFormulaCircuits = 1000;
constexpr double kGeoToleranceKm = 0.1;
constexpr double kToyTargetRate = 0.01;
constexpr double kToyTolerance = 0.003;
constexpr std::size_t kToyMinStreams = 10000;
constexpr int kSeeds = 10;
constexpr int kOrderingSeedsRequired = 8;
constexpr double kRttVsCarMinGap = 0.05;
constexpr double kPairedNoiseSe = 2.0;
constexpr int kAsTopologies = 100;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 3) { return csv::fixed(v, prec); }

std::optional<double> maybe(RngStream& rng, double lo, double hi, double p_missing) {
  if (rng.bernoulli(p_missing)) return std::nullopt;
  // Coarse grid so ties are common.
  return std::round(rng.uniform(lo, hi) / 10.0) * 10.0;
}

// --- 1

Verdict strategy_oracle() {
  RngStream gen(1, "acceptance/sets");
  RngStream lib(1, "acceptance/car"), ref(1, "acceptance/car");
  std::size_t checks = 0, mismatches = 0;
  for (int i = 0; i < kOracleSets; ++i) {
    const std::size_t n = 1 + gen.uniform_index(8);
    std::vector<CircuitScore> c;
    std::vector<CircuitId> ids;
    for (std::size_t k = 0; k < n; ++k) ids.push_back(static_cast<CircuitId>(1 + gen.uniform_index(1000)));
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (CircuitId id : ids) {
      const bool measured = !gen.bernoulli(0.15);
      c.push_back(CircuitScore{id, measured ? maybe(gen, 50, 300, 0) : std::nullopt,
                               measured ? maybe(gen, 0, 60, 0) : std::nullopt,
                               std::round(gen.uniform(0, 20000) / 500.0) * 500.0});
    }
    for (std::size_t k = c.size(); k > 1; --k) std::swap(c[k - 1], c[gen.uniform_index(k)]);
    for (auto s : kAllStrategies) {
      const CircuitId got = select(s, c, lib);
      const CircuitId want = s == StrategyId::car ? oracle::car(c, ref) : *oracle::select(s, c);
      ++checks;
      mismatches += got != want;
    }
  }
  return {mismatches == 0, std::to_string(checks - mismatches) + "/" + std::to_string(checks) +
                               " selections match over " + std::to_string(kOracleSets) + " sets"};
}

// --- 2

Verdict formulas() {
  RngStream rng(2, "acceptance/formulas");
  std::size_t bad_tc = 0, bad_mean = 0, bad_geo = 0;
  double worst_geo = 0;
  for (int i = 0; i < kFormulaCircuits; ++i) {
    Circuit c(static_cast<CircuitId>(i + 1), 0, RelayPath{0, 1, 2}, {80}, SimTime{});
    c.open(SimTime{});
    std::vector<double> log;
    const int n = 1 + static_cast<int>(rng.uniform_index(20));
    for (int k = 0; k < n; ++k) {
      log.push_back(rng.uniform(1, 3000));
      c.record_rtt({log.back(), SimTime{}, RttSource::idle_probe});
      for (const auto& e : c.rtt_window()) bad_tc += e.congestion_ms < 0.0;
    }
    const std::size_t k = std::min<std::size_t>(5, log.size());
    double rtt = 0, tc = 0;
    for (std::size_t j = log.size() - k; j < log.size(); ++j) {
      rtt += log[j];
      tc += log[j] - *std::min_element(log.begin(), log.begin() + static_cast<std::ptrdiff_t>(j) + 1);
    }
    bad_mean += *c.mean_rtt() != rtt / static_cast<double>(k);
    bad_mean += *c.congestion_time() != tc / static_cast<double>(k);

    Position p[5];
    for (auto& x : p) x = {rng.uniform(-90, 90), rng.uniform(-180, 180)};
    const bool with_dest = rng.bernoulli(0.5);
    double want = 0;
    for (int h = 0; h < (with_dest ? 4 : 3); ++h)
      want += oracle::haversine_km(p[h].lat_deg, p[h].lon_deg, p[h + 1].lat_deg, p[h + 1].lon_deg);
    const double got = geo_length_km(p[0], p[1], p[2], p[3], with_dest ? std::optional(p[4]) : std::nullopt);
    worst_geo = std::max(worst_geo, std::abs(got - want));
    bad_geo += std::abs(got - want) > kGeoToleranceKm;
  }
  return {bad_tc + bad_mean + bad_geo == 0,
          "negative T_c " + std::to_string(bad_tc) + ", mean mismatches " + std::to_string(bad_mean) +
              ", geo worst " + fmt(worst_geo, 6) + " km over " + std::to_string(kFormulaCircuits) + " circuits"};
}

// --- 3

Verdict pool_protocol() {
  std::vector<RelayDescriptor> rs;
  for (RelayId i = 0; i < 12; ++i) {
    RelayDescriptor r;
    r.relay_id = i;
    r.bandwidth_kibps = 100 + 25 * i;
    r.is_guard = i < 4;
    r.is_exit = i >= 8;
    if (r.is_exit) r.exit_policy = i == 11 ? std::set<Port>{443} : std::set<Port>{80, 443};
    rs.push_back(r);
  }
  RngStream rng(3, "acceptance/pool");
  std::size_t short_after_tick = 0, boundary = 0, dirty_candidates = 0, schedules = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(6));
    PoolConfig pc;
    pc.target_n = n;
    pc.reaping = rng.bernoulli(0.5);
    CircuitPool pool(pc);
    CircuitId next = 1;
    SimTime now{};
    std::map<CircuitId, SimTime> built;
    for (int step = 0; step < 150; ++step) {
      now = now + SimTime::from_us(static_cast<std::int64_t>(rng.uniform(0, 40e6)));
      if (rng.bernoulli(0.2)) pool.note_port(rng.bernoulli(0.5) ? 80 : 443, now);
      const auto dirtied = pool.mark_dirty(now);
      for (CircuitId id : dirtied)
        boundary += now - *pool.at(id).first_used_at() < pc.dirty_after;
      const auto reaped = pool.reap_unused(now);
      for (CircuitId id : reaped) boundary += now - built.at(id) < pc.reap_unused_after;
      // Anything still open must be inside both windows.
      for (const auto& [id, c] : pool.circuits()) {
        if (c.state() != CircuitState::open) continue;
        if (c.first_used_at() && now - *c.first_used_at() >= pc.dirty_after) ++boundary;
        if (pc.reaping && !c.first_used_at() && now - built.at(id) >= pc.reap_unused_after) ++boundary;
      }
      for (const auto& req : pool.replenish(rs, now, rng)) {
        Circuit& c = pool.add(Circuit(next, 0, req.path, rs[req.path.exit].exit_policy, now));
        built[next++] = now;
        if (rng.bernoulli(0.8)) c.open(now);  // some stay building
      }
      for (Port p : pool.remembered_ports(now)) short_after_tick += pool.clean_or_building(p) < n;
      // Attach a stream to a random candidate; never a dirty one.
      const Port port = rng.bernoulli(0.5) ? 80 : 443;
      const auto cand = pool.candidates(port);
      for (CircuitId id : cand) dirty_candidates += pool.at(id).state() != CircuitState::open;
      if (!cand.empty() && rng.bernoulli(0.4)) pool.at(cand[rng.uniform_index(cand.size())]).attach_stream(now);
      ++schedules;
    }
  }

  // Exact boundaries on a single circuit.
  PoolConfig pc;
  pc.target_n = 1;
  pc.reaping = true;
  CircuitPool a(pc);
  a.add(Circuit(1, 0, RelayPath{0, 4, 8}, {80}, SimTime{})).open(SimTime{});
  a.at(1).attach_stream(seconds(5));
  const bool dirty_exact = a.mark_dirty(seconds(605) - SimTime::from_us(1)).empty() && a.mark_dirty(seconds(605)).size() == 1;
  CircuitPool b(pc);
  b.add(Circuit(1, 0, RelayPath{0, 4, 8}, {80}, SimTime{})).open(seconds(7));
  const bool reap_exact = b.reap_unused(seconds(307) - SimTime::from_us(1)).empty() && b.reap_unused(seconds(307)).size() == 1;

  const bool ok = short_after_tick == 0 && boundary == 0 && dirty_candidates == 0 && dirty_exact && reap_exact;
  return {ok, std::to_string(schedules) + " steps: below N after tick " + std::to_string(short_after_tick) +
                  ", timer violations " + std::to_string(boundary) + ", dirty candidates " +
                  std::to_string(dirty_candidates) + ", exact 600 s/300 s boundaries " +
                  (dirty_exact && reap_exact ? "ok" : "wrong")};
}

// Simulation-level: no stream was ever attached to a dirty or unopened circuit.
Verdict no_dirty_attach(const std::vector<StreamRecord>& streams, const CircuitLog& log) {
  std::map<CircuitId, SimTime> opened, dirtied;
  for (const auto& r : log.rows()) {
    if (r.event == "open") opened[r.circuit_id] = r.time;
    if ((r.event == "dirty" || r.event == "abandoned") && !dirtied.contains(r.circuit_id))
      dirtied[r.circuit_id] = r.time;
  }
  std::size_t bad = 0, attached = 0;
  for (const auto& s : streams) {
    if (!s.circuit_id) continue;
    ++attached;
    const auto o = opened.find(*s.circuit_id);
    if (o == opened.end() || o->second > *s.circuit_attached_at) ++bad;
    const auto d = dirtied.find(*s.circuit_id);
    if (d != dirtied.end() && d->second <= *s.circuit_attached_at) ++bad;
  }
  return {bad == 0, std::to_string(attached) + " simulated attachments, " + std::to_string(bad) + " to unusable circuits"};
}

// --- 4

Verdict toy_adversary() {
  Topology t;
  const auto regions = default_regions();
  RngStream place(4, "acceptance/toy");
  for (RelayId i = 0; i < 30; ++i) {
    RelayDescriptor r;
    r.relay_id = i;
    r.bandwidth_kibps = 1000;
    r.is_guard = i < 10;
    r.is_exit = i >= 20;
    if (r.is_exit) r.exit_policy = {80, 443};
    r.position = regions[i % regions.size()].center;
    t.relays.push_back(r);
  }
  const int clients = 100;
  for (int i = 0; i < clients; ++i) {
    EndpointDescriptor e;
    e.endpoint_id = static_cast<std::uint32_t>(i);
    e.position = regions[place.uniform_index(regions.size())].center;
    e.bandwidth_kibps = 2048;
    t.clients.push_back(e);
  }
  for (int i = 0; i < 10; ++i) {
    EndpointDescriptor e;
    e.endpoint_id = static_cast<std::uint32_t>(i);
    e.kind = EndpointKind::server;
    e.position = regions[place.uniform_index(regions.size())].center;
    e.bandwidth_kibps = 10240;
    t.servers.push_back(e);
  }
  SimulationConfig sc;
  sc.duration = seconds(1800);
  sc.seed = 4;
  Simulation sim(t, std::vector<ClientKind>(clients, ClientKind::web), sc);
  const auto result = sim.run();

  const int runs = 200;
  double sum = 0;
  std::size_t routed = 0, brute_mismatch = 0;
  for (int run = 0; run < runs; ++run) {
    const auto m = mark_malicious_run(t.relays, AdversaryConfig{}, run);
    const auto r = relay_compromise_rate(result.streams, m);
    std::size_t brute = 0;
    routed = 0;
    for (const auto& s : result.streams) {
      if (!s.path) continue;
      ++routed;
      bool g = false, e = false;
      for (RelayId x : m.relays) {
        g |= x == s.path->guard;
        e |= x == s.path->exit;
      }
      brute += g && e;
    }
    brute_mismatch += brute != r.compromised;
    sum += r.rate();
  }
  const double mean = sum / runs;
  const bool ok = routed >= kToyMinStreams && brute_mismatch == 0 && std::abs(mean - kToyTargetRate) <= kToyTolerance;
  return {ok, "mean rate " + fmt(mean * 100, 3) + "% over " + std::to_string(runs) + " markings of " +
                  std::to_string(routed) + " streams (target 1.0% +- 0.3%), brute-force mismatches " +
                  std::to_string(brute_mismatch)};
}

// --- 5, 6, 7

struct DeskRuns {
  ExperimentConfig cfg;
  std::vector<CellResult> cells;
  std::vector<SweepCell> layout;
  const CellResult& get(StrategyId s, std::optional<int> n = {}) const {
    for (const auto& c : cells)
      if (c.cell.strategy == s && c.cell.circuits == n) return c;
    throw std::logic_error("missing cell");
  }
};

DeskRuns desk_runs(const fs::path& work) {
  DeskRuns d;
  d.cfg = ExperimentConfig{};  // desk scale
  d.cfg.seeds.clear();
  for (int s = 1; s <= kSeeds; ++s) d.cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  d.cfg.output_dir = (work / "desk").string();
  d.layout = sweep_cells({StrategyId::vanilla, StrategyId::car, StrategyId::rtt_only}, {3, 4, 5});
  const auto t0 = std::chrono::steady_clock::now();
  d.cells = run_sweep(d.cfg, d.layout);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "desk sweep: " << d.layout.size() << " cells x " << kSeeds << " seeds in " << fmt(secs, 0)
            << " s (" << fmt(secs / kSeeds, 0) << " s per seed)\n";
  return d;
}

double ttfb_of(const CellResult& c, std::size_t seed_idx) { return c.runs[seed_idx].metrics.web.ttfb.median; }

Verdict performance(const DeskRuns& d) {
  for (const auto& c : d.cells)
    if (!c.ok()) return {false, c.cell.label() + " failed: " + (c.errors.empty() ? "" : c.errors.front())};
  const auto &van = d.get(StrategyId::vanilla), &car = d.get(StrategyId::car),
             &r3 = d.get(StrategyId::rtt_only, 3), &r5 = d.get(StrategyId::rtt_only, 5);
  int ordered = 0;
  std::ostringstream per;
  for (std::size_t i = 0; i < d.cfg.seeds.size(); ++i) {
    const double v = ttfb_of(van, i), c = ttfb_of(car, i), a = ttfb_of(r3, i), b = ttfb_of(r5, i);
    const bool ok = b <= a && a < c && c < v;
    ordered += ok;
    per << "    seed " << d.cfg.seeds[i] << ": vanilla " << fmt(v) << " car " << fmt(c) << " rtt3 " << fmt(a)
        << " rtt5 " << fmt(b) << (ok ? "" : "  (order broken)") << '\n';
  }
  const double gap = -delta_percent(r3.ttfb(), car.ttfb()) / 100.0;
  const bool pass = ordered >= kOrderingSeedsRequired && gap >= kRttVsCarMinGap;
  std::cout << per.str();
  return {pass, "ordering rtt5 <= rtt3 < car < vanilla in " + std::to_string(ordered) + "/" +
                    std::to_string(d.cfg.seeds.size()) + " seeds; median TTFB rtt3 " + fmt(r3.ttfb()) + " s vs car " +
                    fmt(car.ttfb()) + " s (" + fmt(gap * 100, 1) + "% lower, need >= 5%)"};
}

Verdict circuit_counts(const DeskRuns& d) {
  double created[3], used[3];
  for (int n = 3; n <= 5; ++n) {
    const auto& c = d.get(StrategyId::rtt_only, n);
    if (!c.ok()) return {false, c.cell.label() + " failed"};
    created[n - 3] = c.created();
    used[n - 3] = c.used();
  }
  const bool inc = created[0] < created[1] && created[1] < created[2];
  const bool used_lt = used[0] < created[0] && used[1] < created[1] && used[2] < created[2];
  const auto& van = d.get(StrategyId::vanilla);
  return {inc && used_lt, "rtt_only created " + fmt(created[0], 1) + " / " + fmt(created[1], 1) + " / " +
                              fmt(created[2], 1) + ", used " + fmt(used[0], 1) + " / " + fmt(used[1], 1) + " / " +
                              fmt(used[2], 1) + " at N=3/4/5 (vanilla used " + fmt(van.used(), 1) + ")"};
}

Verdict compromise_direction(const DeskRuns& d) {
  // Marking run k is applied to seed k's topology, identically for every N.
  std::map<int, std::vector<CompromiseResult>> by_n;
  std::map<int, std::vector<double>> run_medians, run_rates;
  for (int n = 3; n <= 5; ++n) {
    const auto& cell = d.get(StrategyId::rtt_only, n);
    for (std::size_t k = 0; k < d.cfg.seeds.size(); ++k) {
      const auto& run = cell.runs[k];
      if (!run.ok) return {false, cell.cell.label() + " seed failed"};
      const Topology topo = make_topology(d.cfg, run.seed);
      const auto marking = mark_malicious_run(topo.relays, d.cfg.adversary, static_cast<int>(k));
      std::vector<StreamRecord> window;
      for (auto& s : load_streams(run.dir))
        if (s.requested_at >= d.cfg.warmup()) window.push_back(std::move(s));
      const auto r = relay_compromise_rate(window, marking);
      by_n[n].push_back(r);
      run_medians[n].push_back(stats::median(r.client_rates()));
      run_rates[n].push_back(r.rate());
    }
  }
  bool ok = true;
  std::ostringstream o;
  for (int n = 3; n <= 5; ++n) {
    const auto f = pooled_client_summary(by_n[n]);
    o << "N=" << n << " per-client median " << fmt(f.median * 100, 2) << "% (q3 " << fmt(f.q3 * 100, 2)
      << "%), stream rate " << fmt(stats::mean(run_rates[n]) * 100, 2) << "%; ";
  }
  for (int n = 3; n <= 4; ++n) {
    const double step = pooled_client_summary(by_n[n + 1]).median - pooled_client_summary(by_n[n]).median;
    std::vector<double> diffs;
    for (std::size_t k = 0; k < run_medians[n].size(); ++k) diffs.push_back(run_medians[n + 1][k] - run_medians[n][k]);
    const double se = stats::stddev(diffs) / std::sqrt(static_cast<double>(diffs.size()));
    const bool step_ok = step >= -kPairedNoiseSe * se;
    ok &= step_ok;
    o << "step " << n << "->" << n + 1 << " " << fmt(step * 100, 2) << " pts vs -2SE " << fmt(-2 * se * 100, 2)
      << (step_ok ? " ok" : " DECREASE") << (n == 3 ? "; " : "");
  }
  return {ok, o.str()};
}

// --- 8

Verdict as_oracle() {
  RngStream rng(8, "acceptance/as");
  std::size_t streams = 0, mismatches = 0, symmetric_breaks = 0, asym_routes = 0;
  for (int t = 0; t < kAsTopologies; ++t) {
    AsGeneratorParams p;
    p.ases = 10 + static_cast<int>(rng.uniform_index(51));  // <= 60
    p.tier1 = 2 + static_cast<int>(rng.uniform_index(3));
    p.peer_probability = rng.uniform(0.0, 0.1);
    p.asymmetric_weights = t % 2 == 0;
    p.routing = t % 4 < 2 ? AsRouting::shortest_path : AsRouting::valley_free;
    p.symmetric = t % 8 >= 4;
    TopologyParams tp;
    tp.clients = 15;
    tp.servers = 6;
    RngStream trng(static_cast<std::uint64_t>(t), "topology");
    const auto topo = generate_topology(tp, trng);
    const auto as = generate_as_topology(p, topo, rng);

    std::map<std::pair<AsId, AsId>, std::vector<AsId>> memo;
    auto want_route = [&](AsId a, AsId b) -> const std::vector<AsId>& {
      auto it = memo.find({a, b});
      if (it == memo.end())
        it = memo.emplace(std::pair{a, b}, *oracle::route_via(as.edges(), p.routing, p.symmetric, a, b)).first;
      return it->second;
    };
    std::vector<StreamRecord> ss;
    for (int i = 0; i < 60; ++i) {
      StreamRecord s;
      s.client_id = static_cast<ClientId>(rng.uniform_index(tp.clients));
      s.server_id = static_cast<std::uint32_t>(rng.uniform_index(tp.servers));
      s.path = select_path(topo.relays, 80, rng);
      ss.push_back(s);
    }
    std::size_t want = 0;
    for (const auto& s : ss) {
      const AsId c = as.client_as[s.client_id], g = as.relay_as[s.path->guard], e = as.relay_as[s.path->exit],
                 d = as.server_as[s.server_id];
      std::set<AsId> entry, exit;
      for (AsId x : want_route(c, g)) entry.insert(x);
      for (AsId x : want_route(g, c)) entry.insert(x);
      for (AsId x : want_route(e, d)) exit.insert(x);
      for (AsId x : want_route(d, e)) exit.insert(x);
      bool hit = false;
      for (AsId x : entry)
        for (AsId y : exit) hit |= x == y;
      want += hit;
      if (!p.symmetric) {
        auto back = want_route(g, c);
        std::reverse(back.begin(), back.end());
        asym_routes += back != want_route(c, g);
      }
    }
    const auto got = network_compromise_rate(ss, as);
    mismatches += got.compromised != want;
    streams += ss.size();
    if (p.symmetric) {
      for (AsId a : as.ases())
        for (AsId b : as.ases()) {
          auto back = as.route(b, a);
          std::reverse(back.begin(), back.end());
          symmetric_breaks += back != as.route(a, b);
        }
    }
  }
  return {mismatches == 0 && symmetric_breaks == 0 && asym_routes > 0,
          std::to_string(kAsTopologies) + " topologies, " + std::to_string(streams) + " streams, count mismatches " +
              std::to_string(mismatches) + ", symmetric-mode breaks " + std::to_string(symmetric_breaks) +
              ", asymmetric entry routes seen " + std::to_string(asym_routes)};
}

// --- 9

Verdict determinism(const DeskRuns& d, const fs::path& work) {
  const auto& cell = d.get(StrategyId::rtt_only, 3);
  if (!cell.ok()) return {false, "reference run missing"};
  ExperimentConfig cfg = d.cfg;
  cfg.sim.strategy = StrategyId::rtt_only;
  cfg.sim.pool.target_n = 3;
  const auto seed = d.cfg.seeds.front();
  const auto again = run_seed(cfg, seed, work / "rerun");
  if (!again.ok) return {false, again.error};
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  };
  const fs::path first = cell.runs.front().dir;
  bool ok = true;
  std::string files;
  for (const char* f : {"streams.csv", "metrics.json", "circuits.csv"}) {
    const bool same = slurp(first / f) == slurp(work / "rerun" / f) && !slurp(first / f).empty();
    ok &= same;
    files += std::string(f) + (same ? " identical, " : " DIFFER, ");
  }
  return {ok, files + "desk rerun of rtt_only-n3 seed " + std::to_string(seed)};
}

void report(int id, const std::string& name, const Verdict& v, int& failures) {
  std::cout << "criterion " << id << " [" << name << "]: " << (v.pass ? "PASS" : "FAIL") << ": " << v.detail << '\n'
            << std::flush;
  failures += !v.pass;
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::path("acceptance-runs");
  fs::create_directories(work);
  int failures = 0;
  report(1, "strategy oracle", strategy_oracle(), failures);
  report(2, "formulas", formulas(), failures);
  {
    auto v = pool_protocol();
    // Attachment check on a short simulated run with dirtying and reaping.
    ExperimentConfig cfg;
    cfg.sim.strategy = StrategyId::rtt_only;
    cfg.sim.pool.target_n = 4;
    cfg.sim.duration = seconds(1500);
    cfg.web_clients = 60;
    cfg.bulk_clients = 5;
    cfg.topology.clients = 65;
    Simulation sim(make_topology(cfg, 3), client_kinds(cfg), cfg.sim);
    const auto r = sim.run();
    const auto att = no_dirty_attach(r.streams, r.circuit_log);
    v.pass &= att.pass;
    v.detail += "; " + att.detail;
    report(3, "pool protocol", v, failures);
  }
  report(4, "relay adversary toy network", toy_adversary(), failures);
  report(8, "AS oracle", as_oracle(), failures);
  const auto desk = desk_runs(work);
  report(5, "TTFB direction", performance(desk), failures);
  report(6, "circuit counts", circuit_counts(desk), failures);
  report(7, "compromise direction", compromise_direction(desk), failures);
  report(9, "determinism", determinism(desk, work), failures);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
  return failures == 0 ? 0 : 1;
}
