// circsel: run, sweep, analyse and report circuit-selection experiments.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "circsel/experiment.hpp"

namespace {

using namespace circsel;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

struct CommonOptions {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::optional<double> duration;
  std::string out;
  std::optional<int> jobs;
};

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("-c,--config", o.config, "Experiment config file (JSON); built-in defaults if omitted");
  app->add_option("--seed,--seeds", o.seeds, "Simulation seed(s)")->delimiter(',');
  app->add_option("--duration", o.duration, "Simulated seconds");
  app->add_option("-o,--out", o.out, "Output directory");
  app->add_option("-j,--jobs", o.jobs, "Parallel runs (0: one per hardware thread)");
}

ExperimentConfig load(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  if (!o.seeds.empty()) cfg.seeds = o.seeds;
  if (o.duration) {
    if (!(*o.duration > 0.0)) throw ConfigError("duration must be > 0");
    cfg.sim.duration = SimTime::from_seconds(*o.duration);
  }
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.jobs) cfg.jobs = *o.jobs;
  cfg.validate();
  return cfg;
}

StrategyId strategy_arg(const std::string& s) {
  if (auto id = parse_strategy(s)) return *id;
  throw ConfigError("unknown strategy: " + s);
}

// "unchanged" keeps the default pool size; anything else must be N >= 1.
std::optional<int> circuits_arg(const std::string& s) {
  if (s == "unchanged") return std::nullopt;
  try {
    std::size_t used = 0;
    const int n = std::stoi(s, &used);
    if (used == s.size() && n >= 1) return n;
  } catch (const std::exception&) {
  }
  throw ConfigError("--circuits expects a positive integer or 'unchanged', got: " + s);
}

void save_config_copy(const ExperimentConfig& cfg) {
  fs::create_directories(cfg.output_dir);
  std::ofstream(fs::path(cfg.output_dir) / "config.json") << config_to_json(cfg).dump(1) << '\n';
}

int cmd_run(const CommonOptions& o, const std::string& strategy, const std::string& circuits) {
  ExperimentConfig cfg = load(o);
  if (!strategy.empty()) cfg.sim.strategy = strategy_arg(strategy);
  if (!circuits.empty()) cfg.sim.pool.target_n = circuits_arg(circuits);
  cfg.validate();
  save_config_copy(cfg);
  int rc = kOk;
  for (const auto& r : run_experiment(cfg)) {
    if (!r.ok) {
      std::cerr << "seed " << r.seed << " failed: " << r.error << '\n';
      rc = kRuntimeError;
      continue;
    }
    std::cout << "seed " << r.seed << ": web ttfb median " << csv::fixed(r.metrics.web.ttfb.median, 3)
              << " s, ttlb median " << csv::fixed(r.metrics.web.ttlb.median, 3) << " s, circuits created/used "
              << csv::fixed(r.metrics.web_created_median, 1) << '/' << csv::fixed(r.metrics.web_used_median, 1)
              << "  -> " << r.dir.string() << '\n';
  }
  return rc;
}

int cmd_sweep(const CommonOptions& o, const std::vector<std::string>& strategies,
              const std::vector<std::string>& circuits) {
  ExperimentConfig cfg = load(o);
  std::vector<StrategyId> ss;
  for (const auto& s : strategies) ss.push_back(strategy_arg(s));
  if (ss.empty()) ss = {StrategyId::vanilla, StrategyId::car, StrategyId::rtt_only};
  std::vector<std::optional<int>> ns;
  for (const auto& c : circuits) ns.push_back(circuits_arg(c));
  if (ns.empty()) ns = {3, 5};
  save_config_copy(cfg);
  const auto results = run_sweep(cfg, sweep_cells(ss, ns));
  const std::string table = sweep_table(results);
  std::cout << table;
  const fs::path out(cfg.output_dir);
  std::ofstream(out / "sweep.txt") << table;
  std::ofstream csv_out(out / "sweep.csv");
  write_sweep_csv(csv_out, results);
  for (const auto& r : results)
    for (const auto& e : r.errors) std::cerr << r.cell.label() << ' ' << e << '\n';
  for (const auto& r : results)
    if (!r.ok()) return kRuntimeError;
  return kOk;
}

int cmd_adversary(const CommonOptions& o, std::vector<std::string> dirs) {
  ExperimentConfig cfg = load(o);
  if (dirs.empty()) dirs.push_back(cfg.output_dir);
  const auto scan = scan_artifacts(dirs);
  for (const auto& [d, why] : scan.skipped) std::cerr << "skipped " << d.string() << ": " << why << '\n';
  if (scan.complete.empty()) throw ConfigError("adversary: no complete runs found");
  for (const auto& run : scan.complete) {
    const auto a = analyse_run(cfg, run);
    std::vector<double> run_rates;
    for (const auto& r : a.relay) run_rates.push_back(r.rate());
    std::cout << run.dir.string() << " [" << run.label << "]: relay compromise per marking median "
              << csv::fixed(stats::median(run_rates) * 100.0, 3) << "%, per-client median "
              << csv::fixed(pooled_client_summary(a.relay).median * 100.0, 3) << "%; network compromise "
              << csv::fixed(a.network.rate() * 100.0, 2) << "%\n";
    double max_guard = 0.0, max_exit = 0.0;
    for (const auto& m : a.markings) {
      max_guard = std::max(max_guard, m.guard_share());
      max_exit = std::max(max_exit, m.exit_share());
    }
    if (max_guard > cfg.adversary.guard_bandwidth_fraction + 1e-9 ||
        max_exit > cfg.adversary.exit_bandwidth_fraction + 1e-9)
      std::cerr << "  marking overshoot: up to " << csv::fixed(max_guard * 100.0, 1) << "% of guard and "
                << csv::fixed(max_exit * 100.0, 1) << "% of exit bandwidth marked (see adversary.json)\n";
  }
  return kOk;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
  const auto rep = make_report(dirs, out.empty() ? fs::path("report") : fs::path(out));
  std::cout << rep.text;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Circuit-selection simulator and experiment harness"};
  app.require_subcommand(1);

  CommonOptions run_opts, sweep_opts, adv_opts;
  std::string run_strategy, run_circuits;
  auto* run = app.add_subcommand("run", "Simulate one configuration for each seed");
  add_common(run, run_opts);
  run->add_option("-s,--strategy", run_strategy, "Circuit-selection strategy");
  run->add_option("-n,--circuits", run_circuits, "Pool size N, or 'unchanged'");

  std::vector<std::string> sweep_strategies, sweep_circuits;
  auto* sweep = app.add_subcommand("sweep", "Run a strategy x N grid and compare medians");
  add_common(sweep, sweep_opts);
  sweep->add_option("-s,--strategy,--strategies", sweep_strategies, "Strategies")->delimiter(',');
  sweep->add_option("-n,--circuits", sweep_circuits, "Pool sizes (integers or 'unchanged')")->delimiter(',');

  std::vector<std::string> adv_dirs;
  auto* adv = app.add_subcommand("adversary", "Relay- and AS-level compromise analysis of finished runs");
  add_common(adv, adv_opts);
  adv->add_option("dirs", adv_dirs, "Run directories (default: the configured output directory)");

  std::vector<std::string> report_dirs;
  std::string report_out;
  auto* rep = app.add_subcommand("report", "Summaries and CDF files from finished runs");
  rep->add_option("dirs", report_dirs, "Artifact directories")->required();
  rep->add_option("-o,--out", report_out, "Report directory (default: report)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts, run_strategy, run_circuits);
    if (*sweep) return cmd_sweep(sweep_opts, sweep_strategies, sweep_circuits);
    if (*adv) return cmd_adversary(adv_opts, adv_dirs);
    if (*rep) return cmd_report(report_dirs, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
