#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "whmc/analysis.hpp"
#include "whmc/config.hpp"
#include "whmc/estimation.hpp"
#include "whmc/io.hpp"

namespace fs = std::filesystem;
using whmc::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitUnstable = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> mc_budget;
  std::optional<double> tail_eps;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool need_config = true) {
  auto* o = cmd->add_option("--config", c.config, "scenario config file (JSON)");
  if (need_config) o->required();
  cmd->add_option("--seed", c.seed, "simulation master seed");
  cmd->add_option("--mc-budget", c.mc_budget, "IR-HARQ Monte Carlo samples per attempt count");
  cmd->add_option("--tail-eps", c.tail_eps, "truncation tail for the cycle distributions");
  cmd->add_option("--out", c.out, "output directory");
}

json read_json(const std::string& path) {
  try {
    return json::parse(whmc::io::read_file(path), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw whmc::ConfigError(path + ": " + e.what());
  } catch (const whmc::DataError& e) {
    throw whmc::ConfigError(e.what());
  }
}

// Flag overrides go into the JSON so that validation and the config hash see them.
whmc::ScenarioConfig load(const Common& c) {
  json j = read_json(c.config);
  if (!j.is_object()) throw whmc::ConfigError(c.config + ": expected a JSON object");
  if (c.seed) j["simulation"]["seed"] = *c.seed;
  if (c.mc_budget) j["analysis"]["mc_budget"] = *c.mc_budget;
  if (c.tail_eps) j["analysis"]["tail_eps"] = *c.tail_eps;
  return whmc::parse_config(j);
}

fs::path out_dir(const Common& c, const whmc::ScenarioConfig& cfg) { return c.out.empty() ? fs::path(cfg.out_dir) : fs::path(c.out); }

int cmd_check(const Common& c, const std::string& regime, const std::string& report) {
  auto cfg = load(c);
  if (!regime.empty()) cfg.analysis.regime = whmc::parse_regime(regime);
  whmc::Analysis a(cfg);
  const auto v = a.verdict(cfg.analysis.regime);
  const auto j = whmc::verdict_json(v, a);
  if (report == "json") std::cout << j.dump(2) << "\n";
  else std::cout << whmc::verdict_text(v, a);
  if (!c.out.empty()) whmc::io::atomic_write(fs::path(c.out) / "check.json", j.dump(2) + "\n");
  return v.stable ? kExitOk : kExitUnstable;
}

int cmd_region(const Common& c, const std::string& pair) {
  auto cfg = load(c);
  const std::string p = pair.empty() ? cfg.analysis.grid.pair : pair;
  whmc::Analysis a(cfg);
  const auto r = whmc::region(a, p, cfg.analysis.grid);
  const auto dir = out_dir(c, cfg);
  const std::string tag = std::string(whmc::to_string(r.gx)) + "_" + whmc::to_string(r.gy);
  whmc::io::atomic_write(dir / ("boundary_" + tag + ".csv"), whmc::boundary_csv(r));
  whmc::io::atomic_write(dir / ("region_" + tag + ".csv"), whmc::raster_csv(r));
  whmc::io::atomic_write(dir / ("region_" + tag + ".json"), r.summary.dump(2) + "\n");
  std::cout << r.summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_simulate(const Common& c, std::optional<std::uint64_t> oracle_cycles) {
  auto cfg = load(c);
  const auto dir = out_dir(c, cfg);
  const auto f = whmc::compare_regimes(cfg);
  const std::string csv = whmc::regime_comparison_csv(f);
  whmc::io::atomic_write(dir / "cost.csv", csv);
  for (auto r : {whmc::Regime::collab, whmc::Regime::machine_only, whmc::Regime::human_only})
    whmc::io::atomic_write(dir / (std::string("trace_") + whmc::to_string(r) + ".ndjson"), whmc::trace_ndjson(cfg, r));
  json s = whmc::regime_comparison_json(f);
  s["config_hash"] = cfg.hash;
  s["cost_csv_fnv1a64"] = whmc::io::hex64(whmc::fnv1a64(csv));
  const std::uint64_t n = oracle_cycles.value_or(cfg.analysis.oracle_cycles);
  if (n > 0) {
    whmc::Analysis a(cfg);
    const auto o = whmc::cycle_oracle(a, n, cfg.sim.seed);
    whmc::io::atomic_write(dir / "cycle_oracle.csv", whmc::oracle_csv(o));
    s["oracle"] = whmc::oracle_json(o);
  }
  whmc::io::atomic_write(dir / "summary.json", s.dump(2) + "\n");
  std::cout << s.dump(2) << "\n";
  return kExitOk;
}

int cmd_estimate(const Common& c, const std::vector<std::string>& logs, const std::vector<double>& states_s) {
  whmc::SessionData d;
  for (const auto& p : logs) whmc::ingest_log(d, whmc::io::read_file(p), p);
  auto rep = whmc::estimate_session(d, states_s);
  json j = rep.to_json();
  fs::path dir = c.out.empty() ? fs::path("out") : fs::path(c.out);
  if (!c.config.empty()) {
    const auto base = read_json(c.config);
    const auto merged = whmc::merge_estimate(base, rep);
    whmc::parse_config(merged);  // the merged file must be accepted by check
    whmc::io::atomic_write(dir / "scenario_estimated.json", merged.dump(2) + "\n");
    j["merged_config"] = (dir / "scenario_estimated.json").string();
  }
  whmc::io::atomic_write(dir / "estimate.json", j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"whmc: stability analysis and simulation of wireless human-machine collaboration"};
  app.require_subcommand(1);

  Common check_c, region_c, sim_c, est_c;
  std::string regime, report = "text", pair;
  std::optional<std::uint64_t> oracle_cycles;
  std::vector<std::string> logs;
  std::vector<double> states_s;

  auto* check = app.add_subcommand("check", "evaluate the stability condition for one regime");
  add_common(check, check_c);
  check->add_option("--regime", regime, "collab | machine | human | error-free");
  check->add_option("--report", report, "text | json")->check(CLI::IsMember({"text", "json"}));

  auto* region = app.add_subcommand("region", "sweep a pair of gains: boundary and raster CSVs");
  add_common(region, region_c);
  region->add_option("--pair", pair, "two gain names, e.g. alpha_hm,alpha_h");

  auto* sim = app.add_subcommand("simulate", "cart-pole cost curves for the three regimes");
  add_common(sim, sim_c);
  sim->add_option("--oracle-cycles", oracle_cycles, "also compare simulated and analytic cycle lengths");

  auto* est = app.add_subcommand("estimate", "estimate gains and the lag chain from session logs");
  add_common(est, est_c, false);
  est->add_option("logs", logs, "NDJSON session logs or plain lag files (seconds per line)")->required();
  est->add_option("--states", states_s, "lag states in seconds (default: from the log, else 0.15,0.35)")
      ->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitError;
  }

  try {
    if (*check) return cmd_check(check_c, regime, report);
    if (*region) return cmd_region(region_c, pair);
    if (*sim) return cmd_simulate(sim_c, oracle_cycles);
    if (*est) return cmd_estimate(est_c, logs, states_s);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
