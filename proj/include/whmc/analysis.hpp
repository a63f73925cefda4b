#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "whmc/cartpole.hpp"
#include "whmc/config.hpp"
#include "whmc/cycledist.hpp"
#include "whmc/estimation.hpp"
#include "whmc/harq.hpp"
#include "whmc/io.hpp"
#include "whmc/linkmodel.hpp"
#include "whmc/simkernel.hpp"
#include "whmc/stability.hpp"

namespace whmc {

// Link-level quantities and cycle distributions for one scenario. The cycle
// model (which needs the IR Monte Carlo) is built on first use.
class Analysis {
 public:
  explicit Analysis(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.code.validate();
    p_m_ = open_machine_loop_prob(cfg_.sc, cfg_.ca, cfg_.code);
    p_h_ = open_human_loop_prob(cfg_.ha, cfg_.code);
  }

  const ScenarioConfig& config() const { return cfg_; }
  double p_m() const { return p_m_; }
  double p_h() const { return p_h_; }

  const ThetaCurve& theta() {
    if (!theta_) theta_ = theta_curve(cfg_.harq, mean_snr(cfg_.sh), cfg_.theta_options());
    return *theta_;
  }

  CycleModel& cycle_model() {
    if (!cm_) {
      auto w = sh_delay_pmf_from_theta(theta().values, cfg_.analysis.tail_eps * 1e-3);
      CycleOptions opt;
      opt.eps_tail = cfg_.analysis.tail_eps;
      opt.lag_advance = cfg_.lag_advance;
      cm_.emplace(std::move(w), cfg_.chain, p_h_, opt);
    }
    return *cm_;
  }

  const LyapunovGains& gains() const {
    if (!cfg_.gains) throw ConfigError("gains: missing (required for stability analysis)");
    return *cfg_.gains;
  }

  StabilityVerdict verdict(Regime r) {
    const auto& g = gains();
    switch (r) {
      case Regime::machine_only: return machine_only_lhs(g, p_m_);
      case Regime::error_free: return error_free_lhs(g, cfg_.chain);
      default: return evaluate(r, g, p_m_, &cycle_model(), &cycle_model(), &cfg_.chain);
    }
  }

 private:
  ScenarioConfig cfg_;
  double p_m_ = 0.0, p_h_ = 0.0;
  std::optional<ThetaCurve> theta_;
  std::optional<CycleModel> cm_;
};

inline const char* verdict_word(const StabilityVerdict& v) {
  if (v.boundary) return "boundary";
  return v.stable ? "stable" : "unstable";
}

inline json verdict_json(const StabilityVerdict& v, Analysis& a) {
  json j;
  j["regime"] = to_string(v.regime);
  j["lhs"] = v.diverged ? json("inf") : json(v.lhs);
  j["verdict"] = verdict_word(v);
  j["stable"] = v.stable;
  j["boundary"] = v.boundary;
  j["diverged"] = v.diverged;
  json c;
  c["p_m"] = a.p_m();
  c["p_h"] = a.p_h();
  c["omega"] = v.omega;
  c["lambda"] = v.lambda;
  c["weighted_mean"] = v.diverged ? json("inf") : json(v.weighted_mean);
  c["truncation_bound"] = v.truncation_bound;
  if (v.regime == Regime::collab || v.regime == Regime::human_only) {
    const auto& th = a.theta();
    c["theta"] = th.values;
    c["theta_se"] = th.std_errors;
    const auto& d = a.cycle_model().dist();
    c["mean_cycle_len"] = d.mean();
    c["cycle_tail"] = d.tail;
    c["cycle_l_max"] = d.l_max;
  }
  j["components"] = c;
  const auto& g = a.gains();
  j["gains"] = {{"alpha_hm", g.alpha_hm}, {"alpha_m", g.alpha_m}, {"alpha_h", g.alpha_h}, {"alpha", g.alpha}};
  j["config_hash"] = a.config().hash;
  j["theta_seed"] = a.config().analysis.theta_seed;
  if (!v.note.empty()) j["note"] = v.note;
  return j;
}

inline std::string verdict_text(const StabilityVerdict& v, Analysis& a) {
  std::ostringstream os;
  os << "regime: " << to_string(v.regime) << "\n";
  os << "lhs: " << (v.diverged ? std::string("inf") : io::fmt(v.lhs)) << "\n";
  os << "verdict: " << verdict_word(v) << "\n";
  os << "p_M (machine loop open): " << io::fmt(a.p_m()) << "\n";
  os << "p_H (human loop open): " << io::fmt(a.p_h()) << "\n";
  switch (v.regime) {
    case Regime::collab:
      os << "Omega: " << io::fmt(v.omega) << "\nLambda: " << io::fmt(v.lambda) << "\n";
      os << "E[Omega^L]: " << io::fmt(v.weighted_mean) << "\n";
      break;
    case Regime::human_only:
      os << "alpha: " << io::fmt(v.omega) << "\nalpha_H: " << io::fmt(v.lambda) << "\n";
      os << "E[alpha^L]: " << io::fmt(v.weighted_mean) << "\n";
      break;
    case Regime::machine_only:
      os << "alpha: " << io::fmt(v.omega) << "\nalpha_M: " << io::fmt(v.lambda) << "\n";
      os << "E[alpha^L] (machine open runs): " << io::fmt(v.weighted_mean) << "\n";
      break;
    case Regime::error_free:
      os << "E[alpha_M^(tau+1)]: " << io::fmt(v.weighted_mean) << "\nalpha_HM: " << io::fmt(v.lambda) << "\n";
      break;
  }
  if (v.regime == Regime::collab || v.regime == Regime::human_only) {
    const auto& d = a.cycle_model().dist();
    os << "E[L]: " << io::fmt(d.mean()) << " (tail " << io::fmt(d.tail) << ", L_max " << d.l_max << ")\n";
    os << "truncation bound on lhs: " << io::fmt(v.truncation_bound) << "\n";
  }
  if (!v.note.empty()) os << "note: " << v.note << "\n";
  os << "config: " << a.config().hash << "\n";
  return os.str();
}

// ---- region sweeps ----

inline std::pair<GainName, GainName> parse_pair(const std::string& s) {
  const auto c = s.find(',');
  if (c == std::string::npos) throw ConfigError("pair: expected two gain names separated by a comma");
  const auto gx = parse_gain_name(s.substr(0, c));
  const auto gy = parse_gain_name(s.substr(c + 1));
  if (gx == gy) throw ConfigError("pair: the two gains must differ");
  return {gx, gy};
}

inline std::vector<double> linspace(double a, double b, int n) {
  if (n < 1) throw DomainError("grid: at least one point is required");
  if (!(b >= a)) throw DomainError("grid: max must be >= min");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

struct LineFit {
  double slope = 0.0, intercept = 0.0, max_residual = 0.0;
  std::size_t n = 0;
};

// Least squares on the finite, nonempty points.
inline LineFit fit_line(const std::vector<BoundaryPoint>& pts) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::vector<const BoundaryPoint*> ok;
  for (const auto& p : pts)
    if (!p.empty && !p.unbounded) ok.push_back(&p);
  LineFit f;
  f.n = ok.size();
  if (ok.size() < 2) return f;
  for (auto* p : ok) {
    sx += p->x;
    sy += p->y;
    sxx += p->x * p->x;
    sxy += p->x * p->y;
  }
  const double n = static_cast<double>(ok.size());
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  for (auto* p : ok) f.max_residual = std::max(f.max_residual, std::abs(p->y - (f.slope * p->x + f.intercept)));
  return f;
}

struct RegionResult {
  GainName gx{}, gy{};
  std::vector<BoundaryPoint> boundary;
  std::vector<RasterCell> raster;
  LineFit fit;
  std::vector<double> second_diff;
  json summary;
};

inline RegionResult region(Analysis& a, const std::string& pair, const GridConfig& grid) {
  RegionResult r;
  std::tie(r.gx, r.gy) = parse_pair(pair);
  const auto xs = linspace(grid.x_min, grid.x_max, grid.x_points);
  const auto ys = linspace(grid.y_min, grid.y_max, grid.y_points);
  auto& cm = a.cycle_model();
  const auto& g = a.gains();
  r.boundary = boundary_curve(r.gx, r.gy, g, a.p_m(), cm, xs);
  r.raster = region_raster(r.gx, r.gy, g, a.p_m(), cm, xs, ys);
  r.fit = fit_line(r.boundary);
  r.second_diff = second_differences(r.boundary);
  double worst = 0.0;
  std::size_t flagged = 0;
  for (const auto& p : r.boundary) {
    if (p.empty || p.unbounded) {
      ++flagged;
      continue;
    }
    worst = std::max(worst, std::abs(p.lhs - 1.0));
  }
  json s;
  s["pair"] = {to_string(r.gx), to_string(r.gy)};
  s["p_m"] = a.p_m();
  s["fit"] = {{"slope", r.fit.slope}, {"intercept", r.fit.intercept}, {"max_residual", r.fit.max_residual},
              {"points", r.fit.n}};
  s["max_abs_lhs_minus_1"] = worst;
  s["flagged_points"] = flagged;
  if (!r.second_diff.empty()) s["min_second_difference"] = *std::min_element(r.second_diff.begin(), r.second_diff.end());
  auto is = [&](GainName x, GainName y) { return (r.gx == x && r.gy == y) || (r.gx == y && r.gy == x); };
  if (is(GainName::alpha_hm, GainName::alpha_h)) {
    const auto l = boundary_linear_hm_h(g, a.p_m(), cm);
    s["expected_slope"] = r.gx == GainName::alpha_h ? l.slope : 1.0 / l.slope;
  } else if (is(GainName::alpha_m, GainName::alpha)) {
    const auto ob = boundary_linear_m_alpha(g, a.p_m(), cm);
    if (ob.unbounded) s["omega_star"] = "inf";
    else {
      s["omega_star"] = ob.omega_star;
      s["expected_slope"] = r.gx == GainName::alpha ? ob.line.slope : 1.0 / ob.line.slope;
    }
  }
  s["config_hash"] = a.config().hash;
  r.summary = s;
  return r;
}

inline std::string boundary_csv(const RegionResult& r) {
  io::CsvWriter w({to_string(r.gx), to_string(r.gy), "lhs", "flag"});
  for (const auto& p : r.boundary)
    w.row({io::fmt(p.x), io::fmt(p.y), io::fmt(p.lhs), p.empty ? "empty" : (p.unbounded ? "unbounded" : "")});
  return w.str();
}

inline std::string raster_csv(const RegionResult& r) {
  io::CsvWriter w({to_string(r.gx), to_string(r.gy), "lhs", "stable"});
  for (const auto& c : r.raster) w.row({io::fmt(c.x), io::fmt(c.y), io::fmt(c.lhs), c.stable ? "1" : "0"});
  return w.str();
}

// ---- cost curves for the three regimes ----

struct RegimeRuns {
  Regime regime = Regime::collab;
  std::vector<std::vector<double>> cost;  // per replication, length = horizon
  std::vector<std::int64_t> first_removal;  // -1 when the weight never leaves
  std::uint64_t diverged = 0;
};

struct RegimeComparison {
  std::uint64_t horizon = 0, replications = 0, seed = 0;
  RegimeRuns collab, machine, human;
  double early_frac = 0.1;
  // Paired over replications: time-average of (collab - machine) cost from
  // the first removal of the weight in the collaborative run onward.
  double diff_mean = 0.0, diff_se = 0.0;
  std::uint64_t diff_n = 0;
  double mean_first_removal = 0.0;
  bool human_grows = false, machine_decays = false, collab_decays = false, collab_le_machine = false;
};

inline RegimeRuns run_regime(const Scenario& base, const cartpole::CartPole& plant,
                             const cartpole::Penalty& pen, Regime regime, std::uint64_t reps) {
  RegimeRuns out;
  out.regime = regime;
  const std::size_t h = base.horizon;
  for (std::uint64_t r = 0; r < reps; ++r) {
    Scenario sc = base;
    sc.regime = regime;
    sc.seed = derive_seed(base.seed, "replication", r);
    std::vector<double> c;
    c.reserve(h);
    std::int64_t first = -1;
    auto rr = run(sc, plant, cartpole::initial_state(), [&](const TraceRecord<cartpole::State>& rec) {
      c.push_back(cartpole::cost(rec.state, pen));
      if (first < 0 && rec.state.mc == 0.0) first = static_cast<std::int64_t>(rec.t);
    });
    if (rr.diverged) {
      ++out.diverged;
      c.resize(h, c.empty() ? 0.0 : c.back());
    }
    out.cost.push_back(std::move(c));
    out.first_removal.push_back(first);
  }
  return out;
}

inline double mean_over(const RegimeRuns& rr, std::size_t t) {
  double s = 0.0;
  for (const auto& c : rr.cost) s += c[t];
  return s / static_cast<double>(rr.cost.size());
}

inline double se_over(const RegimeRuns& rr, std::size_t t) {
  const double m = mean_over(rr, t);
  double s = 0.0;
  for (const auto& c : rr.cost) s += (c[t] - m) * (c[t] - m);
  const double n = static_cast<double>(rr.cost.size());
  return n > 1 ? std::sqrt(s / (n - 1) / n) : 0.0;
}

// Average of the mean curve over [a, b).
inline double window_mean(const RegimeRuns& rr, std::size_t a, std::size_t b) {
  double s = 0.0;
  for (std::size_t t = a; t < b; ++t) s += mean_over(rr, t);
  return b > a ? s / static_cast<double>(b - a) : 0.0;
}

inline RegimeComparison compare_regimes(const ScenarioConfig& cfg) {
  RegimeComparison f;
  Scenario base = cfg.scenario();
  base.validate();
  f.horizon = base.horizon;
  f.replications = cfg.sim.replications;
  f.seed = base.seed;
  cartpole::CartPole plant{cfg.plant.params};
  f.collab = run_regime(base, plant, cfg.plant.penalty, Regime::collab, f.replications);
  f.machine = run_regime(base, plant, cfg.plant.penalty, Regime::machine_only, f.replications);
  f.human = run_regime(base, plant, cfg.plant.penalty, Regime::human_only, f.replications);

  const std::size_t h = f.horizon;
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(f.early_frac * static_cast<double>(h)));
  auto early = [&](const RegimeRuns& r) { return window_mean(r, 0, k); };
  auto late = [&](const RegimeRuns& r) { return window_mean(r, h - k, h); };
  // Cumulative cost keeps growing: the late per-step cost has not fallen
  // below the starting cost.
  f.human_grows = late(f.human) > mean_over(f.human, 0);
  f.machine_decays = late(f.machine) < early(f.machine);
  f.collab_decays = late(f.collab) < early(f.collab);

  double s = 0.0, s2 = 0.0, tr = 0.0;
  for (std::size_t r = 0; r < f.collab.cost.size(); ++r) {
    const auto t0 = f.collab.first_removal[r];
    if (t0 < 0) continue;
    double d = 0.0;
    for (std::size_t t = static_cast<std::size_t>(t0); t < h; ++t) d += f.collab.cost[r][t] - f.machine.cost[r][t];
    d /= static_cast<double>(h - static_cast<std::size_t>(t0));
    s += d;
    s2 += d * d;
    tr += static_cast<double>(t0);
    ++f.diff_n;
  }
  if (f.diff_n > 0) {
    const double n = static_cast<double>(f.diff_n);
    f.diff_mean = s / n;
    f.diff_se = n > 1 ? std::sqrt(std::max(0.0, s2 / n - f.diff_mean * f.diff_mean) / (n - 1)) : 0.0;
    f.mean_first_removal = tr / n;
    f.collab_le_machine = f.diff_mean <= 0.0;
  }
  return f;
}

inline std::string regime_comparison_csv(const RegimeComparison& f) {
  io::CsvWriter w({"t", "collab_cost", "collab_se", "machine_cost", "machine_se", "human_cost", "human_se",
                   "collab_cumulative", "machine_cumulative", "human_cumulative"});
  double cc = 0, cm = 0, ch = 0;
  for (std::size_t t = 0; t < f.horizon; ++t) {
    const double a = mean_over(f.collab, t), b = mean_over(f.machine, t), c = mean_over(f.human, t);
    cc += a;
    cm += b;
    ch += c;
    w.row({std::to_string(t), io::fmt(a), io::fmt(se_over(f.collab, t)), io::fmt(b), io::fmt(se_over(f.machine, t)),
           io::fmt(c), io::fmt(se_over(f.human, t)), io::fmt(cc), io::fmt(cm), io::fmt(ch)});
  }
  return w.str();
}

inline json regime_comparison_json(const RegimeComparison& f) {
  return json{{"horizon", f.horizon},
              {"replications", f.replications},
              {"seed", f.seed},
              {"diverged", {{"collab", f.collab.diverged}, {"machine", f.machine.diverged}, {"human", f.human.diverged}}},
              {"human_cost_grows", f.human_grows},
              {"machine_cost_decays", f.machine_decays},
              {"collab_cost_decays", f.collab_decays},
              {"collab_minus_machine_after_first_removal", {{"mean", f.diff_mean}, {"se", f.diff_se}, {"n", f.diff_n}}},
              {"mean_first_removal_step", f.mean_first_removal},
              {"collab_le_machine", f.collab_le_machine}};
}

template <class State>
json trace_json(const TraceRecord<State>& r) {
  json j{{"t", r.t},          {"u_m", r.u_m},
         {"u_h", r.u_h},      {"case", r.case_label},
         {"loop", r.human_loop}, {"phase", to_string(r.phase)},
         {"lag", r.lag},      {"sh_delay", r.sh_delay},
         {"machine_closed", r.machine_closed}, {"human_closed", r.human_closed}};
  if constexpr (std::is_same_v<State, cartpole::State>) {
    j["x"] = r.state.x;
    j["xd"] = r.state.xd;
    j["th"] = r.state.th;
    j["thd"] = r.state.thd;
    j["mc"] = r.state.mc;
  }
  if (r.cycle_len) {
    j["cycle_len"] = r.cycle_len;
    j["cycle_loops"] = r.cycle_loops;
  }
  return j;
}

// NDJSON trace of replication 0 of one regime.
inline std::string trace_ndjson(const ScenarioConfig& cfg, Regime regime) {
  Scenario sc = cfg.scenario();
  sc.regime = regime;
  sc.seed = derive_seed(sc.seed, "replication", 0);
  cartpole::CartPole plant{cfg.plant.params};
  std::ostringstream os;
  os << json{{"type", "header"}, {"v", kSchemaVersion}, {"regime", to_string(regime)}, {"seed", sc.seed},
             {"config_hash", cfg.hash}}
            .dump()
     << "\n";
  run(sc, plant, cartpole::initial_state(), [&](const TraceRecord<cartpole::State>& r) {
    auto j = trace_json(r);
    j["type"] = "step";
    os << j.dump() << "\n";
  });
  return os.str();
}

// ---- analytic vs simulated cycle lengths ----

struct OracleResult {
  double tv = 0.0;
  double mean_analytic = 0.0, mean_empirical = 0.0, mean_se = 0.0;
  double p_m = 0.0, p_m_emp = 0.0, p_m_se = 0.0;
  double p_h = 0.0, p_h_emp = 0.0, p_h_se = 0.0;
  std::uint64_t cycles = 0;
  Pmf analytic, empirical;

  bool within(double tv_tol, double n_se) const {
    auto ok = [&](double a, double e, double se) { return std::abs(a - e) <= n_se * se; };
    return tv < tv_tol && ok(mean_analytic, mean_empirical, mean_se) && ok(p_m, p_m_emp, p_m_se) &&
           ok(p_h, p_h_emp, p_h_se);
  }
};

inline OracleResult cycle_oracle(Analysis& a, std::uint64_t cycles, std::uint64_t seed) {
  OracleResult o;
  Scenario sc = a.config().scenario();
  sc.seed = seed;
  const auto st = estimate_cycle_stats(sc, cycles);
  const auto& d = a.cycle_model().dist();
  o.analytic = d.z;
  o.empirical = st.l_pmf();
  o.tv = total_variation(o.analytic, o.empirical);
  o.mean_analytic = d.mean();
  o.mean_empirical = st.mean_l;
  o.mean_se = st.se_l;
  o.p_m = a.p_m();
  o.p_m_emp = st.p_m;
  o.p_m_se = st.se_p_m;
  o.p_h = a.p_h();
  o.p_h_emp = st.p_h;
  o.p_h_se = st.se_p_h;
  o.cycles = st.cycles;
  return o;
}

inline std::string oracle_csv(const OracleResult& o) {
  io::CsvWriter w({"l", "analytic", "empirical", "empirical_se"});
  const std::size_t n = std::max(o.analytic.probs.size(), o.empirical.probs.size());
  const double c = static_cast<double>(o.cycles);
  for (std::size_t l = 1; l < n; ++l) {
    const double pa = l < o.analytic.probs.size() ? o.analytic.probs[l] : 0.0;
    const double pe = l < o.empirical.probs.size() ? o.empirical.probs[l] : 0.0;
    if (pa < 1e-15 && pe == 0.0) continue;
    w.row({std::to_string(l), io::fmt(pa), io::fmt(pe), io::fmt(std::sqrt(pe * (1.0 - pe) / c))});
  }
  return w.str();
}

inline json oracle_json(const OracleResult& o) {
  return json{{"cycles", o.cycles},
              {"total_variation", o.tv},
              {"mean_cycle_len", {{"analytic", o.mean_analytic}, {"empirical", o.mean_empirical}, {"se", o.mean_se}}},
              {"p_m", {{"analytic", o.p_m}, {"empirical", o.p_m_emp}, {"se", o.p_m_se}}},
              {"p_h", {{"analytic", o.p_h}, {"empirical", o.p_h_emp}, {"se", o.p_h_se}}}};
}

inline std::string pmf_csv(const Pmf& p) {
  io::CsvWriter w({"l", "probability"});
  for (std::size_t l = 0; l < p.probs.size(); ++l)
    if (p.probs[l] != 0.0) w.row({std::to_string(l), io::fmt(p.probs[l])});
  return w.str();
}

// ---- estimation report merged into a scenario ----

// Base config with the estimated chain and gains substituted, ready for check.
inline json merge_estimate(const json& base, const EstimateReport& r) {
  json out = base;
  if (r.chain) {
    json h = out.contains("human") ? out["human"] : json::object();
    h["states_steps"] = r.chain->states;
    h["transition"] = r.chain->transition;
    out["human"] = h;
  }
  if (r.gains)
    out["gains"] = {{"alpha_hm", r.gains->alpha_hm}, {"alpha_m", r.gains->alpha_m}, {"alpha_h", r.gains->alpha_h},
                    {"alpha", r.gains->alpha}};
  return out;
}

struct LogVerdict {
  EstimateReport estimate;
  json merged_config;
  std::optional<StabilityVerdict> verdict;
  std::vector<std::string> warnings;
};

// Estimation followed by the collaborative test, as used by both the
// estimate command and the experiment server.
inline LogVerdict verdict_from_session(const json& base_config, const SessionData& d) {
  LogVerdict out;
  out.estimate = estimate_session(d);
  out.warnings = out.estimate.warnings;
  out.merged_config = merge_estimate(base_config, out.estimate);
  if (!out.estimate.chain || !out.estimate.gains) {
    out.warnings.push_back("no verdict: estimation incomplete");
    return out;
  }
  try {
    Analysis a(parse_config(out.merged_config));
    out.verdict = a.verdict(Regime::collab);
  } catch (const Error& e) {
    out.warnings.push_back(std::string("no verdict: ") + e.what());
  }
  return out;
}

}  // namespace whmc
