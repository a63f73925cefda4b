#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "whmc/errors.hpp"
#include "whmc/plant.hpp"
#include "whmc/random.hpp"
#include "whmc/simkernel.hpp"
#include "whmc/stability.hpp"

namespace whmc::cartpole {

struct Params {
  double pole_mass = 2.0;     // M_p, kg
  double cart_mass = 10.0;    // M_c, kg
  double gravity = 9.8;
  double pole_len = 6.0;      // L_p, m
  double inertia = 18.0;      // I = M_p L_p^2 / 4
  double pole_damping = 0.1;  // c
  double cart_damping = 0.1;  // b_d
  double ts = 0.05;
  double eta = 0.7;
  double weight = 5.0;        // kg
  double p_weight = 0.02;     // per-step reappearance probability
  double force_limit = 1e4;   // N, used only near cos(theta) = 0

  void validate() const {
    auto pos = [](double v, const char* f) {
      if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string("plant.") + f + " must be positive");
    };
    pos(pole_mass, "pole_mass_kg");
    pos(cart_mass, "cart_mass_kg");
    pos(gravity, "gravity_mps2");
    pos(pole_len, "pole_length_m");
    pos(inertia, "inertia_kgm2");
    pos(ts, "ts_s");
    pos(weight, "weight_kg");
    pos(force_limit, "force_limit_n");
    if (pole_damping < 0.0 || cart_damping < 0.0) throw DomainError("plant: damping must be >= 0");
    if (!(eta > 0.0 && eta < 1.0)) throw DomainError("plant.eta must lie in (0, 1)");
    if (!(p_weight >= 0.0 && p_weight <= 1.0)) throw DomainError("plant.p_weight must lie in [0, 1]");
  }
};

struct State {
  double x = 0.0, xd = 0.0, th = 0.0, thd = 0.0, mc = 0.0;
  friend bool operator==(const State&, const State&) = default;
};

inline State initial_state() { return {0.0, 0.0, std::numbers::pi / 6.0, 0.0, 5.0}; }

struct Accel {
  double thdd = 0.0, xdd = 0.0;
};

// Solves the pendulum / cart equations for (theta'', x'').
inline Accel accelerations(const State& s, double u_m, const Params& p) {
  const double mpl = p.pole_mass * p.pole_len;
  const double a11 = 2.0 * p.inertia + p.pole_mass * p.pole_len * p.pole_len;
  const double a12 = mpl * std::cos(s.th);
  const double a22 = p.cart_mass + p.pole_mass + s.mc;
  const double det = a11 * a22 - a12 * a12;
  if (!(det > 0.0)) throw NumericalError("cart-pole: singular dynamics matrix");
  const double r1 = 2.0 * mpl * p.gravity * std::sin(s.th) - 2.0 * p.pole_damping * s.thd;
  const double r2 = mpl * std::sin(s.th) * s.thd * s.thd - p.cart_damping * s.xd + u_m;
  return {(a22 * r1 - a12 * r2) / det, (a11 * r2 - a12 * r1) / det};
}

// Semi-implicit Euler on (theta, x); the weight follows the removal /
// reappearance rule, one uniform drawn per step whatever the branch.
inline State step_dynamics(const State& s, double u_m, double u_h, double draw, const Params& p) {
  const Accel a = accelerations(s, u_m, p);
  State n;
  n.thd = s.thd + p.ts * a.thdd;
  n.th = s.th + p.ts * n.thd;
  n.xd = s.xd + p.ts * a.xdd;
  n.x = s.x + p.ts * n.xd;
  if (s.mc != 0.0) n.mc = std::max(s.mc + u_h, 0.0);
  else n.mc = draw < p.p_weight ? p.weight : 0.0;
  return n;
}

// Force that makes theta(t+1) = eta theta(t) under the nominal model (no
// weight on the cart).
inline double machine_policy(const State& s, const Params& p) {
  const double c = std::cos(s.th), sn = std::sin(s.th);
  const double mpl = p.pole_mass * p.pole_len;
  if (std::abs(c) < 1e-6) {
    // Singular configuration: push toward upright at full force.
    return s.th > 0.0 ? p.force_limit : -p.force_limit;
  }
  const double m = p.cart_mass + p.pole_mass;
  const double a11 = 2.0 * p.inertia + p.pole_mass * p.pole_len * p.pole_len;
  const double gamma = m * a11 - (mpl * c) * (mpl * c);
  const double mplc = mpl * c;
  return 2.0 * mpl * p.gravity * sn * m / mplc - 2.0 * p.pole_damping * s.thd * m / mplc + p.cart_damping * s.xd -
         mpl * s.thd * s.thd * sn - (p.eta - 1.0) * s.th * gamma / (p.ts * p.ts * mplc) +
         s.thd * gamma / (p.ts * mplc);
}

inline double human_policy(const State& observed) { return -observed.mc; }

using Penalty = std::array<double, 5>;  // x, x', theta, theta', m_c

inline Penalty theta_penalty() { return {0.0, 0.0, 1.0, 0.0, 0.0}; }

inline void validate_penalty(const Penalty& pen) {
  bool any = false;
  for (double d : pen) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw ConfigError("plant.penalty: entries must be >= 0");
    any = any || d > 0.0;
  }
  if (!any) throw ConfigError("plant.penalty: at least one entry must be positive");
}

inline double cost(const State& s, const Penalty& pen = theta_penalty()) {
  return pen[0] * s.x * s.x + pen[1] * s.xd * s.xd + pen[2] * s.th * s.th + pen[3] * s.thd * s.thd +
         pen[4] * s.mc * s.mc;
}

inline constexpr double kVThreshold = 0.05;

inline double lyapunov_v(double theta) { return std::abs(theta) >= kVThreshold ? std::abs(theta) : 0.0; }
inline double lyapunov_v(const State& s) { return lyapunov_v(s.th); }

// Adapter for the simulation kernel.
struct CartPole {
  using State = cartpole::State;
  Params params;

  double machine_input(const State& s) const { return machine_policy(s, params); }
  double human_input(const State& s) const { return human_policy(s); }
  State step(const State& s, double u_h, double u_m, Rng& rng) const {
    return step_dynamics(s, u_m, u_h, draw_unit(rng), params);
  }
  double norm(const State& s) const {
    return std::max({std::abs(s.x), std::abs(s.xd), std::abs(s.th), std::abs(s.thd)});
  }
};

static_assert(whmc::Plant<CartPole>);

struct GainSample {
  int case_label = 4;  // 1: both closed, 2: machine, 3: human, 4: neither
  double theta = 0.0;
  double theta_next = 0.0;
};

struct GainEstimate {
  LyapunovGains gains;
  std::array<std::size_t, 4> used{};  // samples with V(theta) > 0, per case
};

// Per case, the largest observed V(theta(t+1)) / V(theta(t)) over steps with
// V(theta(t)) > 0.
inline GainEstimate estimate_gains(const std::vector<GainSample>& samples) {
  std::array<double, 4> best{};
  GainEstimate out;
  for (const auto& s : samples) {
    if (s.case_label < 1 || s.case_label > 4) throw DataError("estimate_gains: case label must be 1..4");
    const double v0 = lyapunov_v(s.theta);
    if (v0 <= 0.0) continue;
    const auto i = static_cast<std::size_t>(s.case_label - 1);
    const double r = lyapunov_v(s.theta_next) / v0;
    best[i] = out.used[i] == 0 ? r : std::max(best[i], r);
    ++out.used[i];
  }
  static const char* names[] = {"case 1 (both loops closed)", "case 2 (machine loop closed)",
                                "case 3 (human loop closed)", "case 4 (both loops open)"};
  for (std::size_t i = 0; i < 4; ++i)
    if (out.used[i] == 0)
      throw InsufficientDataError(std::string("estimate_gains: no step with V > 0 in ") + names[i]);
  out.gains = {best[0], best[1], best[2], best[3]};
  return out;
}

// Samples from one run, labelled with a fixed experiment case.
inline std::vector<GainSample> experiment_samples(const std::vector<State>& traj, int label) {
  std::vector<GainSample> out;
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) out.push_back({label, traj[t].th, traj[t + 1].th});
  return out;
}

struct ProtocolOptions {
  std::uint64_t horizon = 200;
  std::uint64_t seed = 1;
  // Stop a run once |theta| exceeds this (the pole has fallen).
  double theta_stop = std::numbers::pi / 2.0;
  // Label steps by the experiment they come from instead of by the loop
  // outcomes recorded in the trace.
  bool label_by_experiment = false;
  // Each experiment is repeated with seeds derived from (seed, i).
  std::uint64_t replications = 20;
};

// The four-experiment estimation protocol with a synthetic operator whose lag
// follows the scenario's chain: no control, machine only, human only and
// both, each from x(0) = (0, 0, pi/6, 0, 5).
inline GainEstimate gain_protocol(const Scenario& base, const Params& params, const ProtocolOptions& opt = {}) {
  CartPole plant{params};
  std::vector<GainSample> all;
  auto record = [&](Regime r, int label, bool no_control, std::uint64_t seed) {
    Scenario sc = base;
    sc.regime = r;
    sc.horizon = opt.horizon;
    sc.seed = seed;
    if (no_control) {
      Rng rng = make_stream(seed, "disturbance");
      State x = initial_state();
      for (std::uint64_t t = 0; t < opt.horizon && std::abs(x.th) <= opt.theta_stop; ++t) {
        const State n = plant.step(x, 0.0, 0.0, rng);
        all.push_back({4, x.th, n.th});
        x = n;
      }
      return;
    }
    bool have = false;
    GainSample prev;
    run(sc, plant, initial_state(), [&](const TraceRecord<State>& rec) {
      if (have) {
        prev.theta_next = rec.state.th;
        all.push_back(prev);
      }
      prev = {opt.label_by_experiment ? label : rec.case_label, rec.state.th, 0.0};
      have = true;
      return std::abs(rec.state.th) <= opt.theta_stop;
    });
  };
  for (std::uint64_t i = 0; i < std::max<std::uint64_t>(1, opt.replications); ++i) {
    const std::uint64_t seed = derive_seed(opt.seed, "protocol", i);
    record(Regime::collab, 4, true, seed);
    record(Regime::machine_only, 2, false, seed);
    record(Regime::human_only, 3, false, seed);
    record(Regime::collab, 1, false, seed);
  }
  return estimate_gains(all);
}

}  // namespace whmc::cartpole
