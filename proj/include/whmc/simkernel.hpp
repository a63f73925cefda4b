#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "whmc/cycledist.hpp"
#include "whmc/errors.hpp"
#include "whmc/harq.hpp"
#include "whmc/humanmodel.hpp"
#include "whmc/linkmodel.hpp"
#include "whmc/plant.hpp"
#include "whmc/random.hpp"
#include "whmc/stability.hpp"

namespace whmc {

// How the first loop of a cycle picks its lag: a fresh stationary draw, or one
// chain step from the last loop of the previous cycle.
enum class LagInit { stationary, carry };

inline LagInit parse_lag_init(const std::string& s) {
  if (s == "stationary") return LagInit::stationary;
  if (s == "carry") return LagInit::carry;
  throw DomainError("unknown lag init '" + s + "' (expected stationary or carry)");
}

inline const char* to_string(LagInit l) { return l == LagInit::stationary ? "stationary" : "carry"; }

struct Scenario {
  LinkBudget sc, ca, sh, ha;
  CodeConfig code;
  HarqConfig harq;
  LagChain chain{{5, 25}, chains::variable()};
  LagAdvance lag_advance = LagAdvance::per_loop;
  LagInit lag_init = LagInit::stationary;
  // collab runs both loops; machine_only never starts a human loop;
  // human_only keeps the machine loop open.
  Regime regime = Regime::collab;
  std::uint64_t horizon = 10'000;
  std::uint64_t seed = 1;
  double divergence_cap = 1e12;

  void validate() const {
    sc.validate("links.sc");
    ca.validate("links.ca");
    sh.validate("links.sh");
    ha.validate("links.ha");
    code.validate();
    harq.validate();
    chain.validate();
    if (horizon < 1) throw DomainError("simulation.horizon must be >= 1");
    if (regime == Regime::error_free) throw DomainError("the simulator has no error-free regime; use perfect links");
  }
};

enum class HumanPhase { idle, sh, lag, ha };

inline const char* to_string(HumanPhase p) {
  switch (p) {
    case HumanPhase::idle: return "idle";
    case HumanPhase::sh: return "sh";
    case HumanPhase::lag: return "lag";
    case HumanPhase::ha: return "ha";
  }
  return "?";
}

// Outcome of a transmission in one slot: not attempted, failed, delivered.
enum class Tx : std::int8_t { none = -1, fail = 0, ok = 1 };

// 1: both loops closed, 2: machine only, 3: human only, 4: neither.
inline int case_label(bool machine_closed, bool human_closed) {
  if (machine_closed) return human_closed ? 1 : 2;
  return human_closed ? 3 : 4;
}

template <class State>
struct TraceRecord {
  std::uint64_t t = 0;
  State state{};  // x(t), before the step
  double u_m = 0.0;
  double u_h = 0.0;
  Tx sc = Tx::none, ca = Tx::none, sh = Tx::none, ha = Tx::none;
  std::uint64_t human_loop = 0;  // t'
  HumanPhase phase = HumanPhase::idle;
  int lag = 0;                   // lag of the active human loop
  int sh_delay = 0;              // set on the slot the SH packet is delivered
  bool machine_closed = false;
  bool human_closed = false;     // a human command is applied at this slot
  int case_label = 4;
  // Set on the HA slot of a loop: slots since the previous closed loop and
  // the number of loops in that interval, if this loop closed.
  std::uint64_t cycle_len = 0;
  std::uint64_t cycle_loops = 0;
};

struct RunResult {
  std::uint64_t steps = 0;
  bool diverged = false;
  bool stopped = false;
  std::uint64_t machine_slots = 0, machine_closed = 0;
  std::uint64_t human_loops = 0, human_closed = 0;
};

namespace detail {

struct Streams {
  Rng sc, ca, sh, ha, lag, dist;
  explicit Streams(std::uint64_t seed)
      : sc(make_stream(seed, "sc")),
        ca(make_stream(seed, "ca")),
        sh(make_stream(seed, "sh")),
        ha(make_stream(seed, "ha")),
        lag(make_stream(seed, "lag")),
        dist(make_stream(seed, "disturbance")) {}
};

inline bool single_attempt(double gbar, const CodeConfig& code, Rng& rng) {
  const double g = sample_snr(gbar, rng);
  const double u = draw_unit(rng);
  return u >= decode_error_prob(g, code);
}

// One HARQ trial of up to N attempts. TI retries independently; CC and IR
// draw one uniform per trial and compare it with the error probability of
// the accumulated signal, so failures are nested within the trial.
class HarqTrial {
 public:
  HarqTrial(const HarqConfig& cfg, double gbar) : cfg_(cfg), gbar_(gbar) {}

  bool attempt(Rng& rng) {
    if (k_ == 0) {
      u_ = draw_unit(rng);
      acc_snr_ = acc_c_ = acc_v_ = 0.0;
      err_ = 1.0;
    }
    ++k_;
    bool ok;
    if (cfg_.scheme == HarqScheme::TI || std::isinf(gbar_)) {
      ok = single_attempt(gbar_, cfg_.code, rng);
    } else {
      const double g = sample_snr(gbar_, rng);
      double e;
      if (cfg_.scheme == HarqScheme::CC) {
        acc_snr_ += g;
        e = decode_error_prob(acc_snr_, cfg_.code);
      } else {
        acc_c_ += std::log2(1.0 + g);
        acc_v_ += channel_dispersion(g);
        e = acc_v_ > 0.0 ? gaussian_q((acc_c_ - cfg_.code.rate()) / std::sqrt(acc_v_ / cfg_.code.packet_len)) : 1.0;
      }
      err_ = std::min(err_, std::clamp(e, 0.0, 1.0));
      ok = u_ >= err_;
    }
    if (ok || k_ == cfg_.max_attempts) k_ = 0;
    return ok;
  }

 private:
  const HarqConfig& cfg_;
  double gbar_;
  int k_ = 0;
  double u_ = 0.0, acc_snr_ = 0.0, acc_c_ = 0.0, acc_v_ = 0.0, err_ = 1.0;
};

}  // namespace detail

// Runs the dual-loop system for scenario.horizon slots. The observer sees one
// TraceRecord per slot; if it returns bool, false stops the run.
template <Plant P, class Obs>
RunResult run(const Scenario& sc, const P& plant, typename P::State x0, Obs&& obs) {
  using State = typename P::State;
  sc.validate();
  detail::Streams rs(sc.seed);
  const double g_sc = mean_snr(sc.sc), g_ca = mean_snr(sc.ca), g_sh = mean_snr(sc.sh), g_ha = mean_snr(sc.ha);
  const auto v = stationary(sc.chain);
  detail::HarqTrial trial(sc.harq, g_sh);

  const bool machine_on = sc.regime != Regime::human_only;
  const bool human_on = sc.regime != Regime::machine_only;

  RunResult res;
  State x = std::move(x0);
  State sensed{};
  HumanPhase phase = HumanPhase::idle;
  std::uint64_t loop = 0;
  std::size_t lag_idx = 0;
  bool have_lag = false;
  bool cycle_start = true;
  int lag_left = 0, sh_slots = 0;
  std::uint64_t cycle_len = 0, cycle_loops = 0;
  bool pending = false;
  double pending_uh = 0.0;

  for (std::uint64_t t = 0; t < sc.horizon; ++t) {
    TraceRecord<State> rec;
    rec.t = t;
    rec.state = x;

    if (pending) {
      rec.u_h = pending_uh;
      rec.human_closed = true;
      pending = false;
    }

    if (machine_on) {
      ++res.machine_slots;
      const bool sc_ok = detail::single_attempt(g_sc, sc.code, rs.sc);
      rec.sc = sc_ok ? Tx::ok : Tx::fail;
      if (sc_ok) {
        const bool ca_ok = detail::single_attempt(g_ca, sc.code, rs.ca);
        rec.ca = ca_ok ? Tx::ok : Tx::fail;
        if (ca_ok) {
          rec.machine_closed = true;
          rec.u_m = plant.machine_input(x);
          ++res.machine_closed;
        }
      }
    }

    if (human_on) {
      if (phase == HumanPhase::idle) {
        // A new human loop: sense the plant and fix this loop's lag.
        sensed = x;
        ++loop;
        ++res.human_loops;
        ++cycle_loops;
        if (!have_lag) {
          lag_idx = draw_index(v, rs.lag);
          have_lag = true;
        } else if (cycle_start) {
          lag_idx = sc.lag_init == LagInit::stationary ? draw_index(v, rs.lag) : chain_step(sc.chain, lag_idx, rs.lag);
        } else if (sc.lag_advance == LagAdvance::per_loop) {
          lag_idx = chain_step(sc.chain, lag_idx, rs.lag);
        }
        cycle_start = false;
        phase = HumanPhase::sh;
        sh_slots = 0;
      }
      rec.human_loop = loop;
      rec.phase = phase;
      rec.lag = sc.chain.states[lag_idx];
      ++cycle_len;
      switch (phase) {
        case HumanPhase::sh: {
          ++sh_slots;
          const bool ok = trial.attempt(rs.sh);
          rec.sh = ok ? Tx::ok : Tx::fail;
          if (ok) {
            rec.sh_delay = sh_slots;
            phase = HumanPhase::lag;
            lag_left = sc.chain.states[lag_idx];
          }
          break;
        }
        case HumanPhase::lag:
          if (--lag_left == 0) phase = HumanPhase::ha;
          break;
        case HumanPhase::ha: {
          const bool ok = detail::single_attempt(g_ha, sc.code, rs.ha);
          rec.ha = ok ? Tx::ok : Tx::fail;
          if (ok) {
            pending = true;
            pending_uh = plant.human_input(sensed);
            ++res.human_closed;
            rec.cycle_len = cycle_len;
            rec.cycle_loops = cycle_loops;
            cycle_len = 0;
            cycle_loops = 0;
            cycle_start = true;
          }
          phase = HumanPhase::idle;
          break;
        }
        case HumanPhase::idle: break;
      }
    }

    rec.case_label = case_label(rec.machine_closed, rec.human_closed);
    x = plant.step(x, rec.u_h, rec.u_m, rs.dist);
    ++res.steps;

    if constexpr (std::is_same_v<std::invoke_result_t<Obs&, const TraceRecord<State>&>, bool>) {
      if (!obs(static_cast<const TraceRecord<State>&>(rec))) {
        res.stopped = true;
        break;
      }
    } else {
      obs(static_cast<const TraceRecord<State>&>(rec));
    }

    const double n = plant.norm(x);
    if (!std::isfinite(n) || n > sc.divergence_cap) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

struct CycleStats {
  std::vector<std::uint64_t> l_counts;  // histogram of cycle lengths
  std::vector<std::uint64_t> m_counts;  // histogram of loops per cycle
  std::uint64_t cycles = 0;
  double mean_l = 0.0, se_l = 0.0;
  double mean_m = 0.0, se_m = 0.0;
  double p_h = 0.0, se_p_h = 0.0;  // fraction of human loops left open
  double p_m = 0.0, se_p_m = 0.0;  // fraction of machine slots left open
  std::uint64_t steps = 0;

  Pmf l_pmf() const { return empirical_pmf(std::span<const std::size_t>(l_counts.data(), l_counts.size())); }
};

// Simulates until n_cycles human loops have closed (NullPlant).
inline CycleStats estimate_cycle_stats(Scenario sc, std::uint64_t n_cycles, std::uint64_t max_steps = 0) {
  if (n_cycles < 1) throw DomainError("estimate_cycle_stats: n_cycles must be >= 1");
  if (sc.regime != Regime::collab) sc.regime = Regime::collab;
  sc.horizon = max_steps ? max_steps : n_cycles * 100'000;
  CycleStats st;
  double sl = 0.0, sl2 = 0.0, sm = 0.0, sm2 = 0.0;
  NullPlant plant;
  auto rr = run(sc, plant, NullPlant::State{}, [&](const TraceRecord<NullPlant::State>& r) {
    if (r.cycle_len > 0) {
      if (st.l_counts.size() <= r.cycle_len) st.l_counts.resize(r.cycle_len + 1, 0);
      if (st.m_counts.size() <= r.cycle_loops) st.m_counts.resize(r.cycle_loops + 1, 0);
      ++st.l_counts[r.cycle_len];
      ++st.m_counts[r.cycle_loops];
      const double l = static_cast<double>(r.cycle_len), m = static_cast<double>(r.cycle_loops);
      sl += l;
      sl2 += l * l;
      sm += m;
      sm2 += m * m;
      if (++st.cycles == n_cycles) return false;
    }
    return true;
  });
  if (st.cycles == 0) {
    std::ostringstream os;
    os << "estimate_cycle_stats: no human loop closed within " << rr.steps << " steps";
    throw InsufficientDataError(os.str());
  }
  const double n = static_cast<double>(st.cycles);
  st.steps = rr.steps;
  st.mean_l = sl / n;
  st.se_l = std::sqrt(std::max(0.0, sl2 / n - st.mean_l * st.mean_l) / std::max(1.0, n - 1.0));
  st.mean_m = sm / n;
  st.se_m = std::sqrt(std::max(0.0, sm2 / n - st.mean_m * st.mean_m) / std::max(1.0, n - 1.0));
  const double hl = static_cast<double>(rr.human_loops);
  st.p_h = 1.0 - static_cast<double>(rr.human_closed) / hl;
  st.se_p_h = std::sqrt(st.p_h * (1.0 - st.p_h) / hl);
  const double ms = static_cast<double>(rr.machine_slots);
  st.p_m = 1.0 - static_cast<double>(rr.machine_closed) / ms;
  st.se_p_m = std::sqrt(st.p_m * (1.0 - st.p_m) / ms);
  return st;
}

// Running sums of a per-step cost sequence.
inline std::vector<double> cumulative_cost(const std::vector<double>& per_step) {
  std::vector<double> out(per_step.size());
  double s = 0.0;
  for (std::size_t i = 0; i < per_step.size(); ++i) {
    if (per_step[i] < 0.0) throw DomainError("cumulative_cost: negative cost");
    s += per_step[i];
    out[i] = s;
  }
  return out;
}

struct CostCurves {
  std::vector<double> mean_cost;        // E[cost(x(t))] across replications
  std::vector<double> se_cost;
  std::vector<double> mean_cumulative;  // E[sum_{s<=t} cost(x(s))]
  std::uint64_t diverged = 0;
};

// Replications r = 0..reps-1 use seeds derived from (base seed, r); the same
// seeds are used whatever the regime, so regimes share random numbers.
template <Plant P, class Cost>
CostCurves replicate_cost(const Scenario& base, const P& plant, const typename P::State& x0, std::uint64_t reps,
                          Cost&& cost) {
  CostCurves out;
  const std::size_t h = base.horizon;
  std::vector<double> s1(h, 0.0), s2(h, 0.0), cum(h, 0.0);
  for (std::uint64_t r = 0; r < reps; ++r) {
    Scenario sc = base;
    sc.seed = derive_seed(base.seed, "replication", r);
    std::vector<double> c;
    c.reserve(h);
    auto rr = run(sc, plant, x0, [&](const TraceRecord<typename P::State>& rec) { c.push_back(cost(rec.state)); });
    if (rr.diverged) {
      ++out.diverged;
      c.resize(h, c.empty() ? 0.0 : c.back());
    }
    double acc = 0.0;
    for (std::size_t t = 0; t < h; ++t) {
      s1[t] += c[t];
      s2[t] += c[t] * c[t];
      acc += c[t];
      cum[t] += acc;
    }
  }
  const double n = static_cast<double>(reps);
  out.mean_cost.resize(h);
  out.se_cost.resize(h);
  out.mean_cumulative.resize(h);
  for (std::size_t t = 0; t < h; ++t) {
    const double m = s1[t] / n;
    out.mean_cost[t] = m;
    out.se_cost[t] = std::sqrt(std::max(0.0, s2[t] / n - m * m) / std::max(1.0, n - 1.0));
    out.mean_cumulative[t] = cum[t] / n;
  }
  return out;
}

}  // namespace whmc
