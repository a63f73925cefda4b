#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "whmc/errors.hpp"
#include "whmc/harq.hpp"
#include "whmc/humanmodel.hpp"
#include "whmc/linkmodel.hpp"
#include "whmc/pmf.hpp"

namespace whmc {

// When the human lag chain takes a step: once per human loop (open or
// closed), or once per closed loop so that every loop of a cycle shares a lag.
enum class LagAdvance { per_loop, per_cycle };

inline const char* to_string(LagAdvance a) { return a == LagAdvance::per_loop ? "per_loop" : "per_cycle"; }

inline LagAdvance parse_lag_advance(const std::string& s) {
  if (s == "per_loop") return LagAdvance::per_loop;
  if (s == "per_cycle") return LagAdvance::per_cycle;
  throw DomainError("unknown lag advance '" + s + "' (expected per_loop or per_cycle)");
}

struct CycleOptions {
  double eps_tail = 1e-9;
  LagAdvance lag_advance = LagAdvance::per_loop;
  // Lag distribution of the first loop of a cycle; stationary when empty.
  std::optional<std::vector<double>> initial;
  // Loop counts m for which the conditional tables w_{k,m}, v_{k,m}, z_{l,m} are kept.
  int m_tab = 6;
  std::size_t l_cap = std::size_t{1} << 22;
};

inline double open_human_loop_prob(const LinkBudget& ha, const CodeConfig& code) {
  return expected_error_prob(ha, code);
}

// P[M = m] = (1 - p) p^(m-1), m = 1..m_max. probs[0] = 0.
inline Pmf loop_count_pmf(double p_open, int m_max) {
  if (!(p_open >= 0.0) || p_open > 1.0) throw DomainError("loop_count_pmf: probability outside [0, 1]");
  if (p_open >= 1.0) throw DivergenceError("loop_count_pmf: p_H = 1, no human loop ever closes");
  if (m_max < 1) throw DomainError("loop_count_pmf: m_max must be >= 1");
  Pmf out;
  out.probs.assign(static_cast<std::size_t>(m_max) + 1, 0.0);
  double pw = 1.0;
  for (int m = 1; m <= m_max; ++m) {
    out.probs[static_cast<std::size_t>(m)] = (1.0 - p_open) * pw;
    pw *= p_open;
  }
  out.tail = pw;
  out.trim_trailing_zeros();
  return out;
}

inline int loop_count_for_tail(double p_open, double eps_tail) {
  if (p_open >= 1.0) throw DivergenceError("loop_count_pmf: p_H = 1, no human loop ever closes");
  if (p_open <= 0.0) return 1;
  return std::max(1, static_cast<int>(std::ceil(std::log(eps_tail) / std::log(p_open))));
}

inline Pmf loop_count_pmf_eps(double p_open, double eps_tail) {
  return loop_count_pmf(p_open, loop_count_for_tail(p_open, eps_tail));
}

// w_{k,m}: m-fold self-convolution of the SH delay pmf, cut at k_max.
inline Pmf sh_sum_conditional(const ShDelayPmf& w, int m, int k_max) {
  if (m < 1) throw DomainError("sh_sum_conditional: m must be >= 1");
  Pmf acc = w.pmf;
  if (acc.probs.size() > static_cast<std::size_t>(k_max) + 1) acc.probs.resize(static_cast<std::size_t>(k_max) + 1);
  for (int i = 1; i < m; ++i) acc = convolve(acc, w.pmf, static_cast<std::size_t>(k_max));
  acc.tail = std::max(0.0, 1.0 - acc.mass());
  return acc;
}

struct CycleDistributions {
  Pmf z;                // z_l, l = 0..l_max (z_0 = 0)
  double p_open = 0.0;  // p_H
  int m_max = 0;        // loop count beyond which P[M > m] < eps_tail
  std::size_t l_max = 0;
  double tail = 0.0;
  // Part of the tail due to cutting z at l_max only.
  double truncation_tail = 0.0;
  // Asymptotic geometric decay rate of z_l; 0 for finite support.
  double decay_rate = 0.0;
  LagAdvance lag_advance = LagAdvance::per_loop;
  // Index m-1 holds the conditional tables for M = m.
  std::vector<Pmf> w_m, v_m, z_m;

  double mean() const { return z.mean(); }
};

namespace detail {

struct RenewalResult {
  std::vector<double> z;
  double tail = 0.0;
  double decay_rate = 0.0;
};

// Sum over loops of the partial-cycle mass A_j(l): the cycle has reached
// l slots at the end of a loop whose lag state is j.
//   A_j(l) = init_j w_{l-s_j-1} + p_H sum_i T_ij sum_k w_k A_i(l-k-s_j-1)
//   z_l    = (1 - p_H) sum_j A_j(l)
inline RenewalResult renewal_z(const std::vector<double>& w, const LagChain& chain, const std::vector<double>& init,
                               double p_open, LagAdvance adv, std::size_t l_max) {
  const std::size_t ns = chain.size();
  std::vector<std::vector<double>> a(ns, std::vector<double>(l_max + 1, 0.0));
  RenewalResult res;
  res.z.assign(l_max + 1, 0.0);
  const std::size_t kw = w.size();
  for (std::size_t l = 1; l <= l_max; ++l) {
    double zl = 0.0;
    for (std::size_t j = 0; j < ns; ++j) {
      const std::size_t shift = static_cast<std::size_t>(chain.states[j]) + 1;
      if (l <= shift) continue;
      const std::size_t rem = l - shift;  // slots left for SH delay + earlier loops
      double v = rem < kw ? init[j] * w[rem] : 0.0;
      if (p_open > 0.0) {
        double inner = 0.0;
        for (std::size_t i = 0; i < ns; ++i) {
          const double tij = adv == LagAdvance::per_loop ? chain.transition[i][j] : (i == j ? 1.0 : 0.0);
          if (tij == 0.0) continue;
          const auto& ai = a[i];
          double s = 0.0;
          for (std::size_t k = 1; k < kw && k < rem; ++k) s += w[k] * ai[rem - k];
          inner += tij * s;
        }
        v += p_open * inner;
      }
      a[j][l] = v;
      zl += v;
    }
    res.z[l] = (1.0 - p_open) * zl;
  }

  double total = 0.0;
  for (double x : res.z) total += x;
  const double raw = 1.0 - total;
  const std::size_t win = std::max<std::size_t>(1, l_max / 8);
  double s1 = 0.0, s0 = 0.0;
  if (2 * win < l_max) {
    for (std::size_t l = l_max - win + 1; l <= l_max; ++l) s1 += res.z[l];
    for (std::size_t l = l_max - 2 * win + 1; l + win <= l_max; ++l) s0 += res.z[l];
  } else {
    s1 = raw;
  }
  double extrap = -1.0;
  if (s1 == 0.0) {
    extrap = 0.0;
    res.decay_rate = 0.0;
  } else if (s0 > 0.0 && s1 < s0) {
    const double r = s1 / s0;
    extrap = s1 * r / (1.0 - r);
    res.decay_rate = std::pow(r, 1.0 / static_cast<double>(win));
  } else {
    res.decay_rate = 1.0;
  }
  if (extrap < 0.0) res.tail = std::max(raw, 0.0);
  else if (raw > 1e-12) res.tail = std::max(raw, extrap);
  else res.tail = extrap;
  return res;
}

}  // namespace detail

inline CycleDistributions interval_pmf_at(const ShDelayPmf& w, const LagChain& chain, double p_open,
                                          const CycleOptions& opt, std::size_t l_max) {
  chain.validate();
  if (!(p_open >= 0.0) || p_open >= 1.0) {
    if (p_open >= 1.0) throw DivergenceError("interval_pmf: p_H = 1, no human loop ever closes");
    throw DomainError("interval_pmf: p_H outside [0, 1)");
  }
  const std::vector<double> init = opt.initial ? *opt.initial : stationary(chain);
  if (init.size() != chain.size()) throw DomainError("interval_pmf: initial distribution has wrong size");

  // The recursion runs on the renormalized SH pmf; its own truncation is
  // carried separately in the reported tail.
  std::vector<double> wn = w.pmf.probs;
  const double wmass = w.pmf.mass();
  if (!(wmass > 0.0)) throw DomainError("interval_pmf: SH delay pmf has no mass");
  for (auto& x : wn) x /= wmass;
  auto rr = detail::renewal_z(wn, chain, init, p_open, opt.lag_advance, l_max);
  CycleDistributions d;
  d.p_open = p_open;
  d.m_max = loop_count_for_tail(p_open, opt.eps_tail);
  d.l_max = l_max;
  d.truncation_tail = rr.tail;
  d.tail = rr.tail + w.pmf.tail;
  d.decay_rate = rr.decay_rate;
  d.lag_advance = opt.lag_advance;
  d.z.probs = std::move(rr.z);
  d.z.tail = d.tail;

  if (opt.m_tab > 0) {
    const int mt = opt.m_tab;
    const int k_max = static_cast<int>(std::max<std::size_t>(l_max, static_cast<std::size_t>(mt * chain.max_state())));
    std::optional<LagSumTable> lt;
    if (opt.lag_advance == LagAdvance::per_loop) lt = lag_sum_table(chain, mt, k_max, init, 1.0);
    for (int m = 1; m <= mt; ++m) {
      Pmf wm = sh_sum_conditional(w, m, static_cast<int>(l_max));
      Pmf vm;
      if (lt) {
        vm = lt->marginal(m);
      } else {
        vm.probs.assign(static_cast<std::size_t>(m * chain.max_state()) + 1, 0.0);
        for (std::size_t s = 0; s < chain.size(); ++s)
          vm.probs[static_cast<std::size_t>(m * chain.states[s])] += init[s];
      }
      Pmf zm;
      zm.probs.assign(l_max + 1, 0.0);
      auto wv = convolve(std::span<const double>(wm.probs), std::span<const double>(vm.probs), l_max);
      for (std::size_t k = 0; k < wv.size(); ++k)
        if (k + static_cast<std::size_t>(m) <= l_max) zm.probs[k + static_cast<std::size_t>(m)] = wv[k];
      zm.tail = std::max(0.0, 1.0 - zm.mass());
      d.w_m.push_back(std::move(wm));
      d.v_m.push_back(std::move(vm));
      d.z_m.push_back(std::move(zm));
    }
  }
  return d;
}

inline std::size_t initial_l_max(const ShDelayPmf& w, const LagChain& chain, double p_open) {
  const double loop = w.pmf.mean() + chain.max_state() + 1.0;
  const double el = loop / std::max(1e-12, 1.0 - p_open);
  std::size_t l = 64;
  while (static_cast<double>(l) < 8.0 * el) l *= 2;
  return l;
}

// Interval between consecutive closed human loops, L = sum tau_SH + sum tau_H + M.
// L_max doubles until the tail mass is below eps_tail.
inline CycleDistributions interval_pmf(const ShDelayPmf& w, const LagChain& chain, double p_open,
                                       const CycleOptions& opt = {}) {
  std::size_t l = initial_l_max(w, chain, p_open);
  for (;;) {
    CycleOptions o = opt;
    o.m_tab = 0;
    auto d = interval_pmf_at(w, chain, p_open, o, l);
    if (d.truncation_tail < opt.eps_tail) return opt.m_tab > 0 ? interval_pmf_at(w, chain, p_open, opt, l) : d;
    if (l * 2 > opt.l_cap) {
      std::ostringstream os;
      os << "interval_pmf: tail " << d.tail << " still above " << opt.eps_tail << " at L_max=" << l;
      throw TruncationError(os.str(), d.tail);
    }
    l *= 2;
  }
}

// z together with its inputs, so E[b^L] can widen the truncation when b > 1.
class CycleModel {
 public:
  struct Moment {
    double value = 0.0;
    double tail_bound = 0.0;
    std::size_t l_max = 0;
  };

  CycleModel(ShDelayPmf w, LagChain chain, double p_open, CycleOptions opt = {})
      : w_(std::move(w)), chain_(std::move(chain)), p_open_(p_open), opt_(std::move(opt)) {
    dist_ = interval_pmf(w_, chain_, p_open_, opt_);
  }

  const CycleDistributions& dist() const { return dist_; }
  const ShDelayPmf& sh_delay() const { return w_; }
  const LagChain& chain() const { return chain_; }
  double p_open() const { return p_open_; }
  const CycleOptions& options() const { return opt_; }

  // E[base^L]. For base > 1 the truncation is widened until
  // base^L_max * tail < guard; diverges when base * decay_rate >= 1.
  Moment weighted_mean(double base, double guard = 1e-6) {
    if (!(base >= 0.0) || !std::isfinite(base)) throw DomainError("weighted_mean: base must be finite and >= 0");
    for (;;) {
      const auto& d = dist_;
      if (base > 1.0 && d.truncation_tail > 0.0) {
        if (d.decay_rate * base >= 1.0) {
          std::ostringstream os;
          os << "E[b^L] diverges: b=" << base << ", decay rate of z " << d.decay_rate;
          throw DivergenceError(os.str());
        }
        const double lt = std::log(d.truncation_tail) + static_cast<double>(d.l_max) * std::log(base);
        if (lt > std::log(guard)) {
          if (d.l_max * 2 > opt_.l_cap) {
            std::ostringstream os;
            os << "E[b^L]: truncation guard not met at L_max=" << d.l_max;
            throw TruncationError(os.str(), d.tail);
          }
          dist_ = interval_pmf_at(w_, chain_, p_open_, opt_, d.l_max * 2);
          continue;
        }
      }
      Moment m;
      m.l_max = d.l_max;
      const auto& z = d.z.probs;
      for (std::size_t l = 1; l < z.size(); ++l)
        if (z[l] != 0.0) m.value += std::pow(base, static_cast<double>(l)) * z[l];
      if (d.truncation_tail > 0.0) {
        const double bl = std::pow(base, static_cast<double>(d.l_max));
        const double rho = d.decay_rate;
        m.tail_bound = bl * d.truncation_tail * (base > 1.0 ? (1.0 - rho) / (1.0 - rho * base) : 1.0);
      }
      return m;
    }
  }

 private:
  ShDelayPmf w_;
  LagChain chain_;
  double p_open_;
  CycleOptions opt_;
  CycleDistributions dist_;
};

}  // namespace whmc
