#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "whmc/errors.hpp"
#include "whmc/linkmodel.hpp"
#include "whmc/pmf.hpp"
#include "whmc/random.hpp"

namespace whmc {

enum class HarqScheme { TI, CC, IR };

inline const char* to_string(HarqScheme s) {
  switch (s) {
    case HarqScheme::TI: return "TI";
    case HarqScheme::CC: return "CC";
    case HarqScheme::IR: return "IR";
  }
  return "?";
}

inline HarqScheme parse_harq_scheme(const std::string& s) {
  if (s == "TI" || s == "ti") return HarqScheme::TI;
  if (s == "CC" || s == "cc") return HarqScheme::CC;
  if (s == "IR" || s == "ir") return HarqScheme::IR;
  throw DomainError("unknown HARQ scheme '" + s + "' (expected TI, CC or IR)");
}

struct HarqConfig {
  HarqScheme scheme = HarqScheme::IR;
  int max_attempts = 3;
  CodeConfig code;

  void validate() const {
    if (max_attempts < 1) throw DomainError("harq.max_attempts must be >= 1");
    code.validate();
  }
};

struct ThetaOptions {
  std::uint64_t mc_budget = 1'000'000;
  std::uint64_t master_seed = 20240917;
  // Monte Carlo results whose standard error exceeds this carry a warning.
  double se_warn = 1e-3;
};

struct ThetaResult {
  double value = 1.0;
  double std_error = 0.0;
  std::string warning;
};

namespace detail {

// Theta_CC(r) = E[eps(gbar T)], T ~ Gamma(r, 1). The step at the capacity
// threshold is integrated in closed form via the regularized incomplete gamma.
inline double theta_cc(double gbar, int r, const CodeConfig& code) {
  const double tstar = threshold_snr(code) / gbar;
  const double shape = r;
  auto pdf = [&](double t) { return t <= 0.0 ? (r == 1 ? 1.0 : 0.0) : boost::math::gamma_p_derivative(shape, t); };
  auto below = [&](double t) { return (decode_error_prob(gbar * t, code) - 1.0) * pdf(t); };
  auto above = [&](double t) { return decode_error_prob(gbar * t, code) * pdf(t); };
  double total = boost::math::gamma_p(shape, tstar);
  total += integrate(below, 0.0, tstar, 1e-9, 1e-13, "theta_cc").value;
  total += integrate(above, tstar, std::numeric_limits<double>::infinity(), 1e-9, 1e-13, "theta_cc").value;
  return std::clamp(total, 0.0, 1.0);
}

// Incremental redundancy: decoding fails unless the accumulated mutual
// information over r blocks clears the rate, in the normal approximation.
inline ThetaResult theta_ir_mc(double gbar, int r, const CodeConfig& code, const ThetaOptions& opt) {
  Rng rng = make_stream(opt.master_seed, "theta/IR", static_cast<std::uint64_t>(r));
  const double rate = code.rate();
  const double lp = code.packet_len;
  double sum = 0.0, sumsq = 0.0;
  const std::uint64_t n = opt.mc_budget;
  for (std::uint64_t i = 0; i < n; ++i) {
    double c = 0.0, v = 0.0;
    for (int j = 0; j < r; ++j) {
      const double g = gbar * draw_exp1(rng);
      c += std::log2(1.0 + g);
      v += channel_dispersion(g);
    }
    double e = 1.0;
    if (v > 0.0) e = std::clamp(gaussian_q((c - rate) / std::sqrt(v / lp)), 0.0, 1.0);
    sum += e;
    sumsq += e * e;
  }
  ThetaResult res;
  const double dn = static_cast<double>(n);
  res.value = sum / dn;
  const double var = std::max(0.0, sumsq / dn - res.value * res.value);
  res.std_error = std::sqrt(var / std::max(1.0, dn - 1.0));
  return res;
}

struct ThetaKey {
  int scheme;
  std::uint64_t gbar_bits, bits_bits, lp_bits;
  int r;
  std::uint64_t budget, seed;
  auto tie() const { return std::tie(scheme, gbar_bits, bits_bits, lp_bits, r, budget, seed); }
  bool operator<(const ThetaKey& o) const { return tie() < o.tie(); }
};

struct ThetaEntry {
  std::once_flag once;
  ThetaResult result;
};

class ThetaCache {
 public:
  static ThetaCache& instance() {
    static ThetaCache c;
    return c;
  }

  template <class F>
  ThetaResult get(const ThetaKey& key, F&& compute) {
    std::shared_ptr<ThetaEntry> e;
    {
      std::lock_guard lk(mu_);
      auto& slot = map_[key];
      if (!slot) slot = std::make_shared<ThetaEntry>();
      e = slot;
    }
    std::call_once(e->once, [&] { e->result = compute(); });
    return e->result;
  }

  void clear() {
    std::lock_guard lk(mu_);
    map_.clear();
  }

  std::size_t size() {
    std::lock_guard lk(mu_);
    return map_.size();
  }

 private:
  std::mutex mu_;
  std::map<ThetaKey, std::shared_ptr<ThetaEntry>> map_;
};

inline ThetaResult theta_uncached(HarqScheme scheme, double gbar, int r, const CodeConfig& code,
                                  const ThetaOptions& opt) {
  ThetaResult res;
  if (std::isinf(gbar)) {
    res.value = 0.0;
    return res;
  }
  const double e1 = expected_error_prob(gbar, code);
  if (r == 1) {
    res.value = e1;
    return res;
  }
  switch (scheme) {
    case HarqScheme::TI: res.value = std::pow(e1, r); break;
    case HarqScheme::CC: res.value = theta_cc(gbar, r, code); break;
    case HarqScheme::IR: {
      res = theta_ir_mc(gbar, r, code, opt);
      if (res.std_error > opt.se_warn) {
        std::ostringstream os;
        os << "IR Monte Carlo standard error " << res.std_error << " at r=" << r << " exceeds " << opt.se_warn;
        res.warning = os.str();
      }
      break;
    }
  }
  return res;
}

}  // namespace detail

// Fading-averaged probability that r attempts of one HARQ trial all fail.
inline ThetaResult theta(const HarqConfig& cfg, double gbar, int r, const ThetaOptions& opt = {}) {
  cfg.validate();
  if (r < 1 || r > cfg.max_attempts) {
    std::ostringstream os;
    os << "theta: r=" << r << " outside [1, " << cfg.max_attempts << "]";
    throw DomainError(os.str());
  }
  if (std::isnan(gbar) || gbar < 0.0) throw DomainError("theta: mean snr must be >= 0");
  detail::ThetaKey key{static_cast<int>(cfg.scheme),
                       std::bit_cast<std::uint64_t>(gbar),
                       std::bit_cast<std::uint64_t>(cfg.code.payload_bits),
                       std::bit_cast<std::uint64_t>(cfg.code.packet_len),
                       r,
                       cfg.scheme == HarqScheme::IR ? opt.mc_budget : 0,
                       cfg.scheme == HarqScheme::IR ? opt.master_seed : 0};
  return detail::ThetaCache::instance().get(
      key, [&] { return detail::theta_uncached(cfg.scheme, gbar, r, cfg.code, opt); });
}

inline ThetaResult theta(const HarqConfig& cfg, const LinkBudget& link, int r, const ThetaOptions& opt = {}) {
  link.validate();
  return theta(cfg, mean_snr(link), r, opt);
}

// Theta(0..N) with Theta(0) = 1. A running minimum keeps the Monte Carlo
// curve non-increasing; the analytic schemes already are.
struct ThetaCurve {
  std::vector<double> values;
  std::vector<double> std_errors;
  std::vector<std::string> warnings;
};

inline ThetaCurve theta_curve(const HarqConfig& cfg, double gbar, const ThetaOptions& opt = {}) {
  ThetaCurve c;
  c.values.push_back(1.0);
  c.std_errors.push_back(0.0);
  for (int r = 1; r <= cfg.max_attempts; ++r) {
    auto t = theta(cfg, gbar, r, opt);
    c.values.push_back(std::min(t.value, c.values.back()));
    c.std_errors.push_back(t.std_error);
    if (!t.warning.empty()) c.warnings.push_back(t.warning);
  }
  return c;
}

// Delay of a successful SH delivery, in slots. probs[0] is always 0.
struct ShDelayPmf {
  Pmf pmf;
  std::vector<double> theta;  // Theta(0..N)
  int max_attempts = 1;
};

inline ShDelayPmf sh_delay_pmf_from_theta(const std::vector<double>& th, double eps_tail = 1e-9) {
  if (th.size() < 2) throw DomainError("sh_delay_pmf: need Theta(0..N) with N >= 1");
  if (!(eps_tail > 0.0)) throw DomainError("sh_delay_pmf: eps_tail must be positive");
  const int n = static_cast<int>(th.size()) - 1;
  const double tn = th[n];
  if (tn >= 1.0) throw DivergenceError("sh_delay_pmf: Theta(N) = 1, the SH delay is almost surely infinite");
  ShDelayPmf out;
  out.theta = th;
  out.max_attempts = n;
  auto& p = out.pmf.probs;
  p.push_back(0.0);
  double tail = 1.0;  // Theta(N)^q before trial q
  for (int q = 0; tail >= eps_tail; ++q) {
    for (int j = 1; j <= n; ++j) p.push_back(tail * (th[j - 1] - th[j]));
    tail *= tn;
    if (tn == 0.0) break;
    if (q > 1'000'000) throw TruncationError("sh_delay_pmf: tail did not fall below eps_tail", tail);
  }
  out.pmf.tail = tail;
  out.pmf.trim_trailing_zeros();
  return out;
}

inline ShDelayPmf sh_delay_pmf(const HarqConfig& cfg, double gbar, double eps_tail = 1e-9,
                               const ThetaOptions& opt = {}) {
  return sh_delay_pmf_from_theta(theta_curve(cfg, gbar, opt).values, eps_tail);
}

inline ShDelayPmf sh_delay_pmf(const HarqConfig& cfg, const LinkBudget& link, double eps_tail = 1e-9,
                               const ThetaOptions& opt = {}) {
  link.validate();
  return sh_delay_pmf(cfg, mean_snr(link), eps_tail, opt);
}

}  // namespace whmc
