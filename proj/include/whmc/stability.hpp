#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "whmc/cycledist.hpp"
#include "whmc/errors.hpp"
#include "whmc/humanmodel.hpp"

namespace whmc {

enum class GainName { alpha_hm, alpha_m, alpha_h, alpha };

inline const char* to_string(GainName g) {
  switch (g) {
    case GainName::alpha_hm: return "alpha_hm";
    case GainName::alpha_m: return "alpha_m";
    case GainName::alpha_h: return "alpha_h";
    case GainName::alpha: return "alpha";
  }
  return "?";
}

inline GainName parse_gain_name(const std::string& s) {
  if (s == "alpha_hm") return GainName::alpha_hm;
  if (s == "alpha_m") return GainName::alpha_m;
  if (s == "alpha_h") return GainName::alpha_h;
  if (s == "alpha") return GainName::alpha;
  throw DomainError("unknown gain '" + s + "' (expected alpha_hm, alpha_m, alpha_h or alpha)");
}

// One-step cost ratios: both loops closed, machine only, human only, neither.
struct LyapunovGains {
  double alpha_hm = 0.0;
  double alpha_m = 0.0;
  double alpha_h = 0.0;
  double alpha = 1.0;

  double& operator[](GainName g) {
    switch (g) {
      case GainName::alpha_hm: return alpha_hm;
      case GainName::alpha_m: return alpha_m;
      case GainName::alpha_h: return alpha_h;
      case GainName::alpha: break;
    }
    return alpha;
  }
  double operator[](GainName g) const { return const_cast<LyapunovGains&>(*this)[g]; }

  void validate() const {
    for (auto g : {GainName::alpha_hm, GainName::alpha_m, GainName::alpha_h, GainName::alpha}) {
      const double v = (*this)[g];
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError(std::string("gains.") + to_string(g) + " must be >= 0");
    }
    if (!(alpha > 0.0)) throw DomainError("gains.alpha must be > 0");
  }
};

enum class Regime { collab, machine_only, human_only, error_free };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::collab: return "collab";
    case Regime::machine_only: return "machine";
    case Regime::human_only: return "human";
    case Regime::error_free: return "error-free";
  }
  return "?";
}

inline Regime parse_regime(const std::string& s) {
  if (s == "collab" || s == "collaborative") return Regime::collab;
  if (s == "machine" || s == "machine-only") return Regime::machine_only;
  if (s == "human" || s == "human-only") return Regime::human_only;
  if (s == "error-free" || s == "error_free") return Regime::error_free;
  throw DomainError("unknown regime '" + s + "' (expected collab, machine, human or error-free)");
}

inline constexpr double kStrictness = 1e-12;

struct StabilityVerdict {
  Regime regime = Regime::collab;
  double lhs = 0.0;
  bool stable = false;
  // |lhs - 1| within the strictness band.
  bool boundary = false;
  // The cycle moment is infinite; lhs is reported as +inf.
  bool diverged = false;
  double weighted_mean = 0.0;  // E[Omega^L], E[alpha^L] or E[alpha_M^L]
  double omega = 0.0;
  double lambda = 0.0;
  double p_m = 0.0;
  double truncation_bound = 0.0;
  std::string note;
};

inline void classify(StabilityVerdict& v) {
  v.stable = v.lhs < 1.0 - kStrictness;
  v.boundary = std::abs(v.lhs - 1.0) <= kStrictness;
}

inline double omega_of(const LyapunovGains& g, double p_m) { return g.alpha_m * (1.0 - p_m) + g.alpha * p_m; }
inline double lambda_of(const LyapunovGains& g, double p_m) { return g.alpha_hm * (1.0 - p_m) + g.alpha_h * p_m; }

inline void check_prob(double p, const char* what) {
  if (!(p >= 0.0) || p > 1.0) throw DomainError(std::string(what) + " must lie in [0, 1]");
}

namespace detail {

inline StabilityVerdict cycle_verdict(Regime r, double base, double factor, CycleModel& cm) {
  StabilityVerdict v;
  v.regime = r;
  try {
    auto m = cm.weighted_mean(base);
    v.weighted_mean = m.value;
    v.truncation_bound = m.tail_bound * factor;
    v.lhs = m.value * factor;
  } catch (const DivergenceError& e) {
    v.diverged = true;
    v.weighted_mean = std::numeric_limits<double>::infinity();
    v.lhs = factor > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    v.note = e.what();
  }
  classify(v);
  return v;
}

}  // namespace detail

// E[Omega^L] * Lambda.
inline StabilityVerdict collab_lhs(const LyapunovGains& g, double p_m, CycleModel& cm) {
  g.validate();
  check_prob(p_m, "p_M");
  const double om = omega_of(g, p_m);
  const double la = lambda_of(g, p_m);
  auto v = detail::cycle_verdict(Regime::collab, om, la, cm);
  v.omega = om;
  v.lambda = la;
  v.p_m = p_m;
  return v;
}

// Machine loop always open: E[alpha^L] * alpha_H.
inline StabilityVerdict human_only_lhs(const LyapunovGains& g, CycleModel& cm) {
  g.validate();
  auto v = detail::cycle_verdict(Regime::human_only, g.alpha, g.alpha_h, cm);
  v.omega = g.alpha;
  v.lambda = g.alpha_h;
  v.p_m = 1.0;
  return v;
}

// Human loop absent: alpha_M (1 - p) / (1 - alpha p).
inline StabilityVerdict machine_only_lhs(const LyapunovGains& g, double p_m) {
  g.validate();
  check_prob(p_m, "p_M");
  StabilityVerdict v;
  v.regime = Regime::machine_only;
  v.p_m = p_m;
  v.omega = g.alpha;
  v.lambda = g.alpha_m;
  if (g.alpha * p_m >= 1.0) {
    v.diverged = true;
    v.lhs = std::numeric_limits<double>::infinity();
    v.weighted_mean = v.lhs;
    v.note = "alpha * p_M >= 1: the open-loop run length moment diverges";
  } else {
    v.weighted_mean = g.alpha * (1.0 - p_m) / (1.0 - g.alpha * p_m);
    v.lhs = g.alpha_m * (1.0 - p_m) / (1.0 - g.alpha * p_m);
  }
  classify(v);
  return v;
}

// Same quantity by summing (alpha_M / alpha) sum_l alpha^l (1-p) p^(l-1).
inline double machine_only_series(const LyapunovGains& g, double p_m, double eps = 1e-16) {
  g.validate();
  if (g.alpha * p_m >= 1.0) return std::numeric_limits<double>::infinity();
  double term = g.alpha * (1.0 - p_m);
  double s = 0.0;
  for (int l = 1; l < 10'000'000; ++l) {
    s += term;
    if (term < eps * s) break;
    term *= g.alpha * p_m;
  }
  return g.alpha_m / g.alpha * s;
}

// Perfect channels: sum_k alpha_M^(k+1) v_k * alpha_HM.
inline StabilityVerdict error_free_lhs(const LyapunovGains& g, const LagChain& chain) {
  g.validate();
  const auto v = stationary(chain);
  StabilityVerdict out;
  out.regime = Regime::error_free;
  double e = 0.0;
  for (std::size_t i = 0; i < chain.size(); ++i) e += std::pow(g.alpha_m, chain.states[i] + 1) * v[i];
  out.weighted_mean = e;
  out.omega = g.alpha_m;
  out.lambda = g.alpha_hm;
  out.lhs = e * g.alpha_hm;
  classify(out);
  return out;
}

inline StabilityVerdict evaluate(Regime r, const LyapunovGains& g, double p_m, CycleModel* human_cm,
                                 CycleModel* human_only_cm, const LagChain* chain) {
  switch (r) {
    case Regime::collab:
      if (!human_cm) throw DomainError("collab regime needs cycle distributions");
      return collab_lhs(g, p_m, *human_cm);
    case Regime::human_only:
      if (!human_only_cm) throw DomainError("human-only regime needs cycle distributions");
      return human_only_lhs(g, *human_only_cm);
    case Regime::machine_only: return machine_only_lhs(g, p_m);
    case Regime::error_free:
      if (!chain) throw DomainError("error-free regime needs a lag chain");
      return error_free_lhs(g, *chain);
  }
  throw DomainError("unknown regime");
}

struct Line {
  double slope = 0.0;
  double intercept = 0.0;
  double at(double x) const { return slope * x + intercept; }
};

// alpha_HM as a function of alpha_H on the boundary.
inline Line boundary_linear_hm_h(const LyapunovGains& g, double p_m, CycleModel& cm) {
  g.validate();
  check_prob(p_m, "p_M");
  if (p_m >= 1.0) throw DomainError("boundary_linear_hm_h: p_M must be < 1");
  const double om = omega_of(g, p_m);
  const double e = cm.weighted_mean(om).value;
  return {-p_m / (1.0 - p_m), 1.0 / (e * (1.0 - p_m))};
}

struct OmegaBoundary {
  // Boundary is alpha_M (1 - p) + alpha p = omega_star.
  double omega_star = 0.0;
  // alpha_M as a function of alpha.
  Line line;
  // Lambda = 0: every (alpha_M, alpha) is stable.
  bool unbounded = false;
};

// Solves E[Omega^L] = 1 / Lambda for Omega by bisection.
inline OmegaBoundary boundary_linear_m_alpha(const LyapunovGains& g, double p_m, CycleModel& cm) {
  check_prob(p_m, "p_M");
  if (p_m >= 1.0) throw DomainError("boundary_linear_m_alpha: p_M must be < 1");
  const double la = lambda_of(g, p_m);
  OmegaBoundary out;
  if (!(la > 0.0)) {
    out.unbounded = true;
    out.omega_star = std::numeric_limits<double>::infinity();
    return out;
  }
  const double target = 1.0 / la;
  auto f = [&](double om) {
    try {
      return cm.weighted_mean(om).value;
    } catch (const DivergenceError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  double lo = 0.0, hi = 1.0;
  while (f(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("boundary_linear_m_alpha: no bracket for Omega*");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < target ? lo : hi) = mid;
  }
  out.omega_star = 0.5 * (lo + hi);
  out.line = {-p_m / (1.0 - p_m), out.omega_star / (1.0 - p_m)};
  return out;
}

// lhs of the collaborative test without validating that alpha > 0, for sweeps.
inline double collab_lhs_raw(const LyapunovGains& g, double p_m, CycleModel& cm) {
  const double om = omega_of(g, p_m);
  const double la = lambda_of(g, p_m);
  if (la == 0.0) return 0.0;
  try {
    return cm.weighted_mean(om).value * la;
  } catch (const DivergenceError&) {
    return std::numeric_limits<double>::infinity();
  }
}

struct BoundaryPoint {
  double x = 0.0;
  double y = 0.0;
  double lhs = 0.0;
  // No finite y reaches lhs = 1.
  bool unbounded = false;
  // lhs >= 1 already at y = 0.
  bool empty = false;
};

// For each x on the grid, the y with lhs(x, y) = 1 (lhs increases in y).
inline std::vector<BoundaryPoint> boundary_curve(GainName gx, GainName gy, const LyapunovGains& fixed, double p_m,
                                                 CycleModel& cm, const std::vector<double>& grid,
                                                 double y_cap = 1e12) {
  if (gx == gy) throw DomainError("boundary_curve: the two gains must differ");
  if (grid.empty()) throw DomainError("boundary_curve: empty grid");
  check_prob(p_m, "p_M");
  std::vector<BoundaryPoint> out;
  out.reserve(grid.size());
  for (double x : grid) {
    LyapunovGains g = fixed;
    g[gx] = x;
    auto lhs_at = [&](double y) {
      g[gy] = y;
      return collab_lhs_raw(g, p_m, cm);
    };
    BoundaryPoint bp;
    bp.x = x;
    if (lhs_at(0.0) >= 1.0) {
      bp.empty = true;
      bp.lhs = lhs_at(0.0);
      out.push_back(bp);
      continue;
    }
    double lo = 0.0, hi = 1.0;
    while (lhs_at(hi) < 1.0) {
      lo = hi;
      hi *= 2.0;
      if (hi > y_cap) {
        bp.unbounded = true;
        break;
      }
    }
    if (bp.unbounded) {
      bp.y = std::numeric_limits<double>::infinity();
      bp.lhs = lhs_at(lo);
      out.push_back(bp);
      continue;
    }
    for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      (lhs_at(mid) < 1.0 ? lo : hi) = mid;
    }
    bp.y = 0.5 * (lo + hi);
    bp.lhs = lhs_at(bp.y);
    out.push_back(bp);
  }
  return out;
}

// Three-point second differences (y_{i-1} - 2 y_i + y_{i+1}) / h^2 on a grid
// that need not be uniform: returns the divided second difference.
inline std::vector<double> second_differences(const std::vector<BoundaryPoint>& pts) {
  std::vector<double> out;
  for (std::size_t i = 1; i + 1 < pts.size(); ++i) {
    const auto &a = pts[i - 1], &b = pts[i], &c = pts[i + 1];
    if (a.empty || b.empty || c.empty || a.unbounded || b.unbounded || c.unbounded) continue;
    const double s1 = (b.y - a.y) / (b.x - a.x);
    const double s2 = (c.y - b.y) / (c.x - b.x);
    out.push_back(2.0 * (s2 - s1) / (c.x - a.x));
  }
  return out;
}

struct RasterCell {
  double x = 0.0, y = 0.0, lhs = 0.0;
  bool stable = false;
};

inline std::vector<RasterCell> region_raster(GainName gx, GainName gy, const LyapunovGains& fixed, double p_m,
                                             CycleModel& cm, const std::vector<double>& xs,
                                             const std::vector<double>& ys) {
  std::vector<RasterCell> out;
  out.reserve(xs.size() * ys.size());
  for (double x : xs)
    for (double y : ys) {
      LyapunovGains g = fixed;
      g[gx] = x;
      g[gy] = y;
      RasterCell c{x, y, collab_lhs_raw(g, p_m, cm), false};
      c.stable = c.lhs < 1.0 - kStrictness;
      out.push_back(c);
    }
  return out;
}

}  // namespace whmc
