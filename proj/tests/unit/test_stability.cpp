#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "whmc/harq.hpp"
#include "whmc/stability.hpp"

using namespace whmc;

namespace {

ShDelayPmf reference_sh(HarqScheme s = HarqScheme::IR, int n = 3) {
  HarqConfig c;
  c.scheme = s;
  c.max_attempts = n;
  LinkBudget b;
  b.distance_m = 45.0;
  return sh_delay_pmf(c, b, 1e-12);
}

// L = 1 (SH) + 1 (lag) + 1 (HA) with probability one.
CycleModel fixed_three() { return CycleModel(sh_delay_pmf_from_theta({1.0, 0.0}), LagChain{{1}, {{1.0}}}, 0.0); }

CycleModel case_study_model() {
  return CycleModel(reference_sh(), LagChain{{3, 7}, {{0.2576, 0.7424}, {0.4404, 0.5596}}}, 0.59958366);
}

const LyapunovGains kCase{0.5271, 0.7949, 1.0196, 1.0134};

}  // namespace

TEST(Stability, NamesRoundTrip) {
  for (auto g : {GainName::alpha_hm, GainName::alpha_m, GainName::alpha_h, GainName::alpha})
    EXPECT_EQ(parse_gain_name(to_string(g)), g);
  for (auto r : {Regime::collab, Regime::machine_only, Regime::human_only, Regime::error_free})
    EXPECT_EQ(parse_regime(to_string(r)), r);
  EXPECT_THROW(parse_gain_name("beta"), DomainError);
  EXPECT_THROW(parse_regime("both"), DomainError);
}

TEST(Stability, HandComputedLhs) {
  // Omega = 0.6*0.5 + 1.0*0.5 = 0.8, Lambda = 0.5*0.5 + 0.9*0.5 = 0.7, L = 3.
  auto cm = fixed_three();
  const auto v = collab_lhs({0.5, 0.6, 0.9, 1.0}, 0.5, cm);
  EXPECT_NEAR(v.omega, 0.8, 1e-15);
  EXPECT_NEAR(v.lambda, 0.7, 1e-15);
  EXPECT_NEAR(v.lhs, 0.8 * 0.8 * 0.8 * 0.7, 1e-15);
  EXPECT_TRUE(v.stable);
  EXPECT_FALSE(v.boundary);
}

TEST(Stability, OmegaOneGivesLambda) {
  auto cm = fixed_three();
  const auto v = collab_lhs({0.5, 0.8, 0.9, 1.2}, 0.5, cm);
  EXPECT_NEAR(v.lhs, 0.7, 1e-15);
}

TEST(Stability, StrictnessBand) {
  StabilityVerdict v;
  v.lhs = 1.0 - 1e-13;
  classify(v);
  EXPECT_FALSE(v.stable);
  EXPECT_TRUE(v.boundary);
  v.lhs = 1.0 - 1e-11;
  classify(v);
  EXPECT_TRUE(v.stable);
  EXPECT_FALSE(v.boundary);
  v.lhs = 1.5;
  classify(v);
  EXPECT_FALSE(v.stable);
  EXPECT_FALSE(v.boundary);
}

TEST(Stability, MachineOnlyClosedFormEqualsSeries) {
  for (double p : {0.1, 0.5, 0.72775217, 0.9})
    for (LyapunovGains g : {kCase, LyapunovGains{0.3, 0.5, 0.8, 1.05}}) {
      const auto v = machine_only_lhs(g, p);
      EXPECT_NEAR(v.lhs, machine_only_series(g, p), 1e-12) << p;
    }
}

TEST(Stability, MachineOnlyDivergence) {
  const auto v = machine_only_lhs({0.5, 0.5, 0.5, 2.0}, 0.6);
  EXPECT_TRUE(v.diverged);
  EXPECT_TRUE(std::isinf(v.lhs));
  EXPECT_FALSE(v.stable);
}

TEST(Stability, ErrorFreeHandComputed) {
  const LagChain c{{3, 7}, chains::random_response()};
  const LyapunovGains g{0.5, 0.9, 1.0, 1.0};
  const auto v = error_free_lhs(g, c);
  EXPECT_NEAR(v.lhs, 0.5 * (0.5 * std::pow(0.9, 4) + 0.5 * std::pow(0.9, 8)), 1e-15);
}

TEST(Stability, HumanOnlyUsesAlpha) {
  auto cm = fixed_three();
  const auto v = human_only_lhs({0.1, 0.2, 0.9, 1.1}, cm);
  EXPECT_NEAR(v.lhs, std::pow(1.1, 3) * 0.9, 1e-14);
  EXPECT_FALSE(v.stable);
}

TEST(Stability, CaseStudyValues) {
  auto cm = case_study_model();
  const double pm = 0.72775217;
  EXPECT_NEAR(collab_lhs(kCase, pm, cm).lhs, 0.40592, 2e-4);
  EXPECT_NEAR(human_only_lhs(kCase, cm).lhs, 1.38160, 2e-3);
  EXPECT_NEAR(machine_only_lhs(kCase, pm).lhs, 0.82443, 1e-5);
}

TEST(Stability, LhsMonotoneInEachGain) {
  auto cm = case_study_model();
  const double pm = 0.72775217;
  for (auto gname : {GainName::alpha_hm, GainName::alpha_m, GainName::alpha_h, GainName::alpha}) {
    double prev = -1.0;
    for (double x = 0.05; x <= 1.2; x += 0.05) {
      LyapunovGains g = kCase;
      g[gname] = x;
      const double v = collab_lhs(g, pm, cm).lhs;
      EXPECT_GE(v, prev) << to_string(gname) << " " << x;
      prev = v;
    }
  }
}

TEST(Stability, InvalidInputs) {
  auto cm = fixed_three();
  EXPECT_THROW(collab_lhs({-0.1, 0.5, 0.5, 1.0}, 0.5, cm), DomainError);
  EXPECT_THROW(collab_lhs(kCase, 1.5, cm), DomainError);
  EXPECT_THROW(collab_lhs({0.1, 0.5, 0.5, 0.0}, 0.5, cm), DomainError);
}

TEST(Stability, DivergentMomentIsUnstable) {
  auto cm = case_study_model();
  const auto v = collab_lhs({0.5, 5.0, 0.5, 5.0}, 0.72775217, cm);
  EXPECT_TRUE(v.diverged);
  EXPECT_FALSE(v.stable);
}

TEST(Stability, HmHBoundaryIsStraight) {
  auto cm = case_study_model();
  const double pm = 0.72775217;
  std::vector<double> xs;
  for (int i = 0; i <= 20; ++i) xs.push_back(0.05 * i);
  const auto pts = boundary_curve(GainName::alpha_h, GainName::alpha_hm, kCase, pm, cm, xs);
  const auto line = boundary_linear_hm_h(kCase, pm, cm);
  EXPECT_NEAR(line.slope, -pm / (1.0 - pm), 1e-15);
  for (const auto& p : pts) {
    if (p.empty) continue;
    ASSERT_FALSE(p.unbounded);
    EXPECT_NEAR(p.y, line.at(p.x), 1e-9);
    EXPECT_NEAR(p.lhs, 1.0, 1e-6);
  }
}

TEST(Stability, MAlphaBoundaryThroughOmegaStar) {
  auto cm = case_study_model();
  const double pm = 0.72775217;
  const auto ob = boundary_linear_m_alpha(kCase, pm, cm);
  ASSERT_FALSE(ob.unbounded);
  for (double a : {0.5, 0.8, 1.0}) {
    LyapunovGains g = kCase;
    g.alpha = a;
    g.alpha_m = ob.line.at(a);
    if (g.alpha_m < 0) continue;
    EXPECT_NEAR(collab_lhs_raw(g, pm, cm), 1.0, 1e-9) << a;
    EXPECT_NEAR(omega_of(g, pm), ob.omega_star, 1e-12);
  }
}

TEST(Stability, MHBoundaryIsConcave) {
  auto cm = case_study_model();
  std::vector<double> xs;
  for (int i = 0; i <= 20; ++i) xs.push_back(0.05 * i);
  const auto pts = boundary_curve(GainName::alpha_m, GainName::alpha_h, kCase, 0.72775217, cm, xs);
  const auto d2 = second_differences(pts);
  ASSERT_FALSE(d2.empty());
  for (double v : d2) EXPECT_GE(v, -1e-8);
}

TEST(Stability, BoundaryCurveFlags) {
  auto cm = fixed_three();
  // lhs >= 1 already at y = 0 when alpha_hm is large.
  const auto pts = boundary_curve(GainName::alpha_hm, GainName::alpha_h, {0.0, 0.5, 0.5, 1.0}, 0.5, cm, {3.0 / 0.125 * 2});
  EXPECT_TRUE(pts[0].empty);
  // p_M = 0: alpha_h never enters, so no finite alpha_h reaches the boundary.
  const auto un = boundary_curve(GainName::alpha_hm, GainName::alpha_h, {0.0, 0.5, 0.5, 1.0}, 0.0, cm, {0.1});
  EXPECT_TRUE(un[0].unbounded);
  EXPECT_THROW(boundary_curve(GainName::alpha, GainName::alpha, kCase, 0.5, cm, {0.1}), DomainError);
  EXPECT_THROW(boundary_curve(GainName::alpha, GainName::alpha_h, kCase, 0.5, cm, {}), DomainError);
}

TEST(Stability, RasterAgreesWithBoundary) {
  auto cm = case_study_model();
  const double pm = 0.72775217;
  const std::vector<double> xs{0.1, 0.5, 0.9}, ys{0.0, 0.5, 1.0, 1.5, 2.0};
  const auto cells = region_raster(GainName::alpha_hm, GainName::alpha_h, kCase, pm, cm, xs, ys);
  const auto pts = boundary_curve(GainName::alpha_hm, GainName::alpha_h, kCase, pm, cm, xs);
  ASSERT_EQ(cells.size(), 15u);
  for (const auto& c : cells) {
    const auto it = std::find_if(pts.begin(), pts.end(), [&](const BoundaryPoint& p) { return p.x == c.x; });
    EXPECT_EQ(c.stable, c.y < it->y);
  }
}
