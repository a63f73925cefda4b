#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracle/oracles.hpp"
#include "whmc/linkmodel.hpp"
#include "whmc/random.hpp"

using namespace whmc;

namespace {

LinkBudget reference_link(double d) {
  LinkBudget b;
  b.distance_m = d;
  return b;
}

}  // namespace

TEST(LinkModel, DbmConversion) {
  EXPECT_NEAR(dbm_to_mw(23.0), 199.52623149688796, 1e-10);
  EXPECT_NEAR(dbm_to_mw(-70.0), 1e-7, 1e-20);
  EXPECT_DOUBLE_EQ(dbm_to_mw(0.0), 1.0);
}

TEST(LinkModel, MeanChannelGainMatchesHandComputation) {
  const double ratio = 3e8 / (4.0 * std::numbers::pi * 915e6 * 40.0);
  EXPECT_NEAR(mean_channel_gain(reference_link(40.0)), 4.0 * std::pow(ratio, 2.9), 1e-22);
  EXPECT_NEAR(mean_channel_gain(reference_link(40.0)), 2.31157e-9, 1e-13);
}

TEST(LinkModel, MeanSnrReferenceLinks) {
  EXPECT_NEAR(mean_snr(reference_link(40.0)), oracle::snr_of(4, 915e6, 40, 2.9, 23, -70), 1e-12);
  EXPECT_NEAR(mean_snr(reference_link(40.0)), 4.612197, 1e-6);
  EXPECT_NEAR(mean_snr(reference_link(45.0)), 3.277673, 1e-6);
  EXPECT_TRUE(std::isinf(mean_snr(LinkBudget::ideal())));
}

TEST(LinkModel, InvalidBudgetRejected) {
  LinkBudget b;
  b.distance_m = -1.0;
  EXPECT_THROW(mean_snr(b), DomainError);
  b = LinkBudget{};
  b.noise_power_mw = 0.0;
  EXPECT_THROW(b.validate("links.sc"), DomainError);
}

TEST(LinkModel, DecodeErrorAtCapacityIsOneHalf) {
  // log2(1 + 3) = 2 = rate, so the Q argument is zero whatever l_p is.
  for (double lp : {100.0, 1500.0, 1e5}) {
    CodeConfig c{2.0 * lp, lp};
    EXPECT_NEAR(decode_error_prob(3.0, c), 0.5, 1e-15);
  }
}

TEST(LinkModel, DecodeErrorLimitsAndDomain) {
  CodeConfig c;
  EXPECT_EQ(decode_error_prob(0.0, c), 1.0);
  EXPECT_EQ(decode_error_prob(std::numeric_limits<double>::infinity(), c), 0.0);
  EXPECT_THROW(decode_error_prob(-1e-3, c), DomainError);
  EXPECT_THROW(decode_error_prob(std::nan(""), c), DomainError);
}

TEST(LinkModel, DecodeErrorMatchesOracle) {
  CodeConfig c;
  for (double g : {0.5, 2.9, 3.0, 3.1, 5.0, 20.0})
    EXPECT_NEAR(decode_error_prob(g, c), oracle::eps(g, 3000, 1500), 1e-14) << g;
}

TEST(LinkModel, DecodeErrorMonotoneInSnr) {
  CodeConfig c;
  double prev = 1.0;
  for (int i = 0; i <= 4000; ++i) {
    const double g = i * 0.005;
    const double e = decode_error_prob(g, c);
    EXPECT_LE(e, prev + 1e-15) << g;
    prev = e;
  }
}

TEST(LinkModel, ThresholdSnr) {
  EXPECT_NEAR(threshold_snr(CodeConfig{}), 3.0, 1e-15);
}

TEST(LinkModel, ExpectedErrorMatchesBruteForce) {
  CodeConfig c;
  for (double gbar : {0.3, 3.277673, 4.612197, 30.0}) {
    EXPECT_NEAR(expected_error_prob(gbar, c), oracle::mean_eps(gbar, 3000, 1500), 2e-7) << gbar;
  }
  CodeConfig shortc{200, 100};
  EXPECT_NEAR(expected_error_prob(4.0, shortc), oracle::mean_eps(4.0, 200, 100), 2e-7);
}

TEST(LinkModel, ExpectedErrorLimits) {
  CodeConfig c;
  EXPECT_EQ(expected_error_prob(0.0, c), 1.0);
  EXPECT_EQ(expected_error_prob(std::numeric_limits<double>::infinity(), c), 0.0);
  EXPECT_THROW(expected_error_prob(-2.0, c), DomainError);
}

TEST(LinkModel, ExpectedErrorMonotoneInMeanSnr) {
  CodeConfig c;
  double prev = 1.0;
  for (double g = 0.1; g < 200.0; g *= 1.3) {
    const double e = expected_error_prob(g, c);
    EXPECT_LT(e, prev);
    prev = e;
  }
}

// Frozen from the brute-force oracle on the reference links.
TEST(LinkModel, CaseStudyOpenLoopProbabilities) {
  CodeConfig c;
  const double e40 = oracle::mean_eps(oracle::snr_of(4, 915e6, 40, 2.9, 23, -70), 3000, 1500);
  const double e45 = oracle::mean_eps(oracle::snr_of(4, 915e6, 45, 2.9, 23, -70), 3000, 1500);
  EXPECT_NEAR(open_machine_loop_prob(reference_link(40), reference_link(40), c), 1.0 - (1.0 - e40) * (1.0 - e40), 1e-6);
  EXPECT_NEAR(expected_error_prob(reference_link(45), c), e45, 1e-7);
  EXPECT_NEAR(open_machine_loop_prob(reference_link(40), reference_link(40), c), 0.72775217, 1e-7);
  EXPECT_NEAR(expected_error_prob(reference_link(45), c), 0.59958366, 1e-7);
}

TEST(LinkModel, OpenMachineLoopComposition) {
  CodeConfig c;
  const double a = expected_error_prob(reference_link(30), c);
  const double b = expected_error_prob(reference_link(50), c);
  EXPECT_NEAR(open_machine_loop_prob(reference_link(30), reference_link(50), c), 1.0 - (1.0 - a) * (1.0 - b), 1e-15);
  EXPECT_EQ(open_machine_loop_prob(LinkBudget::ideal(), LinkBudget::ideal(), c), 0.0);
}

TEST(LinkModel, SampledSnrIsExponential) {
  Rng rng = make_stream(3, "test");
  const double gbar = 4.0;
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  int below = 0;
  for (int i = 0; i < n; ++i) {
    const double g = sample_snr(gbar, rng);
    ASSERT_GE(g, 0.0);
    s += g;
    s2 += g * g;
    below += g < gbar;
  }
  const double m = s / n;
  const double se = std::sqrt((s2 / n - m * m) / n);
  EXPECT_NEAR(m, gbar, 4 * se);
  const double pb = 1.0 - std::exp(-1.0);
  EXPECT_NEAR(below / double(n), pb, 4 * std::sqrt(pb * (1 - pb) / n));
}
