#include <gtest/gtest.h>

#include "oracle/oracles.hpp"
#include "whmc/humanmodel.hpp"

using namespace whmc;

namespace {

LagChain case_study_chain() { return {{3, 7}, {{0.2576, 0.7424}, {0.4404, 0.5596}}}; }

}  // namespace

TEST(HumanModel, CaseStudyStationaryDistribution) {
  const auto v = stationary(case_study_chain());
  // Two-state closed form: (p10, p01) / (p01 + p10).
  const double p01 = 0.7424, p10 = 0.4404;
  EXPECT_NEAR(v[0], p10 / (p01 + p10), 1e-14);
  EXPECT_NEAR(v[1], p01 / (p01 + p10), 1e-14);
  EXPECT_NEAR(v[0], 0.3723, 1e-3);
  EXPECT_NEAR(v[1], 0.6277, 1e-3);
}

TEST(HumanModel, SymmetricChainsAreUniform) {
  for (const auto& m : {chains::prolonged(), chains::random_response(), chains::variable()}) {
    const auto v = stationary(LagChain{{5, 25}, m});
    EXPECT_NEAR(v[0], 0.5, 1e-12);
    EXPECT_NEAR(v[1], 0.5, 1e-12);
  }
}

TEST(HumanModel, StationaryIsFixedPoint) {
  LagChain c{{1, 2, 4}, {{0.1, 0.6, 0.3}, {0.5, 0.2, 0.3}, {0.3, 0.3, 0.4}}};
  const auto v = stationary(c);
  for (std::size_t j = 0; j < 3; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < 3; ++i) s += v[i] * c.transition[i][j];
    EXPECT_NEAR(s, v[j], 1e-14);
  }
}

TEST(HumanModel, ReducibleChainNamesStates) {
  LagChain c{{3, 7, 9}, {{1.0, 0.0, 0.0}, {0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}}};
  try {
    stationary(c);
    FAIL() << "expected ModelError";
  } catch (const ModelError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('3'), std::string::npos) << msg;
  }
}

TEST(HumanModel, ValidateRejectsBadMatrices) {
  EXPECT_THROW((LagChain{{3, 7}, {{0.5, 0.4}, {0.5, 0.5}}}.validate()), ModelError);
  EXPECT_THROW((LagChain{{3, 3}, {{0.5, 0.5}, {0.5, 0.5}}}.validate()), ModelError);
  EXPECT_THROW((LagChain{{3, 7}, {{1.0}, {0.5, 0.5}}}.validate()), ModelError);
  EXPECT_THROW((LagChain{{0, 7}, {{0.5, 0.5}, {0.5, 0.5}}}.validate()), ModelError);
  EXPECT_THROW((LagChain{{}, {}}.validate()), ModelError);
}

TEST(HumanModel, LagSumTableMatchesPathEnumeration) {
  const auto c = case_study_chain();
  const auto init = stationary(c);
  const auto t = lag_sum_table(c, 5, 40);
  for (int m = 1; m <= 5; ++m) {
    const auto ref = oracle::lag_sum_enum(c.states, c.transition, init, m);
    const auto got = t.marginal(m);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      const double g = k < got.probs.size() ? got.probs[k] : 0.0;
      EXPECT_NEAR(g, ref[k], 1e-15) << "m=" << m << " k=" << k;
    }
  }
}

TEST(HumanModel, LagSumUniformTwoStates) {
  // States {1, 2}, i.i.d. uniform: v_{.,2} = (0.25, 0.5, 0.25) on {2, 3, 4}.
  const auto t = lag_sum_table(LagChain{{1, 2}, chains::random_response()}, 2, 4);
  const auto v = t.marginal(2);
  EXPECT_NEAR(v.probs[2], 0.25, 1e-15);
  EXPECT_NEAR(v.probs[3], 0.5, 1e-15);
  EXPECT_NEAR(v.probs[4], 0.25, 1e-15);
}

TEST(HumanModel, LagSumTruncationIsAnError) {
  const auto c = case_study_chain();
  EXPECT_THROW(lag_sum_table(c, 3, 10), TruncationError);
  EXPECT_THROW(lag_sum_table(c, 3, 5), DomainError);
}

TEST(HumanModel, EstimateChainSmallSequence) {
  const auto est = estimate_chain({3, 7, 7, 3}, {3, 7});
  EXPECT_EQ(est.chain.transition[0][0], 0.0);
  EXPECT_EQ(est.chain.transition[0][1], 1.0);
  EXPECT_EQ(est.chain.transition[1][0], 0.5);
  EXPECT_EQ(est.chain.transition[1][1], 0.5);
  EXPECT_EQ(est.row_counts[0], 1u);
  EXPECT_EQ(est.row_counts[1], 2u);
  EXPECT_TRUE(est.warnings.empty());
}

TEST(HumanModel, EstimateChainUnvisitedRowFallsBack) {
  const auto est = estimate_chain({3, 3, 3}, {3, 7});
  EXPECT_EQ(est.chain.transition[1][0], 0.5);
  EXPECT_EQ(est.chain.transition[1][1], 0.5);
  ASSERT_EQ(est.warnings.size(), 1u);
  EXPECT_NE(est.warnings[0].find('7'), std::string::npos);
}

TEST(HumanModel, EstimateChainErrors) {
  EXPECT_THROW(estimate_chain({3}, {3, 7}), InsufficientDataError);
  EXPECT_THROW(estimate_chain({3, 5}, {3, 7}), DataError);
}

TEST(HumanModel, QuantizeNearestTiesDown) {
  const auto q = quantize_lags({0.16, 0.25, 0.40, 0.01, 0.35}, {0.15, 0.35}, 0.05);
  ASSERT_EQ(q.states, (std::vector<int>{3, 7}));
  EXPECT_EQ(q.lags, (std::vector<int>{3, 3, 7, 3, 7}));
}

TEST(HumanModel, QuantizeRejectsBadInput) {
  EXPECT_THROW(quantize_lags({-0.1}, {0.15, 0.35}, 0.05), DataError);
  EXPECT_THROW(quantize_lags({0.1}, {}, 0.05), DomainError);
  EXPECT_THROW(quantize_lags({0.1}, {0.15, 0.15}, 0.05), DomainError);
  EXPECT_THROW(quantize_lags({0.1}, {0.01}, 0.05), DomainError);
}

TEST(HumanModel, SimulateThenEstimateRecoversChain) {
  const LagChain c{{5, 25}, chains::prolonged()};
  Rng rng = make_stream(11, "test");
  const auto seq = simulate_chain(c, 100000, rng);
  const auto est = estimate_chain(seq, c.states);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(est.chain.transition[i][j], c.transition[i][j], 0.01);
}
