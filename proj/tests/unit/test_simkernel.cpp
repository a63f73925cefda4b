#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "whmc/cartpole.hpp"
#include "whmc/cycledist.hpp"
#include "whmc/simkernel.hpp"

using namespace whmc;

namespace {

Scenario perfect(std::vector<int> lags = {1}) {
  Scenario s;
  s.sc = s.ca = s.sh = s.ha = LinkBudget::ideal();
  const std::size_t n = lags.size();
  s.chain = LagChain{std::move(lags), std::vector<std::vector<double>>(n, std::vector<double>(n, 1.0 / double(n)))};
  s.horizon = 30;
  return s;
}

Scenario reference_scenario(std::uint64_t seed = 5) {
  Scenario s;
  s.sc.distance_m = s.ca.distance_m = 40.0;
  s.sh.distance_m = s.ha.distance_m = 45.0;
  s.chain = LagChain{{3, 7}, {{0.2576, 0.7424}, {0.4404, 0.5596}}};
  s.horizon = 5000;
  s.seed = seed;
  return s;
}

// x(t+1) = 2 x(t) + inputs.
struct Doubling {
  using State = double;
  double machine_input(const State&) const { return 0.0; }
  double human_input(const State&) const { return 0.0; }
  State step(const State& s, double, double, Rng&) const { return 2.0 * s; }
  double norm(const State& s) const { return std::abs(s); }
};

template <class P>
std::vector<TraceRecord<typename P::State>> trace(const Scenario& s, const P& p, typename P::State x0) {
  std::vector<TraceRecord<typename P::State>> out;
  run(s, p, x0, [&](const TraceRecord<typename P::State>& r) { out.push_back(r); });
  return out;
}

}  // namespace

TEST(SimKernel, PerfectChannelsGiveFixedPeriod) {
  // SH in one slot, a one-slot lag, HA in one slot: the human command lands
  // every third slot, starting at t = 3.
  const auto tr = trace(perfect(), NullPlant{}, {});
  ASSERT_EQ(tr.size(), 30u);
  for (const auto& r : tr) {
    EXPECT_TRUE(r.machine_closed);
    EXPECT_EQ(r.human_closed, r.t > 0 && r.t % 3 == 0) << r.t;
    EXPECT_EQ(r.case_label, r.human_closed ? 1 : 2);
    if (r.t % 3 == 2) {
      EXPECT_EQ(r.ha, Tx::ok);
      EXPECT_EQ(r.cycle_len, 3u);
      EXPECT_EQ(r.cycle_loops, 1u);
    } else {
      EXPECT_EQ(r.cycle_len, 0u);
    }
    EXPECT_EQ(r.human_loop, r.t / 3 + 1);
  }
}

TEST(SimKernel, SameSeedReplaysExactly) {
  const cartpole::CartPole plant;
  auto s = reference_scenario(17);
  s.horizon = 400;
  const auto a = trace(s, plant, cartpole::initial_state());
  const auto b = trace(s, plant, cartpole::initial_state());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].state, b[i].state);
    EXPECT_EQ(a[i].case_label, b[i].case_label);
    EXPECT_EQ(a[i].u_m, b[i].u_m);
    EXPECT_EQ(a[i].sh, b[i].sh);
  }
  s.seed = 18;
  const auto c = trace(s, plant, cartpole::initial_state());
  bool differs = false;
  for (std::size_t i = 0; i < std::min(a.size(), c.size()); ++i) differs = differs || a[i].case_label != c[i].case_label;
  EXPECT_TRUE(differs);
}

TEST(SimKernel, CaseLabelsPartitionSteps) {
  const auto tr = trace(reference_scenario(), NullPlant{}, {});
  std::map<int, std::size_t> counts;
  for (const auto& r : tr) {
    EXPECT_EQ(r.case_label, case_label(r.machine_closed, r.human_closed));
    ++counts[r.case_label];
  }
  std::size_t total = 0;
  for (const auto& [k, n] : counts) {
    EXPECT_GE(k, 1);
    EXPECT_LE(k, 4);
    total += n;
  }
  EXPECT_EQ(total, tr.size());
  EXPECT_EQ(counts.size(), 4u);
}

TEST(SimKernel, NoActuationWithoutSensing) {
  for (const auto& r : trace(reference_scenario(), NullPlant{}, {})) {
    ASSERT_NE(r.sc, Tx::none);
    if (r.sc == Tx::fail) {
      EXPECT_EQ(r.ca, Tx::none);
    }
    EXPECT_EQ(r.machine_closed, r.ca == Tx::ok);
  }
}

TEST(SimKernel, LagFixedWithinALoop) {
  auto s = reference_scenario();
  s.chain = LagChain{{2, 5, 9}, {{0.1, 0.6, 0.3}, {0.5, 0.2, 0.3}, {0.3, 0.3, 0.4}}};
  std::map<std::uint64_t, int> lag_of;
  std::map<std::uint64_t, int> lag_slots;
  for (const auto& r : trace(s, NullPlant{}, {})) {
    auto [it, fresh] = lag_of.emplace(r.human_loop, r.lag);
    if (!fresh) {
      EXPECT_EQ(it->second, r.lag) << r.human_loop;
    }
    if (r.phase == HumanPhase::lag) ++lag_slots[r.human_loop];
  }
  // Every completed loop spends exactly its lag in the lag phase.
  for (const auto& [loop, n] : lag_slots) {
    if (lag_slots.count(loop + 1)) {
      EXPECT_EQ(n, lag_of[loop]) << loop;
    }
  }
}

TEST(SimKernel, RegimesSwitchLoopsOff) {
  auto s = reference_scenario();
  s.regime = Regime::machine_only;
  for (const auto& r : trace(s, NullPlant{}, {})) {
    EXPECT_EQ(r.sh, Tx::none);
    EXPECT_FALSE(r.human_closed);
  }
  s.regime = Regime::human_only;
  for (const auto& r : trace(s, NullPlant{}, {})) {
    EXPECT_EQ(r.sc, Tx::none);
    EXPECT_FALSE(r.machine_closed);
  }
  s.regime = Regime::error_free;
  EXPECT_THROW(run(s, NullPlant{}, {}, [](const auto&) {}), DomainError);
}

TEST(SimKernel, ObserverCanStop) {
  auto s = perfect();
  int n = 0;
  const auto rr = run(s, NullPlant{}, {}, [&](const TraceRecord<NullPlant::State>&) { return ++n < 7; });
  EXPECT_TRUE(rr.stopped);
  EXPECT_EQ(rr.steps, 7u);
}

TEST(SimKernel, DivergenceStopsTheRun) {
  auto s = perfect();
  s.horizon = 1000;
  s.divergence_cap = 1e6;
  const auto rr = run(s, Doubling{}, 1.0, [](const auto&) {});
  EXPECT_TRUE(rr.diverged);
  EXPECT_EQ(rr.steps, 20u);  // 2^20 > 1e6
}

TEST(SimKernel, CycleStatisticsMatchAnalysis) {
  auto s = reference_scenario(23);
  const auto st = estimate_cycle_stats(s, 40000);
  const double pm = open_machine_loop_prob(s.sc, s.ca, s.code);
  const double ph = expected_error_prob(s.ha, s.code);
  EXPECT_NEAR(st.p_m, pm, 4 * st.se_p_m);
  EXPECT_NEAR(st.p_h, ph, 4 * st.se_p_h);
  EXPECT_NEAR(st.mean_m, 1.0 / (1.0 - ph), 4 * st.se_m);
  const auto d = interval_pmf(sh_delay_pmf(s.harq, s.sh, 1e-12), s.chain, ph);
  EXPECT_NEAR(st.mean_l, d.mean(), 4 * st.se_l);
  EXPECT_EQ(st.cycles, 40000u);
}

TEST(SimKernel, CycleStatsRejectBadInput) {
  EXPECT_THROW(estimate_cycle_stats(reference_scenario(), 0), DomainError);
  auto s = reference_scenario();
  s.ha = LinkBudget{};
  s.ha.distance_m = 1e6;  // HA essentially never succeeds
  EXPECT_THROW(estimate_cycle_stats(s, 1, 50), InsufficientDataError);
}

TEST(SimKernel, CumulativeCost) {
  const auto c = cumulative_cost({1.0, 0.5, 2.0});
  EXPECT_EQ(c, (std::vector<double>{1.0, 1.5, 3.5}));
  EXPECT_THROW(cumulative_cost({1.0, -0.1}), DomainError);
}

TEST(SimKernel, ReplicationsShareSeedsAcrossCalls) {
  auto s = reference_scenario(3);
  s.horizon = 100;
  const cartpole::CartPole plant;
  auto cost = [](const cartpole::State& x) { return cartpole::cost(x); };
  const auto a = replicate_cost(s, plant, cartpole::initial_state(), 4, cost);
  const auto b = replicate_cost(s, plant, cartpole::initial_state(), 4, cost);
  EXPECT_EQ(a.mean_cost, b.mean_cost);
  EXPECT_EQ(a.mean_cost.size(), 100u);
  EXPECT_NEAR(a.mean_cost[0], cartpole::cost(cartpole::initial_state()), 1e-15);
  EXPECT_EQ(a.se_cost[0], 0.0);
  EXPECT_NEAR(a.mean_cumulative.back(), [&] {
    double t = 0.0;
    for (double v : a.mean_cost) t += v;
    return t;
  }(), 1e-9 * a.mean_cumulative.back());
}
