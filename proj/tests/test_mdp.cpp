#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evsched/mdp.hpp"
#include "helpers.hpp"

using namespace evsched;
using evsched::test::at;
using evsched::test::exact;
using evsched::test::make_session;

namespace {
const EvseConfig kEvse{"e", 50.0, 5.0};
}

TEST(Indicator, ArgmaxWithTieScheduling) {
  EXPECT_EQ(scheduling_indicator({0.7, 0.3}), 1);
  EXPECT_EQ(scheduling_indicator({0.3, 0.7}), 0);
  EXPECT_EQ(scheduling_indicator({0.5, 0.5}), 1);
  EXPECT_THROW(ActionDistribution(0.6, 0.6), std::invalid_argument);
  EXPECT_THROW(ActionDistribution(-0.1, 1.1), std::invalid_argument);
}

TEST(Indicator, InvariantUnderPositiveLogitScaling) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-5, 5);
  std::uniform_real_distribution<double> c(0.01, 50);
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng), k = c(rng);
    EXPECT_EQ(scheduling_indicator(ActionDistribution::from_logits(a, b)),
              scheduling_indicator(ActionDistribution::from_logits(k * a, k * b)));
  }
}

TEST(DemandSupplyIndex, Examples) {
  EXPECT_DOUBLE_EQ(demand_supply_index(0.8, 1), 0.8);
  EXPECT_NEAR(demand_supply_index(0.8, 0), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(demand_supply_index(1.0, 1), 1.0);
  EXPECT_TRUE(eta_ordered(0.5, std::nullopt, 1));
  EXPECT_TRUE(eta_ordered(0.9, 0.6, 1));
  EXPECT_FALSE(eta_ordered(0.6, 0.9, 1));
  EXPECT_TRUE(eta_ordered(0.6, 0.9, 0));
}

TEST(Reward, Examples) {
  EXPECT_DOUBLE_EQ(session_reward(1.0, 1.0, 0.0, true), 2.0);
  EXPECT_NEAR(session_reward(0.5, 0.8, 0.1, true), 0.36, 1e-15);
  EXPECT_DOUBLE_EQ(session_reward(0.5, 0.8, 0.1, false), 0.0);
  EXPECT_DOUBLE_EQ(session_reward(1.0, 1.0, 0.0, false), 0.0);
  EXPECT_DOUBLE_EQ(session_reward(0.0, 1.0, 0.0, true), 0.0);
  // Faster than requested folds back into [0, 1].
  EXPECT_DOUBLE_EQ(session_reward(2.0, 1.0, 0.0, true), 0.5);
}

TEST(Reward, BoundedAndDecreasingInRisk) {
  for (double z = 0.0; z <= 3.0; z += 0.05)
    for (double r = 0.0; r <= 1.0; r += 0.05)
      for (double k = 0.0; k < 1.0; k += 0.05) {
        const double v = session_reward(z, r, k, true);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 2.0);
        EXPECT_EQ(session_reward(z, r, k, false), 0.0);
        if (z > 0.0 && r > 0.0) EXPECT_LT(session_reward(z, r, k + 0.01, true), v);
      }
  EXPECT_GT(session_reward(1.0, 1.0, 0.3, true), 1.0);  // branch 1 keeps its +1
}

TEST(RewardTerms, FromSessionData) {
  // 5 kWh over 30 min of a 60 min, 10 kWh request: zeta 1, rho 30/60, upsilon 0.5.
  const auto t = reward_terms(make_session("a", "e", VehicleClass::CV, 10, 60, 0, 30, 60, 5));
  EXPECT_TRUE(t.supported);
  EXPECT_DOUBLE_EQ(t.zeta, 1.0);
  EXPECT_DOUBLE_EQ(t.rho, 0.5);
  EXPECT_DOUBLE_EQ(t.upsilon, 0.5);
  const auto av = reward_terms(exact("b", "e", 12, 0, 90));
  EXPECT_DOUBLE_EQ(session_reward(av.zeta, av.rho, 0.0, true), 2.0);
  EXPECT_FALSE(reward_terms(make_session("z", "e", VehicleClass::CV, 0, 60, 0, 0, 60, 0)).supported);
}

TEST(DiscountedReturn, Examples) {
  const std::vector<double> r{1, 1, 1};
  EXPECT_NEAR(discounted_return(r, 0.9), 2.71, 1e-12);
  EXPECT_DOUBLE_EQ(discounted_return(r, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(discounted_return(std::vector<double>{}, 0.9), 0.0);
  const auto g = returns_to_go(r, 0.9);
  EXPECT_NEAR(g[0], 2.71, 1e-12);
  EXPECT_NEAR(g[1], 1.9, 1e-12);
  EXPECT_DOUBLE_EQ(g[2], 1.0);
}

TEST(DiscountedReturn, BoundedByGeometricSeries) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> r(1 + trial % 50);
    for (auto& x : r) x = u(rng);
    const double gamma = 0.05 + 0.9 * (trial % 19) / 19.0;
    const double mx = *std::max_element(r.begin(), r.end());
    EXPECT_LE(discounted_return(r, gamma), mx / (1 - gamma) + 1e-12);
  }
}

TEST(State, NormalizationAndElapsedTimes) {
  const auto s = make_session("a", "e", VehicleClass::CV, 50, 720, 600, 90, 120, 30);
  const auto st = EvseState::of(s);
  EXPECT_DOUBLE_EQ(st.raw[2], 600.0);
  EXPECT_DOUBLE_EQ(st.raw[3], 90.0);
  EXPECT_DOUBLE_EQ(st.raw[4], 120.0);
  const auto n = st.normalized();
  EXPECT_DOUBLE_EQ(n[0], 0.5);
  EXPECT_DOUBLE_EQ(n[1], 0.5);
  EXPECT_DOUBLE_EQ(n[5], 0.3);
  const auto big = EvseState::of(make_session("b", "e", VehicleClass::CV, 500, 3000, 0, 60, 60, 10)).normalized();
  EXPECT_DOUBLE_EQ(big[0], 1.0);
  EXPECT_DOUBLE_EQ(big[1], 1.0);
}

TEST(Allocate, TightAllocationUnderCaps) {
  // 10 kWh at min(50, 7.2) kW needs 83.33 min; request allows 120.
  const auto s = make_session("a", "e", VehicleClass::CV, 10, 120, 0, 80, 120, 9.6, 7.2);
  const auto d = allocate(s, kEvse);
  EXPECT_DOUBLE_EQ(d.allocated_rate_kw, 7.2);
  EXPECT_NEAR(d.allocated_minutes, 10.0 / 7.2 * 60.0 + 5.0, 1e-6);
  EXPECT_NEAR(d.allocated_energy_kwh, 10.0, 1e-6);  // minutes sit on a 1e-6 grid
  // Short request caps the time, and the energy with it.
  const auto tight = allocate(make_session("b", "e", VehicleClass::CV, 10, 30, 0, 30, 30, 3.6, 7.2), kEvse);
  EXPECT_DOUBLE_EQ(tight.allocated_minutes, 35.0);
  EXPECT_NEAR(tight.allocated_energy_kwh, 3.6, 1e-12);
  // Supply below the vehicle's rate.
  EXPECT_DOUBLE_EQ(allocate(s, EvseConfig{"e", 3.0, 0.0}).allocated_rate_kw, 3.0);
}

TEST(Realize, DeliversNeedWithinAllocation) {
  const auto s = make_session("a", "e", VehicleClass::CV, 10, 120, 0, 50, 120, 6.0, 7.2);
  const auto r = realize(s, allocate(s, kEvse), kEvse, at(0));
  EXPECT_DOUBLE_EQ(r.energy_kwh, 6.0);
  EXPECT_NEAR(r.active_minutes, 50.0, 1e-9);
  EXPECT_LE(r.rate_kw, s.receiving_capacity_kw);

  // An allocation too small for the need truncates delivery.
  auto d = allocate(s, kEvse);
  d.allocated_minutes = 5.0 + 30.0;
  const auto cut = realize(s, d, kEvse, at(0));
  EXPECT_NEAR(cut.energy_kwh, 3.6, 1e-12);
  EXPECT_NEAR(cut.active_minutes, 30.0, 1e-12);
}

TEST(EnvTransition, ScheduleAndQueue) {
  FcfsQueue q;
  q.sessions = {exact("a", "e", 10, 0, 60, 10.0), exact("b", "e", 5, 30, 30, 10.0)};
  q.clock = at(0);

  auto t = env_transition(q, SchedulingDecision{0}, kEvse);
  EXPECT_FALSE(t.realized);
  ASSERT_TRUE(t.next_state);
  EXPECT_EQ(q.sessions.front().session_id, "a");
  EXPECT_EQ(q.clock, at(15));

  SchedulingDecision go;
  go.schedule_now = 1;
  t = env_transition(q, go, kEvse);
  ASSERT_TRUE(t.realized);
  EXPECT_EQ(t.realized->session.session_id, "a");
  EXPECT_NEAR(t.realized->energy_kwh, 10.0, 1e-9);  // AV gets exactly what it asked for
  EXPECT_EQ(t.realized->start, at(15));
  EXPECT_EQ(q.clock, at(15 + 65));
  EXPECT_EQ(q.sessions.size(), 1u);

  t = env_transition(q, go, kEvse);
  EXPECT_FALSE(t.next_state);
  EXPECT_TRUE(q.sessions.empty());
  EXPECT_THROW(env_transition(q, go, kEvse), std::invalid_argument);
}

TEST(EnvTransition, ConservesSessionsUnderAnyDecisionSequence) {
  GenConfig g;
  g.sessions = 30;
  g.evses = 1;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto all = generate_synthetic(g, static_cast<std::uint64_t>(trial)).flatten();
    FcfsQueue q;
    q.sessions.assign(all.begin(), all.end());
    q.clock = all.front().plug_in_time;
    std::size_t scheduled = 0;
    for (int step = 0; step < 100 && !q.sessions.empty(); ++step) {
      SchedulingDecision d;
      d.schedule_now = static_cast<int>(rng() % 2);
      if (env_transition(q, d, kEvse).realized) ++scheduled;
      EXPECT_EQ(scheduled + q.sessions.size(), all.size());
    }
  }
}
