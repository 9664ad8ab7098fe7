#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evsched/errors.hpp"
#include "evsched/learner.hpp"
#include "evsched/lstm.hpp"

using namespace evsched;

namespace {

Vec random_params(const NetShape& shape, std::uint64_t seed, double spread = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  Vec p(static_cast<Eigen::Index>(shape.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = u(rng);
  return p;
}

Rollout random_rollout(const NetShape& shape, std::size_t steps, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Rollout r;
  for (std::size_t t = 0; t < steps; ++t) {
    Vec x(shape.input);
    for (int i = 0; i < shape.input; ++i) x[i] = u(rng);
    r.inputs.push_back(x);
    r.actions.push_back(static_cast<int>(rng() % 2));
    r.rewards.push_back(2.0 * u(rng));
  }
  r.carry = Carry::zeros(shape.hidden);
  r.carry.h.setConstant(0.1);
  r.carry.c.setConstant(-0.2);
  return r;
}

std::vector<double> values_of(const NetShape& shape, const Vec& params, const Rollout& r) {
  std::vector<double> v;
  for (const auto& s : rnn_forward(shape, params, r.inputs, r.carry).steps) v.push_back(s.value);
  return v;
}

// Central differences of the total loss, compared component by component.
void expect_gradient_matches(const NetShape& shape, const Vec& params, const Rollout& r, const Targets& t,
                             double beta) {
  const Vec g = backward(shape, params, r, t, beta);
  const double h = 1e-5;
  double worst = 0.0;
  Vec p = params;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p[i] = params[i] + h;
    const double up = evaluate_loss(shape, p, r, t, beta).total;
    p[i] = params[i] - h;
    const double dn = evaluate_loss(shape, p, r, t, beta).total;
    p[i] = params[i];
    const double fd = (up - dn) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(g[i]), 1e-3});
    worst = std::max(worst, std::abs(fd - g[i]) / scale);
  }
  EXPECT_LT(worst, 1e-4);
}

const NetShape kSmall{6, 5};

}  // namespace

TEST(Shape, ParameterLayout) {
  const NetShape s{6, 4};
  EXPECT_EQ(s.offset_b(), 16u * 10u);
  EXPECT_EQ(s.offset_wp(), s.offset_b() + 16u);
  EXPECT_EQ(s.offset_bp(), s.offset_wp() + 8u);
  EXPECT_EQ(s.offset_wv(), s.offset_bp() + 2u);
  EXPECT_EQ(s.offset_bv(), s.offset_wv() + 4u);
  EXPECT_EQ(s.size(), s.offset_bv() + 1u);
}

TEST(Forward, ZeroWeightsGiveZeroHiddenAndUniformPolicy) {
  const Vec zero = Vec::Zero(static_cast<Eigen::Index>(kSmall.size()));
  std::vector<Vec> xs{Vec::Constant(6, 0.3), Vec::Constant(6, 0.9)};
  const auto tr = rnn_forward(kSmall, zero, xs, Carry::zeros(5));
  for (const auto& s : tr.steps) {
    EXPECT_EQ(s.h.norm(), 0.0);
    EXPECT_DOUBLE_EQ(s.p_schedule, 0.5);
    EXPECT_DOUBLE_EQ(s.value, 0.0);
  }
  Carry c = Carry::zeros(5);
  const auto out = policy_value_forward(kSmall, zero, xs[0], c);
  EXPECT_DOUBLE_EQ(out.policy.schedule, 0.5);
  EXPECT_DOUBLE_EQ(out.value, 0.0);
}

TEST(Forward, DeterministicAndCarryAdvances) {
  const Vec p = random_params(kSmall, 1);
  const Vec x = Vec::Constant(6, 0.4);
  Carry a = Carry::zeros(5), b = Carry::zeros(5);
  const auto oa = policy_value_forward(kSmall, p, x, a);
  const auto ob = policy_value_forward(kSmall, p, x, b);
  EXPECT_EQ(oa.policy.schedule, ob.policy.schedule);
  EXPECT_EQ(oa.value, ob.value);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == Carry::zeros(5));
}

TEST(Forward, FiniteAndNormalizedOverRandomParameters) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const Vec p = random_params(kSmall, 100 + trial, 1.0);
    Vec x(6);
    for (int i = 0; i < 6; ++i) x[i] = u(rng);
    Carry c = Carry::zeros(5);
    const auto out = policy_value_forward(kSmall, p, x, c);
    ASSERT_TRUE(std::isfinite(out.value));
    ASSERT_NEAR(out.policy.schedule + out.policy.queue, 1.0, 1e-12);
    ASSERT_GE(out.policy.schedule, 0.0);
  }
}

TEST(Forward, ValueIgnoresThePolicyHead) {
  Vec p = random_params(kSmall, 2);
  const Vec x = Vec::Constant(6, 0.7);
  Carry a = Carry::zeros(5);
  const auto before = policy_value_forward(kSmall, p, x, a);
  p[static_cast<Eigen::Index>(kSmall.offset_bp())] += 0.3;  // schedule logit only
  p[static_cast<Eigen::Index>(kSmall.offset_wp())] -= 0.4;
  Carry b = Carry::zeros(5);
  const auto after = policy_value_forward(kSmall, p, x, b);
  EXPECT_EQ(before.value, after.value);
  EXPECT_NE(before.policy.schedule, after.policy.schedule);
}

TEST(Losses, Examples) {
  EXPECT_DOUBLE_EQ(td_advantage(2.0, 2.0), 0.0);
  EXPECT_NEAR(td_advantage(1.0 + 0.9 * 2.0, 2.0), 0.8, 1e-15);
  const std::vector<double> q{3.0}, v{1.0};
  EXPECT_DOUBLE_EQ(value_loss(q, v), 2.0);
  EXPECT_DOUBLE_EQ(value_loss(v, v), 0.0);
  const std::vector<double> one{1.0}, p{std::exp(-1.0)}, zero{0.0}, neg{-1.0};
  EXPECT_NEAR(policy_loss(one, p), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(policy_loss(zero, p), 0.0);
  EXPECT_NEAR(policy_loss(neg, p), -1.0, 1e-15);
  EXPECT_NEAR(policy_entropy({0.5, 0.5}), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(policy_entropy({1.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(total_loss(1.0, 2.0, 0.5, 0.0), 3.0);
  EXPECT_NEAR(total_loss(0.0, 0.0, std::log(2.0), 0.05), -0.05 * std::log(2.0), 1e-15);
  EXPECT_THROW(value_loss(std::vector<double>{}, std::vector<double>{}), std::invalid_argument);
  EXPECT_THROW(value_loss(q, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST(Losses, EntropyPeaksAtUniform) {
  for (double p = 0.0; p <= 1.0; p += 0.001) EXPECT_LE(policy_entropy({p, 1.0 - p}), std::log(2.0) + 1e-15);
}

TEST(Losses, TinyProbabilityIsClamped) {
  const std::vector<double> a{1.0}, p{0.0};
  EXPECT_NEAR(policy_loss(a, p), -std::log(1e-12), 1e-9);
}

TEST(Targets, BootstrapFromNextValue) {
  const Vec p = random_params(kSmall, 4);
  const auto r = random_rollout(kSmall, 4, 4);
  const auto tr = rnn_forward(kSmall, p, r.inputs, r.carry);
  const auto t = compute_targets(tr, r.rewards, 0.9);
  for (std::size_t i = 0; i < 4; ++i) {
    const double next = i + 1 < 4 ? tr.steps[i + 1].value : 0.0;
    EXPECT_DOUBLE_EQ(t.q[i], r.rewards[i] + 0.9 * next);
    EXPECT_DOUBLE_EQ(t.advantage[i], t.q[i] - tr.steps[i].value);
  }
}

TEST(Backward, FullLossMatchesFiniteDifferences) {
  const Vec p = random_params(kSmall, 5);
  const auto r = random_rollout(kSmall, 3, 5);
  const auto t = compute_targets(rnn_forward(kSmall, p, r.inputs, r.carry), r.rewards, 0.9);
  expect_gradient_matches(kSmall, p, r, t, 0.05);
}

TEST(Backward, ValueTermAlone) {
  const Vec p = random_params(kSmall, 6);
  const auto r = random_rollout(kSmall, 3, 6);
  Targets t;
  t.q = {0.5, -1.0, 2.0};
  t.advantage = {0.0, 0.0, 0.0};
  expect_gradient_matches(kSmall, p, r, t, 0.0);
}

TEST(Backward, PolicyTermAlone) {
  const Vec p = random_params(kSmall, 7);
  const auto r = random_rollout(kSmall, 3, 7);
  Targets t;
  t.q = values_of(kSmall, p, r);  // value term is flat here
  t.advantage = {1.5, -0.7, 0.3};
  expect_gradient_matches(kSmall, p, r, t, 0.0);
}

TEST(Backward, EntropyTermAlone) {
  const Vec p = random_params(kSmall, 8);
  const auto r = random_rollout(kSmall, 3, 8);
  Targets t;
  t.q = values_of(kSmall, p, r);
  t.advantage = {0.0, 0.0, 0.0};
  expect_gradient_matches(kSmall, p, r, t, 1.0);
}

TEST(Backward, LookaheadInputWidth) {
  const NetShape wide{input_width(true), 4};
  EXPECT_EQ(wide.input, 13);
  const Vec p = random_params(wide, 9);
  const auto r = random_rollout(wide, 5, 9);
  const auto t = compute_targets(rnn_forward(wide, p, r.inputs, r.carry), r.rewards, 0.9);
  expect_gradient_matches(wide, p, r, t, 0.05);
}

TEST(Backward, ZeroWhenNothingToLearn) {
  const Vec p = random_params(kSmall, 10);
  const auto r = random_rollout(kSmall, 3, 10);
  Targets t;
  t.q = values_of(kSmall, p, r);
  t.advantage = {0.0, 0.0, 0.0};
  EXPECT_LT(backward(kSmall, p, r, t, 0.0).norm(), 1e-14);
}

TEST(Backward, SeveralRolloutsAverage) {
  const Vec p = random_params(kSmall, 11);
  std::vector<Rollout> rs{random_rollout(kSmall, 3, 1), random_rollout(kSmall, 5, 2)};
  std::vector<Targets> ts;
  for (const auto& r : rs) ts.push_back(compute_targets(rnn_forward(kSmall, p, r.inputs, r.carry), r.rewards, 0.9));
  const Vec a = backward(kSmall, p, rs[0], ts[0], 0.05);
  const Vec b = backward(kSmall, p, rs[1], ts[1], 0.05);
  LossBreakdown both;
  const Vec m = backward(kSmall, p, std::span<const Rollout>(rs), std::span<const Targets>(ts), 0.05, &both);
  EXPECT_LT((m - 0.5 * (a + b)).norm(), 1e-12 * (1 + m.norm()));
  const double la = evaluate_loss(kSmall, p, rs[0], ts[0], 0.05).total;
  const double lb = evaluate_loss(kSmall, p, rs[1], ts[1], 0.05).total;
  EXPECT_NEAR(both.total, 0.5 * (la + lb), 1e-12);
}

TEST(Backward, ReportsLoss) {
  const Vec p = random_params(kSmall, 12);
  const auto r = random_rollout(kSmall, 4, 12);
  const auto t = compute_targets(rnn_forward(kSmall, p, r.inputs, r.carry), r.rewards, 0.9);
  LossBreakdown l;
  backward(kSmall, p, r, t, 0.05, &l);
  const auto e = evaluate_loss(kSmall, p, r, t, 0.05);
  EXPECT_DOUBLE_EQ(l.total, e.total);
  EXPECT_NEAR(l.total, l.value + l.policy - 0.05 * l.entropy, 1e-12);
}

TEST(Clipping, NormAndClip) {
  Vec g(2);
  g << 3, 4;
  EXPECT_DOUBLE_EQ(grad_norm(g), 5.0);
  EXPECT_DOUBLE_EQ(grad_norm(Vec::Zero(3)), 0.0);
  EXPECT_DOUBLE_EQ(grad_norm(-2.0 * g), 10.0);
  EXPECT_EQ(clipped_delta(g, 40.0), g);
  const Vec big = g * 16.0;  // norm 80 = 2 * clip
  EXPECT_LT((clipped_delta(big, 40.0) - big / 2.0).norm(), 1e-12);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 30);
  for (int i = 0; i < 1000; ++i) {
    Vec x(7);
    for (int j = 0; j < 7; ++j) x[j] = n(rng);
    EXPECT_LE(grad_norm(clipped_delta(x, 40.0)), 40.0 + 1e-9);
  }
  EXPECT_THROW(clipped_delta(g, 0.0), std::invalid_argument);
}

TEST(Adam, FirstStepMovesEachParameterByTheLearningRate) {
  Coordinator c;
  c.params = Vec::Zero(3);
  Vec g(3);
  g << 2.0, -0.5, 1e-3;
  c.apply_update(g, 0.01);
  EXPECT_EQ(c.adam.step, 1);
  EXPECT_NEAR(c.params[0], -0.01, 1e-9);
  EXPECT_NEAR(c.params[1], 0.01, 1e-9);
  EXPECT_NEAR(c.params[2], -0.01, 1e-7);
  EXPECT_THROW(c.apply_update(Vec::Zero(2), 0.01), std::invalid_argument);
}

TEST(Init, BoundsAndForgetBias) {
  std::mt19937_64 rng(1);
  const NetShape s{6, 16};
  const Vec p = init_params(s, rng);
  const double bound = 1.0 / std::sqrt(16.0);
  for (std::size_t i = 0; i < s.offset_b(); ++i) EXPECT_LE(std::abs(p[static_cast<Eigen::Index>(i)]), bound);
  for (int j = 0; j < 16; ++j) {
    EXPECT_DOUBLE_EQ(p[static_cast<Eigen::Index>(s.offset_b()) + j], 0.0);       // input gate
    EXPECT_DOUBLE_EQ(p[static_cast<Eigen::Index>(s.offset_b()) + 16 + j], 1.0);  // forget gate
  }
}
