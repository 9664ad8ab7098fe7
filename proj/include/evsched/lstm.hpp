#pragma once

#include <Eigen/Dense>
#include <random>
#include <span>
#include <vector>

#include "evsched/mdp.hpp"

namespace evsched {

using Vec = Eigen::VectorXd;

/// One LSTM cell feeding a two-way softmax policy head and a scalar value head.
/// Parameters live in one flat vector, laid out as
///   W  (4H x (I+H), column-major, gate rows ordered input, forget, output, candidate)
///   b  (4H)
///   Wp (2 x H), bp (2)
///   Wv (1 x H), bv (1)
struct NetShape {
  int input = static_cast<int>(kStateDim);
  int hidden = 64;

  std::size_t size() const;
  std::size_t offset_b() const;
  std::size_t offset_wp() const;
  std::size_t offset_bp() const;
  std::size_t offset_wv() const;
  std::size_t offset_bv() const;

  bool operator==(const NetShape&) const = default;
};

/// Recurrent state (h, c).
struct Carry {
  Vec h;
  Vec c;

  static Carry zeros(int hidden);
  bool operator==(const Carry& o) const { return h == o.h && c == o.c; }
};

/// Gate weights uniform in [-1/sqrt(H), 1/sqrt(H)] (heads too), biases zero,
/// forget-gate bias 1.
Vec init_params(const NetShape& shape, std::mt19937_64& rng);

struct StepCache {
  Vec xh;  ///< [x; h_prev]
  Vec c_prev;
  Vec i, f, o, g;
  Vec c, tanh_c, h;
  double p_schedule = 0.5;
  double p_queue = 0.5;
  double value = 0.0;
};

struct Trace {
  std::vector<StepCache> steps;
  Carry final_carry;
};

/// Hidden sequence and new carry.
Trace rnn_forward(const NetShape& shape, const Vec& params, std::span<const Vec> inputs, const Carry& carry);

struct StepOutput {
  ActionDistribution policy;
  double value = 0.0;
};

/// Advances `carry` by one input and returns the heads' outputs.
StepOutput policy_value_forward(const NetShape& shape, const Vec& params, const Vec& input, Carry& carry);

/// Q - V.
inline double td_advantage(double q, double value) { return q - value; }

/// 1/2 mean (q - v)^2. Throws std::invalid_argument on empty or mismatched input.
double value_loss(std::span<const double> q_targets, std::span<const double> values);
/// -mean(advantage * log p_taken); probabilities below 1e-12 are clamped with a diagnostic.
double policy_loss(std::span<const double> advantages, std::span<const double> p_taken);
/// -sum p log p
double policy_entropy(const ActionDistribution& a);
/// value + policy - beta * entropy
inline double total_loss(double value, double policy, double entropy, double beta) {
  return value + policy - beta * entropy;
}

/// One agent's episode: inputs, sampled actions (1 = schedule), rewards and
/// the carry it started from.
struct Rollout {
  std::vector<Vec> inputs;
  std::vector<int> actions;
  std::vector<double> rewards;
  Carry carry;
};

/// Targets held constant during differentiation: q_t = r_t + gamma V_{t+1}
/// (0 after the last step) and advantage_t = q_t - V_t.
struct Targets {
  std::vector<double> q;
  std::vector<double> advantage;
};

Targets compute_targets(const Trace& trace, std::span<const double> rewards, double gamma);

struct LossBreakdown {
  double value = 0.0;
  double policy = 0.0;
  double entropy = 0.0;  ///< mean policy entropy
  double total = 0.0;
};

LossBreakdown evaluate_loss(const NetShape& shape, const Vec& params, const Rollout& rollout, const Targets& targets,
                            double beta);

/// Exact reverse-mode gradient of evaluate_loss(...).total. Throws
/// NumericalError on a non-finite component.
Vec backward(const NetShape& shape, const Vec& params, const Rollout& rollout, const Targets& targets, double beta,
             LossBreakdown* loss = nullptr);

/// Same, reusing a trace already computed for `rollout` with `params`.
Vec backward(const NetShape& shape, const Vec& params, const Trace& trace, const Rollout& rollout,
             const Targets& targets, double beta, LossBreakdown* loss = nullptr);

/// Several rollouts: the mean of the per-rollout gradients (and losses).
Vec backward(const NetShape& shape, const Vec& params, std::span<const Rollout> rollouts,
             std::span<const Targets> targets, double beta, LossBreakdown* loss = nullptr);

double grad_norm(const Vec& g);
/// g * min(1, clip / ||g||). Throws std::invalid_argument unless clip > 0.
Vec clipped_delta(const Vec& g, double clip);

}  // namespace evsched
