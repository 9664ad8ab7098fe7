#include "evsched/lstm.hpp"

#include <cmath>
#include <stdexcept>

#include "evsched/errors.hpp"

namespace evsched {

using Eigen::Map;
using Eigen::MatrixXd;

std::size_t NetShape::size() const { return offset_bv() + 1; }
std::size_t NetShape::offset_b() const { return static_cast<std::size_t>(4 * hidden) * (input + hidden); }
std::size_t NetShape::offset_wp() const { return offset_b() + 4 * hidden; }
std::size_t NetShape::offset_bp() const { return offset_wp() + 2 * hidden; }
std::size_t NetShape::offset_wv() const { return offset_bp() + 2; }
std::size_t NetShape::offset_bv() const { return offset_wv() + hidden; }

Carry Carry::zeros(int hidden) { return {Vec::Zero(hidden), Vec::Zero(hidden)}; }

namespace {

struct ConstView {
  Map<const MatrixXd> W;
  Map<const Vec> b;
  Map<const MatrixXd> Wp;
  Map<const Vec> bp;
  Map<const MatrixXd> Wv;
  double bv;

  ConstView(const NetShape& s, const Vec& p)
      : W(p.data(), 4 * s.hidden, s.input + s.hidden),
        b(p.data() + s.offset_b(), 4 * s.hidden),
        Wp(p.data() + s.offset_wp(), 2, s.hidden),
        bp(p.data() + s.offset_bp(), 2),
        Wv(p.data() + s.offset_wv(), 1, s.hidden),
        bv(p[static_cast<Eigen::Index>(s.offset_bv())]) {}
};

struct MutView {
  Map<MatrixXd> W;
  Map<Vec> b;
  Map<MatrixXd> Wp;
  Map<Vec> bp;
  Map<MatrixXd> Wv;
  double& bv;

  MutView(const NetShape& s, Vec& p)
      : W(p.data(), 4 * s.hidden, s.input + s.hidden),
        b(p.data() + s.offset_b(), 4 * s.hidden),
        Wp(p.data() + s.offset_wp(), 2, s.hidden),
        bp(p.data() + s.offset_bp(), 2),
        Wv(p.data() + s.offset_wv(), 1, s.hidden),
        bv(p[static_cast<Eigen::Index>(s.offset_bv())]) {}
};

void check_shape(const NetShape& s, const Vec& params) {
  if (s.input <= 0 || s.hidden <= 0) throw std::invalid_argument("network shape must be positive");
  if (static_cast<std::size_t>(params.size()) != s.size())
    throw std::invalid_argument("parameter vector has " + std::to_string(params.size()) + " entries, shape needs " +
                                std::to_string(s.size()));
}

Vec sigmoid(const Vec& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

StepCache cell_step(const NetShape& s, const ConstView& v, const Vec& x, const Vec& h_prev, const Vec& c_prev) {
  if (x.size() != s.input) throw std::invalid_argument("input has the wrong width");
  if (h_prev.size() != s.hidden || c_prev.size() != s.hidden) throw std::invalid_argument("carry has the wrong width");
  const int H = s.hidden;
  StepCache k;
  k.xh.resize(s.input + H);
  k.xh << x, h_prev;
  k.c_prev = c_prev;
  const Vec z = v.W * k.xh + v.b;
  k.i = sigmoid(z.segment(0, H));
  k.f = sigmoid(z.segment(H, H));
  k.o = sigmoid(z.segment(2 * H, H));
  k.g = z.segment(3 * H, H).array().tanh().matrix();
  k.c = k.f.cwiseProduct(c_prev) + k.i.cwiseProduct(k.g);
  k.tanh_c = k.c.array().tanh().matrix();
  k.h = k.o.cwiseProduct(k.tanh_c);
  const Eigen::Vector2d logits = v.Wp * k.h + v.bp;
  const auto dist = ActionDistribution::from_logits(logits[0], logits[1]);
  k.p_schedule = dist.schedule;
  k.p_queue = dist.queue;
  k.value = (v.Wv * k.h)(0) + v.bv;
  return k;
}

double plogp(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

constexpr double kMinLogProb = 1e-12;

}  // namespace

Vec init_params(const NetShape& shape, std::mt19937_64& rng) {
  Vec p = Vec::Zero(static_cast<Eigen::Index>(shape.size()));
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  std::uniform_real_distribution<double> u(-bound, bound);
  MutView v(shape, p);
  for (Eigen::Index j = 0; j < v.W.cols(); ++j)
    for (Eigen::Index i = 0; i < v.W.rows(); ++i) v.W(i, j) = u(rng);
  for (Eigen::Index j = 0; j < v.Wp.cols(); ++j)
    for (Eigen::Index i = 0; i < v.Wp.rows(); ++i) v.Wp(i, j) = u(rng);
  for (Eigen::Index j = 0; j < v.Wv.cols(); ++j) v.Wv(0, j) = u(rng);
  v.b.segment(shape.hidden, shape.hidden).setOnes();
  return p;
}

Trace rnn_forward(const NetShape& shape, const Vec& params, std::span<const Vec> inputs, const Carry& carry) {
  check_shape(shape, params);
  ConstView v(shape, params);
  Trace t;
  t.steps.reserve(inputs.size());
  Vec h = carry.h, c = carry.c;
  for (const auto& x : inputs) {
    t.steps.push_back(cell_step(shape, v, x, h, c));
    h = t.steps.back().h;
    c = t.steps.back().c;
  }
  t.final_carry = {std::move(h), std::move(c)};
  return t;
}

StepOutput policy_value_forward(const NetShape& shape, const Vec& params, const Vec& input, Carry& carry) {
  check_shape(shape, params);
  ConstView v(shape, params);
  StepCache k = cell_step(shape, v, input, carry.h, carry.c);
  if (!std::isfinite(k.value) || !std::isfinite(k.p_schedule))
    throw NumericalError("non-finite policy or value output");
  carry.h = std::move(k.h);
  carry.c = std::move(k.c);
  StepOutput out;
  out.policy.schedule = k.p_schedule;
  out.policy.queue = k.p_queue;
  out.value = k.value;
  return out;
}

double value_loss(std::span<const double> q_targets, std::span<const double> values) {
  if (q_targets.empty()) throw std::invalid_argument("value loss of an empty batch");
  if (q_targets.size() != values.size()) throw std::invalid_argument("value loss: size mismatch");
  double s = 0.0;
  for (std::size_t t = 0; t < values.size(); ++t) s += (q_targets[t] - values[t]) * (q_targets[t] - values[t]);
  return 0.5 * s / static_cast<double>(values.size());
}

double policy_loss(std::span<const double> advantages, std::span<const double> p_taken) {
  if (advantages.empty()) throw std::invalid_argument("policy loss of an empty batch");
  if (advantages.size() != p_taken.size()) throw std::invalid_argument("policy loss: size mismatch");
  double s = 0.0;
  bool clamped = false;
  for (std::size_t t = 0; t < advantages.size(); ++t) {
    double p = p_taken[t];
    if (p < kMinLogProb) {
      p = kMinLogProb;
      clamped = true;
    }
    s += advantages[t] * std::log(p);
  }
  if (clamped) diagnostic("policy loss: action probability below 1e-12 clamped before the log");
  return -s / static_cast<double>(advantages.size());
}

double policy_entropy(const ActionDistribution& a) { return -(plogp(a.schedule) + plogp(a.queue)); }

Targets compute_targets(const Trace& trace, std::span<const double> rewards, double gamma) {
  const std::size_t T = trace.steps.size();
  if (rewards.size() != T) throw std::invalid_argument("targets: reward count does not match the trace");
  Targets out;
  out.q.resize(T);
  out.advantage.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double next = t + 1 < T ? trace.steps[t + 1].value : 0.0;
    out.q[t] = rewards[t] + gamma * next;
    out.advantage[t] = td_advantage(out.q[t], trace.steps[t].value);
  }
  return out;
}

namespace {

void check_rollout(const Rollout& r, const Targets& tg) {
  const std::size_t T = r.inputs.size();
  if (T == 0) throw std::invalid_argument("empty rollout");
  if (r.actions.size() != T || tg.q.size() != T || tg.advantage.size() != T)
    throw std::invalid_argument("rollout, actions and targets differ in length");
}

LossBreakdown loss_from_trace(const Trace& tr, const Rollout& r, const Targets& tg, double beta) {
  const std::size_t T = tr.steps.size();
  std::vector<double> values(T), taken(T);
  double entropy = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& k = tr.steps[t];
    values[t] = k.value;
    taken[t] = r.actions[t] ? k.p_schedule : k.p_queue;
    entropy += policy_entropy({k.p_schedule, k.p_queue});
  }
  LossBreakdown l;
  l.value = value_loss(tg.q, values);
  l.policy = policy_loss(tg.advantage, taken);
  l.entropy = entropy / static_cast<double>(T);
  l.total = total_loss(l.value, l.policy, l.entropy, beta);
  return l;
}

}  // namespace

LossBreakdown evaluate_loss(const NetShape& shape, const Vec& params, const Rollout& rollout, const Targets& targets,
                            double beta) {
  check_rollout(rollout, targets);
  return loss_from_trace(rnn_forward(shape, params, rollout.inputs, rollout.carry), rollout, targets, beta);
}

Vec backward(const NetShape& shape, const Vec& params, const Rollout& rollout, const Targets& targets, double beta,
             LossBreakdown* loss) {
  check_rollout(rollout, targets);
  return backward(shape, params, rnn_forward(shape, params, rollout.inputs, rollout.carry), rollout, targets, beta,
                  loss);
}

Vec backward(const NetShape& shape, const Vec& params, const Trace& tr, const Rollout& rollout,
             const Targets& targets, double beta, LossBreakdown* loss) {
  check_rollout(rollout, targets);
  check_shape(shape, params);
  if (tr.steps.size() != rollout.inputs.size()) throw std::invalid_argument("trace does not match the rollout");
  if (loss) *loss = loss_from_trace(tr, rollout, targets, beta);

  const int H = shape.hidden;
  const std::size_t T = tr.steps.size();
  const double inv_t = 1.0 / static_cast<double>(T);
  ConstView v(shape, params);
  Vec grad = Vec::Zero(params.size());
  MutView g(shape, grad);

  Vec dh_next = Vec::Zero(H);
  Vec dc_next = Vec::Zero(H);
  Vec dz(4 * H);
  for (std::size_t t = T; t-- > 0;) {
    const StepCache& k = tr.steps[t];
    const double p[2] = {k.p_schedule, k.p_queue};
    const int a = rollout.actions[t] ? 0 : 1;
    const double entropy = -(plogp(p[0]) + plogp(p[1]));
    Eigen::Vector2d dlogits;
    for (int j = 0; j < 2; ++j) {
      const double policy = -targets.advantage[t] * inv_t * ((j == a ? 1.0 : 0.0) - p[j]);
      const double ent = p[j] > 0.0 ? beta * inv_t * p[j] * (std::log(p[j]) + entropy) : 0.0;
      dlogits[j] = policy + ent;
    }
    const double dv = (k.value - targets.q[t]) * inv_t;

    g.Wp.noalias() += dlogits * k.h.transpose();
    g.bp += dlogits;
    g.Wv.noalias() += dv * k.h.transpose();
    g.bv += dv;

    Vec dh = v.Wp.transpose() * dlogits + v.Wv.transpose() * dv + dh_next;
    const Vec d_o = dh.cwiseProduct(k.tanh_c);
    const Vec dc =
        dh.cwiseProduct(k.o).cwiseProduct((1.0 - k.tanh_c.array().square()).matrix()) + dc_next;
    const Vec di = dc.cwiseProduct(k.g);
    const Vec dg = dc.cwiseProduct(k.i);
    const Vec df = dc.cwiseProduct(k.c_prev);
    dc_next = dc.cwiseProduct(k.f);

    dz.segment(0, H) = di.cwiseProduct((k.i.array() * (1.0 - k.i.array())).matrix());
    dz.segment(H, H) = df.cwiseProduct((k.f.array() * (1.0 - k.f.array())).matrix());
    dz.segment(2 * H, H) = d_o.cwiseProduct((k.o.array() * (1.0 - k.o.array())).matrix());
    dz.segment(3 * H, H) = dg.cwiseProduct((1.0 - k.g.array().square()).matrix());

    g.W.noalias() += dz * k.xh.transpose();
    g.b += dz;
    dh_next = (v.W.transpose() * dz).tail(H);
  }
  if (!grad.allFinite()) throw NumericalError("backward produced a non-finite gradient");
  return grad;
}

Vec backward(const NetShape& shape, const Vec& params, std::span<const Rollout> rollouts,
             std::span<const Targets> targets, double beta, LossBreakdown* loss) {
  if (rollouts.empty()) throw std::invalid_argument("backward over no rollouts");
  if (rollouts.size() != targets.size()) throw std::invalid_argument("rollouts and targets differ in count");
  Vec grad = Vec::Zero(params.size());
  LossBreakdown sum;
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    LossBreakdown l;
    grad += backward(shape, params, rollouts[i], targets[i], beta, &l);
    sum.value += l.value;
    sum.policy += l.policy;
    sum.entropy += l.entropy;
    sum.total += l.total;
  }
  const double n = static_cast<double>(rollouts.size());
  if (loss) *loss = {sum.value / n, sum.policy / n, sum.entropy / n, sum.total / n};
  return grad / n;
}

double grad_norm(const Vec& g) { return g.norm(); }

// The update is printed as d = theta * theta_hat / max(||theta||, theta_hat), which
// does not pin down what theta_hat is. Read here as global-norm clipping.
Vec clipped_delta(const Vec& g, double clip) {
  if (!(clip > 0.0)) throw std::invalid_argument("clip threshold must be positive");
  const double n = grad_norm(g);
  return n > clip ? Vec(g * (clip / n)) : g;
}

}  // namespace evsched
