#include "evsched/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "evsched/errors.hpp"
#include "evsched/rng.hpp"
#include "json.hpp"

namespace evsched {

using nlohmann::json;

void TrainConfig::check() const {
  auto bad = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (episodes < 0) bad("episodes must be >= 0");
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) bad("gamma must lie in (0, 1)");
  if (!(beta >= 0.0)) bad("beta must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) bad("alpha must lie in (0, 1)");
  if (hidden <= 0) bad("hidden must be positive");
  if (!(clip > 0.0)) bad("clip must be positive");
  if (risk_refresh_every < 0) bad("risk_refresh_every must be >= 0");
  if (!(risk_reference_hours >= 0.0)) bad("risk_reference_hours must be >= 0");
}

int input_width(bool lookahead) { return lookahead ? static_cast<int>(2 * kStateDim + 1) : static_cast<int>(kStateDim); }

NetShape TrainConfig::shape() const { return {input_width(lookahead), hidden}; }

Vec encode_input(const ChargingSession& s, const ChargingSession* next, bool lookahead) {
  Vec x = Vec::Zero(input_width(lookahead));
  const auto cur = EvseState::of(s).normalized();
  for (std::size_t i = 0; i < kStateDim; ++i) x[static_cast<Eigen::Index>(i)] = cur[i];
  if (lookahead && next) {
    const auto nxt = EvseState::of(*next).normalized();
    for (std::size_t i = 0; i < kStateDim; ++i) x[static_cast<Eigen::Index>(kStateDim + i)] = nxt[i];
    x[static_cast<Eigen::Index>(2 * kStateDim)] = 1.0;
  }
  return x;
}

void Coordinator::apply_update(const Vec& delta, double learning_rate) {
  if (delta.size() != params.size()) throw std::invalid_argument("update has the wrong parameter count");
  if (adam.m.size() != params.size()) adam.m = Vec::Zero(params.size());
  if (adam.v.size() != params.size()) adam.v = Vec::Zero(params.size());
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++adam.step;
  adam.m = b1 * adam.m + (1.0 - b1) * delta;
  adam.v = b2 * adam.v + (1.0 - b2) * delta.cwiseProduct(delta);
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
  params.array() -= learning_rate * (adam.m.array() / c1) / ((adam.v.array() / c2).sqrt() + eps);
}

const AgentState* Model::agent(const std::string& evse_id) const {
  for (const auto& a : agents)
    if (a.evse_id == evse_id) return &a;
  return nullptr;
}

Model init_model(const TrainConfig& config, const std::vector<std::string>& evse_ids) {
  config.check();
  Model m;
  m.config = config;
  m.shape = config.shape();
  std::mt19937_64 rng(split_seed(config.seed, seed_stream::kInit));
  m.coordinator.params = init_params(m.shape, rng);
  m.coordinator.adam = {Vec::Zero(m.coordinator.params.size()), Vec::Zero(m.coordinator.params.size()), 0};
  auto ids = evse_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  for (const auto& id : ids) m.agents.push_back({id, m.coordinator.params, Carry::zeros(m.shape.hidden)});
  return m;
}

std::vector<double> episode_rewards(std::span<const ChargingSession> sessions, std::span<const int> actions,
                                    double risk) {
  if (sessions.size() != actions.size()) throw std::invalid_argument("rewards: sessions and actions differ in count");
  std::vector<double> r(sessions.size(), 0.0);
  for (std::size_t t = 0; t < sessions.size(); ++t) {
    const RewardTerms cur = reward_terms(sessions[t]);
    if (!cur.supported) continue;
    std::optional<double> next;
    if (t + 1 < sessions.size() && has_ratio_support(sessions[t + 1])) next = energy_ratio(sessions[t + 1]);
    r[t] = session_reward(cur.zeta, cur.rho, risk, eta_ordered(cur.upsilon, next, actions[t]));
  }
  return r;
}

namespace {

struct AgentEpisode {
  Vec grad;
  Carry carry;
  LossBreakdown loss;
  double reward = 0.0;
  bool finite = true;
  std::vector<ObservationRecord> memory;
};

AgentEpisode run_agent(const Model& m, const AgentState& agent, const std::vector<ChargingSession>& sessions,
                       const std::vector<Vec>& inputs, double risk, std::uint64_t seed, bool keep_memory) {
  const auto& cfg = m.config;
  AgentEpisode out;
  Rollout ro;
  ro.inputs = inputs;
  ro.carry = agent.carry;
  const Trace trace = rnn_forward(m.shape, agent.params, ro.inputs, ro.carry);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ro.actions.resize(sessions.size());
  for (std::size_t t = 0; t < sessions.size(); ++t) ro.actions[t] = unit(rng) < trace.steps[t].p_schedule ? 1 : 0;
  ro.rewards = episode_rewards(sessions, ro.actions, risk);
  for (double r : ro.rewards) out.reward += r;

  const Targets targets = compute_targets(trace, ro.rewards, cfg.gamma);
  try {
    out.grad = backward(m.shape, agent.params, trace, ro, targets, cfg.beta, &out.loss);
  } catch (const NumericalError&) {
    out.finite = false;
  }
  out.finite = out.finite && std::isfinite(out.loss.total);
  out.carry = trace.final_carry;

  if (keep_memory) {
    const auto returns = returns_to_go(ro.rewards, cfg.gamma);
    Carry before = ro.carry;
    for (std::size_t t = 0; t < sessions.size(); ++t) {
      out.memory.push_back({ro.actions[t], returns[t], t, before});
      before = {trace.steps[t].h, trace.steps[t].c};
    }
  }
  return out;
}

template <typename F>
void parallel_for(std::size_t n, unsigned workers, F&& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

TrainResult train(const SessionBatch& batch, const SiteConfig& site, const TrainConfig& config, const Model* resume,
                  const EpisodeCallback& on_episode) {
  config.check();
  site.check();
  if (batch.empty()) throw std::invalid_argument("train: empty session batch");

  TrainResult result;
  Model& m = result.model;
  if (resume) {
    m = *resume;
    if (!(m.shape == config.shape()))
      throw std::invalid_argument("train: resumed model shape differs from the configured network");
    m.config = config;
    for (const auto& id : batch.evse_ids()) {
      if (!m.agent(id)) m.agents.push_back({id, m.coordinator.params, Carry::zeros(m.shape.hidden)});
    }
    std::sort(m.agents.begin(), m.agents.end(), [](const auto& a, const auto& b) { return a.evse_id < b.evse_id; });
  } else {
    m = init_model(config, batch.evse_ids());
  }

  // The batch is fixed for the whole run and estimate_risk is a pure
  // function of (batch, alpha), so every scheduled refresh would reproduce
  // this value exactly.
  if (config.risk_off) {
    result.risk = zero_risk(config.alpha);
  } else {
    RiskOptions opts;
    opts.variant = config.cvar_variant;
    opts.reference_hours = config.risk_reference_hours;
    result.risk = estimate_risk(batch, config.alpha, opts);
  }
  const double risk = result.risk.cvar_normalized;

  struct Lane {
    std::size_t agent;
    const std::vector<ChargingSession>* sessions;
    std::vector<Vec> inputs;
  };
  std::vector<Lane> lanes;
  std::size_t unsupported = 0;
  for (const auto& [id, group] : batch.groups()) {
    std::size_t idx = 0;
    while (m.agents[idx].evse_id != id) ++idx;
    Lane lane{idx, &group, {}};
    for (std::size_t t = 0; t < group.size(); ++t) {
      lane.inputs.push_back(encode_input(group[t], t + 1 < group.size() ? &group[t + 1] : nullptr, config.lookahead));
      if (!has_ratio_support(group[t])) ++unsupported;
    }
    lanes.push_back(std::move(lane));
  }
  if (unsupported)
    diagnostic(std::to_string(unsupported) + " session(s) with zero requested energy earn no reward in training");

  const std::uint64_t train_seed = split_seed(config.seed, seed_stream::kTrain);
  const int first = m.episodes_trained;
  for (int e = first; e < first + config.episodes; ++e) {
    const bool last = e + 1 == first + config.episodes;
    for (auto& a : m.agents) a.sync(m.coordinator);

    std::vector<AgentEpisode> runs(lanes.size());
    const std::uint64_t episode_seed = split_seed(train_seed, static_cast<std::uint64_t>(e));
    parallel_for(lanes.size(), config.workers, [&](std::size_t k) {
      const Lane& lane = lanes[k];
      runs[k] = run_agent(m, m.agents[lane.agent], *lane.sessions, lane.inputs, risk, split_seed(episode_seed, k), last);
    });

    EpisodeLog row;
    row.episode = e + 1;
    bool finite = true;
    for (const auto& r : runs) {
      row.cumulative_reward += r.reward;
      row.value_loss += r.loss.value / static_cast<double>(runs.size());
      row.policy_loss += r.loss.policy / static_cast<double>(runs.size());
      row.mean_entropy += r.loss.entropy / static_cast<double>(runs.size());
      finite = finite && r.finite;
    }
    row.entropy_loss = -config.beta * row.mean_entropy;

    if (!finite) {
      std::ostringstream dump;
      dump << "episode " << row.episode << " aborted on a non-finite loss; coordinator |theta| = "
           << m.coordinator.params.norm() << ", step " << m.step_counter;
      for (std::size_t k = 0; k < runs.size(); ++k)
        dump << "; " << m.agents[lanes[k].agent].evse_id << " loss " << runs[k].loss.total;
      diagnostic(dump.str());
    } else {
      for (std::size_t k = 0; k < runs.size(); ++k) {
        m.coordinator.apply_update(clipped_delta(runs[k].grad, config.clip), config.learning_rate);
        ++m.step_counter;
        m.agents[lanes[k].agent].carry = runs[k].carry;
      }
    }
    if (last)
      for (std::size_t k = 0; k < runs.size(); ++k)
        result.memory[m.agents[lanes[k].agent].evse_id] = std::move(runs[k].memory);
    result.log.push_back(row);
    if (on_episode) on_episode(row);
  }
  for (auto& a : m.agents) a.sync(m.coordinator);
  m.episodes_trained = first + config.episodes;
  return result;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr const char* kModelFormat = "evsched-model";
constexpr int kModelVersion = 1;

json tensor(const Vec& v) {
  return {{"shape", {v.size()}}, {"data", std::vector<double>(v.data(), v.data() + v.size())}};
}

json config_json(const TrainConfig& c) {
  return {{"episodes", c.episodes},
          {"learning_rate", c.learning_rate},
          {"gamma", c.gamma},
          {"beta", c.beta},
          {"alpha", c.alpha},
          {"hidden", c.hidden},
          {"seed", c.seed},
          {"clip", c.clip},
          {"lookahead", c.lookahead},
          {"risk_off", c.risk_off},
          {"cvar_variant", std::string(to_string(c.cvar_variant))},
          {"risk_reference_hours", c.risk_reference_hours},
          {"risk_refresh_every", c.risk_refresh_every},
          {"workers", c.workers}};
}

class Reader {
 public:
  [[noreturn]] static void fail(const std::string& field, const std::string& what) {
    throw ModelFormatError("model field '" + field + "': " + what);
  }

  static const json& at(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) fail(path, "expected an object");
    auto it = j.find(key);
    if (it == j.end()) fail(path.empty() ? key : path + "." + key, "missing");
    return *it;
  }

  template <typename T>
  static T get(const json& j, const std::string& key, const std::string& path) {
    const json& v = at(j, key, path);
    const std::string field = path.empty() ? key : path + "." + key;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) fail(field, "expected a boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!v.is_number()) fail(field, "expected a number");
      } else {
        if (!v.is_string()) fail(field, "expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      fail(field, e.what());
    }
  }

  static Vec vec(const json& j, const std::string& key, const std::string& path, std::size_t expected) {
    const std::string field = path.empty() ? key : path + "." + key;
    const json& t = at(j, key, path);
    const json& shape = at(t, "shape", field);
    const json& data = at(t, "data", field);
    if (!shape.is_array() || shape.size() != 1 || !shape[0].is_number_unsigned())
      fail(field + ".shape", "expected [n]");
    if (!data.is_array()) fail(field + ".data", "expected an array");
    if (shape[0].get<std::size_t>() != data.size()) fail(field, "shape header disagrees with data length");
    if (data.size() != expected)
      fail(field, "expected " + std::to_string(expected) + " values, found " + std::to_string(data.size()));
    Vec v(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!data[i].is_number()) fail(field + ".data", "non-numeric entry at " + std::to_string(i));
      v[static_cast<Eigen::Index>(i)] = data[i].get<double>();
      if (!std::isfinite(v[static_cast<Eigen::Index>(i)])) fail(field + ".data", "non-finite entry");
    }
    return v;
  }
};

}  // namespace

std::string model_to_json(const Model& m) {
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["config"] = config_json(m.config);
  j["shape"] = {{"input", m.shape.input}, {"hidden", m.shape.hidden}, {"parameters", m.shape.size()}};
  j["coordinator"] = {{"params", tensor(m.coordinator.params)},
                      {"adam_m", tensor(m.coordinator.adam.m)},
                      {"adam_v", tensor(m.coordinator.adam.v)},
                      {"adam_step", m.coordinator.adam.step}};
  json agents = json::array();
  for (const auto& a : m.agents)
    agents.push_back({{"evse_id", a.evse_id},
                      {"params", tensor(a.params)},
                      {"carry_h", tensor(a.carry.h)},
                      {"carry_c", tensor(a.carry.c)}});
  j["agents"] = std::move(agents);
  j["step_counter"] = m.step_counter;
  j["episodes_trained"] = m.episodes_trained;
  return j.dump() + "\n";
}

Model model_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ModelFormatError(std::string("model is not valid JSON: ") + e.what());
  }
  using R = Reader;
  if (R::get<std::string>(j, "format", "") != kModelFormat) R::fail("format", "not an evsched model");
  if (R::get<int>(j, "version", "") != kModelVersion) R::fail("version", "unsupported version");

  Model m;
  const json& c = R::at(j, "config", "");
  m.config.episodes = R::get<int>(c, "episodes", "config");
  m.config.learning_rate = R::get<double>(c, "learning_rate", "config");
  m.config.gamma = R::get<double>(c, "gamma", "config");
  m.config.beta = R::get<double>(c, "beta", "config");
  m.config.alpha = R::get<double>(c, "alpha", "config");
  m.config.hidden = R::get<int>(c, "hidden", "config");
  m.config.seed = R::get<std::uint64_t>(c, "seed", "config");
  m.config.clip = R::get<double>(c, "clip", "config");
  m.config.lookahead = R::get<bool>(c, "lookahead", "config");
  m.config.risk_off = R::get<bool>(c, "risk_off", "config");
  try {
    m.config.cvar_variant = cvar_variant_from_string(R::get<std::string>(c, "cvar_variant", "config"));
  } catch (const std::invalid_argument& e) {
    R::fail("config.cvar_variant", e.what());
  }
  m.config.risk_reference_hours = R::get<double>(c, "risk_reference_hours", "config");
  m.config.risk_refresh_every = R::get<int>(c, "risk_refresh_every", "config");
  m.config.workers = R::get<unsigned>(c, "workers", "config");
  try {
    m.config.check();
  } catch (const std::invalid_argument& e) {
    R::fail("config", e.what());
  }

  const json& s = R::at(j, "shape", "");
  m.shape.input = R::get<int>(s, "input", "shape");
  m.shape.hidden = R::get<int>(s, "hidden", "shape");
  if (m.shape.hidden <= 0 || m.shape.hidden > 4096) R::fail("shape.hidden", "out of range");
  if (m.shape.input != input_width(true) && m.shape.input != input_width(false)) R::fail("shape.input", "out of range");
  if (!(m.shape == m.config.shape())) R::fail("shape", "disagrees with config");
  if (R::get<std::size_t>(s, "parameters", "shape") != m.shape.size())
    R::fail("shape.parameters", "disagrees with input and hidden");

  const std::size_t n = m.shape.size();
  const std::size_t H = static_cast<std::size_t>(m.shape.hidden);
  const json& co = R::at(j, "coordinator", "");
  m.coordinator.params = R::vec(co, "params", "coordinator", n);
  m.coordinator.adam.m = R::vec(co, "adam_m", "coordinator", n);
  m.coordinator.adam.v = R::vec(co, "adam_v", "coordinator", n);
  m.coordinator.adam.step = R::get<std::int64_t>(co, "adam_step", "coordinator");
  if (m.coordinator.adam.step < 0) R::fail("coordinator.adam_step", "negative");

  const json& agents = R::at(j, "agents", "");
  if (!agents.is_array()) R::fail("agents", "expected an array");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const std::string path = "agents[" + std::to_string(i) + "]";
    AgentState a;
    a.evse_id = R::get<std::string>(agents[i], "evse_id", path);
    a.params = R::vec(agents[i], "params", path, n);
    a.carry.h = R::vec(agents[i], "carry_h", path, H);
    a.carry.c = R::vec(agents[i], "carry_c", path, H);
    if (!m.agents.empty() && !(m.agents.back().evse_id < a.evse_id)) R::fail(path + ".evse_id", "agents not sorted");
    m.agents.push_back(std::move(a));
  }
  m.step_counter = R::get<std::int64_t>(j, "step_counter", "");
  m.episodes_trained = R::get<int>(j, "episodes_trained", "");
  if (m.step_counter < 0) R::fail("step_counter", "negative");
  if (m.episodes_trained < 0) R::fail("episodes_trained", "negative");
  return m;
}

std::string log_to_csv(const std::vector<EpisodeLog>& log) {
  std::string out = "episode,cumulative_reward,value_loss,policy_loss,entropy_loss\n";
  char buf[160];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%.12g,%.12g,%.12g,%.12g\n", r.episode, r.cumulative_reward, r.value_loss,
                  r.policy_loss, r.entropy_loss);
    out += buf;
  }
  return out;
}

std::vector<double> smoothed_rewards(const std::vector<EpisodeLog>& log, std::size_t window) {
  if (window == 0) throw std::invalid_argument("smoothing window must be positive");
  std::vector<double> out(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const std::size_t begin = i + 1 >= window ? i + 1 - window : 0;
    double sum = 0.0;
    for (std::size_t k = begin; k <= i; ++k) sum += log[k].cumulative_reward;
    out[i] = sum / static_cast<double>(i + 1 - begin);
  }
  return out;
}

}  // namespace evsched
