#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evsched/config.hpp"
#include "evsched/lstm.hpp"
#include "evsched/risk.hpp"

namespace evsched {

struct TrainConfig {
  int episodes = 2000;
  double learning_rate = 0.001;
  double gamma = 0.9;
  double beta = 0.05;
  double alpha = 0.99;
  int hidden = 64;
  std::uint64_t seed = 1;
  double clip = 40.0;
  /// Feed the next queued session alongside the current one. Without it the
  /// eta comparison in the reward depends on a session the agent never sees.
  bool lookahead = true;
  bool risk_off = false;
  CvarVariant cvar_variant = CvarVariant::Standard;
  /// Normalization scale for the risk, hours; 0 = mean requested hours.
  double risk_reference_hours = 0.0;
  /// Episodes between risk re-estimates over the training batch; 0 = once.
  /// The batch is fixed during a run, so every refresh reproduces the first
  /// estimate and train computes it once.
  int risk_refresh_every = 1;
  /// Threads for agent rollouts. Updates are still applied in EVSE order,
  /// so the result does not depend on this.
  unsigned workers = 1;

  /// Throws std::invalid_argument naming the first out-of-range field.
  void check() const;
  NetShape shape() const;
};

/// Network input for session `s` with `next` the session queued behind it:
/// the 6 normalized state components, then (with lookahead) the next
/// session's 6 components, zero when absent, and a 0/1 has-next flag.
Vec encode_input(const ChargingSession& s, const ChargingSession* next, bool lookahead);
int input_width(bool lookahead);

/// Adam (beta1 0.9, beta2 0.999, eps 1e-8) over the coordinator parameters.
struct AdamState {
  Vec m;
  Vec v;
  std::int64_t step = 0;
};

/// The coordinator's shared parameters with their optimizer state.
struct Coordinator {
  Vec params;
  AdamState adam;

  /// One Adam step with `delta` in the role of the gradient.
  void apply_update(const Vec& delta, double learning_rate);
};

struct AgentState {
  std::string evse_id;
  Vec params;
  Carry carry;

  /// Copies the coordinator parameters.
  void sync(const Coordinator& c) { params = c.params; }
};

/// (action, discounted return from this session, session index, carry before the step).
struct ObservationRecord {
  int action = 0;
  double discounted_return = 0.0;
  std::size_t session_index = 0;
  Carry carry;
};

struct Model {
  TrainConfig config;
  NetShape shape;
  Coordinator coordinator;
  std::vector<AgentState> agents;  ///< sorted by evse_id
  std::int64_t step_counter = 0;
  int episodes_trained = 0;

  /// Agent for `evse_id`, or nullptr.
  const AgentState* agent(const std::string& evse_id) const;
};

/// Fresh model for the given EVSEs, initialized from the config seed.
Model init_model(const TrainConfig& config, const std::vector<std::string>& evse_ids);

struct EpisodeLog {
  int episode = 0;
  double cumulative_reward = 0.0;
  double value_loss = 0.0;
  double policy_loss = 0.0;
  double entropy_loss = 0.0;  ///< -beta * mean entropy
  double mean_entropy = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpisodeLog> log;
  RiskEstimate risk;
  /// Observation memory of the final episode, per EVSE.
  std::map<std::string, std::vector<ObservationRecord>> memory;
};

using EpisodeCallback = std::function<void(const EpisodeLog&)>;

/// Per episode, each EVSE agent syncs to the coordinator, runs its session
/// sequence from its carried recurrent state with actions sampled from the
/// policy, and computes a clipped gradient; the coordinator then applies
/// the updates in EVSE order. `resume` continues an existing model.
TrainResult train(const SessionBatch& batch, const SiteConfig& site, const TrainConfig& config,
                  const Model* resume = nullptr, const EpisodeCallback& on_episode = {});

/// Rewards an agent earns on `sessions` for the given actions.
std::vector<double> episode_rewards(std::span<const ChargingSession> sessions, std::span<const int> actions,
                                    double risk);

std::string model_to_json(const Model& m);
/// Throws ModelFormatError naming the offending field.
Model model_from_json(std::string_view text);

std::string log_to_csv(const std::vector<EpisodeLog>& log);

/// Window-w trailing mean of the cumulative reward at each episode.
std::vector<double> smoothed_rewards(const std::vector<EpisodeLog>& log, std::size_t window);

}  // namespace evsched
