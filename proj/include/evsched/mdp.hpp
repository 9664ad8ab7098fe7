#pragma once

#include <array>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "evsched/config.hpp"
#include "evsched/session.hpp"

namespace evsched {

inline constexpr std::size_t kStateDim = 6;
inline constexpr double kEnergyScaleKwh = 100.0;
inline constexpr double kDurationScaleMinutes = 1440.0;
inline constexpr double kDefaultQueueStepMinutes = 15.0;
/// |zeta - 1| below this counts as a perfect rate match.
inline constexpr double kRateMatchTolerance = 1e-9;

/// s = (e_req kWh, d_req min, t_start, t_end, t_unplug, e_act kWh).
/// t_start is the minute of day; t_end and t_unplug are minutes after t_start.
struct EvseState {
  std::array<double, kStateDim> raw{};

  static EvseState of(const ChargingSession& s);

  /// Energies / 100 kWh, durations and times / 1440 min, each clamped to [0, 1].
  std::array<double, kStateDim> normalized() const;
};

/// (P(schedule), P(queue)).
struct ActionDistribution {
  double schedule = 0.5;
  double queue = 0.5;

  ActionDistribution() = default;
  /// Throws std::invalid_argument unless both are >= 0 and sum to 1 within 1e-9.
  ActionDistribution(double p_schedule, double p_queue);
  static ActionDistribution from_logits(double schedule_logit, double queue_logit);
};

struct SchedulingDecision {
  int schedule_now = 0;
  double demand_supply_index = 0.0;  ///< eta
  double allocated_energy_kwh = 0.0;
  double allocated_rate_kw = 0.0;
  double allocated_minutes = 0.0;  ///< charging time plus switching
};

struct RewardSpec {
  double gamma = 0.9;
  double risk_value = 0.0;  ///< normalized CVaR in [0, 1)
  double alpha = 0.99;

  void check() const;
};

/// 1 iff the schedule component is the argmax; a tie schedules.
int scheduling_indicator(const ActionDistribution& a);

/// upsilon when schedule_now = 1, otherwise 1 - upsilon.
double demand_supply_index(double upsilon, int schedule_now);
double demand_supply_index(const ChargingSession& s, const SchedulingDecision& d);

/// eta_v(a) >= eta_next(a). Without a next session the comparison holds.
bool eta_ordered(double upsilon, std::optional<double> upsilon_next, int schedule_now);

/// Per-session reward:
///   zeta = 1 and eta ordered           -> 1 + zeta rho (1 - risk)
///   zeta not in {0, 1} and eta ordered -> zeta rho (1 - risk)
///   otherwise                          -> 0
/// A zeta above 1 enters as 1 / zeta so the result stays in [0, 2].
double session_reward(double zeta, double rho, double risk, bool eta_ordered);

/// Data-derived (zeta, rho, upsilon) for one session. `supported` is false
/// when the request is zero and the ratios are undefined.
struct RewardTerms {
  double zeta = 0.0;
  double rho = 0.0;
  double upsilon = 0.0;
  bool supported = false;
};
RewardTerms reward_terms(const ChargingSession& s);

/// sum_k gamma^k r_k
double discounted_return(std::span<const double> rewards, double gamma);
/// Discounted return from every position to the end.
std::vector<double> returns_to_go(std::span<const double> rewards, double gamma);

/// min(supply capacity, receiving capacity).
double charging_rate_kw(const ChargingSession& s, const EvseConfig& evse);

/// Tight allocation: rate = min(e_cap, e_rec), minutes = min(d_req, e_req / rate * 60) + switching.
SchedulingDecision allocate(const ChargingSession& s, const EvseConfig& evse, int schedule_now = 1);

struct RealizedSession {
  ChargingSession session;
  SchedulingDecision decision;
  double energy_kwh = 0.0;      ///< delivered
  double rate_kw = 0.0;
  double active_minutes = 0.0;  ///< time actually drawing power
  Timestamp start{};
};

/// Delivered energy is the vehicle's need e_act, limited by what the
/// allocation can carry at the allocated rate.
RealizedSession realize(const ChargingSession& s, const SchedulingDecision& d, const EvseConfig& evse, Timestamp start);

/// One EVSE's FCFS waiting line and its clock.
struct FcfsQueue {
  std::deque<ChargingSession> sessions;
  Timestamp clock{};
};

struct Transition {
  std::optional<EvseState> next_state;
  std::optional<RealizedSession> realized;
};

/// schedule_now = 1 pops and realizes the head and advances the clock past
/// its allocation; 0 keeps the head and advances the clock by one step.
/// Throws std::invalid_argument on an empty queue.
Transition env_transition(FcfsQueue& queue, const SchedulingDecision& decision, const EvseConfig& evse,
                          double step_minutes = kDefaultQueueStepMinutes);

}  // namespace evsched
