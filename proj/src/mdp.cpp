#include "evsched/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace evsched {

EvseState EvseState::of(const ChargingSession& s) {
  EvseState st;
  st.raw = {s.energy_requested_kwh,
            s.minutes_available,
            static_cast<double>(minute_of_day(s.plug_in_time)),
            s.actual_minutes(),
            s.plugged_minutes(),
            s.energy_delivered_kwh};
  return st;
}

std::array<double, kStateDim> EvseState::normalized() const {
  static constexpr std::array<double, kStateDim> scale{kEnergyScaleKwh,       kDurationScaleMinutes,
                                                       kDurationScaleMinutes, kDurationScaleMinutes,
                                                       kDurationScaleMinutes, kEnergyScaleKwh};
  std::array<double, kStateDim> out;
  for (std::size_t i = 0; i < kStateDim; ++i) out[i] = std::clamp(raw[i] / scale[i], 0.0, 1.0);
  return out;
}

ActionDistribution::ActionDistribution(double p_schedule, double p_queue) : schedule(p_schedule), queue(p_queue) {
  if (!(p_schedule >= 0.0 && p_queue >= 0.0) || std::abs(p_schedule + p_queue - 1.0) > 1e-9)
    throw std::invalid_argument("action distribution must be non-negative and sum to 1");
}

ActionDistribution ActionDistribution::from_logits(double schedule_logit, double queue_logit) {
  const double m = std::max(schedule_logit, queue_logit);
  const double a = std::exp(schedule_logit - m);
  const double b = std::exp(queue_logit - m);
  ActionDistribution d;
  d.schedule = a / (a + b);
  d.queue = b / (a + b);
  return d;
}

void RewardSpec::check() const {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  if (!(risk_value >= 0.0 && risk_value < 1.0)) throw std::invalid_argument("risk must lie in [0, 1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
}

int scheduling_indicator(const ActionDistribution& a) { return a.schedule >= a.queue ? 1 : 0; }

double demand_supply_index(double upsilon, int schedule_now) { return schedule_now ? upsilon : 1.0 - upsilon; }

double demand_supply_index(const ChargingSession& s, const SchedulingDecision& d) {
  return demand_supply_index(energy_ratio(s), d.schedule_now);
}

bool eta_ordered(double upsilon, std::optional<double> upsilon_next, int schedule_now) {
  if (!upsilon_next) return true;
  return demand_supply_index(upsilon, schedule_now) >= demand_supply_index(*upsilon_next, schedule_now);
}

double session_reward(double zeta, double rho, double risk, bool eta_ordered) {
  if (!eta_ordered || zeta == 0.0) return 0.0;
  if (zeta > 1.0) zeta = 1.0 / zeta;
  if (std::abs(zeta - 1.0) <= kRateMatchTolerance) return 1.0 + zeta * rho * (1.0 - risk);
  return zeta * rho * (1.0 - risk);
}

RewardTerms reward_terms(const ChargingSession& s) {
  RewardTerms t;
  if (!has_ratio_support(s)) return t;
  t.supported = true;
  t.upsilon = energy_ratio(s);
  const double actual = s.actual_minutes();
  if (actual > 0.0 && s.minutes_available > 0.0) {
    const double delivered = s.energy_delivered_kwh / actual * 60.0;
    const double demanded = s.energy_requested_kwh / s.minutes_available * 60.0;
    t.zeta = rate_ratio(delivered, demanded);
  }
  t.rho = s.plugged_minutes() > 0.0 ? time_ratio(s) : 0.0;
  return t;
}

double discounted_return(std::span<const double> rewards, double gamma) {
  double g = 0.0;
  for (auto it = rewards.rbegin(); it != rewards.rend(); ++it) g = *it + gamma * g;
  return g;
}

std::vector<double> returns_to_go(std::span<const double> rewards, double gamma) {
  std::vector<double> out(rewards.size());
  double g = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) out[i] = g = rewards[i] + gamma * g;
  return out;
}

double charging_rate_kw(const ChargingSession& s, const EvseConfig& evse) {
  return std::min(evse.supply_capacity_kw, s.receiving_capacity_kw);
}

SchedulingDecision allocate(const ChargingSession& s, const EvseConfig& evse, int schedule_now) {
  SchedulingDecision d;
  d.schedule_now = schedule_now;
  if (has_ratio_support(s)) d.demand_supply_index = demand_supply_index(energy_ratio(s), schedule_now);
  d.allocated_rate_kw = charging_rate_kw(s, evse);
  const double needed = s.energy_requested_kwh / d.allocated_rate_kw * 60.0;
  // Round to a microsecond-scale grid so exact requests don't pick up a
  // last-bit excess from the division.
  const double charge = std::round(std::min(s.minutes_available, needed) * 1e6) / 1e6;
  d.allocated_energy_kwh = std::min(s.energy_requested_kwh, d.allocated_rate_kw * charge / 60.0);
  d.allocated_minutes = charge + evse.switching_minutes;
  return d;
}

RealizedSession realize(const ChargingSession& s, const SchedulingDecision& d, const EvseConfig& evse, Timestamp start) {
  RealizedSession r;
  r.session = s;
  r.decision = d;
  r.start = start;
  r.rate_kw = d.allocated_rate_kw;
  const double charge_minutes = std::max(0.0, d.allocated_minutes - evse.switching_minutes);
  const double capacity_kwh = r.rate_kw * charge_minutes / 60.0;
  r.energy_kwh = s.energy_delivered_kwh <= capacity_kwh * (1.0 + 1e-9) ? s.energy_delivered_kwh : capacity_kwh;
  r.active_minutes = r.rate_kw > 0.0 ? std::min(charge_minutes, r.energy_kwh / r.rate_kw * 60.0) : 0.0;
  return r;
}

Transition env_transition(FcfsQueue& queue, const SchedulingDecision& decision, const EvseConfig& evse,
                          double step_minutes) {
  if (queue.sessions.empty()) throw std::invalid_argument("transition on an empty queue");
  if (!(step_minutes > 0.0)) throw std::invalid_argument("queue step must be positive");
  Transition t;
  if (decision.schedule_now) {
    ChargingSession head = std::move(queue.sessions.front());
    queue.sessions.pop_front();
    const Timestamp start = std::max(queue.clock, head.plug_in_time);
    SchedulingDecision d = decision;
    if (!(d.allocated_rate_kw > 0.0)) d = allocate(head, evse, 1);
    t.realized = realize(head, d, evse, start);
    queue.clock = start + std::chrono::minutes(static_cast<long long>(std::ceil(d.allocated_minutes)));
  } else {
    queue.clock += std::chrono::minutes(static_cast<long long>(std::ceil(step_minutes)));
  }
  if (!queue.sessions.empty()) t.next_state = EvseState::of(queue.sessions.front());
  return t;
}

}  // namespace evsched
