#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evsched/timeutil.hpp"

namespace evsched {

inline constexpr double kDefaultReceivingCapacityKw = 50.0;
inline constexpr double kDefaultSupplyCapacityKw = 50.0;
inline constexpr double kDefaultSwitchingMinutes = 5.0;
inline constexpr double kDefaultDsoCapacityKw = 195.0;
/// Slack allowed between an AV request and what it actually took, in kWh and minutes.
inline constexpr double kAvExactnessTolerance = 1e-6;

enum class VehicleClass { CV, AV };

std::string_view to_string(VehicleClass c);
VehicleClass vehicle_class_from_string(std::string_view s);

/// One plug-in event. The request tuple is (energy_requested_kwh,
/// minutes_available); the operational tuple is (plug_in_time,
/// charge_end_time, unplug_time, energy_delivered_kwh).
struct ChargingSession {
  std::string session_id;
  std::string evse_id;
  VehicleClass vehicle_class = VehicleClass::CV;
  double energy_requested_kwh = 0.0;
  double minutes_available = 0.0;
  Timestamp plug_in_time{};
  Timestamp charge_end_time{};
  Timestamp unplug_time{};
  double energy_delivered_kwh = 0.0;
  double receiving_capacity_kw = kDefaultReceivingCapacityKw;

  /// charge_end_time - plug_in_time
  double actual_minutes() const { return minutes_between(plug_in_time, charge_end_time); }
  /// unplug_time - plug_in_time
  double plugged_minutes() const { return minutes_between(plug_in_time, unplug_time); }

  bool operator==(const ChargingSession&) const = default;
};

/// Throws ParseError naming the session if any field invariant is broken.
void validate(const ChargingSession& s);

/// Sessions grouped by EVSE, each group in non-decreasing plug-in order
/// (first come, first served). Ties keep their input order.
class SessionBatch {
 public:
  using Group = std::vector<ChargingSession>;

  SessionBatch() = default;
  explicit SessionBatch(std::vector<ChargingSession> sessions, std::string batch_id = "batch");

  const std::map<std::string, Group>& groups() const { return groups_; }
  const Group& group(const std::string& evse_id) const;
  std::vector<std::string> evse_ids() const;

  /// All sessions, EVSE by EVSE in id order.
  std::vector<ChargingSession> flatten() const;

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  const std::string& id() const { return id_; }

 private:
  std::map<std::string, Group> groups_;
  std::size_t size_ = 0;
  std::string id_ = "batch";
};

/// Parses a JSON array of session objects. Field names follow the canonical
/// schema; ACN-Data names are accepted through the alias map below.
/// Throws ParseError (malformed JSON, missing field, timestamp inversion).
SessionBatch parse_sessions(std::string_view json_text, std::string batch_id = "batch");

/// Canonical JSON array, one object per session, keys sorted.
std::string sessions_to_json(const SessionBatch& batch);

/// Canonical key -> accepted ACN-Data spellings.
const std::map<std::string, std::vector<std::string>>& acn_field_aliases();

struct GenConfig {
  std::size_t sessions = 200;
  std::size_t evses = 4;
  double cv_fraction = 0.7;
  double mean_interarrival_minutes = 120.0;  ///< per EVSE, exponential gaps
  int min_charge_minutes = 30;
  int max_charge_minutes = 240;
  std::vector<double> receiving_capacities_kw{6.6, 7.2, 11.0, 19.2};
  double energy_inflation_min = 1.0;
  double energy_inflation_max = 2.0;
  double time_inflation_min = 1.0;
  double time_inflation_max = 3.0;
  /// Upper bound on CV idle time after charging, as a fraction of the slack
  /// between requested and actual minutes.
  double cv_idle_fraction = 1.0;
  Timestamp start{std::chrono::sys_days{std::chrono::year{2019} / 10 / 16}};
  std::string evse_prefix = "EVSE-";
};

/// Synthetic sessions. AVs request exactly what they take; CVs inflate
/// energy by U(energy_inflation_min, max) and time by U(time_inflation_min, max).
/// Pure function of (config, seed). Throws std::invalid_argument on a bad config.
SessionBatch generate_synthetic(const GenConfig& config, std::uint64_t seed);

/// Average demand rate in kW: sum(kWh requested) / sum(minutes available) * 60.
double demand_rate_kw(std::span<const ChargingSession> sessions);
/// Delivery rate in kW: sum(kWh delivered) / sum(actual minutes) * 60.
double delivery_rate_kw(std::span<const ChargingSession> sessions);
/// delivery / demand rate over the same sessions.
double rate_ratio(std::span<const ChargingSession> sessions);
double rate_ratio(double delivery_rate_kw, double demand_rate_kw);
/// actual minutes / plugged-in minutes, in [0, 1].
double time_ratio(const ChargingSession& s);
/// kWh delivered / kWh requested.
double energy_ratio(const ChargingSession& s);

/// False for sessions with zero requested energy. Those are kept in a batch
/// but skipped by per-session ratio consumers.
inline bool has_ratio_support(const ChargingSession& s) { return s.energy_requested_kwh > 0.0; }

}  // namespace evsched
