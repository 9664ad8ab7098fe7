#include "evsched/session.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "evsched/errors.hpp"
#include "json.hpp"

namespace evsched {

using nlohmann::json;

std::string_view to_string(VehicleClass c) { return c == VehicleClass::AV ? "AV" : "CV"; }

VehicleClass vehicle_class_from_string(std::string_view s) {
  if (s == "AV" || s == "av") return VehicleClass::AV;
  if (s == "CV" || s == "cv") return VehicleClass::CV;
  throw ParseError("unknown vehicle class '" + std::string(s) + "'");
}

void validate(const ChargingSession& s) {
  auto fail = [&](const std::string& what) { throw ParseError("session '" + s.session_id + "': " + what); };
  if (s.plug_in_time > s.charge_end_time) fail("charge end precedes plug-in");
  if (s.charge_end_time > s.unplug_time) fail("unplug precedes charge end");
  if (!(s.energy_requested_kwh >= 0.0)) fail("negative requested energy");
  if (!(s.energy_delivered_kwh >= 0.0)) fail("negative delivered energy");
  if (!(s.minutes_available > 0.0)) fail("minutes available must be positive");
  if (!(s.receiving_capacity_kw > 0.0)) fail("receiving capacity must be positive");
  if (s.vehicle_class == VehicleClass::AV) {
    if (std::abs(s.energy_delivered_kwh - s.energy_requested_kwh) > kAvExactnessTolerance)
      fail("AV delivered energy differs from its request");
    if (std::abs(s.actual_minutes() - s.minutes_available) > kAvExactnessTolerance)
      fail("AV charging time differs from its request");
  }
}

SessionBatch::SessionBatch(std::vector<ChargingSession> sessions, std::string batch_id)
    : size_(sessions.size()), id_(std::move(batch_id)) {
  for (auto& s : sessions) {
    validate(s);
    groups_[s.evse_id].push_back(std::move(s));
  }
  for (auto& [id, group] : groups_) {
    std::stable_sort(group.begin(), group.end(),
                     [](const ChargingSession& a, const ChargingSession& b) { return a.plug_in_time < b.plug_in_time; });
  }
}

const SessionBatch::Group& SessionBatch::group(const std::string& evse_id) const {
  auto it = groups_.find(evse_id);
  if (it == groups_.end()) throw std::out_of_range("no sessions for EVSE '" + evse_id + "'");
  return it->second;
}

std::vector<std::string> SessionBatch::evse_ids() const {
  std::vector<std::string> ids;
  ids.reserve(groups_.size());
  for (const auto& [id, group] : groups_) ids.push_back(id);
  return ids;
}

std::vector<ChargingSession> SessionBatch::flatten() const {
  std::vector<ChargingSession> out;
  out.reserve(size_);
  for (const auto& [id, group] : groups_) out.insert(out.end(), group.begin(), group.end());
  return out;
}

// ---------------------------------------------------------------------------
// JSON

const std::map<std::string, std::vector<std::string>>& acn_field_aliases() {
  static const std::map<std::string, std::vector<std::string>> aliases = {
      {"sessionID", {"sessionID", "_id"}},
      {"evseID", {"evseID", "stationID", "spaceID"}},
      {"vehicleClass", {"vehicleClass"}},
      {"kWhRequested", {"kWhRequested", "userInputs.kWhRequested"}},
      {"minutesAvailable", {"minutesAvailable", "userInputs.minutesAvailable"}},
      {"connectionTime", {"connectionTime"}},
      {"doneChargingTime", {"doneChargingTime"}},
      {"disconnectTime", {"disconnectTime"}},
      {"kWhDelivered", {"kWhDelivered"}},
      {"receivingCapacityKW", {"receivingCapacityKW"}},
  };
  return aliases;
}

namespace {

// Walks a dotted path. Arrays along the way resolve to their last element,
// which for ACN userInputs is the most recent edit of the request.
const json* walk(const json& record, std::string_view path) {
  const json* node = &record;
  while (!path.empty()) {
    auto dot = path.find('.');
    std::string key(path.substr(0, dot));
    path = dot == std::string_view::npos ? std::string_view{} : path.substr(dot + 1);
    if (node->is_array()) {
      if (node->empty()) return nullptr;
      node = &node->back();
    }
    if (!node->is_object()) return nullptr;
    auto it = node->find(key);
    if (it == node->end() || it->is_null()) return nullptr;
    node = &*it;
  }
  if (node->is_array()) return node->empty() ? nullptr : &node->back();
  return node;
}

class RecordReader {
 public:
  RecordReader(const json& record, std::size_t index) : record_(record), index_(index) {}

  const json* find(const std::string& canonical) const {
    for (const auto& path : acn_field_aliases().at(canonical))
      if (const json* node = walk(record_, path)) return node;
    return nullptr;
  }

  const json& require(const std::string& canonical) const {
    const json* node = find(canonical);
    if (!node) fail("missing mandatory field '" + canonical + "'");
    return *node;
  }

  std::string text(const std::string& canonical) const {
    const json& node = require(canonical);
    if (node.is_string()) return node.get<std::string>();
    if (node.is_number_integer()) return std::to_string(node.get<long long>());
    fail("field '" + canonical + "' must be a string");
  }

  double number(const std::string& canonical) const {
    const json& node = require(canonical);
    if (!node.is_number()) fail("field '" + canonical + "' must be a number");
    return node.get<double>();
  }

  Timestamp time(const std::string& canonical) const {
    try {
      return parse_timestamp(text(canonical));
    } catch (const ParseError& e) {
      fail("field '" + canonical + "': " + e.what());
    }
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("record " + std::to_string(index_) + ": " + what);
  }

 private:
  const json& record_;
  std::size_t index_;
};

ChargingSession read_session(const json& record, std::size_t index) {
  RecordReader r(record, index);
  if (!record.is_object()) r.fail("expected an object");
  ChargingSession s;
  s.session_id = r.text("sessionID");
  s.evse_id = r.text("evseID");
  if (const json* vc = r.find("vehicleClass")) {
    if (!vc->is_string()) r.fail("field 'vehicleClass' must be a string");
    s.vehicle_class = vehicle_class_from_string(vc->get<std::string>());
  }
  s.energy_requested_kwh = r.number("kWhRequested");
  s.minutes_available = r.number("minutesAvailable");
  s.plug_in_time = r.time("connectionTime");
  s.charge_end_time = r.time("doneChargingTime");
  s.unplug_time = r.time("disconnectTime");
  s.energy_delivered_kwh = r.number("kWhDelivered");
  if (r.find("receivingCapacityKW")) s.receiving_capacity_kw = r.number("receivingCapacityKW");
  try {
    validate(s);
  } catch (const ParseError& e) {
    r.fail(e.what());
  }
  return s;
}

}  // namespace

SessionBatch parse_sessions(std::string_view json_text, std::string batch_id) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("expected a JSON array of session objects");
  std::vector<ChargingSession> sessions;
  sessions.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) sessions.push_back(read_session(doc[i], i));
  return SessionBatch(std::move(sessions), std::move(batch_id));
}

std::string sessions_to_json(const SessionBatch& batch) {
  json out = json::array();
  for (const auto& s : batch.flatten()) {
    out.push_back({
        {"sessionID", s.session_id},
        {"evseID", s.evse_id},
        {"vehicleClass", std::string(to_string(s.vehicle_class))},
        {"kWhRequested", s.energy_requested_kwh},
        {"minutesAvailable", s.minutes_available},
        {"connectionTime", format_timestamp(s.plug_in_time)},
        {"doneChargingTime", format_timestamp(s.charge_end_time)},
        {"disconnectTime", format_timestamp(s.unplug_time)},
        {"kWhDelivered", s.energy_delivered_kwh},
        {"receivingCapacityKW", s.receiving_capacity_kw},
    });
  }
  return out.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Synthetic data

SessionBatch generate_synthetic(const GenConfig& c, std::uint64_t seed) {
  if (c.sessions == 0) throw std::invalid_argument("generator: zero sessions requested");
  if (c.evses == 0) throw std::invalid_argument("generator: zero EVSEs");
  if (!(c.cv_fraction >= 0.0 && c.cv_fraction <= 1.0))
    throw std::invalid_argument("generator: CV fraction must lie in [0, 1]");
  if (!(c.mean_interarrival_minutes > 0.0)) throw std::invalid_argument("generator: interarrival must be positive");
  if (c.min_charge_minutes <= 0 || c.max_charge_minutes < c.min_charge_minutes)
    throw std::invalid_argument("generator: bad charge-minute range");
  if (c.receiving_capacities_kw.empty()) throw std::invalid_argument("generator: no receiving capacities");
  for (double kw : c.receiving_capacities_kw)
    if (!(kw > 0.0)) throw std::invalid_argument("generator: receiving capacity must be positive");
  if (!(c.energy_inflation_min >= 1.0 && c.energy_inflation_max >= c.energy_inflation_min) ||
      !(c.time_inflation_min >= 1.0 && c.time_inflation_max >= c.time_inflation_min))
    throw std::invalid_argument("generator: inflation ranges must satisfy 1 <= min <= max");
  if (!(c.cv_idle_fraction >= 0.0 && c.cv_idle_fraction <= 1.0))
    throw std::invalid_argument("generator: CV idle fraction must lie in [0, 1]");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::exponential_distribution<double> gap(1.0 / c.mean_interarrival_minutes);
  std::uniform_int_distribution<int> charge_minutes(c.min_charge_minutes, c.max_charge_minutes);
  std::uniform_int_distribution<std::size_t> capacity_pick(0, c.receiving_capacities_kw.size() - 1);

  auto lerp = [](double lo, double hi, double u) { return lo + (hi - lo) * u; };
  const int width = std::max<int>(2, static_cast<int>(std::to_string(c.evses - 1).size()));
  std::vector<Timestamp> clock(c.evses, c.start);
  std::vector<ChargingSession> sessions;
  sessions.reserve(c.sessions);

  for (std::size_t i = 0; i < c.sessions; ++i) {
    // Every draw happens for every session so that two configs differing
    // only in the CV fraction produce matched sessions.
    const std::size_t evse = i % c.evses;
    const double u_class = unit(rng);
    const double gap_min = gap(rng);
    const int minutes = charge_minutes(rng);
    const double rec_kw = c.receiving_capacities_kw[capacity_pick(rng)];
    const double u_energy = unit(rng);
    const double u_time = unit(rng);
    const double u_idle = unit(rng);

    clock[evse] += std::chrono::minutes(static_cast<long long>(std::llround(gap_min)));
    ChargingSession s;
    std::ostringstream evse_name;
    evse_name << c.evse_prefix;
    evse_name.width(width);
    evse_name.fill('0');
    evse_name << evse;
    s.evse_id = evse_name.str();
    std::ostringstream sid;
    sid << "syn-";
    sid.width(6);
    sid.fill('0');
    sid << i;
    s.session_id = sid.str();
    s.receiving_capacity_kw = rec_kw;
    s.plug_in_time = clock[evse];
    s.charge_end_time = s.plug_in_time + std::chrono::minutes(minutes);
    s.energy_delivered_kwh = rec_kw * minutes / 60.0;

    if (u_class < c.cv_fraction) {
      s.vehicle_class = VehicleClass::CV;
      const double energy_inflation = lerp(c.energy_inflation_min, c.energy_inflation_max, u_energy);
      const double time_inflation = lerp(c.time_inflation_min, c.time_inflation_max, u_time);
      s.energy_requested_kwh = s.energy_delivered_kwh * energy_inflation;
      s.minutes_available = minutes * time_inflation;
      const double idle = std::floor(u_idle * c.cv_idle_fraction * (s.minutes_available - minutes));
      s.unplug_time = s.charge_end_time + std::chrono::minutes(static_cast<long long>(idle));
    } else {
      s.vehicle_class = VehicleClass::AV;
      s.energy_requested_kwh = s.energy_delivered_kwh;
      s.minutes_available = minutes;
      s.unplug_time = s.charge_end_time;
    }
    sessions.push_back(std::move(s));
  }
  return SessionBatch(std::move(sessions), "synthetic-" + std::to_string(seed));
}

// ---------------------------------------------------------------------------
// Rates and ratios

double demand_rate_kw(std::span<const ChargingSession> sessions) {
  if (sessions.empty()) throw std::invalid_argument("demand rate of an empty session set");
  double energy = 0.0, minutes = 0.0;
  for (const auto& s : sessions) {
    energy += s.energy_requested_kwh;
    minutes += s.minutes_available;
  }
  if (!(minutes > 0.0)) throw std::domain_error("demand rate: zero total requested minutes");
  return energy / minutes * 60.0;
}

double delivery_rate_kw(std::span<const ChargingSession> sessions) {
  if (sessions.empty()) throw std::invalid_argument("delivery rate of an empty session set");
  double energy = 0.0, minutes = 0.0;
  for (const auto& s : sessions) {
    energy += s.energy_delivered_kwh;
    minutes += s.actual_minutes();
  }
  if (!(minutes > 0.0)) throw std::domain_error("delivery rate: zero total actual minutes");
  return energy / minutes * 60.0;
}

double rate_ratio(double delivery, double demand) {
  if (!(demand > 0.0)) throw std::domain_error("rate ratio: zero demand rate");
  return delivery / demand;
}

double rate_ratio(std::span<const ChargingSession> sessions) {
  return rate_ratio(delivery_rate_kw(sessions), demand_rate_kw(sessions));
}

double time_ratio(const ChargingSession& s) {
  const double plugged = s.plugged_minutes();
  if (!(plugged > 0.0)) throw std::domain_error("time ratio: zero plugged-in duration");
  return s.actual_minutes() / plugged;
}

double energy_ratio(const ChargingSession& s) {
  if (!(s.energy_requested_kwh > 0.0)) throw std::domain_error("energy ratio: zero requested energy");
  return s.energy_delivered_kwh / s.energy_requested_kwh;
}

}  // namespace evsched
