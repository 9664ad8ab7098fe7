#pragma once

#include <string>

#include "evsched/session.hpp"
#include "evsched/timeutil.hpp"

namespace evsched::test {

inline Timestamp at(int minutes_after_midnight) {
  return Timestamp{std::chrono::sys_days{std::chrono::year{2019} / 10 / 17}} +
         std::chrono::minutes(minutes_after_midnight);
}

/// Session plugged in at `plug` (minutes after midnight) that charged for
/// `charge` minutes and left after `plugged` minutes.
inline ChargingSession make_session(std::string id, std::string evse, VehicleClass cls, double e_req, double d_req,
                                    int plug, int charge, int plugged, double e_act, double rec_kw = 50.0) {
  ChargingSession s;
  s.session_id = std::move(id);
  s.evse_id = std::move(evse);
  s.vehicle_class = cls;
  s.energy_requested_kwh = e_req;
  s.minutes_available = d_req;
  s.plug_in_time = at(plug);
  s.charge_end_time = at(plug + charge);
  s.unplug_time = at(plug + plugged);
  s.energy_delivered_kwh = e_act;
  s.receiving_capacity_kw = rec_kw;
  return s;
}

/// AV session: request equals what it took.
inline ChargingSession exact(std::string id, std::string evse, double kwh, int plug, int minutes, double rec_kw = 50.0) {
  return make_session(std::move(id), std::move(evse), VehicleClass::AV, kwh, minutes, plug, minutes, minutes, kwh,
                      rec_kw);
}

}  // namespace evsched::test
