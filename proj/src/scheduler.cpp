#include "evsched/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "evsched/errors.hpp"
#include "json.hpp"

namespace evsched {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSlack = 1e-9;

double upsilon_or_zero(const ChargingSession& s) { return has_ratio_support(s) ? energy_ratio(s) : 0.0; }

/// The request verbatim: d_req minutes at the charging rate.
SchedulingDecision as_requested(const ChargingSession& s, const EvseConfig& evse) {
  SchedulingDecision d;
  d.schedule_now = 1;
  if (has_ratio_support(s)) d.demand_supply_index = energy_ratio(s);
  d.allocated_rate_kw = charging_rate_kw(s, evse);
  d.allocated_energy_kwh = std::min(s.energy_requested_kwh, d.allocated_rate_kw * s.minutes_available / 60.0);
  d.allocated_minutes = s.minutes_available + evse.switching_minutes;
  return d;
}

struct Lane {
  EvseConfig config;
  std::vector<std::size_t> sessions;  // flat indices, plug-in order
  std::size_t next_arrival = 0;
  std::deque<std::size_t> waiting;
  double busy_until = -kInf;
  double retry_at = -kInf;
  Carry carry;
};

struct Active {
  double end;
  double rate;
};

}  // namespace

ExecutionResult simulate(const SessionBatch& batch, const SiteConfig& site, PolicyKind kind, const Model* model,
                         const ExecuteOptions& options) {
  site.check();
  if (!(options.step_minutes > 0.0)) throw std::invalid_argument("execute: step_minutes must be positive");
  if (!(options.risk >= 0.0 && options.risk < 1.0)) throw std::invalid_argument("execute: risk must lie in [0, 1)");
  if (kind == PolicyKind::Model && !model) throw std::invalid_argument("execute: the learned policy needs a model");

  ExecutionResult result;
  const std::vector<ChargingSession> flat = batch.flatten();
  result.outcomes.resize(flat.size());
  if (flat.empty()) {
    result.report = compute_metrics(result.outcomes, site, "");
    return result;
  }

  Timestamp t0 = flat.front().plug_in_time;
  for (const auto& s : flat) t0 = std::min(t0, s.plug_in_time);
  std::vector<double> arrival(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    arrival[i] = minutes_between(t0, flat[i].plug_in_time);
    auto& o = result.outcomes[i];
    o.session_id = flat[i].session_id;
    o.evse_id = flat[i].evse_id;
    o.arrival = flat[i].plug_in_time;
  }

  std::vector<Lane> lanes;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    if (lanes.empty() || flat[i].evse_id != flat[lanes.back().sessions.front()].evse_id) {
      Lane lane;
      lane.config = site.evse(flat[i].evse_id);
      if (kind == PolicyKind::Model) {
        const AgentState* a = model->agent(flat[i].evse_id);
        lane.carry = a ? a->carry : Carry::zeros(model->shape.hidden);
      }
      lanes.push_back(std::move(lane));
    }
    lanes.back().sessions.push_back(i);
  }

  std::vector<Active> active;
  std::vector<ScheduleOutcome> finished;
  std::size_t started = 0, deferrals = 0;
  double clock = -kInf;

  auto candidate = [&](const Lane& l) {
    if (!l.waiting.empty()) return std::max({clock, l.busy_until, l.retry_at});
    if (l.next_arrival < l.sessions.size()) return std::max({clock, l.busy_until, arrival[l.sessions[l.next_arrival]]});
    return kInf;
  };

  auto finish = [&](std::size_t i) {
    if (options.update_every > 0 && options.periodic_update) finished.push_back(result.outcomes[i]);
  };

  while (true) {
    std::size_t pick = lanes.size();
    double t = kInf;
    for (std::size_t k = 0; k < lanes.size(); ++k) {
      const double c = candidate(lanes[k]);
      if (c < t) {
        t = c;
        pick = k;
      }
    }
    if (pick == lanes.size()) break;
    clock = t;
    Lane& lane = lanes[pick];

    while (lane.next_arrival < lane.sessions.size() && arrival[lane.sessions[lane.next_arrival]] <= t + kSlack)
      lane.waiting.push_back(lane.sessions[lane.next_arrival++]);

    // Sessions still waiting past their availability window are voided.
    for (auto it = lane.waiting.begin(); it != lane.waiting.end();) {
      if (t > arrival[*it] + flat[*it].minutes_available + kSlack) {
        auto& o = result.outcomes[*it];
        o.voided = true;
        o.wait_minutes = flat[*it].minutes_available;
        finish(*it);
        it = lane.waiting.erase(it);
      } else {
        ++it;
      }
    }
    if (lane.waiting.empty()) continue;

    // Pick the session to start, if any.
    bool chosen = false;
    std::optional<double> next_upsilon;
    if (kind == PolicyKind::Model) {
      for (std::size_t turns = 0; turns < lane.waiting.size(); ++turns) {
        const ChargingSession& head = flat[lane.waiting[0]];
        const ChargingSession* next = lane.waiting.size() > 1 ? &flat[lane.waiting[1]] : nullptr;
        const Vec x = encode_input(head, next, model->config.lookahead);
        const StepOutput out = policy_value_forward(model->shape, model->coordinator.params, x, lane.carry);
        const int a = scheduling_indicator(out.policy);
        next_upsilon.reset();
        if (next) next_upsilon = upsilon_or_zero(*next);
        if (!next || (a == 1 && eta_ordered(upsilon_or_zero(head), next_upsilon, 1))) {
          chosen = true;
          break;
        }
        lane.waiting.push_back(lane.waiting.front());
        lane.waiting.pop_front();
      }
    } else {
      chosen = true;
      if (lane.waiting.size() > 1) next_upsilon = upsilon_or_zero(flat[lane.waiting[1]]);
    }
    if (!chosen) {
      lane.retry_at = t + options.step_minutes;
      continue;
    }

    const std::size_t i = lane.waiting.front();
    const ChargingSession& s = flat[i];
    const SchedulingDecision d = kind == PolicyKind::AsRequested ? as_requested(s, lane.config) : allocate(s, lane.config, 1);

    active.erase(std::remove_if(active.begin(), active.end(), [&](const Active& a) { return a.end <= t + kSlack; }),
                 active.end());
    double draw = 0.0;
    for (const auto& a : active) draw += a.rate;
    if (draw + d.allocated_rate_kw > site.dso_capacity_kw + kSlack) {
      ++deferrals;
      lane.retry_at = t + options.step_minutes;
      continue;
    }

    lane.waiting.pop_front();
    const Timestamp start = t0 + std::chrono::minutes(static_cast<long long>(std::floor(t)));
    const RealizedSession r = realize(s, d, lane.config, start);
    auto& o = result.outcomes[i];
    o.decision = d;
    o.scheduled = true;
    o.wait_minutes = t - arrival[i];
    o.delivered_kwh = r.energy_kwh;
    o.rate_kw = r.rate_kw;
    o.active_minutes = r.active_minutes;
    o.start_offset_minutes = t;
    const RewardTerms terms = reward_terms(s);
    o.reward = terms.supported
                   ? session_reward(terms.zeta, terms.rho, options.risk, eta_ordered(terms.upsilon, next_upsilon, 1))
                   : 0.0;
    if (r.active_minutes > 0.0) active.push_back({t + r.active_minutes, r.rate_kw});
    lane.busy_until = t + d.allocated_minutes;
    lane.retry_at = -kInf;
    finish(i);
    ++started;
    if (options.update_every > 0 && options.periodic_update &&
        started % static_cast<std::size_t>(options.update_every) == 0)
      options.periodic_update(finished);
  }

  if (deferrals) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu start(s) deferred by %g min to stay within the site capacity of %g kW",
                  deferrals, options.step_minutes, site.dso_capacity_kw);
    diagnostic(buf);
  }
  result.report = compute_metrics(result.outcomes, site, "");
  return result;
}

ExecutionResult execute(const Model& model, const SessionBatch& batch, const SiteConfig& site,
                        const ExecuteOptions& options) {
  auto r = simulate(batch, site, PolicyKind::Model, &model, options);
  r.report.policy = "ramals";
  return r;
}

ExecutionResult fcfs_as_requested_baseline(const SessionBatch& batch, const SiteConfig& site,
                                           const ExecuteOptions& options) {
  auto r = simulate(batch, site, PolicyKind::AsRequested, nullptr, options);
  r.report.policy = "fcfs-as-requested";
  return r;
}

MetricsReport risk_off_ablation(const TrainConfig& config, const SessionBatch& batch, const SiteConfig& site,
                                const ExecuteOptions& options) {
  TrainConfig cfg = config;
  cfg.risk_off = true;
  const TrainResult trained = train(batch, site, cfg);
  ExecuteOptions opts = options;
  opts.risk = 0.0;
  auto r = execute(trained.model, batch, site, opts);
  r.report.policy = "ramals-risk-off";
  return r.report;
}

MetricsReport compute_metrics(const std::vector<ScheduleOutcome>& outcomes, const SiteConfig& site,
                              const std::string& policy) {
  MetricsReport m;
  m.site_id = site.site_id;
  m.policy = policy;
  double active_minutes = 0.0;
  for (const auto& o : outcomes) {
    ++m.sessions_requested;
    m.active_hours[o.evse_id] += o.active_minutes / 60.0;
    m.energy_kwh[o.evse_id] += o.delivered_kwh;
    if (o.scheduled) ++m.sessions_served;
    if (o.voided) ++m.sessions_voided;
    m.total_energy_kwh += o.delivered_kwh;
    active_minutes += o.active_minutes;
  }
  m.total_active_hours = active_minutes / 60.0;
  m.charging_rate_kw = active_minutes > 0.0 ? m.total_energy_kwh / active_minutes * 60.0 : 0.0;
  m.assignment_efficiency_pct =
      m.sessions_requested ? 100.0 * static_cast<double>(m.sessions_served) / static_cast<double>(m.sessions_requested)
                           : 0.0;
  return m;
}

AuditResult audit(const std::vector<ScheduleOutcome>& outcomes, const SessionBatch& batch, const SiteConfig& site) {
  AuditResult res;
  auto fail = [&](const std::string& what) {
    res.ok = false;
    if (res.violations.size() < 50) res.violations.push_back(what);
  };

  std::map<std::pair<std::string, std::string>, std::vector<const ChargingSession*>> by_key;
  for (const auto& [id, group] : batch.groups())
    for (const auto& s : group) by_key[{s.evse_id, s.session_id}].push_back(&s);
  std::map<std::pair<std::string, std::string>, std::size_t> seen;

  if (outcomes.size() != batch.size())
    fail("outcome count " + std::to_string(outcomes.size()) + " differs from session count " +
         std::to_string(batch.size()));

  std::map<std::string, std::vector<std::pair<double, double>>> busy;
  std::vector<std::pair<double, double>> events;  // (time, +/- rate)
  for (const auto& o : outcomes) {
    const auto key = std::make_pair(o.evse_id, o.session_id);
    auto it = by_key.find(key);
    if (it == by_key.end() || seen[key] >= it->second.size()) {
      fail("session " + o.session_id + " at " + o.evse_id + " is not in the batch or appears twice");
      continue;
    }
    const ChargingSession& s = *it->second[seen[key]++];
    if (o.scheduled == o.voided) fail("session " + o.session_id + " is neither served nor voided exactly once");
    if (o.voided && (o.delivered_kwh != 0.0 || o.active_minutes != 0.0))
      fail("voided session " + o.session_id + " received energy");
    if (!o.scheduled) continue;
    const double cap = charging_rate_kw(s, site.evse(o.evse_id));
    if (o.rate_kw > cap + kSlack) fail("session " + o.session_id + " exceeds its rate cap");
    if (o.delivered_kwh > o.rate_kw * o.active_minutes / 60.0 * (1.0 + 1e-9) + kSlack)
      fail("session " + o.session_id + " delivered more than rate x time");
    busy[o.evse_id].push_back({o.start_offset_minutes, o.start_offset_minutes + o.decision.allocated_minutes});
    if (o.active_minutes > 0.0) {
      events.push_back({o.start_offset_minutes, o.rate_kw});
      events.push_back({o.start_offset_minutes + o.active_minutes, -o.rate_kw});
    }
  }

  for (auto& [evse, spans] : busy) {
    std::sort(spans.begin(), spans.end());
    for (std::size_t k = 1; k < spans.size(); ++k)
      if (spans[k].first < spans[k - 1].second - kSlack) fail("overlapping allocations on " + evse);
  }

  // Ends sort before starts at the same instant.
  std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return a.second < b.second;
  });
  double draw = 0.0;
  for (const auto& [time, delta] : events) {
    draw += delta;
    if (draw > site.dso_capacity_kw + 1e-6) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "site draw %.6f kW exceeds %.6f kW at minute %.3f", draw, site.dso_capacity_kw,
                    time);
      fail(buf);
    }
  }
  for (const auto& [key, list] : by_key)
    if (seen[key] != list.size()) fail("session " + key.second + " at " + key.first + " has no outcome");
  return res;
}

std::string outcomes_to_jsonl(const std::vector<ScheduleOutcome>& outcomes) {
  std::string out;
  for (const auto& o : outcomes) {
    nlohmann::ordered_json j;
    j["session_id"] = o.session_id;
    j["evse_id"] = o.evse_id;
    j["scheduled"] = o.scheduled ? 1 : 0;
    j["allocated_kwh"] = o.decision.allocated_energy_kwh;
    j["allocated_kw"] = o.decision.allocated_rate_kw;
    j["allocated_min"] = o.decision.allocated_minutes;
    j["reward"] = o.reward;
    j["voided"] = o.voided;
    j["wait_min"] = o.wait_minutes;
    j["delivered_kwh"] = o.delivered_kwh;
    j["active_min"] = o.active_minutes;
    j["start_offset_min"] = o.start_offset_minutes;
    j["arrival"] = format_timestamp(o.arrival);
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

struct Metric {
  std::string metric;
  std::string scope;
  double value;
};

std::vector<Metric> flatten_report(const MetricsReport& r) {
  std::vector<Metric> m{
      {"charging_rate_kw", "site", r.charging_rate_kw},
      {"active_charging_hours", "site", r.total_active_hours},
      {"energy_delivered_kwh", "site", r.total_energy_kwh},
      {"assignment_efficiency_pct", "site", r.assignment_efficiency_pct},
      {"sessions_requested", "site", static_cast<double>(r.sessions_requested)},
      {"sessions_served", "site", static_cast<double>(r.sessions_served)},
      {"sessions_voided", "site", static_cast<double>(r.sessions_voided)},
  };
  for (const auto& [evse, h] : r.active_hours) m.push_back({"active_charging_hours", evse, h});
  for (const auto& [evse, e] : r.energy_kwh) m.push_back({"energy_delivered_kwh", evse, e});
  return m;
}

std::string num(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto comma = line.find(',', pos);
    out.emplace_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

std::string report_to_csv(const MetricsReport& r) {
  std::string out = "site_id,policy,scope,metric,value\n";
  for (const auto& m : flatten_report(r)) out += r.site_id + "," + r.policy + "," + m.scope + "," + m.metric + "," + num(m.value) + "\n";
  return out;
}

MetricsReport report_from_csv(std::string_view text) {
  MetricsReport r;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto cols = split_csv_line(line);
    if (header) {
      if (cols != std::vector<std::string>{"site_id", "policy", "scope", "metric", "value"})
        throw ParseError("report CSV: unexpected header");
      header = false;
      continue;
    }
    if (cols.size() != 5) throw ParseError("report CSV line " + std::to_string(line_no) + ": expected 5 columns");
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(cols[4], &used);
      if (used != cols[4].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ParseError("report CSV line " + std::to_string(line_no) + ": bad value '" + cols[4] + "'");
    }
    if (r.site_id.empty()) {
      r.site_id = cols[0];
      r.policy = cols[1];
    } else if (r.site_id != cols[0] || r.policy != cols[1]) {
      throw ParseError("report CSV line " + std::to_string(line_no) + ": mixes sites or policies");
    }
    const std::string& scope = cols[2];
    const std::string& metric = cols[3];
    if (scope == "site") {
      if (metric == "charging_rate_kw") r.charging_rate_kw = v;
      else if (metric == "active_charging_hours") r.total_active_hours = v;
      else if (metric == "energy_delivered_kwh") r.total_energy_kwh = v;
      else if (metric == "assignment_efficiency_pct") r.assignment_efficiency_pct = v;
      else if (metric == "sessions_requested") r.sessions_requested = static_cast<std::size_t>(v);
      else if (metric == "sessions_served") r.sessions_served = static_cast<std::size_t>(v);
      else if (metric == "sessions_voided") r.sessions_voided = static_cast<std::size_t>(v);
      else throw ParseError("report CSV line " + std::to_string(line_no) + ": unknown metric '" + metric + "'");
    } else if (metric == "active_charging_hours") {
      r.active_hours[scope] = v;
    } else if (metric == "energy_delivered_kwh") {
      r.energy_kwh[scope] = v;
    } else {
      throw ParseError("report CSV line " + std::to_string(line_no) + ": unknown per-EVSE metric '" + metric + "'");
    }
  }
  if (header) throw ParseError("report CSV: empty");
  return r;
}

ComparisonTable compare_report(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("compare: no reports");
  ComparisonTable t;
  t.site_id = reports.front().site_id;
  for (const auto& r : reports) {
    if (r.site_id != t.site_id)
      throw std::invalid_argument("compare: reports describe different sites ('" + t.site_id + "' vs '" + r.site_id + "')");
    t.policies.push_back(r.policy);
  }
  std::vector<std::vector<Metric>> flat;
  for (const auto& r : reports) flat.push_back(flatten_report(r));
  for (std::size_t k = 1; k < flat.size(); ++k)
    if (flat[k].size() != flat[0].size()) throw std::invalid_argument("compare: reports cover different EVSEs");

  for (std::size_t row = 0; row < flat[0].size(); ++row) {
    ComparisonRow cr;
    cr.metric = flat[0][row].metric;
    cr.scope = flat[0][row].scope;
    for (std::size_t k = 0; k < flat.size(); ++k) {
      if (flat[k][row].metric != cr.metric || flat[k][row].scope != cr.scope)
        throw std::invalid_argument("compare: reports cover different EVSEs");
      cr.values.push_back(flat[k][row].value);
    }
    const double base = cr.values[0];
    for (std::size_t k = 1; k < cr.values.size(); ++k) {
      const double v = cr.values[k];
      cr.delta_pct.push_back(base != 0.0 ? (v - base) / std::abs(base) * 100.0
                                         : (v == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN()));
    }
    t.rows.push_back(std::move(cr));
  }
  return t;
}

std::string comparison_to_csv(const ComparisonTable& t) {
  std::string out = "metric,scope";
  for (const auto& p : t.policies) out += "," + p;
  for (std::size_t k = 1; k < t.policies.size(); ++k) out += ",delta_pct_" + t.policies[k];
  out += "\n";
  for (const auto& r : t.rows) {
    out += r.metric + "," + r.scope;
    for (double v : r.values) out += "," + num(v);
    for (double d : r.delta_pct) out += "," + num(d);
    out += "\n";
  }
  return out;
}

}  // namespace evsched
