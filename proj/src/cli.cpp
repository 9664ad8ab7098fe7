#include "evsched/cli.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "evsched/errors.hpp"
#include "evsched/rng.hpp"
#include "evsched/scheduler.hpp"
#include "evsched/timeutil.hpp"

namespace evsched::cli {

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "seed", "alpha", "cvar_variant", "risk_off", "risk_reference_hours",
      "sessions", "site", "model", "out", "log", "report", "reports", "policy",
      "gen.sessions", "gen.evses", "gen.cv_fraction", "gen.mean_interarrival_minutes",
      "gen.min_charge_minutes", "gen.max_charge_minutes", "gen.receiving_capacities_kw",
      "gen.energy_inflation_min", "gen.energy_inflation_max", "gen.time_inflation_min",
      "gen.time_inflation_max", "gen.cv_idle_fraction", "gen.start", "gen.evse_prefix",
      "train.episodes", "train.learning_rate", "train.gamma", "train.beta", "train.hidden",
      "train.clip", "train.lookahead", "train.risk_refresh_every", "train.workers",
      "run.step_minutes",
      "site_id", "dso_capacity_kw", "default_supply_capacity_kw", "default_switching_minutes"};
  return keys;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

void require(const std::string& value, const std::string& key, const char* command) {
  if (value.empty()) throw std::invalid_argument(std::string(command) + ": missing '" + key + "'");
}

SessionBatch load_sessions(const RunConfig& c, const char* command) {
  require(c.sessions_path, "sessions", command);
  return parse_sessions(read_file(c.sessions_path), std::filesystem::path(c.sessions_path).stem().string());
}

RiskOptions risk_options(const RunConfig& c) {
  RiskOptions o;
  o.variant = c.cvar_variant;
  o.reference_hours = c.risk_reference_hours;
  return o;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

template <class F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

RunConfig RunConfig::from(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.values())
    if (!known_keys().count(key) && key.rfind("evse.", 0) != 0) throw ParseError("unknown config key '" + key + "'");

  RunConfig c;
  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.alpha = kv.get_double("alpha", c.alpha);
  c.cvar_variant = cvar_variant_from_string(kv.get_string("cvar_variant", std::string(to_string(c.cvar_variant))));
  c.risk_off = kv.get_bool("risk_off", c.risk_off);
  c.risk_reference_hours = kv.get_double("risk_reference_hours", c.risk_reference_hours);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(c.risk_reference_hours >= 0.0)) throw std::invalid_argument("risk_reference_hours must be >= 0");

  c.sessions_path = kv.get_string("sessions", "");
  c.site_path = kv.get_string("site", "");
  c.model_path = kv.get_string("model", "");
  c.out_path = kv.get_string("out", "");
  c.log_path = kv.get_string("log", "");
  c.report_path = kv.get_string("report", "");
  c.report_paths = split_list(kv.get_string("reports", ""));
  c.policy = kv.get_string("policy", c.policy);
  if (c.policy != "model" && c.policy != "fcfs" && c.policy != "schedule-all")
    throw std::invalid_argument("policy must be one of model, fcfs, schedule-all");

  GenConfig& g = c.gen;
  g.sessions = static_cast<std::size_t>(kv.get_int("gen.sessions", static_cast<long long>(g.sessions)));
  g.evses = static_cast<std::size_t>(kv.get_int("gen.evses", static_cast<long long>(g.evses)));
  g.cv_fraction = kv.get_double("gen.cv_fraction", g.cv_fraction);
  g.mean_interarrival_minutes = kv.get_double("gen.mean_interarrival_minutes", g.mean_interarrival_minutes);
  g.min_charge_minutes = static_cast<int>(kv.get_int("gen.min_charge_minutes", g.min_charge_minutes));
  g.max_charge_minutes = static_cast<int>(kv.get_int("gen.max_charge_minutes", g.max_charge_minutes));
  g.receiving_capacities_kw = kv.get_doubles("gen.receiving_capacities_kw", g.receiving_capacities_kw);
  g.energy_inflation_min = kv.get_double("gen.energy_inflation_min", g.energy_inflation_min);
  g.energy_inflation_max = kv.get_double("gen.energy_inflation_max", g.energy_inflation_max);
  g.time_inflation_min = kv.get_double("gen.time_inflation_min", g.time_inflation_min);
  g.time_inflation_max = kv.get_double("gen.time_inflation_max", g.time_inflation_max);
  g.cv_idle_fraction = kv.get_double("gen.cv_idle_fraction", g.cv_idle_fraction);
  if (auto s = kv.get("gen.start")) g.start = parse_timestamp(*s);
  g.evse_prefix = kv.get_string("gen.evse_prefix", g.evse_prefix);

  TrainConfig& t = c.train;
  t.episodes = static_cast<int>(kv.get_int("train.episodes", t.episodes));
  t.learning_rate = kv.get_double("train.learning_rate", t.learning_rate);
  t.gamma = kv.get_double("train.gamma", t.gamma);
  t.beta = kv.get_double("train.beta", t.beta);
  t.hidden = static_cast<int>(kv.get_int("train.hidden", t.hidden));
  t.clip = kv.get_double("train.clip", t.clip);
  t.lookahead = kv.get_bool("train.lookahead", t.lookahead);
  t.risk_refresh_every = static_cast<int>(kv.get_int("train.risk_refresh_every", t.risk_refresh_every));
  const long long workers = kv.get_int("train.workers", t.workers);
  if (workers < 1) throw std::invalid_argument("train.workers must be >= 1");
  t.workers = static_cast<unsigned>(workers);
  t.seed = c.seed;
  t.alpha = c.alpha;
  t.cvar_variant = c.cvar_variant;
  t.risk_off = c.risk_off;
  t.risk_reference_hours = c.risk_reference_hours;
  t.check();

  c.step_minutes = kv.get_double("run.step_minutes", c.step_minutes);
  if (!(c.step_minutes > 0.0)) throw std::invalid_argument("run.step_minutes must be positive");

  c.site = c.site_path.empty() ? SiteConfig::from(kv) : SiteConfig::from(KeyValueConfig::load(c.site_path));
  c.site.check();
  return c;
}

std::string RunConfig::defaults_text() {
  const RunConfig c;
  const GenConfig& g = c.gen;
  const TrainConfig& t = c.train;
  std::ostringstream o;
  auto list = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + fmt(v[k]);
    return s;
  };
  o << "# evsched run configuration. Flags override these keys.\n"
    << "seed = " << c.seed << "\n"
    << "alpha = " << fmt(c.alpha) << "\n"
    << "cvar_variant = " << to_string(c.cvar_variant) << "\n"
    << "risk_off = false\n"
    << "# 0 = mean requested charging hours of the batch\n"
    << "risk_reference_hours = 0\n"
    << "\n# paths: sessions, site, model, out, log, report, reports (comma-separated)\n"
    << "policy = " << c.policy << "\n"
    << "\ngen.sessions = " << g.sessions << "\n"
    << "gen.evses = " << g.evses << "\n"
    << "gen.cv_fraction = " << fmt(g.cv_fraction) << "\n"
    << "gen.mean_interarrival_minutes = " << fmt(g.mean_interarrival_minutes) << "\n"
    << "gen.min_charge_minutes = " << g.min_charge_minutes << "\n"
    << "gen.max_charge_minutes = " << g.max_charge_minutes << "\n"
    << "gen.receiving_capacities_kw = " << list(g.receiving_capacities_kw) << "\n"
    << "gen.energy_inflation_min = " << fmt(g.energy_inflation_min) << "\n"
    << "gen.energy_inflation_max = " << fmt(g.energy_inflation_max) << "\n"
    << "gen.time_inflation_min = " << fmt(g.time_inflation_min) << "\n"
    << "gen.time_inflation_max = " << fmt(g.time_inflation_max) << "\n"
    << "gen.cv_idle_fraction = " << fmt(g.cv_idle_fraction) << "\n"
    << "gen.start = " << format_timestamp(g.start) << "\n"
    << "gen.evse_prefix = " << g.evse_prefix << "\n"
    << "\ntrain.episodes = " << t.episodes << "\n"
    << "train.learning_rate = " << fmt(t.learning_rate) << "\n"
    << "train.gamma = " << fmt(t.gamma) << "\n"
    << "train.beta = " << fmt(t.beta) << "\n"
    << "train.hidden = " << t.hidden << "\n"
    << "train.clip = " << fmt(t.clip) << "\n"
    << "train.lookahead = " << (t.lookahead ? "true" : "false") << "\n"
    << "train.risk_refresh_every = " << t.risk_refresh_every << "\n"
    << "train.workers = " << t.workers << "\n"
    << "\nrun.step_minutes = " << fmt(c.step_minutes) << "\n"
    << "\n# site (or point 'site' at a separate file with these keys)\n"
    << c.site.to_text();
  return o.str();
}

int cmd_gen_data(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    require(c.out_path, "out", "gen-data");
    const SessionBatch b = generate_synthetic(c.gen, split_seed(c.seed, seed_stream::kGenerator));
    write_file(c.out_path, sessions_to_json(b));
    log << "wrote " << b.size() << " sessions on " << b.evse_ids().size() << " EVSEs to " << c.out_path << "\n";
    return kOk;
  });
}

int cmd_fit_risk(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    require(c.out_path, "out", "fit-risk");
    const SessionBatch b = load_sessions(c, "fit-risk");
    const RiskEstimate r = estimate_risk(b, c.alpha, risk_options(c));
    write_file(c.out_path, risk_to_json(r));
    log << "alpha " << fmt(c.alpha) << ": dof " << fmt(r.fit.dof) << ", cvar_" << to_string(c.cvar_variant);
    log << " normalized " << fmt(r.cvar_normalized) << "; wrote " << c.out_path << "\n";
    return kOk;
  });
}

int cmd_train(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    require(c.out_path, "out", "train");
    const SessionBatch b = load_sessions(c, "train");
    std::optional<Model> resume;
    if (!c.model_path.empty()) resume = model_from_json(read_file(c.model_path));
    const TrainResult r = train(b, c.site, c.train, resume ? &*resume : nullptr);
    const std::string log_path = c.log_path.empty() ? with_suffix(c.out_path, ".log.csv") : c.log_path;
    write_file(c.out_path, model_to_json(r.model));
    write_file(log_path, log_to_csv(r.log));
    log << "trained " << r.log.size() << " episodes (total " << r.model.episodes_trained << ", step "
        << r.model.step_counter << "), risk " << fmt(r.risk.cvar_normalized);
    if (!r.log.empty()) log << ", last reward " << fmt(r.log.back().cumulative_reward);
    log << "; wrote " << c.out_path << " and " << log_path << "\n";
    return kOk;
  });
}

int cmd_run(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    require(c.out_path, "out", "run");
    const SessionBatch b = load_sessions(c, "run");
    ExecuteOptions opts;
    opts.step_minutes = c.step_minutes;
    if (!c.risk_off && !b.empty()) opts.risk = estimate_risk(b, c.alpha, risk_options(c)).cvar_normalized;

    ExecutionResult res;
    if (c.policy == "model") {
      require(c.model_path, "model", "run --policy model");
      const Model m = model_from_json(read_file(c.model_path));
      res = execute(m, b, c.site, opts);
    } else if (c.policy == "fcfs") {
      res = fcfs_as_requested_baseline(b, c.site, opts);
    } else {
      res = simulate(b, c.site, PolicyKind::ScheduleAll, nullptr, opts);
      res.report.policy = "schedule-all";
    }
    const std::string report_path = c.report_path.empty() ? with_suffix(c.out_path, ".report.csv") : c.report_path;
    write_file(c.out_path, outcomes_to_jsonl(res.outcomes));
    write_file(report_path, report_to_csv(res.report));
    const MetricsReport& m = res.report;
    log << m.policy << ": served " << m.sessions_served << "/" << m.sessions_requested << " ("
        << fmt(m.assignment_efficiency_pct) << "%), " << fmt(m.total_energy_kwh) << " kWh, "
        << fmt(m.total_active_hours) << " active h; wrote " << c.out_path << " and " << report_path << "\n";

    const AuditResult a = audit(res.outcomes, b, c.site);
    if (!a.ok) {
      for (const auto& v : a.violations) log << "audit: " << v << "\n";
      return kAuditFailed;
    }
    return kOk;
  });
}

int cmd_compare(const RunConfig& c, std::ostream& log) {
  return guarded(log, [&] {
    require(c.out_path, "out", "compare");
    if (c.report_paths.size() < 2) throw std::invalid_argument("compare: need at least two reports");
    std::vector<MetricsReport> reports;
    for (const auto& p : c.report_paths) reports.push_back(report_from_csv(read_file(p)));
    const ComparisonTable t = compare_report(reports);
    write_file(c.out_path, comparison_to_csv(t));
    log << "compared " << reports.size() << " reports over " << t.rows.size() << " metrics; wrote " << c.out_path
        << "\n";
    return kOk;
  });
}

}  // namespace evsched::cli
