// Python module evsched._core. Results come back as plain dicts and lists.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "evsched/config.hpp"
#include "evsched/errors.hpp"
#include "evsched/learner.hpp"
#include "evsched/risk.hpp"
#include "evsched/scheduler.hpp"
#include "evsched/session.hpp"

namespace py = pybind11;
using namespace evsched;

namespace {

py::dict risk_dict(const RiskEstimate& r) {
  py::dict d;
  d["alpha"] = r.alpha;
  d["dof"] = r.fit.dof;
  d["location"] = r.fit.location;
  d["scale"] = r.fit.scale;
  d["cutoff"] = r.cutoff;
  d["var"] = r.var;
  d["cvar_paper"] = r.cvar_paper ? py::object(py::float_(*r.cvar_paper)) : py::object(py::none());
  d["cvar_standard"] = r.cvar_standard;
  d["cvar_empirical"] = r.cvar_empirical;
  d["cvar_normalized"] = r.cvar_normalized;
  d["reference_scale"] = r.reference_scale;
  d["samples"] = r.sample_count;
  d["degenerate"] = r.degenerate;
  return d;
}

py::dict report_dict(const MetricsReport& m) {
  py::dict d;
  d["site_id"] = m.site_id;
  d["policy"] = m.policy;
  d["charging_rate_kw"] = m.charging_rate_kw;
  d["active_charging_hours"] = m.total_active_hours;
  d["energy_delivered_kwh"] = m.total_energy_kwh;
  d["assignment_efficiency_pct"] = m.assignment_efficiency_pct;
  d["sessions_requested"] = m.sessions_requested;
  d["sessions_served"] = m.sessions_served;
  d["sessions_voided"] = m.sessions_voided;
  d["active_hours_by_evse"] = m.active_hours;
  d["energy_kwh_by_evse"] = m.energy_kwh;
  return d;
}

py::dict execution_dict(const ExecutionResult& r, const SessionBatch& batch, const SiteConfig& site) {
  py::dict d;
  d["report"] = report_dict(r.report);
  d["outcomes_jsonl"] = outcomes_to_jsonl(r.outcomes);
  d["report_csv"] = report_to_csv(r.report);
  d["audit_ok"] = audit(r.outcomes, batch, site).ok;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Risk-aware EV charging scheduler";

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<ModelFormatError>(m, "ModelFormatError", PyExc_ValueError);

  py::class_<GenConfig>(m, "GenConfig")
      .def(py::init<>())
      .def_readwrite("sessions", &GenConfig::sessions)
      .def_readwrite("evses", &GenConfig::evses)
      .def_readwrite("cv_fraction", &GenConfig::cv_fraction)
      .def_readwrite("mean_interarrival_minutes", &GenConfig::mean_interarrival_minutes)
      .def_readwrite("min_charge_minutes", &GenConfig::min_charge_minutes)
      .def_readwrite("max_charge_minutes", &GenConfig::max_charge_minutes)
      .def_readwrite("receiving_capacities_kw", &GenConfig::receiving_capacities_kw)
      .def_readwrite("energy_inflation_min", &GenConfig::energy_inflation_min)
      .def_readwrite("energy_inflation_max", &GenConfig::energy_inflation_max)
      .def_readwrite("time_inflation_min", &GenConfig::time_inflation_min)
      .def_readwrite("time_inflation_max", &GenConfig::time_inflation_max);

  py::class_<SessionBatch>(m, "SessionBatch")
      .def("__len__", &SessionBatch::size)
      .def_property_readonly("evse_ids", &SessionBatch::evse_ids)
      .def_property_readonly("id", &SessionBatch::id)
      .def("to_json", [](const SessionBatch& b) { return sessions_to_json(b); });

  py::class_<SiteConfig>(m, "SiteConfig")
      .def(py::init<>())
      .def_static("from_text", [](const std::string& text) { return SiteConfig::from(KeyValueConfig::parse(text)); })
      .def_readwrite("site_id", &SiteConfig::site_id)
      .def_readwrite("dso_capacity_kw", &SiteConfig::dso_capacity_kw)
      .def_readwrite("default_supply_capacity_kw", &SiteConfig::default_supply_capacity_kw)
      .def_readwrite("default_switching_minutes", &SiteConfig::default_switching_minutes)
      .def("to_text", &SiteConfig::to_text);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("episodes", &TrainConfig::episodes)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("gamma", &TrainConfig::gamma)
      .def_readwrite("beta", &TrainConfig::beta)
      .def_readwrite("alpha", &TrainConfig::alpha)
      .def_readwrite("hidden", &TrainConfig::hidden)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("clip", &TrainConfig::clip)
      .def_readwrite("lookahead", &TrainConfig::lookahead)
      .def_readwrite("risk_off", &TrainConfig::risk_off)
      .def_readwrite("risk_reference_hours", &TrainConfig::risk_reference_hours)
      .def_readwrite("workers", &TrainConfig::workers);

  py::class_<Model>(m, "Model")
      .def_readonly("episodes_trained", &Model::episodes_trained)
      .def_readonly("step_counter", &Model::step_counter)
      .def("to_json", [](const Model& mo) { return model_to_json(mo); });

  m.def("parse_sessions", [](const std::string& text) { return parse_sessions(text); }, py::arg("json_text"));
  m.def("generate_synthetic", &generate_synthetic, py::arg("config"), py::arg("seed"));

  m.def(
      "estimate_risk",
      [](const SessionBatch& b, double alpha, const std::string& variant, double reference_hours) {
        RiskOptions o;
        o.variant = cvar_variant_from_string(variant);
        o.reference_hours = reference_hours;
        return risk_dict(estimate_risk(b, alpha, o));
      },
      py::arg("batch"), py::arg("alpha") = 0.99, py::arg("variant") = "standard", py::arg("reference_hours") = 0.0);
  m.def(
      "fit_student_t",
      [](const std::vector<double>& samples) {
        const auto f = fit_student_t(samples);
        py::dict d;
        d["dof"] = f.dof;
        d["location"] = f.location;
        d["scale"] = f.scale;
        d["log_likelihood"] = f.log_likelihood_at_optimum;
        return d;
      },
      py::arg("samples"));
  m.def("standardized_cdf", &standardized_cdf, py::arg("x"), py::arg("dof"));
  m.def("standardized_ppf", &standardized_ppf, py::arg("alpha"), py::arg("dof"));
  m.def(
      "cvar_empirical",
      [](const std::vector<double>& v, double alpha, std::size_t min_tail) { return cvar_empirical(v, alpha, min_tail); },
      py::arg("samples"), py::arg("alpha"), py::arg("min_tail") = 1);
  m.def("session_reward", &session_reward, py::arg("zeta"), py::arg("rho"), py::arg("risk"), py::arg("eta_ordered"));
  m.def(
      "discounted_return", [](const std::vector<double>& r, double gamma) { return discounted_return(r, gamma); },
      py::arg("rewards"), py::arg("gamma"));

  m.def(
      "train",
      [](const SessionBatch& b, const TrainConfig& c, const SiteConfig& site, const Model* resume) {
        TrainResult r;
        {
          py::gil_scoped_release nogil;
          r = train(b, site, c, resume);
        }
        py::list log;
        for (const auto& row : r.log) {
          py::dict d;
          d["episode"] = row.episode;
          d["cumulative_reward"] = row.cumulative_reward;
          d["value_loss"] = row.value_loss;
          d["policy_loss"] = row.policy_loss;
          d["entropy_loss"] = row.entropy_loss;
          log.append(d);
        }
        return py::make_tuple(r.model, log, risk_dict(r.risk));
      },
      py::arg("batch"), py::arg("config"), py::arg("site") = SiteConfig{}, py::arg("resume") = nullptr,
      "Returns (model, episode log, risk estimate).");
  m.def("model_from_json", &model_from_json, py::arg("text"));

  m.def(
      "execute",
      [](const Model& mo, const SessionBatch& b, const SiteConfig& site, double risk) {
        ExecuteOptions o;
        o.risk = risk;
        return execution_dict(execute(mo, b, site, o), b, site);
      },
      py::arg("model"), py::arg("batch"), py::arg("site") = SiteConfig{}, py::arg("risk") = 0.0);
  m.def(
      "fcfs_as_requested_baseline",
      [](const SessionBatch& b, const SiteConfig& site) {
        return execution_dict(fcfs_as_requested_baseline(b, site), b, site);
      },
      py::arg("batch"), py::arg("site") = SiteConfig{});
}
