#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "evsched/config.hpp"
#include "evsched/learner.hpp"
#include "evsched/mdp.hpp"

namespace evsched {

/// What happened to one session.
struct ScheduleOutcome {
  std::string session_id;
  std::string evse_id;
  SchedulingDecision decision;
  bool scheduled = false;
  bool voided = false;
  double wait_minutes = 0.0;
  double delivered_kwh = 0.0;
  double rate_kw = 0.0;
  double active_minutes = 0.0;
  double start_offset_minutes = 0.0;  ///< from the earliest plug-in of the run
  Timestamp arrival{};
  double reward = 0.0;
};

struct MetricsReport {
  std::string site_id;
  std::string policy;
  double charging_rate_kw = 0.0;  ///< delivered energy / active time over served sessions
  std::map<std::string, double> active_hours;
  std::map<std::string, double> energy_kwh;
  double total_active_hours = 0.0;
  double total_energy_kwh = 0.0;
  double assignment_efficiency_pct = 0.0;
  std::size_t sessions_requested = 0;
  std::size_t sessions_served = 0;
  std::size_t sessions_voided = 0;
};

struct ExecutionResult {
  std::vector<ScheduleOutcome> outcomes;  ///< in batch order (EVSE, then plug-in)
  MetricsReport report;
};

struct ExecuteOptions {
  /// Clock advance after a full rotation without a start, or a capacity deferral.
  double step_minutes = kDefaultQueueStepMinutes;
  /// Normalized risk used in the logged rewards.
  double risk = 0.0;
  /// Call `periodic_update` after every this many started sessions; 0 = never.
  int update_every = 0;
  std::function<void(const std::vector<ScheduleOutcome>&)> periodic_update;
};

/// How each waiting session is handled at a decision point.
enum class PolicyKind {
  Model,         ///< learned argmax policy with the eta comparison, tight allocation
  ScheduleAll,   ///< FCFS, always schedule, tight allocation
  AsRequested,   ///< FCFS, always schedule, allocation = the raw request
};

/// Event-driven run over the whole site with one global clock.
/// `model` is required for PolicyKind::Model and ignored otherwise.
ExecutionResult simulate(const SessionBatch& batch, const SiteConfig& site, PolicyKind kind, const Model* model,
                         const ExecuteOptions& options = {});

/// The learned policy.
ExecutionResult execute(const Model& model, const SessionBatch& batch, const SiteConfig& site,
                        const ExecuteOptions& options = {});

/// Every session gets exactly its request (capped by the charging rate).
ExecutionResult fcfs_as_requested_baseline(const SessionBatch& batch, const SiteConfig& site,
                                           const ExecuteOptions& options = {});

/// Train with risk pinned to 0, then execute.
MetricsReport risk_off_ablation(const TrainConfig& config, const SessionBatch& batch, const SiteConfig& site,
                                const ExecuteOptions& options = {});

MetricsReport compute_metrics(const std::vector<ScheduleOutcome>& outcomes, const SiteConfig& site,
                              const std::string& policy);

struct AuditResult {
  bool ok = true;
  std::vector<std::string> violations;
};

/// Session conservation, per-session rate caps, voided => no energy, no
/// overlapping allocations on an EVSE, and site draw <= dso_capacity_kw at
/// every instant.
AuditResult audit(const std::vector<ScheduleOutcome>& outcomes, const SessionBatch& batch, const SiteConfig& site);

/// JSON lines, one object per outcome.
std::string outcomes_to_jsonl(const std::vector<ScheduleOutcome>& outcomes);

/// Long format: site_id,policy,scope,metric,value
std::string report_to_csv(const MetricsReport& r);
MetricsReport report_from_csv(std::string_view text);

struct ComparisonRow {
  std::string metric;
  std::string scope;
  std::vector<double> values;      ///< one per report
  std::vector<double> delta_pct;   ///< vs the first report, one per later report
};

struct ComparisonTable {
  std::string site_id;
  std::vector<std::string> policies;
  std::vector<ComparisonRow> rows;
};

/// Side by side, with percentage change against the first report. Throws
/// std::invalid_argument when the reports describe different sites.
ComparisonTable compare_report(const std::vector<MetricsReport>& reports);
std::string comparison_to_csv(const ComparisonTable& t);

}  // namespace evsched
