#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "evsched/config.hpp"
#include "evsched/learner.hpp"
#include "evsched/risk.hpp"
#include "evsched/session.hpp"

namespace evsched::cli {

/// Everything a subcommand needs, read from flat key-value text (see
/// RunConfig::defaults_text for every key). Command-line flags are applied
/// as key overrides before parsing, so a flag and a config line are the same thing.
struct RunConfig {
  std::uint64_t seed = 1;  ///< root seed; each module draws from its own split stream
  double alpha = 0.99;
  CvarVariant cvar_variant = CvarVariant::Standard;
  bool risk_off = false;
  double risk_reference_hours = 0.0;

  std::string sessions_path;
  std::string site_path;
  std::string model_path;   ///< input: run --policy model, or train resume
  std::string out_path;
  std::string log_path;     ///< train log; default <out>.log.csv
  std::string report_path;  ///< run report; default <out>.report.csv
  std::vector<std::string> report_paths;  ///< compare inputs
  std::string policy = "model";           ///< model | fcfs | schedule-all

  GenConfig gen;
  TrainConfig train;  ///< seed, alpha, variant and risk fields mirror the top-level keys
  double step_minutes = 15.0;

  SiteConfig site;  ///< from site_path, else from the site keys of this config

  /// Throws ParseError on an unknown key or unreadable value and
  /// std::invalid_argument on an out-of-range one.
  static RunConfig from(const KeyValueConfig& kv);
  /// Default config listing every key.
  static std::string defaults_text();
};

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;      ///< bad input, I/O error, corrupt model
inline constexpr int kAuditFailed = 3;  ///< outputs written but an invariant audit failed

// Each command writes its outputs, reports on `log` and returns an exit code.
// Errors are reported on `log` as "error: ..." and map to kFailure.
int cmd_gen_data(const RunConfig& c, std::ostream& log);
int cmd_fit_risk(const RunConfig& c, std::ostream& log);
int cmd_train(const RunConfig& c, std::ostream& log);
int cmd_run(const RunConfig& c, std::ostream& log);
int cmd_compare(const RunConfig& c, std::ostream& log);

std::string read_file(const std::string& path);
/// Creates parent directories; throws std::runtime_error on failure.
void write_file(const std::string& path, const std::string& content);

}  // namespace evsched::cli
