// evsched command line: gen-data, fit-risk, train, run, compare, defaults.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "evsched/cli.hpp"
#include "evsched/errors.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<long long> seed;
  std::optional<double> alpha;
  std::optional<std::string> cvar_variant;
  bool risk_off = false;
  std::optional<std::string> out;
  std::optional<std::string> sessions, site, model, log, report, policy;
  std::optional<int> episodes;
  std::vector<std::string> reports;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Risk-aware EV charging scheduler"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", f.seed, "root seed");
    sub->add_option("--alpha", f.alpha, "CVaR confidence level in (0, 1)");
    sub->add_option("--cvar-variant", f.cvar_variant, "closed form feeding the reward")
        ->check(CLI::IsMember({"paper", "standard"}));
    sub->add_flag("--risk-off", f.risk_off, "pin the risk term to 0");
    sub->add_option("--out", f.out, "output path");
  };

  auto* gen = app.add_subcommand("gen-data", "write a synthetic session batch as JSON");
  common(gen);
  auto* fit = app.add_subcommand("fit-risk", "fit the laxity tail and write the risk estimate as JSON");
  common(fit);
  fit->add_option("--sessions", f.sessions, "session JSON");
  auto* tr = app.add_subcommand("train", "train the scheduling policy");
  common(tr);
  tr->add_option("--sessions", f.sessions, "session JSON");
  tr->add_option("--site", f.site, "site config file");
  tr->add_option("--model", f.model, "model to resume from");
  tr->add_option("--episodes", f.episodes, "episodes to run");
  tr->add_option("--log", f.log, "training log CSV (default <out>.log.csv)");
  auto* run = app.add_subcommand("run", "schedule a batch and write outcomes and a metrics report");
  common(run);
  run->add_option("--sessions", f.sessions, "session JSON");
  run->add_option("--site", f.site, "site config file");
  run->add_option("--model", f.model, "trained model (policy model)");
  run->add_option("--policy", f.policy, "model | fcfs | schedule-all")
      ->check(CLI::IsMember({"model", "fcfs", "schedule-all"}));
  run->add_option("--report", f.report, "metrics CSV (default <out>.report.csv)");
  auto* cmp = app.add_subcommand("compare", "side-by-side metrics with percentage deltas");
  common(cmp);
  cmp->add_option("reports", f.reports, "report CSVs; deltas are against the first")->expected(2, -1);
  auto* defs = app.add_subcommand("defaults", "print the default config");

  CLI11_PARSE(app, argc, argv);

  if (defs->parsed()) {
    std::cout << evsched::cli::RunConfig::defaults_text();
    return evsched::cli::kOk;
  }

  evsched::cli::RunConfig config;
  try {
    evsched::KeyValueConfig kv = f.config.empty() ? evsched::KeyValueConfig{} : evsched::KeyValueConfig::load(f.config);
    auto set = [&](const char* key, const auto& v) {
      if (v) kv.set(key, CLI::detail::to_string(*v));
    };
    set("seed", f.seed);
    set("alpha", f.alpha);
    set("cvar_variant", f.cvar_variant);
    if (f.risk_off) kv.set("risk_off", "true");
    set("out", f.out);
    set("sessions", f.sessions);
    set("site", f.site);
    set("model", f.model);
    set("log", f.log);
    set("report", f.report);
    set("policy", f.policy);
    set("train.episodes", f.episodes);
    if (!f.reports.empty()) {
      std::string joined;
      for (const auto& r : f.reports) joined += (joined.empty() ? "" : ",") + r;
      kv.set("reports", joined);
    }
    config = evsched::cli::RunConfig::from(kv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return evsched::cli::kFailure;
  }

  if (gen->parsed()) return evsched::cli::cmd_gen_data(config, std::cerr);
  if (fit->parsed()) return evsched::cli::cmd_fit_risk(config, std::cerr);
  if (tr->parsed()) return evsched::cli::cmd_train(config, std::cerr);
  if (run->parsed()) return evsched::cli::cmd_run(config, std::cerr);
  return evsched::cli::cmd_compare(config, std::cerr);
}
