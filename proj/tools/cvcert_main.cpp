#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cvcert/experiment.hpp"
#include "cvcert/rng.hpp"

namespace {

using namespace cvcert;

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> trials;
  std::optional<std::string> budget_mode;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment config file")->required();
  cmd->add_option("--seed", flags.seed, "base seed override");
  cmd->add_option("--trials", flags.trials, "trial count override");
  cmd->add_option("--budget-mode", flags.budget_mode, "literal or reduced:N");
  cmd->add_option("--out", flags.out, "artifact directory override");
}

ExperimentConfig load_with_overrides(const CommonFlags& flags) {
  ExperimentConfig config = load_experiment_config(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.trials) config.trials = *flags.trials;
  if (flags.out) config.out_dir = *flags.out;
  if (flags.budget_mode) apply_budget_mode(config, *flags.budget_mode);
  return config;
}

void print_plan_table(const ExperimentConfig& config, const PlanBundle& bundle) {
  const SamplePlan& plan = bundle.sample_plan;
  std::cout << "bound kind      " << bundle.bound_kind << "\n";
  std::cout << "budget mode     "
            << (config.budget_mode == BudgetMode::literal
                    ? "literal"
                    : "reduced:" + std::to_string(config.reduced_count))
            << "\n";
  std::cout << "test            F_T " << config.test.F_T << "  alpha " << config.test.alpha
            << "  epsilon " << plan.epsilon
            << (config.budget_mode == BudgetMode::reduced ? " (achieved)" : "") << "\n";
  std::cout << "network         m " << plan.m << "  photons " << plan.n << "  d " << plan.d
            << "  kappa " << plan.kappa << "  s_max " << plan.s_max << "\n";
  std::cout << "moments         " << bundle.keys.size() << " relevant\n";
  if (plan.gaussian) {
    std::cout << "per-moment      C1 " << plan.C1 << " (first)  C2 " << plan.C2 << " (second)";
    if (plan.pilot_first > 0) std::cout << "  pilot " << plan.pilot_first << " (x = 0)";
    std::cout << "\n";
  } else {
    std::cout << "per-moment      C_le " << plan.C_le << " across N_le " << plan.N_le
              << " moments\n";
  }
  std::cout << "settings        " << plan.settings_count << " (bound " << plan.settings_bound
            << ")\n";
  std::cout << "total copies    " << plan.total_copies << "\n";
  std::cout << "envelope        " << plan.envelope << "\n";
  if (plan.postselection_probability != 1.0) {
    std::cout << "post-selection  P " << plan.postselection_probability << "\n";
  }
}

int cmd_plan(const CommonFlags& flags) {
  const ExperimentConfig config = load_with_overrides(flags);
  const PlanBundle bundle = make_plan(config);
  print_plan_table(config, bundle);
  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    std::ofstream out(config.out_dir + "/plan.json", std::ios::binary);
    out << plan_report_json(config, bundle);
  }
  return 0;
}

int cmd_certify(const CommonFlags& flags) {
  const ExperimentConfig config = load_with_overrides(flags);
  const uint64_t seed = Rng::derive(config.seed, 0);
  const CertificationRun run = run_certification(config, seed, config.out_dir);
  std::cout << (run.verdict.accept ? "ACCEPT" : "REJECT") << " estimate=" << run.verdict.estimate
            << " threshold=" << run.verdict.threshold << " records=" << run.records << "\n";
  return run.verdict.accept ? 0 : 1;
}

int cmd_verify(const CommonFlags& flags) {
  const ExperimentConfig config = load_with_overrides(flags);
  if (!config.budget_sweep.empty()) {
    const std::vector<SweepPoint> points = verify_budget_sweep(config, config.budget_sweep);
    const std::string csv = sweep_csv(points);
    std::cout << csv;
    if (!config.out_dir.empty()) {
      std::filesystem::create_directories(config.out_dir);
      std::ofstream out(config.out_dir + "/rates.csv", std::ios::binary);
      out << csv;
    }
    return 0;
  }
  const VerifyReport report = verify_rates(config, config.out_dir);
  std::cout << "accept rate " << report.interval.rate << " [" << report.interval.lo << ", "
            << report.interval.hi << "] over " << report.trials << " trials, planned rate >= "
            << report.target_rate << "\n";
  return 0;
}

int cmd_nullifier_check(const CommonFlags& flags, int cutoff_override) {
  const ExperimentConfig config = load_with_overrides(flags);
  const int cutoff = cutoff_override > 0 ? cutoff_override : config.cutoff;
  const NullifierReport report = nullifier_report(config.network, cutoff, config.postselect);
  std::cout << report.to_json() << "\n";
  return 0;
}

int cmd_oracle(const CommonFlags& flags) {
  const ExperimentConfig config = load_with_overrides(flags);
  const OracleReport report = oracle_report(config);
  std::cout << report.to_json() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"homodyne fidelity certification toolkit"};
  app.require_subcommand(1);

  CommonFlags plan_flags, certify_flags, verify_flags, nullifier_flags, oracle_flags;
  int cutoff_override = 0;

  CLI::App* plan = app.add_subcommand("plan", "print the sample budget and settings");
  add_common(plan, plan_flags);
  CLI::App* certify = app.add_subcommand("certify", "run one full certification instance");
  add_common(certify, certify_flags);
  CLI::App* verify = app.add_subcommand("verify", "estimate accept rates over repeated trials");
  add_common(verify, verify_flags);
  CLI::App* nullifier =
      app.add_subcommand("nullifier-check", "operator checks for the network's nullifiers");
  add_common(nullifier, nullifier_flags);
  nullifier->add_option("--cutoff", cutoff_override, "truncation override");
  CLI::App* oracle = app.add_subcommand("oracle", "exact fidelity of the scenario's state");
  add_common(oracle, oracle_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (plan->parsed()) return cmd_plan(plan_flags);
    if (certify->parsed()) return cmd_certify(certify_flags);
    if (verify->parsed()) return cmd_verify(verify_flags);
    if (nullifier->parsed()) return cmd_nullifier_check(nullifier_flags, cutoff_override);
    if (oracle->parsed()) return cmd_oracle(oracle_flags);
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 2;
}
