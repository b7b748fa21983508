#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvcert/certifier.hpp"
#include "cvcert/estimation.hpp"
#include "cvcert/prover.hpp"
#include "cvcert/symplectic.hpp"

namespace cvcert {

enum class BudgetMode { literal, reduced };

// One reproducible experiment: the claimed network, the acceptance test, the
// prover scenario, and how sample budgets are chosen. Every downstream
// artifact is a pure function of this struct plus the seed.
struct ExperimentConfig {
  NetworkSpec network;
  TestConfig test;
  ProverScenario scenario;
  std::optional<PostselectedTarget> postselect;

  BudgetMode budget_mode = BudgetMode::literal;
  long long reduced_count = 0;

  int trials = 1;
  uint64_t seed = 0;
  std::string out_dir;

  int cutoff = 12;
  double lambda = 1.0;
  long long sample_cap = kDefaultSampleCap;
  std::vector<long long> budget_sweep;

  std::string to_json() const;

  // base_dir resolves network/scenario entries given as file paths.
  static ExperimentConfig from_json(const std::string& text, const std::string& base_dir = "");
};

ExperimentConfig load_experiment_config(const std::string& path);

// Applies "literal", "reduced", or "reduced:N" to the budget fields.
void apply_budget_mode(ExperimentConfig& config, const std::string& text);

// Pipeline failures tagged with the stage that raised them, so a budget
// violation reads differently from a malformed record stream.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + message), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Planner output for one experiment: copy counts, the homodyne settings that
// realize them, the moment keys to estimate, and which bound recombines them
// ("F0", "Fn", or "FS").
struct PlanBundle {
  SamplePlan sample_plan;
  SettingPlan settings;
  std::vector<MomentKey> keys;
  VarianceBounds bounds;
  std::string bound_kind;
};

PlanBundle make_plan(const ExperimentConfig& config);

std::string plan_report_json(const ExperimentConfig& config, const PlanBundle& bundle);

// One full protocol instance: plan, prover records, accumulation,
// recombination, decision. When out_dir is nonempty, writes plan.json,
// verdict.json, moments.csv, and records.csv there; identical config and
// seed reproduce the files byte for byte.
struct CertificationRun {
  SamplePlan plan;
  Verdict verdict;
  MomentEstimateStore store;
  std::string bound_kind;
  long long records = 0;
  uint64_t seed = 0;
};

CertificationRun run_certification(const ExperimentConfig& config, uint64_t seed,
                                   const std::string& out_dir = "");

// Wilson score interval for a binomial rate at normal quantile z.
struct WilsonInterval {
  double rate = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};
WilsonInterval wilson_interval(int successes, int trials, double z = 1.959963984540054);

// Monte Carlo check of the acceptance guarantee: repeats the certification
// with per-trial derived seeds (stable under trial-count changes) and
// reports the accept rate against the planned 1 - alpha. Requires >= 30
// trials. When out_dir is set, writes trials.csv and rates.json.
struct TrialSummary {
  int trial = 0;
  uint64_t seed = 0;
  double estimate = 0.0;
  bool accept = false;
};

struct VerifyReport {
  int trials = 0;
  int accepts = 0;
  WilsonInterval interval;
  double target_rate = 0.0;
  std::vector<TrialSummary> runs;

  std::string to_json() const;
};

VerifyReport verify_rates(const ExperimentConfig& config, const std::string& out_dir = "");

// Rate-versus-budget curve data: verify_rates at each reduced per-moment
// count, same trial seeds throughout.
struct SweepPoint {
  long long budget = 0;
  VerifyReport report;
};
std::vector<SweepPoint> verify_budget_sweep(const ExperimentConfig& config,
                                            const std::vector<long long>& budgets);
std::string sweep_csv(const std::vector<SweepPoint>& points);

// Desk-scale operator checks for a network's nullifiers: how well each one
// annihilates the target, the largest pairwise commutator norm on the
// subspace that truncation cannot reach, and the post-selected witness norm
// on the heralded target when requested. Throws when the cutoff leaves no
// safe subspace.
struct NullifierReport {
  std::vector<double> annihilation_norms;
  double max_commutator = 0.0;
  int safe_total = 0;
  std::optional<double> postselected_norm;

  std::string to_json() const;
};

NullifierReport nullifier_report(const NetworkSpec& network, int cutoff,
                                 const std::optional<PostselectedTarget>& ps = std::nullopt);

// Exact diagnostics for the scenario's prepared state: overlap with the
// target, the fidelity bound recombined from exact moments, and the
// lab-frame mean photon number.
struct OracleReport {
  double fidelity = 0.0;
  double witness_bound = 0.0;
  double mean_photons = 0.0;
  std::string bound_kind;

  std::string to_json() const;
};

OracleReport oracle_report(const ExperimentConfig& config);

}  // namespace cvcert
