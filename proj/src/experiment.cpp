#include "cvcert/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cvcert/fock.hpp"
#include "cvcert/gaussian.hpp"
#include "cvcert/rng.hpp"

namespace cvcert {

using json = nlohmann::json;

namespace {

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
  const std::filesystem::path p(path);
  if (p.is_absolute() || base_dir.empty()) return path;
  return (std::filesystem::path(base_dir) / p).string();
}

// Entries given inline are parsed directly; strings name files.
std::string node_text(const json& node, const std::string& base_dir) {
  if (node.is_string()) return read_file(resolve(base_dir, node.get<std::string>()));
  return node.dump();
}

CVec complex_vector_from_json(const json& entry) {
  const auto re = entry.at("re").get<std::vector<double>>();
  const auto im = entry.at("im").get<std::vector<double>>();
  if (re.size() != im.size()) throw std::invalid_argument("complex vector parts disagree");
  CVec v(static_cast<Eigen::Index>(re.size()));
  for (size_t i = 0; i < re.size(); ++i) v(static_cast<Eigen::Index>(i)) = {re[i], im[i]};
  return v;
}

json complex_vector_json(const CVec& v) {
  json entry;
  std::vector<double> re(static_cast<size_t>(v.size())), im(static_cast<size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    re[static_cast<size_t>(i)] = v(i).real();
    im[static_cast<size_t>(i)] = v(i).imag();
  }
  entry["re"] = re;
  entry["im"] = im;
  return entry;
}

std::string budget_mode_name(BudgetMode mode) {
  return mode == BudgetMode::literal ? "literal" : "reduced";
}

// Accepts "literal", "reduced", or "reduced:N".
void parse_budget_mode(const std::string& text, BudgetMode& mode, long long& count) {
  if (text == "literal") {
    mode = BudgetMode::literal;
    return;
  }
  if (text == "reduced") {
    mode = BudgetMode::reduced;
    return;
  }
  if (text.rfind("reduced:", 0) == 0) {
    mode = BudgetMode::reduced;
    count = std::stoll(text.substr(8));
    return;
  }
  throw std::invalid_argument("budget mode must be literal, reduced, or reduced:N");
}

FockState target_fock(const NetworkSpec& network, int cutoff) {
  return network.total_photons() > 0 ? prepare_lo_target(network, cutoff)
                                     : prepare_gaussian_target_fock(network, cutoff);
}

FockState heralded_target(const ExperimentConfig& config) {
  return post_select(target_fock(config.network, config.cutoff), config.postselect->sel).first;
}

ProverScenario honest_scenario(const NetworkSpec& network, int cutoff,
                               const std::optional<PostselectedTarget>& ps) {
  ProverScenario scenario;
  scenario.network = network;
  scenario.cutoff = cutoff;
  if (network.total_photons() > 0 || ps) {
    scenario.backend = ProverBackend::fock;
    if (ps) scenario.herald = ps->sel;
  } else {
    scenario.backend = ProverBackend::gaussian;
  }
  return scenario;
}

void write_run_artifacts(const ExperimentConfig& config, const PlanBundle& bundle,
                         const CertificationRun& run, const std::vector<OutcomeRow>& rows,
                         const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_file(out_dir + "/plan.json", plan_report_json(config, bundle));

  json vj;
  vj["schema"] = "cvcert_verdict_v1";
  vj["seed"] = run.seed;
  vj["bound"] = run.bound_kind;
  vj["records"] = run.records;
  vj["verdict"] = json::parse(run.verdict.to_json());
  write_file(out_dir + "/verdict.json", vj.dump(2) + "\n");

  std::ostringstream moments;
  moments << "mean,count,variance,derived,key\n";
  char line[160];
  for (const auto& [key, est] : run.store.entries()) {
    std::snprintf(line, sizeof(line), "%.17g,%lld,%.17g,%d,", est.mean, est.count, est.variance,
                  est.derived ? 1 : 0);
    moments << line << key.str() << "\n";
  }
  write_file(out_dir + "/moments.csv", moments.str());

  std::ofstream records(out_dir + "/records.csv", std::ios::binary);
  if (!records) throw std::runtime_error("cannot write " + out_dir + "/records.csv");
  write_outcome_csv(records, rows);
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  return stage("config", [&] {
    const std::string text = read_file(path);
    return ExperimentConfig::from_json(text,
                                       std::filesystem::path(path).parent_path().string());
  });
}

void apply_budget_mode(ExperimentConfig& config, const std::string& text) {
  parse_budget_mode(text, config.budget_mode, config.reduced_count);
  if (config.budget_mode == BudgetMode::reduced && config.reduced_count < 1) {
    throw std::invalid_argument("reduced budget mode needs a per-moment count");
  }
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text,
                                             const std::string& base_dir) {
  return stage("config", [&]() -> ExperimentConfig {
    const json doc = json::parse(text);
    if (doc.value("schema", "cvcert_experiment_v1") != "cvcert_experiment_v1") {
      throw std::invalid_argument("unknown experiment schema");
    }
    ExperimentConfig config;
    config.network = NetworkSpec::from_json(node_text(doc.at("network"), base_dir));
    config.test = TestConfig::from_json(doc.at("test").dump());
    config.cutoff = doc.value("cutoff", 12);
    config.lambda = doc.value("lambda", 1.0);
    config.sample_cap = doc.value("sample_cap", kDefaultSampleCap);
    config.trials = doc.value("trials", 1);
    config.seed = doc.value("seed", static_cast<uint64_t>(0));
    config.out_dir = doc.value("out", std::string());
    if (config.trials < 1) throw std::invalid_argument("trials must be at least 1");
    if (config.cutoff < 1) throw std::invalid_argument("cutoff must be positive");

    if (doc.contains("budget_mode")) {
      parse_budget_mode(doc.at("budget_mode").get<std::string>(), config.budget_mode,
                        config.reduced_count);
    }
    if (doc.contains("reduced_count")) {
      config.reduced_count = doc.at("reduced_count").get<long long>();
    }
    if (config.budget_mode == BudgetMode::reduced && config.reduced_count < 1) {
      throw std::invalid_argument("reduced budget mode needs a per-moment count");
    }
    if (doc.contains("budget_sweep")) {
      config.budget_sweep = doc.at("budget_sweep").get<std::vector<long long>>();
    }

    if (doc.contains("postselect")) {
      const json& pj = doc.at("postselect");
      PostselectedTarget target;
      target.sel.ancilla_modes = pj.at("ancilla_modes").get<std::vector<int>>();
      for (const json& phi : pj.at("phi")) target.sel.phi.push_back(complex_vector_from_json(phi));
      target.probability = pj.value("probability", 0.0);
      config.postselect = target;
      if (!(config.postselect->probability > 0.0)) {
        config.postselect->probability =
            post_select(target_fock(config.network, config.cutoff), config.postselect->sel)
                .second;
      }
    }

    if (doc.contains("scenario")) {
      config.scenario = ProverScenario::from_json(node_text(doc.at("scenario"), base_dir));
    } else {
      config.scenario = honest_scenario(config.network, config.cutoff, config.postselect);
    }
    validate_scenario(config.scenario);
    return config;
  });
}

std::string ExperimentConfig::to_json() const {
  json doc;
  doc["schema"] = "cvcert_experiment_v1";
  doc["network"] = json::parse(network.to_json());
  doc["test"] = json::parse(test.to_json());
  doc["scenario"] = json::parse(scenario.to_json());
  if (postselect) {
    json pj;
    pj["ancilla_modes"] = postselect->sel.ancilla_modes;
    json phis = json::array();
    for (const CVec& phi : postselect->sel.phi) phis.push_back(complex_vector_json(phi));
    pj["phi"] = phis;
    pj["probability"] = postselect->probability;
    doc["postselect"] = pj;
  }
  doc["budget_mode"] = budget_mode_name(budget_mode);
  if (reduced_count > 0) doc["reduced_count"] = reduced_count;
  if (!budget_sweep.empty()) doc["budget_sweep"] = budget_sweep;
  doc["trials"] = trials;
  doc["seed"] = seed;
  if (!out_dir.empty()) doc["out"] = out_dir;
  doc["cutoff"] = cutoff;
  doc["lambda"] = lambda;
  doc["sample_cap"] = sample_cap;
  return doc.dump();
}

PlanBundle make_plan(const ExperimentConfig& config) {
  return stage("plan", [&]() -> PlanBundle {
    PlanBundle bundle;
    const bool literal = config.budget_mode == BudgetMode::literal;
    const int photons = config.network.total_photons();
    if (config.postselect) {
      bundle.bound_kind = "FS";
      bundle.settings = settings_postselected(config.network, *config.postselect);
      bundle.keys = relevant_moments_postselected(config.network, *config.postselect);
      bundle.bounds = variance_bounds_fock(heralded_target(config), bundle.settings);
      bundle.sample_plan =
          literal ? plan_postselected(config.test, config.network, *config.postselect,
                                      bundle.bounds, config.lambda)
                  : plan_reduced_postselected(config.test, config.network, *config.postselect,
                                              bundle.bounds, config.reduced_count);
    } else if (photons > 0) {
      bundle.bound_kind = "Fn";
      bundle.settings = settings_lo(config.network);
      bundle.keys = relevant_moments_lo(config.network);
      bundle.bounds =
          variance_bounds_fock(prepare_lo_target(config.network, config.cutoff), bundle.settings);
      bundle.sample_plan =
          literal ? plan_lo(config.test, config.network, bundle.bounds, config.lambda)
                  : plan_reduced(config.test, config.network, bundle.bounds, config.reduced_count);
    } else {
      bundle.bound_kind = "F0";
      bundle.settings = settings_gaussian(config.network.m);
      bundle.keys = relevant_moments_gaussian(config.network);
      bundle.bounds = variance_bounds_gaussian(prepare_gaussian_target(config.network));
      bundle.sample_plan =
          literal ? plan_gaussian(config.test, config.network, bundle.bounds, config.lambda)
                  : plan_reduced(config.test, config.network, bundle.bounds, config.reduced_count);
    }
    return bundle;
  });
}

std::string plan_report_json(const ExperimentConfig& config, const PlanBundle& bundle) {
  json doc;
  doc["schema"] = "cvcert_plan_v1";
  doc["bound"] = bundle.bound_kind;
  doc["budget_mode"] = budget_mode_name(config.budget_mode);
  doc["test"] = json::parse(config.test.to_json());
  doc["plan"] = json::parse(bundle.sample_plan.to_json());
  json settings = json::array();
  for (const HomodyneSetting& setting : bundle.settings.settings) settings.push_back(setting.angles);
  doc["settings"] = settings;
  json keys = json::array();
  for (const MomentKey& key : bundle.keys) keys.push_back(key.str());
  doc["moments"] = keys;
  json sigma;
  sigma["sigma1"] = bundle.bounds.sigma1;
  sigma["sigma2"] = bundle.bounds.sigma2;
  sigma["sigma_le"] = bundle.bounds.sigma_le;
  doc["sigma"] = sigma;
  return doc.dump(2) + "\n";
}

CertificationRun run_certification(const ExperimentConfig& config, uint64_t seed,
                                   const std::string& out_dir) {
  const PlanBundle bundle = make_plan(config);
  const std::vector<MeasurementBatch> batches = stage(
      "budget", [&] { return measurement_batches(bundle.settings, bundle.keys, bundle.sample_plan); });
  const std::vector<OutcomeRow> rows = stage("respond", [&] {
    return respond(config.scenario, bundle.settings, batches, seed, config.sample_cap);
  });
  const MomentEstimateStore store =
      stage("accumulate", [&] { return accumulate(rows, bundle.settings, batches); });
  const double estimate = stage("recombine", [&] {
    if (bundle.bound_kind == "FS") return recombine_FS(store, config.network, *config.postselect);
    if (bundle.bound_kind == "Fn") return recombine_Fn(store, config.network);
    return recombine_F0(store, config.network);
  });
  const Verdict verdict = stage("decide", [&] {
    TestConfig test = config.test;
    test.epsilon = bundle.sample_plan.epsilon;
    return decide(estimate, test);
  });

  CertificationRun run;
  run.plan = bundle.sample_plan;
  run.verdict = verdict;
  run.store = store;
  run.bound_kind = bundle.bound_kind;
  run.records = static_cast<long long>(rows.size());
  run.seed = seed;
  if (!out_dir.empty()) {
    stage("write", [&] {
      write_run_artifacts(config, bundle, run, rows, out_dir);
      return 0;
    });
  }
  return run;
}

WilsonInterval wilson_interval(int successes, int trials, double z) {
  if (trials < 1 || successes < 0 || successes > trials) {
    throw std::invalid_argument("wilson interval needs 0 <= successes <= trials");
  }
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  WilsonInterval interval;
  interval.rate = p;
  interval.lo = std::max(0.0, center - half);
  interval.hi = std::min(1.0, center + half);
  return interval;
}

VerifyReport verify_rates(const ExperimentConfig& config, const std::string& out_dir) {
  if (config.trials < 30) throw StageError("verify", "at least 30 trials required");
  make_plan(config);

  VerifyReport report;
  report.trials = config.trials;
  report.target_rate = 1.0 - config.test.alpha;
  report.runs.resize(static_cast<size_t>(config.trials));

  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < config.trials; ++t) {
    try {
      const uint64_t trial_seed = Rng::derive(config.seed, static_cast<uint64_t>(t));
      const CertificationRun run = run_certification(config, trial_seed);
      report.runs[static_cast<size_t>(t)] = {t, trial_seed, run.verdict.estimate,
                                             run.verdict.accept};
    } catch (...) {
#pragma omp critical
      {
        if (!failure) failure = std::current_exception();
      }
    }
  }
  if (failure) std::rethrow_exception(failure);

  for (const TrialSummary& run : report.runs) report.accepts += run.accept ? 1 : 0;
  report.interval = wilson_interval(report.accepts, report.trials);

  if (!out_dir.empty()) {
    stage("write", [&] {
      std::filesystem::create_directories(out_dir);
      std::ostringstream trials_csv;
      trials_csv << "trial,seed,estimate,accept\n";
      char line[96];
      for (const TrialSummary& run : report.runs) {
        std::snprintf(line, sizeof(line), "%d,%llu,%.17g,%d\n", run.trial,
                      static_cast<unsigned long long>(run.seed), run.estimate,
                      run.accept ? 1 : 0);
        trials_csv << line;
      }
      write_file(out_dir + "/trials.csv", trials_csv.str());
      write_file(out_dir + "/rates.json", report.to_json() + "\n");
      return 0;
    });
  }
  return report;
}

std::string VerifyReport::to_json() const {
  json doc;
  doc["schema"] = "cvcert_rates_v1";
  doc["trials"] = trials;
  doc["accepts"] = accepts;
  doc["rate"] = interval.rate;
  doc["wilson_lo"] = interval.lo;
  doc["wilson_hi"] = interval.hi;
  doc["target_rate"] = target_rate;
  return doc.dump();
}

std::vector<SweepPoint> verify_budget_sweep(const ExperimentConfig& config,
                                            const std::vector<long long>& budgets) {
  if (budgets.empty()) throw std::invalid_argument("budget sweep needs at least one count");
  std::vector<SweepPoint> points;
  for (long long budget : budgets) {
    ExperimentConfig point = config;
    point.budget_mode = BudgetMode::reduced;
    point.reduced_count = budget;
    point.budget_sweep.clear();
    point.out_dir.clear();
    points.push_back({budget, verify_rates(point)});
  }
  return points;
}

std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::ostringstream out;
  out << "budget,trials,accepts,rate,wilson_lo,wilson_hi\n";
  char line[128];
  for (const SweepPoint& point : points) {
    std::snprintf(line, sizeof(line), "%lld,%d,%d,%.17g,%.17g,%.17g\n", point.budget,
                  point.report.trials, point.report.accepts, point.report.interval.rate,
                  point.report.interval.lo, point.report.interval.hi);
    out << line;
  }
  return out.str();
}

NullifierReport nullifier_report(const NetworkSpec& network, int cutoff,
                                 const std::optional<PostselectedTarget>& ps) {
  const int m = network.m;
  int factors = 1;
  for (int nk : network.nvec) factors += nk;
  const int reach = 2 * factors;
  const int n_tot = network.total_photons();
  if (n_tot + reach > cutoff) {
    throw std::invalid_argument("cutoff too small for an exact annihilation check");
  }
  const int safe_total = cutoff - 2 * reach;
  if (safe_total < 0) throw std::invalid_argument("cutoff leaves no commutator-safe subspace");

  const FockState target = target_fock(network, cutoff);
  const CVec& amp = target.comps[0].amp;

  NullifierReport report;
  report.safe_total = safe_total;
  std::vector<CMat> ops;
  ops.reserve(static_cast<size_t>(m));
  for (int j = 1; j <= m; ++j) {
    ops.push_back(nullifier_operator(network, j, cutoff));
    report.annihilation_norms.push_back((ops.back() * amp).norm());
  }

  std::vector<Eigen::Index> safe;
  const Eigen::Index dim = target.dim();
  for (Eigen::Index idx = 0; idx < dim; ++idx) {
    Eigen::Index rest = idx;
    int total = 0;
    for (int j = 0; j < m; ++j) {
      total += static_cast<int>(rest % (cutoff + 1));
      rest /= cutoff + 1;
    }
    if (total <= safe_total) safe.push_back(idx);
  }
  for (size_t i = 0; i < ops.size(); ++i) {
    for (size_t j = i + 1; j < ops.size(); ++j) {
      const CMat comm = ops[i] * ops[j] - ops[j] * ops[i];
      double sq = 0.0;
      for (Eigen::Index col : safe) sq += comm.col(col).squaredNorm();
      report.max_commutator = std::max(report.max_commutator, std::sqrt(sq));
    }
  }

  if (ps) {
    PostSelection sel = ps->sel;
    for (CVec& phi : sel.phi) {
      if (phi.size() > cutoff + 1) {
        if (phi.tail(phi.size() - cutoff - 1).norm() > 1e-12) {
          throw std::invalid_argument("heralding state exceeds the cutoff");
        }
        phi = phi.head(cutoff + 1).eval();
      } else if (phi.size() < cutoff + 1) {
        CVec padded = CVec::Zero(cutoff + 1);
        padded.head(phi.size()) = phi;
        phi = padded;
      }
    }
    const CMat witness = postselected_witness(network, sel, cutoff);
    const FockState kept = post_select(target, sel).first;
    report.postselected_norm = (witness * kept.comps[0].amp).norm();
  }
  return report;
}

std::string NullifierReport::to_json() const {
  json doc;
  doc["schema"] = "cvcert_nullifiers_v1";
  doc["annihilation_norms"] = annihilation_norms;
  doc["max_commutator"] = max_commutator;
  doc["safe_total"] = safe_total;
  if (postselected_norm) doc["postselected_norm"] = *postselected_norm;
  return doc.dump();
}

OracleReport oracle_report(const ExperimentConfig& config) {
  return stage("oracle", [&]() -> OracleReport {
    OracleReport report;
    if (config.scenario.backend == ProverBackend::gaussian) {
      const GaussianState prep = prepared_gaussian(config.scenario);
      report.bound_kind = "F0";
      report.fidelity = gaussian_fidelity_oracle(config.network, prep);
      report.witness_bound = recombine_F0(
          exact_store_gaussian(prep, relevant_moments_gaussian(config.network)), config.network);
      report.mean_photons =
          prep.cov.trace() + prep.mean.squaredNorm() - 0.5 * static_cast<double>(prep.modes());
      return report;
    }

    const FockState prep = prepared_fock(config.scenario);
    if (config.postselect) {
      report.bound_kind = "FS";
      const FockState target = heralded_target(config);
      report.fidelity = fidelity_oracle_fock(target, prep);
      report.witness_bound = recombine_FS(
          exact_store_fock(prep, relevant_moments_postselected(config.network, *config.postselect)),
          config.network, *config.postselect);
    } else {
      report.bound_kind = "Fn";
      const FockState target = target_fock(config.network, prep.cutoff);
      report.fidelity = fidelity_oracle_fock(target, prep);
      report.witness_bound = fidelity_bound_oracle_fock(config.network, prep);
    }
    double photons = -0.5 * static_cast<double>(prep.m);
    for (int j = 1; j <= prep.m; ++j) {
      photons += moment_tensor_exact(prep, MomentKey::product({{2 * j - 1, 2 * j - 1}}));
      photons += moment_tensor_exact(prep, MomentKey::product({{2 * j, 2 * j}}));
    }
    report.mean_photons = photons;
    return report;
  });
}

std::string OracleReport::to_json() const {
  json doc;
  doc["schema"] = "cvcert_oracle_v1";
  doc["fidelity"] = fidelity;
  doc["witness_bound"] = witness_bound;
  doc["mean_photons"] = mean_photons;
  doc["bound"] = bound_kind;
  return doc.dump();
}

}  // namespace cvcert
