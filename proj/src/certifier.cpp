#include "cvcert/certifier.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>

#include "cvcert/weyl.hpp"

namespace cvcert {

using nlohmann::json;

namespace {

constexpr long long kPilotFirstSamples = 200;
constexpr double kVarianceFloor = 1e-6;

// Ceiling with a hair of slack so float noise on an exactly integral bound
// cannot inflate the count by one.
long long ceil_count(double value) {
  if (!std::isfinite(value)) throw std::overflow_error("copy count bound is not finite");
  const double up = std::ceil(value - (1e-9 + value * 1e-15));
  if (up >= 9.0e18) throw std::overflow_error("copy count bound overflows");
  return std::max(1LL, static_cast<long long>(up));
}

long long binomial_ll(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  long long out = 1;
  for (int i = 1; i <= k; ++i) out = out * (n - k + i) / i;
  return out;
}

struct NetworkGeometry {
  int m = 0;
  int d = 0;
  int kappa = 0;
  double s_max = 1.0;
  double xnorm = 0.0;
};

NetworkGeometry geometry(const NetworkSpec& network) {
  NetworkGeometry g;
  g.m = network.m;
  g.d = network.mode_range();
  g.kappa = network.kappa();
  g.s_max = network.transform.s.size() > 0 ? network.transform.s.maxCoeff() : 1.0;
  g.xnorm = network.transform.x.size() > 0 ? network.transform.x.norm() : 0.0;
  return g;
}

double failure_log(double alpha) { return std::log(1.0 / (1.0 - alpha)); }

// Amplification factor carrying per-moment errors into the fidelity bound
// for a photon-carrying network: (n + 5m/2)(1/2 + 2d sqrt(2nm))^n.
double lo_amplification(int m, int n, int d) {
  return (n + 2.5 * m) * std::pow(0.5 + 2.0 * d * std::sqrt(2.0 * n * m), n);
}

double gaussian_envelope(const NetworkGeometry& g, const VarianceBounds& bounds, double epsilon,
                         double alpha, double lambda) {
  const double s4 = std::pow(g.s_max, 4);
  const double m3 = std::pow(static_cast<double>(g.m), 3);
  return lambda * s4 *
         (2.0 * bounds.sigma1 * bounds.sigma1 * g.xnorm * g.xnorm * m3 +
          bounds.sigma2 * bounds.sigma2 * std::pow(static_cast<double>(g.kappa), 3) * m3 * g.m) /
         (epsilon * epsilon * failure_log(alpha));
}

double lo_envelope(const NetworkGeometry& g, int n, const VarianceBounds& bounds, double epsilon,
                   double alpha, double lambda) {
  const double m4 = std::pow(static_cast<double>(g.m), 4);
  const double base = lambda * std::pow(static_cast<double>(g.d), 6) * n * g.m;
  return bounds.sigma_le * bounds.sigma_le * m4 * std::pow(base, n) /
         (epsilon * epsilon * failure_log(alpha));
}

void require_passive_squeezing(const NetworkSpec& network) {
  const auto& s = network.transform.s;
  if (s.size() > 0 && (s.array() - 1.0).abs().maxCoeff() > 1e-9)
    throw std::invalid_argument("plan_lo: photon-carrying network must be squeezer-free");
}

VarianceBounds postselected_substitution(const VarianceBounds& bounds) {
  VarianceBounds sub = bounds;
  sub.sigma1 = bounds.varsigma1.value_or(bounds.sigma1);
  sub.sigma2 = bounds.varsigma2.value_or(bounds.sigma2);
  sub.sigma_le = bounds.varsigma_le.value_or(bounds.sigma_le);
  return sub;
}

void fill_gaussian_identity(SamplePlan& plan, const NetworkGeometry& g) {
  plan.gaussian = true;
  plan.m = g.m;
  plan.n = 0;
  plan.d = g.d;
  plan.kappa = g.kappa;
  plan.s_max = g.s_max;
  plan.settings_count = g.m + 3;
  plan.settings_bound = g.m + 3;
}

void fill_lo_identity(SamplePlan& plan, const NetworkSpec& network, const NetworkGeometry& g,
                      int n) {
  plan.gaussian = false;
  plan.m = g.m;
  plan.n = n;
  plan.d = g.d;
  plan.kappa = g.kappa;
  plan.s_max = g.s_max;
  plan.N_le = lo_relevant_bound(g.m, n, g.d);
  plan.settings_count = static_cast<int>(settings_lo(network).settings.size());
  plan.settings_bound = n <= g.m ? binomial_ll(g.m, n) * (1LL << (n + 1)) : 0;
}

FockState pad_fock(const FockState& state, int cutoff) {
  if (cutoff <= state.cutoff) return state;
  const int ob = state.cutoff + 1;
  const int nb = cutoff + 1;
  Eigen::Index ndim = 1;
  for (int j = 0; j < state.m; ++j) ndim *= nb;
  FockState out;
  out.m = state.m;
  out.cutoff = cutoff;
  for (const auto& comp : state.comps) {
    CVec amp = CVec::Zero(ndim);
    for (Eigen::Index idx = 0; idx < comp.amp.size(); ++idx) {
      if (comp.amp[idx] == std::complex<double>(0.0)) continue;
      Eigen::Index rem = idx;
      Eigen::Index nidx = 0;
      Eigen::Index stride = 1;
      for (int j = 0; j < state.m; ++j) {
        nidx += (rem % ob) * stride;
        rem /= ob;
        stride *= nb;
      }
      amp[nidx] = comp.amp[idx];
    }
    out.comps.push_back({comp.weight, amp});
  }
  return out;
}

CMat op_power(const CMat& op, int k) {
  CMat out = CMat::Identity(op.rows(), op.cols());
  for (int i = 0; i < k; ++i) out = out * op;
  return out;
}

}  // namespace

std::string TestConfig::to_json() const {
  json doc;
  doc["F_T"] = F_T;
  doc["alpha"] = alpha;
  doc["epsilon"] = epsilon;
  return doc.dump();
}

TestConfig TestConfig::from_json(const std::string& text) {
  const json doc = json::parse(text);
  TestConfig config;
  config.F_T = doc.at("F_T").get<double>();
  config.alpha = doc.at("alpha").get<double>();
  config.epsilon = doc.at("epsilon").get<double>();
  return config;
}

void validate_test_config(const TestConfig& config) {
  if (!(config.F_T < 1.0))
    throw std::invalid_argument("test config: threshold fidelity must be below 1");
  if (!(config.alpha > 0.0) || config.alpha > 0.5)
    throw std::invalid_argument("test config: alpha must lie in (0, 1/2]");
  if (!(config.epsilon > 0.0) || config.epsilon > 0.5 * (1.0 - config.F_T) + 1e-12)
    throw std::invalid_argument("test config: epsilon must lie in (0, (1 - F_T)/2]");
}

VarianceBounds variance_bounds_gaussian(const GaussianState& state) {
  const Eigen::Index dim = state.mean.size();
  if (dim == 0 || state.cov.rows() != dim || state.cov.cols() != dim)
    throw std::invalid_argument("variance_bounds_gaussian: inconsistent state dimensions");
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (state.cov + state.cov.transpose()));
  const double v = eig.eigenvalues().maxCoeff();
  double mu2 = 0.0;
  for (int j = 0; j < state.modes(); ++j) {
    const double a = state.mean[2 * j];
    const double b = state.mean[2 * j + 1];
    mu2 = std::max(mu2, a * a + b * b);
  }
  VarianceBounds bounds;
  bounds.sigma1 = std::sqrt(v);
  bounds.sigma2 = std::sqrt(2.0 * v * v + 4.0 * mu2 * v);
  bounds.sigma_le = std::max(bounds.sigma1, bounds.sigma2);
  return bounds;
}

VarianceBounds variance_bounds_fock(const FockState& state, const SettingPlan& plan) {
  if (plan.m != state.m)
    throw std::invalid_argument("variance_bounds_fock: plan and state mode counts differ");
  if (plan.recipes.empty()) throw std::invalid_argument("variance_bounds_fock: plan has no recipes");
  int degree_max = 0;
  for (const auto& recipe : plan.recipes) {
    int degree = 0;
    for (int p : recipe.powers) degree += p;
    degree_max = std::max(degree_max, degree);
  }
  const int cpad = state.cutoff + 2 * degree_max + 2;
  const FockState padded = pad_fock(state, cpad);
  double v1 = -1.0;
  double v2 = -1.0;
  double vle = -1.0;
  for (const auto& recipe : plan.recipes) {
    for (const auto& term : recipe.terms) {
      const auto& angles = plan.settings.at(term.setting).angles;
      double mean = 0.0;
      double second = 0.0;
      double wtot = 0.0;
      for (const auto& comp : padded.comps) {
        CVec v = comp.amp;
        for (int j = 0; j < padded.m; ++j) {
          if (recipe.powers[j] == 0) continue;
          const CMat op = op_power(rotated_quadrature_op(cpad, angles[j]), recipe.powers[j]);
          v = apply_mode_op(v, padded.m, cpad, j + 1, op);
        }
        mean += comp.weight * comp.amp.dot(v).real();
        second += comp.weight * v.squaredNorm();
        wtot += comp.weight;
      }
      if (wtot <= 0.0) throw std::invalid_argument("variance_bounds_fock: state carries no weight");
      mean /= wtot;
      second /= wtot;
      const double var = std::max(0.0, second - mean * mean);
      vle = std::max(vle, var);
      if (recipe.key.first_moment()) v1 = std::max(v1, var);
      if (recipe.key.order() == 1) v2 = std::max(v2, var);
    }
  }
  VarianceBounds bounds;
  bool floored = false;
  const auto finish = [&](double var) {
    if (var < 0.0) var = vle;
    if (var < kVarianceFloor) {
      var = kVarianceFloor;
      floored = true;
    }
    return std::sqrt(var);
  };
  bounds.sigma_le = finish(vle);
  bounds.sigma1 = finish(v1);
  bounds.sigma2 = finish(v2);
  bounds.degenerate = floored;
  return bounds;
}

VarianceBounds estimate_variance_bounds(const MomentEstimateStore& pilot) {
  if (pilot.size() == 0) throw std::invalid_argument("estimate_variance_bounds: empty pilot store");
  double v1 = -1.0;
  double v2 = -1.0;
  double vle = -1.0;
  for (const auto& [key, est] : pilot.entries()) {
    if (est.count < 100)
      throw std::invalid_argument("estimate_variance_bounds: pilot entry " + key.str() +
                                  " has fewer than 100 samples");
    const double per_sample = est.variance * static_cast<double>(est.count);
    vle = std::max(vle, per_sample);
    if (key.first_moment()) v1 = std::max(v1, per_sample);
    if (key.order() == 1) v2 = std::max(v2, per_sample);
  }
  VarianceBounds bounds;
  bool floored = false;
  const auto finish = [&](double var) {
    if (var < 0.0) var = vle;
    double scaled = 2.0 * var;
    if (scaled < kVarianceFloor) {
      scaled = kVarianceFloor;
      floored = true;
    }
    return std::sqrt(scaled);
  };
  bounds.sigma_le = finish(vle);
  bounds.sigma1 = finish(v1);
  bounds.sigma2 = finish(v2);
  bounds.degenerate = floored;
  return bounds;
}

long long chebyshev_count(double sigma, double epsilon, long long N, double alpha_bar) {
  if (!(sigma > 0.0)) throw std::invalid_argument("chebyshev_count: sigma must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("chebyshev_count: epsilon must be positive");
  if (N < 1) throw std::invalid_argument("chebyshev_count: need at least one observable");
  if (alpha_bar < 0.5 || !(alpha_bar < 1.0))
    throw std::invalid_argument("chebyshev_count: alpha_bar must lie in [1/2, 1)");
  const double bound = sigma * sigma * static_cast<double>(N + 1) /
                       (epsilon * epsilon * std::log(1.0 / alpha_bar));
  return ceil_count(bound);
}

double chebyshev_epsilon(double sigma, long long count, long long N, double alpha_bar) {
  if (!(sigma > 0.0)) throw std::invalid_argument("chebyshev_epsilon: sigma must be positive");
  if (count < 1) throw std::invalid_argument("chebyshev_epsilon: count must be at least 1");
  if (N < 1) throw std::invalid_argument("chebyshev_epsilon: need at least one observable");
  if (alpha_bar < 0.5 || !(alpha_bar < 1.0))
    throw std::invalid_argument("chebyshev_epsilon: alpha_bar must lie in [1/2, 1)");
  return sigma * std::sqrt(static_cast<double>(N + 1) /
                           (static_cast<double>(count) * std::log(1.0 / alpha_bar)));
}

SamplePlan plan_gaussian(const TestConfig& config, const NetworkSpec& network,
                         const VarianceBounds& bounds, double lambda) {
  validate_test_config(config);
  if (network.total_photons() > 0)
    throw std::invalid_argument("plan_gaussian: network carries input photons");
  if (!(bounds.sigma1 > 0.0) || !(bounds.sigma2 > 0.0))
    throw std::invalid_argument("plan_gaussian: variance bounds must be positive");
  const NetworkGeometry g = geometry(network);
  const double abar = std::sqrt(1.0 - config.alpha);
  const double s2 = g.s_max * g.s_max;
  SamplePlan plan;
  fill_gaussian_identity(plan, g);
  plan.epsilon = config.epsilon;
  plan.epsilon_second = config.epsilon / (4.0 * s2 * std::sqrt(static_cast<double>(g.kappa)) * g.m);
  plan.C2 = chebyshev_count(bounds.sigma2, plan.epsilon_second, 2LL * g.kappa * g.m, abar);
  if (g.xnorm > kSparsityThreshold) {
    plan.epsilon_first = config.epsilon / (4.0 * s2 * g.xnorm * std::sqrt(2.0 * g.m));
    plan.C1 = chebyshev_count(bounds.sigma1, plan.epsilon_first, 2LL * g.m, abar);
  } else {
    plan.epsilon_first = std::numeric_limits<double>::infinity();
    plan.C1 = 0;
    plan.pilot_first = kPilotFirstSamples;
  }
  plan.total_copies = 2LL * g.m * plan.C1 + 2LL * g.kappa * g.m * plan.C2;
  plan.envelope = gaussian_envelope(g, bounds, config.epsilon, config.alpha, lambda);
  return plan;
}

SamplePlan plan_lo(const TestConfig& config, const NetworkSpec& network,
                   const VarianceBounds& bounds, double lambda) {
  const int n = network.total_photons();
  if (n == 0) return plan_gaussian(config, network, bounds, lambda);
  validate_test_config(config);
  require_passive_squeezing(network);
  if (!(bounds.sigma_le > 0.0))
    throw std::invalid_argument("plan_lo: variance bound must be positive");
  const NetworkGeometry g = geometry(network);
  SamplePlan plan;
  fill_lo_identity(plan, network, g, n);
  plan.epsilon = config.epsilon;
  plan.epsilon_le = config.epsilon / lo_amplification(g.m, n, g.d);
  plan.C_le = chebyshev_count(bounds.sigma_le, plan.epsilon_le, plan.N_le, 1.0 - config.alpha);
  plan.total_copies = plan.N_le * plan.C_le;
  plan.envelope = lo_envelope(g, n, bounds, config.epsilon, config.alpha, lambda);
  return plan;
}

SamplePlan plan_postselected(const TestConfig& config, const NetworkSpec& network,
                             const PostselectedTarget& target, const VarianceBounds& bounds,
                             double lambda) {
  validate_test_config(config);
  const double p = target.probability;
  if (!(p > 0.0) || p > 1.0)
    throw std::invalid_argument("plan_postselected: probability must lie in (0, 1]");
  TestConfig scaled = config;
  scaled.epsilon = p * config.epsilon;
  const VarianceBounds sub = postselected_substitution(bounds);
  SamplePlan plan = network.total_photons() > 0 ? plan_lo(scaled, network, sub, lambda)
                                                : plan_gaussian(scaled, network, sub, lambda);
  plan.postselection_probability = p;
  plan.epsilon = config.epsilon;
  plan.settings_count = static_cast<int>(settings_postselected(network, target).settings.size());
  return plan;
}

namespace {

SamplePlan reduced_plan_impl(const TestConfig& config, const NetworkSpec& network,
                             const PostselectedTarget* target, const VarianceBounds& bounds,
                             long long per_moment_count) {
  if (per_moment_count < 1)
    throw std::invalid_argument("plan_reduced: per-moment count must be at least 1");
  if (!(config.alpha > 0.0) || config.alpha > 0.5)
    throw std::invalid_argument("plan_reduced: alpha must lie in (0, 1/2]");
  if (!(config.F_T < 1.0))
    throw std::invalid_argument("plan_reduced: threshold fidelity must be below 1");
  const double p = target ? target->probability : 1.0;
  if (!(p > 0.0) || p > 1.0)
    throw std::invalid_argument("plan_reduced: probability must lie in (0, 1]");
  const VarianceBounds sub = target ? postselected_substitution(bounds) : bounds;
  const NetworkGeometry g = geometry(network);
  const int n = network.total_photons();
  SamplePlan plan;
  if (n == 0) {
    if (!(sub.sigma1 > 0.0) || !(sub.sigma2 > 0.0))
      throw std::invalid_argument("plan_reduced: variance bounds must be positive");
    fill_gaussian_identity(plan, g);
    const double abar = std::sqrt(1.0 - config.alpha);
    const double s2 = g.s_max * g.s_max;
    plan.C1 = per_moment_count;
    plan.C2 = per_moment_count;
    plan.epsilon_second =
        chebyshev_epsilon(sub.sigma2, per_moment_count, 2LL * g.kappa * g.m, abar);
    double achieved =
        2.0 * s2 * plan.epsilon_second * std::sqrt(static_cast<double>(g.kappa)) * g.m;
    if (g.xnorm > kSparsityThreshold) {
      plan.epsilon_first = chebyshev_epsilon(sub.sigma1, per_moment_count, 2LL * g.m, abar);
      achieved += 2.0 * s2 * plan.epsilon_first * g.xnorm * std::sqrt(2.0 * g.m);
    } else {
      plan.epsilon_first = std::numeric_limits<double>::infinity();
    }
    plan.epsilon = achieved / p;
    plan.total_copies = (2LL * g.m + 2LL * g.kappa * g.m) * per_moment_count;
    plan.envelope = gaussian_envelope(g, sub, plan.epsilon, config.alpha, 1.0);
  } else {
    require_passive_squeezing(network);
    if (!(sub.sigma_le > 0.0))
      throw std::invalid_argument("plan_reduced: variance bound must be positive");
    fill_lo_identity(plan, network, g, n);
    plan.C_le = per_moment_count;
    plan.epsilon_le =
        chebyshev_epsilon(sub.sigma_le, per_moment_count, plan.N_le, 1.0 - config.alpha);
    plan.epsilon = plan.epsilon_le * lo_amplification(g.m, n, g.d) / p;
    plan.total_copies = plan.N_le * per_moment_count;
    plan.envelope = lo_envelope(g, n, sub, plan.epsilon, config.alpha, 1.0);
  }
  plan.postselection_probability = p;
  if (target)
    plan.settings_count = static_cast<int>(settings_postselected(network, *target).settings.size());
  return plan;
}

}  // namespace

SamplePlan plan_reduced(const TestConfig& config, const NetworkSpec& network,
                        const VarianceBounds& bounds, long long per_moment_count) {
  return reduced_plan_impl(config, network, nullptr, bounds, per_moment_count);
}

SamplePlan plan_reduced_postselected(const TestConfig& config, const NetworkSpec& network,
                                     const PostselectedTarget& target,
                                     const VarianceBounds& bounds, long long per_moment_count) {
  return reduced_plan_impl(config, network, &target, bounds, per_moment_count);
}

std::vector<MeasurementBatch> measurement_batches(const SettingPlan& settings,
                                                  const std::vector<MomentKey>& keys,
                                                  const SamplePlan& plan) {
  std::vector<MeasurementBatch> batches;
  for (const auto& key : keys) {
    int index = -1;
    for (std::size_t r = 0; r < settings.recipes.size(); ++r) {
      if (settings.recipes[r].key == key) {
        index = static_cast<int>(r);
        break;
      }
    }
    if (index < 0)
      throw std::invalid_argument("measurement_batches: no recipe serves " + key.str());
    long long count = 0;
    if (!plan.gaussian) {
      count = plan.C_le;
    } else if (key.first_moment()) {
      count = plan.C1 > 0 ? plan.C1 : plan.pilot_first;
    } else if (key.order() == 1) {
      count = plan.C2;
    } else {
      throw std::logic_error("measurement_batches: photon-free plan fed a degree-" +
                             std::to_string(2 * key.order()) + " key");
    }
    if (count <= 0)
      throw std::invalid_argument("measurement_batches: zero copy count for " + key.str());
    const auto& recipe = settings.recipes[static_cast<std::size_t>(index)];
    for (std::size_t t = 0; t < recipe.terms.size(); ++t)
      batches.push_back({index, static_cast<int>(t), count});
  }
  return batches;
}

Verdict decide(double estimate, const TestConfig& config) {
  if (!std::isfinite(estimate)) throw std::invalid_argument("decide: estimate must be finite");
  Verdict verdict;
  verdict.estimate = estimate;
  verdict.config = config;
  verdict.threshold = config.F_T + config.epsilon;
  verdict.margin = estimate - verdict.threshold;
  verdict.accept = estimate >= verdict.threshold;
  return verdict;
}

double fidelity_gap(double n_mismatch, const TestConfig& config) {
  if (std::isnan(n_mismatch) || n_mismatch < 0.0)
    throw std::invalid_argument("fidelity_gap: mismatch must be nonnegative");
  const double floor_gap = 2.0 * config.epsilon;
  if (std::isinf(n_mismatch)) return 1.0 - config.F_T;
  if (n_mismatch == 0.0) return floor_gap;
  const double graded =
      (2.0 * config.epsilon + (1.0 - config.F_T) * (n_mismatch - 1.0)) / n_mismatch;
  return std::max(graded, floor_gap);
}

SystematicErrorBudget systematic_error_budget(double eta, double s_max, int m) {
  if (!(eta > 0.0) || eta > 1.0)
    throw std::invalid_argument("systematic_error_budget: efficiency must lie in (0, 1]");
  if (!(s_max > 0.0) || m < 1)
    throw std::invalid_argument("systematic_error_budget: invalid network parameters");
  SystematicErrorBudget budget;
  budget.variance_shift = (1.0 - eta) / (4.0 * eta);
  budget.fidelity_deviation = s_max * s_max * m * (1.0 - eta) / (2.0 * eta);
  return budget;
}

double eta_threshold(double s_max, int m, double epsilon) {
  if (!(s_max > 0.0) || m < 1 || !(epsilon > 0.0))
    throw std::invalid_argument("eta_threshold: invalid parameters");
  const double s2m = s_max * s_max * m;
  return s2m / (2.0 * epsilon + s2m);
}

BoundCheck pochhammer_planning_bound(double x) {
  if (std::isnan(x) || x < 0.0)
    throw std::invalid_argument("pochhammer_planning_bound: x must be nonnegative");
  BoundCheck check;
  if (x == 0.0) {
    check.lhs = 1.0;
    check.rhs = 1.0;
    return check;
  }
  check.lhs = 1.0 / (1.0 - std::exp(-1.0 / x));
  check.rhs = x + 1.0 / (2.0 + 2.0 * x) + 0.5;
  return check;
}

std::pair<double, double> trace_distance_bounds(double fidelity) {
  if (!(fidelity >= 0.0) || fidelity > 1.0)
    throw std::invalid_argument("trace_distance_bounds: fidelity must lie in [0, 1]");
  const double lower = 1.0 - fidelity * fidelity;
  return {lower, std::sqrt(std::max(0.0, lower))};
}

std::string SamplePlan::to_json() const {
  json doc;
  doc["gaussian"] = gaussian;
  doc["m"] = m;
  doc["n"] = n;
  doc["d"] = d;
  doc["kappa"] = kappa;
  doc["s_max"] = s_max;
  doc["C1"] = C1;
  doc["C2"] = C2;
  doc["C_le"] = C_le;
  doc["N_le"] = N_le;
  doc["pilot_first"] = pilot_first;
  doc["total_copies"] = total_copies;
  doc["settings_count"] = settings_count;
  doc["settings_bound"] = settings_bound;
  doc["postselection_probability"] = postselection_probability;
  doc["epsilon"] = epsilon;
  doc["epsilon_first"] = epsilon_first;
  doc["epsilon_second"] = epsilon_second;
  doc["epsilon_le"] = epsilon_le;
  doc["envelope"] = envelope;
  return doc.dump();
}

std::string Verdict::to_json() const {
  json doc;
  doc["estimate"] = estimate;
  doc["threshold"] = threshold;
  doc["margin"] = margin;
  doc["accept"] = accept;
  doc["config"] = json::parse(config.to_json());
  return doc.dump();
}

}  // namespace cvcert
