#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cvcert/estimation.hpp"
#include "cvcert/fock.hpp"
#include "cvcert/gaussian.hpp"
#include "cvcert/symplectic.hpp"

namespace cvcert {

// Protocol parameters fixed before any sample is drawn.
struct TestConfig {
  double F_T = 0.0;     // threshold fidelity, < 1
  double alpha = 0.0;   // maximal failure probability, in (0, 1/2]
  double epsilon = 0.0; // estimation error, in (0, (1 - F_T)/2]

  std::string to_json() const;
  static TestConfig from_json(const std::string& text);
};

// Throws std::invalid_argument naming the violated range.
void validate_test_config(const TestConfig& config);

// Uniform upper bounds on the variance of any measured quadrature product:
// sigma1 for single quadratures, sigma2 for degree-2 products, sigma_le for
// the highest degree the photon-carrying scheme measures. The varsigma
// fields, when set, replace their counterparts in post-selected planning.
struct VarianceBounds {
  double sigma1 = 1.0;
  double sigma2 = 1.0;
  double sigma_le = 1.0;
  std::optional<double> varsigma1;
  std::optional<double> varsigma2;
  std::optional<double> varsigma_le;
  bool degenerate = false;
};

// Closed-form worst-direction bounds for a Gaussian preparation:
// sigma1^2 = V and sigma2^2 = 2 V^2 + 4 mu^2 V, where V is the largest
// covariance eigenvalue and mu the largest per-mode mean amplitude.
VarianceBounds variance_bounds_gaussian(const GaussianState& state);

// Exact variances of every powered-quadrature observable the plan measures,
// computed on a padded truncation so the operator powers act losslessly.
VarianceBounds variance_bounds_fock(const FockState& state, const SettingPlan& plan);

// Empirical bounds from a pilot store: per-sample class variances recovered
// as variance * count, scaled by a factor-2 safety margin. Every entry must
// carry at least 100 samples; near-zero classes are floored and flagged.
VarianceBounds estimate_variance_bounds(const MomentEstimateStore& pilot);

// Smallest integer c with c >= sigma^2 (N + 1) / (epsilon^2 ln(1/alpha_bar)).
// Measuring each of N bounded-variance observables on c fresh copies puts
// every sample mean within epsilon of its expectation with probability at
// least alpha_bar. Requires alpha_bar in [1/2, 1).
long long chebyshev_count(double sigma, double epsilon, long long N, double alpha_bar);

// Inversion of chebyshev_count: the tolerance c samples per observable buy.
double chebyshev_epsilon(double sigma, long long count, long long N, double alpha_bar);

// Copy budget for one certification run. Gaussian plans fill C1/C2 (per
// first- and per second-moment counts, total 2m C1 + 2 kappa m C2);
// photon-carrying plans fill C_le/N_le (per-moment count and moment bound,
// total N_le * C_le). epsilon is the fidelity-level tolerance the plan
// guarantees; the epsilon_* fields are the per-moment targets behind it.
struct SamplePlan {
  bool gaussian = true;
  int m = 0;
  int n = 0;
  int d = 0;
  int kappa = 0;
  double s_max = 1.0;
  long long C1 = 0;
  long long C2 = 0;
  long long C_le = 0;
  long long N_le = 0;
  long long pilot_first = 0;  // first-moment allocation when x = 0 zeroes C1
  long long total_copies = 0;
  int settings_count = 0;
  long long settings_bound = 0;
  double postselection_probability = 1.0;
  double epsilon = 0.0;
  double epsilon_first = 0.0;
  double epsilon_second = 0.0;
  double epsilon_le = 0.0;
  double envelope = 0.0;  // theorem-level asymptotic value at the given lambda

  std::string to_json() const;
};

// Budget for a photon-free network: C1 and C2 from the per-moment Chebyshev
// counts at tolerances epsilon/(4 s_max^2 ||x||_2 sqrt(2m)) and
// epsilon/(4 s_max^2 sqrt(kappa) m), confidence split sqrt(1 - alpha) per
// moment family. With x = 0 the first-moment term drops from the guarantee
// and C1 is replaced by a fixed pilot allocation.
SamplePlan plan_gaussian(const TestConfig& config, const NetworkSpec& network,
                         const VarianceBounds& bounds, double lambda = 1.0);

// Budget for a photon-carrying network: one count C_le for all N_le relevant
// moments at tolerance epsilon / ((n + 5m/2)(1/2 + 2d sqrt(2nm))^n).
// Photon-free networks delegate to plan_gaussian.
SamplePlan plan_lo(const TestConfig& config, const NetworkSpec& network,
                   const VarianceBounds& bounds, double lambda = 1.0);

// Post-selected budget: the matching unconditioned plan with epsilon scaled
// to P * epsilon and the generalized variance bounds substituted, so every
// per-moment count grows by 1/P^2.
SamplePlan plan_postselected(const TestConfig& config, const NetworkSpec& network,
                             const PostselectedTarget& target, const VarianceBounds& bounds,
                             double lambda = 1.0);

// Fixed per-moment count; the achievable fidelity tolerance is recomputed by
// inverting the Chebyshev counts and pushing the per-moment tolerances
// through the stability envelope. config.epsilon is ignored.
SamplePlan plan_reduced(const TestConfig& config, const NetworkSpec& network,
                        const VarianceBounds& bounds, long long per_moment_count);
SamplePlan plan_reduced_postselected(const TestConfig& config, const NetworkSpec& network,
                                     const PostselectedTarget& target,
                                     const VarianceBounds& bounds, long long per_moment_count);

// One measurement batch per estimator term of every listed moment, with the
// per-moment count of the moment's class. Throws if a key has no recipe in
// the setting plan or its class count is zero.
std::vector<MeasurementBatch> measurement_batches(const SettingPlan& settings,
                                                  const std::vector<MomentKey>& keys,
                                                  const SamplePlan& plan);

// Accept/reject outcome; accepts exactly when estimate >= F_T + epsilon.
struct Verdict {
  double estimate = 0.0;
  double threshold = 0.0;
  double margin = 0.0;
  bool accept = false;
  TestConfig config;

  std::string to_json() const;
};

Verdict decide(double estimate, const TestConfig& config);

// Fidelity gap making the test robust: preparations with F >= F_T + gap are
// accepted with probability at least 1 - alpha. Equals
// max{(2 eps + (1 - F_T)(n_mismatch - 1)) / n_mismatch, 2 eps}; an infinite
// mismatch gives 1 - F_T, and any mismatch <= 1 gives 2 eps.
double fidelity_gap(double n_mismatch, const TestConfig& config);

// Detector efficiency eta < 1 widens every homodyne outcome by an
// independent normal of variance (1 - eta)/(4 eta); first moments and
// cross-mode products stay unbiased, squared-quadrature moments shift by
// exactly that variance, and the fidelity bound moves by at most
// s_max^2 m (1 - eta) / (2 eta).
struct SystematicErrorBudget {
  double variance_shift = 0.0;
  double fidelity_deviation = 0.0;
};

SystematicErrorBudget systematic_error_budget(double eta, double s_max, int m);

// Smallest efficiency that keeps the systematic fidelity deviation within
// epsilon: eta >= s_max^2 m / (2 epsilon + s_max^2 m).
double eta_threshold(double s_max, int m, double epsilon);

// Both sides of 1/(1 - e^{-1/x}) <= x + 1/(2 + 2x) + 1/2, the elementary
// bound behind the integer rounding in the copy counts. At x = 0 both sides
// are 1.
struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
};

BoundCheck pochhammer_planning_bound(double x);

// Trace-distance window implied by a fidelity value: (1 - F^2, sqrt(1 - F^2)).
std::pair<double, double> trace_distance_bounds(double fidelity);

}  // namespace cvcert
