#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cvcert/fock.hpp"
#include "cvcert/gaussian.hpp"
#include "cvcert/moments.hpp"
#include "cvcert/symplectic.hpp"

namespace cvcert {

// One estimated moment-tensor entry. `variance` is the variance of the mean
// (already divided by the sample count, combined across estimator terms);
// `derived` marks entries recombined from more than one measurement batch.
struct MomentEstimate {
  double mean = 0.0;
  long long count = 0;
  double variance = 0.0;
  bool derived = false;
};

// Keyed collection of moment estimates. Reads of absent keys throw
// std::out_of_range naming the key; recombination treats that as fatal.
class MomentEstimateStore {
 public:
  void set(const MomentKey& key, const MomentEstimate& est) { entries_[key] = est; }
  bool contains(const MomentKey& key) const { return entries_.count(key) != 0; }
  const MomentEstimate& at(const MomentKey& key) const;
  double value(const MomentKey& key) const { return at(key).mean; }
  std::size_t size() const { return entries_.size(); }
  const std::map<MomentKey, MomentEstimate>& entries() const { return entries_; }

 private:
  std::map<MomentKey, MomentEstimate> entries_;
};

// Exact stores for oracle states, used to validate recombination against
// direct operator expectations. The Gaussian builder serves orders <= 2
// (uncentered seconds, cov + mean mean^T) and throws beyond that.
MomentEstimateStore exact_store_fock(const FockState& state, const std::vector<MomentKey>& keys);
MomentEstimateStore exact_store_gaussian(const GaussianState& state,
                                         const std::vector<MomentKey>& keys);

// Fidelity witness expanded over moment keys: <bound input> = constant +
// sum_t coeff_t * moment(key_t), with moments in the per-mode symmetrized
// form the store holds. Exact operator identity; the star-product expansion
// accounts for reordering corrections, so the identity holds entry by entry
// for any state, not just in expectation over ensembles.
struct WitnessTerm {
  MomentKey key;
  double coeff = 0.0;
};
struct WitnessExpansion {
  double constant = 0.0;
  std::vector<WitnessTerm> terms;
};

// Expansion of the photon-counting witness N with F^(n) = 1 - <N>.
WitnessExpansion witness_expansion(const NetworkSpec& network);

// Expansion of the weight kept by the photon-subtraction map,
// prod_k p_{n_k-1}(n_tilde_k) / nvec!. Expectations >= 1 mark preparations
// where the plain witness bound is certifiably valid.
WitnessExpansion kept_weight_expansion(const NetworkSpec& network);

// Post-selection request plus the target's success probability, which the
// caller obtains from an oracle or from the heralding statistics.
struct PostselectedTarget {
  PostSelection sel;
  double probability = 0.0;
};

// Expansion of the post-selected fidelity bound over system-mode keys
// (modes reindexed to the kept modes in ascending order):
// F_S = constant + sum_t coeff_t * moment_sys(key_t). Ancilla modes are
// contracted against |phi>; requires each phi of definite photon parity
// whenever an odd system monomial would otherwise survive.
WitnessExpansion postselected_expansion(const NetworkSpec& network, const PostselectedTarget& ps);

// Moment keys the recombination formulas read. The Gaussian list is all 2m
// first moments plus the second moments selected by the sparsity of
// M = O D^-2 O^T; the photon-counting list mirrors the witness expansion's
// terms and reduces to the Gaussian list when no photons are present.
std::vector<MomentKey> relevant_moments_gaussian(const NetworkSpec& network);
std::vector<MomentKey> relevant_moments_lo(const NetworkSpec& network);
std::vector<MomentKey> relevant_moments_postselected(const NetworkSpec& network,
                                                     const PostselectedTarget& ps);

// Worst-case count of moment-tensor entries the photon-counting bound can
// touch, (1 + 2m) * (4 d^2 + 1)^n; the enumerated key lists stay below it.
long long lo_relevant_bound(int m, int n, int d);

// Fidelity lower bounds from a store. recombine_F0 evaluates the closed
// matrix form 1 + m/2 + x^T M (2 gamma - x) - tr(M Gamma) directly from the
// first- and second-moment entries; recombine_Fn contracts the witness
// expansion. The two agree for Gaussian targets and are kept as independent
// routes. recombine_FS with an empty ancilla list reduces to recombine_Fn.
double recombine_F0(const MomentEstimateStore& store, const NetworkSpec& network);
double recombine_Fn(const MomentEstimateStore& store, const NetworkSpec& network);
double recombine_FS(const MomentEstimateStore& store, const NetworkSpec& network,
                    const PostselectedTarget& ps);

// One homodyne configuration: a rotated-quadrature angle per mode
// (0 = q, pi/2 = p).
struct HomodyneSetting {
  std::vector<double> angles;
};

// How one moment entry is estimated: per-mode outcome powers applied to each
// trial, averaged per setting, then combined with the term coefficients.
// Single-term recipes are direct; multi-term recipes are derived entries.
struct EstimatorTerm {
  int setting = -1;
  double coeff = 1.0;
};
struct MomentRecipe {
  MomentKey key;
  std::vector<int> powers;
  std::vector<EstimatorTerm> terms;

  bool derived() const { return terms.size() > 1; }
};

// Measurement plan: settings plus one recipe per relevant key. Every key is
// served by at least one setting; recipe_for throws on unplanned keys.
struct SettingPlan {
  int m = 0;
  std::vector<HomodyneSetting> settings;
  std::vector<MomentRecipe> recipes;

  const MomentRecipe& recipe_for(const MomentKey& key) const;
  std::vector<MomentKey> served_keys(int setting) const;
};

// Gaussian plan: exactly m + 3 settings (all q, all p, p on one mode with q
// elsewhere, all rotated by pi/4); same-mode qp entries are derived from
// three of them. Carries recipes for every first and second moment, so any
// photon-free network's relevant keys are served.
SettingPlan settings_gaussian(int m);

// Photon-counting plan built by coverage: each key's per-mode monomial is
// pinned to quadrature angles (mixed monomials through their rotated
// expansion) and compatible pin sets are merged greedily into settings,
// seeded with the all-q and all-p settings. Deterministic.
SettingPlan settings_lo(const NetworkSpec& network);

// Same builder over the post-selected system keys; the plan's mode count is
// the number of kept modes.
SettingPlan settings_postselected(const NetworkSpec& network, const PostselectedTarget& ps);

// One contiguous block of trials measured for one recipe term.
struct MeasurementBatch {
  int recipe = 0;
  int term = 0;
  long long count = 0;
};

// One homodyne outcome in the interchange layout: setting_id indexes the
// batch table, trial indexes within the batch, angle repeats the setting's
// angle for the row's mode as a consistency check.
struct OutcomeRow {
  int setting_id = 0;
  long long trial = 0;
  int mode = 0;
  double angle = 0.0;
  double outcome = 0.0;
};

// Folds outcome rows into moment estimates: per batch, average the per-trial
// products of powered outcomes; per recipe, combine batch means with the
// term coefficients. Validates angles against the plan and throws on
// mismatched rows; recipes with an unmeasured term are left out of the store.
MomentEstimateStore accumulate(const std::vector<OutcomeRow>& rows, const SettingPlan& plan,
                               const std::vector<MeasurementBatch>& batches);

}  // namespace cvcert
