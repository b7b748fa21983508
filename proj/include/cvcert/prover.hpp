#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cvcert/estimation.hpp"
#include "cvcert/fock.hpp"
#include "cvcert/gaussian.hpp"
#include "cvcert/symplectic.hpp"

namespace cvcert {

enum class ProverBackend { gaussian, fock };

// One channel application in a noisy preparation recipe.
struct NoiseStep {
  NoiseKind kind = NoiseKind::loss;
  double strength = 0.0;
};

// Outcome tables for a prover that fabricates records instead of measuring a
// state: rows[s] holds joint outcomes (one draw per row, one column per mode)
// replayed iid for setting s. Detector-efficiency noise is not applied on
// top; the table is the outcome law.
struct SpoofTable {
  std::vector<Mat> rows;
};

// Everything the simulated prover knows: which backend realizes the state,
// the network whose target it claims to prepare, and how the preparation
// deviates from honest. The acceptance threshold and tolerance never appear
// here; the prover only ever receives a setting schedule and batch counts.
struct ProverScenario {
  ProverBackend backend = ProverBackend::gaussian;
  NetworkSpec network;
  int cutoff = 12;

  // Gaussian recipe: channels folded over the honest target, in order.
  std::vector<NoiseStep> noise;

  // Explicit preparations override the honest target for their backend.
  std::optional<GaussianState> gaussian_preparation;
  std::optional<FockState> fock_preparation;

  // Heralded sources: the fock preparation is projected on the ancilla
  // pattern before sampling, so records come from the kept modes only.
  std::optional<PostSelection> herald;

  double eta = 1.0;

  std::optional<SpoofTable> spoof;

  std::string to_json() const;
  static ProverScenario from_json(const std::string& text);
};

// Scenario invariants: backend-compatible recipe fields, eta in (0, 1],
// physical mixture weights. Throws std::invalid_argument.
void validate_scenario(const ProverScenario& scenario);

// The state the scenario actually prepares, before detector effects.
// prepared_fock applies the herald projection; both throw when the scenario
// names the other backend.
GaussianState prepared_gaussian(const ProverScenario& scenario);
FockState prepared_fock(const ProverScenario& scenario);

// Draws the requested records: for each batch, joint homodyne outcomes of
// its term's setting from the prepared state (or spoof table), with
// independent Normal(0, (1-eta)/(4 eta)) detector noise added per outcome
// when eta < 1. Rows carry setting_id = batch index and one row per mode per
// trial. Deterministic per seed and independent of thread count; throws
// std::length_error when the summed batch counts exceed sample_cap.
inline constexpr long long kDefaultSampleCap = 50'000'000;
std::vector<OutcomeRow> respond(const ProverScenario& scenario, const SettingPlan& plan,
                                const std::vector<MeasurementBatch>& batches, uint64_t seed,
                                long long sample_cap = kDefaultSampleCap);

// How the orthogonal component of a dishonest mixture is chosen:
// the creation operator applied to the target, a bare Fock excitation of the
// input occupation, or a seeded random pure state, each projected against
// the target and renormalized.
enum class OrthogonalStyle { photon_added, fock_excitation, random_pure };

// Mixture weight * target + (1 - weight) * orthogonal, with the overlap
// re-verified against the fidelity oracle and the witness expectation of the
// orthogonal part attached for gap predictions.
struct MixedPreparation {
  FockState state;
  double fidelity = 1.0;
  double n_perp = 0.0;
  bool mismatch_applicable = false;
};

MixedPreparation build_orthogonal_prep(const NetworkSpec& network, int cutoff,
                                       OrthogonalStyle style, double weight, uint64_t seed = 0);

// Interchange CSV for outcome records, one row per line:
// setting_id,trial,mode,angle,outcome with a fixed header.
void write_outcome_csv(std::ostream& out, const std::vector<OutcomeRow>& rows);
std::vector<OutcomeRow> read_outcome_csv(std::istream& in);

}  // namespace cvcert
