#pragma once

#include <cstdint>
#include <vector>

#include "cvcert/symplectic.hpp"

namespace cvcert {

// Gaussian state as first and centered second quadrature moments in the
// interleaved (q1, p1, ...) ordering; vacuum covariance is (1/4) I.
struct GaussianState {
  Vec mean;
  Mat cov;

  int modes() const { return static_cast<int>(mean.size()) / 2; }

  static GaussianState vacuum(int m) {
    return {Vec::Zero(2 * m), Mat::Identity(2 * m, 2 * m) * 0.25};
  }
};

// Most negative eigenvalue of cov + (i/4) Omega; physical states have
// defect >= -1e-9.
double uncertainty_defect(const GaussianState& state);

// Target state of a Gaussian-class network: mean = x, cov = S (I/4) S^T.
// Throws if the network carries input photons.
GaussianState prepare_gaussian_target(const NetworkSpec& network);

// <n_total> on the preparation pulled back through the network,
// trace(cov') + ||mean'||^2 - m/2. Zero exactly at the target.
double mean_total_photons(const GaussianState& state, const NetworkSpec& network);

// Exact fidelity <target|rho_p|target> via the closed-form Gaussian overlap
// of the pulled-back preparation with vacuum.
double gaussian_fidelity_oracle(const NetworkSpec& network, const GaussianState& prep);

enum class NoiseKind { loss, thermal, displacement_drift };

// Standard Gaussian channels. loss: cov -> eta cov + (1-eta)/4 I, mean ->
// sqrt(eta) mean. thermal: cov += (nbar/2) I. displacement_drift: adds
// `strength` to the q quadrature of every mode.
GaussianState noise_channel(const GaussianState& state, NoiseKind kind, double strength);

// Joint homodyne outcomes for one rotated quadrature per mode
// (angle 0 = q, pi/2 = p). Returns a count x m matrix; row t is trial t.
// Deterministic per seed, independent of thread count.
Mat sample_homodyne_gaussian(const GaussianState& state, const std::vector<double>& angles,
                             int count, uint64_t seed);

// Single-threaded reference for the sampler above; must agree bit for bit.
Mat sample_homodyne_gaussian_serial(const GaussianState& state, const std::vector<double>& angles,
                                    int count, uint64_t seed);

}  // namespace cvcert
