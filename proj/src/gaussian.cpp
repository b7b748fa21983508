#include "cvcert/gaussian.hpp"

#include <cmath>
#include <stdexcept>

#include "cvcert/rng.hpp"

namespace cvcert {

double uncertainty_defect(const GaussianState& state) {
  const int m = state.modes();
  Eigen::MatrixXcd h = state.cov.cast<std::complex<double>>();
  h += std::complex<double>(0.0, 0.25) * symplectic_form(m).cast<std::complex<double>>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  return es.eigenvalues().minCoeff();
}

GaussianState prepare_gaussian_target(const NetworkSpec& network) {
  if (!network.gaussian_class()) {
    throw std::invalid_argument("prepare_gaussian_target: network carries input photons");
  }
  const Mat S = network.transform.S();
  GaussianState state;
  state.mean = network.transform.x;
  state.cov = S * (0.25 * Mat::Identity(2 * network.m, 2 * network.m)) * S.transpose();
  return state;
}

namespace {

GaussianState pull_back(const GaussianState& state, const NetworkSpec& network) {
  const AffineMap map = compose_symplectic(network.transform);
  GaussianState back;
  back.mean = map.pullback(state.mean);
  back.cov = map.Sinv * state.cov * map.Sinv.transpose();
  return back;
}

}  // namespace

double mean_total_photons(const GaussianState& state, const NetworkSpec& network) {
  const GaussianState back = pull_back(state, network);
  return back.cov.trace() + back.mean.squaredNorm() - 0.5 * network.m;
}

double gaussian_fidelity_oracle(const NetworkSpec& network, const GaussianState& prep) {
  const int m = network.m;
  const GaussianState back = pull_back(prep, network);
  const Mat vsum = back.cov + 0.25 * Mat::Identity(2 * m, 2 * m);
  Eigen::LLT<Mat> llt(vsum);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("gaussian_fidelity_oracle: ill-conditioned covariance sum");
  }
  double logdet = 0.0;
  for (int i = 0; i < 2 * m; ++i) logdet += std::log(llt.matrixL()(i, i));
  const double quad = back.mean.dot(llt.solve(back.mean));
  // Tr[rho_t rho_p] = 2^-m det(V_t + V_p)^{-1/2} exp(-delta^T (V_t+V_p)^{-1} delta / 2),
  // normalization cross-checked against the Fock-basis oracle in the suite.
  return std::exp(-m * std::log(2.0) - logdet - 0.5 * quad);
}

GaussianState noise_channel(const GaussianState& state, NoiseKind kind, double strength) {
  const int m = state.modes();
  GaussianState out = state;
  switch (kind) {
    case NoiseKind::loss: {
      if (strength < 0.0 || strength > 1.0) throw std::invalid_argument("noise_channel: loss eta outside [0,1]");
      out.cov = strength * state.cov + (1.0 - strength) * 0.25 * Mat::Identity(2 * m, 2 * m);
      out.mean = std::sqrt(strength) * state.mean;
      break;
    }
    case NoiseKind::thermal: {
      if (strength < 0.0) throw std::invalid_argument("noise_channel: thermal nbar negative");
      out.cov = state.cov + 0.5 * strength * Mat::Identity(2 * m, 2 * m);
      break;
    }
    case NoiseKind::displacement_drift: {
      for (int j = 0; j < m; ++j) out.mean(2 * j) += strength;
      break;
    }
  }
  return out;
}

namespace {

Mat sample_homodyne_impl(const GaussianState& state, const std::vector<double>& angles,
                         int count, uint64_t seed, bool parallel) {
  const int m = state.modes();
  if (static_cast<int>(angles.size()) != m) {
    throw std::invalid_argument("sample_homodyne_gaussian: one angle per mode required");
  }
  if (count < 1) throw std::invalid_argument("sample_homodyne_gaussian: count must be >= 1");

  Mat T = Mat::Zero(m, 2 * m);
  for (int j = 0; j < m; ++j) {
    T(j, 2 * j) = std::cos(angles[static_cast<size_t>(j)]);
    T(j, 2 * j + 1) = std::sin(angles[static_cast<size_t>(j)]);
  }
  const Vec mu = T * state.mean;
  const Mat sigma = T * state.cov * T.transpose();
  Eigen::LLT<Mat> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("sample_homodyne_gaussian: restricted covariance not positive definite");
  }
  const Mat L = llt.matrixL();

  Mat out(count, m);
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < count; ++t) {
      Rng rng(Rng::derive(seed, static_cast<uint64_t>(t)));
      Vec z(m);
      for (int j = 0; j < m; ++j) z(j) = rng.next_normal();
      out.row(t) = (mu + L * z).transpose();
    }
  } else {
    for (int t = 0; t < count; ++t) {
      Rng rng(Rng::derive(seed, static_cast<uint64_t>(t)));
      Vec z(m);
      for (int j = 0; j < m; ++j) z(j) = rng.next_normal();
      out.row(t) = (mu + L * z).transpose();
    }
  }
  return out;
}

}  // namespace

Mat sample_homodyne_gaussian(const GaussianState& state, const std::vector<double>& angles,
                             int count, uint64_t seed) {
  return sample_homodyne_impl(state, angles, count, seed, true);
}

Mat sample_homodyne_gaussian_serial(const GaussianState& state, const std::vector<double>& angles,
                                    int count, uint64_t seed) {
  return sample_homodyne_impl(state, angles, count, seed, false);
}

}  // namespace cvcert
