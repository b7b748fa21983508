#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace cvcert {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;

// Entries at or below this magnitude count as zero for sparsity analysis
// (mode range, relevant-moment enumeration, recombination weights).
inline constexpr double kSparsityThreshold = 1e-12;

// Canonical symplectic form on 2m modes, interleaved ordering
// (q1, p1, q2, p2, ...): 2x2 diagonal blocks [[0, 1], [-1, 0]].
Mat symplectic_form(int m);

// max-norm of S^T Omega S - Omega; zero for exact symplectic S.
double symplectic_defect(const Mat& S);

// Inverse via the symplectic structure: S^{-1} = Omega^{-1} S^T Omega.
Mat symplectic_inverse(const Mat& S);

// Gaussian unitary in Euler-decomposed form S = O * D * Oprime plus a
// phase-space displacement x. D is diagonal with reciprocal pairs
// (s_j, 1/s_j), s_j >= 1; O and Oprime are orthogonal symplectic.
struct SymplecticTransform {
  Mat O;
  Vec s;  // per-mode squeeze parameters; D = diag(s_1, 1/s_1, s_2, 1/s_2, ...)
  Mat Oprime;
  Vec x;

  int modes() const { return static_cast<int>(s.size()); }
  Mat D() const;
  Mat S() const;

  bool passive(double tol = kSparsityThreshold) const;

  static SymplecticTransform identity(int m);
};

// Affine phase-space action r -> S r + x and its pullback r -> S^{-1}(r - x).
// The inverse is taken symplectically, not by numeric inversion.
struct AffineMap {
  Mat S;
  Mat Sinv;
  Vec x;

  Vec forward(const Vec& r) const { return S * r + x; }
  Vec pullback(const Vec& r) const { return Sinv * (r - x); }
};

// Validates the Euler factors and returns the composed affine map.
// Throws std::invalid_argument with the defect norm if the factors are not
// symplectic to 1e-10.
AffineMap compose_symplectic(const SymplecticTransform& t);

// Maximal number of input modes coupled to any output mode of O, scanning
// paired rows with the sparsity threshold.
int mode_range(const Mat& O);

// A certification instance: target class is Gaussian when nvec is all zero,
// linear-optical when the transform is passive and some n_j > 0.
struct NetworkSpec {
  int m = 0;
  std::vector<int> nvec;
  SymplecticTransform transform;

  int total_photons() const;
  bool gaussian_class() const;
  int mode_range() const;  // d, computed from the left orthogonal factor
  int kappa() const;       // 2 * min(d^2, m)

  static NetworkSpec vacuum(int m);

  std::string to_json() const;
  static NetworkSpec from_json(const std::string& text);
};

// Rank-2 projector onto the span of the two columns of O belonging to
// mode j (1-based): P = o^(2j-1) o^(2j-1)^T + o^(2j) o^(2j)^T.
Mat projector(const NetworkSpec& network, int j);

// Orthogonal-symplectic building blocks.
Mat beamsplitter(int m, int i, int j, double theta);  // modes i < j, 1-based
Mat phase_shifter(int m, int j, double theta);

// Passive transform <-> m x m mode unitary, W_kj = O(2k-1,2j-1) + i*O(2k,2j-1).
CMat unitary_from_passive(const Mat& O);
Mat passive_from_unitary(const CMat& W);

// Layered random circuits for test instances; deterministic per seed.
SymplecticTransform random_passive(int m, int depth, uint64_t seed);
SymplecticTransform random_symplectic(int m, int depth, double s_max, uint64_t seed);

}  // namespace cvcert
