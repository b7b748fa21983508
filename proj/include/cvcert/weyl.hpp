#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

#include "cvcert/symplectic.hpp"

namespace cvcert {

// Single-mode operator matrices on the truncated Fock space {0..cutoff},
// convention [q, p] = i/2, a = q + i p, n = q^2 + p^2 - 1/2.
CMat annihilation_op(int cutoff);
CMat creation_op(int cutoff);
CMat number_op(int cutoff);
CMat q_op(int cutoff);
CMat p_op(int cutoff);
CMat rotated_quadrature_op(int cutoff, double theta);  // cos(t) q + sin(t) p

// Symmetric (Weyl) ordering of q^a p^b: the average over all orderings of
// a copies of q and b copies of p. Cached per (a, b, cutoff); a + b <= 8.
CMat weyl_monomial(int a, int b, int cutoff);

// Homodyne estimator for a Weyl monomial: angles and coefficients with
// W(q^a p^b) = sum_i coeff_i * (cos(angle_i) q + sin(angle_i) p)^(a+b),
// an exact operator identity. Pure monomials get the single trivial term.
struct WeylTerm {
  double angle;
  double coeff;
};
std::vector<WeylTerm> weyl_expansion(int a, int b);

// Candidate angles used by weyl_expansion, in selection order.
const std::vector<double>& weyl_angle_dictionary();

}  // namespace cvcert
