#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "cvcert/moments.hpp"
#include "cvcert/symplectic.hpp"
#include "cvcert/weyl.hpp"

namespace cvcert {

using CVec = Eigen::VectorXcd;

// Truncated Fock-space state: a weighted ensemble of pure components over
// the basis {0..cutoff}^m. Flat index: mode 1 varies fastest,
// idx = sum_j n_j (cutoff+1)^(j-1).
struct FockComponent {
  double weight;
  CVec amp;
};

struct FockState {
  int m = 0;
  int cutoff = 0;
  std::vector<FockComponent> comps;

  bool pure() const { return comps.size() == 1; }
  Eigen::Index dim() const;

  static FockState vacuum(int m, int cutoff);
  static FockState basis(int m, int cutoff, const std::vector<int>& nvec);

  std::string to_json() const;
  static FockState from_json(const std::string& text);
};

Eigen::Index fock_flat_index(const std::vector<int>& nvec, int cutoff);

// Probability mass on basis states where any mode sits at the cutoff level;
// the truncation-leakage gauge.
double top_level_mass(const FockState& state);

// Applies a single-mode operator matrix along one tensor axis (1-based mode).
CVec apply_mode_op(const CVec& amp, int m, int cutoff, int mode, const CMat& op);

// Full-space operator matrices (desk scale only).
CMat full_annihilation(int m, int cutoff, int mode);
CMat full_quadrature(int m, int cutoff, int index);  // 1-based quadrature index

// exp(G) for anti-Hermitian G, via eigendecomposition of iG.
CMat antihermitian_exp(const CMat& G);

// Exact passive-network target U|nvec>: each input creation operator maps
// through the column of the induced mode unitary; exact below the cutoff.
FockState prepare_lo_target(const NetworkSpec& network, int cutoff);

// Gaussian states in the Fock basis, for oracle cross-validation and
// post-selected Gaussian fixtures.
CVec fock_coherent(int cutoff, std::complex<double> alpha);
CVec fock_squeezed_vacuum(int cutoff, double r);  // q variance e^{2r}/4
FockState fock_thermal(int cutoff, double nbar, double mass_budget = 1e-10);

// Applies an m-mode passive unitary W (mode-space) to the state exactly,
// through the quadratic-generator exponential.
FockState fock_apply_passive(const FockState& state, const CMat& W);
FockState fock_displace(const FockState& state, int mode, std::complex<double> alpha);
FockState fock_squeeze(const FockState& state, int mode, double r);

// Builds the Gaussian-class target U|0> = O D Oprime |0> plus displacement
// in the Fock basis; network must be Gaussian class.
FockState prepare_gaussian_target_fock(const NetworkSpec& network, int cutoff);

// Symmetric-ordering moment <prod_j W(q_j^a_j p_j^b_j)> for the key's
// per-mode exponent profile; real by construction.
double moment_tensor_exact(const FockState& state, const MomentKey& key);

// <target|rho_p|target>; target must be pure and share m and cutoff.
double fidelity_oracle_fock(const FockState& target, const FockState& prep);

// Operator Pochhammer factor p_t(A) = A (A-1) ... (A-t); p_{-1} = identity.
CMat pochhammer_matrix(const CMat& A, int t);

// Max deviation of (a^+)^t n (a)^t = p_t(n) and (a^+)^nj (a)^nj = p_{nj-1}(n)
// on the subspace unaffected by truncation.
double pochhammer_check(int n_j, int t, int cutoff);

// j-th nullifier (n_tilde_j - n_j) prod_k p_{n_k - 1}(n_tilde_k) built from
// the back-transformed quadratures of the network.
CMat nullifier_operator(const NetworkSpec& network, int j, int cutoff);

// Witness N = (1/nvec!) (r_tilde^2 - (m+2n)/2) prod_k p_{n_k-1}(n_tilde_k);
// F^(n) = 1 - <N>.
CMat witness_operator(const NetworkSpec& network, int cutoff);
double fidelity_bound_oracle_fock(const NetworkSpec& network, const FockState& prep);

// prod_k p_{n_k-1}(n_tilde_k). Its expectation over nvec! is the weight the
// preparation keeps under the photon-subtraction map behind the witness;
// values >= 1 mark preparations where 1 - <witness> certifiably lower-bounds
// the fidelity.
CMat pochhammer_product(const NetworkSpec& network, int cutoff);

double expectation(const FockState& state, const CMat& op);
CMat density_matrix(const FockState& state);

// Conditions on single-mode pure ancilla states phi (Fock-basis amplitude
// vectors, one per ancilla mode; 1-based mode indices). Returns the
// post-selected system state and the success probability.
struct PostSelection {
  std::vector<int> ancilla_modes;
  std::vector<CVec> phi;
};
std::pair<FockState, double> post_select(const FockState& state, const PostSelection& sel);

// Post-selected witness on the kept modes, N_S = ((P-1) I + G)/P, where G is
// the ancilla contraction of 1 - (1/nvec!)(1 + n - n_tilde_tot) prod_k
// p_{n_k-1}(n_tilde_k). Keeping the first product term (the weight retained
// by the photon-subtraction map) instead of assuming it is one makes
// 1 - <N_S> a lower bound on the post-selected fidelity for every
// preparation and puts the heralded target in the kernel of N_S.
// P is the target's post-selection probability.
CMat postselected_witness(const NetworkSpec& network, const PostSelection& sel, int cutoff);

// Expectation of the witness on the orthogonal part of the preparation;
// applicable == false marks preparations identical to the target (F = 1).
struct PhotonMismatch {
  bool applicable = false;
  double n_perp = 0.0;
};
PhotonMismatch photon_mismatch(const FockState& target, const FockState& prep,
                               const NetworkSpec& network);

// Joint homodyne sampling via sequential conditional inverse-CDF on a
// Hermite-function grid; deterministic per seed, thread-count independent.
Mat sample_homodyne_fock(const FockState& state, const std::vector<double>& angles,
                         int count, uint64_t seed);
Mat sample_homodyne_fock_serial(const FockState& state, const std::vector<double>& angles,
                                int count, uint64_t seed);

// Hermite functions psi_n(x) for n = 0..cutoff at one point, in the
// convention <q^2> = (2n+1)/4.
std::vector<double> hermite_functions(int cutoff, double x);

}  // namespace cvcert
