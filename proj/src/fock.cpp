#include "cvcert/fock.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cvcert/rng.hpp"

namespace cvcert {

using nlohmann::json;

namespace {

Eigen::Index pow_dim(int base, int exp) {
  Eigen::Index d = 1;
  for (int i = 0; i < exp; ++i) d *= base;
  return d;
}

constexpr Eigen::Index kMaxFullDim = 6000;

void check_full_dim(Eigen::Index dim, const char* where) {
  if (dim > kMaxFullDim) {
    throw std::invalid_argument(std::string(where) + ": full-space dimension beyond desk scale");
  }
}

}  // namespace

Eigen::Index FockState::dim() const { return pow_dim(cutoff + 1, m); }

FockState FockState::vacuum(int m, int cutoff) {
  return basis(m, cutoff, std::vector<int>(static_cast<size_t>(m), 0));
}

FockState FockState::basis(int m, int cutoff, const std::vector<int>& nvec) {
  if (static_cast<int>(nvec.size()) != m) throw std::invalid_argument("FockState::basis: nvec size mismatch");
  FockState st;
  st.m = m;
  st.cutoff = cutoff;
  CVec amp = CVec::Zero(pow_dim(cutoff + 1, m));
  amp(fock_flat_index(nvec, cutoff)) = 1.0;
  st.comps.push_back({1.0, std::move(amp)});
  return st;
}

Eigen::Index fock_flat_index(const std::vector<int>& nvec, int cutoff) {
  Eigen::Index idx = 0, stride = 1;
  for (int n : nvec) {
    if (n < 0 || n > cutoff) throw std::out_of_range("fock_flat_index: occupation outside cutoff");
    idx += n * stride;
    stride *= cutoff + 1;
  }
  return idx;
}

double top_level_mass(const FockState& state) {
  const int c = state.cutoff;
  double mass = 0.0;
  for (const auto& comp : state.comps) {
    double comp_mass = 0.0;
    for (Eigen::Index idx = 0; idx < comp.amp.size(); ++idx) {
      Eigen::Index rest = idx;
      bool at_top = false;
      for (int j = 0; j < state.m; ++j) {
        if (rest % (c + 1) == c) {
          at_top = true;
          break;
        }
        rest /= c + 1;
      }
      if (at_top) comp_mass += std::norm(comp.amp(idx));
    }
    mass += comp.weight * comp_mass;
  }
  return mass;
}

CVec apply_mode_op(const CVec& amp, int m, int cutoff, int mode, const CMat& op) {
  if (mode < 1 || mode > m) throw std::out_of_range("apply_mode_op: mode out of range");
  const Eigen::Index levels = cutoff + 1;
  const Eigen::Index stride = pow_dim(cutoff + 1, mode - 1);
  const Eigen::Index block = stride * levels;
  const Eigen::Index dim = amp.size();
  CVec out = CVec::Zero(dim);
  CVec gather(levels);
  for (Eigen::Index outer = 0; outer < dim; outer += block) {
    for (Eigen::Index inner = 0; inner < stride; ++inner) {
      for (Eigen::Index n = 0; n < levels; ++n) gather(n) = amp(outer + inner + n * stride);
      const CVec mixed = op * gather;
      for (Eigen::Index n = 0; n < levels; ++n) out(outer + inner + n * stride) = mixed(n);
    }
  }
  return out;
}

CMat full_annihilation(int m, int cutoff, int mode) {
  const Eigen::Index dim = pow_dim(cutoff + 1, m);
  check_full_dim(dim, "full_annihilation");
  const Eigen::Index stride = pow_dim(cutoff + 1, mode - 1);
  CMat a = CMat::Zero(dim, dim);
  for (Eigen::Index idx = 0; idx < dim; ++idx) {
    const int n = static_cast<int>((idx / stride) % (cutoff + 1));
    if (n >= 1) a(idx - stride, idx) = std::sqrt(static_cast<double>(n));
  }
  return a;
}

CMat full_quadrature(int m, int cutoff, int index) {
  const int mode = (index + 1) / 2;
  const CMat a = full_annihilation(m, cutoff, mode);
  if (index % 2 == 1) return 0.5 * (a + a.adjoint());
  return std::complex<double>(0.0, -0.5) * (a - a.adjoint());
}

CMat antihermitian_exp(const CMat& G) {
  const CMat H = std::complex<double>(0.0, -1.0) * G;
  Eigen::SelfAdjointEigenSolver<CMat> es(H);
  if (es.info() != Eigen::Success) throw std::runtime_error("antihermitian_exp: eigensolver failed");
  const Eigen::Index n = G.rows();
  CVec phases(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    phases(i) = std::exp(std::complex<double>(0.0, es.eigenvalues()(i)));
  }
  return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

FockState prepare_lo_target(const NetworkSpec& network, int cutoff) {
  if (!network.transform.passive()) {
    throw std::invalid_argument("prepare_lo_target: network is not passive");
  }
  const int n_total = network.total_photons();
  if (cutoff < n_total) throw std::invalid_argument("prepare_lo_target: cutoff below photon number");

  const CMat W = unitary_from_passive(network.transform.O);
  const CMat adag = creation_op(cutoff);
  FockState st = FockState::vacuum(network.m, cutoff);
  CVec amp = st.comps[0].amp;
  double norm_factor = 1.0;
  for (int k = 1; k <= network.m; ++k) {
    const int nk = network.nvec[static_cast<size_t>(k - 1)];
    for (int rep = 0; rep < nk; ++rep) {
      CVec next = CVec::Zero(amp.size());
      for (int j = 1; j <= network.m; ++j) {
        const std::complex<double> w = W(j - 1, k - 1);
        if (std::abs(w) > kSparsityThreshold) {
          next += w * apply_mode_op(amp, network.m, cutoff, j, adag);
        }
      }
      amp = next;
    }
    for (int f = 2; f <= nk; ++f) norm_factor *= f;
  }
  st.comps[0].amp = amp / std::sqrt(norm_factor);
  return st;
}

CVec fock_coherent(int cutoff, std::complex<double> alpha) {
  CVec amp(cutoff + 1);
  amp(0) = std::exp(-0.5 * std::norm(alpha));
  for (int n = 1; n <= cutoff; ++n) amp(n) = amp(n - 1) * alpha / std::sqrt(static_cast<double>(n));
  return amp;
}

CVec fock_squeezed_vacuum(int cutoff, double r) {
  const CMat adag = creation_op(cutoff);
  const CMat a = annihilation_op(cutoff);
  const CMat G = 0.5 * r * (adag * adag - a * a);
  CVec vac = CVec::Zero(cutoff + 1);
  vac(0) = 1.0;
  return antihermitian_exp(G) * vac;
}

FockState fock_thermal(int cutoff, double nbar, double mass_budget) {
  if (nbar < 0.0) throw std::invalid_argument("fock_thermal: negative occupation");
  FockState st;
  st.m = 1;
  st.cutoff = cutoff;
  if (nbar == 0.0) return FockState::vacuum(1, cutoff);
  const double lambda = nbar / (1.0 + nbar);
  int top = cutoff;
  for (int n = 0; n <= cutoff; ++n) {
    if (std::pow(lambda, n + 1) <= mass_budget) {
      top = n;
      break;
    }
  }
  double total = 0.0;
  for (int n = 0; n <= top; ++n) total += (1.0 - lambda) * std::pow(lambda, n);
  for (int n = 0; n <= top; ++n) {
    CVec amp = CVec::Zero(cutoff + 1);
    amp(n) = 1.0;
    st.comps.push_back({(1.0 - lambda) * std::pow(lambda, n) / total, std::move(amp)});
  }
  return st;
}

FockState fock_apply_passive(const FockState& state, const CMat& W) {
  const Eigen::Index dim = state.dim();
  check_full_dim(dim, "fock_apply_passive");
  Eigen::ComplexSchur<CMat> schur(W);
  CMat K = CMat::Zero(W.rows(), W.cols());
  for (Eigen::Index i = 0; i < W.rows(); ++i) K(i, i) = std::log(schur.matrixT()(i, i));
  K = schur.matrixU() * K * schur.matrixU().adjoint();

  CMat G = CMat::Zero(dim, dim);
  for (int k = 1; k <= state.m; ++k) {
    const CMat adk = full_annihilation(state.m, state.cutoff, k).adjoint();
    for (int l = 1; l <= state.m; ++l) {
      if (std::abs(K(k - 1, l - 1)) > kSparsityThreshold) {
        G += K(k - 1, l - 1) * (adk * full_annihilation(state.m, state.cutoff, l));
      }
    }
  }
  const CMat U = antihermitian_exp(G);
  FockState out = state;
  for (auto& comp : out.comps) comp.amp = U * comp.amp;
  return out;
}

FockState fock_displace(const FockState& state, int mode, std::complex<double> alpha) {
  const CMat adag = creation_op(state.cutoff);
  const CMat a = annihilation_op(state.cutoff);
  const CMat U = antihermitian_exp(alpha * adag - std::conj(alpha) * a);
  FockState out = state;
  for (auto& comp : out.comps) comp.amp = apply_mode_op(comp.amp, state.m, state.cutoff, mode, U);
  return out;
}

FockState fock_squeeze(const FockState& state, int mode, double r) {
  const CMat adag = creation_op(state.cutoff);
  const CMat a = annihilation_op(state.cutoff);
  const CMat U = antihermitian_exp(0.5 * r * (adag * adag - a * a));
  FockState out = state;
  for (auto& comp : out.comps) comp.amp = apply_mode_op(comp.amp, state.m, state.cutoff, mode, U);
  return out;
}

FockState prepare_gaussian_target_fock(const NetworkSpec& network, int cutoff) {
  if (!network.gaussian_class()) {
    throw std::invalid_argument("prepare_gaussian_target_fock: network carries input photons");
  }
  FockState st = FockState::vacuum(network.m, cutoff);
  // Oprime acts on vacuum trivially; D squeezes mode by mode; O mixes; x displaces.
  for (int j = 1; j <= network.m; ++j) {
    const double r = std::log(network.transform.s(j - 1));
    if (std::abs(r) > kSparsityThreshold) st = fock_squeeze(st, j, r);
  }
  const CMat W = unitary_from_passive(network.transform.O);
  if ((W - CMat::Identity(network.m, network.m)).cwiseAbs().maxCoeff() > kSparsityThreshold) {
    st = fock_apply_passive(st, W);
  }
  for (int j = 1; j <= network.m; ++j) {
    const std::complex<double> alpha(network.transform.x(2 * (j - 1)), network.transform.x(2 * (j - 1) + 1));
    if (std::abs(alpha) > kSparsityThreshold) st = fock_displace(st, j, alpha);
  }
  return st;
}

double moment_tensor_exact(const FockState& state, const MomentKey& key) {
  const auto profile = weyl_profile(key, state.m);
  double value = 0.0;
  for (const auto& comp : state.comps) {
    CVec v = comp.amp;
    for (int j = 1; j <= state.m; ++j) {
      const auto [a, b] = profile[static_cast<size_t>(j - 1)];
      if (a + b > 0) v = apply_mode_op(v, state.m, state.cutoff, j, weyl_monomial(a, b, state.cutoff));
    }
    value += comp.weight * comp.amp.dot(v).real();
  }
  return value;
}

double fidelity_oracle_fock(const FockState& target, const FockState& prep) {
  if (!target.pure()) throw std::invalid_argument("fidelity_oracle_fock: target must be pure");
  if (target.m != prep.m || target.cutoff != prep.cutoff) {
    throw std::invalid_argument("fidelity_oracle_fock: cutoff or mode mismatch");
  }
  double f = 0.0;
  for (const auto& comp : prep.comps) {
    f += comp.weight * std::norm(target.comps[0].amp.dot(comp.amp));
  }
  return f;
}

CMat pochhammer_matrix(const CMat& A, int t) {
  const Eigen::Index dim = A.rows();
  CMat result = CMat::Identity(dim, dim);
  for (int k = 0; k <= t; ++k) result = result * (A - static_cast<double>(k) * CMat::Identity(dim, dim));
  return result;
}

double pochhammer_check(int n_j, int t, int cutoff) {
  if (n_j + t + 1 > cutoff) throw std::invalid_argument("pochhammer_check: cutoff too small");
  const CMat a = annihilation_op(cutoff);
  const CMat adag = creation_op(cutoff);
  const CMat n = number_op(cutoff);

  CMat at = CMat::Identity(cutoff + 1, cutoff + 1);
  for (int k = 0; k < t; ++k) at = at * a;
  const CMat lhs_a = at.adjoint() * n * at;
  const CMat rhs_a = pochhammer_matrix(n, t);

  CMat an = CMat::Identity(cutoff + 1, cutoff + 1);
  for (int k = 0; k < n_j; ++k) an = an * a;
  const CMat lhs_b = an.adjoint() * an;
  const CMat rhs_b = pochhammer_matrix(n, n_j - 1);

  // Lowering before raising never crosses the cutoff, so the identities are
  // exact on every retained level; still skip the top level for safety.
  const Eigen::Index safe = cutoff;
  const double dev_a = (lhs_a - rhs_a).topLeftCorner(safe, safe).cwiseAbs().maxCoeff();
  const double dev_b = (lhs_b - rhs_b).topLeftCorner(safe, safe).cwiseAbs().maxCoeff();
  return std::max(dev_a, dev_b);
}

namespace {

std::vector<CMat> back_transformed_number_ops(const NetworkSpec& network, int cutoff) {
  const Eigen::Index dim = pow_dim(cutoff + 1, network.m);
  check_full_dim(dim, "back_transformed_number_ops");
  const Mat Sinv = symplectic_inverse(network.transform.S());
  const Vec& x = network.transform.x;

  std::vector<CMat> r(static_cast<size_t>(2 * network.m));
  for (int l = 1; l <= 2 * network.m; ++l) {
    r[static_cast<size_t>(l - 1)] = full_quadrature(network.m, cutoff, l);
  }
  std::vector<CMat> rt(static_cast<size_t>(2 * network.m), CMat::Zero(dim, dim));
  for (int k = 1; k <= 2 * network.m; ++k) {
    CMat acc = CMat::Zero(dim, dim);
    for (int l = 1; l <= 2 * network.m; ++l) {
      const double w = Sinv(k - 1, l - 1);
      if (std::abs(w) > kSparsityThreshold) {
        acc += w * (r[static_cast<size_t>(l - 1)] - x(l - 1) * CMat::Identity(dim, dim));
      }
    }
    rt[static_cast<size_t>(k - 1)] = acc;
  }
  std::vector<CMat> ntilde(static_cast<size_t>(network.m));
  for (int j = 1; j <= network.m; ++j) {
    ntilde[static_cast<size_t>(j - 1)] =
        rt[static_cast<size_t>(2 * j - 2)] * rt[static_cast<size_t>(2 * j - 2)] +
        rt[static_cast<size_t>(2 * j - 1)] * rt[static_cast<size_t>(2 * j - 1)] -
        0.5 * CMat::Identity(dim, dim);
  }
  return ntilde;
}

}  // namespace

CMat nullifier_operator(const NetworkSpec& network, int j, int cutoff) {
  if (j < 1 || j > network.m) throw std::out_of_range("nullifier_operator: mode index out of range");
  const auto ntilde = back_transformed_number_ops(network, cutoff);
  const Eigen::Index dim = ntilde[0].rows();
  CMat result = ntilde[static_cast<size_t>(j - 1)] -
                static_cast<double>(network.nvec[static_cast<size_t>(j - 1)]) * CMat::Identity(dim, dim);
  for (int k = 1; k <= network.m; ++k) {
    result = result * pochhammer_matrix(ntilde[static_cast<size_t>(k - 1)],
                                        network.nvec[static_cast<size_t>(k - 1)] - 1);
  }
  return result;
}

CMat witness_operator(const NetworkSpec& network, int cutoff) {
  const auto ntilde = back_transformed_number_ops(network, cutoff);
  const Eigen::Index dim = ntilde[0].rows();
  const int n_total = network.total_photons();
  CMat ntot = CMat::Zero(dim, dim);
  for (const auto& nt : ntilde) ntot += nt;
  CMat result = ntot - static_cast<double>(n_total) * CMat::Identity(dim, dim);
  double nfact = 1.0;
  for (int k = 1; k <= network.m; ++k) {
    const int nk = network.nvec[static_cast<size_t>(k - 1)];
    result = result * pochhammer_matrix(ntilde[static_cast<size_t>(k - 1)], nk - 1);
    for (int f = 2; f <= nk; ++f) nfact *= f;
  }
  return result / nfact;
}

double fidelity_bound_oracle_fock(const NetworkSpec& network, const FockState& prep) {
  return 1.0 - expectation(prep, witness_operator(network, prep.cutoff));
}

CMat pochhammer_product(const NetworkSpec& network, int cutoff) {
  const auto ntilde = back_transformed_number_ops(network, cutoff);
  const Eigen::Index dim = ntilde[0].rows();
  CMat result = CMat::Identity(dim, dim);
  for (int k = 1; k <= network.m; ++k) {
    result = result * pochhammer_matrix(ntilde[static_cast<size_t>(k - 1)],
                                        network.nvec[static_cast<size_t>(k - 1)] - 1);
  }
  return result;
}

double expectation(const FockState& state, const CMat& op) {
  double value = 0.0;
  for (const auto& comp : state.comps) {
    value += comp.weight * comp.amp.dot(op * comp.amp).real();
  }
  return value;
}

CMat density_matrix(const FockState& state) {
  const Eigen::Index dim = state.dim();
  check_full_dim(dim, "density_matrix");
  CMat rho = CMat::Zero(dim, dim);
  for (const auto& comp : state.comps) rho += comp.weight * (comp.amp * comp.amp.adjoint());
  return rho;
}

std::pair<FockState, double> post_select(const FockState& state, const PostSelection& sel) {
  if (sel.ancilla_modes.empty() || sel.ancilla_modes.size() != sel.phi.size() ||
      static_cast<int>(sel.ancilla_modes.size()) >= state.m) {
    throw std::invalid_argument("post_select: ancilla set must be a nonempty proper subset");
  }
  const int c = state.cutoff;
  std::vector<bool> is_ancilla(static_cast<size_t>(state.m), false);
  std::vector<const CVec*> phi_of_mode(static_cast<size_t>(state.m), nullptr);
  for (size_t i = 0; i < sel.ancilla_modes.size(); ++i) {
    const int mode = sel.ancilla_modes[i];
    if (mode < 1 || mode > state.m) throw std::out_of_range("post_select: ancilla mode out of range");
    is_ancilla[static_cast<size_t>(mode - 1)] = true;
    phi_of_mode[static_cast<size_t>(mode - 1)] = &sel.phi[i];
  }
  const int m_sys = state.m - static_cast<int>(sel.ancilla_modes.size());
  const Eigen::Index sys_dim = pow_dim(c + 1, m_sys);

  FockState out;
  out.m = m_sys;
  out.cutoff = c;
  double total_p = 0.0;
  for (const auto& comp : state.comps) {
    CVec sys = CVec::Zero(sys_dim);
    for (Eigen::Index idx = 0; idx < comp.amp.size(); ++idx) {
      if (comp.amp(idx) == std::complex<double>(0.0, 0.0)) continue;
      Eigen::Index rest = idx, sys_idx = 0, sys_stride = 1;
      std::complex<double> factor = 1.0;
      for (int j = 0; j < state.m; ++j) {
        const int n = static_cast<int>(rest % (c + 1));
        rest /= c + 1;
        if (is_ancilla[static_cast<size_t>(j)]) {
          factor *= std::conj((*phi_of_mode[static_cast<size_t>(j)])(n));
        } else {
          sys_idx += n * sys_stride;
          sys_stride *= c + 1;
        }
      }
      sys(sys_idx) += factor * comp.amp(idx);
    }
    const double p_i = sys.squaredNorm();
    total_p += comp.weight * p_i;
    if (p_i > 1e-15) out.comps.push_back({comp.weight * p_i, sys / std::sqrt(p_i)});
  }
  if (total_p <= 1e-12) throw std::runtime_error("post_select: success probability vanishes");
  for (auto& comp : out.comps) comp.weight /= total_p;
  return {out, total_p};
}

CMat postselected_witness(const NetworkSpec& network, const PostSelection& sel, int cutoff) {
  if (sel.ancilla_modes.empty() || sel.ancilla_modes.size() != sel.phi.size() ||
      static_cast<int>(sel.ancilla_modes.size()) >= network.m) {
    throw std::invalid_argument("postselected_witness: ancilla set must be a nonempty proper subset");
  }
  const int c = cutoff;
  std::vector<bool> is_ancilla(static_cast<size_t>(network.m), false);
  std::vector<const CVec*> phi_of_mode(static_cast<size_t>(network.m), nullptr);
  for (size_t i = 0; i < sel.ancilla_modes.size(); ++i) {
    const int mode = sel.ancilla_modes[i];
    if (mode < 1 || mode > network.m) {
      throw std::out_of_range("postselected_witness: ancilla mode out of range");
    }
    if (sel.phi[i].size() != c + 1) {
      throw std::invalid_argument("postselected_witness: ancilla state cutoff mismatch");
    }
    is_ancilla[static_cast<size_t>(mode - 1)] = true;
    phi_of_mode[static_cast<size_t>(mode - 1)] = &sel.phi[i];
  }
  const int m_sys = network.m - static_cast<int>(sel.ancilla_modes.size());
  const Eigen::Index full_dim = pow_dim(c + 1, network.m);
  const Eigen::Index sys_dim = pow_dim(c + 1, m_sys);
  check_full_dim(full_dim, "postselected_witness");

  const auto ntilde = back_transformed_number_ops(network, cutoff);
  CMat ntot = CMat::Zero(full_dim, full_dim);
  for (const auto& nt : ntilde) ntot += nt;
  CMat prod = CMat::Identity(full_dim, full_dim);
  double nfact = 1.0;
  for (int k = 1; k <= network.m; ++k) {
    const int nk = network.nvec[static_cast<size_t>(k - 1)];
    prod = prod * pochhammer_matrix(ntilde[static_cast<size_t>(k - 1)], nk - 1);
    for (int f = 2; f <= nk; ++f) nfact *= f;
  }
  const double n_total = static_cast<double>(network.total_photons());
  const CMat kept = (((1.0 + n_total) * CMat::Identity(full_dim, full_dim) - ntot) * prod) / nfact;
  const CMat n_sound = CMat::Identity(full_dim, full_dim) - kept;

  const FockState target = network.gaussian_class() ? prepare_gaussian_target_fock(network, cutoff)
                                                    : prepare_lo_target(network, cutoff);
  const double p = post_select(target, sel).second;

  CMat contraction = CMat::Zero(sys_dim, full_dim);
  for (Eigen::Index f = 0; f < full_dim; ++f) {
    Eigen::Index rest = f, sys_idx = 0, sys_stride = 1;
    std::complex<double> factor = 1.0;
    for (int j = 0; j < network.m; ++j) {
      const int n = static_cast<int>(rest % (c + 1));
      rest /= c + 1;
      if (is_ancilla[static_cast<size_t>(j)]) {
        factor *= std::conj((*phi_of_mode[static_cast<size_t>(j)])(n));
      } else {
        sys_idx += n * sys_stride;
        sys_stride *= c + 1;
      }
    }
    contraction(sys_idx, f) = factor;
  }
  const CMat g = contraction * n_sound * contraction.adjoint();
  return ((p - 1.0) * CMat::Identity(sys_dim, sys_dim) + g) / p;
}

PhotonMismatch photon_mismatch(const FockState& target, const FockState& prep,
                               const NetworkSpec& network) {
  const double f = fidelity_oracle_fock(target, prep);
  if (f >= 1.0 - 1e-9) return {false, 0.0};

  const CMat rho_t = density_matrix(target);
  const CMat rho_p = density_matrix(prep);
  const CMat gap = rho_p - f * rho_t;
  Eigen::SelfAdjointEigenSolver<CMat> es(gap);
  if (es.eigenvalues().minCoeff() < -1e-9) {
    throw std::runtime_error("photon_mismatch: rho_p - F rho_t has a negative part beyond tolerance");
  }
  const CMat witness = witness_operator(network, target.cutoff);
  const double n_perp = ((gap / (1.0 - f)) * witness).trace().real();
  return {true, n_perp};
}

std::vector<double> hermite_functions(int cutoff, double x) {
  std::vector<double> psi(static_cast<size_t>(cutoff) + 1, 0.0);
  const double y = std::sqrt(2.0) * x;
  const double phi0 = std::pow(M_PI, -0.25) * std::exp(-0.5 * y * y);
  psi[0] = phi0;
  if (cutoff >= 1) psi[1] = std::sqrt(2.0) * y * phi0;
  for (int n = 1; n < cutoff; ++n) {
    psi[static_cast<size_t>(n + 1)] = y * std::sqrt(2.0 / (n + 1)) * psi[static_cast<size_t>(n)] -
                                      std::sqrt(static_cast<double>(n) / (n + 1)) * psi[static_cast<size_t>(n - 1)];
  }
  const double scale = std::pow(2.0, 0.25);
  for (auto& v : psi) v *= scale;
  return psi;
}

namespace {

struct SamplerGrid {
  double lo = 0.0;
  double dx = 0.0;
  int points = 0;
  Mat hermite;  // (cutoff+1) x points
};

SamplerGrid build_grid(int cutoff, int points) {
  SamplerGrid grid;
  const double width = 0.5 * std::sqrt(2.0 * cutoff + 1.0);
  const double span = 8.0 * std::max(width, 1.0);
  grid.points = points;
  grid.dx = 2.0 * span / points;
  grid.lo = -span + 0.5 * grid.dx;
  grid.hermite.resize(cutoff + 1, points);
  for (int g = 0; g < points; ++g) {
    const auto psi = hermite_functions(cutoff, grid.lo + g * grid.dx);
    for (int n = 0; n <= cutoff; ++n) grid.hermite(n, g) = psi[static_cast<size_t>(n)];
  }
  return grid;
}

// Density of the current mode (fastest axis of amp) on the grid.
Vec marginal_density(const CVec& amp, int levels, const SamplerGrid& grid) {
  const Eigen::Index rest = amp.size() / levels;
  Mat g_re = Mat::Zero(levels, levels);
  for (Eigen::Index r = 0; r < rest; ++r) {
    const auto block = amp.segment(r * levels, levels);
    // G += block block^dagger, real part only: the density is real.
    for (int i = 0; i < levels; ++i)
      for (int j = 0; j < levels; ++j)
        g_re(i, j) += (block(i) * std::conj(block(j))).real();
  }
  const Mat tmp = g_re * grid.hermite;
  return (grid.hermite.cwiseProduct(tmp)).colwise().sum().transpose();
}

double draw_from_density(const Vec& density, const SamplerGrid& grid, double mass, Rng& rng) {
  const double u = rng.next_double() * mass;
  double cum = 0.0;
  for (int g = 0; g < grid.points; ++g) {
    const double cell = density(g) * grid.dx;
    if (cum + cell >= u || g == grid.points - 1) {
      const double frac = cell > 0.0 ? (u - cum) / cell : 0.5;
      return grid.lo + (g - 0.5 + std::min(std::max(frac, 0.0), 1.0)) * grid.dx;
    }
    cum += cell;
  }
  return grid.lo + (grid.points - 1) * grid.dx;
}

Mat sample_fock_impl(const FockState& state, const std::vector<double>& angles, int count,
                     uint64_t seed, bool parallel) {
  const int m = state.m;
  const int c = state.cutoff;
  const int levels = c + 1;
  if (static_cast<int>(angles.size()) != m) {
    throw std::invalid_argument("sample_homodyne_fock: one angle per mode required");
  }
  if (count < 1) throw std::invalid_argument("sample_homodyne_fock: count must be >= 1");

  // Rotate each component into the measured frame: c_n -> e^{-i theta n} c_n.
  std::vector<CVec> rotated;
  std::vector<double> weights;
  rotated.reserve(state.comps.size());
  for (const auto& comp : state.comps) {
    CVec amp = comp.amp;
    for (int j = 1; j <= m; ++j) {
      const double theta = angles[static_cast<size_t>(j - 1)];
      if (theta == 0.0) continue;
      CMat rot = CMat::Zero(levels, levels);
      for (int n = 0; n < levels; ++n) rot(n, n) = std::exp(std::complex<double>(0.0, -theta * n));
      amp = apply_mode_op(amp, m, c, j, rot);
    }
    rotated.push_back(std::move(amp));
    weights.push_back(comp.weight);
  }

  // Validate grid resolution on each component's first-mode marginal.
  int points = 4096;
  SamplerGrid grid;
  bool ok = false;
  std::vector<Vec> first_density(rotated.size());
  std::vector<double> first_mass(rotated.size());
  for (int attempt = 0; attempt < 3 && !ok; ++attempt, points *= 2) {
    grid = build_grid(c, points);
    ok = true;
    for (size_t i = 0; i < rotated.size(); ++i) {
      first_density[i] = marginal_density(rotated[i], levels, grid);
      first_mass[i] = first_density[i].sum() * grid.dx;
      if (std::abs(first_mass[i] - 1.0) > 1e-6) {
        ok = false;
        break;
      }
    }
  }
  if (!ok) throw std::runtime_error("sample_homodyne_fock: grid mass deficit persists after refinement");

  // Component choice per trial via cumulative weights.
  std::vector<double> cum_weights(weights.size());
  double acc = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    cum_weights[i] = acc;
  }

  Mat out(count, m);
  const auto run_trial = [&](int t) {
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(t)));
    size_t comp_idx = 0;
    if (weights.size() > 1) {
      const double u = rng.next_double() * acc;
      while (comp_idx + 1 < weights.size() && cum_weights[comp_idx] < u) ++comp_idx;
    }
    CVec current = rotated[comp_idx];
    for (int j = 0; j < m; ++j) {
      Vec density;
      double mass;
      if (j == 0) {
        density = first_density[comp_idx];
        mass = first_mass[comp_idx];
      } else {
        density = marginal_density(current, levels, grid);
        mass = density.sum() * grid.dx;
      }
      const double x = draw_from_density(density, grid, mass, rng);
      out(t, j) = x;
      if (j + 1 < m) {
        const auto psi = hermite_functions(c, x);
        const Eigen::Index rest = current.size() / levels;
        CVec next = CVec::Zero(rest);
        for (Eigen::Index r = 0; r < rest; ++r) {
          std::complex<double> s = 0.0;
          for (int n = 0; n < levels; ++n) s += psi[static_cast<size_t>(n)] * current(r * levels + n);
          next(r) = s;
        }
        const double norm = next.norm();
        if (norm < 1e-15) throw std::runtime_error("sample_homodyne_fock: conditioning annihilated the state");
        current = next / norm;
      }
    }
  };

  if (parallel) {
#pragma omp parallel for schedule(static)
    for (int t = 0; t < count; ++t) run_trial(t);
  } else {
    for (int t = 0; t < count; ++t) run_trial(t);
  }
  return out;
}

}  // namespace

Mat sample_homodyne_fock(const FockState& state, const std::vector<double>& angles, int count,
                         uint64_t seed) {
  return sample_fock_impl(state, angles, count, seed, true);
}

Mat sample_homodyne_fock_serial(const FockState& state, const std::vector<double>& angles, int count,
                                uint64_t seed) {
  return sample_fock_impl(state, angles, count, seed, false);
}

std::string FockState::to_json() const {
  json doc;
  doc["m"] = m;
  doc["cutoff"] = cutoff;
  json comps_json = json::array();
  for (const auto& comp : comps) {
    json cj;
    cj["weight"] = comp.weight;
    std::vector<double> re(static_cast<size_t>(comp.amp.size())), im(static_cast<size_t>(comp.amp.size()));
    for (Eigen::Index i = 0; i < comp.amp.size(); ++i) {
      re[static_cast<size_t>(i)] = comp.amp(i).real();
      im[static_cast<size_t>(i)] = comp.amp(i).imag();
    }
    cj["re"] = re;
    cj["im"] = im;
    comps_json.push_back(cj);
  }
  doc["components"] = comps_json;
  return doc.dump();
}

FockState FockState::from_json(const std::string& text) {
  const json doc = json::parse(text);
  FockState st;
  st.m = doc.at("m").get<int>();
  st.cutoff = doc.at("cutoff").get<int>();
  const Eigen::Index dim = st.dim();
  for (const auto& cj : doc.at("components")) {
    FockComponent comp;
    comp.weight = cj.at("weight").get<double>();
    const auto re = cj.at("re").get<std::vector<double>>();
    const auto im = cj.at("im").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(re.size()) != dim || im.size() != re.size()) {
      throw std::invalid_argument("FockState::from_json: amplitude size mismatch");
    }
    comp.amp.resize(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      comp.amp(i) = std::complex<double>(re[static_cast<size_t>(i)], im[static_cast<size_t>(i)]);
    }
    st.comps.push_back(std::move(comp));
  }
  if (st.comps.empty()) throw std::invalid_argument("FockState::from_json: no components");
  return st;
}

}  // namespace cvcert
