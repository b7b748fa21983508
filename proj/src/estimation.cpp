#include "cvcert/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "cvcert/weyl.hpp"

namespace cvcert {

namespace {

using Complex = std::complex<double>;

// Operator polynomial in its symmetrized-ordering symbol: exponent profile
// (q1, p1, q2, p2, ...) -> coefficient. Operator products compose through
// the star product below, an exact identity at polynomial degree.
using Profile = std::vector<int>;
using SymbolPoly = std::map<Profile, Complex>;

double falling(int n, int k) {
  double f = 1.0;
  for (int i = 0; i < k; ++i) f *= n - i;
  return f;
}

double binomial(int n, int k) {
  double b = 1.0;
  for (int i = 0; i < k; ++i) b = b * (n - i) / (i + 1);
  return b;
}

// Single-mode star product of symbols q^a p^b and q^c p^d with [q, p] = i/2:
// sum over k of (i/4)^k / k! * sum_j (-1)^j C(k,j) (a)_{k-j} (b)_j (d)_{k-j}
// (c)_j placed at exponents (a + c - k, b + d - k).
struct ModeTerm {
  int a;
  int b;
  Complex coeff;
};

std::vector<ModeTerm> star_mode(int a, int b, int c, int d) {
  std::vector<ModeTerm> out;
  const int kmax = std::min(a, d) + std::min(b, c);
  Complex prefactor(1.0, 0.0);
  const Complex ih(0.0, 0.25);
  for (int k = 0; k <= kmax; ++k) {
    if (k > 0) prefactor *= ih / static_cast<double>(k);
    double sum = 0.0;
    for (int j = 0; j <= k; ++j) {
      const double sign = (j % 2 == 0) ? 1.0 : -1.0;
      sum += sign * binomial(k, j) * falling(a, k - j) * falling(b, j) * falling(d, k - j) *
             falling(c, j);
    }
    const Complex coeff = prefactor * sum;
    if (std::abs(coeff) > 0.0) out.push_back({a + c - k, b + d - k, coeff});
  }
  return out;
}

void add_term(SymbolPoly& poly, const Profile& profile, const Complex& coeff) {
  auto it = poly.find(profile);
  if (it == poly.end()) {
    poly.emplace(profile, coeff);
  } else {
    it->second += coeff;
  }
}

SymbolPoly star(const SymbolPoly& lhs, const SymbolPoly& rhs, int m) {
  SymbolPoly out;
  for (const auto& [pa, ca] : lhs) {
    for (const auto& [pb, cb] : rhs) {
      std::vector<std::vector<ModeTerm>> per_mode(m);
      for (int i = 0; i < m; ++i) {
        per_mode[i] = star_mode(pa[2 * i], pa[2 * i + 1], pb[2 * i], pb[2 * i + 1]);
      }
      Profile profile(2 * m, 0);
      std::vector<std::size_t> pick(m, 0);
      for (;;) {
        Complex coeff = ca * cb;
        for (int i = 0; i < m; ++i) {
          const ModeTerm& t = per_mode[i][pick[i]];
          profile[2 * i] = t.a;
          profile[2 * i + 1] = t.b;
          coeff *= t.coeff;
        }
        add_term(out, profile, coeff);
        int i = 0;
        while (i < m && ++pick[i] == per_mode[i].size()) pick[i++] = 0;
        if (i == m) break;
      }
    }
  }
  for (auto it = out.begin(); it != out.end();) {
    it = (std::abs(it->second) <= kSparsityThreshold) ? out.erase(it) : std::next(it);
  }
  return out;
}

// Symbol of (r - x)^T Q (r - x) - c0; quadratics have no ordering correction.
SymbolPoly quadratic_form_poly(const Mat& Q, const Vec& x, double c0, int m) {
  SymbolPoly poly;
  const Profile zero(2 * m, 0);
  Vec qx = (Q + Q.transpose()) * x;
  double constant = x.dot(Q * x) - c0;
  add_term(poly, zero, Complex(constant, 0.0));
  for (int k = 0; k < 2 * m; ++k) {
    if (std::abs(qx(k)) > kSparsityThreshold) {
      Profile p = zero;
      p[k] = 1;
      add_term(poly, p, Complex(-qx(k), 0.0));
    }
    for (int l = k; l < 2 * m; ++l) {
      const double w = (k == l) ? Q(k, k) : Q(k, l) + Q(l, k);
      if (std::abs(w) > kSparsityThreshold) {
        Profile p = zero;
        p[k] += 1;
        p[l] += 1;
        add_term(poly, p, Complex(w, 0.0));
      }
    }
  }
  return poly;
}

// Quadratic forms of the pulled-back quadratures: n_tilde_j + 1/2 =
// (r - x)^T Q_j (r - x) with Q_j built from the two mode-j rows of S^{-1}.
Mat pullback_mode_form(const AffineMap& map, int j) {
  const Vec rq = map.Sinv.row(2 * j - 2);
  const Vec rp = map.Sinv.row(2 * j - 1);
  return rq * rq.transpose() + rp * rp.transpose();
}

double nvec_factorial(const std::vector<int>& nvec) {
  double f = 1.0;
  for (int n : nvec) {
    for (int i = 2; i <= n; ++i) f *= i;
  }
  return f;
}

// Product of the per-mode subtraction factors prod_i (n_tilde_k - i) for
// i = 0 .. n_k - 1, as a symbol.
SymbolPoly slot_product_poly(const NetworkSpec& network, const AffineMap& map) {
  const int m = network.m;
  SymbolPoly poly;
  poly.emplace(Profile(2 * m, 0), Complex(1.0, 0.0));
  for (int k = 1; k <= m; ++k) {
    const Mat Q = pullback_mode_form(map, k);
    for (int i = 0; i < network.nvec[k - 1]; ++i) {
      poly = star(poly, quadratic_form_poly(Q, map.x, 0.5 + i, m), m);
    }
  }
  return poly;
}

MomentKey key_from_profile(const Profile& profile) {
  std::vector<int> indices;
  for (int k = 0; k < static_cast<int>(profile.size()); ++k) {
    for (int e = 0; e < profile[k]; ++e) indices.push_back(k + 1);
  }
  if (indices.size() == 1) return MomentKey::first(indices[0]);
  if (indices.size() % 2 != 0) {
    throw std::invalid_argument("moment key needs even or single-index monomial, got degree " +
                                std::to_string(indices.size()));
  }
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < indices.size(); i += 2) {
    pairs.push_back({indices[i], indices[i + 1]});
  }
  return MomentKey::product(std::move(pairs));
}

WitnessExpansion expansion_from_poly(const SymbolPoly& poly, int m) {
  WitnessExpansion exp;
  const Profile zero(2 * m, 0);
  for (const auto& [profile, coeff] : poly) {
    if (std::abs(coeff.imag()) > 1e-9) {
      throw std::logic_error("witness symbol kept an imaginary coefficient " +
                             std::to_string(coeff.imag()));
    }
    if (std::abs(coeff.real()) <= kSparsityThreshold) continue;
    if (profile == zero) {
      exp.constant = coeff.real();
    } else {
      exp.terms.push_back({key_from_profile(profile), coeff.real()});
    }
  }
  std::sort(exp.terms.begin(), exp.terms.end(),
            [](const WitnessTerm& a, const WitnessTerm& b) { return a.key < b.key; });
  return exp;
}

SymbolPoly witness_poly(const NetworkSpec& network) {
  const AffineMap map = compose_symplectic(network.transform);
  const int m = network.m;
  const int n = network.total_photons();
  const Mat qtot = map.Sinv.transpose() * map.Sinv;
  SymbolPoly lead = quadratic_form_poly(qtot, map.x, 0.5 * m + n, m);
  SymbolPoly poly = star(lead, slot_product_poly(network, map), m);
  const double nfact = nvec_factorial(network.nvec);
  for (auto& [profile, coeff] : poly) coeff /= nfact;
  return poly;
}

// <phi| W(q^a p^b) |phi> on a padded truncation so every retained entry of
// the monomial matrix is exact.
double ancilla_moment(const CVec& phi, int a, int b) {
  const int levels = static_cast<int>(phi.size());
  const int cutoff = levels - 1 + a + b + 2;
  CVec padded = CVec::Zero(cutoff + 1);
  padded.head(levels) = phi;
  const double norm = padded.norm();
  if (norm <= 1e-12) throw std::invalid_argument("ancilla state has zero norm");
  padded /= norm;
  const CMat w = weyl_monomial(a, b, cutoff);
  const Complex val = padded.adjoint() * (w * padded);
  return val.real();
}

void validate_postselection(const NetworkSpec& network, const PostselectedTarget& ps) {
  const auto& modes = ps.sel.ancilla_modes;
  if (modes.empty()) return;
  if (ps.sel.phi.size() != modes.size()) {
    throw std::invalid_argument("post-selection needs one ancilla state per ancilla mode");
  }
  std::vector<int> seen;
  for (int mode : modes) {
    if (mode < 1 || mode > network.m) {
      throw std::invalid_argument("ancilla mode out of range: " + std::to_string(mode));
    }
    if (std::count(seen.begin(), seen.end(), mode) != 0) {
      throw std::invalid_argument("duplicate ancilla mode: " + std::to_string(mode));
    }
    seen.push_back(mode);
  }
  if (static_cast<int>(modes.size()) >= network.m) {
    throw std::invalid_argument("post-selection must keep at least one system mode");
  }
  if (ps.probability <= 1e-12) {
    throw std::invalid_argument("post-selection probability below threshold");
  }
}

}  // namespace

const MomentEstimate& MomentEstimateStore::at(const MomentKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw std::out_of_range("moment estimate missing for key " + key.str());
  }
  return it->second;
}

MomentEstimateStore exact_store_fock(const FockState& state, const std::vector<MomentKey>& keys) {
  MomentEstimateStore store;
  for (const MomentKey& key : keys) {
    store.set(key, {moment_tensor_exact(state, key), 1, 0.0, false});
  }
  return store;
}

MomentEstimateStore exact_store_gaussian(const GaussianState& state,
                                         const std::vector<MomentKey>& keys) {
  MomentEstimateStore store;
  for (const MomentKey& key : keys) {
    double value = 0.0;
    if (key.first_moment()) {
      value = state.mean(key.single - 1);
    } else if (key.order() == 1) {
      const auto [k, l] = key.pairs[0];
      value = state.cov(k - 1, l - 1) + state.mean(k - 1) * state.mean(l - 1);
    } else {
      throw std::invalid_argument("exact Gaussian store serves orders <= 2, got " + key.str());
    }
    store.set(key, {value, 1, 0.0, false});
  }
  return store;
}

WitnessExpansion witness_expansion(const NetworkSpec& network) {
  return expansion_from_poly(witness_poly(network), network.m);
}

WitnessExpansion kept_weight_expansion(const NetworkSpec& network) {
  const AffineMap map = compose_symplectic(network.transform);
  SymbolPoly poly = slot_product_poly(network, map);
  const double nfact = nvec_factorial(network.nvec);
  for (auto& [profile, coeff] : poly) coeff /= nfact;
  return expansion_from_poly(poly, network.m);
}

WitnessExpansion postselected_expansion(const NetworkSpec& network, const PostselectedTarget& ps) {
  validate_postselection(network, ps);
  if (ps.sel.ancilla_modes.empty()) {
    throw std::invalid_argument("post-selected expansion needs a nonempty ancilla list");
  }
  const AffineMap map = compose_symplectic(network.transform);
  const int m = network.m;
  const int n = network.total_photons();
  const Mat qtot = map.Sinv.transpose() * map.Sinv;

  // Kept-bound numerator ((1 + n + m/2) - r_tilde^2) * subtraction product,
  // whose expectation over nvec! equals P * F_S.
  SymbolPoly lead = quadratic_form_poly(-qtot, map.x, -(1.0 + n + 0.5 * m), m);
  SymbolPoly poly = star(lead, slot_product_poly(network, map), m);
  const double nfact = nvec_factorial(network.nvec);

  std::vector<int> system_modes;
  std::vector<int> ancilla_slot(m + 1, -1);
  for (std::size_t i = 0; i < ps.sel.ancilla_modes.size(); ++i) {
    ancilla_slot[ps.sel.ancilla_modes[i]] = static_cast<int>(i);
  }
  for (int mode = 1; mode <= m; ++mode) {
    if (ancilla_slot[mode] < 0) system_modes.push_back(mode);
  }
  const int m_sys = static_cast<int>(system_modes.size());

  SymbolPoly contracted;
  for (const auto& [profile, coeff] : poly) {
    Complex folded = coeff;
    Profile sys_profile(2 * m_sys, 0);
    int sys_index = 0;
    for (int mode = 1; mode <= m; ++mode) {
      const int a = profile[2 * mode - 2];
      const int b = profile[2 * mode - 1];
      const int slot = ancilla_slot[mode];
      if (slot >= 0) {
        if (a + b > 0) folded *= ancilla_moment(ps.sel.phi[slot], a, b);
      } else {
        sys_profile[2 * sys_index] = a;
        sys_profile[2 * sys_index + 1] = b;
        ++sys_index;
      }
    }
    if (std::abs(folded) <= kSparsityThreshold) continue;
    add_term(contracted, sys_profile, folded / (nfact * ps.probability));
  }
  return expansion_from_poly(contracted, m_sys);
}

std::vector<MomentKey> relevant_moments_gaussian(const NetworkSpec& network) {
  if (!network.gaussian_class()) {
    throw std::invalid_argument("Gaussian moment list needs a photon-free network");
  }
  const int m = network.m;
  const Mat d = network.transform.D();
  const Mat minv = network.transform.O * d.cwiseProduct(d).inverse() * network.transform.O.transpose();
  std::vector<MomentKey> keys;
  for (int k = 1; k <= 2 * m; ++k) keys.push_back(MomentKey::first(k));
  for (int k = 1; k <= 2 * m; ++k) {
    for (int l = k; l <= 2 * m; ++l) {
      if (std::abs(minv(k - 1, l - 1)) > kSparsityThreshold) {
        keys.push_back(MomentKey::product({{k, l}}));
      }
    }
  }
  return keys;
}

std::vector<MomentKey> relevant_moments_lo(const NetworkSpec& network) {
  if (network.total_photons() == 0) return relevant_moments_gaussian(network);
  std::vector<MomentKey> keys;
  for (const WitnessTerm& term : witness_expansion(network).terms) keys.push_back(term.key);
  return keys;
}

std::vector<MomentKey> relevant_moments_postselected(const NetworkSpec& network,
                                                     const PostselectedTarget& ps) {
  std::vector<MomentKey> keys;
  for (const WitnessTerm& term : postselected_expansion(network, ps).terms) {
    keys.push_back(term.key);
  }
  return keys;
}

long long lo_relevant_bound(int m, int n, int d) {
  long long bound = 1 + 2 * m;
  for (int i = 0; i < n; ++i) bound *= 4LL * d * d + 1;
  return bound;
}

double recombine_F0(const MomentEstimateStore& store, const NetworkSpec& network) {
  if (!network.gaussian_class()) {
    throw std::invalid_argument("closed-form recombination needs a photon-free network");
  }
  const int m = network.m;
  const Mat d = network.transform.D();
  const Mat minv = network.transform.O * d.cwiseProduct(d).inverse() * network.transform.O.transpose();
  const Vec& x = network.transform.x;
  Vec gamma(2 * m);
  for (int k = 1; k <= 2 * m; ++k) gamma(k - 1) = store.value(MomentKey::first(k));
  double trace = 0.0;
  for (int k = 1; k <= 2 * m; ++k) {
    for (int l = k; l <= 2 * m; ++l) {
      const double w = minv(k - 1, l - 1);
      if (std::abs(w) <= kSparsityThreshold) continue;
      const double entry = store.value(MomentKey::product({{k, l}}));
      trace += (k == l ? 1.0 : 2.0) * w * entry;
    }
  }
  return 1.0 + 0.5 * m + x.dot(minv * (2.0 * gamma - x)) - trace;
}

double recombine_Fn(const MomentEstimateStore& store, const NetworkSpec& network) {
  const WitnessExpansion exp = witness_expansion(network);
  double witness = exp.constant;
  for (const WitnessTerm& term : exp.terms) witness += term.coeff * store.value(term.key);
  return 1.0 - witness;
}

double recombine_FS(const MomentEstimateStore& store, const NetworkSpec& network,
                    const PostselectedTarget& ps) {
  if (ps.sel.ancilla_modes.empty()) {
    if (std::abs(ps.probability - 1.0) > 1e-9) {
      throw std::invalid_argument("empty ancilla list needs unit success probability");
    }
    return recombine_Fn(store, network);
  }
  const WitnessExpansion exp = postselected_expansion(network, ps);
  double bound = exp.constant;
  for (const WitnessTerm& term : exp.terms) bound += term.coeff * store.value(term.key);
  return bound;
}

const MomentRecipe& SettingPlan::recipe_for(const MomentKey& key) const {
  for (const MomentRecipe& recipe : recipes) {
    if (recipe.key == key) return recipe;
  }
  throw std::out_of_range("no recipe planned for key " + key.str());
}

std::vector<MomentKey> SettingPlan::served_keys(int setting) const {
  std::vector<MomentKey> keys;
  for (const MomentRecipe& recipe : recipes) {
    for (const EstimatorTerm& term : recipe.terms) {
      if (term.setting == setting) {
        keys.push_back(recipe.key);
        break;
      }
    }
  }
  return keys;
}

namespace {

constexpr double kHalfPi = 1.5707963267948966;
constexpr double kQuarterPi = 0.7853981633974483;

std::vector<int> powers_from_profile(const std::vector<std::pair<int, int>>& profile) {
  std::vector<int> powers(profile.size(), 0);
  for (std::size_t i = 0; i < profile.size(); ++i) {
    powers[i] = profile[i].first + profile[i].second;
  }
  return powers;
}

// Greedy coverage builder: each key's per-mode monomial pins angles (mixed
// monomials through their rotated-quadrature expansion); compatible pin sets
// merge into existing settings, seeded with all-q and all-p.
SettingPlan build_coverage_plan(const std::vector<MomentKey>& keys, int m) {
  std::vector<std::map<int, double>> pools;
  {
    std::map<int, double> all_q;
    std::map<int, double> all_p;
    for (int mode = 1; mode <= m; ++mode) {
      all_q[mode] = 0.0;
      all_p[mode] = kHalfPi;
    }
    pools.push_back(all_q);
    pools.push_back(all_p);
  }
  SettingPlan plan;
  plan.m = m;
  for (const MomentKey& key : keys) {
    const auto profile = weyl_profile(key, m);
    std::vector<int> active;
    std::vector<std::vector<WeylTerm>> options;
    for (int mode = 1; mode <= m; ++mode) {
      const auto [a, b] = profile[mode - 1];
      if (a + b == 0) continue;
      active.push_back(mode);
      if (b == 0) {
        options.push_back({{0.0, 1.0}});
      } else if (a == 0) {
        options.push_back({{kHalfPi, 1.0}});
      } else {
        options.push_back(weyl_expansion(a, b));
      }
    }
    MomentRecipe recipe;
    recipe.key = key;
    recipe.powers = powers_from_profile(profile);
    std::vector<std::size_t> pick(active.size(), 0);
    for (;;) {
      std::map<int, double> pins;
      double coeff = 1.0;
      for (std::size_t i = 0; i < active.size(); ++i) {
        const WeylTerm& opt = options[i][pick[i]];
        pins[active[i]] = opt.angle;
        coeff *= opt.coeff;
      }
      int chosen = -1;
      for (std::size_t s = 0; s < pools.size(); ++s) {
        bool compatible = true;
        for (const auto& [mode, angle] : pins) {
          auto it = pools[s].find(mode);
          if (it != pools[s].end() && std::abs(it->second - angle) > 1e-12) {
            compatible = false;
            break;
          }
        }
        if (compatible) {
          chosen = static_cast<int>(s);
          break;
        }
      }
      if (chosen < 0) {
        pools.push_back({});
        chosen = static_cast<int>(pools.size()) - 1;
      }
      for (const auto& [mode, angle] : pins) pools[chosen][mode] = angle;
      recipe.terms.push_back({chosen, coeff});
      std::size_t i = 0;
      while (i < active.size() && ++pick[i] == options[i].size()) pick[i++] = 0;
      if (i == active.size() || active.empty()) break;
    }
    plan.recipes.push_back(std::move(recipe));
  }

  // Compact to the settings some term references, keeping creation order.
  std::vector<int> remap(pools.size(), -1);
  for (const MomentRecipe& recipe : plan.recipes) {
    for (const EstimatorTerm& term : recipe.terms) remap[term.setting] = 0;
  }
  int next = 0;
  for (std::size_t s = 0; s < pools.size(); ++s) {
    if (remap[s] == 0) {
      remap[s] = next++;
      HomodyneSetting setting;
      setting.angles.assign(m, 0.0);
      for (const auto& [mode, angle] : pools[s]) setting.angles[mode - 1] = angle;
      plan.settings.push_back(std::move(setting));
    }
  }
  for (MomentRecipe& recipe : plan.recipes) {
    for (EstimatorTerm& term : recipe.terms) term.setting = remap[term.setting];
  }
  return plan;
}

}  // namespace

SettingPlan settings_gaussian(int m) {
  SettingPlan plan;
  plan.m = m;
  plan.settings.resize(m + 3);
  plan.settings[0].angles.assign(m, 0.0);
  plan.settings[1].angles.assign(m, kHalfPi);
  for (int j = 1; j <= m; ++j) {
    plan.settings[1 + j].angles.assign(m, 0.0);
    plan.settings[1 + j].angles[j - 1] = kHalfPi;
  }
  plan.settings[m + 2].angles.assign(m, kQuarterPi);

  std::vector<MomentKey> keys;
  for (int k = 1; k <= 2 * m; ++k) keys.push_back(MomentKey::first(k));
  for (int k = 1; k <= 2 * m; ++k) {
    for (int l = k; l <= 2 * m; ++l) keys.push_back(MomentKey::product({{k, l}}));
  }
  for (const MomentKey& key : keys) {
    MomentRecipe recipe;
    recipe.key = key;
    recipe.powers.assign(m, 0);
    if (key.first_moment()) {
      const int mode = (key.single + 1) / 2;
      recipe.powers[mode - 1] = 1;
      recipe.terms.push_back({key.single % 2 == 1 ? 0 : 1, 1.0});
    } else {
      const auto [k, l] = key.pairs[0];
      const int mk = (k + 1) / 2;
      const int ml = (l + 1) / 2;
      const bool qk = k % 2 == 1;
      const bool ql = l % 2 == 1;
      recipe.powers[mk - 1] += 1;
      recipe.powers[ml - 1] += 1;
      if (mk == ml && qk != ql) {
        // W(q p) = r_{pi/4}^2 - q^2 / 2 - p^2 / 2 on the shared mode.
        recipe.terms.push_back({m + 2, 1.0});
        recipe.terms.push_back({0, -0.5});
        recipe.terms.push_back({1, -0.5});
      } else if (qk && ql) {
        recipe.terms.push_back({0, 1.0});
      } else if (!qk && !ql) {
        recipe.terms.push_back({1, 1.0});
      } else {
        const int pmode = qk ? ml : mk;
        recipe.terms.push_back({1 + pmode, 1.0});
      }
    }
    plan.recipes.push_back(std::move(recipe));
  }
  return plan;
}

SettingPlan settings_lo(const NetworkSpec& network) {
  return build_coverage_plan(relevant_moments_lo(network), network.m);
}

SettingPlan settings_postselected(const NetworkSpec& network, const PostselectedTarget& ps) {
  const int m_sys = network.m - static_cast<int>(ps.sel.ancilla_modes.size());
  return build_coverage_plan(relevant_moments_postselected(network, ps), m_sys);
}

MomentEstimateStore accumulate(const std::vector<OutcomeRow>& rows, const SettingPlan& plan,
                               const std::vector<MeasurementBatch>& batches) {
  const int m = plan.m;
  for (const MeasurementBatch& batch : batches) {
    if (batch.recipe < 0 || batch.recipe >= static_cast<int>(plan.recipes.size())) {
      throw std::invalid_argument("batch references an unknown recipe");
    }
    const auto& terms = plan.recipes[batch.recipe].terms;
    if (batch.term < 0 || batch.term >= static_cast<int>(terms.size())) {
      throw std::invalid_argument("batch references an unknown estimator term");
    }
  }

  // Per batch, per trial: product of powered outcomes across modes.
  struct TrialAccum {
    double product = 1.0;
    int seen = 0;
  };
  std::vector<std::map<long long, TrialAccum>> trials(batches.size());
  std::vector<int> needed(batches.size(), 0);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& powers = plan.recipes[batches[b].recipe].powers;
    for (int p : powers) needed[b] += p > 0 ? 1 : 0;
  }
  for (const OutcomeRow& row : rows) {
    if (row.setting_id < 0 || row.setting_id >= static_cast<int>(batches.size())) {
      throw std::invalid_argument("outcome row references an unknown batch");
    }
    if (row.mode < 1 || row.mode > m) {
      throw std::invalid_argument("outcome row mode out of range");
    }
    const MeasurementBatch& batch = batches[row.setting_id];
    const MomentRecipe& recipe = plan.recipes[batch.recipe];
    const HomodyneSetting& setting = plan.settings[recipe.terms[batch.term].setting];
    if (std::abs(setting.angles[row.mode - 1] - row.angle) > 1e-9) {
      throw std::invalid_argument("outcome row angle disagrees with its setting");
    }
    const int power = recipe.powers[row.mode - 1];
    if (power == 0) continue;
    TrialAccum& acc = trials[row.setting_id][row.trial];
    acc.product *= std::pow(row.outcome, power);
    acc.seen += 1;
  }

  struct BatchStat {
    double mean = 0.0;
    double variance = 0.0;
    long long count = 0;
  };
  std::vector<BatchStat> stats(batches.size());
  for (std::size_t b = 0; b < batches.size(); ++b) {
    double sum = 0.0;
    for (const auto& [trial, acc] : trials[b]) {
      if (acc.seen != needed[b]) {
        throw std::invalid_argument("trial " + std::to_string(trial) +
                                    " is missing rows for measured modes");
      }
      sum += acc.product;
    }
    const long long n = static_cast<long long>(trials[b].size());
    if (batches[b].count != n) {
      throw std::invalid_argument("batch trial count disagrees with its rows");
    }
    stats[b].count = n;
    if (n == 0) continue;
    stats[b].mean = sum / static_cast<double>(n);
    if (n > 1) {
      double ss = 0.0;
      for (const auto& [trial, acc] : trials[b]) {
        const double d = acc.product - stats[b].mean;
        ss += d * d;
      }
      stats[b].variance = ss / static_cast<double>(n - 1);
    }
  }

  // Recipe estimates need one measured batch per estimator term.
  MomentEstimateStore store;
  for (std::size_t r = 0; r < plan.recipes.size(); ++r) {
    const MomentRecipe& recipe = plan.recipes[r];
    std::vector<int> batch_of(recipe.terms.size(), -1);
    bool complete = true;
    bool any = false;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      if (batches[b].recipe != static_cast<int>(r)) continue;
      any = true;
      if (batch_of[batches[b].term] != -1) {
        throw std::invalid_argument("estimator term measured by more than one batch");
      }
      batch_of[batches[b].term] = static_cast<int>(b);
    }
    if (!any) continue;
    for (int b : batch_of) complete = complete && b >= 0 && stats[b].count > 0;
    if (!complete) continue;
    MomentEstimate est;
    est.derived = recipe.derived();
    est.count = stats[batch_of[0]].count;
    for (std::size_t t = 0; t < recipe.terms.size(); ++t) {
      const BatchStat& stat = stats[batch_of[t]];
      est.mean += recipe.terms[t].coeff * stat.mean;
      est.variance += recipe.terms[t].coeff * recipe.terms[t].coeff * stat.variance /
                      static_cast<double>(stat.count);
      est.count = std::min(est.count, stat.count);
    }
    store.set(recipe.key, est);
  }
  return store;
}

}  // namespace cvcert
