#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "cvcert/estimation.hpp"
#include "cvcert/fock.hpp"
#include "cvcert/gaussian.hpp"
#include "cvcert/rng.hpp"

using namespace cvcert;

namespace {

NetworkSpec identity_network(int m, std::vector<int> nvec) {
  NetworkSpec net;
  net.m = m;
  net.nvec = std::move(nvec);
  net.transform = SymplecticTransform::identity(m);
  return net;
}

NetworkSpec beamsplitter_network(double theta, std::vector<int> nvec) {
  NetworkSpec net = identity_network(2, std::move(nvec));
  net.transform.O = beamsplitter(2, 1, 2, theta);
  return net;
}

NetworkSpec random_lo_network(int m, std::vector<int> nvec, uint64_t seed) {
  NetworkSpec net = identity_network(m, std::move(nvec));
  net.transform = random_passive(m, 3, seed);
  return net;
}

NetworkSpec random_lpsg_network(int m, double s_max, double x_scale, uint64_t seed) {
  NetworkSpec net = identity_network(m, std::vector<int>(static_cast<size_t>(m), 0));
  net.transform = random_symplectic(m, 2, s_max, seed);
  Rng rng(Rng::derive(seed, 77));
  for (int k = 0; k < 2 * m; ++k) net.transform.x(k) = x_scale * rng.next_normal();
  return net;
}

double expansion_value(const WitnessExpansion& exp, const MomentEstimateStore& store) {
  double value = exp.constant;
  for (const WitnessTerm& term : exp.terms) value += term.coeff * store.value(term.key);
  return value;
}

std::map<MomentKey, double> coeff_map(const WitnessExpansion& exp) {
  std::map<MomentKey, double> out;
  for (const WitnessTerm& term : exp.terms) out[term.key] = term.coeff;
  return out;
}

bool contains_key(const std::vector<MomentKey>& keys, const MomentKey& key) {
  return std::find(keys.begin(), keys.end(), key) != keys.end();
}

// Rows for one batch from the joint homodyne sample matrix of its setting.
void append_rows(std::vector<OutcomeRow>& rows, int batch_id, const HomodyneSetting& setting,
                 const Mat& samples) {
  for (Eigen::Index t = 0; t < samples.rows(); ++t) {
    for (Eigen::Index j = 0; j < samples.cols(); ++j) {
      rows.push_back({batch_id, static_cast<long long>(t), static_cast<int>(j + 1),
                      setting.angles[static_cast<size_t>(j)], samples(t, j)});
    }
  }
}

}  // namespace

TEST_CASE("witness expansion matches the hand-expanded single-photon case") {
  const NetworkSpec net = identity_network(1, {1});
  const WitnessExpansion exp = witness_expansion(net);
  CHECK(exp.constant == doctest::Approx(0.5).epsilon(1e-12));
  const auto coeffs = coeff_map(exp);
  CHECK(coeffs.size() == 5);
  CHECK(coeffs.at(MomentKey::product({{1, 1}})) == doctest::Approx(-2.0));
  CHECK(coeffs.at(MomentKey::product({{2, 2}})) == doctest::Approx(-2.0));
  CHECK(coeffs.at(MomentKey::product({{1, 1}, {1, 1}})) == doctest::Approx(1.0));
  CHECK(coeffs.at(MomentKey::product({{1, 1}, {2, 2}})) == doctest::Approx(2.0));
  CHECK(coeffs.at(MomentKey::product({{2, 2}, {2, 2}})) == doctest::Approx(1.0));

  // The kept weight for one photon is the back-transformed number operator.
  const WitnessExpansion kept = kept_weight_expansion(net);
  CHECK(kept.constant == doctest::Approx(-0.5));
  const auto kept_coeffs = coeff_map(kept);
  CHECK(kept_coeffs.size() == 2);
  CHECK(kept_coeffs.at(MomentKey::product({{1, 1}})) == doctest::Approx(1.0));
  CHECK(kept_coeffs.at(MomentKey::product({{2, 2}})) == doctest::Approx(1.0));
}

TEST_CASE("recombination from exact moments equals the operator expectation") {
  int checked = 0;
  for (uint64_t seed = 1; seed <= 9; ++seed) {
    std::vector<NetworkSpec> nets;
    nets.push_back(identity_network(1, {1}));
    nets.push_back(beamsplitter_network(0.3 + 0.2 * static_cast<double>(seed), {1, 0}));
    nets.push_back(beamsplitter_network(0.78539816339744831, {1, 1}));
    nets.push_back(random_lo_network(2, {1, 1}, seed));
    if (seed <= 4) nets.push_back(random_lo_network(3, {1, 0, 0}, seed + 40));
    if (seed <= 2) nets.push_back(random_lo_network(3, {1, 1, 0}, seed + 80));
    for (const NetworkSpec& net : nets) {
      const int cutoff = net.m >= 3 ? 6 : 8;
      const FockState target = prepare_lo_target(net, cutoff);

      FockState mix = target;
      NetworkSpec other = net;
      other.transform.O = (net.m == 2 ? beamsplitter(net.m, 1, 2, 0.41)
                                      : phase_shifter(net.m, 1, 0.9)) *
                          net.transform.O;
      mix.comps[0].weight = 0.8;
      mix.comps.push_back({0.2, prepare_lo_target(other, cutoff).comps[0].amp});

      FockState shifted = FockState::vacuum(net.m, cutoff);
      std::vector<int> lifted = net.nvec;
      lifted[static_cast<size_t>(seed) % lifted.size()] += 1;
      shifted.comps[0].amp = prepare_lo_target(identity_network(net.m, lifted), cutoff)
                                 .comps[0]
                                 .amp;

      for (const FockState& prep : {target, mix, shifted}) {
        const auto keys = relevant_moments_lo(net);
        const MomentEstimateStore store = exact_store_fock(prep, keys);
        const double via_moments = recombine_Fn(store, net);
        const double via_operator = fidelity_bound_oracle_fock(net, prep);
        CHECK(std::abs(via_moments - via_operator) <= 1e-9);
        ++checked;
      }
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("closed-form recombination reproduces the Gaussian photon count") {
  SUBCASE("frozen examples") {
    const NetworkSpec vac = NetworkSpec::vacuum(1);
    const auto keys = relevant_moments_gaussian(vac);
    CHECK(recombine_F0(exact_store_gaussian(GaussianState::vacuum(1), keys), vac) ==
          doctest::Approx(1.0).epsilon(1e-12));

    GaussianState squeezed = GaussianState::vacuum(1);
    squeezed.cov << 1.0, 0.0, 0.0, 1.0 / 16.0;
    CHECK(recombine_F0(exact_store_gaussian(squeezed, keys), vac) ==
          doctest::Approx(0.4375).epsilon(1e-12));

    NetworkSpec displaced = NetworkSpec::vacuum(1);
    displaced.transform.x << 1.0, 0.0;
    GaussianState prep = GaussianState::vacuum(1);
    prep.mean << 1.0, 0.0;
    const auto dkeys = relevant_moments_gaussian(displaced);
    CHECK(recombine_F0(exact_store_gaussian(prep, dkeys), displaced) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("dual recombination paths agree on random networks") {
    int cases = 0;
    for (uint64_t seed = 1; seed <= 18; ++seed) {
      const int m = 1 + static_cast<int>(seed % 3);
      const NetworkSpec net = random_lpsg_network(m, 1.6, 0.7, seed);
      const GaussianState target = prepare_gaussian_target(net);
      std::vector<GaussianState> preps = {
          target,
          noise_channel(target, NoiseKind::loss, 0.85),
          noise_channel(target, NoiseKind::thermal, 0.3),
          prepare_gaussian_target(random_lpsg_network(m, 1.3, 0.4, seed + 100)),
      };
      const auto keys = relevant_moments_gaussian(net);
      for (const GaussianState& prep : preps) {
        const MomentEstimateStore store = exact_store_gaussian(prep, keys);
        const double f0 = recombine_F0(store, net);
        CHECK(std::abs(f0 - (1.0 - mean_total_photons(prep, net))) <= 1e-9);
        CHECK(std::abs(f0 - recombine_Fn(store, net)) <= 1e-9);
        ++cases;
      }
    }
    CHECK(cases >= 50);
  }
}

TEST_CASE("the literal witness stays literal on the below-photon probe") {
  const NetworkSpec net = identity_network(1, {1});
  const FockState prep_vacuum = FockState::vacuum(1, 8);
  const auto keys = relevant_moments_lo(net);
  const MomentEstimateStore store = exact_store_fock(prep_vacuum, keys);
  CHECK(recombine_Fn(store, net) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fidelity_oracle_fock(prepare_lo_target(net, 8), prep_vacuum) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(expansion_value(kept_weight_expansion(net), store) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("post-selected recombination matches the operator route") {
  const int cutoff = 8;
  const NetworkSpec net = beamsplitter_network(0.78539816339744831, {1, 0});
  PostselectedTarget ps;
  ps.sel.ancilla_modes = {2};
  ps.sel.phi = {CVec::Zero(cutoff + 1)};
  ps.sel.phi[0](0) = 1.0;

  const FockState target = prepare_lo_target(net, cutoff);
  const auto [herald_target, p_target] = post_select(target, ps.sel);
  CHECK(p_target == doctest::Approx(0.5).epsilon(1e-12));
  ps.probability = p_target;

  const CMat n_s = postselected_witness(net, ps.sel, cutoff);
  const auto keys = relevant_moments_postselected(net, ps);

  SUBCASE("heralded target, vacuum prep, and detuned preps") {
    std::vector<FockState> heralded = {herald_target,
                                       post_select(FockState::vacuum(2, cutoff), ps.sel).first};
    for (double theta : {0.3, 1.1}) {
      const FockState other = prepare_lo_target(beamsplitter_network(theta, {1, 0}), cutoff);
      heralded.push_back(post_select(other, ps.sel).first);
    }
    for (const FockState& sys : heralded) {
      const MomentEstimateStore store = exact_store_fock(sys, keys);
      const double via_moments = recombine_FS(store, net, ps);
      const double via_operator = 1.0 - expectation(sys, n_s);
      CHECK(std::abs(via_moments - via_operator) <= 1e-9);
    }
    const MomentEstimateStore honest = exact_store_fock(herald_target, keys);
    CHECK(recombine_FS(honest, net, ps) == doctest::Approx(1.0).epsilon(1e-9));
    const MomentEstimateStore empty_sys =
        exact_store_fock(post_select(FockState::vacuum(2, cutoff), ps.sel).first, keys);
    CHECK(recombine_FS(empty_sys, net, ps) == doctest::Approx(0.0).epsilon(1e-9));
  }

  SUBCASE("two-photon interference fixture") {
    const NetworkSpec hom = beamsplitter_network(0.78539816339744831, {1, 1});
    PostselectedTarget hps = ps;
    const FockState hom_target = prepare_lo_target(hom, cutoff);
    const auto [hom_sys, hom_p] = post_select(hom_target, hps.sel);
    hps.probability = hom_p;
    CHECK(hom_p == doctest::Approx(0.5).epsilon(1e-12));
    const auto hkeys = relevant_moments_postselected(hom, hps);
    const MomentEstimateStore store = exact_store_fock(hom_sys, hkeys);
    const double via_moments = recombine_FS(store, hom, hps);
    const CMat hom_ns = postselected_witness(hom, hps.sel, cutoff);
    CHECK(std::abs(via_moments - (1.0 - expectation(hom_sys, hom_ns))) <= 1e-9);
    CHECK(via_moments == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("single-photon ancilla state") {
    const NetworkSpec tilted = beamsplitter_network(1.0471975511965976, {1, 0});
    PostselectedTarget tps;
    tps.sel.ancilla_modes = {2};
    tps.sel.phi = {CVec::Zero(cutoff + 1)};
    tps.sel.phi[0](1) = 1.0;
    const FockState ttarget = prepare_lo_target(tilted, cutoff);
    const auto [tsys, tp] = post_select(ttarget, tps.sel);
    tps.probability = tp;
    CHECK(tp == doctest::Approx(0.75).epsilon(1e-12));
    const auto tkeys = relevant_moments_postselected(tilted, tps);
    const MomentEstimateStore store = exact_store_fock(tsys, tkeys);
    const CMat tns = postselected_witness(tilted, tps.sel, cutoff);
    CHECK(std::abs(recombine_FS(store, tilted, tps) - (1.0 - expectation(tsys, tns))) <= 1e-9);
    CHECK(recombine_FS(store, tilted, tps) == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("empty ancilla list reduces to the plain recombination") {
    const NetworkSpec plain = identity_network(1, {1});
    const FockState prep = prepare_lo_target(plain, cutoff);
    const MomentEstimateStore store = exact_store_fock(prep, relevant_moments_lo(plain));
    PostselectedTarget none;
    none.probability = 1.0;
    CHECK(recombine_FS(store, plain, none) == recombine_Fn(store, plain));
  }
}

TEST_CASE("relevant moment lists follow the network sparsity") {
  SUBCASE("identity Gaussian network") {
    const NetworkSpec net = NetworkSpec::vacuum(2);
    const auto keys = relevant_moments_gaussian(net);
    CHECK(keys.size() == 8);
    for (int k = 1; k <= 4; ++k) {
      CHECK(contains_key(keys, MomentKey::first(k)));
      CHECK(contains_key(keys, MomentKey::product({{k, k}})));
    }
    CHECK_FALSE(contains_key(keys, MomentKey::product({{1, 2}})));
  }

  SUBCASE("single-mode squeezer keeps diagonal weights") {
    NetworkSpec net = NetworkSpec::vacuum(1);
    net.transform.s << 2.0;
    const auto keys = relevant_moments_gaussian(net);
    CHECK(keys.size() == 4);
    CHECK(contains_key(keys, MomentKey::product({{1, 1}})));
    CHECK(contains_key(keys, MomentKey::product({{2, 2}})));
    // Recombination sees the weights 1/4 and 4 through the stored moments.
    GaussianState probe = GaussianState::vacuum(1);
    probe.cov << 0.25 + 1.0, 0.0, 0.0, 0.25;
    const double drop_q = recombine_F0(exact_store_gaussian(probe, keys), net);
    probe.cov << 0.25, 0.0, 0.0, 0.25 + 1.0;
    const double drop_p = recombine_F0(exact_store_gaussian(probe, keys), net);
    const double base =
        recombine_F0(exact_store_gaussian(GaussianState::vacuum(1), keys), net);
    CHECK(base - drop_q == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(base - drop_p == doctest::Approx(4.0).epsilon(1e-12));
  }

  SUBCASE("second-moment counts respect the coupling range") {
    for (uint64_t seed = 3; seed <= 8; ++seed) {
      const int m = 1 + static_cast<int>(seed % 3);
      const NetworkSpec net = random_lpsg_network(m, 1.5, 0.5, seed);
      const auto keys = relevant_moments_gaussian(net);
      long long seconds = 0;
      for (const MomentKey& key : keys) seconds += key.first_moment() ? 0 : 1;
      CHECK(seconds <= 2LL * m * net.kappa());
      CHECK(static_cast<long long>(keys.size()) <= 2LL * m + 2LL * m * net.kappa());
    }
  }

  SUBCASE("photon-counting keys and the worst-case bound") {
    CHECK(lo_relevant_bound(3, 1, 1) == 35);
    const NetworkSpec net = identity_network(2, {1, 0});
    const auto keys = relevant_moments_lo(net);
    CHECK(contains_key(keys, MomentKey::product({{1, 1}})));
    CHECK(contains_key(keys, MomentKey::product({{2, 2}})));
    CHECK(contains_key(keys, MomentKey::product({{1, 1}, {2, 2}})));
    CHECK(contains_key(keys, MomentKey::product({{1, 1}, {3, 3}})));
    CHECK(static_cast<long long>(keys.size()) <=
          lo_relevant_bound(net.m, net.total_photons(), net.mode_range()));

    for (uint64_t seed = 1; seed <= 4; ++seed) {
      for (const NetworkSpec& lo :
           {random_lo_network(2, {1, 0}, seed), random_lo_network(2, {1, 1}, seed + 10),
            random_lo_network(3, {1, 0, 0}, seed + 20)}) {
        const auto lo_keys = relevant_moments_lo(lo);
        CHECK(static_cast<long long>(lo_keys.size()) <=
              lo_relevant_bound(lo.m, lo.total_photons(), lo.mode_range()));
      }
    }
  }

  SUBCASE("no photons reduces to the Gaussian list") {
    for (uint64_t seed = 1; seed <= 6; ++seed) {
      const NetworkSpec net = random_lpsg_network(2, 1.4, 0.6, seed);
      const auto lo = relevant_moments_lo(net);
      const auto gauss = relevant_moments_gaussian(net);
      REQUIRE(lo.size() == gauss.size());
      for (std::size_t i = 0; i < lo.size(); ++i) CHECK(lo[i] == gauss[i]);
    }
  }
}

TEST_CASE("measurement plans cover every relevant key") {
  SUBCASE("Gaussian plan size and recipes") {
    for (int m : {1, 2, 3, 5}) {
      const SettingPlan plan = settings_gaussian(m);
      CHECK(static_cast<int>(plan.settings.size()) == m + 3);
      for (const HomodyneSetting& setting : plan.settings) {
        CHECK(static_cast<int>(setting.angles.size()) == m);
      }
    }
    const SettingPlan plan = settings_gaussian(2);
    const MomentRecipe& qp = plan.recipe_for(MomentKey::product({{1, 2}}));
    REQUIRE(qp.terms.size() == 3);
    CHECK(qp.derived());
    CHECK(qp.terms[0].coeff == doctest::Approx(1.0));
    CHECK(qp.terms[1].coeff == doctest::Approx(-0.5));
    CHECK(qp.terms[2].coeff == doctest::Approx(-0.5));
    const MomentRecipe& cross = plan.recipe_for(MomentKey::product({{1, 4}}));
    CHECK_FALSE(cross.derived());
    CHECK(plan.settings[cross.terms[0].setting].angles[0] == doctest::Approx(0.0));
    CHECK(plan.settings[cross.terms[0].setting].angles[1] ==
          doctest::Approx(1.5707963267948966));
    for (uint64_t seed = 2; seed <= 5; ++seed) {
      const NetworkSpec net = random_lpsg_network(3, 1.5, 0.5, seed);
      const SettingPlan full = settings_gaussian(3);
      for (const MomentKey& key : relevant_moments_gaussian(net)) {
        CHECK_NOTHROW(full.recipe_for(key));
      }
    }
    CHECK_THROWS_AS(plan.recipe_for(MomentKey::product({{1, 1}, {2, 2}})), std::out_of_range);
  }

  SUBCASE("photon-counting plan coverage and size") {
    struct Fixture {
      NetworkSpec net;
      long long budget;
    };
    std::vector<Fixture> fixtures;
    fixtures.push_back({identity_network(2, {1, 0}), 8});
    fixtures.push_back({identity_network(3, {1, 0, 0}), 12});
    fixtures.push_back({identity_network(3, {1, 1, 0}), 24});
    fixtures.push_back({identity_network(4, {1, 1, 0, 0}), 48});
    for (const Fixture& fixture : fixtures) {
      const auto keys = relevant_moments_lo(fixture.net);
      const SettingPlan plan = settings_lo(fixture.net);
      CHECK(static_cast<long long>(plan.settings.size()) <= fixture.budget);
      for (const MomentKey& key : keys) {
        const MomentRecipe& recipe = plan.recipe_for(key);
        CHECK_FALSE(recipe.terms.empty());
        for (const EstimatorTerm& term : recipe.terms) {
          CHECK(term.setting >= 0);
          CHECK(term.setting < static_cast<int>(plan.settings.size()));
        }
      }
      std::size_t served = 0;
      for (int s = 0; s < static_cast<int>(plan.settings.size()); ++s) {
        served += plan.served_keys(s).size();
      }
      CHECK(served >= keys.size());
    }

    const NetworkSpec dense = beamsplitter_network(0.78539816339744831, {1, 0});
    const SettingPlan dense_plan = settings_lo(dense);
    for (const MomentKey& key : relevant_moments_lo(dense)) {
      CHECK_NOTHROW(dense_plan.recipe_for(key));
    }
    WARN_MESSAGE(static_cast<long long>(dense_plan.settings.size()) <= 8,
                 "dense coupling uses " << dense_plan.settings.size()
                                        << " settings against the sparse-network budget of 8");

    const SettingPlan ps_plan = settings_postselected(
        dense, {{{2}, {CVec::Unit(3, 0)}}, 0.5});
    CHECK(ps_plan.m == 1);
    PostselectedTarget ps{{{2}, {CVec::Unit(3, 0)}}, 0.5};
    for (const MomentKey& key : relevant_moments_postselected(dense, ps)) {
      CHECK_NOTHROW(ps_plan.recipe_for(key));
    }
  }
}

TEST_CASE("accumulation folds outcome rows into moment estimates") {
  SUBCASE("constant outcomes square exactly") {
    const SettingPlan plan = settings_gaussian(1);
    const MomentKey key = MomentKey::product({{1, 1}});
    const MomentRecipe& recipe = plan.recipe_for(key);
    const int rid = static_cast<int>(&recipe - plan.recipes.data());
    std::vector<MeasurementBatch> batches = {{rid, 0, 5}};
    std::vector<OutcomeRow> rows;
    for (long long t = 0; t < 5; ++t) {
      rows.push_back({0, t, 1, plan.settings[recipe.terms[0].setting].angles[0], 1.7});
    }
    const MomentEstimateStore store = accumulate(rows, plan, batches);
    CHECK(store.value(key) == doctest::Approx(1.7 * 1.7).epsilon(1e-12));
    CHECK(store.at(key).count == 5);
    CHECK(store.at(key).variance == doctest::Approx(0.0));
    CHECK_FALSE(store.at(key).derived);
  }

  SUBCASE("vacuum statistics reach the exact moments") {
    const GaussianState vac = GaussianState::vacuum(1);
    const SettingPlan plan = settings_gaussian(1);
    const MomentKey q2 = MomentKey::product({{1, 1}});
    const MomentKey qp = MomentKey::product({{1, 2}});
    std::vector<MeasurementBatch> batches;
    std::vector<OutcomeRow> rows;
    const long long n = 100000;
    for (const MomentKey& key : {q2, qp}) {
      const MomentRecipe& recipe = plan.recipe_for(key);
      const int rid = static_cast<int>(&recipe - plan.recipes.data());
      for (std::size_t t = 0; t < recipe.terms.size(); ++t) {
        const int batch_id = static_cast<int>(batches.size());
        batches.push_back({rid, static_cast<int>(t), n});
        const HomodyneSetting& setting = plan.settings[recipe.terms[t].setting];
        const Mat samples = sample_homodyne_gaussian(
            vac, setting.angles, static_cast<int>(n),
            Rng::derive(404, static_cast<uint64_t>(batch_id)));
        append_rows(rows, batch_id, setting, samples);
      }
    }
    const MomentEstimateStore store = accumulate(rows, plan, batches);
    CHECK(store.at(q2).count == n);
    CHECK(std::abs(store.value(q2) - 0.25) <= 6.0 * std::sqrt(store.at(q2).variance));
    CHECK(std::abs(store.value(q2) - 0.25) <= 0.01);
    CHECK(store.at(qp).derived);
    CHECK(std::abs(store.value(qp)) <= 6.0 * std::sqrt(store.at(qp).variance));
    CHECK(store.at(qp).variance > 0.0);

    const NetworkSpec net = NetworkSpec::vacuum(1);
    CHECK_THROWS_AS(recombine_F0(store, net), std::out_of_range);
  }

  SUBCASE("row validation") {
    const SettingPlan plan = settings_gaussian(1);
    const MomentKey key = MomentKey::product({{1, 1}});
    const MomentRecipe& recipe = plan.recipe_for(key);
    const int rid = static_cast<int>(&recipe - plan.recipes.data());
    std::vector<MeasurementBatch> batches = {{rid, 0, 1}};
    std::vector<OutcomeRow> bad_angle = {{0, 0, 1, 0.4, 1.0}};
    CHECK_THROWS_AS(accumulate(bad_angle, plan, batches), std::invalid_argument);
    std::vector<OutcomeRow> bad_batch = {{3, 0, 1, 0.0, 1.0}};
    CHECK_THROWS_AS(accumulate(bad_batch, plan, batches), std::invalid_argument);
    std::vector<MeasurementBatch> wrong_count = {{rid, 0, 7}};
    std::vector<OutcomeRow> one_row = {{0, 0, 1, 0.0, 1.0}};
    CHECK_THROWS_AS(accumulate(one_row, plan, wrong_count), std::invalid_argument);
  }
}

TEST_CASE("stability envelopes bound the recombination drift") {
  SUBCASE("Gaussian bound") {
    Rng rng(515151);
    for (uint64_t seed = 1; seed <= 5; ++seed) {
      const int m = 1 + static_cast<int>(seed % 3);
      const NetworkSpec net = random_lpsg_network(m, 2.0, 0.8, seed);
      const GaussianState prep = noise_channel(prepare_gaussian_target(net),
                                               NoiseKind::loss, 0.9);
      const auto keys = relevant_moments_gaussian(net);
      const MomentEstimateStore store = exact_store_gaussian(prep, keys);
      const double base = recombine_F0(store, net);
      const double s_max = net.transform.s.maxCoeff();
      const double x_norm = net.transform.x.norm();
      const double kappa = net.kappa();
      for (int trial = 0; trial < 40; ++trial) {
        const double eps_first = std::pow(10.0, -4.0 + 2.0 * rng.next_double());
        const double eps_second = std::pow(10.0, -4.0 + 2.0 * rng.next_double());
        MomentEstimateStore bumped;
        for (const auto& [key, est] : store.entries()) {
          const double eps = key.first_moment() ? eps_first : eps_second;
          MomentEstimate moved = est;
          moved.mean += eps * (2.0 * rng.next_double() - 1.0);
          bumped.set(key, moved);
        }
        const double envelope =
            2.0 * s_max * s_max *
            (eps_second * std::sqrt(kappa) * m + eps_first * x_norm * std::sqrt(2.0 * m));
        CHECK(std::abs(recombine_F0(bumped, net) - base) <= envelope + 1e-12);
      }
    }
  }

  SUBCASE("photon-counting bound") {
    Rng rng(626262);
    std::vector<NetworkSpec> nets = {
        identity_network(1, {1}),
        beamsplitter_network(0.6, {1, 0}),
        beamsplitter_network(0.78539816339744831, {1, 1}),
        random_lo_network(3, {1, 0, 0}, 9),
    };
    for (const NetworkSpec& net : nets) {
      const int cutoff = net.m >= 3 ? 6 : 8;
      const FockState target = prepare_lo_target(net, cutoff);
      const auto keys = relevant_moments_lo(net);
      const MomentEstimateStore store = exact_store_fock(target, keys);
      const double base = recombine_Fn(store, net);
      const int n = net.total_photons();
      const int d = net.mode_range();
      const int m = net.m;
      for (int trial = 0; trial < 50; ++trial) {
        const double eps = std::pow(10.0, -4.0 + 2.0 * rng.next_double());
        MomentEstimateStore bumped;
        for (const auto& [key, est] : store.entries()) {
          MomentEstimate moved = est;
          moved.mean += eps * (2.0 * rng.next_double() - 1.0);
          bumped.set(key, moved);
        }
        const double envelope =
            eps * (n + 2.5 * m) *
            std::pow(0.5 + 2.0 * d * std::sqrt(2.0 * n * m), n);
        CHECK(std::abs(recombine_Fn(bumped, net) - base) <= envelope + 1e-12);
      }
    }
  }
}
