#include "cvcert/prover.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "cvcert/rng.hpp"

namespace cvcert {

using json = nlohmann::json;

namespace {

const char* kOutcomeCsvHeader = "setting_id,trial,mode,angle,outcome";

std::string backend_name(ProverBackend backend) {
  return backend == ProverBackend::gaussian ? "gaussian" : "fock";
}

ProverBackend backend_from_name(const std::string& name) {
  if (name == "gaussian") return ProverBackend::gaussian;
  if (name == "fock") return ProverBackend::fock;
  throw std::invalid_argument("unknown prover backend: " + name);
}

std::string noise_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::loss:
      return "loss";
    case NoiseKind::thermal:
      return "thermal";
    case NoiseKind::displacement_drift:
      return "displacement_drift";
  }
  throw std::invalid_argument("unknown noise kind");
}

NoiseKind noise_from_name(const std::string& name) {
  if (name == "loss") return NoiseKind::loss;
  if (name == "thermal") return NoiseKind::thermal;
  if (name == "displacement_drift") return NoiseKind::displacement_drift;
  throw std::invalid_argument("unknown noise kind: " + name);
}

json complex_vector_json(const CVec& v) {
  json entry;
  std::vector<double> re(static_cast<size_t>(v.size())), im(static_cast<size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    re[static_cast<size_t>(i)] = v(i).real();
    im[static_cast<size_t>(i)] = v(i).imag();
  }
  entry["re"] = re;
  entry["im"] = im;
  return entry;
}

CVec complex_vector_from_json(const json& entry) {
  const auto re = entry.at("re").get<std::vector<double>>();
  const auto im = entry.at("im").get<std::vector<double>>();
  if (re.size() != im.size()) throw std::invalid_argument("complex vector parts disagree");
  CVec v(static_cast<Eigen::Index>(re.size()));
  for (size_t i = 0; i < re.size(); ++i) v(static_cast<Eigen::Index>(i)) = {re[i], im[i]};
  return v;
}

json matrix_json(const Mat& mat) {
  json out = json::array();
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    std::vector<double> row(static_cast<size_t>(mat.cols()));
    for (Eigen::Index c = 0; c < mat.cols(); ++c) row[static_cast<size_t>(c)] = mat(r, c);
    out.push_back(row);
  }
  return out;
}

Mat matrix_from_json(const json& entry) {
  const auto rows = entry.get<std::vector<std::vector<double>>>();
  const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index nc = nr > 0 ? static_cast<Eigen::Index>(rows[0].size()) : 0;
  Mat mat(nr, nc);
  for (Eigen::Index r = 0; r < nr; ++r) {
    if (static_cast<Eigen::Index>(rows[static_cast<size_t>(r)].size()) != nc) {
      throw std::invalid_argument("ragged matrix rows");
    }
    for (Eigen::Index c = 0; c < nc; ++c) {
      mat(r, c) = rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
    }
  }
  return mat;
}

// Joint outcomes for one batch: the prepared state through the backend
// sampler, or iid replay of the spoof table rows.
Mat batch_outcomes(const ProverScenario& scenario, const GaussianState* gauss,
                   const FockState* fock, const SpoofTable* spoof,
                   const std::vector<double>& angles, int setting, int count,
                   uint64_t batch_seed) {
  if (spoof != nullptr) {
    const Mat& table = spoof->rows[static_cast<size_t>(setting)];
    Mat outs(count, table.cols());
#pragma omp parallel for schedule(static)
    for (int t = 0; t < count; ++t) {
      Rng rng(Rng::derive(batch_seed, static_cast<uint64_t>(t)));
      const Eigen::Index pick =
          static_cast<Eigen::Index>(rng.next_below(static_cast<uint64_t>(table.rows())));
      outs.row(t) = table.row(pick);
    }
    return outs;
  }
  if (scenario.backend == ProverBackend::gaussian) {
    return sample_homodyne_gaussian(*gauss, angles, count, batch_seed);
  }
  return sample_homodyne_fock(*fock, angles, count, batch_seed);
}

}  // namespace

void validate_scenario(const ProverScenario& scenario) {
  if (!(scenario.eta > 0.0) || scenario.eta > 1.0) {
    throw std::invalid_argument("scenario: eta must lie in (0, 1]");
  }
  if (scenario.network.m < 1) throw std::invalid_argument("scenario: network has no modes");
  if (scenario.backend == ProverBackend::gaussian) {
    if (scenario.fock_preparation || scenario.herald) {
      throw std::invalid_argument("scenario: fock fields set on a gaussian backend");
    }
  } else {
    if (scenario.gaussian_preparation || !scenario.noise.empty()) {
      throw std::invalid_argument("scenario: gaussian fields set on a fock backend");
    }
    if (scenario.cutoff < 1) throw std::invalid_argument("scenario: cutoff must be positive");
    if (scenario.fock_preparation) {
      double total = 0.0;
      for (const FockComponent& comp : scenario.fock_preparation->comps) {
        if (comp.weight < -1e-12) {
          throw std::invalid_argument("scenario: negative mixture weight");
        }
        total += comp.weight;
        if (std::abs(comp.amp.norm() - 1.0) > 1e-6) {
          throw std::invalid_argument("scenario: mixture component is not normalized");
        }
      }
      if (std::abs(total - 1.0) > 1e-6) {
        throw std::invalid_argument("scenario: mixture weights must sum to one");
      }
    }
  }
}

GaussianState prepared_gaussian(const ProverScenario& scenario) {
  validate_scenario(scenario);
  if (scenario.backend != ProverBackend::gaussian) {
    throw std::invalid_argument("scenario backend is not gaussian");
  }
  GaussianState state = scenario.gaussian_preparation
                            ? *scenario.gaussian_preparation
                            : prepare_gaussian_target(scenario.network);
  for (const NoiseStep& step : scenario.noise) {
    state = noise_channel(state, step.kind, step.strength);
  }
  return state;
}

FockState prepared_fock(const ProverScenario& scenario) {
  validate_scenario(scenario);
  if (scenario.backend != ProverBackend::fock) {
    throw std::invalid_argument("scenario backend is not fock");
  }
  FockState state;
  if (scenario.fock_preparation) {
    state = *scenario.fock_preparation;
  } else if (scenario.network.total_photons() > 0) {
    state = prepare_lo_target(scenario.network, scenario.cutoff);
  } else {
    state = prepare_gaussian_target_fock(scenario.network, scenario.cutoff);
  }
  if (scenario.herald) {
    state = post_select(state, *scenario.herald).first;
  }
  return state;
}

std::vector<OutcomeRow> respond(const ProverScenario& scenario, const SettingPlan& plan,
                                const std::vector<MeasurementBatch>& batches, uint64_t seed,
                                long long sample_cap) {
  validate_scenario(scenario);

  const SpoofTable* spoof = scenario.spoof ? &*scenario.spoof : nullptr;
  GaussianState gauss;
  FockState fock;
  if (spoof != nullptr) {
    if (spoof->rows.size() != plan.settings.size()) {
      throw std::invalid_argument("spoof table does not cover every setting");
    }
    for (const Mat& table : spoof->rows) {
      if (table.rows() < 1 || table.cols() != plan.m) {
        throw std::invalid_argument("spoof table shape disagrees with the plan");
      }
    }
  } else if (scenario.backend == ProverBackend::gaussian) {
    gauss = prepared_gaussian(scenario);
    if (gauss.modes() != plan.m) {
      throw std::invalid_argument("prepared state modes disagree with the plan");
    }
  } else {
    fock = prepared_fock(scenario);
    if (fock.m != plan.m) {
      throw std::invalid_argument("prepared state modes disagree with the plan");
    }
  }

  long long total = 0;
  for (const MeasurementBatch& batch : batches) {
    if (batch.recipe < 0 || batch.recipe >= static_cast<int>(plan.recipes.size())) {
      throw std::invalid_argument("batch references an unknown recipe");
    }
    const auto& terms = plan.recipes[static_cast<size_t>(batch.recipe)].terms;
    if (batch.term < 0 || batch.term >= static_cast<int>(terms.size())) {
      throw std::invalid_argument("batch references an unknown estimator term");
    }
    if (batch.count < 0) throw std::invalid_argument("batch count is negative");
    if (batch.count > std::numeric_limits<int>::max()) {
      throw std::length_error("batch count exceeds the sampler range");
    }
    total += batch.count;
  }
  if (total > sample_cap) {
    throw std::length_error("requested samples " + std::to_string(total) +
                            " exceed the cap " + std::to_string(sample_cap));
  }

  const int m = plan.m;
  std::vector<OutcomeRow> rows(static_cast<size_t>(total) * static_cast<size_t>(m));
  size_t base = 0;
  const double noise_sd =
      scenario.eta < 1.0 ? std::sqrt((1.0 - scenario.eta) / (4.0 * scenario.eta)) : 0.0;

  for (size_t b = 0; b < batches.size(); ++b) {
    const MeasurementBatch& batch = batches[b];
    const int count = static_cast<int>(batch.count);
    if (count == 0) continue;
    const MomentRecipe& recipe = plan.recipes[static_cast<size_t>(batch.recipe)];
    const int setting = recipe.terms[static_cast<size_t>(batch.term)].setting;
    const std::vector<double>& angles = plan.settings[static_cast<size_t>(setting)].angles;
    const uint64_t batch_seed = Rng::derive(seed, 2 * static_cast<uint64_t>(b));
    const uint64_t noise_seed = Rng::derive(seed, 2 * static_cast<uint64_t>(b) + 1);

    Mat outs = batch_outcomes(scenario, &gauss, &fock, spoof, angles, setting, count, batch_seed);
    if (noise_sd > 0.0 && spoof == nullptr) {
#pragma omp parallel for schedule(static)
      for (int t = 0; t < count; ++t) {
        Rng rng(Rng::derive(noise_seed, static_cast<uint64_t>(t)));
        for (int j = 0; j < m; ++j) outs(t, j) += noise_sd * rng.next_normal();
      }
    }

#pragma omp parallel for schedule(static)
    for (int t = 0; t < count; ++t) {
      for (int j = 0; j < m; ++j) {
        OutcomeRow& row = rows[base + static_cast<size_t>(t) * static_cast<size_t>(m) +
                               static_cast<size_t>(j)];
        row.setting_id = static_cast<int>(b);
        row.trial = t;
        row.mode = j + 1;
        row.angle = angles[static_cast<size_t>(j)];
        row.outcome = outs(t, j);
      }
    }
    base += static_cast<size_t>(count) * static_cast<size_t>(m);
  }
  return rows;
}

MixedPreparation build_orthogonal_prep(const NetworkSpec& network, int cutoff,
                                       OrthogonalStyle style, double weight, uint64_t seed) {
  if (!(weight >= 0.0) || weight > 1.0) {
    throw std::invalid_argument("mixture weight must lie in [0, 1]");
  }
  if (cutoff < 1) throw std::invalid_argument("cutoff must be positive");

  const FockState target = network.total_photons() > 0
                               ? prepare_lo_target(network, cutoff)
                               : prepare_gaussian_target_fock(network, cutoff);
  const CVec& t = target.comps[0].amp;
  const int m = target.m;

  MixedPreparation prep;
  if (weight == 1.0) {
    prep.state = target;
    prep.fidelity = fidelity_oracle_fock(target, prep.state);
    const PhotonMismatch mismatch = photon_mismatch(target, prep.state, network);
    prep.mismatch_applicable = mismatch.applicable;
    prep.n_perp = mismatch.n_perp;
    return prep;
  }

  CVec v;
  switch (style) {
    case OrthogonalStyle::photon_added: {
      CMat create = CMat::Zero(cutoff + 1, cutoff + 1);
      for (int n = 0; n < cutoff; ++n) create(n + 1, n) = std::sqrt(static_cast<double>(n + 1));
      v = apply_mode_op(t, m, cutoff, 1, create);
      break;
    }
    case OrthogonalStyle::fock_excitation: {
      std::vector<int> nvec = network.nvec;
      nvec.resize(static_cast<size_t>(m), 0);
      nvec[0] += 1;
      if (nvec[0] > cutoff) throw std::invalid_argument("excitation exceeds the cutoff");
      v = CVec::Zero(target.dim());
      v(fock_flat_index(nvec, cutoff)) = 1.0;
      break;
    }
    case OrthogonalStyle::random_pure: {
      Rng rng(seed);
      v = CVec::Zero(target.dim());
      for (Eigen::Index idx = 0; idx < v.size(); ++idx) {
        Eigen::Index rest = idx;
        bool top = false;
        for (int j = 0; j < m; ++j) {
          if (rest % (cutoff + 1) >= cutoff) top = true;
          rest /= cutoff + 1;
        }
        if (top) continue;
        v(idx) = std::complex<double>(rng.next_normal(), rng.next_normal());
      }
      break;
    }
  }

  v -= t * t.dot(v);
  const double norm = v.norm();
  if (norm < 1e-9) {
    throw std::invalid_argument("orthogonal component vanished against the target");
  }
  v /= norm;

  prep.state.m = m;
  prep.state.cutoff = cutoff;
  if (weight == 0.0) {
    prep.state.comps = {{1.0, v}};
  } else {
    prep.state.comps = {{weight, t}, {1.0 - weight, v}};
  }
  prep.fidelity = fidelity_oracle_fock(target, prep.state);
  if (std::abs(prep.fidelity - weight) > 1e-9) {
    throw std::logic_error("mixture overlap drifted from the requested weight");
  }
  const PhotonMismatch mismatch = photon_mismatch(target, prep.state, network);
  prep.mismatch_applicable = mismatch.applicable;
  prep.n_perp = mismatch.n_perp;
  return prep;
}

std::string ProverScenario::to_json() const {
  json doc;
  doc["backend"] = backend_name(backend);
  doc["network"] = json::parse(network.to_json());
  doc["cutoff"] = cutoff;
  doc["eta"] = eta;
  json steps = json::array();
  for (const NoiseStep& step : noise) {
    steps.push_back({{"kind", noise_name(step.kind)}, {"strength", step.strength}});
  }
  doc["noise"] = steps;
  if (gaussian_preparation) {
    json gp;
    gp["mean"] = std::vector<double>(
        gaussian_preparation->mean.data(),
        gaussian_preparation->mean.data() + gaussian_preparation->mean.size());
    gp["cov"] = matrix_json(gaussian_preparation->cov);
    doc["gaussian_preparation"] = gp;
  }
  if (fock_preparation) doc["fock_preparation"] = json::parse(fock_preparation->to_json());
  if (herald) {
    json hj;
    hj["ancilla_modes"] = herald->ancilla_modes;
    json phis = json::array();
    for (const CVec& phi : herald->phi) phis.push_back(complex_vector_json(phi));
    hj["phi"] = phis;
    doc["herald"] = hj;
  }
  if (spoof) {
    json tables = json::array();
    for (const Mat& table : spoof->rows) tables.push_back(matrix_json(table));
    doc["spoof"] = tables;
  }
  return doc.dump();
}

ProverScenario ProverScenario::from_json(const std::string& text) {
  const json doc = json::parse(text);
  ProverScenario scenario;
  scenario.backend = backend_from_name(doc.at("backend").get<std::string>());
  scenario.network = NetworkSpec::from_json(doc.at("network").dump());
  scenario.cutoff = doc.at("cutoff").get<int>();
  scenario.eta = doc.at("eta").get<double>();
  for (const json& step : doc.at("noise")) {
    scenario.noise.push_back(
        {noise_from_name(step.at("kind").get<std::string>()), step.at("strength").get<double>()});
  }
  if (doc.contains("gaussian_preparation")) {
    const json& gp = doc.at("gaussian_preparation");
    const auto mean = gp.at("mean").get<std::vector<double>>();
    GaussianState state;
    state.mean = Eigen::Map<const Vec>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    state.cov = matrix_from_json(gp.at("cov"));
    scenario.gaussian_preparation = state;
  }
  if (doc.contains("fock_preparation")) {
    scenario.fock_preparation = FockState::from_json(doc.at("fock_preparation").dump());
  }
  if (doc.contains("herald")) {
    const json& hj = doc.at("herald");
    PostSelection sel;
    sel.ancilla_modes = hj.at("ancilla_modes").get<std::vector<int>>();
    for (const json& phi : hj.at("phi")) sel.phi.push_back(complex_vector_from_json(phi));
    scenario.herald = sel;
  }
  if (doc.contains("spoof")) {
    SpoofTable table;
    for (const json& entry : doc.at("spoof")) table.rows.push_back(matrix_from_json(entry));
    scenario.spoof = table;
  }
  return scenario;
}

void write_outcome_csv(std::ostream& out, const std::vector<OutcomeRow>& rows) {
  out << kOutcomeCsvHeader << "\n";
  char line[128];
  for (const OutcomeRow& row : rows) {
    std::snprintf(line, sizeof(line), "%d,%lld,%d,%.17g,%.17g\n", row.setting_id, row.trial,
                  row.mode, row.angle, row.outcome);
    out << line;
  }
}

std::vector<OutcomeRow> read_outcome_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kOutcomeCsvHeader) {
    throw std::invalid_argument("outcome csv header mismatch");
  }
  std::vector<OutcomeRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    OutcomeRow row;
    if (std::sscanf(line.c_str(), "%d,%lld,%d,%lf,%lf", &row.setting_id, &row.trial, &row.mode,
                    &row.angle, &row.outcome) != 5) {
      throw std::invalid_argument("outcome csv row malformed: " + line);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace cvcert
