#include "aaiiw/simgen.hpp"

#include "aaiiw/errors.hpp"
#include "aaiiw/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace aaiiw {

const char* to_string(Mechanism m) noexcept {
  switch (m) {
    case Mechanism::poisson: return "poisson";
    case Mechanism::bernoulli: return "bernoulli";
  }
  return "?";
}

Mechanism mechanism_from_string(const std::string& name) {
  if (name == "poisson") return Mechanism::poisson;
  if (name == "bernoulli") return Mechanism::bernoulli;
  throw Error(ErrorKind::invalid_input, "unknown observation mechanism '" + name + "'");
}

std::vector<double> gamma_set(Mechanism mechanism, int set) {
  if (set < 1 || set > 4) {
    throw Error(ErrorKind::invalid_input, "gamma set must be 1, 2, 3 or 4");
  }
  static const std::vector<double> poisson[4] = {
      {0, 0, 0, 0, 0, -5},
      {0.5, 0.3, -0.5, -2, 0, -3},
      {0.5, -0.5, -0.2, -1, 1, -3},
      {-1, -0.8, 0.1, 0.3, -1, -3},
  };
  static const std::vector<double> bernoulli[4] = {
      {0.4, 0, 0, 0, 0, 0, -5},
      {0.4, 1, -1, -0.5, -2, 0, -3},
      {0.4, 0.5, -0.5, -0.2, -1, 1, -3},
      {0.4, -0.5, 0.8, 0.1, 0.3, -1, -3},
  };
  return mechanism == Mechanism::poisson ? poisson[set - 1] : bernoulli[set - 1];
}

void DgpConfig::validate() const {
  grid.validate();
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw Error(ErrorKind::invalid_input, std::string(what) + " must be positive");
    }
  };
  if (n == 0) throw Error(ErrorKind::invalid_input, "subject count must be positive");
  positive(k1.variance, "K1 variance");
  positive(k3.variance, "K3 variance");
  positive(mediator_treated.variance, "treated mediator variance");
  positive(mediator_control.variance, "control mediator variance");
  positive(pure_predictor.variance, "pure predictor variance");
  positive(noise_variance, "noise variance");
  positive(random_intercept_variance, "random intercept variance");
  positive(proportionality_constant, "proportionality constant");
  if (!(k2_probability > 0.0 && k2_probability < 1.0)) {
    throw Error(ErrorKind::invalid_input, "K2 probability must lie in (0, 1)");
  }
  if (treatment_coefs.size() != 4) {
    throw Error(ErrorKind::invalid_input, "treatment model needs 4 coefficients");
  }
  if (outcome_confounder_coefs.size() != 3) {
    throw Error(ErrorKind::invalid_input, "outcome model needs 3 confounder coefficients");
  }
  const std::size_t expected = mechanism == Mechanism::poisson ? 6 : 7;
  if (gamma.size() != expected) {
    throw Error(ErrorKind::invalid_input,
                std::string(to_string(mechanism)) + " observation model needs " +
                    std::to_string(expected) + " coefficients, got " +
                    std::to_string(gamma.size()));
  }
}

double DgpConfig::arm_mean(int arm) const {
  return outcome_intercept + treatment_effect * arm + outcome_confounder_coefs[0] * k1.mean +
         outcome_confounder_coefs[1] * k2_probability +
         outcome_confounder_coefs[2] * k3.mean + pure_predictor_coef * pure_predictor.mean;
}

DgpConfig default_config(Mechanism mechanism, int gamma_set_index, std::size_t n) {
  DgpConfig cfg;
  cfg.n = n;
  cfg.mechanism = mechanism;
  cfg.gamma = gamma_set(mechanism, gamma_set_index);
  return cfg;
}

CovariateColumns simulated_columns() {
  return {{"K1", "K2", "K3"}, {"M"}, {"P"}};
}

double observation_probability(const DgpConfig& cfg, double bin_start, int treatment,
                               double mediator, double k1, double k2, double k3,
                               double pure_predictor) {
  const double v[6] = {static_cast<double>(treatment), mediator, k1, k2, k3, pure_predictor};
  if (cfg.mechanism == Mechanism::bernoulli) {
    double eta = cfg.gamma[0];
    for (int j = 0; j < 6; ++j) eta += cfg.gamma[static_cast<std::size_t>(j + 1)] * v[j];
    return expit(eta);
  }
  double eta = 0.0;
  for (int j = 0; j < 6; ++j) eta += cfg.gamma[static_cast<std::size_t>(j)] * v[j];
  const double rate = cfg.rate_slope * (bin_start + cfg.rate_offset) * std::exp(eta);
  return std::min(1.0, cfg.proportionality_constant * rate);
}

std::vector<double> observation_probabilities(const DgpConfig& cfg, const PanelDataset& ds) {
  const auto& f = ds.frame();
  const auto& cols = ds.columns();
  const auto idx = [&](const char* name) {
    const auto pos = cols.index_of(name);
    if (!pos) throw Error(ErrorKind::invalid_input, std::string("dataset lacks column ") + name);
    return static_cast<Eigen::Index>(*pos);
  };
  const Eigen::Index k1 = idx("K1"), k2 = idx("K2"), k3 = idx("K3"), m = idx("M"), p = idx("P");
  std::vector<double> out(f.rows(), 0.0);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (!f.at_risk[r]) continue;
    const auto i = static_cast<Eigen::Index>(r);
    out[r] = observation_probability(cfg, ds.grid().bin_start(f.bin[r]), f.treatment[r],
                                     f.covariates(i, m), f.covariates(i, k1),
                                     f.covariates(i, k2), f.covariates(i, k3),
                                     f.covariates(i, p));
  }
  return out;
}

std::vector<std::uint8_t> observation_indicators(std::span<const double> probabilities,
                                                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::uint8_t> out(probabilities.size());
  for (std::size_t r = 0; r < probabilities.size(); ++r) {
    out[r] = unif(rng) < probabilities[r] ? 1 : 0;
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  };
  return mix(base ^ mix(index));
}

namespace {

struct RawCohort {
  std::size_t bins = 0;
  std::vector<double> k1, k2, k3, phi;  // per subject
  std::vector<int> a;                   // per person-bin, subject-major
  std::vector<double> m, p, eps;
};

std::string subject_label(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%07zu", i + 1);
  return buf;
}

PanelDataset build(const DgpConfig& cfg, std::uint64_t seed, bool complete,
                   SimulationTruth* truth) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto normal = [&](const NormalLaw& law) {
    return law.mean + std::sqrt(law.variance) * std_normal(rng);
  };

  RawCohort raw;
  raw.bins = static_cast<std::size_t>(cfg.grid.bin_count());
  const std::size_t total = cfg.n * raw.bins;
  raw.a.resize(total);
  raw.m.resize(total);
  raw.p.resize(total);
  raw.eps.resize(total);
  std::vector<double> prop(total);
  const auto& tc = cfg.treatment_coefs;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    raw.k1.push_back(normal(cfg.k1));
    raw.k2.push_back(unif(rng) < cfg.k2_probability ? 1.0 : 0.0);
    raw.k3.push_back(normal(cfg.k3));
    raw.phi.push_back(std::sqrt(cfg.random_intercept_variance) * std_normal(rng));
    const double pt = expit(tc[0] + tc[1] * raw.k1[i] + tc[2] * raw.k2[i] + tc[3] * raw.k3[i]);
    for (std::size_t b = 0; b < raw.bins; ++b) {
      const std::size_t r = i * raw.bins + b;
      prop[r] = pt;
      raw.a[r] = unif(rng) < pt ? 1 : 0;
      raw.m[r] = normal(raw.a[r] ? cfg.mediator_treated : cfg.mediator_control);
      raw.p[r] = normal(cfg.pure_predictor);
      raw.eps[r] = raw.phi[i] + std::sqrt(cfg.noise_variance) * std_normal(rng);
    }
  }

  // In-sample least-squares fit of M on (1, A, K1, K2, K3).
  Eigen::MatrixXd X(static_cast<Eigen::Index>(total), 5);
  Eigen::VectorXd yM(static_cast<Eigen::Index>(total));
  for (std::size_t r = 0; r < total; ++r) {
    const std::size_t i = r / raw.bins;
    const auto ri = static_cast<Eigen::Index>(r);
    X.row(ri) << 1.0, raw.a[r], raw.k1[i], raw.k2[i], raw.k3[i];
    yM(ri) = raw.m[r];
  }
  const Eigen::VectorXd med = solve_least_squares(X, yM);
  auto mediator_mean = [&](std::size_t i, int arm) {
    return med(0) + med(1) * arm + med(2) * raw.k1[i] + med(3) * raw.k2[i] + med(4) * raw.k3[i];
  };
  const auto& oc = cfg.outcome_confounder_coefs;
  auto mean_given_k = [&](std::size_t i, std::size_t r, int arm) {
    return cfg.outcome_intercept + cfg.treatment_effect * arm + oc[0] * raw.k1[i] +
           oc[1] * raw.k2[i] + oc[2] * raw.k3[i] + cfg.pure_predictor_coef * raw.p[r];
  };
  auto mean_given_v = [&](std::size_t i, std::size_t r, int arm) {
    return mean_given_k(i, r, arm) + cfg.mediator_slope * (raw.m[r] - mediator_mean(i, arm));
  };

  std::vector<double> y(total), obs_prob(total);
  for (std::size_t r = 0; r < total; ++r) {
    const std::size_t i = r / raw.bins;
    y[r] = mean_given_v(i, r, raw.a[r]) + raw.eps[r];
    obs_prob[r] = observation_probability(cfg, cfg.grid.bin_start(static_cast<int>(r % raw.bins)),
                                          raw.a[r], raw.m[r], raw.k1[i], raw.k2[i], raw.k3[i],
                                          raw.p[r]);
  }
  auto dn = observation_indicators(obs_prob, rng);
  if (complete) std::fill(dn.begin(), dn.end(), std::uint8_t{1});

  std::vector<SubjectRecord> subjects(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    subjects[i].subject_id = subject_label(i);
    subjects[i].rows.resize(raw.bins);
    for (std::size_t b = 0; b < raw.bins; ++b) {
      const std::size_t r = i * raw.bins + b;
      BinRow& row = subjects[i].rows[b];
      row.bin_index = static_cast<int>(b);
      row.treatment = raw.a[r];
      row.confounders = {raw.k1[i], raw.k2[i], raw.k3[i]};
      row.mediators = {raw.m[r]};
      row.pure_predictors = {raw.p[r]};
      row.at_risk = true;
      row.observed = dn[r] != 0;
      if (row.observed) row.outcome = y[r];
    }
  }

  if (truth != nullptr) {
    truth->outcome = y;
    truth->propensity = prop;
    truth->observation = complete ? std::vector<double>(total, 1.0) : obs_prob;
    truth->mediator_fitted.resize(total);
    for (int a = 0; a < 2; ++a) {
      truth->mean_given_k[a].resize(total);
      truth->mean_given_v[a].resize(total);
    }
    for (std::size_t r = 0; r < total; ++r) {
      const std::size_t i = r / raw.bins;
      truth->mediator_fitted[r] = mediator_mean(i, raw.a[r]);
      for (int a = 0; a < 2; ++a) {
        truth->mean_given_k[a][r] = mean_given_k(i, r, a);
        truth->mean_given_v[a][r] = mean_given_v(i, r, a);
      }
    }
  }
  return PanelDataset(cfg.grid, simulated_columns(), std::move(subjects));
}

}  // namespace

PanelDataset simulate_cohort(const DgpConfig& cfg, std::uint64_t seed, SimulationTruth* truth) {
  return build(cfg, seed, false, truth);
}

PanelDataset complete_cohort(const DgpConfig& cfg, std::uint64_t seed) {
  return build(cfg, seed, true, nullptr);
}

}  // namespace aaiiw
