#pragma once

// Simulated cohorts with baseline confounders K1..K3, a time-varying binary
// treatment, a mediator M, a pure predictor P, a subject random intercept and
// a covariate-driven outcome observation process.

#include "aaiiw/panel.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace aaiiw {

enum class Mechanism { poisson, bernoulli };

const char* to_string(Mechanism m) noexcept;
Mechanism mechanism_from_string(const std::string& name);

// Default observation coefficients: sets 1-4 for each mechanism. Poisson
// vectors act on (A, M, K1, K2, K3, P); Bernoulli vectors start with an
// intercept.
std::vector<double> gamma_set(Mechanism mechanism, int set);

struct NormalLaw {
  double mean = 0.0;
  double variance = 1.0;
};

struct DgpConfig {
  std::size_t n = 1000;
  TimeGrid grid;

  NormalLaw k1{1.0, 1.0};
  double k2_probability = 0.55;
  NormalLaw k3{0.0, 1.0};
  // Treatment log-odds: intercept, K1, K2, K3.
  std::vector<double> treatment_coefs{-0.5, 0.8, -0.4, -0.4};
  NormalLaw mediator_treated{2.0, 1.0};
  NormalLaw mediator_control{4.0, 2.0};
  NormalLaw pure_predictor{0.5, 0.09};

  // Outcome: intercept, A, K1, K2, K3, mediator residual, P.
  double outcome_intercept = 0.5;
  double treatment_effect = 1.0;
  std::vector<double> outcome_confounder_coefs{0.4, 0.05, -0.6};
  double mediator_slope = 3.0;
  double pure_predictor_coef = 0.3;
  double noise_variance = 0.01;
  double random_intercept_variance = 0.04;

  Mechanism mechanism = Mechanism::bernoulli;
  std::vector<double> gamma = gamma_set(Mechanism::bernoulli, 1);
  // Poisson only: p = min(1, c * 0.25 (t + 0.05) exp(gamma'V)).
  double proportionality_constant = 1.0;
  double rate_slope = 0.25;
  double rate_offset = 0.05;

  // Throws Error(invalid_input) on a nonpositive variance, a probability
  // outside (0, 1) or a gamma of the wrong length.
  void validate() const;

  // Marginal mean of the potential outcome under arm a.
  double arm_mean(int arm) const;
};

DgpConfig default_config(Mechanism mechanism, int gamma_set_index, std::size_t n);

// Names of the simulated covariate columns: K = {K1, K2, K3}, M = {M}, P = {P}.
CovariateColumns simulated_columns();

// Observation probability of one person-bin; bin_start is the left end of the bin.
double observation_probability(const DgpConfig& cfg, double bin_start, int treatment,
                               double mediator, double k1, double k2, double k3,
                               double pure_predictor);

// Per-row observation probabilities of `ds` under the configured mechanism.
std::vector<double> observation_probabilities(const DgpConfig& cfg, const PanelDataset& ds);

// One Bernoulli draw per probability, in order.
std::vector<std::uint8_t> observation_indicators(std::span<const double> probabilities,
                                                 std::mt19937_64& rng);

// Everything the generator knew, per frame row (oracle nuisances).
struct SimulationTruth {
  std::vector<double> outcome;            // complete outcome, before masking
  std::vector<double> propensity;         // true pr(A = 1 | K)
  std::vector<double> observation;        // true pr(dN = 1 | V)
  std::vector<double> mediator_fitted;    // in-sample E[M | A, K]
  std::array<std::vector<double>, 2> mean_given_k;  // E[Y | A = a, K, P]
  std::array<std::vector<double>, 2> mean_given_v;  // E[Y | A = a, M, K, P] at recorded M
};

// Deterministic in (cfg, seed). Outcomes are present only where observed;
// every bin is at risk.
PanelDataset simulate_cohort(const DgpConfig& cfg, std::uint64_t seed,
                             SimulationTruth* truth = nullptr);

// Same cohort with every bin observed.
PanelDataset complete_cohort(const DgpConfig& cfg, std::uint64_t seed);

// Stream-splitting mix of a base seed and a replicate index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace aaiiw
