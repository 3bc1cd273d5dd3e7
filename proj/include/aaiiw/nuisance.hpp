#pragma once

// Nuisance models: propensity score, observation intensity (Andersen-Gill
// proportional rate with a Breslow baseline, or a per-bin logistic
// probability) and the two conditional outcome means.

#include "aaiiw/design.hpp"
#include "aaiiw/panel.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace aaiiw {

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticOptions {
  double tolerance = 1e-8;  // on the norm of the mean log-likelihood gradient
  int max_iterations = 100;
  double separation_bound = 1e3;  // on max |coefficient|
};

struct LogisticFit {
  Eigen::VectorXd coefficients;
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  Eigen::MatrixXd covariance;        // inverse observed information
  std::vector<double> loglik_path;   // mean log-likelihood per accepted iterate
  DesignSpec design;                 // set by the panel-level fitters

  // Fitted probabilities pr(label = 1 | row) for a design matrix.
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

// Newton-Raphson with step halving. Weights are optional, nonnegative
// frequency-style weights; the objective is normalized by their sum so a
// constant rescaling leaves the fit unchanged.
// Throws SeparationDetected, SingularInformation, NotConverged.
LogisticFit fit_logistic(const Eigen::MatrixXd& design,
                         std::span<const double> labels,
                         std::span<const double> weights = {},
                         const LogisticOptions& options = {});

struct ObjectiveValue {
  double value = 0.0;
  Eigen::VectorXd gradient;
};

// Summed weighted Bernoulli log-likelihood and its gradient.
ObjectiveValue logistic_loglik(const Eigen::MatrixXd& design,
                               std::span<const double> labels,
                               std::span<const double> weights,
                               const Eigen::VectorXd& beta);

// Pooled-over-bins fit of treatment on a K-block design, at-risk rows only.
LogisticFit fit_propensity(const PanelDataset& ds, const DesignSpec& spec,
                           const LogisticOptions& options = {});

// Logistic model for the per-bin observation probability, at-risk rows only.
LogisticFit fit_bernoulli_observation(const PanelDataset& ds,
                                      const DesignSpec& spec,
                                      const LogisticOptions& options = {});

// ---------------------------------------------------------------------------
// Proportional rate (Andersen-Gill) model

// as_written: denominator sums exp(gamma'V) over the bin's events only.
// risk_set: classical Breslow, denominator over the bin's risk set.
enum class BreslowVariant { as_written, risk_set };

const char* to_string(BreslowVariant v) noexcept;

struct RateOptions {
  double tolerance = 1e-8;  // on the norm of the per-event score
  int max_iterations = 100;
  double divergence_bound = 1e3;
};

struct RateFit {
  Eigen::VectorXd gamma;
  std::vector<double> baseline;  // per bin
  bool converged = false;
  int iterations = 0;
  double final_gradient_norm = 0.0;
  std::vector<double> loglik_path;
  DesignSpec design;  // intercept always off
  BreslowVariant variant = BreslowVariant::as_written;
};

// At-risk person-bins arranged for the partial likelihood.
struct RiskSetData {
  Eigen::MatrixXd X;
  std::vector<int> bin;
  std::vector<std::uint8_t> event;
  int bins = 0;

  static RiskSetData from_panel(const PanelDataset& ds, const DesignSpec& spec);
};

// Log partial likelihood with Breslow ties, and its score.
ObjectiveValue partial_loglik(const RiskSetData& data, const Eigen::VectorXd& gamma);

// The intercept, if requested, is dropped: it is absorbed by the baseline.
// Throws NoEvents, NotConverged, SingularInformation.
RateFit fit_proportional_rate(const PanelDataset& ds, const DesignSpec& spec,
                              BreslowVariant variant = BreslowVariant::as_written,
                              const RateOptions& options = {});

std::vector<double> breslow_baseline(const PanelDataset& ds, const DesignSpec& spec,
                                     const Eigen::VectorXd& gamma,
                                     BreslowVariant variant);
std::vector<double> breslow_baseline(const RiskSetData& data,
                                     const Eigen::VectorXd& gamma,
                                     BreslowVariant variant);

// Either model of the observation process.
using IntensityModel = std::variant<RateFit, LogisticFit>;

// Per-row E[dN | V]: xi * lambda0(bin) * exp(gamma'V) for a rate fit (or
// xi * exp(gamma'V) when `include_baseline` is false), xi * expit(gamma'V)
// for a logistic fit. Zero on rows not at risk.
std::vector<double> predict_intensity(const PanelDataset& ds,
                                      const IntensityModel& model,
                                      bool include_baseline = true);

// ---------------------------------------------------------------------------
// Conditional outcome means

enum class OutcomeConditioning { k_conditional, v_conditional };

struct OutcomeMeanFit {
  int arm = 0;
  OutcomeConditioning conditioning = OutcomeConditioning::k_conditional;
  bool stratified = true;  // fitted within the arm stratum
  Eigen::VectorXd coefficients;
  std::vector<std::string> design_labels;
  DesignSpec design;  // treatment terms removed when stratified

  // mu_a at every frame row, with treatment terms evaluated at `arm`.
  std::vector<double> predict(const PanelDataset& ds) const;
};

struct OutcomeFitOptions {
  // V-conditional only: fit within the arm stratum instead of pooled.
  bool stratified_v = false;
  // Optional per-frame-row weights (e.g. inverse intensity of visit).
  std::span<const double> row_weights;
};

// Least squares on observed-outcome rows. K-conditional fits use the rows of
// arm `arm`; V-conditional fits pool both arms with treatment in the design.
// Throws InsufficientRows, RankDeficientDesign.
OutcomeMeanFit fit_outcome_mean(const PanelDataset& ds, int arm,
                                OutcomeConditioning conditioning,
                                const DesignSpec& spec,
                                const OutcomeFitOptions& options = {});

// K-conditional mean fitted to a per-row pseudo-outcome over every at-risk
// row of arm `arm` (observed or not).
OutcomeMeanFit fit_outcome_mean_to_pseudo(const PanelDataset& ds, int arm,
                                          const DesignSpec& spec,
                                          std::span<const double> pseudo_outcome);

// Weighted least squares via column-pivoted QR.
// Throws InsufficientRows (rows < columns + 1) or RankDeficientDesign.
Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& y,
                                    std::span<const double> weights = {});

inline double expit(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace aaiiw
