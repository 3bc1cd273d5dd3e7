#pragma once

// Weights and estimating-equation estimators of the marginal structural
// model E[Y^a] = beta0 + beta1 * a on the discrete grid. Integrals against
// dN or dM are sums over bins; the per-bin baseline already absorbs dt.

#include "aaiiw/nuisance.hpp"
#include "aaiiw/panel.hpp"

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace aaiiw {

struct MsmParams {
  double beta0 = 0.0;  // mean potential outcome under a = 0
  double beta1 = 0.0;  // marginal treatment effect

  double arm_mean(int arm) const { return beta0 + beta1 * arm; }
};

enum class EstimatorKind { ols, ipt, iiv, fiptm, aaiiw };

const char* to_string(EstimatorKind kind) noexcept;
EstimatorKind estimator_from_string(const std::string& name);

// Weights are clipped to the [lower, upper] empirical quantiles of their own
// distribution over the rows where they are used. [0, 1] disables clipping.
struct ClipBounds {
  double lower_quantile = 0.0;
  double upper_quantile = 1.0;

  bool active() const { return lower_quantile > 0.0 || upper_quantile < 1.0; }
};

// Per-frame-row weights. Rows not at risk carry 0 in every vector, as do
// iiv entries of non-event rows with zero fitted intensity.
struct WeightSet {
  std::vector<double> propensity;  // fitted pr(A = 1 | K)
  std::vector<double> intensity;   // fitted E[dN | V] (baseline omitted if stabilized)
  std::vector<double> ipt;         // 1 / e_a for the arm actually taken
  std::vector<double> iiv;         // 1 / intensity
  std::size_t clipped_count = 0;
  ClipBounds clip;
  bool stabilized = false;         // baseline cancelled from the intensity
  std::vector<std::string> provenance;

  // Propensity of arm `arm` at row r.
  double arm_propensity(std::size_t r, int arm) const {
    return arm == 1 ? propensity[r] : 1.0 - propensity[r];
  }
};

// Evaluates the fitted models on every row. `stabilized` drops the Breslow
// baseline of a rate fit; logistic intensities are probabilities and are
// used as they are. Throws NonFinitePropensity, ZeroIntensityAtEvent.
WeightSet compute_weights(const PanelDataset& ds, const LogisticFit& propensity,
                          const IntensityModel& intensity, bool stabilized = false,
                          const ClipBounds& clip = {});

// Same from raw per-row predictions (oracle or hand-set nuisances).
WeightSet make_weights(const PanelDataset& ds, std::vector<double> propensity,
                       std::vector<double> intensity, bool stabilized = false,
                       const ClipBounds& clip = {});

// Weights that are 1 at every at-risk row; propensity 0.5 and intensity 1.
WeightSet unit_weights(const PanelDataset& ds);

struct EstimateResult {
  MsmParams params;
  EstimatorKind kind = EstimatorKind::ols;
  std::array<double, 2> ee_residual{};  // arm-0 and arm-1 equations at the solution
  std::vector<std::string> provenance;
};

// Per-row outcome-mean predictions, indexed by arm.
struct OutcomePredictions {
  std::array<std::vector<double>, 2> mu_k;
  std::array<std::vector<double>, 2> mu_v;
};

OutcomePredictions predict_outcome_means(const PanelDataset& ds,
                                         const std::array<OutcomeMeanFit, 2>& mu_k,
                                         const std::array<OutcomeMeanFit, 2>& mu_v);

// How the mean-given-V term enters the dM augmentation.
// indicator: 1{A=a} mu_a{V} / e_a, the form whose conditional expectation
// given (A, K, V) matches the dN term, required for consistency when the
// observation model is wrong. plain: mu_a{V} / e_a without the indicator.
enum class AugmentationForm { indicator, plain };

const char* to_string(AugmentationForm form) noexcept;
AugmentationForm augmentation_from_string(const std::string& name);

// How the weighted arm equations of IPT and FIPTM are normalized.
// total: the zeta term carries no treatment indicator, so the arm mean is the
//   weighted sum over arm-a observations divided by the weight total over
//   every observation (Horvitz-Thompson type).
// per_arm: the zeta term carries the indicator and the IPT weight, giving
//   the weighted mean over arm-a observations (Hajek type).
// IIV is always per arm: without an IPT weight the total form estimates
// pr(A = a) E[Y | A = a] rather than an arm mean.
enum class Normalization { total, per_arm };

const char* to_string(Normalization n) noexcept;
Normalization normalization_from_string(const std::string& name);

// Everything an estimating equation reads, per frame row.
struct EquationInputs {
  EstimatorKind kind = EstimatorKind::ols;
  const PanelDataset* ds = nullptr;
  const WeightSet* weights = nullptr;              // all but OLS
  const OutcomePredictions* outcomes = nullptr;    // AAIIW only
  AugmentationForm form = AugmentationForm::indicator;
  Normalization normalization = Normalization::total;  // IPT and FIPTM only
};

// Value of the arm-`arm` estimating equation at arm mean `zeta`, summed
// row by row from the defining formula.
double evaluate_equation(const EquationInputs& in, int arm, double zeta);

// Solves the two equations sequentially with a bracketing root finder
// (arm 0 for beta0, then arm 1 for beta1 given beta0).
MsmParams solve_by_root_finding(const EquationInputs& in);

// Regression of observed Y on {1, A}, unweighted. Throws InsufficientRows.
EstimateResult estimate_ols(const PanelDataset& ds);

// Inverse-probability-of-treatment weighted arm means. Throws NoObservedEvents.
EstimateResult estimate_ipt(const PanelDataset& ds, const WeightSet& w,
                            Normalization normalization = Normalization::total);

// Inverse-intensity-of-visit weighted arm means, ignoring confounding.
EstimateResult estimate_iiv(const PanelDataset& ds, const WeightSet& w);

// Doubly weighted estimator. Throws NoObservedEvents.
EstimateResult estimate_fiptm(const PanelDataset& ds, const WeightSet& w,
                              Normalization normalization = Normalization::total);

// dN - xi * E[dN | V] per row, from the unstabilized fitted intensity.
std::vector<double> martingale_residuals(const PanelDataset& ds,
                                         const IntensityModel& intensity);

// Augmented doubly weighted estimator. The weight set must carry the
// unstabilized intensity. Throws NoObservedEvents, MissingBaseline.
EstimateResult estimate_aaiiw(const PanelDataset& ds, const WeightSet& w,
                              const OutcomePredictions& outcomes,
                              AugmentationForm form = AugmentationForm::indicator);

EstimateResult estimate_aaiiw(const PanelDataset& ds, const WeightSet& w,
                              const std::array<OutcomeMeanFit, 2>& mu_k,
                              const std::array<OutcomeMeanFit, 2>& mu_v,
                              AugmentationForm form = AugmentationForm::indicator);

}  // namespace aaiiw
