#pragma once

// Robustness scenarios and end-to-end estimator recipes: which nuisance
// designs are correct or deliberately misspecified, how each nuisance model
// is fitted, and which estimator consumes them.

#include "aaiiw/estimators.hpp"
#include "aaiiw/nuisance.hpp"
#include "aaiiw/simgen.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace aaiiw {

struct NuisanceDesigns {
  DesignSpec propensity;
  DesignSpec intensity;
  DesignSpec mu_k;
  DesignSpec mu_v;

  bool operator==(const NuisanceDesigns&) const = default;
};

// Designs matching the simulated data: propensity {1, K1, K2, K3};
// intensity {A, M, K1, K2, K3, P} (with an intercept for the logistic
// observation model); mean given K {1, A, K1, K2, K3, P}, fitted within arm so
// the treatment term drops; mean given V {1, A, M, K1, K2, K3, P} pooled.
NuisanceDesigns correct_designs(Mechanism mechanism);

// Default misspecified recipes: propensity {1, sine(K1)}; intensity
// {sine(M), K2}; both outcome means reduced to intercept plus treatment.
NuisanceDesigns misspecified_designs(Mechanism mechanism);

// Which of the four nuisance models use the correct design.
struct ScenarioSpec {
  std::string tag;
  bool propensity_correct = true;
  bool intensity_correct = true;
  bool mu_k_correct = true;
  bool mu_v_correct = true;

  // Tags: all-correct, a, b, c, d, ipt-only, iiv-only, none.
  static ScenarioSpec from_tag(const std::string& tag);
  NuisanceDesigns designs(const NuisanceDesigns& correct,
                          const NuisanceDesigns& misspecified) const;
  bool operator==(const ScenarioSpec&) const = default;
};

std::vector<std::string> scenario_tags();

enum class IntensityKind { proportional_rate, logistic };

const char* to_string(IntensityKind kind) noexcept;
IntensityKind intensity_kind_from_string(const std::string& name);

// Rows used to fit the mean given K.
// observed_rows: least squares on observed outcomes of the arm.
// iiv_weighted: the same rows weighted by the inverse fitted intensity.
// doubly_robust: every at-risk row of the arm, with the pseudo-outcome
//   mu_a{V} + dN / rho * (Y - mu_a{V}) from the scenario's own fits.
enum class MeanGivenKFit { observed_rows, iiv_weighted, doubly_robust };

const char* to_string(MeanGivenKFit mode) noexcept;
MeanGivenKFit mean_given_k_fit_from_string(const std::string& name);

struct PipelineOptions {
  IntensityKind intensity = IntensityKind::logistic;
  BreslowVariant breslow = BreslowVariant::as_written;
  bool stabilized_dw = true;  // doubly weighted estimator drops the baseline
  AugmentationForm augmentation = AugmentationForm::indicator;
  Normalization normalization = Normalization::total;
  MeanGivenKFit mean_given_k = MeanGivenKFit::doubly_robust;
  bool stratified_v = false;
  ClipBounds clip;
  LogisticOptions logistic;
  RateOptions rate;
};

// Intensity model family appropriate for a simulated mechanism.
IntensityKind intensity_kind_for(Mechanism mechanism);

struct NuisanceSuite {
  LogisticFit propensity;
  IntensityModel intensity;
  std::array<OutcomeMeanFit, 2> mu_k;
  std::array<OutcomeMeanFit, 2> mu_v;
};

// Fits the four nuisance models of a scenario.
NuisanceSuite scenario_nuisance_suite(const PanelDataset& ds, const ScenarioSpec& spec,
                                      const NuisanceDesigns& correct,
                                      const NuisanceDesigns& misspecified,
                                      const PipelineOptions& options = {});

// Lazily fitted nuisance models for one dataset, shared between recipes.
// Not thread-safe: one cache per dataset per worker.
class NuisanceCache {
 public:
  NuisanceCache(const PanelDataset& ds, NuisanceDesigns correct, NuisanceDesigns misspecified,
                PipelineOptions options);

  const LogisticFit& propensity(bool correct);
  const IntensityModel& intensity(bool correct);
  // An absent model is replaced by a constant: propensity 1/2 with unit IPT
  // weights, or unit intensity.
  const WeightSet& weights(std::optional<bool> propensity_correct,
                           std::optional<bool> intensity_correct, bool stabilized);
  const std::array<OutcomeMeanFit, 2>& mu_v(bool correct);
  const std::array<OutcomeMeanFit, 2>& mu_k(const ScenarioSpec& spec);

  const PanelDataset& dataset() const { return ds_; }
  const PipelineOptions& options() const { return options_; }

 private:
  const DesignSpec& pick(bool correct, DesignSpec NuisanceDesigns::*member) const;

  const PanelDataset& ds_;
  NuisanceDesigns correct_;
  NuisanceDesigns misspecified_;
  PipelineOptions options_;
  std::array<std::optional<LogisticFit>, 2> propensity_;
  std::array<std::optional<IntensityModel>, 2> intensity_;
  std::map<std::tuple<int, int, bool>, WeightSet> weights_;
  std::array<std::optional<std::array<OutcomeMeanFit, 2>>, 2> mu_v_;
  std::map<std::tuple<bool, int, int>, std::array<OutcomeMeanFit, 2>> mu_k_;
};

// One estimator fed by one scenario's nuisance fits.
struct EstimatorRecipe {
  std::string label;  // e.g. "DWiptc"
  EstimatorKind kind = EstimatorKind::ols;
  ScenarioSpec scenario;

  bool operator==(const EstimatorRecipe&) const = default;
};

// OLS, IPTc, IPTnc, DWc, DWiptc, DWiivc, DWnc, AAIIWc, AAIIWs.a .. AAIIWs.d.
std::vector<EstimatorRecipe> paper_cells();
EstimatorRecipe recipe_from_label(const std::string& label);

// Weight set a recipe consumes (fitted on first use); nullptr for OLS.
const WeightSet* recipe_weights(const EstimatorRecipe& recipe, NuisanceCache& cache);

EstimateResult run_estimator(const EstimatorRecipe& recipe, NuisanceCache& cache);

// Fits everything from scratch for a single recipe.
EstimateResult run_estimator(const PanelDataset& ds, const EstimatorRecipe& recipe,
                             const NuisanceDesigns& correct,
                             const NuisanceDesigns& misspecified,
                             const PipelineOptions& options = {});

}  // namespace aaiiw
