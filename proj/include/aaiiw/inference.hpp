#pragma once

// Plug-in asymptotic variances, subject-level bootstrap intervals and
// weighted covariate balance tables.

#include "aaiiw/estimators.hpp"
#include "aaiiw/panel.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace aaiiw {

enum class PlugIn { oracle, fitted };

const char* to_string(PlugIn p) noexcept;

struct VarianceEstimate {
  double sigma2_fiptm = 0.0;
  double sigma2_aaiiw = 0.0;
  PlugIn plug_in = PlugIn::fitted;
};

// sigma2_fiptm sums, over arms, the mean over observed arm-a rows of
// (Y - mu_a)^2 / (rho * e_a). sigma2_aaiiw subtracts mu_a^2 times the mean
// over at-risk rows of (1 + e_a) / e_a for each arm. `propensity` is
// pr(A = 1 | K) and `observation` is E[dN | V], both per frame row.
// Throws PositivityViolation when a contributing e_a is outside (0, 1) or
// rho is not positive.
VarianceEstimate asymptotic_variances(const PanelDataset& ds,
                                      std::span<const double> propensity,
                                      std::span<const double> observation,
                                      const MsmParams& params, PlugIn plug_in);

struct BootstrapCI {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::size_t replicates = 0;  // successful resamples
  std::size_t skipped = 0;     // degenerate resamples
  std::uint64_t seed = 0;
  std::vector<double> estimates;  // beta1 per successful resample, in replicate order
};

// Full estimator recipe applied to a dataset, returning beta1.
using EffectPipeline = std::function<double(const PanelDataset&)>;

// Resamples subjects with replacement (subjects ordered by id first), reruns
// the pipeline on each resample and returns the empirical percentile
// interval. A resample whose pipeline throws is skipped; more than 10%
// skipped throws ResampleDegenerate. Deterministic in `seed` for any `jobs`.
BootstrapCI bootstrap_ci(const PanelDataset& ds, const EffectPipeline& pipeline,
                         std::size_t replicates, std::uint64_t seed, double level = 0.95,
                         unsigned jobs = 1);

enum class Stratify { treatment, observed };

const char* to_string(Stratify s) noexcept;

struct BalanceRow {
  std::string covariate;
  int stratum = 0;
  double unweighted_mean = 0.0;
  double unweighted_sd = 0.0;
  double weighted_mean = 0.0;
  double weighted_sd = 0.0;
  std::size_t n = 0;
};

struct BalanceTable {
  Stratify stratify_by = Stratify::treatment;
  std::vector<BalanceRow> rows;

  // Columns: covariate, stratum, unweighted_mean, unweighted_sd,
  // weighted_mean, weighted_sd, n.
  void write_csv(std::ostream& out) const;
};

// Per covariate and stratum, over at-risk rows: mean and standard deviation,
// unweighted and with `row_weights` as frequency weights (empty means unit
// weights). Standard deviations use sum w (x - m)^2 / (sum w - 1). Stratifying
// by observation adds the treatment as a covariate.
BalanceTable balance_table(const PanelDataset& ds, std::span<const double> row_weights,
                           Stratify stratify_by);

}  // namespace aaiiw
