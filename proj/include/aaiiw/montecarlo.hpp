#pragma once

// Monte Carlo driver: simulate, fit every recipe's nuisance models, estimate
// and aggregate bias, MSE and variance of the treatment effect per recipe.

#include "aaiiw/pipeline.hpp"
#include "aaiiw/simgen.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace aaiiw {

struct MonteCarloConfig {
  DgpConfig dgp;
  int gamma_set = 1;  // label carried into the report
  std::vector<EstimatorRecipe> recipes = paper_cells();
  std::size_t replicates = 100;
  std::uint64_t base_seed = 1;
  PipelineOptions options;
  NuisanceDesigns correct = correct_designs(Mechanism::bernoulli);
  NuisanceDesigns misspecified = misspecified_designs(Mechanism::bernoulli);
};

// Config with designs and intensity model matched to the mechanism.
MonteCarloConfig monte_carlo_config(Mechanism mechanism, int gamma_set, std::size_t n,
                                    std::size_t replicates, std::uint64_t base_seed);

struct MonteCarloCell {
  std::string mechanism;
  int gamma_set = 0;
  std::size_t n = 0;
  std::string estimator;
  std::string scenario;
  std::size_t replicates = 0;  // successful
  double bias = 0.0;
  double mse = 0.0;
  double variance = 0.0;
  double mean_events_a0 = 0.0;  // observed outcomes per subject, untreated bins
  double mean_events_a1 = 0.0;
  std::size_t failures = 0;

  double failure_fraction() const {
    const auto total = replicates + failures;
    return total == 0 ? 0.0 : static_cast<double>(failures) / static_cast<double>(total);
  }
};

struct ReplicateRecord {
  std::string mechanism;
  int gamma_set = 0;
  std::size_t n = 0;
  std::size_t replicate = 0;
  std::string estimator;
  std::optional<MsmParams> params;  // empty on failure
  std::string error;
};

struct MonteCarloReport {
  std::vector<MonteCarloCell> cells;
  std::vector<ReplicateRecord> replicates;

  const MonteCarloCell* find(const std::string& estimator, int gamma_set = -1) const;
  double max_failure_fraction() const;
  void append(const MonteCarloReport& other);

  // Columns: mechanism, gamma_set, n, estimator, scenario, R, bias, mse,
  // variance, mean_events_a0, mean_events_a1, failures.
  void write_csv(std::ostream& out) const;
  void write_replicates_csv(std::ostream& out) const;
};

// Deterministic in (config, base_seed) for any `jobs`: replicate r uses
// derive_seed(base_seed, r) and results are aggregated in replicate order.
// Estimator failures are recorded per replicate and counted, not rethrown.
MonteCarloReport run_monte_carlo(const MonteCarloConfig& config, unsigned jobs = 1);

// Fixed-width table grouped by gamma set with estimator rows in the order
// OLS, IPTc, IPTnc, DWc, DWiptc, DWiivc, DWnc, AAIIWc, AAIIWs.a .. AAIIWs.d.
// Magnitudes below 0.01 print as "<0.01".
std::string render_table(const MonteCarloReport& report);

std::string format_table_value(double value);

}  // namespace aaiiw
