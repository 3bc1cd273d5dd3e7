#include "aaiiw/montecarlo.hpp"

#include "aaiiw/errors.hpp"
#include "aaiiw/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace aaiiw {

MonteCarloConfig monte_carlo_config(Mechanism mechanism, int gamma_set_index, std::size_t n,
                                    std::size_t replicates, std::uint64_t base_seed) {
  MonteCarloConfig cfg;
  cfg.dgp = default_config(mechanism, gamma_set_index, n);
  cfg.gamma_set = gamma_set_index;
  cfg.replicates = replicates;
  cfg.base_seed = base_seed;
  cfg.options.intensity = intensity_kind_for(mechanism);
  cfg.correct = correct_designs(mechanism);
  cfg.misspecified = misspecified_designs(mechanism);
  return cfg;
}

namespace {

struct ReplicateOutcome {
  std::vector<std::optional<MsmParams>> params;
  std::vector<std::string> errors;
  double events[2] = {0.0, 0.0};
};

}  // namespace

MonteCarloReport run_monte_carlo(const MonteCarloConfig& config, unsigned jobs) {
  if (config.replicates == 0) {
    throw Error(ErrorKind::invalid_input, "Monte Carlo needs at least one replicate");
  }
  config.dgp.validate();
  const std::size_t k = config.recipes.size();
  std::vector<ReplicateOutcome> outcomes(config.replicates);

  parallel_for(config.replicates, jobs, [&](std::size_t r) {
    ReplicateOutcome& out = outcomes[r];
    out.params.assign(k, std::nullopt);
    out.errors.assign(k, "");
    const PanelDataset ds = simulate_cohort(config.dgp, derive_seed(config.base_seed, r));
    const auto& f = ds.frame();
    for (std::size_t row = 0; row < f.rows(); ++row) {
      if (f.at_risk[row] && f.observed[row]) out.events[f.treatment[row]] += 1.0;
    }
    for (double& e : out.events) e /= static_cast<double>(ds.subject_count());
    NuisanceCache cache(ds, config.correct, config.misspecified, config.options);
    for (std::size_t j = 0; j < k; ++j) {
      try {
        out.params[j] = run_estimator(config.recipes[j], cache).params;
      } catch (const Error& e) {
        out.errors[j] = e.what();
      }
    }
  });

  MonteCarloReport report;
  const std::string mechanism = to_string(config.dgp.mechanism);
  const double truth = config.dgp.treatment_effect;
  double events[2] = {0.0, 0.0};
  for (const auto& o : outcomes) {
    events[0] += o.events[0];
    events[1] += o.events[1];
  }
  for (std::size_t j = 0; j < k; ++j) {
    MonteCarloCell cell;
    cell.mechanism = mechanism;
    cell.gamma_set = config.gamma_set;
    cell.n = config.dgp.n;
    cell.estimator = config.recipes[j].label;
    cell.scenario = config.recipes[j].scenario.tag;
    cell.mean_events_a0 = events[0] / static_cast<double>(config.replicates);
    cell.mean_events_a1 = events[1] / static_cast<double>(config.replicates);
    double sum = 0.0;
    for (std::size_t r = 0; r < config.replicates; ++r) {
      const auto& p = outcomes[r].params[j];
      ReplicateRecord rec{mechanism, config.gamma_set, config.dgp.n, r, cell.estimator, p,
                          outcomes[r].errors[j]};
      report.replicates.push_back(std::move(rec));
      if (!p) {
        ++cell.failures;
        continue;
      }
      ++cell.replicates;
      sum += p->beta1;
    }
    if (cell.replicates > 0) {
      const double mean = sum / static_cast<double>(cell.replicates);
      double sq_err = 0.0;
      double sq_dev = 0.0;
      for (std::size_t r = 0; r < config.replicates; ++r) {
        const auto& p = outcomes[r].params[j];
        if (!p) continue;
        sq_err += (p->beta1 - truth) * (p->beta1 - truth);
        sq_dev += (p->beta1 - mean) * (p->beta1 - mean);
      }
      cell.bias = mean - truth;
      cell.mse = sq_err / static_cast<double>(cell.replicates);
      cell.variance = sq_dev / static_cast<double>(cell.replicates);
    } else {
      cell.bias = cell.mse = cell.variance = std::numeric_limits<double>::quiet_NaN();
    }
    report.cells.push_back(cell);
  }
  return report;
}

const MonteCarloCell* MonteCarloReport::find(const std::string& estimator, int gamma_set) const {
  for (const auto& c : cells) {
    if (c.estimator == estimator && (gamma_set < 0 || c.gamma_set == gamma_set)) return &c;
  }
  return nullptr;
}

double MonteCarloReport::max_failure_fraction() const {
  double worst = 0.0;
  for (const auto& c : cells) worst = std::max(worst, c.failure_fraction());
  return worst;
}

void MonteCarloReport::append(const MonteCarloReport& other) {
  cells.insert(cells.end(), other.cells.begin(), other.cells.end());
  replicates.insert(replicates.end(), other.replicates.begin(), other.replicates.end());
}

void MonteCarloReport::write_csv(std::ostream& out) const {
  out << "mechanism,gamma_set,n,estimator,scenario,R,bias,mse,variance,mean_events_a0,"
         "mean_events_a1,failures\n";
  for (const auto& c : cells) {
    out << c.mechanism << ',' << c.gamma_set << ',' << c.n << ',' << c.estimator << ','
        << c.scenario << ',' << c.replicates << ',' << format_double(c.bias) << ','
        << format_double(c.mse) << ',' << format_double(c.variance) << ','
        << format_double(c.mean_events_a0) << ',' << format_double(c.mean_events_a1) << ','
        << c.failures << '\n';
  }
}

void MonteCarloReport::write_replicates_csv(std::ostream& out) const {
  out << "mechanism,gamma_set,n,replicate,estimator,beta0,beta1,error\n";
  for (const auto& r : replicates) {
    out << r.mechanism << ',' << r.gamma_set << ',' << r.n << ',' << r.replicate << ','
        << r.estimator << ',';
    if (r.params) {
      out << format_double(r.params->beta0) << ',' << format_double(r.params->beta1) << ',';
    } else {
      out << ",,";
    }
    std::string err = r.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ';';
    }
    out << err << '\n';
  }
}

}  // namespace aaiiw
