#include "aaiiw/inference.hpp"

#include "aaiiw/errors.hpp"
#include "aaiiw/parallel.hpp"
#include "aaiiw/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>

namespace aaiiw {

const char* to_string(PlugIn p) noexcept {
  return p == PlugIn::oracle ? "oracle" : "fitted";
}

const char* to_string(Stratify s) noexcept {
  return s == Stratify::treatment ? "treatment" : "observed";
}

VarianceEstimate asymptotic_variances(const PanelDataset& ds,
                                      std::span<const double> propensity,
                                      std::span<const double> observation,
                                      const MsmParams& params, PlugIn plug_in) {
  const auto& f = ds.frame();
  if (propensity.size() != f.rows() || observation.size() != f.rows()) {
    throw Error(ErrorKind::invalid_input, "variance inputs must cover every frame row");
  }
  double spread_sum[2] = {0.0, 0.0};
  double spread_count[2] = {0.0, 0.0};
  double ratio_sum[2] = {0.0, 0.0};
  double at_risk = 0.0;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (!f.at_risk[r]) continue;
    const double p1 = propensity[r];
    if (!(p1 > 0.0 && p1 < 1.0)) {
      throw Error(ErrorKind::positivity_violation,
                  "propensity " + format_double(p1) + " at row " + std::to_string(r) +
                      " is outside (0, 1)");
    }
    at_risk += 1.0;
    for (int a = 0; a < 2; ++a) {
      const double e = a == 1 ? p1 : 1.0 - p1;
      ratio_sum[a] += (1.0 + e) / e;
    }
    if (!f.observed[r]) continue;
    const double rho = observation[r];
    if (!(rho > 0.0) || !std::isfinite(rho)) {
      throw Error(ErrorKind::positivity_violation,
                  "observation intensity at observed row " + std::to_string(r) +
                      " is not positive");
    }
    const int a = f.treatment[r];
    const double e = a == 1 ? p1 : 1.0 - p1;
    const double dev = f.outcome[r] - params.arm_mean(a);
    spread_sum[a] += dev * dev / (rho * e);
    spread_count[a] += 1.0;
  }
  if (spread_count[0] == 0.0 || spread_count[1] == 0.0) {
    throw Error(ErrorKind::no_observed_events, "variance needs observed outcomes in both arms");
  }
  VarianceEstimate v;
  v.plug_in = plug_in;
  v.sigma2_fiptm = spread_sum[0] / spread_count[0] + spread_sum[1] / spread_count[1];
  v.sigma2_aaiiw = v.sigma2_fiptm;
  for (int a = 0; a < 2; ++a) {
    const double mu = params.arm_mean(a);
    v.sigma2_aaiiw -= mu * mu * ratio_sum[a] / at_risk;
  }
  return v;
}

namespace {

double percentile(std::vector<double> sorted_values, double q) {
  std::sort(sorted_values.begin(), sorted_values.end());
  const double pos = q * static_cast<double>(sorted_values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted_values.size() - 1);
  return sorted_values[lo] + (pos - static_cast<double>(lo)) * (sorted_values[hi] - sorted_values[lo]);
}

}  // namespace

BootstrapCI bootstrap_ci(const PanelDataset& ds, const EffectPipeline& pipeline,
                         std::size_t replicates, std::uint64_t seed, double level,
                         unsigned jobs) {
  if (replicates < 100) {
    throw Error(ErrorKind::invalid_input, "bootstrap needs at least 100 replicates");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(ErrorKind::invalid_input, "confidence level must lie in (0, 1)");
  }
  const std::size_t n = ds.subject_count();
  if (n == 0) throw Error(ErrorKind::resample_degenerate, "dataset has no subjects");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto subjects = ds.subjects();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return subjects[a].subject_id < subjects[b].subject_id;
  });

  std::vector<std::optional<double>> results(replicates);
  parallel_for(replicates, jobs, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(seed, b));
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::vector<std::size_t> draw(n);
    for (auto& d : draw) d = order[pick(rng)];
    try {
      const double est = pipeline(select_subjects(ds, draw));
      if (std::isfinite(est)) results[b] = est;
    } catch (const Error&) {
      // Degenerate resample (missing arm, no events, failed fit): skipped.
    }
  });

  BootstrapCI ci;
  ci.level = level;
  ci.seed = seed;
  for (const auto& r : results) {
    if (r) ci.estimates.push_back(*r);
  }
  ci.replicates = ci.estimates.size();
  ci.skipped = replicates - ci.replicates;
  if (static_cast<double>(ci.skipped) > 0.1 * static_cast<double>(replicates)) {
    throw Error(ErrorKind::resample_degenerate,
                std::to_string(ci.skipped) + " of " + std::to_string(replicates) +
                    " resamples were degenerate (limit 10%)");
  }
  ci.lower = percentile(ci.estimates, (1.0 - level) / 2.0);
  ci.upper = percentile(ci.estimates, 1.0 - (1.0 - level) / 2.0);
  return ci;
}

void BalanceTable::write_csv(std::ostream& out) const {
  out << "covariate,stratum,unweighted_mean,unweighted_sd,weighted_mean,weighted_sd,n\n";
  for (const auto& r : rows) {
    out << r.covariate << ',' << r.stratum << ',' << format_double(r.unweighted_mean) << ','
        << format_double(r.unweighted_sd) << ',' << format_double(r.weighted_mean) << ','
        << format_double(r.weighted_sd) << ',' << r.n << '\n';
  }
}

BalanceTable balance_table(const PanelDataset& ds, std::span<const double> row_weights,
                           Stratify stratify_by) {
  const auto& f = ds.frame();
  if (!row_weights.empty() && row_weights.size() != f.rows()) {
    throw Error(ErrorKind::invalid_input, "balance weights must cover every frame row");
  }
  struct Column {
    std::string name;
    std::function<double(std::size_t)> value;
  };
  std::vector<Column> columns;
  if (stratify_by == Stratify::observed) {
    columns.push_back({"treatment", [&](std::size_t r) { return double(f.treatment[r]); }});
  }
  const auto names = ds.columns().all();
  for (std::size_t j = 0; j < names.size(); ++j) {
    columns.push_back({names[j], [&f, j](std::size_t r) {
                         return f.covariates(static_cast<Eigen::Index>(r),
                                             static_cast<Eigen::Index>(j));
                       }});
  }

  BalanceTable table;
  table.stratify_by = stratify_by;
  for (const auto& col : columns) {
    for (int s = 0; s < 2; ++s) {
      double n = 0.0, sum = 0.0, wsum = 0.0, wxsum = 0.0;
      for (std::size_t r = 0; r < f.rows(); ++r) {
        if (!f.at_risk[r]) continue;
        const int stratum = stratify_by == Stratify::treatment ? f.treatment[r] : f.observed[r];
        if (stratum != s) continue;
        const double x = col.value(r);
        const double w = row_weights.empty() ? 1.0 : row_weights[r];
        n += 1.0;
        sum += x;
        wsum += w;
        wxsum += w * x;
      }
      BalanceRow row;
      row.covariate = col.name;
      row.stratum = s;
      row.n = static_cast<std::size_t>(n);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.unweighted_mean = n > 0 ? sum / n : nan;
      row.weighted_mean = wsum > 0 ? wxsum / wsum : nan;
      double ss = 0.0, wss = 0.0;
      for (std::size_t r = 0; r < f.rows(); ++r) {
        if (!f.at_risk[r]) continue;
        const int stratum = stratify_by == Stratify::treatment ? f.treatment[r] : f.observed[r];
        if (stratum != s) continue;
        const double x = col.value(r);
        const double w = row_weights.empty() ? 1.0 : row_weights[r];
        ss += (x - row.unweighted_mean) * (x - row.unweighted_mean);
        wss += w * (x - row.weighted_mean) * (x - row.weighted_mean);
      }
      row.unweighted_sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : nan;
      row.weighted_sd = wsum > 1 ? std::sqrt(wss / (wsum - 1.0)) : nan;
      table.rows.push_back(row);
    }
  }
  return table;
}

}  // namespace aaiiw
