#include "aaiiw/errors.hpp"
#include "aaiiw/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aaiiw {

namespace {

double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// Clips the entries of `w` selected by `use` to their own quantile range.
std::size_t clip_weights(std::vector<double>& w, const std::vector<bool>& use,
                         const ClipBounds& clip) {
  if (!clip.active()) return 0;
  if (!(clip.lower_quantile >= 0.0 && clip.lower_quantile <= clip.upper_quantile &&
        clip.upper_quantile <= 1.0)) {
    throw Error(ErrorKind::invalid_input, "clip quantiles must satisfy 0 <= lower <= upper <= 1");
  }
  std::vector<double> pool;
  for (std::size_t r = 0; r < w.size(); ++r) {
    if (use[r]) pool.push_back(w[r]);
  }
  if (pool.empty()) return 0;
  const double lo = quantile(pool, clip.lower_quantile);
  const double hi = quantile(pool, clip.upper_quantile);
  std::size_t clipped = 0;
  for (std::size_t r = 0; r < w.size(); ++r) {
    if (!use[r]) continue;
    const double c = std::clamp(w[r], lo, hi);
    if (c != w[r]) ++clipped;
    w[r] = c;
  }
  return clipped;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

}  // namespace

WeightSet make_weights(const PanelDataset& ds, std::vector<double> propensity,
                       std::vector<double> intensity, bool stabilized,
                       const ClipBounds& clip) {
  const auto& f = ds.frame();
  const std::size_t n = f.rows();
  if (propensity.size() != n || intensity.size() != n) {
    throw Error(ErrorKind::invalid_input, "weight inputs must cover every frame row");
  }
  WeightSet w;
  w.stabilized = stabilized;
  w.clip = clip;
  w.ipt.assign(n, 0.0);
  w.iiv.assign(n, 0.0);
  std::vector<bool> ipt_rows(n, false);
  std::vector<bool> iiv_rows(n, false);
  for (std::size_t r = 0; r < n; ++r) {
    if (!f.at_risk[r]) {
      propensity[r] = 0.0;
      intensity[r] = 0.0;
      continue;
    }
    const double p1 = propensity[r];
    if (!std::isfinite(p1) || p1 <= 0.0 || p1 >= 1.0 || !std::isfinite(1.0 / p1) ||
        !std::isfinite(1.0 / (1.0 - p1))) {
      throw Error(ErrorKind::non_finite_propensity,
                  "fitted propensity " + format_double(p1) + " at row " + std::to_string(r) +
                      " (subject index " + std::to_string(f.subject[r]) + ", bin " +
                      std::to_string(f.bin[r]) + ") violates positivity");
    }
    w.ipt[r] = 1.0 / (f.treatment[r] == 1 ? p1 : 1.0 - p1);
    ipt_rows[r] = true;
    const double rho = intensity[r];
    if (!std::isfinite(rho) || rho < 0.0) {
      throw Error(ErrorKind::invalid_input,
                  "fitted intensity at row " + std::to_string(r) + " is not a nonnegative number");
    }
    if (rho == 0.0) {
      if (f.observed[r]) {
        throw Error(ErrorKind::zero_intensity_at_event,
                    "zero fitted intensity at an observed row (subject index " +
                        std::to_string(f.subject[r]) + ", bin " + std::to_string(f.bin[r]) + ")");
      }
      continue;
    }
    w.iiv[r] = 1.0 / rho;
    if (!std::isfinite(w.iiv[r])) {
      throw Error(ErrorKind::zero_intensity_at_event,
                  "fitted intensity underflows at row " + std::to_string(r));
    }
    iiv_rows[r] = f.observed[r] != 0;
  }
  w.clipped_count = clip_weights(w.ipt, ipt_rows, clip) + clip_weights(w.iiv, iiv_rows, clip);
  w.propensity = std::move(propensity);
  w.intensity = std::move(intensity);
  return w;
}

WeightSet compute_weights(const PanelDataset& ds, const LogisticFit& propensity,
                          const IntensityModel& intensity, bool stabilized,
                          const ClipBounds& clip) {
  const Eigen::VectorXd p1 = propensity.predict(build_design(ds, propensity.design));
  const bool is_rate = std::holds_alternative<RateFit>(intensity);
  WeightSet w = make_weights(ds, std::vector<double>(p1.data(), p1.data() + p1.size()),
                             predict_intensity(ds, intensity, !(stabilized && is_rate)),
                             stabilized && is_rate, clip);
  w.provenance.push_back("propensity[" + join(propensity.design.labels()) + "]");
  if (is_rate) {
    const auto& rate = std::get<RateFit>(intensity);
    w.provenance.push_back(std::string("rate[") + join(rate.design.labels()) + "; breslow " +
                           to_string(rate.variant) + (w.stabilized ? "; stabilized" : "") + "]");
  } else {
    w.provenance.push_back("observation[" +
                           join(std::get<LogisticFit>(intensity).design.labels()) + "]");
  }
  return w;
}

WeightSet unit_weights(const PanelDataset& ds) {
  const std::size_t n = ds.frame().rows();
  WeightSet w = make_weights(ds, std::vector<double>(n, 0.5), std::vector<double>(n, 1.0));
  for (std::size_t r = 0; r < n; ++r) {
    if (ds.frame().at_risk[r]) w.ipt[r] = 1.0;
  }
  w.provenance.push_back("unit");
  return w;
}

std::vector<double> martingale_residuals(const PanelDataset& ds,
                                         const IntensityModel& intensity) {
  const auto& f = ds.frame();
  const auto rho = predict_intensity(ds, intensity, true);
  std::vector<double> dm(f.rows(), 0.0);
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (f.at_risk[r]) dm[r] = static_cast<double>(f.observed[r]) - rho[r];
  }
  return dm;
}

}  // namespace aaiiw
