#include "aaiiw/errors.hpp"
#include "aaiiw/estimators.hpp"

#include <boost/math/tools/roots.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

namespace aaiiw {

const char* to_string(EstimatorKind kind) noexcept {
  switch (kind) {
    case EstimatorKind::ols: return "OLS";
    case EstimatorKind::ipt: return "IPT";
    case EstimatorKind::iiv: return "IIV";
    case EstimatorKind::fiptm: return "FIPTM";
    case EstimatorKind::aaiiw: return "AAIIW";
  }
  return "?";
}

EstimatorKind estimator_from_string(const std::string& name) {
  for (auto k : {EstimatorKind::ols, EstimatorKind::ipt, EstimatorKind::iiv,
                 EstimatorKind::fiptm, EstimatorKind::aaiiw}) {
    if (name == to_string(k)) return k;
  }
  if (name == "DW") return EstimatorKind::fiptm;
  throw Error(ErrorKind::invalid_input, "unknown estimator '" + name + "'");
}

const char* to_string(AugmentationForm form) noexcept {
  switch (form) {
    case AugmentationForm::indicator: return "indicator";
    case AugmentationForm::plain: return "plain";
  }
  return "?";
}

AugmentationForm augmentation_from_string(const std::string& name) {
  if (name == "indicator") return AugmentationForm::indicator;
  if (name == "plain") return AugmentationForm::plain;
  throw Error(ErrorKind::invalid_input, "unknown augmentation form '" + name + "'");
}

const char* to_string(Normalization n) noexcept {
  switch (n) {
    case Normalization::total: return "total";
    case Normalization::per_arm: return "per-arm";
  }
  return "?";
}

Normalization normalization_from_string(const std::string& name) {
  if (name == "total") return Normalization::total;
  if (name == "per-arm") return Normalization::per_arm;
  throw Error(ErrorKind::invalid_input, "unknown normalization '" + name + "'");
}

OutcomePredictions predict_outcome_means(const PanelDataset& ds,
                                         const std::array<OutcomeMeanFit, 2>& mu_k,
                                         const std::array<OutcomeMeanFit, 2>& mu_v) {
  OutcomePredictions out;
  for (int a = 0; a < 2; ++a) {
    if (mu_k[a].arm != a || mu_v[a].arm != a) {
      throw Error(ErrorKind::invalid_input, "outcome-mean fits must be ordered by arm");
    }
    out.mu_k[a] = mu_k[a].predict(ds);
    out.mu_v[a] = mu_v[a].predict(ds);
  }
  return out;
}

namespace {

// Closed-form root of the linear arm equation: numerator and the coefficient
// of -zeta accumulated separately.
struct LinearParts {
  double numerator = 0.0;
  double denominator = 0.0;
};

void require_inputs(const EquationInputs& in) {
  if (in.ds == nullptr) throw Error(ErrorKind::invalid_input, "equation inputs lack a dataset");
  if (in.kind != EstimatorKind::ols && in.weights == nullptr) {
    throw Error(ErrorKind::invalid_input,
                std::string(to_string(in.kind)) + " requires a weight set");
  }
  if (in.kind == EstimatorKind::aaiiw) {
    if (in.outcomes == nullptr) {
      throw Error(ErrorKind::invalid_input, "AAIIW requires outcome-mean predictions");
    }
    if (in.weights->stabilized) {
      throw Error(ErrorKind::missing_baseline,
                  "AAIIW needs the unstabilized intensity (baseline included) in its "
                  "martingale residuals");
    }
  }
}

void require_events(const PanelDataset& ds) {
  const auto& f = ds.frame();
  bool seen[2] = {false, false};
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (f.at_risk[r] && f.observed[r]) seen[f.treatment[r]] = true;
  }
  for (int a = 0; a < 2; ++a) {
    if (!seen[a]) {
      throw Error(ErrorKind::no_observed_events,
                  "no observed outcome with treatment = " + std::to_string(a));
    }
  }
}

// Per-row pieces of the augmented equation for arm a: the dN weight, the
// dM weight (dM / rho) and the two bracketed terms without zeta.
struct AugmentedRow {
  bool used = false;
  double w = 0.0;
  double dm_over_rho = 0.0;
  double eta = 0.0;
  double aug = 0.0;
};

AugmentedRow augmented_row(const EquationInputs& in, std::size_t r, int arm) {
  const auto& f = in.ds->frame();
  const auto& ws = *in.weights;
  AugmentedRow row;
  const double rho = ws.intensity[r];
  if (!f.at_risk[r] || rho <= 0.0) return row;
  row.used = true;
  const double dn = f.observed[r];
  row.w = dn / rho;
  row.dm_over_rho = (dn - rho) / rho;
  const double e = ws.arm_propensity(r, arm);
  const double ind = f.treatment[r] == arm ? 1.0 : 0.0;
  const double mu_k = in.outcomes->mu_k[arm][r];
  const double mu_v = in.outcomes->mu_v[arm][r];
  const double k_term = (ind - e) / e * mu_k;
  row.eta = dn > 0.0 ? ind / e * f.outcome[r] - k_term : 0.0;
  const double v_term = in.form == AugmentationForm::indicator ? ind * mu_v / e : mu_v / e;
  row.aug = v_term - k_term;
  return row;
}

LinearParts linear_parts(const EquationInputs& in, int arm) {
  const auto& f = in.ds->frame();
  LinearParts p;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (in.kind == EstimatorKind::aaiiw) {
      const auto row = augmented_row(in, r, arm);
      if (!row.used) continue;
      p.numerator += row.w * row.eta - row.dm_over_rho * row.aug;
      p.denominator += row.w - row.dm_over_rho;
      continue;
    }
    if (!f.at_risk[r] || !f.observed[r]) continue;
    const double ind = f.treatment[r] == arm ? 1.0 : 0.0;
    const double y = f.outcome[r];
    const bool per_arm = in.normalization == Normalization::per_arm;
    switch (in.kind) {
      case EstimatorKind::ols:
        p.numerator += ind * y;
        p.denominator += ind;
        break;
      case EstimatorKind::ipt:
        p.numerator += ind * in.weights->ipt[r] * y;
        p.denominator += per_arm ? ind * in.weights->ipt[r] : 1.0;
        break;
      case EstimatorKind::iiv:
        p.numerator += in.weights->iiv[r] * ind * y;
        p.denominator += in.weights->iiv[r] * ind;
        break;
      case EstimatorKind::fiptm:
        p.numerator += in.weights->iiv[r] * ind * in.weights->ipt[r] * y;
        p.denominator += in.weights->iiv[r] * (per_arm ? ind * in.weights->ipt[r] : 1.0);
        break;
      case EstimatorKind::aaiiw:
        break;
    }
  }
  if (!(p.denominator > 0.0)) {
    throw Error(ErrorKind::no_observed_events,
                std::string(to_string(in.kind)) + " equation for arm " + std::to_string(arm) +
                    " has no weighted observations");
  }
  return p;
}

std::string joined(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : ",") + p;
  return out;
}

EstimateResult solve(const EquationInputs& in) {
  require_inputs(in);
  require_events(*in.ds);
  const LinearParts arm0 = linear_parts(in, 0);
  const LinearParts arm1 = linear_parts(in, 1);
  EstimateResult res;
  res.kind = in.kind;
  res.params.beta0 = arm0.numerator / arm0.denominator;
  res.params.beta1 = arm1.numerator / arm1.denominator - res.params.beta0;
  if (!std::isfinite(res.params.beta0) || !std::isfinite(res.params.beta1)) {
    throw Error(ErrorKind::invalid_input,
                std::string(to_string(in.kind)) + " produced a non-finite estimate");
  }
  res.ee_residual = {evaluate_equation(in, 0, res.params.arm_mean(0)),
                     evaluate_equation(in, 1, res.params.arm_mean(1))};
  if (in.weights != nullptr) res.provenance = in.weights->provenance;
  if (in.kind == EstimatorKind::aaiiw) {
    res.provenance.push_back(std::string("augmentation[") + to_string(in.form) + "]");
  }
  if (in.kind == EstimatorKind::ipt || in.kind == EstimatorKind::fiptm) {
    res.provenance.push_back(std::string("normalization[") + to_string(in.normalization) + "]");
  }
  return res;
}

}  // namespace

double evaluate_equation(const EquationInputs& in, int arm, double zeta) {
  require_inputs(in);
  const auto& f = in.ds->frame();
  double total = 0.0;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (in.kind == EstimatorKind::aaiiw) {
      const auto row = augmented_row(in, r, arm);
      if (!row.used) continue;
      total += (row.eta - zeta) * row.w - row.dm_over_rho * (row.aug - zeta);
      continue;
    }
    if (!f.at_risk[r] || !f.observed[r]) continue;
    const double ind = f.treatment[r] == arm ? 1.0 : 0.0;
    const double y = f.outcome[r];
    // Per-arm normalization multiplies zeta by the indicator and IPT weight.
    const double zeta_scale =
        in.normalization == Normalization::per_arm ? ind * in.weights->ipt[r] : 1.0;
    switch (in.kind) {
      case EstimatorKind::ols: total += ind * (y - zeta); break;
      case EstimatorKind::ipt: total += ind * in.weights->ipt[r] * y - zeta_scale * zeta; break;
      case EstimatorKind::iiv: total += in.weights->iiv[r] * ind * (y - zeta); break;
      case EstimatorKind::fiptm:
        total += (ind * in.weights->ipt[r] * y - zeta_scale * zeta) * in.weights->iiv[r];
        break;
      case EstimatorKind::aaiiw: break;
    }
  }
  return total;
}

MsmParams solve_by_root_finding(const EquationInputs& in) {
  auto root = [&](int arm) {
    auto fn = [&](double z) { return evaluate_equation(in, arm, z); };
    double lo = -1.0;
    double hi = 1.0;
    double flo = fn(lo);
    double fhi = fn(hi);
    for (int i = 0; i < 200 && flo * fhi > 0.0; ++i) {
      lo *= 2.0;
      hi *= 2.0;
      flo = fn(lo);
      fhi = fn(hi);
    }
    if (flo * fhi > 0.0) {
      throw Error(ErrorKind::not_converged, "could not bracket the estimating-equation root");
    }
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    std::uintmax_t iterations = 200;
    const auto bracket = boost::math::tools::toms748_solve(
        fn, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(), iterations);
    return 0.5 * (bracket.first + bracket.second);
  };
  MsmParams p;
  p.beta0 = root(0);
  p.beta1 = root(1) - p.beta0;
  return p;
}

EstimateResult estimate_ols(const PanelDataset& ds) {
  const auto& f = ds.frame();
  std::size_t count[2] = {0, 0};
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (f.at_risk[r] && f.observed[r]) ++count[f.treatment[r]];
  }
  if (count[0] + count[1] < 3 || count[0] == 0 || count[1] == 0) {
    throw Error(ErrorKind::insufficient_rows,
                "OLS needs observed outcomes in both arms and at least 3 rows");
  }
  return solve({EstimatorKind::ols, &ds, nullptr, nullptr, AugmentationForm::indicator});
}

EstimateResult estimate_ipt(const PanelDataset& ds, const WeightSet& w,
                            Normalization normalization) {
  return solve({EstimatorKind::ipt, &ds, &w, nullptr, AugmentationForm::indicator, normalization});
}

EstimateResult estimate_iiv(const PanelDataset& ds, const WeightSet& w) {
  return solve({EstimatorKind::iiv, &ds, &w, nullptr, AugmentationForm::indicator});
}

EstimateResult estimate_fiptm(const PanelDataset& ds, const WeightSet& w,
                              Normalization normalization) {
  return solve({EstimatorKind::fiptm, &ds, &w, nullptr, AugmentationForm::indicator,
                normalization});
}

EstimateResult estimate_aaiiw(const PanelDataset& ds, const WeightSet& w,
                              const OutcomePredictions& outcomes, AugmentationForm form) {
  const std::size_t n = ds.frame().rows();
  for (int a = 0; a < 2; ++a) {
    if (outcomes.mu_k[a].size() != n || outcomes.mu_v[a].size() != n) {
      throw Error(ErrorKind::invalid_input, "outcome-mean predictions must cover every row");
    }
  }
  return solve({EstimatorKind::aaiiw, &ds, &w, &outcomes, form});
}

EstimateResult estimate_aaiiw(const PanelDataset& ds, const WeightSet& w,
                              const std::array<OutcomeMeanFit, 2>& mu_k,
                              const std::array<OutcomeMeanFit, 2>& mu_v,
                              AugmentationForm form) {
  const auto outcomes = predict_outcome_means(ds, mu_k, mu_v);
  auto res = estimate_aaiiw(ds, w, outcomes, form);
  res.provenance.push_back("mu_k[" + joined(mu_k[0].design_labels) + "]");
  res.provenance.push_back("mu_v[" + joined(mu_v[0].design_labels) + "]");
  return res;
}

}  // namespace aaiiw
