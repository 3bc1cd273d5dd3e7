#include "aaiiw/errors.hpp"
#include "aaiiw/nuisance.hpp"

#include <Eigen/QR>

#include <cmath>
#include <string>

namespace aaiiw {

Eigen::VectorXd solve_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    std::span<const double> weights) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n || (!weights.empty() && weights.size() != static_cast<std::size_t>(n))) {
    throw Error(ErrorKind::invalid_input, "design, response and weights differ in length");
  }
  Eigen::MatrixXd Xw = X;
  Eigen::VectorXd yw = y;
  Eigen::Index effective = n;
  if (!weights.empty()) {
    effective = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = weights[static_cast<std::size_t>(i)];
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw Error(ErrorKind::invalid_input, "least-squares weights must be finite and nonnegative");
      }
      if (w > 0.0) ++effective;
      const double s = std::sqrt(w);
      Xw.row(i) *= s;
      yw(i) *= s;
    }
  }
  if (effective < p + 1) {
    throw Error(ErrorKind::insufficient_rows,
                "least squares needs at least " + std::to_string(p + 1) + " rows, found " +
                    std::to_string(effective));
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    throw Error(ErrorKind::rank_deficient_design,
                "design has rank " + std::to_string(qr.rank()) + " < " + std::to_string(p) +
                    " columns");
  }
  return qr.solve(yw);
}

std::vector<double> OutcomeMeanFit::predict(const PanelDataset& ds) const {
  const Eigen::VectorXd fitted = build_design(ds, design, arm) * coefficients;
  return {fitted.data(), fitted.data() + fitted.size()};
}

namespace {

OutcomeMeanFit make_fit(int arm, OutcomeConditioning conditioning, bool stratified,
                        DesignSpec design, Eigen::VectorXd coefficients) {
  OutcomeMeanFit fit;
  fit.arm = arm;
  fit.conditioning = conditioning;
  fit.stratified = stratified;
  fit.design_labels = design.labels();
  fit.design = std::move(design);
  fit.coefficients = std::move(coefficients);
  return fit;
}

void check_arm(int arm) {
  if (arm != 0 && arm != 1) {
    throw Error(ErrorKind::invalid_input, "arm must be 0 or 1");
  }
}

}  // namespace

OutcomeMeanFit fit_outcome_mean(const PanelDataset& ds, int arm,
                                OutcomeConditioning conditioning, const DesignSpec& spec,
                                const OutcomeFitOptions& options) {
  check_arm(arm);
  check_design(ds, spec);
  const bool stratified =
      conditioning == OutcomeConditioning::k_conditional || options.stratified_v;
  const DesignSpec design = stratified ? spec.without_treatment() : spec;
  const auto& f = ds.frame();
  if (!options.row_weights.empty() && options.row_weights.size() != f.rows()) {
    throw Error(ErrorKind::invalid_input, "outcome-mean row weights must cover every frame row");
  }

  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (!f.observed[r]) continue;
    if (stratified && f.treatment[r] != arm) continue;
    rows.push_back(r);
  }
  const Eigen::MatrixXd X = build_design(ds, design, rows);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  std::vector<double> w;
  if (!options.row_weights.empty()) w.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = f.outcome[rows[i]];
    if (!options.row_weights.empty()) w.push_back(options.row_weights[rows[i]]);
  }
  return make_fit(arm, conditioning, stratified, design, solve_least_squares(X, y, w));
}

OutcomeMeanFit fit_outcome_mean_to_pseudo(const PanelDataset& ds, int arm,
                                          const DesignSpec& spec,
                                          std::span<const double> pseudo_outcome) {
  check_arm(arm);
  check_design(ds, spec);
  const auto& f = ds.frame();
  if (pseudo_outcome.size() != f.rows()) {
    throw Error(ErrorKind::invalid_input, "pseudo-outcome must cover every frame row");
  }
  const DesignSpec design = spec.without_treatment();
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (f.at_risk[r] && f.treatment[r] == arm) rows.push_back(r);
  }
  const Eigen::MatrixXd X = build_design(ds, design, rows);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = pseudo_outcome[rows[i]];
  }
  return make_fit(arm, OutcomeConditioning::k_conditional, true, design,
                  solve_least_squares(X, y));
}

}  // namespace aaiiw
