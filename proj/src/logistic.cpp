#include "aaiiw/errors.hpp"
#include "aaiiw/nuisance.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace aaiiw {

namespace {

// Near the optimum the predicted gain g'H^{-1}g/2 drops below the rounding
// error of the summed objective, so a monotone line search can no longer
// tell steps apart; below this decrement the pure Newton step is taken.
constexpr double kNewtonDecrementFloor = 1e-12;

// A fit whose every probability is this close to its label is separated.
constexpr double kPerfectFitGap = 1e-6;

double log1p_exp(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double weight_at(std::span<const double> weights, Eigen::Index i) {
  return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
}

}  // namespace

ObjectiveValue logistic_loglik(const Eigen::MatrixXd& X,
                               std::span<const double> labels,
                               std::span<const double> weights,
                               const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = X * beta;
  Eigen::VectorXd resid(X.rows());
  double value = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double w = weight_at(weights, i);
    const double y = labels[static_cast<std::size_t>(i)];
    value += w * (y * eta(i) - log1p_exp(eta(i)));
    resid(i) = w * (y - expit(eta(i)));
  }
  return {value, X.transpose() * resid};
}

Eigen::VectorXd LogisticFit::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd eta = X * coefficients;
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta(i) = expit(eta(i));
  return eta;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& X, std::span<const double> labels,
                         std::span<const double> weights,
                         const LogisticOptions& options) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (static_cast<std::size_t>(n) != labels.size() ||
      (!weights.empty() && weights.size() != labels.size())) {
    throw Error(ErrorKind::invalid_input, "design rows, labels and weights differ in length");
  }
  if (!X.allFinite()) {
    throw Error(ErrorKind::invalid_input, "design matrix has non-finite entries");
  }

  double total_weight = 0.0;
  double positive_weight = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = weight_at(weights, i);
    const double y = labels[static_cast<std::size_t>(i)];
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorKind::invalid_input, "weights must be finite and nonnegative");
    }
    if (y != 0.0 && y != 1.0) {
      throw Error(ErrorKind::invalid_input, "labels must be 0 or 1");
    }
    total_weight += w;
    positive_weight += w * y;
  }
  if (!(total_weight > 0.0)) {
    throw Error(ErrorKind::insufficient_rows, "no rows with positive weight");
  }
  if (positive_weight == 0.0 || positive_weight == total_weight) {
    throw Error(ErrorKind::separation_detected,
                "all labels are identical; the likelihood has no maximum");
  }

  LogisticFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(p);

  auto evaluate = [&](const Eigen::VectorXd& beta) {
    auto obj = logistic_loglik(X, labels, weights, beta);
    obj.value /= total_weight;
    obj.gradient /= total_weight;
    return obj;
  };
  auto information = [&](const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mu = expit(eta(i));
      v(i) = weight_at(weights, i) * mu * (1.0 - mu);
    }
    Eigen::MatrixXd info = X.transpose() * v.asDiagonal() * X;
    return info;
  };

  ObjectiveValue current = evaluate(fit.coefficients);
  fit.loglik_path.push_back(current.value);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    fit.final_gradient_norm = current.gradient.norm();
    if (fit.final_gradient_norm <= options.tolerance) {
      fit.converged = true;
      break;
    }
    const Eigen::MatrixXd info = information(fit.coefficients) / total_weight;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
      throw Error(ErrorKind::singular_information,
                  "logistic information matrix is singular at iteration " +
                      std::to_string(iter));
    }
    const Eigen::VectorXd step = ldlt.solve(current.gradient);

    const double decrement = current.gradient.dot(step);
    double scale = 1.0;
    Eigen::VectorXd candidate;
    ObjectiveValue next;
    bool accepted = false;
    if (decrement <= kNewtonDecrementFloor) {
      candidate = fit.coefficients + step;
      next = evaluate(candidate);
      accepted = std::isfinite(next.value);
    }
    for (int halving = 0; !accepted && halving < 40; ++halving) {
      candidate = fit.coefficients + scale * step;
      next = evaluate(candidate);
      if (std::isfinite(next.value) && next.value >= current.value) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    ++fit.iterations;
    if (!accepted) {
      // No ascent possible at machine precision: treat as stationary.
      fit.final_gradient_norm = current.gradient.norm();
      fit.converged = fit.final_gradient_norm <= options.tolerance * 1e2;
      break;
    }
    fit.coefficients = candidate;
    current = next;
    fit.loglik_path.push_back(current.value);
    if (fit.coefficients.cwiseAbs().maxCoeff() > options.separation_bound) {
      throw Error(ErrorKind::separation_detected,
                  "coefficient magnitude exceeds " +
                      std::to_string(options.separation_bound) +
                      " (perfect or quasi-perfect separation)");
    }
  }
  fit.final_gradient_norm = current.gradient.norm();
  if (fit.final_gradient_norm <= options.tolerance) fit.converged = true;
  if (!fit.converged) {
    throw Error(ErrorKind::not_converged,
                "logistic fit did not reach gradient norm " +
                    std::to_string(options.tolerance) + " within " +
                    std::to_string(options.max_iterations) + " iterations");
  }

  // Under complete separation the gradient vanishes while the coefficients
  // are still finite (every probability rounds to its label), so the
  // coefficient bound alone does not catch it.
  const Eigen::VectorXd fitted = fit.predict(X);
  bool perfect = true;
  for (Eigen::Index i = 0; i < n && perfect; ++i) {
    if (weight_at(weights, i) == 0.0) continue;
    perfect = std::fabs(labels[static_cast<std::size_t>(i)] - fitted(i)) < kPerfectFitGap;
  }
  if (perfect) {
    throw Error(ErrorKind::separation_detected,
                "fitted probabilities reproduce every label (perfect separation)");
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(information(fit.coefficients));
  fit.covariance = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose());
  return fit;
}

namespace {

void require_block(const PanelDataset& ds, const DesignSpec& spec,
                   bool allow_treatment, bool confounders_only,
                   const char* what) {
  check_design(ds, spec);
  const auto& cols = ds.columns();
  for (const auto& t : spec.terms) {
    if (t.column == kTreatmentColumn) {
      if (!allow_treatment) {
        throw Error(ErrorKind::invalid_input,
                    std::string(what) + " design may not include the treatment");
      }
      continue;
    }
    if (confounders_only) {
      bool found = false;
      for (const auto& k : cols.confounders) found = found || k == t.column;
      if (!found) {
        throw Error(ErrorKind::invalid_input,
                    std::string(what) + " design term '" + t.column +
                        "' is not a confounder (K-block) column");
      }
    }
  }
}

LogisticFit fit_panel_logistic(const PanelDataset& ds, const DesignSpec& spec,
                               bool label_is_treatment,
                               const LogisticOptions& options) {
  const auto rows = at_risk_rows(ds);
  const Eigen::MatrixXd X = build_design(ds, spec, rows);
  std::vector<double> labels(rows.size());
  const auto& f = ds.frame();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    labels[r] = label_is_treatment ? f.treatment[rows[r]] : f.observed[rows[r]];
  }
  LogisticFit fit = fit_logistic(X, labels, {}, options);
  fit.design = spec;
  return fit;
}

}  // namespace

LogisticFit fit_propensity(const PanelDataset& ds, const DesignSpec& spec,
                           const LogisticOptions& options) {
  require_block(ds, spec, false, true, "propensity");
  return fit_panel_logistic(ds, spec, true, options);
}

LogisticFit fit_bernoulli_observation(const PanelDataset& ds, const DesignSpec& spec,
                                      const LogisticOptions& options) {
  require_block(ds, spec, true, false, "observation");
  return fit_panel_logistic(ds, spec, false, options);
}

}  // namespace aaiiw
