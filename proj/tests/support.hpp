#pragma once

// Shared fixtures and independent oracles for the test suites. Oracles here
// deliberately avoid the library's code paths: least squares through the
// normal equations, derivatives by central differences, maxima by grid
// search, estimating equations summed subject by subject from the records.

#include "aaiiw/estimators.hpp"
#include "aaiiw/nuisance.hpp"
#include "aaiiw/panel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <cstdio>
#include <string>
#include <vector>

namespace testsupport {

using aaiiw::BinRow;
using aaiiw::CovariateColumns;
using aaiiw::PanelDataset;
using aaiiw::SubjectRecord;
using aaiiw::TimeGrid;

// Unit-width grid with `bins` bins.
inline TimeGrid unit_grid(int bins) { return TimeGrid{0.0, static_cast<double>(bins), 1.0}; }

// One confounder K1, one mediator M, one pure predictor P.
inline CovariateColumns small_columns() { return {{"K1"}, {"M"}, {"P"}}; }

inline BinRow row(int bin, int treatment, double k1, double m, double p, bool observed,
                  double y = 0.0, bool at_risk = true) {
  BinRow r;
  r.bin_index = bin;
  r.treatment = treatment;
  r.confounders = {k1};
  r.mediators = {m};
  r.pure_predictors = {p};
  r.at_risk = at_risk;
  r.observed = observed;
  if (observed) r.outcome = y;
  return r;
}

inline std::string subject_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "T%05zu", i);
  return buf;
}

// Random panel with covariates K1, M, P. Each arm keeps at least one
// observed outcome so every estimator is identified; some subjects are
// censored before the last bin.
inline PanelDataset random_panel(std::mt19937_64& rng, std::size_t subjects, int bins,
                                 double observe_probability = 0.5) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<SubjectRecord> recs;
  for (std::size_t i = 0; i < subjects; ++i) {
    SubjectRecord s;
    s.subject_id = subject_id(i);
    const double k1 = normal(rng);
    const int last_at_risk = unif(rng) < 0.3 ? static_cast<int>(unif(rng) * bins) : bins - 1;
    for (int b = 0; b < bins; ++b) {
      const int a = unif(rng) < 0.5 ? 1 : 0;
      const double m = normal(rng) + a;
      const double p = normal(rng);
      const bool at_risk = b <= last_at_risk;
      const bool obs = at_risk && unif(rng) < observe_probability;
      const double y = 0.5 + a + 0.4 * k1 + 0.7 * m + 0.2 * p + normal(rng);
      s.rows.push_back(row(b, a, k1, m, p, obs, y, at_risk));
    }
    recs.push_back(std::move(s));
  }
  // Guarantee an observed outcome in each arm on the first subject.
  recs[0].rows[0] = row(0, 0, 0.1, 0.2, 0.3, true, 1.0);
  if (bins > 1) recs[0].rows[1] = row(1, 1, 0.1, 0.4, -0.3, true, 2.0);
  return PanelDataset(unit_grid(bins), small_columns(), std::move(recs));
}

// Least squares via the normal equations (Cholesky of X'WX).
inline Eigen::VectorXd normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const std::vector<double>& w = {}) {
  Eigen::VectorXd weights = Eigen::VectorXd::Ones(X.rows());
  for (std::size_t i = 0; i < w.size(); ++i) weights(static_cast<Eigen::Index>(i)) = w[i];
  const Eigen::MatrixXd xtwx = X.transpose() * weights.asDiagonal() * X;
  const Eigen::VectorXd xtwy = X.transpose() * weights.asDiagonal() * y;
  return xtwx.llt().solve(xtwy);
}

// Central-difference gradient of f at x.
inline Eigen::VectorXd finite_difference(const std::function<double(const Eigen::VectorXd&)>& f,
                                         const Eigen::VectorXd& x, double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd up = x;
    Eigen::VectorXd down = x;
    up(j) += h;
    down(j) -= h;
    g(j) = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

// Hand-coded Bernoulli log-likelihood, independent of the library.
inline double bernoulli_loglik(const Eigen::MatrixXd& X, const std::vector<double>& y,
                               const Eigen::VectorXd& beta) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double eta = X.row(i).dot(beta);
    const double p = 1.0 / (1.0 + std::exp(-eta));
    total += y[static_cast<std::size_t>(i)] > 0.5 ? std::log(p) : std::log1p(-p);
  }
  return total;
}

// Maximizer of f over a 2-d box by successively refined grid search.
inline Eigen::Vector2d grid_search_max(const std::function<double(const Eigen::VectorXd&)>& f,
                                       double lo, double hi, int levels = 8, int points = 41) {
  Eigen::Vector2d best(0.5 * (lo + hi), 0.5 * (lo + hi));
  double half = 0.5 * (hi - lo);
  for (int level = 0; level < levels; ++level) {
    Eigen::Vector2d centre = best;
    double best_value = -INFINITY;
    for (int i = 0; i < points; ++i) {
      for (int j = 0; j < points; ++j) {
        Eigen::VectorXd b(2);
        b << centre(0) - half + 2.0 * half * i / (points - 1),
            centre(1) - half + 2.0 * half * j / (points - 1);
        const double v = f(b);
        if (v > best_value) {
          best_value = v;
          best = b;
        }
      }
    }
    half *= 4.0 / (points - 1);
  }
  return best;
}

// Value of a named column ("A" for the treatment) on one record row.
inline double column_value(const CovariateColumns& cols, const BinRow& r, const std::string& name) {
  if (name == "A") return r.treatment;
  for (std::size_t j = 0; j < cols.confounders.size(); ++j)
    if (cols.confounders[j] == name) return r.confounders[j];
  for (std::size_t j = 0; j < cols.mediators.size(); ++j)
    if (cols.mediators[j] == name) return r.mediators[j];
  for (std::size_t j = 0; j < cols.pure_predictors.size(); ++j)
    if (cols.pure_predictors[j] == name) return r.pure_predictors[j];
  throw std::runtime_error("unknown column " + name);
}

// Hand-coded Breslow log partial likelihood over records: for each bin, the
// events' linear predictors minus the event count times the log of the
// risk-set sum.
inline double partial_loglik_oracle(const PanelDataset& ds, const std::vector<std::string>& names,
                                    const Eigen::VectorXd& gamma) {
  const int bins = ds.grid().bin_count();
  double total = 0.0;
  for (int b = 0; b < bins; ++b) {
    double risk = 0.0;
    double events = 0.0;
    double event_eta = 0.0;
    for (const auto& s : ds.subjects()) {
      for (const auto& r : s.rows) {
        if (r.bin_index != b || !r.at_risk) continue;
        double eta = 0.0;
        for (std::size_t j = 0; j < names.size(); ++j) {
          eta += gamma(static_cast<Eigen::Index>(j)) * column_value(ds.columns(), r, names[j]);
        }
        risk += std::exp(eta);
        if (r.observed) {
          events += 1.0;
          event_eta += eta;
        }
      }
    }
    if (events > 0.0) total += event_eta - events * std::log(risk);
  }
  return total;
}

// Arm-a estimating equation evaluated record by record (not through the
// flat frame), for IPT/FIPTM in total normalization and for AAIIW.
struct RowNuisance {
  double e1 = 0.5;     // pr(A = 1 | K)
  double rho = 1.0;    // E[dN | V]
  double mu_k[2] = {0.0, 0.0};
  double mu_v[2] = {0.0, 0.0};
};

inline double equation_oracle(const PanelDataset& ds, aaiiw::EstimatorKind kind,
                              const std::vector<RowNuisance>& nuisance, int arm, double zeta) {
  double total = 0.0;
  std::size_t idx = 0;
  for (const auto& s : ds.subjects()) {
    for (const auto& r : s.rows) {
      const RowNuisance& n = nuisance[idx++];
      if (!r.at_risk) continue;
      const double e = arm == 1 ? n.e1 : 1.0 - n.e1;
      const double ind = r.treatment == arm ? 1.0 : 0.0;
      const double dn = r.observed ? 1.0 : 0.0;
      const double y = r.outcome.value_or(0.0);
      switch (kind) {
        case aaiiw::EstimatorKind::ipt:
          total += dn * (ind / e * y - zeta);
          break;
        case aaiiw::EstimatorKind::fiptm:
          total += dn * (ind / e * y - zeta) / n.rho;
          break;
        case aaiiw::EstimatorKind::aaiiw: {
          const double k_term = (ind - e) / e * n.mu_k[arm];
          const double eta = ind / e * y - k_term - zeta;
          const double dm = dn - n.rho;
          total += eta * dn / n.rho - dm * (ind * n.mu_v[arm] / e - k_term - zeta) / n.rho;
          break;
        }
        default:
          break;
      }
    }
  }
  return total;
}

// Random per-row nuisances with positivity.
inline std::vector<RowNuisance> random_nuisance(std::mt19937_64& rng, std::size_t rows) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z;
  std::vector<RowNuisance> out(rows);
  for (auto& n : out) {
    n.e1 = 0.15 + 0.7 * u(rng);
    n.rho = 0.2 + 1.3 * u(rng);
    for (int a = 0; a < 2; ++a) {
      n.mu_k[a] = 1.0 + a + z(rng);
      n.mu_v[a] = 1.0 + a + z(rng);
    }
  }
  return out;
}

inline aaiiw::WeightSet weights_from(const PanelDataset& ds,
                                     const std::vector<RowNuisance>& nuisance,
                                     bool stabilized = false) {
  std::vector<double> p, rho;
  for (const auto& n : nuisance) {
    p.push_back(n.e1);
    rho.push_back(n.rho);
  }
  return aaiiw::make_weights(ds, p, rho, stabilized);
}

inline aaiiw::OutcomePredictions outcomes_from(const std::vector<RowNuisance>& nuisance) {
  aaiiw::OutcomePredictions out;
  for (int a = 0; a < 2; ++a) {
    for (const auto& n : nuisance) {
      out.mu_k[a].push_back(n.mu_k[a]);
      out.mu_v[a].push_back(n.mu_v[a]);
    }
  }
  return out;
}

// Root of a linear equation from its values at 0 and 1.
inline double linear_root(const std::function<double(double)>& f) {
  const double f0 = f(0.0);
  const double f1 = f(1.0);
  return f0 / (f0 - f1);
}

// Largest absolute difference relative to the larger of 1 and the reference scale.
inline double max_relative_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).cwiseAbs().maxCoeff() / std::max(1.0, want.cwiseAbs().maxCoeff());
}

}  // namespace testsupport
