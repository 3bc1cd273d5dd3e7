#include "support.hpp"

#include "aaiiw/errors.hpp"
#include "aaiiw/simgen.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <random>

using namespace aaiiw;
using namespace testsupport;

namespace {

DesignSpec design(std::vector<std::string> terms, bool intercept = true) {
  return DesignSpec::parse(terms, intercept);
}

}  // namespace

TEST_CASE("logistic: identical labels signal separation") {
  Eigen::MatrixXd X(4, 2);
  X << 1, 0.1, 1, 0.4, 1, -0.3, 1, 0.8;
  const std::vector<double> y(4, 1.0);
  CHECK_THROWS_AS(fit_logistic(X, y), Error);
  try {
    fit_logistic(X, y);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::separation_detected);
  }
}

TEST_CASE("logistic: perfectly separated slope is caught") {
  Eigen::MatrixXd X(6, 2);
  X << 1, -3, 1, -2, 1, -1, 1, 1, 1, 2, 1, 3;
  const std::vector<double> y{0, 0, 0, 1, 1, 1};
  try {
    fit_logistic(X, y);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::separation_detected);
  }
}

TEST_CASE("logistic: intercept-only balanced labels give exactly zero") {
  const Eigen::MatrixXd X = Eigen::MatrixXd::Ones(8, 1);
  const std::vector<double> y{0, 1, 0, 1, 1, 0, 1, 0};
  const auto fit = fit_logistic(X, y);
  CHECK(fit.converged);
  CHECK(fit.coefficients(0) == 0.0);
}

TEST_CASE("logistic: six-point fit matches grid-search maximum") {
  Eigen::MatrixXd X(6, 2);
  X << 1, -1.5, 1, -0.7, 1, 0.2, 1, 0.4, 1, 1.1, 1, 2.0;
  const std::vector<double> y{0, 1, 0, 1, 0, 1};
  const auto fit = fit_logistic(X, y);
  const auto best = grid_search_max(
      [&](const Eigen::VectorXd& b) { return bernoulli_loglik(X, y, b); }, -5.0, 5.0);
  CHECK(std::fabs(fit.coefficients(0) - best(0)) <= 1e-4);
  CHECK(std::fabs(fit.coefficients(1) - best(1)) <= 1e-4);
  CHECK(fit.final_gradient_norm <= 1e-8);
}

TEST_CASE("logistic: covariance is symmetric positive definite and the path ascends") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const int n = 300;
  Eigen::MatrixXd X(n, 3);
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    X.row(i) << 1.0, z(rng), z(rng);
    y[static_cast<std::size_t>(i)] = u(rng) < expit(0.3 + 1.2 * X(i, 1) - 0.8 * X(i, 2)) ? 1 : 0;
  }
  const auto fit = fit_logistic(X, y);
  CHECK((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(fit.covariance);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
  for (std::size_t k = 1; k < fit.loglik_path.size(); ++k) {
    CHECK(fit.loglik_path[k] >= fit.loglik_path[k - 1]);
  }
}

TEST_CASE("logistic: constant weights leave the fit unchanged") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const int n = 200;
  Eigen::MatrixXd X(n, 2);
  std::vector<double> y(n);
  for (int i = 0; i < n; ++i) {
    X.row(i) << 1.0, z(rng);
    y[static_cast<std::size_t>(i)] = u(rng) < expit(-0.2 + X(i, 1)) ? 1 : 0;
  }
  const auto plain = fit_logistic(X, y);
  const std::vector<double> w(n, 3.7);
  const auto weighted = fit_logistic(X, y, w);
  CHECK((plain.coefficients - weighted.coefficients).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("logistic: analytic gradient matches central differences") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 30;
    Eigen::MatrixXd X(n, 3);
    std::vector<double> y(n), w(n);
    for (int i = 0; i < n; ++i) {
      X.row(i) << 1.0, z(rng), z(rng);
      y[static_cast<std::size_t>(i)] = u(rng) < 0.5 ? 1 : 0;
      w[static_cast<std::size_t>(i)] = 0.5 + u(rng);
    }
    Eigen::VectorXd beta(3);
    beta << z(rng), z(rng), z(rng);
    const auto analytic = logistic_loglik(X, y, w, beta).gradient;
    const auto numeric = finite_difference(
        [&](const Eigen::VectorXd& b) { return logistic_loglik(X, y, w, b).value; }, beta);
    CHECK(max_relative_error(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("propensity recovers the generating coefficients") {
  const auto cfg = default_config(Mechanism::bernoulli, 1, 5000);
  const auto ds = simulate_cohort(cfg, 101);
  const auto fit = fit_propensity(ds, design({"K1", "K2", "K3"}));
  for (int j = 0; j < 4; ++j) CHECK(std::fabs(fit.coefficients(j) - cfg.treatment_coefs[j]) <= 0.1);

  SUBCASE("null treatment model") {
    auto null_cfg = cfg;
    null_cfg.treatment_coefs = {0.0, 0.0, 0.0, 0.0};
    const auto null_fit = fit_propensity(simulate_cohort(null_cfg, 102), design({"K1", "K2", "K3"}));
    for (int j = 1; j < 4; ++j) CHECK(std::fabs(null_fit.coefficients(j)) <= 0.1);
  }
  SUBCASE("misspecified design departs from the true propensity") {
    SimulationTruth truth;
    const auto small = simulate_cohort(default_config(Mechanism::bernoulli, 1, 1000), 103, &truth);
    const auto wrong = fit_propensity(small, design({"sine:K1"}));
    CHECK(wrong.converged);
    const Eigen::VectorXd p = wrong.predict(build_design(small, wrong.design));
    double msd = 0.0;
    for (Eigen::Index r = 0; r < p.size(); ++r) {
      const double d = p(r) - truth.propensity[static_cast<std::size_t>(r)];
      msd += d * d;
    }
    CHECK(msd / static_cast<double>(p.size()) > 1e-3);
  }
  SUBCASE("non-confounder terms are refused") {
    CHECK_THROWS_AS(fit_propensity(ds, design({"K1", "M"})), Error);
  }
}

TEST_CASE("proportional rate: toy panel score agrees with hand-coded partial likelihood") {
  std::vector<SubjectRecord> s{
      {"s1", {row(0, 1, 0.3, 1.2, 0.1, true, 1), row(1, 0, 0.3, 0.2, 0.4, false),
              row(2, 1, 0.3, 1.5, 0.2, true, 2), row(3, 0, 0.3, 0.4, 0.0, false)}},
      {"s2", {row(0, 0, -0.5, 0.8, 0.6, false), row(1, 1, -0.5, 1.9, 0.3, true, 3),
              row(2, 0, -0.5, 0.1, 0.5, false), row(3, 1, -0.5, 1.1, 0.2, true, 1)}},
      {"s3", {row(0, 1, 1.1, 2.2, 0.9, false), row(1, 0, 1.1, 0.7, 0.1, true, 2),
              row(2, 1, 1.1, 1.3, 0.3, false), row(3, 0, 1.1, 0.6, 0.7, true, 0)}}};
  const PanelDataset ds(unit_grid(4), small_columns(), s);
  const std::vector<std::string> names{"A", "M"};
  const auto spec = design(names, false);
  const auto data = RiskSetData::from_panel(ds, spec);
  Eigen::VectorXd g(2);
  g << 0.4, -0.3;
  CHECK(std::fabs(partial_loglik(data, g).value - partial_loglik_oracle(ds, names, g)) <= 1e-12);
  const auto fit = fit_proportional_rate(ds, spec);
  const auto numeric = finite_difference(
      [&](const Eigen::VectorXd& x) { return partial_loglik_oracle(ds, names, x); }, fit.gamma);
  const auto analytic = partial_loglik(data, fit.gamma).gradient;
  CHECK((analytic - numeric).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(analytic.norm() <= 1e-6);
  for (double b : fit.baseline) CHECK(b >= 0.0);
}

TEST_CASE("proportional rate: gradients match finite differences on random panels") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> z;
  const std::vector<std::string> names{"A", "K1", "M", "P"};
  for (int trial = 0; trial < 20; ++trial) {
    const auto ds = random_panel(rng, 8, 4);
    const auto data = RiskSetData::from_panel(ds, design(names, false));
    Eigen::VectorXd g(4);
    g << 0.3 * z(rng), 0.3 * z(rng), 0.3 * z(rng), 0.3 * z(rng);
    const auto analytic = partial_loglik(data, g).gradient;
    const auto numeric = finite_difference(
        [&](const Eigen::VectorXd& x) { return partial_loglik_oracle(ds, names, x); }, g);
    CHECK(max_relative_error(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("breslow baseline by hand") {
  // Two subjects, one event at bin 3 (subject with V = 2), both at risk.
  std::vector<SubjectRecord> s(2);
  for (int i = 0; i < 2; ++i) {
    s[static_cast<std::size_t>(i)].subject_id = subject_id(static_cast<std::size_t>(i));
    for (int b = 0; b < 4; ++b) {
      const bool event = (b == 3 && i == 1) || (b == 0 && i == 0);
      s[static_cast<std::size_t>(i)].rows.push_back(row(b, i, 0.0, i + 1.0, 0.0, event, 1.0));
    }
  }
  const PanelDataset ds(unit_grid(4), small_columns(), s);
  const auto spec = design({"M"}, false);
  Eigen::VectorXd g(1);
  g << 0.5;
  const auto written = breslow_baseline(ds, spec, g, BreslowVariant::as_written);
  const auto classical = breslow_baseline(ds, spec, g, BreslowVariant::risk_set);
  CHECK(written[3] == doctest::Approx(1.0 / std::exp(0.5 * 2.0)).epsilon(1e-14));
  CHECK(classical[3] == doctest::Approx(1.0 / (std::exp(0.5) + std::exp(1.0))).epsilon(1e-14));
  CHECK(written[1] == 0.0);
  CHECK(classical[2] == 0.0);

  const auto zero = breslow_baseline(ds, spec, Eigen::VectorXd::Zero(1), BreslowVariant::as_written);
  CHECK(zero[0] == 1.0);
  CHECK(zero[3] == 1.0);
}

TEST_CASE("proportional rate recovers generating coefficients") {
  const std::vector<std::string> v{"A", "M", "K1", "K2", "K3", "P"};
  SUBCASE("null intensity") {
    auto cfg = default_config(Mechanism::poisson, 1, 5000);
    cfg.gamma.assign(6, 0.0);
    const auto fit = fit_proportional_rate(simulate_cohort(cfg, 31), design(v, false));
    CHECK(fit.gamma.cwiseAbs().maxCoeff() <= 0.1);
  }
  SUBCASE("Poisson set 2") {
    // At the unit constant many bins have observation probabilities far from
    // zero; a Bernoulli draw with probability proportional to the rate is then
    // no longer a proportional-rate process and every coefficient shrinks by
    // about 12%. A smaller constant keeps the thinning in the rare-event
    // regime where the rate model holds.
    auto cfg = default_config(Mechanism::poisson, 2, 5000);
    cfg.proportionality_constant = 0.3;
    const auto fit = fit_proportional_rate(simulate_cohort(cfg, 32), design(v, false));
    for (int j = 0; j < 6; ++j) {
      CHECK(std::fabs(fit.gamma(j) - cfg.gamma[static_cast<std::size_t>(j)]) <= 0.15);
    }
  }
}

TEST_CASE("proportional rate: no events is an error") {
  std::vector<SubjectRecord> s{{"s1", {row(0, 0, 0, 1, 0, false), row(1, 1, 0, 2, 0, false)}}};
  const PanelDataset ds(unit_grid(2), small_columns(), s);
  try {
    fit_proportional_rate(ds, design({"M"}, false));
    FAIL("expected NoEvents");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::no_events);
  }
}

TEST_CASE("martingale residuals") {
  std::mt19937_64 rng(41);
  const auto ds = random_panel(rng, 40, 5);
  const std::vector<std::string> names{"A", "K1", "M"};
  SUBCASE("zero gamma with the as-written baseline gives zero residuals") {
    RateFit fit;
    fit.design = design(names, false);
    fit.gamma = Eigen::VectorXd::Zero(3);
    fit.baseline = breslow_baseline(ds, fit.design, fit.gamma, BreslowVariant::as_written);
    const auto dm = martingale_residuals(ds, fit);
    // Event rows: 1 - 1; non-event rows of event bins: 0 - 1.
    const auto& f = ds.frame();
    for (std::size_t r = 0; r < f.rows(); ++r) {
      if (!f.at_risk[r]) {
        CHECK(dm[r] == 0.0);
      } else if (f.observed[r]) {
        CHECK(dm[r] == 0.0);
      }
    }
  }
  SUBCASE("risk-set residuals solve the score equation") {
    const auto fit = fit_proportional_rate(ds, design(names, false), BreslowVariant::risk_set);
    const auto dm = martingale_residuals(ds, fit);
    const Eigen::MatrixXd X = build_design(ds, fit.design);
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < dm.size(); ++r) s += dm[r] * X(static_cast<Eigen::Index>(r), j);
      CHECK(std::fabs(s) <= 1e-6);
    }
  }
  SUBCASE("perfect prediction gives zero residuals") {
    LogisticFit perfect;
    perfect.design = design({}, true);
    perfect.coefficients = Eigen::VectorXd::Constant(1, 40.0);
    std::vector<SubjectRecord> all_observed{
        {"s1", {row(0, 0, 0, 0, 0, true, 1.0), row(1, 1, 0, 0, 0, true, 2.0)}}};
    const PanelDataset full(unit_grid(2), small_columns(), all_observed);
    for (double d : martingale_residuals(full, perfect)) CHECK(std::fabs(d) <= 1e-15);
  }
}

TEST_CASE("bernoulli observation model") {
  const std::vector<std::string> v{"A", "M", "K1", "K2", "K3", "P"};
  SUBCASE("set 1 slopes vanish") {
    const auto cfg = default_config(Mechanism::bernoulli, 1, 5000);
    const auto fit = fit_bernoulli_observation(simulate_cohort(cfg, 51), design(v));
    for (int j = 1; j <= 5; ++j) CHECK(std::fabs(fit.coefficients(j)) <= 0.1);
  }
  SUBCASE("all bins observed is separation") {
    std::vector<SubjectRecord> s{
        {"s1", {row(0, 0, 0, 0.3, 0, true, 1.0), row(1, 1, 0, 0.6, 0, true, 2.0)}}};
    const PanelDataset ds(unit_grid(2), small_columns(), s);
    try {
      fit_bernoulli_observation(ds, design({"M"}));
      FAIL("expected SeparationDetected");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::separation_detected);
    }
  }
  SUBCASE("toy 20-row panel matches grid search") {
    std::mt19937_64 rng(52);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u;
    std::vector<SubjectRecord> s(5);
    for (std::size_t i = 0; i < 5; ++i) {
      s[i].subject_id = subject_id(i);
      for (int b = 0; b < 4; ++b) {
        const double m = z(rng);
        const bool obs = u(rng) < expit(-0.3 + 0.8 * m);
        s[i].rows.push_back(row(b, static_cast<int>((i + static_cast<std::size_t>(b)) % 2), 0.0, m, 0.0, obs, m));
      }
    }
    const PanelDataset ds(unit_grid(4), small_columns(), s);
    const auto fit = fit_bernoulli_observation(ds, design({"M"}));
    const Eigen::MatrixXd X = build_design(ds, fit.design);
    std::vector<double> y;
    for (auto o : ds.frame().observed) y.push_back(o);
    const auto best = grid_search_max(
        [&](const Eigen::VectorXd& b) { return bernoulli_loglik(X, y, b); }, -5.0, 5.0);
    CHECK(std::fabs(fit.coefficients(0) - best(0)) <= 1e-3);
    CHECK(std::fabs(fit.coefficients(1) - best(1)) <= 1e-3);
  }
}

TEST_CASE("outcome means") {
  SUBCASE("constant outcome gives the constant intercept") {
    std::mt19937_64 rng(61);
    auto ds = random_panel(rng, 30, 4);
    std::vector<SubjectRecord> s(ds.subjects().begin(), ds.subjects().end());
    for (auto& subj : s)
      for (auto& r : subj.rows)
        if (r.observed) r.outcome = 2.5;
    const PanelDataset flat(ds.grid(), ds.columns(), s);
    const auto fit = fit_outcome_mean(flat, 1, OutcomeConditioning::k_conditional,
                                      design({"K1", "P"}));
    CHECK(fit.coefficients(0) == doctest::Approx(2.5).epsilon(1e-12));
    CHECK(std::fabs(fit.coefficients(1)) <= 1e-12);
    CHECK(std::fabs(fit.coefficients(2)) <= 1e-12);
  }
  SUBCASE("least squares equals the normal-equations solution") {
    Eigen::MatrixXd X(5, 2);
    X << 1, 0.5, 1, -1.0, 1, 2.0, 1, 0.3, 1, -0.4;
    Eigen::VectorXd y(5);
    y << 1.2, -0.3, 3.1, 0.8, 0.1;
    const auto got = solve_least_squares(X, y);
    CHECK((got - normal_equations(X, y)).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("fitted residuals are orthogonal to the design") {
    std::mt19937_64 rng(62);
    const auto ds = random_panel(rng, 60, 5);
    const auto spec = design({"A", "K1", "M", "P"});
    const auto fit = fit_outcome_mean(ds, 0, OutcomeConditioning::v_conditional, spec);
    // Pooled fit: evaluate at the recorded treatment through the arm-1 and
    // arm-0 predictions.
    const auto fit1 = fit;
    auto at1 = fit1;
    at1.arm = 1;
    const auto p0 = fit.predict(ds);
    const auto p1 = at1.predict(ds);
    const auto& f = ds.frame();
    const Eigen::MatrixXd X = build_design(ds, spec);
    std::size_t rows = 0;
    Eigen::VectorXd inner = Eigen::VectorXd::Zero(X.cols());
    for (std::size_t r = 0; r < f.rows(); ++r) {
      if (!f.observed[r]) continue;
      ++rows;
      const double resid = f.outcome[r] - (f.treatment[r] ? p1[r] : p0[r]);
      inner += resid * X.row(static_cast<Eigen::Index>(r)).transpose();
    }
    CHECK(inner.cwiseAbs().maxCoeff() <= 1e-8 * static_cast<double>(rows));
  }
  SUBCASE("constant row weights leave the fit unchanged") {
    std::mt19937_64 rng(63);
    const auto ds = random_panel(rng, 40, 5);
    const auto spec = design({"K1", "P"});
    const std::vector<double> w(ds.frame().rows(), 2.5);
    OutcomeFitOptions opts;
    opts.row_weights = w;
    const auto plain = fit_outcome_mean(ds, 1, OutcomeConditioning::k_conditional, spec);
    const auto weighted = fit_outcome_mean(ds, 1, OutcomeConditioning::k_conditional, spec, opts);
    CHECK((plain.coefficients - weighted.coefficients).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("too few rows") {
    std::vector<SubjectRecord> s{
        {"s1", {row(0, 0, 0.1, 0, 0, true, 1.0), row(1, 1, 0.2, 0, 0, true, 2.0)}}};
    const PanelDataset ds(unit_grid(2), small_columns(), s);
    try {
      fit_outcome_mean(ds, 1, OutcomeConditioning::k_conditional, design({"K1"}));
      FAIL("expected InsufficientRows");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::insufficient_rows);
    }
  }
  SUBCASE("generating slopes under complete observation") {
    const auto cfg = default_config(Mechanism::bernoulli, 1, 5000);
    const auto ds = complete_cohort(cfg, 64);
    const auto spec = design({"A", "K1", "K2", "K3", "P"});
    const double expected[] = {0.4, 0.05, -0.6, 0.3};
    // The mediator residual is noise given K (variance 9 var(M | A)), so the
    // K2 and P slopes have standard errors near 0.04 and 0.06 at this size;
    // the check allows four standard errors with a floor of 0.05.
    const auto& f = ds.frame();
    for (int arm = 0; arm < 2; ++arm) {
      const auto fit = fit_outcome_mean(ds, arm, OutcomeConditioning::k_conditional, spec);
      REQUIRE(fit.coefficients.size() == 5);  // treatment term dropped within arm
      std::vector<std::size_t> rows;
      for (std::size_t r = 0; r < f.rows(); ++r)
        if (f.treatment[r] == arm) rows.push_back(r);
      const Eigen::MatrixXd X = build_design(ds, fit.design, rows);
      Eigen::VectorXd y(X.rows());
      for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = f.outcome[rows[i]];
      const Eigen::VectorXd resid = y - X * fit.coefficients;
      const double s2 = resid.squaredNorm() / static_cast<double>(X.rows() - X.cols());
      const Eigen::MatrixXd cov = s2 * (X.transpose() * X).inverse();
      auto bound = [&](int j) { return std::max(0.05, 4.0 * std::sqrt(cov(j, j))); };
      CHECK(std::fabs(fit.coefficients(0) - (0.5 + arm)) <= bound(0));
      for (int j = 0; j < 4; ++j) CHECK(std::fabs(fit.coefficients(j + 1) - expected[j]) <= bound(j + 1));
      CHECK(std::sqrt(cov(4, 4)) > 0.04);
    }
  }
}
