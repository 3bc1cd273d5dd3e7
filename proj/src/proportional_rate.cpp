#include "aaiiw/errors.hpp"
#include "aaiiw/nuisance.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace aaiiw {

const char* to_string(BreslowVariant v) noexcept {
  switch (v) {
    case BreslowVariant::as_written: return "as-written";
    case BreslowVariant::risk_set: return "risk-set";
  }
  return "?";
}

namespace {

DesignSpec without_intercept(DesignSpec spec) {
  spec.intercept = false;
  return spec;
}

// Per-bin accumulation of exp(gamma'x) moments over the risk set, with the
// bin's maximum linear predictor factored out.
struct BinMoments {
  double shift = -std::numeric_limits<double>::infinity();
  double s0 = 0.0;
  Eigen::VectorXd s1;
  Eigen::MatrixXd s2;
  Eigen::VectorXd event_sum;
  int events = 0;
};

std::vector<BinMoments> bin_moments(const RiskSetData& data, const Eigen::VectorXd& gamma,
                                    bool second_order) {
  const Eigen::Index p = data.X.cols();
  std::vector<BinMoments> m(static_cast<std::size_t>(data.bins));
  for (auto& b : m) {
    b.s1 = Eigen::VectorXd::Zero(p);
    b.event_sum = Eigen::VectorXd::Zero(p);
    if (second_order) b.s2 = Eigen::MatrixXd::Zero(p, p);
  }
  const Eigen::VectorXd eta = data.X * gamma;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    auto& b = m[static_cast<std::size_t>(data.bin[static_cast<std::size_t>(i)])];
    b.shift = std::max(b.shift, eta(i));
  }
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    auto& b = m[static_cast<std::size_t>(data.bin[r])];
    const double w = std::exp(eta(i) - b.shift);
    const auto x = data.X.row(i).transpose();
    b.s0 += w;
    b.s1 += w * x;
    if (second_order) b.s2.noalias() += w * x * x.transpose();
    if (data.event[r]) {
      ++b.events;
      b.event_sum += x;
    }
  }
  return m;
}

struct PartialLikelihood {
  double value = 0.0;
  Eigen::VectorXd score;
  Eigen::MatrixXd information;
};

PartialLikelihood evaluate(const RiskSetData& data, const Eigen::VectorXd& gamma,
                           bool second_order) {
  const Eigen::Index p = data.X.cols();
  PartialLikelihood out;
  out.score = Eigen::VectorXd::Zero(p);
  if (second_order) out.information = Eigen::MatrixXd::Zero(p, p);
  for (const auto& b : bin_moments(data, gamma, second_order)) {
    if (b.events == 0) continue;
    const double d = b.events;
    out.value += gamma.dot(b.event_sum) - d * (b.shift + std::log(b.s0));
    const Eigen::VectorXd mean = b.s1 / b.s0;
    out.score += b.event_sum - d * mean;
    if (second_order) {
      out.information += d * (b.s2 / b.s0 - mean * mean.transpose());
    }
  }
  return out;
}

}  // namespace

RiskSetData RiskSetData::from_panel(const PanelDataset& ds, const DesignSpec& spec) {
  const auto rows = at_risk_rows(ds);
  RiskSetData data;
  data.X = build_design(ds, without_intercept(spec), rows);
  data.bins = ds.grid().bin_count();
  data.bin.reserve(rows.size());
  data.event.reserve(rows.size());
  const auto& f = ds.frame();
  for (auto r : rows) {
    data.bin.push_back(f.bin[r]);
    data.event.push_back(f.observed[r]);
  }
  return data;
}

ObjectiveValue partial_loglik(const RiskSetData& data, const Eigen::VectorXd& gamma) {
  auto pl = evaluate(data, gamma, false);
  return {pl.value, pl.score};
}

std::vector<double> breslow_baseline(const RiskSetData& data, const Eigen::VectorXd& gamma,
                                     BreslowVariant variant) {
  std::vector<double> events(static_cast<std::size_t>(data.bins), 0.0);
  std::vector<double> denom(static_cast<std::size_t>(data.bins), 0.0);
  const Eigen::VectorXd eta = data.X * gamma;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    const auto b = static_cast<std::size_t>(data.bin[r]);
    const bool event = data.event[r] != 0;
    if (event) events[b] += 1.0;
    if (event || variant == BreslowVariant::risk_set) denom[b] += std::exp(eta(i));
  }
  std::vector<double> baseline(events.size(), 0.0);
  for (std::size_t b = 0; b < events.size(); ++b) {
    if (events[b] > 0.0) baseline[b] = events[b] / denom[b];
  }
  return baseline;
}

std::vector<double> breslow_baseline(const PanelDataset& ds, const DesignSpec& spec,
                                     const Eigen::VectorXd& gamma,
                                     BreslowVariant variant) {
  const auto data = RiskSetData::from_panel(ds, spec);
  if (gamma.size() != data.X.cols()) {
    throw Error(ErrorKind::invalid_input,
                "gamma has " + std::to_string(gamma.size()) + " entries, design has " +
                    std::to_string(data.X.cols()) + " columns");
  }
  return breslow_baseline(data, gamma, variant);
}

RateFit fit_proportional_rate(const PanelDataset& ds, const DesignSpec& spec,
                              BreslowVariant variant, const RateOptions& options) {
  check_design(ds, spec);
  const auto data = RiskSetData::from_panel(ds, spec);
  const Eigen::Index p = data.X.cols();
  double total_events = 0.0;
  for (auto e : data.event) total_events += e;
  if (total_events == 0.0) {
    throw Error(ErrorKind::no_events, "no observed events among at-risk rows");
  }
  if (p == 0) {
    throw Error(ErrorKind::invalid_input, "rate design has no covariate terms");
  }

  RateFit fit;
  fit.design = without_intercept(spec);
  fit.variant = variant;
  fit.gamma = Eigen::VectorXd::Zero(p);

  PartialLikelihood current = evaluate(data, fit.gamma, true);
  fit.loglik_path.push_back(current.value / total_events);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    fit.final_gradient_norm = current.score.norm() / total_events;
    if (fit.final_gradient_norm <= options.tolerance) {
      fit.converged = true;
      break;
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(current.information / total_events);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-14 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
      throw Error(ErrorKind::singular_information,
                  "partial-likelihood information is singular at iteration " +
                      std::to_string(iter));
    }
    const Eigen::VectorXd step = ldlt.solve(current.score / total_events);
    // Same safeguard as the logistic fit: once the Newton decrement is below
    // the objective's rounding error, take the full step.
    const double decrement = current.score.dot(step) / total_events;
    double scale = 1.0;
    bool accepted = false;
    Eigen::VectorXd candidate;
    PartialLikelihood next;
    if (decrement <= 1e-12) {
      candidate = fit.gamma + step;
      next = evaluate(data, candidate, true);
      accepted = std::isfinite(next.value);
    }
    for (int halving = 0; !accepted && halving < 40; ++halving) {
      candidate = fit.gamma + scale * step;
      next = evaluate(data, candidate, true);
      if (std::isfinite(next.value) && next.value >= current.value) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    ++fit.iterations;
    if (!accepted) break;
    fit.gamma = candidate;
    current = std::move(next);
    fit.loglik_path.push_back(current.value / total_events);
    if (fit.gamma.cwiseAbs().maxCoeff() > options.divergence_bound) {
      throw Error(ErrorKind::not_converged,
                  "rate coefficients diverged beyond " +
                      std::to_string(options.divergence_bound));
    }
  }
  fit.final_gradient_norm = current.score.norm() / total_events;
  if (fit.final_gradient_norm <= options.tolerance) fit.converged = true;
  if (!fit.converged) {
    throw Error(ErrorKind::not_converged,
                "partial likelihood did not reach score norm " +
                    std::to_string(options.tolerance) + " within " +
                    std::to_string(options.max_iterations) + " iterations");
  }
  fit.baseline = breslow_baseline(data, fit.gamma, variant);
  return fit;
}

std::vector<double> predict_intensity(const PanelDataset& ds, const IntensityModel& model,
                                      bool include_baseline) {
  const auto& f = ds.frame();
  std::vector<double> out(f.rows(), 0.0);
  if (const auto* rate = std::get_if<RateFit>(&model)) {
    const Eigen::VectorXd eta = build_design(ds, rate->design) * rate->gamma;
    for (std::size_t r = 0; r < f.rows(); ++r) {
      if (!f.at_risk[r]) continue;
      const double base =
          include_baseline ? rate->baseline[static_cast<std::size_t>(f.bin[r])] : 1.0;
      out[r] = base * std::exp(eta(static_cast<Eigen::Index>(r)));
    }
  } else {
    const auto& logit = std::get<LogisticFit>(model);
    const Eigen::VectorXd prob = logit.predict(build_design(ds, logit.design));
    for (std::size_t r = 0; r < f.rows(); ++r) {
      if (f.at_risk[r]) out[r] = prob(static_cast<Eigen::Index>(r));
    }
  }
  return out;
}

}  // namespace aaiiw
