#include "aaiiw/pipeline.hpp"

#include "aaiiw/errors.hpp"

#include <cmath>

namespace aaiiw {

namespace {

DesignSpec terms(std::initializer_list<const char*> names, bool intercept) {
  std::vector<std::string> v(names.begin(), names.end());
  return DesignSpec::parse(v, intercept);
}

}  // namespace

NuisanceDesigns correct_designs(Mechanism mechanism) {
  NuisanceDesigns d;
  d.propensity = terms({"K1", "K2", "K3"}, true);
  d.intensity = terms({"A", "M", "K1", "K2", "K3", "P"}, mechanism == Mechanism::bernoulli);
  d.mu_k = terms({"A", "K1", "K2", "K3", "P"}, true);
  d.mu_v = terms({"A", "M", "K1", "K2", "K3", "P"}, true);
  return d;
}

NuisanceDesigns misspecified_designs(Mechanism mechanism) {
  NuisanceDesigns d;
  d.propensity = terms({"sine:K1"}, true);
  d.intensity = terms({"sine:M", "K2"}, mechanism == Mechanism::bernoulli);
  d.mu_k = terms({"A"}, true);
  d.mu_v = terms({"A"}, true);
  return d;
}

ScenarioSpec ScenarioSpec::from_tag(const std::string& tag) {
  // propensity, intensity, mean given K, mean given V
  if (tag == "all-correct") return {tag, true, true, true, true};
  if (tag == "a") return {tag, true, true, false, false};
  if (tag == "b") return {tag, false, false, true, true};
  if (tag == "c") return {tag, false, true, true, false};
  if (tag == "d") return {tag, true, false, false, true};
  if (tag == "ipt-only") return {tag, true, false, false, false};
  if (tag == "iiv-only") return {tag, false, true, false, false};
  if (tag == "none") return {tag, false, false, false, false};
  throw Error(ErrorKind::invalid_input, "unknown scenario tag '" + tag + "'");
}

std::vector<std::string> scenario_tags() {
  return {"all-correct", "a", "b", "c", "d", "ipt-only", "iiv-only", "none"};
}

NuisanceDesigns ScenarioSpec::designs(const NuisanceDesigns& correct,
                                      const NuisanceDesigns& misspecified) const {
  return {propensity_correct ? correct.propensity : misspecified.propensity,
          intensity_correct ? correct.intensity : misspecified.intensity,
          mu_k_correct ? correct.mu_k : misspecified.mu_k,
          mu_v_correct ? correct.mu_v : misspecified.mu_v};
}

const char* to_string(IntensityKind kind) noexcept {
  switch (kind) {
    case IntensityKind::proportional_rate: return "proportional-rate";
    case IntensityKind::logistic: return "logistic";
  }
  return "?";
}

IntensityKind intensity_kind_from_string(const std::string& name) {
  if (name == "proportional-rate") return IntensityKind::proportional_rate;
  if (name == "logistic") return IntensityKind::logistic;
  throw Error(ErrorKind::invalid_input, "unknown intensity model '" + name + "'");
}

const char* to_string(MeanGivenKFit mode) noexcept {
  switch (mode) {
    case MeanGivenKFit::observed_rows: return "observed-rows";
    case MeanGivenKFit::iiv_weighted: return "iiv-weighted";
    case MeanGivenKFit::doubly_robust: return "doubly-robust";
  }
  return "?";
}

MeanGivenKFit mean_given_k_fit_from_string(const std::string& name) {
  if (name == "observed-rows") return MeanGivenKFit::observed_rows;
  if (name == "iiv-weighted") return MeanGivenKFit::iiv_weighted;
  if (name == "doubly-robust") return MeanGivenKFit::doubly_robust;
  throw Error(ErrorKind::invalid_input, "unknown mean-given-K fitting mode '" + name + "'");
}

IntensityKind intensity_kind_for(Mechanism mechanism) {
  return mechanism == Mechanism::poisson ? IntensityKind::proportional_rate
                                         : IntensityKind::logistic;
}

NuisanceCache::NuisanceCache(const PanelDataset& ds, NuisanceDesigns correct,
                             NuisanceDesigns misspecified, PipelineOptions options)
    : ds_(ds),
      correct_(std::move(correct)),
      misspecified_(std::move(misspecified)),
      options_(std::move(options)) {}

const DesignSpec& NuisanceCache::pick(bool correct, DesignSpec NuisanceDesigns::*member) const {
  return correct ? correct_.*member : misspecified_.*member;
}

const LogisticFit& NuisanceCache::propensity(bool correct) {
  auto& slot = propensity_[correct ? 1 : 0];
  if (!slot) {
    slot = fit_propensity(ds_, pick(correct, &NuisanceDesigns::propensity), options_.logistic);
  }
  return *slot;
}

const IntensityModel& NuisanceCache::intensity(bool correct) {
  auto& slot = intensity_[correct ? 1 : 0];
  if (!slot) {
    const auto& spec = pick(correct, &NuisanceDesigns::intensity);
    if (options_.intensity == IntensityKind::proportional_rate) {
      slot = fit_proportional_rate(ds_, spec, options_.breslow, options_.rate);
    } else {
      slot = fit_bernoulli_observation(ds_, spec, options_.logistic);
    }
  }
  return *slot;
}

const WeightSet& NuisanceCache::weights(std::optional<bool> propensity_correct,
                                        std::optional<bool> intensity_correct,
                                        bool stabilized) {
  const auto code = [](std::optional<bool> b) { return b ? (*b ? 1 : 0) : -1; };
  const auto key = std::make_tuple(code(propensity_correct), code(intensity_correct), stabilized);
  if (auto it = weights_.find(key); it != weights_.end()) return it->second;

  const auto& f = ds_.frame();
  const std::size_t n = f.rows();
  std::vector<double> p1(n, 0.5);
  std::vector<double> rho(n, 1.0);
  std::vector<std::string> provenance;
  if (propensity_correct) {
    const auto& fit = propensity(*propensity_correct);
    const Eigen::VectorXd p = fit.predict(build_design(ds_, fit.design));
    p1.assign(p.data(), p.data() + p.size());
  }
  bool rate_stabilized = false;
  if (intensity_correct) {
    const auto& model = intensity(*intensity_correct);
    rate_stabilized = stabilized && std::holds_alternative<RateFit>(model);
    rho = predict_intensity(ds_, model, !rate_stabilized);
  }
  WeightSet w = make_weights(ds_, std::move(p1), std::move(rho), rate_stabilized, options_.clip);
  if (!propensity_correct) {
    for (std::size_t r = 0; r < n; ++r) w.ipt[r] = f.at_risk[r] ? 1.0 : 0.0;
    w.provenance.push_back("propensity[none]");
  } else {
    w.provenance.push_back(std::string("propensity[") +
                           (*propensity_correct ? "correct" : "misspecified") + "]");
  }
  if (!intensity_correct) {
    w.provenance.push_back("intensity[none]");
  } else {
    w.provenance.push_back(std::string("intensity[") + to_string(options_.intensity) + ", " +
                           (*intensity_correct ? "correct" : "misspecified") +
                           (rate_stabilized ? ", stabilized" : "") + "]");
  }
  return weights_.emplace(key, std::move(w)).first->second;
}

const std::array<OutcomeMeanFit, 2>& NuisanceCache::mu_v(bool correct) {
  auto& slot = mu_v_[correct ? 1 : 0];
  if (!slot) {
    OutcomeFitOptions opts;
    opts.stratified_v = options_.stratified_v;
    const auto& spec = pick(correct, &NuisanceDesigns::mu_v);
    slot = std::array<OutcomeMeanFit, 2>{
        fit_outcome_mean(ds_, 0, OutcomeConditioning::v_conditional, spec, opts),
        fit_outcome_mean(ds_, 1, OutcomeConditioning::v_conditional, spec, opts)};
  }
  return *slot;
}

const std::array<OutcomeMeanFit, 2>& NuisanceCache::mu_k(const ScenarioSpec& spec) {
  const auto mode = options_.mean_given_k;
  const int intensity_key =
      mode == MeanGivenKFit::observed_rows ? -1 : (spec.intensity_correct ? 1 : 0);
  const int mu_v_key =
      mode == MeanGivenKFit::doubly_robust ? (spec.mu_v_correct ? 1 : 0) : -1;
  const auto key = std::make_tuple(spec.mu_k_correct, intensity_key, mu_v_key);
  if (auto it = mu_k_.find(key); it != mu_k_.end()) return it->second;

  const auto& design = pick(spec.mu_k_correct, &NuisanceDesigns::mu_k);
  std::array<OutcomeMeanFit, 2> fits;
  if (mode == MeanGivenKFit::observed_rows) {
    for (int a = 0; a < 2; ++a) {
      fits[a] = fit_outcome_mean(ds_, a, OutcomeConditioning::k_conditional, design);
    }
  } else {
    const auto& w = weights(std::nullopt, spec.intensity_correct, false);
    const auto& f = ds_.frame();
    if (mode == MeanGivenKFit::iiv_weighted) {
      OutcomeFitOptions opts;
      opts.row_weights = w.iiv;
      for (int a = 0; a < 2; ++a) {
        fits[a] = fit_outcome_mean(ds_, a, OutcomeConditioning::k_conditional, design, opts);
      }
    } else {
      const auto& v_fits = mu_v(spec.mu_v_correct);
      for (int a = 0; a < 2; ++a) {
        const auto base = v_fits[a].predict(ds_);
        std::vector<double> pseudo(f.rows(), 0.0);
        for (std::size_t r = 0; r < f.rows(); ++r) {
          if (!f.at_risk[r]) continue;
          pseudo[r] = base[r];
          if (f.observed[r]) pseudo[r] += w.iiv[r] * (f.outcome[r] - base[r]);
        }
        fits[a] = fit_outcome_mean_to_pseudo(ds_, a, design, pseudo);
      }
    }
  }
  return mu_k_.emplace(key, std::move(fits)).first->second;
}

NuisanceSuite scenario_nuisance_suite(const PanelDataset& ds, const ScenarioSpec& spec,
                                      const NuisanceDesigns& correct,
                                      const NuisanceDesigns& misspecified,
                                      const PipelineOptions& options) {
  NuisanceCache cache(ds, correct, misspecified, options);
  return {cache.propensity(spec.propensity_correct), cache.intensity(spec.intensity_correct),
          cache.mu_k(spec), cache.mu_v(spec.mu_v_correct)};
}

std::vector<EstimatorRecipe> paper_cells() {
  std::vector<EstimatorRecipe> cells;
  for (const char* label : {"OLS", "IPTc", "IPTnc", "DWc", "DWiptc", "DWiivc", "DWnc", "AAIIWc",
                            "AAIIWs.a", "AAIIWs.b", "AAIIWs.c", "AAIIWs.d"}) {
    cells.push_back(recipe_from_label(label));
  }
  return cells;
}

EstimatorRecipe recipe_from_label(const std::string& label) {
  auto make = [&](EstimatorKind kind, const char* tag) {
    return EstimatorRecipe{label, kind, ScenarioSpec::from_tag(tag)};
  };
  if (label == "OLS") return make(EstimatorKind::ols, "none");
  if (label == "IPTc") return make(EstimatorKind::ipt, "ipt-only");
  if (label == "IPTnc") return make(EstimatorKind::ipt, "none");
  if (label == "IIVc") return make(EstimatorKind::iiv, "iiv-only");
  if (label == "IIVnc") return make(EstimatorKind::iiv, "none");
  if (label == "DWc") return make(EstimatorKind::fiptm, "all-correct");
  if (label == "DWiptc") return make(EstimatorKind::fiptm, "ipt-only");
  if (label == "DWiivc") return make(EstimatorKind::fiptm, "iiv-only");
  if (label == "DWnc") return make(EstimatorKind::fiptm, "none");
  if (label == "AAIIWc") return make(EstimatorKind::aaiiw, "all-correct");
  for (const char* tag : {"a", "b", "c", "d"}) {
    if (label == std::string("AAIIWs.") + tag) return make(EstimatorKind::aaiiw, tag);
  }
  throw Error(ErrorKind::invalid_input, "unknown estimator label '" + label + "'");
}

const WeightSet* recipe_weights(const EstimatorRecipe& recipe, NuisanceCache& cache) {
  const auto& sc = recipe.scenario;
  const bool stabilized = cache.options().stabilized_dw;
  switch (recipe.kind) {
    case EstimatorKind::ols: return nullptr;
    case EstimatorKind::ipt: return &cache.weights(sc.propensity_correct, std::nullopt, false);
    case EstimatorKind::iiv: return &cache.weights(std::nullopt, sc.intensity_correct, stabilized);
    case EstimatorKind::fiptm:
      return &cache.weights(sc.propensity_correct, sc.intensity_correct, stabilized);
    case EstimatorKind::aaiiw:
      return &cache.weights(sc.propensity_correct, sc.intensity_correct, false);
  }
  return nullptr;
}

EstimateResult run_estimator(const EstimatorRecipe& recipe, NuisanceCache& cache) {
  const auto& ds = cache.dataset();
  const auto& sc = recipe.scenario;
  const WeightSet* w = recipe_weights(recipe, cache);
  EstimateResult res;
  switch (recipe.kind) {
    case EstimatorKind::ols:
      res = estimate_ols(ds);
      break;
    case EstimatorKind::ipt:
      res = estimate_ipt(ds, *w, cache.options().normalization);
      break;
    case EstimatorKind::iiv:
      res = estimate_iiv(ds, *w);
      break;
    case EstimatorKind::fiptm:
      res = estimate_fiptm(ds, *w, cache.options().normalization);
      break;
    case EstimatorKind::aaiiw:
      res = estimate_aaiiw(ds, *w, cache.mu_k(sc), cache.mu_v(sc.mu_v_correct),
                           cache.options().augmentation);
      res.provenance.push_back(std::string("mean-given-K fit[") +
                               to_string(cache.options().mean_given_k) + "]");
      break;
  }
  res.provenance.insert(res.provenance.begin(), "recipe[" + recipe.label + "; scenario " +
                                                    sc.tag + "]");
  return res;
}

EstimateResult run_estimator(const PanelDataset& ds, const EstimatorRecipe& recipe,
                             const NuisanceDesigns& correct,
                             const NuisanceDesigns& misspecified,
                             const PipelineOptions& options) {
  NuisanceCache cache(ds, correct, misspecified, options);
  return run_estimator(recipe, cache);
}

}  // namespace aaiiw
