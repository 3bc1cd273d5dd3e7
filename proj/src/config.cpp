#include "aaiiw/config.hpp"

#include "aaiiw/errors.hpp"

#include <fstream>
#include <set>

namespace aaiiw {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& msg) {
  throw Error(ErrorKind::config, "'" + field + "': " + msg);
}

void allow_keys(const json& j, const std::string& field, std::set<std::string> keys) {
  if (!j.is_object()) fail(field, "expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!keys.count(k)) fail(field.empty() ? k : field + "." + k, "unknown field");
  }
}

std::string path_of(const std::string& field, const std::string& key) {
  return field.empty() ? key : field + "." + key;
}

template <class T>
T get(const json& j, const std::string& field, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(path_of(field, key), std::string("wrong type (") + e.what() + ")");
  }
}

template <class T>
T require(const json& j, const std::string& field, const std::string& key) {
  if (!j.contains(key)) fail(path_of(field, key), "required field is missing");
  return get<T>(j, field, key, T{});
}

template <class Fn>
auto wrap(const std::string& field, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::config) throw;
    fail(field, e.what());
  }
}

json law_to_json(const NormalLaw& law) { return {{"mean", law.mean}, {"variance", law.variance}}; }

NormalLaw law_from_json(const json& j, const std::string& field, NormalLaw fallback) {
  allow_keys(j, field, {"mean", "variance"});
  return {get(j, field, "mean", fallback.mean), get(j, field, "variance", fallback.variance)};
}

json dgp_to_json(const DgpConfig& d, bool explicit_gamma) {
  json j = {
      {"time_grid", {{"start", d.grid.start}, {"end", d.grid.end}, {"bin_width", d.grid.bin_width}}},
      {"k1", law_to_json(d.k1)},
      {"k2_probability", d.k2_probability},
      {"k3", law_to_json(d.k3)},
      {"treatment_coefs", d.treatment_coefs},
      {"mediator_treated", law_to_json(d.mediator_treated)},
      {"mediator_control", law_to_json(d.mediator_control)},
      {"pure_predictor", law_to_json(d.pure_predictor)},
      {"outcome_intercept", d.outcome_intercept},
      {"treatment_effect", d.treatment_effect},
      {"outcome_confounder_coefs", d.outcome_confounder_coefs},
      {"mediator_slope", d.mediator_slope},
      {"pure_predictor_coef", d.pure_predictor_coef},
      {"noise_variance", d.noise_variance},
      {"random_intercept_variance", d.random_intercept_variance},
      {"mechanism", to_string(d.mechanism)},
      {"proportionality_constant", d.proportionality_constant},
      {"rate_slope", d.rate_slope},
      {"rate_offset", d.rate_offset},
  };
  if (explicit_gamma) j["gamma"] = d.gamma;
  return j;
}

DgpConfig dgp_from_json(const json& j, const std::string& field, bool& explicit_gamma) {
  allow_keys(j, field,
             {"time_grid", "k1", "k2_probability", "k3", "treatment_coefs", "mediator_treated",
              "mediator_control", "pure_predictor", "outcome_intercept", "treatment_effect",
              "outcome_confounder_coefs", "mediator_slope", "pure_predictor_coef",
              "noise_variance", "random_intercept_variance", "mechanism",
              "proportionality_constant", "rate_slope", "rate_offset", "gamma", "n"});
  DgpConfig d;
  if (j.contains("time_grid")) {
    const auto& g = j.at("time_grid");
    const std::string gf = path_of(field, "time_grid");
    allow_keys(g, gf, {"start", "end", "bin_width"});
    d.grid.start = get(g, gf, "start", d.grid.start);
    d.grid.end = get(g, gf, "end", d.grid.end);
    d.grid.bin_width = get(g, gf, "bin_width", d.grid.bin_width);
  }
  if (j.contains("k1")) d.k1 = law_from_json(j.at("k1"), path_of(field, "k1"), d.k1);
  if (j.contains("k3")) d.k3 = law_from_json(j.at("k3"), path_of(field, "k3"), d.k3);
  if (j.contains("mediator_treated"))
    d.mediator_treated = law_from_json(j.at("mediator_treated"), path_of(field, "mediator_treated"), d.mediator_treated);
  if (j.contains("mediator_control"))
    d.mediator_control = law_from_json(j.at("mediator_control"), path_of(field, "mediator_control"), d.mediator_control);
  if (j.contains("pure_predictor"))
    d.pure_predictor = law_from_json(j.at("pure_predictor"), path_of(field, "pure_predictor"), d.pure_predictor);
  d.k2_probability = get(j, field, "k2_probability", d.k2_probability);
  d.treatment_coefs = get(j, field, "treatment_coefs", d.treatment_coefs);
  d.outcome_intercept = get(j, field, "outcome_intercept", d.outcome_intercept);
  d.treatment_effect = get(j, field, "treatment_effect", d.treatment_effect);
  d.outcome_confounder_coefs = get(j, field, "outcome_confounder_coefs", d.outcome_confounder_coefs);
  d.mediator_slope = get(j, field, "mediator_slope", d.mediator_slope);
  d.pure_predictor_coef = get(j, field, "pure_predictor_coef", d.pure_predictor_coef);
  d.noise_variance = get(j, field, "noise_variance", d.noise_variance);
  d.random_intercept_variance = get(j, field, "random_intercept_variance", d.random_intercept_variance);
  d.proportionality_constant = get(j, field, "proportionality_constant", d.proportionality_constant);
  d.rate_slope = get(j, field, "rate_slope", d.rate_slope);
  d.rate_offset = get(j, field, "rate_offset", d.rate_offset);
  d.mechanism = wrap(path_of(field, "mechanism"), [&] {
    return mechanism_from_string(get<std::string>(j, field, "mechanism", to_string(d.mechanism)));
  });
  explicit_gamma = j.contains("gamma");
  if (explicit_gamma) d.gamma = get(j, field, "gamma", d.gamma);
  return d;
}

json designs_to_json(const NuisanceDesigns& d) {
  return {{"propensity", design_to_json(d.propensity)},
          {"intensity", design_to_json(d.intensity)},
          {"mu_k", design_to_json(d.mu_k)},
          {"mu_v", design_to_json(d.mu_v)}};
}

NuisanceDesigns designs_from_json(const json& j, const std::string& field, NuisanceDesigns d) {
  allow_keys(j, field, {"propensity", "intensity", "mu_k", "mu_v"});
  if (j.contains("propensity")) d.propensity = design_from_json(j.at("propensity"), path_of(field, "propensity"));
  if (j.contains("intensity")) d.intensity = design_from_json(j.at("intensity"), path_of(field, "intensity"));
  if (j.contains("mu_k")) d.mu_k = design_from_json(j.at("mu_k"), path_of(field, "mu_k"));
  if (j.contains("mu_v")) d.mu_v = design_from_json(j.at("mu_v"), path_of(field, "mu_v"));
  return d;
}

json options_to_json(const PipelineOptions& o) {
  return {{"intensity_model", to_string(o.intensity)},
          {"breslow", to_string(o.breslow)},
          {"stabilized_dw", o.stabilized_dw},
          {"augmentation", to_string(o.augmentation)},
          {"normalization", to_string(o.normalization)},
          {"mean_given_k", to_string(o.mean_given_k)},
          {"stratified_v", o.stratified_v},
          {"clip", {o.clip.lower_quantile, o.clip.upper_quantile}}};
}

PipelineOptions options_from_json(const json& j, const std::string& field, PipelineOptions o) {
  allow_keys(j, field, {"intensity_model", "breslow", "stabilized_dw", "augmentation", "normalization",
                        "mean_given_k", "stratified_v", "clip"});
  o.intensity = wrap(path_of(field, "intensity_model"), [&] {
    return intensity_kind_from_string(get<std::string>(j, field, "intensity_model", to_string(o.intensity)));
  });
  const auto breslow = get<std::string>(j, field, "breslow", to_string(o.breslow));
  if (breslow == "as-written") o.breslow = BreslowVariant::as_written;
  else if (breslow == "risk-set") o.breslow = BreslowVariant::risk_set;
  else fail(path_of(field, "breslow"), "expected 'as-written' or 'risk-set'");
  o.stabilized_dw = get(j, field, "stabilized_dw", o.stabilized_dw);
  o.augmentation = wrap(path_of(field, "augmentation"), [&] {
    return augmentation_from_string(get<std::string>(j, field, "augmentation", to_string(o.augmentation)));
  });
  o.normalization = wrap(path_of(field, "normalization"), [&] {
    return normalization_from_string(get<std::string>(j, field, "normalization", to_string(o.normalization)));
  });
  o.mean_given_k = wrap(path_of(field, "mean_given_k"), [&] {
    return mean_given_k_fit_from_string(get<std::string>(j, field, "mean_given_k", to_string(o.mean_given_k)));
  });
  o.stratified_v = get(j, field, "stratified_v", o.stratified_v);
  if (j.contains("clip")) {
    const auto clip = get<std::vector<double>>(j, field, "clip", {});
    if (clip.size() != 2 || !(clip[0] >= 0.0 && clip[0] <= clip[1] && clip[1] <= 1.0)) {
      fail(path_of(field, "clip"), "expected [lower, upper] quantiles with 0 <= lower <= upper <= 1");
    }
    o.clip = {clip[0], clip[1]};
  }
  return o;
}

void check_estimators(const std::vector<std::string>& labels, const std::string& field) {
  if (labels.empty()) fail(field, "at least one estimator is required");
  for (const auto& l : labels) wrap(field, [&] { return recipe_from_label(l); });
}

std::vector<std::string> default_labels() {
  std::vector<std::string> out;
  for (const auto& r : paper_cells()) out.push_back(r.label);
  return out;
}

}  // namespace

json design_to_json(const DesignSpec& spec) {
  std::vector<std::string> terms;
  for (const auto& t : spec.terms) {
    terms.push_back(t.transform == Transform::identity
                        ? t.column
                        : std::string(to_string(t.transform)) + ":" + t.column);
  }
  return {{"intercept", spec.intercept}, {"terms", terms}};
}

DesignSpec design_from_json(const json& j, const std::string& field) {
  allow_keys(j, field, {"intercept", "terms"});
  const auto terms = require<std::vector<std::string>>(j, field, "terms");
  const bool intercept = get(j, field, "intercept", true);
  return wrap(path_of(field, "terms"), [&] { return DesignSpec::parse(terms, intercept); });
}

std::vector<MonteCarloConfig> SimulateSettings::runs(std::uint64_t base_seed) const {
  std::vector<MonteCarloConfig> out;
  for (int set : gamma_sets) {
    for (std::size_t n : sample_sizes) {
      MonteCarloConfig mc;
      mc.dgp = dgp;
      mc.dgp.n = n;
      if (!explicit_gamma) mc.dgp.gamma = gamma_set(dgp.mechanism, set);
      mc.gamma_set = set;
      mc.replicates = replicates;
      mc.base_seed = base_seed;
      mc.options = options;
      mc.correct = designs;
      mc.misspecified = misspecified_designs;
      mc.recipes.clear();
      for (const auto& l : estimators) mc.recipes.push_back(recipe_from_label(l));
      out.push_back(std::move(mc));
    }
  }
  return out;
}

ExperimentConfig parse_config(const json& j) {
  allow_keys(j, "", {"mode", "base_seed", "output_dir", "estimate", "simulate"});
  if (j.contains("estimate") && j.contains("simulate")) {
    throw Error(ErrorKind::config,
                "fields 'estimate' and 'simulate' are both present; exactly one is allowed");
  }
  ExperimentConfig cfg;
  const auto mode = require<std::string>(j, "", "mode");
  if (mode == "estimate") cfg.mode = RunMode::estimate;
  else if (mode == "simulate") cfg.mode = RunMode::simulate;
  else fail("mode", "expected 'estimate' or 'simulate'");
  cfg.base_seed = get<std::uint64_t>(j, "", "base_seed", cfg.base_seed);
  cfg.output_dir = get<std::string>(j, "", "output_dir", cfg.output_dir);

  const std::string section = mode;
  if (!j.contains(section)) {
    fail(section, "mode '" + mode + "' requires a '" + section + "' section");
  }
  const auto& s = j.at(section);

  if (cfg.mode == RunMode::estimate) {
    allow_keys(s, "estimate", {"input", "schema", "estimators", "designs", "misspecified_designs",
                               "options", "bootstrap"});
    EstimateSettings e;
    e.input = require<std::string>(s, "estimate", "input");
    if (s.contains("schema")) {
      const auto& sch = s.at("schema");
      allow_keys(sch, "estimate.schema", {"time_grid", "confounders", "mediators", "pure_predictors"});
      CovariateColumns cols{get<std::vector<std::string>>(sch, "estimate.schema", "confounders", {}),
                            get<std::vector<std::string>>(sch, "estimate.schema", "mediators", {}),
                            get<std::vector<std::string>>(sch, "estimate.schema", "pure_predictors", {})};
      TimeGrid grid;
      if (sch.contains("time_grid")) {
        const auto& g = sch.at("time_grid");
        allow_keys(g, "estimate.schema.time_grid", {"start", "end", "bin_width"});
        grid = {get(g, "estimate.schema.time_grid", "start", grid.start),
                get(g, "estimate.schema.time_grid", "end", grid.end),
                get(g, "estimate.schema.time_grid", "bin_width", grid.bin_width)};
      }
      e.schema = CsvSchema::from_columns(grid, cols);
    } else {
      e.schema = CsvSchema::from_columns(TimeGrid{}, simulated_columns());
    }
    e.options.intensity = IntensityKind::proportional_rate;
    if (s.contains("options")) e.options = options_from_json(s.at("options"), "estimate.options", e.options);
    const Mechanism implied = e.options.intensity == IntensityKind::logistic ? Mechanism::bernoulli
                                                                             : Mechanism::poisson;
    e.designs = correct_designs(implied);
    e.misspecified_designs = misspecified_designs(implied);
    if (s.contains("designs")) e.designs = designs_from_json(s.at("designs"), "estimate.designs", e.designs);
    if (s.contains("misspecified_designs"))
      e.misspecified_designs = designs_from_json(s.at("misspecified_designs"), "estimate.misspecified_designs",
                                                 e.misspecified_designs);
    e.estimators = get(s, "estimate", "estimators",
                       std::vector<std::string>{"OLS", "IPTc", "IIVc", "DWc", "AAIIWc"});
    check_estimators(e.estimators, "estimate.estimators");
    if (s.contains("bootstrap")) {
      const auto& b = s.at("bootstrap");
      allow_keys(b, "estimate.bootstrap", {"replicates", "level"});
      e.bootstrap.replicates = get<std::size_t>(b, "estimate.bootstrap", "replicates", 0);
      e.bootstrap.level = get(b, "estimate.bootstrap", "level", 0.95);
      if (e.bootstrap.replicates != 0 && e.bootstrap.replicates < 100) {
        fail("estimate.bootstrap.replicates", "must be 0 (disabled) or at least 100");
      }
      if (!(e.bootstrap.level > 0.0 && e.bootstrap.level < 1.0)) {
        fail("estimate.bootstrap.level", "must lie in (0, 1)");
      }
    }
    cfg.estimate = std::move(e);
  } else {
    allow_keys(s, "simulate", {"dgp", "gamma_sets", "n", "replicates", "estimators", "designs",
                               "misspecified_designs", "options", "max_failure_fraction"});
    SimulateSettings sim;
    if (s.contains("dgp")) sim.dgp = dgp_from_json(s.at("dgp"), "simulate.dgp", sim.explicit_gamma);
    sim.gamma_sets = get(s, "simulate", "gamma_sets", sim.gamma_sets);
    if (sim.gamma_sets.empty()) fail("simulate.gamma_sets", "at least one gamma set is required");
    for (int g : sim.gamma_sets) {
      if (g < 1 || g > 4) fail("simulate.gamma_sets", "gamma sets are numbered 1 to 4");
    }
    if (sim.explicit_gamma && sim.gamma_sets.size() != 1) {
      fail("simulate.dgp.gamma", "an explicit gamma requires exactly one entry in gamma_sets");
    }
    sim.sample_sizes = get(s, "simulate", "n", sim.sample_sizes);
    if (sim.sample_sizes.empty()) fail("simulate.n", "at least one sample size is required");
    sim.replicates = get(s, "simulate", "replicates", sim.replicates);
    if (sim.replicates == 0) fail("simulate.replicates", "must be at least 1");
    sim.options.intensity = intensity_kind_for(sim.dgp.mechanism);
    if (s.contains("options")) sim.options = options_from_json(s.at("options"), "simulate.options", sim.options);
    sim.designs = correct_designs(sim.dgp.mechanism);
    sim.misspecified_designs = misspecified_designs(sim.dgp.mechanism);
    if (s.contains("designs")) sim.designs = designs_from_json(s.at("designs"), "simulate.designs", sim.designs);
    if (s.contains("misspecified_designs"))
      sim.misspecified_designs = designs_from_json(s.at("misspecified_designs"),
                                                   "simulate.misspecified_designs", sim.misspecified_designs);
    sim.estimators = get(s, "simulate", "estimators", default_labels());
    check_estimators(sim.estimators, "simulate.estimators");
    sim.max_failure_fraction = get(s, "simulate", "max_failure_fraction", sim.max_failure_fraction);
    for (const auto& run : sim.runs(cfg.base_seed)) {
      wrap("simulate.dgp", [&] {
        run.dgp.validate();
        return 0;
      });
    }
    cfg.simulate = std::move(sim);
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot open config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config, "config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& cfg) {
  json j;
  j["mode"] = cfg.mode == RunMode::estimate ? "estimate" : "simulate";
  j["base_seed"] = cfg.base_seed;
  j["output_dir"] = cfg.output_dir;
  if (cfg.estimate) {
    const auto& e = *cfg.estimate;
    const auto cols = e.schema.columns();
    j["estimate"] = {
        {"input", e.input},
        {"schema",
         {{"time_grid",
           {{"start", e.schema.grid.start}, {"end", e.schema.grid.end}, {"bin_width", e.schema.grid.bin_width}}},
          {"confounders", cols.confounders},
          {"mediators", cols.mediators},
          {"pure_predictors", cols.pure_predictors}}},
        {"estimators", e.estimators},
        {"designs", designs_to_json(e.designs)},
        {"misspecified_designs", designs_to_json(e.misspecified_designs)},
        {"options", options_to_json(e.options)},
        {"bootstrap", {{"replicates", e.bootstrap.replicates}, {"level", e.bootstrap.level}}}};
  }
  if (cfg.simulate) {
    const auto& s = *cfg.simulate;
    j["simulate"] = {{"dgp", dgp_to_json(s.dgp, s.explicit_gamma)},
                     {"gamma_sets", s.gamma_sets},
                     {"n", s.sample_sizes},
                     {"replicates", s.replicates},
                     {"estimators", s.estimators},
                     {"designs", designs_to_json(s.designs)},
                     {"misspecified_designs", designs_to_json(s.misspecified_designs)},
                     {"options", options_to_json(s.options)},
                     {"max_failure_fraction", s.max_failure_fraction}};
  }
  return j;
}

}  // namespace aaiiw
