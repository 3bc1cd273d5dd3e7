#include "support.hpp"

#include "aaiiw/errors.hpp"
#include "aaiiw/montecarlo.hpp"
#include "aaiiw/pipeline.hpp"

#include <doctest.h>

#include <sstream>

using namespace aaiiw;
using namespace testsupport;

TEST_CASE("scenario tags follow the robustness table") {
  // Columns: propensity, intensity, mean given K, mean given V.
  const auto a = ScenarioSpec::from_tag("a");
  CHECK((a.propensity_correct && a.intensity_correct && !a.mu_k_correct && !a.mu_v_correct));
  const auto b = ScenarioSpec::from_tag("b");
  CHECK((!b.propensity_correct && !b.intensity_correct && b.mu_k_correct && b.mu_v_correct));
  const auto c = ScenarioSpec::from_tag("c");
  CHECK((!c.propensity_correct && c.intensity_correct && c.mu_k_correct && !c.mu_v_correct));
  const auto d = ScenarioSpec::from_tag("d");
  CHECK((d.propensity_correct && !d.intensity_correct && !d.mu_k_correct && d.mu_v_correct));
  CHECK_THROWS_AS(ScenarioSpec::from_tag("e"), Error);
  CHECK(scenario_tags().size() == 8);

  const auto correct = correct_designs(Mechanism::bernoulli);
  const auto wrong = misspecified_designs(Mechanism::bernoulli);
  const auto designs = a.designs(correct, wrong);
  CHECK(designs.propensity == correct.propensity);
  CHECK(designs.intensity == correct.intensity);
  CHECK(designs.mu_k == wrong.mu_k);
  CHECK(designs.mu_v == wrong.mu_v);
  CHECK(!correct_designs(Mechanism::poisson).intensity.intercept);
  CHECK(correct.intensity.intercept);
}

TEST_CASE("recipes") {
  const auto cells = paper_cells();
  REQUIRE(cells.size() == 12);
  CHECK(cells.front().label == "OLS");
  CHECK(cells.back().label == "AAIIWs.d");
  for (const auto& c : cells) CHECK(recipe_from_label(c.label) == c);
  CHECK(recipe_from_label("DWiptc").scenario.tag == "ipt-only");
  CHECK(recipe_from_label("IIVc").kind == EstimatorKind::iiv);
  CHECK_THROWS_AS(recipe_from_label("XYZ"), Error);
}

TEST_CASE("all-correct suite converges with propensity near the truth") {
  const auto cfg = default_config(Mechanism::bernoulli, 2, 1500);
  const auto ds = simulate_cohort(cfg, 12);
  PipelineOptions options;
  const auto suite = scenario_nuisance_suite(ds, ScenarioSpec::from_tag("all-correct"),
                                             correct_designs(Mechanism::bernoulli),
                                             misspecified_designs(Mechanism::bernoulli), options);
  CHECK(suite.propensity.converged);
  for (int j = 0; j < 4; ++j) CHECK(std::fabs(suite.propensity.coefficients(j) - cfg.treatment_coefs[j]) <= 0.15);
  CHECK(std::get<LogisticFit>(suite.intensity).converged);
}

TEST_CASE("cached recipes agree with from-scratch runs") {
  const auto cfg = default_config(Mechanism::poisson, 2, 300);
  const auto ds = simulate_cohort(cfg, 13);
  PipelineOptions options;
  options.intensity = IntensityKind::proportional_rate;
  const auto correct = correct_designs(Mechanism::poisson);
  const auto wrong = misspecified_designs(Mechanism::poisson);
  NuisanceCache cache(ds, correct, wrong, options);
  for (const auto& recipe : paper_cells()) {
    const auto cached = run_estimator(recipe, cache);
    const auto fresh = run_estimator(ds, recipe, correct, wrong, options);
    CHECK(cached.params.beta1 == fresh.params.beta1);
    CHECK(std::fabs(cached.ee_residual[0]) <= 1e-8 * 300);
    CHECK(std::fabs(cached.ee_residual[1]) <= 1e-8 * 300);
    CHECK((recipe_weights(recipe, cache) == nullptr) == (recipe.kind == EstimatorKind::ols));
  }
}

TEST_CASE("Monte Carlo driver") {
  auto mc = monte_carlo_config(Mechanism::bernoulli, 1, 200, 4, 99);

  SUBCASE("one replicate reproduces a single run") {
    mc.replicates = 1;
    const auto report = run_monte_carlo(mc);
    const auto ds = simulate_cohort(mc.dgp, derive_seed(99, 0));
    NuisanceCache cache(ds, mc.correct, mc.misspecified, mc.options);
    for (const auto& recipe : mc.recipes) {
      const auto* cell = report.find(recipe.label);
      REQUIRE(cell != nullptr);
      CHECK(cell->bias == run_estimator(recipe, cache).params.beta1 - 1.0);
      CHECK(cell->variance == 0.0);
    }
  }
  SUBCASE("bit-identical for any worker count, with MSE = bias^2 + variance") {
    const auto serial = run_monte_carlo(mc, 1);
    const auto parallel = run_monte_carlo(mc, 3);
    std::ostringstream a, b;
    serial.write_csv(a);
    parallel.write_csv(b);
    CHECK(a.str() == b.str());
    for (const auto& c : serial.cells) {
      CHECK(c.replicates == 4);
      CHECK(std::fabs(c.mse - (c.bias * c.bias + c.variance)) <= 1e-12);
      CHECK(c.mse >= c.bias * c.bias - 1e-12);
    }
    CHECK(a.str().rfind("mechanism,gamma_set,n,estimator,scenario,R,bias,mse,variance,"
                        "mean_events_a0,mean_events_a1,failures\n", 0) == 0);
    std::ostringstream reps;
    serial.write_replicates_csv(reps);
    const std::string rep_text = reps.str();
    CHECK(std::count(rep_text.begin(), rep_text.end(), '\n') == 1 + 4 * 12);
  }
  SUBCASE("failures are recorded, not thrown") {
    mc.replicates = 2;
    mc.misspecified.propensity = DesignSpec::parse(std::vector<std::string>{"M"}, true);
    const auto report = run_monte_carlo(mc);
    const auto* cell = report.find("IPTnc");
    REQUIRE(cell != nullptr);
    CHECK(cell->failures == 2);
    CHECK(report.max_failure_fraction() == 1.0);
    CHECK(report.find("OLS")->failures == 0);
  }
}

TEST_CASE("table rendering") {
  CHECK(format_table_value(0.004) == "<0.01");
  CHECK(format_table_value(-0.004) == "<0.01");
  CHECK(format_table_value(0.4712) == "0.47");
  MonteCarloReport single;
  single.cells.push_back({"bernoulli", 1, 1000, "OLS", "none", 10, 0.004, 0.22, 0.2, 1, 7, 0});
  const auto text = render_table(single);
  CHECK(text.find("<0.01") != std::string::npos);
  // Title, blank separator, block header, column header, one row.
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);

  MonteCarloReport full;
  const auto cells = paper_cells();
  for (int set = 1; set <= 4; ++set) {
    for (auto it = cells.rbegin(); it != cells.rend(); ++it) {
      full.cells.push_back({"bernoulli", set, 1000, it->label, it->scenario.tag, 10, 0.1, 0.2, 0.19, 1, 7, 0});
    }
  }
  const auto table = render_table(full);
  std::istringstream lines(table);
  std::string line;
  std::vector<std::string> rows;
  int blocks = 0;
  while (std::getline(lines, line)) {
    if (line.rfind("Gamma set", 0) == 0) ++blocks;
    if (!line.empty() && line.find("0.10") != std::string::npos) rows.push_back(line.substr(0, 12));
  }
  CHECK(blocks == 4);
  REQUIRE(rows.size() == 48);
  // Rows are reordered into the canonical order within each block.
  CHECK(rows[0].rfind("OLS", 0) == 0);
  CHECK(rows[11].rfind("AAIIWs.d", 0) == 0);
}
