// Batch driver: single-dataset estimation or a full Monte Carlo experiment,
// configured by one JSON file.

#include "aaiiw/config.hpp"
#include "aaiiw/errors.hpp"
#include "aaiiw/inference.hpp"
#include "aaiiw/montecarlo.hpp"
#include "aaiiw/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace aaiiw;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitEstimation = 2;

struct ConfigFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigFailure("cannot write output file '" + path.string() + "'");
  out << content;
}

json weight_summary(const WeightSet& w, const PanelDataset& ds) {
  const auto& f = ds.frame();
  auto range = [&](const std::vector<double>& v, bool events_only) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < f.rows(); ++r) {
      if (!f.at_risk[r] || (events_only && !f.observed[r])) continue;
      lo = std::min(lo, v[r]);
      hi = std::max(hi, v[r]);
    }
    return json{{"min", lo}, {"max", hi}};
  };
  return {{"ipt", range(w.ipt, false)},
          {"iiv_at_events", range(w.iiv, true)},
          {"clipped_count", w.clipped_count},
          {"clip", {w.clip.lower_quantile, w.clip.upper_quantile}},
          {"stabilized", w.stabilized},
          {"provenance", w.provenance}};
}

void append_balance(std::ostringstream& out, const BalanceTable& table, const std::string& weights,
                    bool header) {
  std::ostringstream body;
  table.write_csv(body);
  std::istringstream lines(body.str());
  std::string line;
  std::getline(lines, line);
  if (header) out << "stratify_by,weights," << line << '\n';
  while (std::getline(lines, line)) {
    out << to_string(table.stratify_by) << ',' << weights << ',' << line << '\n';
  }
}

int run_estimate(const ExperimentConfig& cfg, const fs::path& out_dir, unsigned jobs) {
  const auto& e = *cfg.estimate;
  if (!fs::exists(e.input)) throw ConfigFailure("estimate.input: file '" + e.input + "' does not exist");
  PanelDataset ds = [&] {
    try {
      return load_panel_csv(e.input, e.schema);
    } catch (const Error& err) {
      throw ConfigFailure("estimate.input: " + std::string(err.what()));
    }
  }();

  NuisanceCache cache(ds, e.designs, e.misspecified_designs, e.options);
  json estimates = json::array();
  bool any_failed = false;
  for (const auto& label : e.estimators) {
    const auto recipe = recipe_from_label(label);
    json entry = {{"estimator", label}, {"scenario", recipe.scenario.tag}};
    try {
      const auto res = run_estimator(recipe, cache);
      entry["beta0"] = res.params.beta0;
      entry["beta1"] = res.params.beta1;
      entry["ee_residual"] = res.ee_residual;
      entry["provenance"] = res.provenance;
      if (const WeightSet* w = recipe_weights(recipe, cache)) entry["weights"] = weight_summary(*w, ds);
      if (e.bootstrap.replicates > 0) {
        const EffectPipeline pipeline = [&](const PanelDataset& sample) {
          return run_estimator(sample, recipe, e.designs, e.misspecified_designs, e.options)
              .params.beta1;
        };
        const auto ci = bootstrap_ci(ds, pipeline, e.bootstrap.replicates, cfg.base_seed,
                                     e.bootstrap.level, jobs);
        entry["ci"] = {{"lower", ci.lower}, {"upper", ci.upper}, {"level", ci.level},
                       {"replicates", ci.replicates}, {"skipped", ci.skipped}, {"seed", ci.seed}};
      } else {
        entry["ci"] = nullptr;
      }
    } catch (const Error& err) {
      any_failed = true;
      entry["error"] = err.what();
      std::cerr << "estimator " << label << " failed: " << err.what() << '\n';
    }
    estimates.push_back(std::move(entry));
  }

  json doc = {{"subjects", ds.subject_count()},
              {"rows", ds.frame().rows()},
              {"estimates", estimates},
              {"config", to_json(cfg)}};
  write_file(out_dir / "estimates.json", doc.dump(2) + "\n");

  std::ostringstream balance;
  bool header = true;
  try {
    const auto& w = cache.weights(true, true, e.options.stabilized_dw);
    append_balance(balance, balance_table(ds, w.ipt, Stratify::treatment), "ipt", header);
    header = false;
    append_balance(balance, balance_table(ds, w.iiv, Stratify::observed), "iiv", header);
  } catch (const Error& err) {
    any_failed = true;
    std::cerr << "balance table failed: " << err.what() << '\n';
  }
  write_file(out_dir / "balance.csv", balance.str());
  return any_failed ? kExitEstimation : kExitOk;
}

int run_simulate(const ExperimentConfig& cfg, const fs::path& out_dir, unsigned jobs) {
  const auto& s = *cfg.simulate;
  MonteCarloReport report;
  for (const auto& run : s.runs(cfg.base_seed)) report.append(run_monte_carlo(run, jobs));

  std::ostringstream csv;
  report.write_csv(csv);
  write_file(out_dir / "montecarlo.csv", csv.str());
  std::ostringstream reps;
  report.write_replicates_csv(reps);
  write_file(out_dir / "replicates.csv", reps.str());
  write_file(out_dir / "summary.txt", render_table(report));
  write_file(out_dir / "resolved_config.json", to_json(cfg).dump(2) + "\n");

  const double worst = report.max_failure_fraction();
  if (worst > s.max_failure_fraction) {
    std::cerr << "estimator failure fraction " << worst << " exceeds the allowed "
              << s.max_failure_fraction << '\n';
    for (const auto& c : report.cells) {
      if (c.failure_fraction() > s.max_failure_fraction) {
        std::cerr << "  " << c.estimator << " (gamma set " << c.gamma_set << ", n " << c.n
                  << "): " << c.failures << " failures\n";
      }
    }
    return kExitEstimation;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Augmented doubly weighted causal effect estimation and simulation"};
  std::string config_path;
  std::string out_override;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "Experiment JSON config")->required();
  app.add_option("--out", out_override, "Output directory (overrides output_dir)");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Base seed (overrides base_seed)");
  CLI11_PARSE(app, argc, argv);

  try {
    ExperimentConfig cfg = load_config(config_path);
    if (seed) cfg.base_seed = *seed;
    if (!out_override.empty()) cfg.output_dir = out_override;
    const fs::path out_dir = cfg.output_dir;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigFailure("output_dir: cannot create '" + out_dir.string() + "': " + ec.message());
    return cfg.mode == RunMode::estimate ? run_estimate(cfg, out_dir, jobs)
                                         : run_simulate(cfg, out_dir, jobs);
  } catch (const ConfigFailure& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const Error& e) {
    const bool config = e.kind() == ErrorKind::config || e.kind() == ErrorKind::invalid_input;
    std::cerr << (config ? "config error: " : "estimation error: ") << e.what() << '\n';
    return config ? kExitConfig : kExitEstimation;
  }
}
