// Calibrates the Poisson proportionality constant of each gamma set so the
// simulated average event counts per subject (untreated bins, treated bins)
// come as close as possible to the published targets, and writes the
// constants with their achieved counts as JSON.

#include "aaiiw/errors.hpp"
#include "aaiiw/simgen.hpp"

#include <CLI11.hpp>
#include <boost/math/tools/minima.hpp>
#include <json.hpp>

#include <array>
#include <cmath>
#include <fstream>
#include <iostream>

using namespace aaiiw;

namespace {

// Published average N(tau) per subject, (A = 0, A = 1), by gamma set.
constexpr std::array<std::array<double, 2>, 4> kTargets{{{12, 12}, {22, 17}, {3, 8}, {2, 5}}};

// Counts are matched within this relative error to call a set feasible.
constexpr double kFeasibleRelativeError = 0.10;

std::array<double, 2> mean_counts(int set, double constant, std::size_t n, int cohorts,
                                  std::uint64_t seed) {
  DgpConfig cfg = default_config(Mechanism::poisson, set, n);
  cfg.proportionality_constant = constant;
  std::array<double, 2> counts{0.0, 0.0};
  for (int c = 0; c < cohorts; ++c) {
    const auto ds = simulate_cohort(cfg, derive_seed(seed, static_cast<std::uint64_t>(c)));
    const auto& f = ds.frame();
    for (std::size_t r = 0; r < f.rows(); ++r) {
      if (f.at_risk[r] && f.observed[r]) counts[static_cast<std::size_t>(f.treatment[r])] += 1.0;
    }
  }
  const double subjects = static_cast<double>(n) * cohorts;
  return {counts[0] / subjects, counts[1] / subjects};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Calibrate the Poisson observation proportionality constant"};
  std::string out_path = "data/poisson_calibration.json";
  std::size_t n = 2000;
  int cohorts = 3;
  std::uint64_t seed = 20240601;
  double max_constant = 1000.0;
  app.add_option("--out", out_path, "Output JSON path");
  app.add_option("--n", n, "Subjects per calibration cohort");
  app.add_option("--cohorts", cohorts, "Cohorts averaged per evaluation");
  app.add_option("--seed", seed, "Base seed");
  app.add_option("--max-constant", max_constant, "Upper end of the search range");
  CLI11_PARSE(app, argc, argv);

  try {
    nlohmann::json sets = nlohmann::json::array();
    for (int set = 1; set <= 4; ++set) {
      const auto& target = kTargets[static_cast<std::size_t>(set - 1)];
      // Squared log distance between achieved and target counts; log scale
      // weighs both arms evenly whatever their magnitude.
      auto loss = [&](double log_c) {
        const auto got = mean_counts(set, std::exp(log_c), n, cohorts, seed);
        double total = 0.0;
        for (int a = 0; a < 2; ++a) {
          const double d = std::log(std::max(got[a], 1e-9)) - std::log(target[a]);
          total += d * d;
        }
        return total;
      };
      const auto [log_c, best] =
          boost::math::tools::brent_find_minima(loss, 0.0, std::log(max_constant), 30);
      const double constant = std::exp(log_c);
      const auto achieved = mean_counts(set, constant, n, cohorts, seed);
      bool feasible = true;
      for (int a = 0; a < 2; ++a) {
        feasible = feasible && std::fabs(achieved[a] - target[a]) <= kFeasibleRelativeError * target[a];
      }
      const auto at_one = mean_counts(set, 1.0, n, cohorts, seed);
      sets.push_back({{"gamma_set", set},
                      {"proportionality_constant", constant},
                      {"target_counts", target},
                      {"achieved_counts", achieved},
                      {"counts_at_unit_constant", at_one},
                      {"loss", best},
                      {"feasible", feasible}});
      std::cout << "set " << set << ": c = " << constant << ", achieved (" << achieved[0] << ", "
                << achieved[1] << ") vs target (" << target[0] << ", " << target[1] << ")"
                << (feasible ? "" : "  [infeasible]") << '\n';
    }
    const nlohmann::json doc = {
        {"description",
         "Poisson observation proportionality constant per gamma set, chosen to minimise the "
         "squared log distance between simulated and published average event counts per "
         "subject (untreated bins, treated bins). A set is feasible when both counts are "
         "within 10% of the target."},
        {"generator", "calibrate_poisson"},
        {"n", n},
        {"cohorts", cohorts},
        {"seed", seed},
        {"sets", sets}};
    std::ofstream out(out_path);
    if (!out) throw Error(ErrorKind::invalid_input, "cannot write '" + out_path + "'");
    out << doc.dump(2) << '\n';
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
