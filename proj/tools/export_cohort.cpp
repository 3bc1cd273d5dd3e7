// Writes one simulated cohort as a long-format panel CSV, for use as
// estimate-mode input.

#include "aaiiw/errors.hpp"
#include "aaiiw/panel.hpp"
#include "aaiiw/simgen.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace aaiiw;

int main(int argc, char** argv) {
  CLI::App app{"Export a simulated cohort as a panel CSV"};
  std::string mechanism = "poisson";
  int set = 1;
  std::size_t n = 500;
  std::uint64_t seed = 1;
  double constant = 1.0;
  std::string out_path;
  app.add_option("--mechanism", mechanism, "poisson or bernoulli");
  app.add_option("--gamma-set", set, "Observation coefficient set, 1 to 4");
  app.add_option("--n", n, "Subjects");
  app.add_option("--seed", seed, "Simulation seed");
  app.add_option("--proportionality-constant", constant, "Poisson thinning constant");
  app.add_option("--out", out_path, "Output CSV path")->required();
  CLI11_PARSE(app, argc, argv);

  try {
    DgpConfig cfg = default_config(mechanism_from_string(mechanism), set, n);
    cfg.proportionality_constant = constant;
    save_panel_csv(simulate_cohort(cfg, seed), out_path);
  } catch (const Error& e) {
    std::cerr << e.what() << '\n';
    return 1;
  }
  return 0;
}
