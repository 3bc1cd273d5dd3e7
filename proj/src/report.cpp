#include "aaiiw/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

namespace aaiiw {

std::string format_table_value(double value) {
  if (std::isnan(value)) return "NA";
  if (std::fabs(value) < 0.01) return "<0.01";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

namespace {

int paper_rank(const std::string& label) {
  static const std::vector<std::string> order = {
      "OLS",    "IPTc",   "IPTnc",    "DWc",      "DWiptc",   "DWiivc",
      "DWnc",   "AAIIWc", "AAIIWs.a", "AAIIWs.b", "AAIIWs.c", "AAIIWs.d"};
  const auto it = std::find(order.begin(), order.end(), label);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string lpad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

}  // namespace

std::string render_table(const MonteCarloReport& report) {
  using Key = std::tuple<std::string, int, std::size_t>;
  std::vector<Key> groups;
  std::map<Key, std::vector<const MonteCarloCell*>> members;
  for (const auto& c : report.cells) {
    Key key{c.mechanism, c.gamma_set, c.n};
    if (!members.count(key)) groups.push_back(key);
    members[key].push_back(&c);
  }

  std::ostringstream out;
  out << "Empirical bias and mean squared error of the treatment effect\n";
  for (const auto& key : groups) {
    auto rows = members[key];
    std::stable_sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
      return paper_rank(a->estimator) < paper_rank(b->estimator);
    });
    const auto* first = rows.front();
    char events[64];
    std::snprintf(events, sizeof events, "(%.1f, %.1f)", first->mean_events_a0,
                  first->mean_events_a1);
    out << "\nGamma set " << std::get<1>(key) << "  mechanism " << std::get<0>(key) << "  n "
        << std::get<2>(key) << "  mean N(tau) per subject (A=0, A=1) " << events << "\n";
    out << pad("Estimator", 12) << lpad("Bias", 8) << lpad("MSE", 8) << lpad("Variance", 10)
        << lpad("R", 6) << lpad("Failures", 10) << "\n";
    for (const auto* c : rows) {
      out << pad(c->estimator, 12) << lpad(format_table_value(c->bias), 8)
          << lpad(format_table_value(c->mse), 8) << lpad(format_table_value(c->variance), 10)
          << lpad(std::to_string(c->replicates), 6) << lpad(std::to_string(c->failures), 10)
          << "\n";
    }
  }
  return out.str();
}

}  // namespace aaiiw
