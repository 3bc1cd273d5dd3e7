#include "support.hpp"

#include "aaiiw/errors.hpp"
#include "aaiiw/simgen.hpp"

#include <doctest.h>

#include <sstream>

using namespace aaiiw;
using namespace testsupport;

namespace {

CsvSchema small_schema(int bins) {
  return CsvSchema::from_columns(unit_grid(bins), small_columns());
}

const char* kHeader = "subject_id,bin,treatment,at_risk,observed,outcome,K1,M,P\n";

std::string error_of(const std::string& csv, int bins = 2) {
  std::istringstream in(csv);
  try {
    read_panel_csv(in, small_schema(bins));
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

PanelDataset two_by_two() {
  std::vector<SubjectRecord> subjects{
      {"s1", {row(0, 0, 0.1, 1.0, 0.2, true, 1.5), row(1, 1, 0.1, 2.0, 0.3, false)}},
      {"s2", {row(0, 1, -0.4, 0.5, 0.1, true, 2.5), row(1, 0, -0.4, 1.5, 0.6, false)}}};
  return PanelDataset(unit_grid(2), small_columns(), subjects);
}

}  // namespace

TEST_CASE("time grid validation") {
  CHECK_NOTHROW(TimeGrid{}.validate());
  CHECK(TimeGrid{}.bin_count() == 20);
  CHECK_THROWS_AS((TimeGrid{1.0, 1.0, 0.1}.validate()), Error);
  CHECK_THROWS_AS((TimeGrid{0.0, 1.0, 0.0}.validate()), Error);
  CHECK_THROWS_AS((TimeGrid{0.0, 1.0, 0.3}.validate()), Error);
}

TEST_CASE("minimal well-formed csv gives four rows") {
  std::istringstream in(std::string(kHeader) +
                        "a,0,0,1,1,1.5,0.1,1,0.2\n"
                        "a,1,1,1,0,,0.1,2,0.3\n"
                        "b,1,0,1,0,,0.2,2,0.3\n"
                        "b,0,1,1,1,2.5,0.2,1,0.2\n");
  const auto ds = read_panel_csv(in, small_schema(2));
  CHECK(ds.subject_count() == 2);
  CHECK(ds.frame().rows() == 4);
  // Rows are normalized to bin order within a subject.
  CHECK(ds.subjects()[1].rows[0].bin_index == 0);
  CHECK(ds.subjects()[1].rows[0].outcome == 2.5);
}

TEST_CASE("csv errors name the offending line") {
  const std::string ok_row = "a,0,0,1,1,1.5,0.1,1,0.2\n";
  CHECK(error_of(std::string(kHeader) + ok_row + "b,0,1,1,0,3.0,0.1,1,0.2\n")
            .find("line 3: outcome present with observed = 0") != std::string::npos);
  CHECK(error_of(std::string(kHeader) + ok_row + "b,0,2,1,1,3.0,0.1,1,0.2\n")
            .find("line 3") != std::string::npos);
  CHECK(error_of(std::string(kHeader) + ok_row + "a,0,1,1,1,3.0,0.1,1,0.2\n")
            .find("duplicate") != std::string::npos);
  CHECK(error_of("subject_id,bin,treatment,at_risk,observed,outcome,K1,M\n" + ok_row)
            .find("missing column 'P'") != std::string::npos);
}

TEST_CASE("validate_panel reports each invariant violation") {
  CHECK(validate_panel(two_by_two()).ok());

  SUBCASE("censoring must be monotone") {
    std::vector<SubjectRecord> s{
        {"s1", {row(0, 0, 0, 0, 0, true, 1.0), row(1, 1, 0, 0, 0, true, 2.0)}},
        {"s2", {row(0, 0, 0, 0, 0, false, 0, false), row(1, 1, 0, 0, 0, false, 0, true)}}};
    const auto report = validate_panel(PanelDataset(unit_grid(2), small_columns(), s));
    CHECK(report.violations.size() == 1);
    CHECK(report.count(ViolationKind::censoring_non_monotone) == 1);
  }
  SUBCASE("an arm without observed outcomes is unidentifiable") {
    std::vector<SubjectRecord> s{
        {"s1", {row(0, 0, 0, 0, 0, true, 1.0), row(1, 1, 0, 0, 0, false)}}};
    const auto report = validate_panel(PanelDataset(unit_grid(2), small_columns(), s));
    CHECK(report.count(ViolationKind::arm_unidentifiable) == 1);
  }
  SUBCASE("outcome without observation") {
    const auto base = two_by_two();
    std::vector<SubjectRecord> s(base.subjects().begin(), base.subjects().end());
    s[0].rows[1].outcome = 4.0;
    const auto report = validate_panel(PanelDataset(unit_grid(2), small_columns(), s));
    CHECK(report.count(ViolationKind::outcome_without_observation) == 1);
  }
  SUBCASE("validation is pure") {
    std::vector<SubjectRecord> s{
        {"s1", {row(1, 0, 0, 0, 0, true, 1.0), row(0, 1, 0, 0, 0, true, 2.0)}}};
    const PanelDataset ds(unit_grid(2), small_columns(), s);
    CHECK(validate_panel(ds) == validate_panel(ds));
    CHECK(validate_panel(ds).count(ViolationKind::bins_not_increasing) == 1);
  }
}

TEST_CASE("covariate layout mismatches are rejected at construction") {
  std::vector<SubjectRecord> s{{"s1", {row(0, 0, 0, 0, 0, true, 1.0)}}};
  s[0].rows[0].mediators.push_back(1.0);
  CHECK_THROWS_AS(PanelDataset(unit_grid(1), small_columns(), s), Error);
}

TEST_CASE("simulated cohort round-trips through csv") {
  const auto cfg = default_config(Mechanism::bernoulli, 2, 40);
  const auto ds = simulate_cohort(cfg, 17);
  std::ostringstream out;
  write_panel_csv(ds, out);
  std::istringstream in(out.str());
  const auto back = read_panel_csv(in, CsvSchema::from_columns(cfg.grid, simulated_columns()));
  CHECK(back == ds);
  std::ostringstream again;
  write_panel_csv(back, again);
  CHECK(again.str() == out.str());
}

TEST_CASE("select_subjects repeats and orders subjects as asked") {
  const auto ds = two_by_two();
  const std::vector<std::size_t> idx{1, 1, 0};
  const auto sub = select_subjects(ds, idx);
  REQUIRE(sub.subject_count() == 3);
  CHECK(sub.subjects()[0].rows == ds.subjects()[1].rows);
  CHECK(sub.subjects()[1].rows == ds.subjects()[1].rows);
  CHECK(sub.subjects()[2].rows == ds.subjects()[0].rows);
  CHECK(sub.frame().rows() == 6);
}
