#include "aaiiw/panel.hpp"

#include "aaiiw/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace aaiiw {

void TimeGrid::validate() const {
  if (!(std::isfinite(start) && std::isfinite(end) && start < end)) {
    throw Error(ErrorKind::invalid_input, "time grid requires start < end");
  }
  if (!(bin_width > 0.0)) {
    throw Error(ErrorKind::invalid_input, "time grid requires bin_width > 0");
  }
  const double bins = (end - start) / bin_width;
  if (std::abs(bins - std::round(bins)) > 1e-9 * std::max(1.0, bins)) {
    throw Error(ErrorKind::invalid_input,
                "time grid span is not an integer number of equal-width bins");
  }
}

int TimeGrid::bin_count() const {
  return static_cast<int>(std::lround((end - start) / bin_width));
}

const char* to_string(Block block) noexcept {
  switch (block) {
    case Block::confounder: return "K";
    case Block::mediator: return "M";
    case Block::pure_predictor: return "P";
  }
  return "?";
}

std::optional<std::size_t> CovariateColumns::index_of(
    const std::string& name) const {
  std::size_t offset = 0;
  for (const auto* block : {&confounders, &mediators, &pure_predictors}) {
    for (std::size_t j = 0; j < block->size(); ++j) {
      if ((*block)[j] == name) return offset + j;
    }
    offset += block->size();
  }
  return std::nullopt;
}

std::vector<std::string> CovariateColumns::all() const {
  std::vector<std::string> out;
  out.reserve(total());
  out.insert(out.end(), confounders.begin(), confounders.end());
  out.insert(out.end(), mediators.begin(), mediators.end());
  out.insert(out.end(), pure_predictors.begin(), pure_predictors.end());
  return out;
}

PanelDataset::PanelDataset(TimeGrid grid, CovariateColumns columns,
                           std::vector<SubjectRecord> subjects)
    : grid_(grid), columns_(std::move(columns)), subjects_(std::move(subjects)) {
  grid_.validate();
  std::size_t total = 0;
  for (const auto& s : subjects_) total += s.rows.size();

  const std::size_t nk = columns_.confounders.size();
  const std::size_t nm = columns_.mediators.size();
  const std::size_t np = columns_.pure_predictors.size();

  frame_.subject.reserve(total);
  frame_.bin.reserve(total);
  frame_.treatment.reserve(total);
  frame_.at_risk.reserve(total);
  frame_.observed.reserve(total);
  frame_.outcome.reserve(total);
  frame_.covariates.resize(static_cast<Eigen::Index>(total),
                           static_cast<Eigen::Index>(nk + nm + np));
  offsets_.reserve(subjects_.size() + 1);

  Eigen::Index r = 0;
  for (std::size_t i = 0; i < subjects_.size(); ++i) {
    for (const auto& row : subjects_[i].rows) {
      if (row.confounders.size() != nk || row.mediators.size() != nm ||
          row.pure_predictors.size() != np) {
        throw Error(ErrorKind::invalid_input,
                    "subject '" + subjects_[i].subject_id + "' bin " +
                        std::to_string(row.bin_index) +
                        ": covariate vector sizes do not match column layout");
      }
      frame_.subject.push_back(i);
      frame_.bin.push_back(row.bin_index);
      frame_.treatment.push_back(row.treatment);
      frame_.at_risk.push_back(row.at_risk ? 1 : 0);
      frame_.observed.push_back(row.observed ? 1 : 0);
      frame_.outcome.push_back(row.outcome.value_or(
          std::numeric_limits<double>::quiet_NaN()));
      Eigen::Index c = 0;
      for (double v : row.confounders) frame_.covariates(r, c++) = v;
      for (double v : row.mediators) frame_.covariates(r, c++) = v;
      for (double v : row.pure_predictors) frame_.covariates(r, c++) = v;
      ++r;
    }
    offsets_.push_back(static_cast<std::size_t>(r));
  }
}

const char* to_string(ViolationKind kind) noexcept {
  switch (kind) {
    case ViolationKind::bins_not_increasing: return "bins not increasing";
    case ViolationKind::bin_outside_grid: return "bin outside grid";
    case ViolationKind::censoring_non_monotone: return "censoring non-monotone";
    case ViolationKind::outcome_without_observation:
      return "outcome without observation";
    case ViolationKind::observation_without_outcome:
      return "observation without outcome";
    case ViolationKind::observed_while_not_at_risk:
      return "observed while not at risk";
    case ViolationKind::non_binary_value: return "non-binary value";
    case ViolationKind::non_finite_value: return "non-finite value";
    case ViolationKind::arm_unidentifiable: return "arm unidentifiable";
  }
  return "?";
}

std::size_t ValidationReport::count(ViolationKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(violations.begin(), violations.end(),
                    [kind](const Violation& v) { return v.kind == kind; }));
}

ValidationReport validate_panel(const PanelDataset& ds) {
  ValidationReport report;
  const int bins = ds.grid().bin_count();
  auto add = [&](ViolationKind kind, const std::string& id, int bin,
                 std::string msg) {
    report.violations.push_back({kind, id, bin, std::move(msg)});
  };

  bool observed_arm[2] = {false, false};
  for (const auto& subject : ds.subjects()) {
    const auto& id = subject.subject_id;
    int previous_bin = std::numeric_limits<int>::min();
    bool censored = false;
    for (const auto& row : subject.rows) {
      if (row.bin_index <= previous_bin) {
        add(ViolationKind::bins_not_increasing, id, row.bin_index,
            "bin indices must be strictly increasing without duplicates");
      }
      previous_bin = row.bin_index;
      if (row.bin_index < 0 || row.bin_index >= bins) {
        add(ViolationKind::bin_outside_grid, id, row.bin_index,
            "bin index outside [0, " + std::to_string(bins) + ")");
      }
      if (row.treatment != 0 && row.treatment != 1) {
        add(ViolationKind::non_binary_value, id, row.bin_index,
            "treatment must be 0 or 1");
      }
      if (censored && row.at_risk) {
        add(ViolationKind::censoring_non_monotone, id, row.bin_index,
            "subject returns to risk after censoring");
      }
      if (!row.at_risk) censored = true;
      if (row.outcome && !row.observed) {
        add(ViolationKind::outcome_without_observation, id, row.bin_index,
            "outcome present but observed = 0");
      }
      if (row.observed && !row.outcome) {
        add(ViolationKind::observation_without_outcome, id, row.bin_index,
            "observed = 1 but outcome missing");
      }
      if (row.observed && !row.at_risk) {
        add(ViolationKind::observed_while_not_at_risk, id, row.bin_index,
            "observed = 1 while at_risk = 0");
      }
      bool finite = !row.outcome || std::isfinite(*row.outcome);
      for (const auto* block :
           {&row.confounders, &row.mediators, &row.pure_predictors}) {
        for (double v : *block) finite = finite && std::isfinite(v);
      }
      if (!finite) {
        add(ViolationKind::non_finite_value, id, row.bin_index,
            "non-finite covariate or outcome");
      }
      if (row.observed && row.outcome && (row.treatment == 0 || row.treatment == 1)) {
        observed_arm[row.treatment] = true;
      }
    }
  }
  for (int arm = 0; arm < 2; ++arm) {
    if (!observed_arm[arm]) {
      add(ViolationKind::arm_unidentifiable, "", -1,
          "no observed outcome with treatment = " + std::to_string(arm));
    }
  }
  return report;
}

CovariateColumns CsvSchema::columns() const {
  CovariateColumns cols;
  for (const auto& [name, block] : covariates) {
    switch (block) {
      case Block::confounder: cols.confounders.push_back(name); break;
      case Block::mediator: cols.mediators.push_back(name); break;
      case Block::pure_predictor: cols.pure_predictors.push_back(name); break;
    }
  }
  return cols;
}

CsvSchema CsvSchema::from_columns(const TimeGrid& grid,
                                  const CovariateColumns& columns) {
  CsvSchema schema;
  schema.grid = grid;
  for (const auto& c : columns.confounders)
    schema.covariates.emplace_back(c, Block::confounder);
  for (const auto& c : columns.mediators)
    schema.covariates.emplace_back(c, Block::mediator);
  for (const auto& c : columns.pure_predictors)
    schema.covariates.emplace_back(c, Block::pure_predictor);
  return schema;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(std::move(current));
      current.clear();
    } else if (ch != '\r') {
      current.push_back(ch);
    }
  }
  fields.push_back(std::move(current));
  return fields;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail_at(std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::invalid_input,
              "line " + std::to_string(line) + ": " + msg);
}

double parse_real(const std::string& text, std::size_t line,
                  const std::string& column) {
  const std::string t = trim(text);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    fail_at(line, "column '" + column + "' is not a number: '" + text + "'");
  }
  return value;
}

int parse_binary(const std::string& text, std::size_t line,
                 const std::string& column) {
  const std::string t = trim(text);
  if (t == "0") return 0;
  if (t == "1") return 1;
  fail_at(line, "column '" + column + "' must be 0 or 1, got '" + text + "'");
}

int parse_int(const std::string& text, std::size_t line,
              const std::string& column) {
  const std::string t = trim(text);
  int value = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    fail_at(line, "column '" + column + "' is not an integer: '" + text + "'");
  }
  return value;
}

}  // namespace

PanelDataset read_panel_csv(std::istream& in, const CsvSchema& schema) {
  schema.grid.validate();
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorKind::invalid_input, "empty file: header row required");
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    line.erase(0, 3);
  }
  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t j = 0; j < header.size(); ++j) position[trim(header[j])] = j;

  auto require = [&](const std::string& name) {
    auto it = position.find(name);
    if (it == position.end()) {
      throw Error(ErrorKind::invalid_input,
                  "line 1: missing column '" + name + "'");
    }
    return it->second;
  };
  const std::size_t c_id = require("subject_id");
  const std::size_t c_bin = require("bin");
  const std::size_t c_trt = require("treatment");
  const std::size_t c_risk = require("at_risk");
  const std::size_t c_obs = require("observed");
  const std::size_t c_y = require("outcome");
  std::vector<std::pair<std::size_t, Block>> cov;
  for (const auto& [name, block] : schema.covariates) {
    cov.emplace_back(require(name), block);
  }

  std::vector<SubjectRecord> subjects;
  std::unordered_map<std::string, std::size_t> subject_index;
  std::map<std::pair<std::size_t, int>, std::size_t> seen;  // -> line

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      fail_at(line_no, "expected " + std::to_string(header.size()) +
                           " fields, found " + std::to_string(fields.size()));
    }
    BinRow row;
    const std::string id = trim(fields[c_id]);
    if (id.empty()) fail_at(line_no, "empty subject_id");
    row.bin_index = parse_int(fields[c_bin], line_no, "bin");
    row.treatment = parse_binary(fields[c_trt], line_no, "treatment");
    row.at_risk = parse_binary(fields[c_risk], line_no, "at_risk") == 1;
    row.observed = parse_binary(fields[c_obs], line_no, "observed") == 1;
    const std::string y = trim(fields[c_y]);
    if (!y.empty()) {
      if (!row.observed) {
        fail_at(line_no, "outcome present with observed = 0");
      }
      row.outcome = parse_real(y, line_no, "outcome");
    } else if (row.observed) {
      fail_at(line_no, "observed = 1 but outcome is empty");
    }
    if (row.observed && !row.at_risk) {
      fail_at(line_no, "observed = 1 while at_risk = 0");
    }
    for (std::size_t k = 0; k < cov.size(); ++k) {
      const auto& name = schema.covariates[k].first;
      const std::string& text = fields[cov[k].first];
      if (trim(text).empty()) fail_at(line_no, "missing covariate '" + name + "'");
      const double v = parse_real(text, line_no, name);
      if (!std::isfinite(v)) fail_at(line_no, "non-finite covariate '" + name + "'");
      switch (cov[k].second) {
        case Block::confounder: row.confounders.push_back(v); break;
        case Block::mediator: row.mediators.push_back(v); break;
        case Block::pure_predictor: row.pure_predictors.push_back(v); break;
      }
    }
    if (row.bin_index < 0 || row.bin_index >= schema.grid.bin_count()) {
      fail_at(line_no, "bin " + std::to_string(row.bin_index) +
                           " outside the time grid");
    }

    auto [it, inserted] = subject_index.try_emplace(id, subjects.size());
    if (inserted) subjects.push_back({id, {}});
    const auto key = std::make_pair(it->second, row.bin_index);
    if (auto dup = seen.find(key); dup != seen.end()) {
      fail_at(line_no, "duplicate (subject, bin) pair ('" + id + "', " +
                           std::to_string(row.bin_index) +
                           "), first seen on line " + std::to_string(dup->second));
    }
    seen.emplace(key, line_no);
    subjects[it->second].rows.push_back(std::move(row));
  }

  for (auto& s : subjects) {
    std::sort(s.rows.begin(), s.rows.end(),
              [](const BinRow& a, const BinRow& b) {
                return a.bin_index < b.bin_index;
              });
  }

  PanelDataset ds(schema.grid, schema.columns(), std::move(subjects));
  const auto report = validate_panel(ds);
  if (!report.ok()) {
    std::string msg = "dataset fails validation:";
    for (const auto& v : report.violations) {
      msg += " [" + std::string(to_string(v.kind));
      if (!v.subject_id.empty()) {
        msg += " subject '" + v.subject_id + "' bin " + std::to_string(v.bin_index);
      }
      msg += "]";
    }
    throw Error(ErrorKind::invalid_input, msg);
  }
  return ds;
}

PanelDataset load_panel_csv(const std::filesystem::path& path,
                            const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::invalid_input, "cannot open " + path.string());
  }
  return read_panel_csv(in, schema);
}

void write_panel_csv(const PanelDataset& ds, std::ostream& out) {
  const auto& cols = ds.columns();
  out << "subject_id,bin,treatment,at_risk,observed,outcome";
  for (const auto& name : cols.all()) out << ',' << name;
  out << '\n';
  for (const auto& s : ds.subjects()) {
    for (const auto& row : s.rows) {
      out << s.subject_id << ',' << row.bin_index << ',' << row.treatment << ','
          << (row.at_risk ? 1 : 0) << ',' << (row.observed ? 1 : 0) << ',';
      if (row.outcome) out << format_double(*row.outcome);
      for (double v : row.confounders) out << ',' << format_double(v);
      for (double v : row.mediators) out << ',' << format_double(v);
      for (double v : row.pure_predictors) out << ',' << format_double(v);
      out << '\n';
    }
  }
}

void save_panel_csv(const PanelDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::invalid_input, "cannot write " + path.string());
  write_panel_csv(ds, out);
}

PanelDataset select_subjects(const PanelDataset& ds,
                             std::span<const std::size_t> indices) {
  std::vector<SubjectRecord> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(ds.subjects()[i]);
  return PanelDataset(ds.grid(), ds.columns(), std::move(picked));
}

}  // namespace aaiiw
