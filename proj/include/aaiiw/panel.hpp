#pragma once

// Long-format longitudinal panel: one row per subject per time bin.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace aaiiw {

struct TimeGrid {
  double start = 0.0;
  double end = 2.0;
  double bin_width = 0.1;

  // Throws Error(invalid_input) unless start < end, bin_width > 0 and the
  // span is an integer number of bins.
  void validate() const;
  int bin_count() const;
  double bin_start(int bin) const { return start + bin * bin_width; }
};

enum class Block { confounder, mediator, pure_predictor };

const char* to_string(Block block) noexcept;

// Column labels for the three covariate blocks (K, M, P).
struct CovariateColumns {
  std::vector<std::string> confounders;
  std::vector<std::string> mediators;
  std::vector<std::string> pure_predictors;

  std::size_t total() const {
    return confounders.size() + mediators.size() + pure_predictors.size();
  }
  // Position of a named column in the concatenated K|M|P layout.
  std::optional<std::size_t> index_of(const std::string& name) const;
  std::vector<std::string> all() const;
  bool operator==(const CovariateColumns&) const = default;
};

struct BinRow {
  int bin_index = 0;
  int treatment = 0;
  std::vector<double> confounders;
  std::vector<double> mediators;
  std::vector<double> pure_predictors;
  bool at_risk = true;
  bool observed = false;
  std::optional<double> outcome;

  bool operator==(const BinRow&) const = default;
};

struct SubjectRecord {
  std::string subject_id;
  std::vector<BinRow> rows;

  bool operator==(const SubjectRecord&) const = default;
};

// Flat column view of a dataset. Row r belongs to subject `subject[r]`;
// rows of one subject are contiguous and ordered by bin.
struct PanelFrame {
  std::vector<std::size_t> subject;
  std::vector<int> bin;
  std::vector<int> treatment;
  std::vector<std::uint8_t> at_risk;
  std::vector<std::uint8_t> observed;
  std::vector<double> outcome;  // NaN where absent
  Eigen::MatrixXd covariates;   // K | M | P

  std::size_t rows() const { return bin.size(); }
};

// Immutable after construction; safe to share between threads.
class PanelDataset {
 public:
  PanelDataset() = default;
  // Checks the column layout of every row against `columns` and builds the
  // flat frame. Record-level invariants are checked by validate_panel.
  PanelDataset(TimeGrid grid, CovariateColumns columns,
               std::vector<SubjectRecord> subjects);

  const TimeGrid& grid() const { return grid_; }
  const CovariateColumns& columns() const { return columns_; }
  std::span<const SubjectRecord> subjects() const { return subjects_; }
  std::size_t subject_count() const { return subjects_.size(); }
  const PanelFrame& frame() const { return frame_; }

  // Row range [first, last) of subject i in the frame.
  std::pair<std::size_t, std::size_t> subject_rows(std::size_t i) const {
    return {offsets_[i], offsets_[i + 1]};
  }

  bool operator==(const PanelDataset& other) const {
    return grid_.start == other.grid_.start && grid_.end == other.grid_.end &&
           grid_.bin_width == other.grid_.bin_width &&
           columns_ == other.columns_ && subjects_ == other.subjects_;
  }

 private:
  TimeGrid grid_;
  CovariateColumns columns_;
  std::vector<SubjectRecord> subjects_;
  std::vector<std::size_t> offsets_{0};
  PanelFrame frame_;
};

enum class ViolationKind {
  bins_not_increasing,
  bin_outside_grid,
  censoring_non_monotone,
  outcome_without_observation,
  observation_without_outcome,
  observed_while_not_at_risk,
  non_binary_value,
  non_finite_value,
  arm_unidentifiable,
};

const char* to_string(ViolationKind kind) noexcept;

struct Violation {
  ViolationKind kind;
  std::string subject_id;  // empty for dataset-level violations
  int bin_index = -1;
  std::string message;

  bool operator==(const Violation&) const = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::size_t count(ViolationKind kind) const;
  bool operator==(const ValidationReport&) const = default;
};

ValidationReport validate_panel(const PanelDataset& ds);

// Maps CSV covariate columns to blocks, in declaration order within a block.
struct CsvSchema {
  TimeGrid grid;
  std::vector<std::pair<std::string, Block>> covariates;

  CovariateColumns columns() const;
  static CsvSchema from_columns(const TimeGrid& grid,
                                const CovariateColumns& columns);
};

// Required columns: subject_id, bin, treatment, at_risk, observed, outcome
// (empty = absent) plus every schema covariate. Errors name the file line.
PanelDataset load_panel_csv(const std::filesystem::path& path,
                            const CsvSchema& schema);
PanelDataset read_panel_csv(std::istream& in, const CsvSchema& schema);

// Writes numbers in shortest round-trip form, so load(save(ds)) == ds.
void save_panel_csv(const PanelDataset& ds, const std::filesystem::path& path);
void write_panel_csv(const PanelDataset& ds, std::ostream& out);

// Copy of `ds` holding the subjects at `indices` (repeats allowed), in order.
PanelDataset select_subjects(const PanelDataset& ds,
                             std::span<const std::size_t> indices);

std::string format_double(double value);

}  // namespace aaiiw
