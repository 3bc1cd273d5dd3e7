#pragma once

// Declarative design formulas: an optional intercept plus a list of
// (column, transform) terms. Misspecification is expressed purely by
// editing these descriptors.

#include "aaiiw/panel.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace aaiiw {

enum class Transform { identity, sine, square, log1p };

const char* to_string(Transform t) noexcept;
Transform transform_from_string(std::string_view name);
double apply(Transform t, double x);

// The treatment column is addressed by the reserved name "A".
inline constexpr std::string_view kTreatmentColumn = "A";

struct DesignTerm {
  std::string column;
  Transform transform = Transform::identity;

  std::string label() const;
  bool operator==(const DesignTerm&) const = default;
};

struct DesignSpec {
  bool intercept = true;
  std::vector<DesignTerm> terms;

  std::size_t width() const { return terms.size() + (intercept ? 1 : 0); }
  std::vector<std::string> labels() const;
  bool uses_treatment() const;
  // Same design with every term on the treatment column removed.
  DesignSpec without_treatment() const;
  bool operator==(const DesignSpec&) const = default;

  // Shorthand: design({"K1", "sine:K2"}) with "<transform>:<column>" terms.
  static DesignSpec parse(std::span<const std::string> terms,
                          bool intercept = true);
};

// Design matrix over the listed frame rows. When `treatment_override` is set
// every "A" term is evaluated at that arm instead of the recorded treatment.
Eigen::MatrixXd build_design(const PanelDataset& ds, const DesignSpec& spec,
                             std::span<const std::size_t> rows,
                             std::optional<int> treatment_override = {});

// Design matrix over every frame row.
Eigen::MatrixXd build_design(const PanelDataset& ds, const DesignSpec& spec,
                             std::optional<int> treatment_override = {});

// Throws Error(invalid_input) when a term names an unknown column.
void check_design(const PanelDataset& ds, const DesignSpec& spec);

std::vector<std::size_t> at_risk_rows(const PanelDataset& ds);

}  // namespace aaiiw
