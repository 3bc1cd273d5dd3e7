#include "aaiiw/design.hpp"

#include "aaiiw/errors.hpp"

#include <cmath>
#include <numeric>

namespace aaiiw {

const char* to_string(Transform t) noexcept {
  switch (t) {
    case Transform::identity: return "identity";
    case Transform::sine: return "sine";
    case Transform::square: return "square";
    case Transform::log1p: return "log1p";
  }
  return "?";
}

Transform transform_from_string(std::string_view name) {
  if (name == "identity" || name.empty()) return Transform::identity;
  if (name == "sine" || name == "sin") return Transform::sine;
  if (name == "square" || name == "sq") return Transform::square;
  if (name == "log1p") return Transform::log1p;
  throw Error(ErrorKind::invalid_input,
              "unknown transform '" + std::string(name) + "'");
}

double apply(Transform t, double x) {
  switch (t) {
    case Transform::identity: return x;
    case Transform::sine: return std::sin(x);
    case Transform::square: return x * x;
    case Transform::log1p: return std::log1p(x);
  }
  return x;
}

std::string DesignTerm::label() const {
  if (transform == Transform::identity) return column;
  return std::string(to_string(transform)) + "(" + column + ")";
}

std::vector<std::string> DesignSpec::labels() const {
  std::vector<std::string> out;
  if (intercept) out.emplace_back("(intercept)");
  for (const auto& t : terms) out.push_back(t.label());
  return out;
}

bool DesignSpec::uses_treatment() const {
  for (const auto& t : terms) {
    if (t.column == kTreatmentColumn) return true;
  }
  return false;
}

DesignSpec DesignSpec::without_treatment() const {
  DesignSpec out;
  out.intercept = intercept;
  for (const auto& t : terms) {
    if (t.column != kTreatmentColumn) out.terms.push_back(t);
  }
  return out;
}

DesignSpec DesignSpec::parse(std::span<const std::string> terms, bool intercept) {
  DesignSpec spec;
  spec.intercept = intercept;
  for (const auto& text : terms) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) {
      spec.terms.push_back({text, Transform::identity});
    } else {
      spec.terms.push_back({text.substr(colon + 1),
                            transform_from_string(text.substr(0, colon))});
    }
  }
  return spec;
}

namespace {

// -1 encodes the treatment column.
std::vector<long> resolve_columns(const PanelDataset& ds, const DesignSpec& spec) {
  std::vector<long> idx;
  idx.reserve(spec.terms.size());
  for (const auto& t : spec.terms) {
    if (t.column == kTreatmentColumn) {
      idx.push_back(-1);
      continue;
    }
    const auto pos = ds.columns().index_of(t.column);
    if (!pos) {
      throw Error(ErrorKind::invalid_input,
                  "design term references unknown column '" + t.column + "'");
    }
    idx.push_back(static_cast<long>(*pos));
  }
  return idx;
}

}  // namespace

void check_design(const PanelDataset& ds, const DesignSpec& spec) {
  (void)resolve_columns(ds, spec);
}

Eigen::MatrixXd build_design(const PanelDataset& ds, const DesignSpec& spec,
                             std::span<const std::size_t> rows,
                             std::optional<int> treatment_override) {
  const auto cols = resolve_columns(ds, spec);
  const auto& f = ds.frame();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(spec.width()));
  const Eigen::Index offset = spec.intercept ? 1 : 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    const std::size_t row = rows[r];
    if (spec.intercept) X(i, 0) = 1.0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const double raw =
          cols[j] < 0
              ? static_cast<double>(treatment_override.value_or(f.treatment[row]))
              : f.covariates(static_cast<Eigen::Index>(row), cols[j]);
      X(i, offset + static_cast<Eigen::Index>(j)) = apply(spec.terms[j].transform, raw);
    }
  }
  return X;
}

Eigen::MatrixXd build_design(const PanelDataset& ds, const DesignSpec& spec,
                             std::optional<int> treatment_override) {
  std::vector<std::size_t> rows(ds.frame().rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return build_design(ds, spec, rows, treatment_override);
}

std::vector<std::size_t> at_risk_rows(const PanelDataset& ds) {
  std::vector<std::size_t> rows;
  const auto& f = ds.frame();
  rows.reserve(f.rows());
  for (std::size_t r = 0; r < f.rows(); ++r) {
    if (f.at_risk[r]) rows.push_back(r);
  }
  return rows;
}

}  // namespace aaiiw
