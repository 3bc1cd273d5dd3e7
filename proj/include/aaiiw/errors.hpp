#pragma once

#include <stdexcept>
#include <string>

namespace aaiiw {

enum class ErrorKind {
  invalid_input,
  config,
  separation_detected,
  singular_information,
  not_converged,
  no_events,
  rank_deficient_design,
  insufficient_rows,
  non_finite_propensity,
  zero_intensity_at_event,
  no_observed_events,
  missing_baseline,
  positivity_violation,
  resample_degenerate,
};

const char* to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a machine-readable kind so
// callers (Monte Carlo driver, bootstrap, CLI) can count or map it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_input: return "InvalidInput";
    case ErrorKind::config: return "ConfigError";
    case ErrorKind::separation_detected: return "SeparationDetected";
    case ErrorKind::singular_information: return "SingularInformation";
    case ErrorKind::not_converged: return "NotConverged";
    case ErrorKind::no_events: return "NoEvents";
    case ErrorKind::rank_deficient_design: return "RankDeficientDesign";
    case ErrorKind::insufficient_rows: return "InsufficientRows";
    case ErrorKind::non_finite_propensity: return "NonFinitePropensity";
    case ErrorKind::zero_intensity_at_event: return "ZeroIntensityAtEvent";
    case ErrorKind::no_observed_events: return "NoObservedEvents";
    case ErrorKind::missing_baseline: return "MissingBaseline";
    case ErrorKind::positivity_violation: return "PositivityViolation";
    case ErrorKind::resample_degenerate: return "ResampleDegenerate";
  }
  return "Unknown";
}

}  // namespace aaiiw
