#ifndef CANTISIM_ERRORS_HPP
#define CANTISIM_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace cantisim {

/// Thrown when a config or argument violates a documented constraint.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base for runtime failures of a simulation (mapped to exit code 2 by the CLI).
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoOscillationError : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

class NotSettledError : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

class NoSignalError : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

class OffsetRangeError : public SimulationError {
 public:
  using SimulationError::SimulationError;
};

/// One violated constraint, with enough context to fix the config.
struct ValidationIssue {
  std::string path;        // e.g. "loop.hpf_cutoffs_hz[0]"
  std::string given;       // offending value as text
  std::string constraint;  // e.g. "must be < f0/10"

  std::string to_string() const { return path + " = " + given + ": " + constraint; }
};

using ValidationIssues = std::vector<ValidationIssue>;

/// Throws ValidationError with all issues joined, or returns if the list is empty.
void throw_if_issues(const ValidationIssues& issues);

}  // namespace cantisim

#endif
