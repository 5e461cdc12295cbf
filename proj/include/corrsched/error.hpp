#pragma once

#include <stdexcept>
#include <string>

namespace corrsched {

// Invalid or unsupported parameter; the message carries the offending key
// path when one is known (e.g. "source_model.theta").
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Covariance submatrix is (numerically) rank deficient.
class DegenerateModelError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// LP solver hit its iteration cap or lost numerical feasibility.
class SolverError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// A module error raised inside the frame loop, tagged with drop and frame.
class SimulationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace corrsched
