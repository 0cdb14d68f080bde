#pragma once

#include <stdexcept>
#include <string>

namespace memento {

// Rejected input: bad arguments, malformed files, infeasible solutions.
// Maps to CLI exit code 2.
class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller broke an API contract (masked action, terminal state, stale
// records). These indicate bugs, not bad data.
class ContractError : public std::logic_error {
  public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Numerical divergence detected by a guard. Maps to CLI exit code 3.
class DivergenceError : public std::runtime_error {
  public:
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// File could not be read/written or failed integrity checks.
class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace memento
