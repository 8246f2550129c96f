#pragma once

#include <stdexcept>
#include <string>

namespace ezdual {

// Modeling-domain violation (bad argument signs, parameters outside the
// closed-form domain). Distinct from SolverError so callers can tell a
// mis-specified input from a numerical breakdown.
class DomainError : public std::domain_error {
public:
    explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Numerical failure inside a solver (non-convergence, singular system, NaN).
class SolverError : public std::runtime_error {
public:
    explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// Least-squares regression failure in the backward valuation.
class RegressionError : public SolverError {
public:
    explicit RegressionError(const std::string& what) : SolverError(what) {}
};

// Config file rejection; carries the offending line (0 when not line-bound).
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, int line = 0)
        : std::runtime_error(line > 0 ? what + " (line " + std::to_string(line) + ")"
                                      : what),
          line_(line) {}
    int line() const { return line_; }

private:
    int line_;
};

}  // namespace ezdual
