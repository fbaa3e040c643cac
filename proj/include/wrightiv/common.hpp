#pragma once
// Shared error taxonomy and small utilities.
//
// The CLI maps the hierarchy onto process exit codes:
//   ConfigError (incl. ParseError, DimensionError) -> 2
//   NumericError (degenerate systems, rank failures, non-convergence) -> 3
//   IoError -> 4

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace wrightiv {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration, option, or schema violation.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed input file; carries the file and 1-based line of the failure.
struct ParseError : ConfigError {
    ParseError(const std::string& what, std::string file, long line)
        : ConfigError(file + ":" + std::to_string(line) + ": " + what),
          file_(std::move(file)),
          line_(line) {}
    const std::string& file() const { return file_; }
    long line() const { return line_; }

  private:
    std::string file_;
    long line_;
};

// Shape/size mismatch between declared and supplied objects.
struct DimensionError : ConfigError {
    using ConfigError::ConfigError;
};

// Numerical failure while executing a well-formed request.
struct NumericError : Error {
    using Error::Error;
};

// |beta1 - alpha1| below the degeneracy cutoff: no unique equilibrium.
struct DegenerateSystemError : NumericError {
    using NumericError::NumericError;
};

// Rank-deficient or non-positive-definite matrix where a full-rank /
// positive-definite one is required; carries the offending eigenvalue.
struct RankError : NumericError {
    RankError(const std::string& what, double offending_eigenvalue)
        : NumericError(what + " (offending eigenvalue " +
                       std::to_string(offending_eigenvalue) + ")"),
          offending_eigenvalue_(offending_eigenvalue) {}
    double offending_eigenvalue() const { return offending_eigenvalue_; }

  private:
    double offending_eigenvalue_;
};

// Covariance matrix not invertible even after the ridge fallback.
struct SingularKernelError : NumericError {
    using NumericError::NumericError;
};

// Iterative procedure failed to converge within its sweep budget.
struct ConvergenceError : NumericError {
    using NumericError::NumericError;
};

// Filesystem-level failure (missing file, unwritable path).
struct IoError : Error {
    using Error::Error;
};

// Degeneracy cutoff for beta1 - alpha1 (slope difference of supply and
// demand); below this the equilibrium price is not identified.
inline constexpr double kDegeneracyCutoff = 1e-10;

}  // namespace wrightiv
