#pragma once

#include <stdexcept>
#include <string>

namespace amcmc {

/// Triangular solve against a factor whose diagonal is not strictly positive.
class SingularFactorError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Sherman-Morrison denominator collapsed; callers re-invert densely.
class UpdateDegenerateError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Cholesky factorization or rank-1 update broke down (matrix not SPD).
class FactorizationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Target density could not be evaluated at a point where it must be finite.
class TargetEvaluationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace amcmc
