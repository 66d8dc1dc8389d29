#pragma once

#include <stdexcept>
#include <string>

namespace plfem {

/// Argument outside the domain of a scalar function (negative moduli etc.).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Kacanov weight would be zero or infinite for the given relaxation.
class SingularWeightError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Two meshes (or fields on them) are not related by refinement.
class NotNestedError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The linear system has no free unknowns.
class EmptySystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorization breakdown or residual above tolerance.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Adaptive loop exceeded its event budget without terminating.
class LoopGuardError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace plfem
