#pragma once

#include <stdexcept>
#include <string>

namespace mmest {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Inputs have incompatible shapes (matrix/vector/trajectory dimensions).
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

// Malformed or semantically invalid input data (files, parameters, radii).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what) {}
};

// No admissible (f, eta) in the unit ball reproduces the observation:
// the a posteriori set is empty.
class EmptyAposterioriSet : public Error {
 public:
  explicit EmptyAposterioriSet(const std::string& what) : Error(what) {}
};

// The pencil is not index-1 where the operation requires it (C4 singular or
// too badly conditioned).
class IndexError : public Error {
 public:
  explicit IndexError(const std::string& what) : Error(what) {}
};

// A block pivot of the boundary-value system is numerically singular.
// Carries the node index where elimination failed; usually means the grid
// step is too large relative to the stiffness of the coefficients.
class SingularPivotError : public Error {
 public:
  SingularPivotError(const std::string& what, int node)
      : Error(what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

// An internal invariant failed (e.g. a provably nonnegative quantity came
// out negative beyond roundoff). Indicates a bug, not bad input.
class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error(what) {}
};

}  // namespace mmest
