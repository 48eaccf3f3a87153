#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mot {

// Base class for every error raised by the solver suite.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedDimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Raised when x does not lie in the relative interior of the convex hull of
// its active y-points, so no martingale kernel can be centered at x.
class InfeasibleMartingaleError : public Error {
 public:
  InfeasibleMartingaleError(std::size_t x_index, const std::string& what)
      : Error(what), x_index_(x_index) {}
  std::size_t x_index() const { return x_index_; }

 private:
  std::size_t x_index_;
};

class IterationLimitError : public Error {
 public:
  IterationLimitError(std::size_t index, const std::string& what)
      : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Concave-hull failures: point outside the hull of the grid, or loop guard.
class HullError : public Error {
 public:
  enum class Kind { kOutsideHull, kLoopGuard };
  HullError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mot
