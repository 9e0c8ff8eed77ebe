#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace argpois {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// A series or iteration did not reach its tolerance within the hard cap.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, std::size_t cap)
      : std::runtime_error(what + " (cap " + std::to_string(cap) + ")"), cap_(cap) {}
  std::size_t cap() const { return cap_; }

 private:
  std::size_t cap_;
};

/// Truncated support carries no numerically representable mass.
class DegenerateSupportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inverse-transform grid does not cover the density.
class GridCoverageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// exp(v'phi) overflowed.
class IntensityOverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

/// Every particle received zero weight at step t (1-based day index).
class FilterDegeneracyError : public std::runtime_error {
 public:
  FilterDegeneracyError(std::size_t t, std::size_t particles)
      : std::runtime_error("particle filter collapsed at t=" + std::to_string(t) + " with N=" +
                           std::to_string(particles) + "; retry with more particles"),
        t_(t) {}
  std::size_t step() const { return t_; }

 private:
  std::size_t t_;
};

/// A forward-filter row had no support (all emissions -inf) at day t.
class NumericalDegeneracyError : public std::runtime_error {
 public:
  NumericalDegeneracyError(std::size_t t)
      : std::runtime_error("forward filter row has zero mass at t=" + std::to_string(t)), t_(t) {}
  std::size_t step() const { return t_; }

 private:
  std::size_t t_;
};

/// Design matrix is not of full column rank.
class RankDeficiencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data or configuration.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace argpois

namespace argpois {

/// A sampler block failed during a Gibbs sweep (0-based sweep index).
class SweepError : public std::runtime_error {
 public:
  SweepError(std::size_t sweep, const std::string& what, bool degeneracy)
      : std::runtime_error("sweep " + std::to_string(sweep) + ": " + what),
        sweep_(sweep),
        degeneracy_(degeneracy) {}
  std::size_t sweep() const { return sweep_; }
  bool filter_degeneracy() const { return degeneracy_; }

 private:
  std::size_t sweep_;
  bool degeneracy_;
};

}  // namespace argpois
