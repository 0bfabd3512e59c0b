#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace snlab {

/// Shape mismatch or empty operand.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

/// A user-supplied function produced a non-finite value.
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An operation's documented precondition does not hold for the input data.
struct PreconditionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Estimation could not be carried out (e.g. too many excluded grid points).
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A certificate cannot be formed because a quantity that must be positive is zero.
struct DegenerateCertificateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The requested Hermite order has c_t = 0; `next_usable` is the next order with c_t != 0
/// (0 when none exists up to the truncation order).
struct UnusableOrderError : std::invalid_argument {
  UnusableOrderError(const std::string& what, std::size_t next)
      : std::invalid_argument(what), next_usable(next) {}
  std::size_t next_usable;
};

/// No Khatri-Rao order yields a full-rank X^{*t}.
struct InfeasibleDataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite state.
struct DivergenceError : std::runtime_error {
  DivergenceError(const std::string& what, std::size_t at)
      : std::runtime_error(what), iteration(at) {}
  std::size_t iteration;
};

/// The teacher network missed its accuracy target, so the sweep cannot start.
struct TeacherError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LengthError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace snlab
