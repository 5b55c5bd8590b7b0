#pragma once

#include <stdexcept>
#include <string>

namespace vlift {

/// Bad input to an operation: violated precondition, malformed input, out-of-domain argument.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A linear system that should be solvable was not (singular resolvent, rank-deficient regression).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double condition = 0.0)
      : std::runtime_error(what), condition_(condition) {}

  /// Condition number estimate at the point of failure, 0 when not applicable.
  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

/// Experiment configuration could not be parsed or validated.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace detail
}  // namespace vlift
