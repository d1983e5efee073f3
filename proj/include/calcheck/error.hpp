#ifndef CALCHECK_ERROR_HPP_
#define CALCHECK_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace calcheck {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by a caller-supplied argument.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A prediction that cannot be evaluated: non-positive scale, non-finite
// quantiles, covariance that does not factorize.
class InvalidDistribution : public Error {
 public:
  using Error::Error;
};

class SingularCovariance : public InvalidDistribution {
 public:
  using InvalidDistribution::InvalidDistribution;
};

// The requested metric is undefined for the prediction family (e.g. PIT of a
// particle cloud).
class UnsupportedMetric : public Error {
 public:
  using Error::Error;
};

// Inconsistent recipe: incompatible slots, bad flag values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input data. Carries the 1-based line number when known.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : Error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class ParticleDepletion : public Error {
 public:
  explicit ParticleDepletion(long step)
      : Error("particle weights underflowed at step " + std::to_string(step)),
        step_(step) {}

  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace calcheck

#endif  // CALCHECK_ERROR_HPP_
