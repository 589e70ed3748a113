#pragma once

#include <stdexcept>
#include <string>

namespace fbmxcov {

// A numerical procedure failed to reach its tolerance. The best estimate and
// the error that was actually achieved are kept so callers can still report them.
class QuadratureError : public std::runtime_error {
 public:
  QuadratureError(const std::string& what, double estimate, double achieved_error)
      : std::runtime_error(what), estimate_(estimate), achieved_error_(achieved_error) {}
  double estimate() const noexcept { return estimate_; }
  double achieved_error() const noexcept { return achieved_error_; }

 private:
  double estimate_;
  double achieved_error_;
};

// Evaluation requested at a point where the integrand is not defined, e.g. on
// the diagonal tau == sigma of a kernel with a diagonal singularity.
class SingularPointError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class GridMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace fbmxcov
