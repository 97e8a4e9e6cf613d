#ifndef SPDELAB_ERROR_HPP
#define SPDELAB_ERROR_HPP

#include <stdexcept>
#include <string>

namespace spdelab {

/// Caller violated a documented precondition (mismatched grids, bad parameters).
class UsageError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// An iterative solver or quadrature failed to reach its tolerance.
class NumericalError : public std::runtime_error {
public:
  NumericalError(const std::string &what, double residual, int iterations)
      : std::runtime_error(what + " (residual " + std::to_string(residual) +
                           " after " + std::to_string(iterations) +
                           " iterations)"),
        residual_(residual), iterations_(iterations) {}

  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

private:
  double residual_;
  int iterations_;
};

inline void require(bool cond, const std::string &msg) {
  if (!cond)
    throw UsageError(msg);
}

} // namespace spdelab

#endif
