#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace bwsurv {

/// A differentiable log density on unconstrained R^d, plus the mapping the
/// sampler uses to record draws in constrained space.
class LogDensity {
 public:
  virtual ~LogDensity() = default;

  virtual std::size_t dimension() const = 0;

  /// temper * log-likelihood + log-prior + log-Jacobian at `x`. Writes the
  /// gradient with respect to `x` into `grad`. Non-finite results are
  /// reported as -inf with a zero gradient.
  virtual double log_density(std::span<const double> x, double temper,
                             std::span<double> grad) const = 0;

  /// Untempered total log-likelihood at `x`.
  virtual double log_likelihood(std::span<const double> x) const = 0;

  /// Number of observations behind the likelihood (used for 1 / log n).
  virtual std::size_t num_observations() const = 0;

  /// Names of the constrained quantities recorded per draw.
  virtual std::vector<std::string> output_names() const = 0;

  virtual void write_constrained(std::span<const double> x, std::span<double> out) const = 0;
};

}  // namespace bwsurv
