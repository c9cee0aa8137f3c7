#pragma once

// Log-space densities, survival quantities and samplers for the
// distributions used by the Bernoulli-Weibull models.

#include <cstdint>
#include <random>

namespace bwsurv {

using Rng = std::mt19937_64;

/// Uniform draw on the open interval (0, 1) built from the top 53 bits of
/// the engine output, so sequences are identical across standard libraries.
double uniform01(Rng& rng);

/// Standard normal draw (Marsaglia polar method).
double standard_normal(Rng& rng);

/// Shape/scale Weibull. Durations and the scale share the same unit (days).
class WeibullParams {
 public:
  WeibullParams(double shape, double scale);

  double shape() const { return shape_; }
  double scale() const { return scale_; }

 private:
  double shape_;
  double scale_;
};

class BetaParams {
 public:
  BetaParams(double alpha, double beta);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }

 private:
  double alpha_;
  double beta_;
};

/// Pareto type I with support [minimum, inf).
class ParetoParams {
 public:
  ParetoParams(double minimum, double exponent);

  double minimum() const { return minimum_; }
  double exponent() const { return exponent_; }

 private:
  double minimum_;
  double exponent_;
};

class NormalParams {
 public:
  NormalParams(double location, double spread);

  double location() const { return location_; }
  double spread() const { return spread_; }

 private:
  double location_;
  double spread_;
};

// Weibull. Domain violations (t <= 0 for densities/hazard, t < 0 otherwise)
// throw std::domain_error.
double weibull_log_pdf(double t, const WeibullParams& p);
double weibull_pdf(double t, const WeibullParams& p);
double weibull_log_survival(double t, const WeibullParams& p);
double weibull_survival(double t, const WeibullParams& p);
double weibull_cdf(double t, const WeibullParams& p);
double weibull_hazard(double t, const WeibullParams& p);
double weibull_cumulative_hazard(double t, const WeibullParams& p);
double weibull_sample(const WeibullParams& p, Rng& rng);

// Priors. Outside the support these return -inf instead of throwing.
double beta_log_pdf(double x, const BetaParams& p);
double pareto_log_pdf(double x, const ParetoParams& p);
double normal_log_pdf(double x, const NormalParams& p);
double uniform_log_pdf(double x, double lo, double hi);

/// Normal restricted to (0, inf), renormalized by Phi(location / spread).
double positive_normal_log_pdf(double x, const NormalParams& p);

// Numerical helpers shared with the model code.
double log_sum_exp(double a, double b);
double log_inv_logit(double u);     // log(sigmoid(u))
double log1m_inv_logit(double u);   // log(1 - sigmoid(u))
double inv_logit(double u);
double logit(double p);

/// log Phi(x) for the standard normal CDF.
double log_std_normal_cdf(double x);

/// phi(x) / Phi(x), the inverse Mills ratio of the lower tail.
double std_normal_mills(double x);

double digamma(double x);

}  // namespace bwsurv
