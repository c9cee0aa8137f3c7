#pragma once

// Oracles shared by the unit and acceptance tests. Nothing here calls into
// the likelihood code it is used to check.

#include "bwsurv/model.hpp"
#include "bwsurv/target.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

// Adaptive Gauss-Kronrod over [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-12);
}

// Weibull density and survival written out in linear space, long double.
inline long double weibull_pdf(long double t, long double k, long double s) {
  return (k / s) * std::pow(t / s, k - 1) * std::exp(-std::pow(t / s, k));
}
inline long double weibull_survival(long double t, long double k, long double s) {
  return std::exp(-std::pow(t / s, k));
}

// Product-form likelihood evaluated factor by factor in linear space; the
// log is taken of each factor, never of a log-sum-exp.
inline long double brute_log_likelihood(const bwsurv::ConstrainedParams& p,
                                        const bwsurv::Dataset& d) {
  long double total = 0.0L;
  for (const auto& o : d.observations()) {
    const auto& c = p.variant == bwsurv::ModelVariant::Hierarchical
                        ? p.categories[static_cast<std::size_t>(o.category - 1)]
                        : p.categories[0];
    const long double q = p.variant == bwsurv::ModelVariant::Baseline ? 1.0L : c.q;
    long double factor;
    if (o.event_observed) {
      factor = q * weibull_pdf(o.duration, c.shape, c.scale);
    } else {
      factor = (1.0L - q) + q * weibull_survival(o.duration, c.shape, c.scale);
    }
    total += std::log(factor);
  }
  return total;
}

// Central finite difference of f at x along coordinate j.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t j, double h) {
  const double x0 = x[j];
  x[j] = x0 + h;
  const double up = f(x);
  x[j] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

// Richardson-extrapolated central difference; error O(h^4).
inline double fd_derivative(const std::function<double(const std::vector<double>&)>& f,
                            const std::vector<double>& x, std::size_t j, double h = 1e-3) {
  const double d1 = central_difference(f, x, j, h);
  const double d2 = central_difference(f, x, j, h / 2);
  return (4.0 * d2 - d1) / 3.0;
}

// Gaussian N(mean, cov) target with unconstrained = constrained coordinates.
class GaussianTarget final : public bwsurv::LogDensity {
 public:
  GaussianTarget(std::vector<double> mean, std::vector<double> precision)
      : mean_(std::move(mean)), precision_(std::move(precision)) {}

  std::size_t dimension() const override { return mean_.size(); }
  double log_density(std::span<const double> x, double temper,
                     std::span<double> grad) const override {
    const std::size_t n = mean_.size();
    double q = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double gi = 0.0;
      for (std::size_t j = 0; j < n; ++j) gi -= precision_[i * n + j] * (x[j] - mean_[j]);
      grad[i] = temper * gi;
      q += (x[i] - mean_[i]) * gi;
    }
    return temper * 0.5 * q;
  }
  double log_likelihood(std::span<const double> x) const override {
    std::vector<double> g(mean_.size());
    return log_density(x, 1.0, g);
  }
  std::size_t num_observations() const override { return 1; }
  std::vector<std::string> output_names() const override {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < mean_.size(); ++i) names.push_back("x" + std::to_string(i + 1));
    return names;
  }
  void write_constrained(std::span<const double> x, std::span<double> out) const override {
    std::copy(x.begin(), x.end(), out.begin());
  }

 private:
  std::vector<double> mean_;
  std::vector<double> precision_;  // row-major inverse covariance
};

// Bernoulli likelihood with a Beta(a, b) prior on p, sampled on logit p.
class BetaBernoulliTarget final : public bwsurv::LogDensity {
 public:
  BetaBernoulliTarget(int successes, int trials, double a, double b)
      : s_(successes), n_(trials), a_(a), b_(b) {}

  std::size_t dimension() const override { return 1; }
  double log_density(std::span<const double> x, double temper,
                     std::span<double> grad) const override {
    const double u = x[0];
    const double log_p = -std::log1p(std::exp(-u));
    const double log_1mp = -std::log1p(std::exp(u));
    const double p = std::exp(log_p);
    const double lik = s_ * log_p + (n_ - s_) * log_1mp;
    // Prior on p times the logit Jacobian p (1 - p).
    const double prior = a_ * log_p + b_ * log_1mp;
    grad[0] = temper * (s_ - n_ * p) + (a_ - (a_ + b_) * p);
    return temper * lik + prior;
  }
  double log_likelihood(std::span<const double> x) const override {
    const double u = x[0];
    return s_ * -std::log1p(std::exp(-u)) + (n_ - s_) * -std::log1p(std::exp(u));
  }
  std::size_t num_observations() const override { return static_cast<std::size_t>(n_); }
  std::vector<std::string> output_names() const override { return {"p"}; }
  void write_constrained(std::span<const double> x, std::span<double> out) const override {
    out[0] = 1.0 / (1.0 + std::exp(-x[0]));
  }

 private:
  int s_, n_;
  double a_, b_;
};

// Random small dataset: up to `max_n` observations over K categories, each
// category non-empty, horizon 180.
inline bwsurv::Dataset random_dataset(std::mt19937_64& rng, int K, int max_n) {
  std::uniform_int_distribution<int> size(K, max_n);
  std::uniform_real_distribution<double> dur(0.5, 180.0);
  std::bernoulli_distribution event(0.4);
  const int n = size(rng);
  std::vector<bwsurv::Observation> obs;
  for (int i = 0; i < n; ++i) {
    obs.push_back({dur(rng), event(rng), i < K ? i + 1 : 1 + static_cast<int>(rng() % K)});
  }
  return bwsurv::Dataset(std::move(obs), K, 180.0);
}

// Monte Carlo standard error of a mean by batch means within each chain.
inline double batch_mcse(const std::vector<std::vector<double>>& chains, std::size_t batches = 20) {
  std::vector<double> means;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& c : chains) {
    const std::size_t len = c.size() / batches;
    for (std::size_t b = 0; b < batches; ++b) {
      double m = 0.0;
      for (std::size_t i = b * len; i < (b + 1) * len; ++i) m += c[i];
      means.push_back(m / static_cast<double>(len));
    }
    for (double v : c) total += v;
    count += c.size();
  }
  const double grand = total / static_cast<double>(count);
  double ss = 0.0;
  for (double m : means) ss += (m - grand) * (m - grand);
  const double var_batch = ss / static_cast<double>(means.size() - 1);
  return std::sqrt(var_batch / static_cast<double>(means.size()));
}

}  // namespace oracle
