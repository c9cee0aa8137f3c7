#include "bwsurv/dists.hpp"

#include "../support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace bwsurv;
using doctest::Approx;

TEST_CASE("parameter classes reject non-positive values") {
  CHECK_THROWS_AS(WeibullParams(0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(WeibullParams(1.0, -2.0), std::invalid_argument);
  CHECK_THROWS_AS(BetaParams(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ParetoParams(0.0, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(NormalParams(0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(WeibullParams(std::nan(""), 1.0), std::invalid_argument);
}

TEST_CASE("weibull log pdf") {
  // shape 1 is the exponential with rate 1/scale
  CHECK(weibull_log_pdf(2.0, WeibullParams(1.0, 2.0)) == Approx(-std::log(2.0) - 1.0).epsilon(1e-14));
  for (double k : {0.5, 1.0, 2.7}) {
    CHECK(weibull_log_pdf(4.0, WeibullParams(k, 4.0)) == Approx(std::log(k / 4.0) - 1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(weibull_log_pdf(0.0, WeibullParams(2.0, 5.0)), std::domain_error);
  CHECK_THROWS_AS(weibull_log_pdf(-1.0, WeibullParams(2.0, 5.0)), std::domain_error);

  const WeibullParams p(2.0, 5.0);
  const double mass = oracle::integrate([&](double t) { return t > 0 ? weibull_pdf(t, p) : 0.0; },
                                        0.0, 200.0);
  CHECK(std::abs(mass - 1.0) < 1e-6);
  CHECK(std::isfinite(weibull_log_pdf(3.0, p)));
}

TEST_CASE("weibull survival, cdf and cumulative hazard") {
  const WeibullParams p(2.0, 5.0);
  CHECK(weibull_log_survival(0.0, p) == 0.0);
  CHECK(weibull_log_survival(10.0, p) == Approx(-4.0).epsilon(1e-15));
  for (double k : {0.3, 1.0, 4.0}) {
    const WeibullParams w(k, 7.0);
    CHECK(weibull_log_survival(7.0, w) == Approx(-1.0).epsilon(1e-15));
    CHECK(weibull_survival(7.0, w) == Approx(std::exp(-1.0)).epsilon(1e-15));
    CHECK(weibull_cdf(7.0, w) == Approx(1.0 - std::exp(-1.0)).epsilon(1e-15));
    CHECK(weibull_cumulative_hazard(7.0, w) == Approx(1.0).epsilon(1e-15));
  }
  CHECK(weibull_cdf(0.0, p) == 0.0);
  CHECK(weibull_cumulative_hazard(0.0, p) == 0.0);
  for (double k : {1.0, 1.5, 3.0}) {
    CHECK(std::abs(weibull_cdf(50.0 * 5.0, WeibullParams(k, 5.0)) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(weibull_log_survival(-0.1, p), std::domain_error);
  CHECK_THROWS_AS(weibull_cdf(-0.1, p), std::domain_error);
  CHECK_THROWS_AS(weibull_cumulative_hazard(-0.1, p), std::domain_error);

  // 1 - CDF by quadrature of the density
  const double tail = 1.0 - oracle::integrate([&](double t) { return t > 0 ? weibull_pdf(t, p) : 0.0; },
                                              0.0, 10.0);
  CHECK(std::log(tail) == Approx(-4.0).epsilon(1e-8));

  // H(t) is the integral of the hazard
  const WeibullParams q(1.7, 30.0);
  const double H = oracle::integrate([&](double t) { return t > 0 ? weibull_hazard(t, q) : 0.0; },
                                     0.0, 45.0);
  CHECK(std::abs(H - weibull_cumulative_hazard(45.0, q)) < 1e-6);
}

TEST_CASE("weibull hazard") {
  for (double t : {0.1, 3.0, 80.0}) {
    CHECK(weibull_hazard(t, WeibullParams(1.0, 4.0)) == Approx(0.25).epsilon(1e-15));
  }
  CHECK(weibull_hazard(5.0, WeibullParams(2.0, 5.0)) == Approx(0.4).epsilon(1e-14));
  CHECK(weibull_hazard(5.0, WeibullParams(2.0, 5.0)) ==
        Approx(weibull_pdf(5.0, WeibullParams(2.0, 5.0)) / weibull_survival(5.0, WeibullParams(2.0, 5.0))));
  CHECK_THROWS_AS(weibull_hazard(0.0, WeibullParams(2.0, 5.0)), std::domain_error);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> t_dist(0.01, 300.0), k_dist(0.2, 5.0), s_dist(1.0, 200.0);
  for (int i = 0; i < 1000; ++i) {
    const WeibullParams w(k_dist(rng), s_dist(rng));
    double t = t_dist(rng);
    // beyond H = 700 the survival underflows and log_pdf carries eps * H of rounding
    while (weibull_cumulative_hazard(t, w) > 700.0) t = t_dist(rng);
    const double h = weibull_hazard(t, w);
    CHECK(std::abs(h - std::exp(weibull_log_pdf(t, w) - weibull_log_survival(t, w))) <= 1e-12 * h);
  }
  // non-decreasing for shape > 1
  const WeibullParams inc(1.8, 100.0);
  double prev = 0.0;
  for (double t = 1.0; t <= 180.0; t += 1.0) {
    CHECK(weibull_hazard(t, inc) >= prev);
    prev = weibull_hazard(t, inc);
  }
}

TEST_CASE("weibull sampling") {
  const WeibullParams p(2.0, 5.0);
  Rng a(99), b(99);
  for (int i = 0; i < 10; ++i) CHECK(weibull_sample(p, a) == weibull_sample(p, b));

  constexpr int n = 1000000;
  Rng rng(2024);
  std::vector<double> draws(n);
  for (auto& d : draws) d = weibull_sample(p, rng);
  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double F = weibull_cdf(draws[static_cast<std::size_t>(i)], p);
    ks = std::max({ks, std::abs(F - static_cast<double>(i) / n), std::abs(F - static_cast<double>(i + 1) / n)});
  }
  CHECK(ks < 0.005);
  CHECK(ks < 3.0 * 1.36 / std::sqrt(static_cast<double>(n)));

  Rng rng1(5);
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += weibull_sample(WeibullParams(1.0, 1.0), rng1);
  CHECK(std::abs(mean / n - 1.0) < 0.01);
}

TEST_CASE("uniform01 and standard_normal") {
  Rng rng(3);
  double lo = 1.0, hi = 0.0, m = 0.0, m2 = 0.0;
  constexpr int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = uniform01(rng);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    const double z = standard_normal(rng);
    m += z;
    m2 += z * z;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  CHECK(std::abs(m / n) < 0.01);
  CHECK(std::abs(m2 / n - 1.0) < 0.02);
}

TEST_CASE("prior log densities") {
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(beta_log_pdf(0.5, BetaParams(1.0, 1.0)) == Approx(0.0).epsilon(1e-15));
  CHECK(beta_log_pdf(0.0, BetaParams(2.0, 2.0)) == ninf);
  CHECK(beta_log_pdf(1.2, BetaParams(2.0, 2.0)) == ninf);
  CHECK(pareto_log_pdf(0.05, ParetoParams(0.1, 1.5)) == ninf);
  CHECK(pareto_log_pdf(0.2, ParetoParams(0.1, 1.5)) ==
        Approx(std::log(1.5) + 1.5 * std::log(0.1) - 2.5 * std::log(0.2)).epsilon(1e-14));
  CHECK(pareto_log_pdf(0.2, ParetoParams(0.1, 1.5)) == Approx(0.975182).epsilon(1e-6));
  CHECK(uniform_log_pdf(0.3, 0.0, 2.0) == Approx(-std::log(2.0)));
  CHECK(uniform_log_pdf(2.5, 0.0, 2.0) == ninf);
  CHECK(normal_log_pdf(1.0, NormalParams(1.0, 2.0)) ==
        Approx(-std::log(2.0) - 0.5 * std::log(2.0 * std::numbers::pi)));
  CHECK(positive_normal_log_pdf(-1.0, NormalParams(1.0, 2.0)) == ninf);

  // normalization by quadrature
  const ParetoParams par(0.1, 1.5);
  double pm = 0.0;
  for (double a = 0.1; a < 1e6; a *= 10.0) {
    pm += oracle::integrate([&](double x) { return std::exp(pareto_log_pdf(x, par)); }, a, a * 10.0);
  }
  CHECK(std::abs(pm - 1.0) < 2e-4);  // analytic tail beyond 1e6 is (1e-7)^1.5

  const BetaParams bp(2.5, 7.0);
  CHECK(std::abs(oracle::integrate([&](double x) { return std::exp(beta_log_pdf(x, bp)); }, 0.0, 1.0) -
                 1.0) < 1e-6);
  const NormalParams np(3.0, 4.0);
  CHECK(std::abs(oracle::integrate([&](double x) { return std::exp(positive_normal_log_pdf(x, np)); },
                                   0.0, 60.0) -
                 1.0) < 1e-6);
  CHECK(std::abs(oracle::integrate([&](double x) { return std::exp(normal_log_pdf(x, np)); }, -60.0,
                                   60.0) -
                 1.0) < 1e-6);
}

TEST_CASE("numerical helpers") {
  CHECK(log_sum_exp(std::log(0.25), std::log(0.5)) == Approx(std::log(0.75)).epsilon(1e-15));
  CHECK(log_sum_exp(-1e300, 0.0) == 0.0);
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(ninf, ninf) == ninf);
  CHECK(log_inv_logit(0.0) == Approx(std::log(0.5)));
  CHECK(log1m_inv_logit(0.0) == Approx(std::log(0.5)));
  CHECK(log_inv_logit(-800.0) == Approx(-800.0));
  CHECK(inv_logit(logit(0.013)) == Approx(0.013).epsilon(1e-14));
  CHECK(log_std_normal_cdf(0.0) == Approx(std::log(0.5)));
  CHECK(log_std_normal_cdf(-30.0) == Approx(std::log(std::erfc(30.0 / std::sqrt(2.0)) / 2.0)).epsilon(1e-8));
  CHECK(digamma(1.0) == Approx(-0.5772156649015329).epsilon(1e-14));
}

TEST_CASE("distribution identities at random points") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> t_dist(0.0, 400.0), k_dist(0.2, 6.0), s_dist(0.5, 300.0);
  for (int i = 0; i < 10000; ++i) {
    const WeibullParams w(k_dist(rng), s_dist(rng));
    const double t = t_dist(rng);
    CHECK(std::abs(std::exp(weibull_log_survival(t, w)) + weibull_cdf(t, w) - 1.0) <= 1e-12);
    CHECK(weibull_cumulative_hazard(t, w) == -weibull_log_survival(t, w));
  }
}
