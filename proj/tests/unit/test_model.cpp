#include "bwsurv/dists.hpp"
#include "bwsurv/model.hpp"

#include "../support.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/pareto.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

using namespace bwsurv;
using doctest::Approx;

namespace {

// Unconstrained point in a region where every prior term is finite.
std::vector<double> random_point(std::mt19937_64& rng, ModelVariant v, int K) {
  std::uniform_real_distribution<double> logit_q(-5.0, 2.0), log_shape(-0.7, 1.5),
      log_scale(std::log(20.0), std::log(400.0)), unit(-1.0, 1.0);
  ConstrainedParams p;
  p.variant = v;
  const int n = v == ModelVariant::Hierarchical ? K : 1;
  for (int k = 0; k < n; ++k) {
    p.categories.push_back({v == ModelVariant::Baseline ? 1.0 : inv_logit(logit_q(rng)),
                            std::exp(log_shape(rng)), std::exp(log_scale(rng))});
  }
  p.mu = inv_logit(2.0 * unit(rng));
  p.kappa = 0.1 + std::exp(2.0 * unit(rng));
  p.mu_lambda = 2.0 * std::exp(0.5 * unit(rng));
  p.sigma_lambda = 0.8 * std::exp(unit(rng));
  p.mu_theta = 100.0 * std::exp(0.5 * unit(rng));
  p.sigma_theta = 60.0 * std::exp(unit(rng));
  return transform_to_unconstrained(p, ModelSpec{v, {}});
}

// Prior assembled from Boost.Math distributions, term by term.
double prior_oracle(const ConstrainedParams& p, const HyperConstants& h) {
  auto uniform = [](double x, Interval b) {
    return x > b.lo && x <= b.hi ? -std::log(b.hi - b.lo) : -std::numeric_limits<double>::infinity();
  };
  if (p.variant != ModelVariant::Hierarchical) {
    return uniform(p.categories[0].shape, h.lambda_bounds) +
           uniform(p.categories[0].scale, h.theta_bounds);
  }
  double lp = 0.0;
  const boost::math::beta_distribution<double> beta(p.mu * p.kappa, p.kappa * (1 - p.mu));
  const boost::math::normal_distribution<double> nl(p.mu_lambda, p.sigma_lambda);
  const boost::math::normal_distribution<double> nt(p.mu_theta, p.sigma_theta);
  for (const auto& c : p.categories) {
    lp += std::log(boost::math::pdf(beta, c.q));
    lp += std::log(boost::math::pdf(nl, c.shape) / boost::math::cdf(boost::math::complement(nl, 0.0)));
    lp += std::log(boost::math::pdf(nt, c.scale) / boost::math::cdf(boost::math::complement(nt, 0.0)));
  }
  if (p.kappa < h.pareto_min) return -std::numeric_limits<double>::infinity();
  lp += std::log(boost::math::pdf(boost::math::pareto_distribution<double>(h.pareto_min, h.pareto_exponent),
                                  p.kappa));
  lp += uniform(p.mu_lambda, h.lambda_bounds) + uniform(p.mu_theta, h.theta_bounds) +
        uniform(p.sigma_lambda, {0.0, h.sigma_lambda_upper}) +
        uniform(p.sigma_theta, {0.0, h.sigma_theta_upper});
  return lp;  // mu ~ Uniform(0, 1) adds 0
}

Dataset one_censored(double t) { return Dataset({{t, false, 1}}, 1, std::max(t, 1.0)); }

}  // namespace

TEST_CASE("dataset validation") {
  CHECK_THROWS_AS(Dataset({{0.0, true, 1}}, 1, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(Dataset({{1.0, true, 2}}, 1, 10.0), std::invalid_argument);
  CHECK_THROWS_AS(Dataset({{1.0, true, 1}}, 2, 10.0), std::invalid_argument);  // category 2 empty
  CHECK_THROWS_AS(Dataset({{11.0, false, 1}}, 1, 10.0), std::invalid_argument);
  const Dataset d({{1.0, true, 2}, {3.0, false, 1}, {2.0, true, 2}}, 2, 10.0);
  CHECK(d.category_counts() == std::vector<std::size_t>{1, 2});
  CHECK(d.restrict_to_category(2).size() == 2);
}

TEST_CASE("hyper constants validation") {
  HyperConstants h;
  CHECK_NOTHROW(h.validate());
  h.theta_bounds = {10.0, 5.0};
  CHECK_THROWS_AS(h.validate(), std::invalid_argument);
}

TEST_CASE("parameter layout") {
  CHECK(ParamLayout(ModelVariant::Baseline, 3).names() == std::vector<std::string>{"lambda", "theta"});
  CHECK(ParamLayout(ModelVariant::Mixture, 3).size() == 3);
  const ParamLayout h(ModelVariant::Hierarchical, 5);
  CHECK(h.size() == 21);
  CHECK(h.names().front() == "q[1]");
  CHECK(h.index_of("theta[5]") == 14);
  CHECK(h.index_of("sigma_theta") == 20);
  CHECK_THROWS(h.index_of("nope"));
  CHECK(parse_variant("mixture") == ModelVariant::Mixture);
  CHECK_THROWS_AS(parse_variant("weibull"), std::invalid_argument);
}

TEST_CASE("bijection") {
  // log-transformed category parameters and logit q at zero
  const ModelSpec hier{ModelVariant::Hierarchical, {}};
  auto t = transform_to_constrained(std::vector<double>(9, 0.0), hier, 1);
  CHECK(t.params.categories[0].q == 0.5);
  CHECK(t.params.categories[0].shape == 1.0);
  CHECK(t.params.categories[0].scale == 1.0);
  CHECK(t.params.mu == 0.5);
  CHECK(t.params.kappa == Approx(1.1));
  // uniform-box parameters behave like exp(u) well below their cap: w / (1 + w) at zero
  CHECK(t.params.mu_lambda == Approx(20.0 / 21.0).epsilon(1e-15));
  CHECK(t.params.sigma_lambda == Approx(50.0 / 51.0).epsilon(1e-15));
  CHECK(t.params.mu_theta == Approx(5000.0 / 5001.0).epsilon(1e-15));
  CHECK(t.params.sigma_theta == Approx(2000.0 / 2001.0).epsilon(1e-15));
  auto box_jac = [](double w) { return 2.0 * std::log(w / (1.0 + w)); };
  CHECK(t.log_jacobian ==
        Approx(2 * std::log(0.25) + box_jac(20) + box_jac(50) + box_jac(5000) + box_jac(2000))
            .epsilon(1e-14));
  const auto small = transform_to_constrained(std::vector<double>(9, -3.0), hier, 1).params;
  CHECK(small.mu_theta == Approx(std::exp(-3.0)).epsilon(1e-3));

  const ModelSpec mix{ModelVariant::Mixture, {}};
  t = transform_to_constrained(std::vector<double>{0.0, 0.0, 0.0}, mix, 1);
  CHECK(t.params.categories[0].q == 0.5);
  CHECK(t.params.categories[0].shape == Approx(20.0 / 21.0).epsilon(1e-15));
  CHECK(t.params.categories[0].scale == Approx(5000.0 / 5001.0).epsilon(1e-15));
  CHECK(t.log_jacobian == Approx(std::log(0.25) + box_jac(20) + box_jac(5000)).epsilon(1e-14));

  const ModelSpec base{ModelVariant::Baseline, {}};
  CHECK(transform_to_constrained(std::vector<double>{0.0, 0.0}, base, 1).log_jacobian ==
        Approx(box_jac(20) + box_jac(5000)));
  CHECK_THROWS_AS(transform_to_constrained(std::vector<double>{0.0}, base, 1), std::invalid_argument);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(-4.0, 4.0);
  for (auto v : {ModelVariant::Baseline, ModelVariant::Mixture, ModelVariant::Hierarchical}) {
    const ModelSpec spec{v, {}};
    const int K = v == ModelVariant::Hierarchical ? 4 : 1;
    const auto n = ParamLayout(v, K).size();
    for (int i = 0; i < 1000; ++i) {
      std::vector<double> u(n);
      for (auto& x : u) x = unit(rng);
      const auto c = transform_to_constrained(u, spec, K).params;
      const auto flat = flatten(c);
      const auto back = transform_to_constrained(transform_to_unconstrained(c, spec), spec, K).params;
      const auto flat2 = flatten(back);
      REQUIRE(flat.size() == n);
      for (std::size_t j = 0; j < n; ++j) CHECK(flat2[j] == Approx(flat[j]).epsilon(1e-12));
      const auto again = flatten(unflatten(flat, v, K));
      CHECK(again == flat);
      for (const auto& cat : c.categories) {
        CHECK(cat.q > 0.0);
        CHECK(cat.q <= 1.0);
        CHECK(cat.shape > 0.0);
        CHECK(cat.scale > 0.0);
      }
      if (v == ModelVariant::Hierarchical) CHECK(c.kappa >= 0.1);
    }
  }
}

TEST_CASE("log likelihood worked values") {
  // S(t) = 0.5 at t = scale * (log 2)^(1/shape)
  const double t = 50.0 * std::pow(std::log(2.0), 1.0 / 2.0);
  ConstrainedParams p;
  p.variant = ModelVariant::Mixture;
  p.categories = {{0.5, 2.0, 50.0}};
  const ModelSpec mix{ModelVariant::Mixture, {}};
  CHECK(log_likelihood(p, one_censored(t), mix) == Approx(std::log(0.75)).epsilon(1e-12));

  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = oracle::random_dataset(rng, 1, 25);
    ConstrainedParams m;
    m.variant = ModelVariant::Mixture;
    m.categories = {{1.0, 1.3, 70.0}};
    ConstrainedParams b = m;
    b.variant = ModelVariant::Baseline;
    CHECK(log_likelihood(m, d, mix) == log_likelihood(b, d, ModelSpec{ModelVariant::Baseline, {}}));
  }
}

TEST_CASE("log likelihood matches the linear-space evaluator") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> q(0.001, 0.999), k(0.3, 4.0), s(5.0, 300.0);
  for (auto v : {ModelVariant::Baseline, ModelVariant::Mixture, ModelVariant::Hierarchical}) {
    const int K = v == ModelVariant::Hierarchical ? 3 : 1;
    for (int rep = 0; rep < 20; ++rep) {
      const auto d = oracle::random_dataset(rng, K, 20);
      ConstrainedParams p;
      p.variant = v;
      for (int c = 0; c < K; ++c) p.categories.push_back({v == ModelVariant::Baseline ? 1.0 : q(rng), k(rng), s(rng)});
      const double ll = log_likelihood(p, d, ModelSpec{v, {}});
      const auto ref = static_cast<double>(oracle::brute_log_likelihood(p, d));
      CHECK(std::abs(ll - ref) <= 1e-9 * std::abs(ref));
    }
  }
}

TEST_CASE("pointwise log likelihood") {
  std::mt19937_64 rng(5);
  const ModelSpec spec{ModelVariant::Hierarchical, {}};
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = oracle::random_dataset(rng, 3, 30);
    ConstrainedParams p;
    p.variant = ModelVariant::Hierarchical;
    p.categories = {{0.2, 1.5, 60.0}, {0.05, 2.0, 100.0}, {0.7, 0.8, 30.0}};
    const auto pw = pointwise_log_likelihood(p, d, spec);
    REQUIRE(pw.size() == d.size());
    double sum = 0.0;
    for (double x : pw) sum += x;
    CHECK(std::abs(sum - log_likelihood(p, d, spec)) <= 1e-10 * std::max(1.0, std::abs(sum)));
    // censored factors lie in [max(1 - q, q S), 1]
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto& o = d.observations()[i];
      if (o.event_observed) continue;
      const auto& c = p.categories[static_cast<std::size_t>(o.category - 1)];
      const double S = weibull_survival(o.duration, WeibullParams(c.shape, c.scale));
      CHECK(pw[i] <= 0.0);
      CHECK(pw[i] >= std::log(std::max(1.0 - c.q, c.q * S)) - 1e-12);
    }
  }
  const Dataset single({{12.0, true, 1}}, 1, 180.0);
  ConstrainedParams m;
  m.variant = ModelVariant::Mixture;
  m.categories = {{0.3, 1.5, 40.0}};
  const ModelSpec mix{ModelVariant::Mixture, {}};
  const auto pw = pointwise_log_likelihood(m, single, mix);
  REQUIRE(pw.size() == 1);
  CHECK(pw[0] == log_likelihood(m, single, mix));

  const Dataset censored({{30.0, false, 1}, {180.0, false, 1}, {2.0, false, 1}}, 1, 180.0);
  m.categories = {{1e-12, 1.5, 40.0}};
  for (double x : pointwise_log_likelihood(m, censored, mix)) CHECK(std::abs(x) < 1e-11);
}

TEST_CASE("hierarchical likelihood is the sum of per-category mixtures") {
  std::mt19937_64 rng(6);
  const ModelSpec hier{ModelVariant::Hierarchical, {}};
  const ModelSpec mix{ModelVariant::Mixture, {}};
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = oracle::random_dataset(rng, 4, 40);
    ConstrainedParams p;
    p.variant = ModelVariant::Hierarchical;
    for (int k = 0; k < 4; ++k) p.categories.push_back({0.1 + 0.2 * k, 1.0 + 0.3 * k, 40.0 + 20 * k});
    double total = 0.0;
    for (int k = 1; k <= 4; ++k) {
      ConstrainedParams m;
      m.variant = ModelVariant::Mixture;
      m.categories = {p.categories[static_cast<std::size_t>(k - 1)]};
      total += log_likelihood(m, d.restrict_to_category(k), mix);
    }
    const double ll = log_likelihood(p, d, hier);
    CHECK(std::abs(ll - total) <= 1e-10 * std::abs(total));
  }
}

TEST_CASE("log prior") {
  const ModelSpec spec{ModelVariant::Hierarchical, {}};
  ConstrainedParams p;
  p.variant = ModelVariant::Hierarchical;
  p.categories = {{0.3, 2.0, 100.0}, {0.6, 1.8, 90.0}};
  p.mu = 0.5;
  p.kappa = 2.0;
  p.mu_lambda = 2.0;
  p.sigma_lambda = 0.5;
  p.mu_theta = 100.0;
  p.sigma_theta = 20.0;
  // Beta(1, 1) contributes nothing; compare against the q-free remainder.
  ConstrainedParams moved = p;
  moved.categories[0].q = 0.9;
  moved.categories[1].q = 0.01;
  CHECK(log_prior(p, spec) == Approx(log_prior(moved, spec)).epsilon(1e-14));

  p.kappa = 0.05;
  CHECK(log_prior(p, spec) == -std::numeric_limits<double>::infinity());

  std::mt19937_64 rng(9);
  for (auto v : {ModelVariant::Baseline, ModelVariant::Mixture, ModelVariant::Hierarchical}) {
    const ModelSpec s{v, {}};
    for (int rep = 0; rep < 200; ++rep) {
      const auto c = transform_to_constrained(random_point(rng, v, 3), s, 3).params;
      const double ref = prior_oracle(c, s.hyper);
      CHECK(std::abs(log_prior(c, s) - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("log posterior value and gradient") {
  std::mt19937_64 rng(12);
  for (auto v : {ModelVariant::Baseline, ModelVariant::Mixture, ModelVariant::Hierarchical}) {
    const int K = v == ModelVariant::Hierarchical ? 3 : 1;
    const ModelSpec spec{v, {}};
    const auto d = oracle::random_dataset(rng, K, 40);
    for (double temper : {1.0, 0.1}) {
      for (int rep = 0; rep < 50; ++rep) {
        const auto u = random_point(rng, v, K);
        const auto lp = log_posterior_and_grad(u, d, spec, temper);
        const auto tr = transform_to_constrained(u, spec, K);
        const double direct =
            temper * log_likelihood(tr.params, d, spec) + log_prior(tr.params, spec) + tr.log_jacobian;
        CHECK(std::abs(lp.value - direct) <= 1e-12 * std::max(1.0, std::abs(direct)) * 10);
        auto f = [&](const std::vector<double>& x) {
          return log_posterior_and_grad(x, d, spec, temper).value;
        };
        for (std::size_t j = 0; j < u.size(); ++j) {
          const double fd = oracle::fd_derivative(f, u, j);
          const double g = lp.gradient[j];
          CHECK(std::abs(fd - g) <= 1e-5 * std::max({1.0, std::abs(fd), std::abs(g)}));
        }
      }
    }
  }
}

TEST_CASE("log posterior properties") {
  std::mt19937_64 rng(13);
  const ModelSpec spec{ModelVariant::Hierarchical, {}};
  const auto d = oracle::random_dataset(rng, 3, 30);
  const auto u = random_point(rng, ModelVariant::Hierarchical, 3);

  // duplicating every observation doubles the likelihood part
  auto obs = d.observations();
  const auto copy = obs;
  obs.insert(obs.end(), copy.begin(), copy.end());
  const Dataset doubled(obs, 3, 180.0);
  const auto tr = transform_to_constrained(u, spec, 3);
  const double rest = log_prior(tr.params, spec) + tr.log_jacobian;
  const double single = log_posterior_and_grad(u, d, spec).value - rest;
  const double twice = log_posterior_and_grad(u, doubled, spec).value - rest;
  CHECK(twice == Approx(2.0 * single).epsilon(1e-12));

  // permutation invariance
  auto shuffled = d.observations();
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const Dataset perm(shuffled, 3, 180.0);
  CHECK(log_posterior_and_grad(u, perm, spec).value ==
        Approx(log_posterior_and_grad(u, d, spec).value).epsilon(1e-13));

  // the box bounds are reached only in the limit
  auto far = u;
  far.back() = 60.0;
  const auto edge = transform_to_constrained(far, spec, 3).params;
  CHECK(edge.sigma_theta <= spec.hyper.sigma_theta_upper);
  CHECK(edge.sigma_theta == Approx(spec.hyper.sigma_theta_upper));
  far.back() = 1e6;  // the Jacobian pushes the density far down but stays finite
  const auto edge_lp = log_posterior_and_grad(far, d, spec);
  CHECK(std::isfinite(edge_lp.value));
  CHECK(edge_lp.value < -9e5);
  CHECK(edge_lp.gradient.back() == Approx(-1.0));
}

TEST_CASE("posterior model matches the free function") {
  std::mt19937_64 rng(14);
  for (auto v : {ModelVariant::Baseline, ModelVariant::Mixture, ModelVariant::Hierarchical}) {
    const int K = v == ModelVariant::Hierarchical ? 2 : 1;
    const ModelSpec spec{v, {}};
    const auto d = oracle::random_dataset(rng, K, 30);
    const PosteriorModel m(spec, d);
    CHECK(m.dimension() == ParamLayout(v, K).size());
    CHECK(m.num_observations() == d.size());
    const auto u = random_point(rng, v, K);
    std::vector<double> g(u.size());
    const double val = m.log_density(u, 0.3, g);
    const auto ref = log_posterior_and_grad(u, d, spec, 0.3);
    CHECK(val == Approx(ref.value).epsilon(1e-13));
    const auto tr = transform_to_constrained(u, spec, K);
    CHECK(m.log_likelihood(u) == Approx(log_likelihood(tr.params, d, spec)).epsilon(1e-12));
    std::vector<double> out(u.size());
    m.write_constrained(u, out);
    CHECK(out == flatten(tr.params));
  }
}
