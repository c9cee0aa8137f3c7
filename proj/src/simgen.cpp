#include "bwsurv/simgen.hpp"

#include "bwsurv/dists.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bwsurv {

std::string_view to_string(SignupMode m) {
  return m == SignupMode::AllAtStart ? "all_at_start" : "uniform_over_window";
}

SignupMode parse_signup_mode(std::string_view name) {
  if (name == "all_at_start") return SignupMode::AllAtStart;
  if (name == "uniform_over_window") return SignupMode::UniformOverWindow;
  throw std::invalid_argument("unknown signup_mode '" + std::string(name) + "'");
}

void ScenarioConfig::validate() const {
  if (categories.empty()) throw std::invalid_argument("scenario needs at least one category");
  if (!(window > 0.0) || !std::isfinite(window)) {
    throw std::invalid_argument("window must be positive");
  }
  for (std::size_t k = 0; k < categories.size(); ++k) {
    const auto& c = categories[k];
    const std::string where = "categories[" + std::to_string(k) + "]";
    if (c.n == 0) throw std::invalid_argument(where + ".n must be positive");
    if (!(c.q >= 0.0 && c.q <= 1.0)) throw std::invalid_argument(where + ".q must lie in [0, 1]");
    if (!(c.shape > 0.0) || !std::isfinite(c.shape)) {
      throw std::invalid_argument(where + ".shape must be positive");
    }
    if (!(c.scale > 0.0) || !std::isfinite(c.scale)) {
      throw std::invalid_argument(where + ".scale must be positive");
    }
  }
}

ScenarioConfig default_scenario(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.categories = {
      {14397, 0.015, 2.0, 98.0},
      {1236, 0.039, 1.8, 106.0},
      {47356, 0.008, 1.9, 101.0},
      {637, 0.004, 1.8, 100.0},
      {4915, 0.010, 1.8, 98.0},
  };
  cfg.window = 180.0;
  cfg.signup_mode = SignupMode::UniformOverWindow;
  cfg.seed = seed;
  return cfg;
}

Dataset generate(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::vector<Observation> obs;
  std::size_t total = 0;
  for (const auto& c : cfg.categories) total += c.n;
  obs.reserve(total);
  for (std::size_t k = 0; k < cfg.categories.size(); ++k) {
    const auto& c = cfg.categories[k];
    const WeibullParams w(c.shape, c.scale);
    for (std::size_t i = 0; i < c.n; ++i) {
      const bool active = uniform01(rng) < c.q;
      const double t = active ? weibull_sample(w, rng) : 0.0;
      double horizon = cfg.window;
      if (cfg.signup_mode == SignupMode::UniformOverWindow) {
        // Signups happen on whole days: offset is uniform on 0, 1, ..., ceil(window) - 1.
        horizon = cfg.window - std::floor(std::ceil(cfg.window) * uniform01(rng));
      }
      const int category = static_cast<int>(k) + 1;
      if (active && t <= horizon) {
        obs.push_back({t, true, category});
      } else {
        obs.push_back({horizon, false, category});
      }
    }
  }
  return Dataset(std::move(obs), static_cast<int>(cfg.categories.size()), cfg.window);
}

double true_conversion_rate(const ScenarioConfig& cfg, std::size_t k, double horizon) {
  const auto& c = cfg.categories.at(k);
  return c.q * weibull_cdf(horizon, WeibullParams(c.shape, c.scale));
}

std::vector<CategorySummary> summarize_dataset(const Dataset& d) {
  const auto K = static_cast<std::size_t>(d.num_categories());
  std::vector<CategorySummary> out(K);
  std::vector<double> sum(K, 0.0);
  for (std::size_t k = 0; k < K; ++k) out[k].category = static_cast<int>(k) + 1;
  for (const auto& o : d.observations()) {
    auto& s = out[static_cast<std::size_t>(o.category - 1)];
    (o.event_observed ? s.n_event : s.n_censored)++;
    sum[static_cast<std::size_t>(o.category - 1)] += o.duration;
  }
  for (std::size_t k = 0; k < K; ++k) {
    const auto n = out[k].n_event + out[k].n_censored;
    out[k].mean_duration = n > 0 ? sum[k] / static_cast<double>(n) : 0.0;
  }
  std::vector<double> ss(K, 0.0);
  for (const auto& o : d.observations()) {
    const auto k = static_cast<std::size_t>(o.category - 1);
    const double dev = o.duration - out[k].mean_duration;
    ss[k] += dev * dev;
  }
  for (std::size_t k = 0; k < K; ++k) {
    const auto n = out[k].n_event + out[k].n_censored;
    out[k].sd_duration = n > 1 ? std::sqrt(ss[k] / static_cast<double>(n - 1)) : 0.0;
  }
  return out;
}

Dataset subsample_per_category(const Dataset& d, std::size_t max_per_category,
                               std::uint64_t seed) {
  if (max_per_category == 0) throw std::invalid_argument("max_per_category must be positive");
  const auto K = static_cast<std::size_t>(d.num_categories());
  std::vector<std::vector<std::size_t>> members(K);
  for (std::size_t i = 0; i < d.size(); ++i) {
    members[static_cast<std::size_t>(d.observations()[i].category - 1)].push_back(i);
  }
  Rng rng(seed);
  std::vector<char> keep(d.size(), 0);
  for (auto& m : members) {
    if (m.size() <= max_per_category) {
      for (auto i : m) keep[i] = 1;
      continue;
    }
    // Partial Fisher-Yates with the portable uniform draw.
    for (std::size_t j = 0; j < max_per_category; ++j) {
      const auto span = static_cast<double>(m.size() - j);
      const auto r = j + std::min(static_cast<std::size_t>(uniform01(rng) * span), m.size() - j - 1);
      std::swap(m[j], m[r]);
      keep[m[j]] = 1;
    }
  }
  std::vector<Observation> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (keep[i]) out.push_back(d.observations()[i]);
  }
  return Dataset(std::move(out), d.num_categories(), d.censor_horizon());
}

}  // namespace bwsurv
