#pragma once

// Synthetic right-censored data from the Bernoulli-Weibull generative
// process: latent activation, Weibull event time, censoring at the end of
// the observation window.

#include "bwsurv/model.hpp"

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace bwsurv {

enum class SignupMode { AllAtStart, UniformOverWindow };

std::string_view to_string(SignupMode m);
SignupMode parse_signup_mode(std::string_view name);

struct CategoryScenario {
  std::size_t n = 0;
  double q = 0.0;  // true active rate
  double shape = 1.0;
  double scale = 1.0;
};

struct ScenarioConfig {
  std::vector<CategoryScenario> categories;
  double window = 180.0;  // days
  SignupMode signup_mode = SignupMode::UniformOverWindow;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Five categories sized like the reference service's user base, with rare
/// activation (q between 0.004 and 0.039) and Weibull shape near 2, scale
/// near 100 days. Category 2 activates 2.6 times as often as category 1.
ScenarioConfig default_scenario(std::uint64_t seed = 1);

Dataset generate(const ScenarioConfig& cfg);

/// Closed-form probability that a subject of category `k` (0-based) has an
/// observed event within `horizon` days: q * F(horizon).
double true_conversion_rate(const ScenarioConfig& cfg, std::size_t k, double horizon);

struct CategorySummary {
  int category = 1;
  std::size_t n_event = 0;
  std::size_t n_censored = 0;
  double mean_duration = 0.0;
  double sd_duration = 0.0;
};

std::vector<CategorySummary> summarize_dataset(const Dataset& d);

/// Keeps at most `max_per_category` observations of every category, chosen
/// uniformly without replacement; relative order is preserved.
Dataset subsample_per_category(const Dataset& d, std::size_t max_per_category, std::uint64_t seed);

}  // namespace bwsurv
