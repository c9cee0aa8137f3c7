#pragma once

// Baseline Weibull, Bernoulli-Weibull mixture and hierarchical mixture
// models: parameter layout, unconstrained bijection, likelihood, priors and
// the log posterior with its analytic gradient.

#include "bwsurv/target.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bwsurv {

enum class ModelVariant { Baseline, Mixture, Hierarchical };

std::string_view to_string(ModelVariant v);
/// Accepts "baseline", "mixture", "hierarchical". Throws std::invalid_argument.
ModelVariant parse_variant(std::string_view name);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Fixed constants of the prior. Uniform priors use the closed bounds.
struct HyperConstants {
  double pareto_min = 0.1;
  double pareto_exponent = 1.5;
  Interval lambda_bounds{0.0, 20.0};
  Interval theta_bounds{0.0, 5000.0};
  double sigma_lambda_upper = 50.0;
  double sigma_theta_upper = 2000.0;

  void validate() const;
};

struct ModelSpec {
  ModelVariant variant = ModelVariant::Hierarchical;
  HyperConstants hyper{};
};

struct Observation {
  double duration = 0.0;        // days
  bool event_observed = false;  // true contributes the density, false the survival term
  int category = 1;             // 1..K
};

class Dataset {
 public:
  /// Validates: durations positive, categories in 1..K each with at least
  /// one observation, censored durations within the horizon.
  Dataset(std::vector<Observation> observations, int num_categories, double censor_horizon);

  const std::vector<Observation>& observations() const { return observations_; }
  int num_categories() const { return num_categories_; }
  double censor_horizon() const { return censor_horizon_; }
  std::size_t size() const { return observations_.size(); }

  std::vector<std::size_t> category_counts() const;
  /// Observations of one category, in dataset order.
  Dataset restrict_to_category(int category) const;

 private:
  std::vector<Observation> observations_;
  int num_categories_;
  double censor_horizon_;
};

struct CategoryParams {
  double q = 1.0;  // active rate; fixed at 1 for the baseline model
  double shape = 1.0;
  double scale = 1.0;
};

/// Model parameters in their natural (constrained) space. Baseline and
/// mixture carry a single entry in `categories`; the hierarchical model
/// carries one per category plus the population-level quantities.
struct ConstrainedParams {
  ModelVariant variant = ModelVariant::Mixture;
  std::vector<CategoryParams> categories;
  double mu = 0.5;
  double kappa = 1.0;
  double mu_lambda = 1.0;
  double sigma_lambda = 1.0;
  double mu_theta = 1.0;
  double sigma_theta = 1.0;

  double beta_alpha() const { return mu * kappa; }
  double beta_beta() const { return kappa * (1.0 - mu); }
};

/// Index map between a model variant and its flat parameter vectors. The
/// unconstrained and constrained vectors share the same ordering.
class ParamLayout {
 public:
  ParamLayout(ModelVariant variant, int num_categories);

  ModelVariant variant() const { return variant_; }
  int num_categories() const { return num_categories_; }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t index_of(std::string_view name) const;

 private:
  ModelVariant variant_;
  int num_categories_;
  std::vector<std::string> names_;
};

struct Transformed {
  ConstrainedParams params;
  double log_jacobian = 0.0;
};

Transformed transform_to_constrained(std::span<const double> unconstrained,
                                     const ModelSpec& spec, int num_categories);
std::vector<double> transform_to_unconstrained(const ConstrainedParams& params,
                                               const ModelSpec& spec);

std::vector<double> flatten(const ConstrainedParams& params);
ConstrainedParams unflatten(std::span<const double> values, ModelVariant variant,
                            int num_categories);

double log_likelihood(const ConstrainedParams& params, const Dataset& data,
                      const ModelSpec& spec);
std::vector<double> pointwise_log_likelihood(const ConstrainedParams& params,
                                             const Dataset& data, const ModelSpec& spec);
double log_prior(const ConstrainedParams& params, const ModelSpec& spec);

struct LogPosterior {
  double value = 0.0;
  std::vector<double> gradient;
};

LogPosterior log_posterior_and_grad(std::span<const double> unconstrained, const Dataset& data,
                                    const ModelSpec& spec, double temper = 1.0);

/// Preprocessed posterior for repeated evaluation by the sampler. Holds a
/// copy of the data grouped by category; evaluation is const and safe to
/// call from several threads.
class PosteriorModel final : public LogDensity {
 public:
  PosteriorModel(ModelSpec spec, const Dataset& data);

  const ModelSpec& spec() const { return spec_; }
  const ParamLayout& layout() const { return layout_; }
  int num_categories() const { return num_categories_; }

  std::size_t dimension() const override { return layout_.size(); }
  double log_density(std::span<const double> x, double temper,
                     std::span<double> grad) const override;
  double log_likelihood(std::span<const double> x) const override;
  std::size_t num_observations() const override { return num_observations_; }
  std::vector<std::string> output_names() const override { return layout_.names(); }
  void write_constrained(std::span<const double> x, std::span<double> out) const override;

 private:
  struct Group {
    std::vector<double> event_log_t;
    std::vector<double> censored_log_t;  // distinct censored durations
    std::vector<double> censored_count;  // multiplicity of each
  };

  ModelSpec spec_;
  ParamLayout layout_;
  int num_categories_;
  std::size_t num_observations_;
  std::vector<Group> groups_;  // one per category, or a single pooled group
};

}  // namespace bwsurv
