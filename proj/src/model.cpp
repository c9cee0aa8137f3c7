#include "bwsurv/model.hpp"

#include "bwsurv/dists.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bwsurv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// log S(t) floor applied before exponentiating inside the censored mixture term.
constexpr double kLogSurvivalFloor = -700.0;

bool is_pooled(ModelVariant v) { return v != ModelVariant::Hierarchical; }

int group_count(ModelVariant v, int num_categories) {
  return is_pooled(v) ? 1 : num_categories;
}

// Log-likelihood contribution of a single observation. `log_q` and
// `log1m_q` are ignored for the baseline model.
double observation_log_lik(double log_t, bool event, bool mixture, double log_q, double log1m_q,
                           double shape, double log_scale) {
  const double log_ratio = log_t - log_scale;
  const double z = std::exp(shape * log_ratio);
  if (event) {
    const double lp = std::log(shape) - log_scale + (shape - 1.0) * log_ratio - z;
    return mixture ? log_q + lp : lp;
  }
  if (!mixture) return -z;
  const double log_s = std::max(-z, kLogSurvivalFloor);
  return log_sum_exp(log1m_q, log_q + log_s);
}

// Parameters with a bounded uniform prior use a logit shifted by log(hi - lo):
// x = lo + w * sigmoid(u - log w). Well below the upper bound this is the
// shifted log x ~ lo + exp(u); near it the map bends instead of hitting a wall.
struct BoxPoint {
  double x;
  double log_jacobian;
  double dx_du;
  double d_log_jacobian;  // d/du of log_jacobian
};

BoxPoint to_box(double u, const Interval& b) {
  const double w = b.hi - b.lo;
  const double v = u - std::log(w);
  const double s = inv_logit(v);
  return {b.lo + w * s, std::log(w) + log_inv_logit(v) + log1m_inv_logit(v), w * s * (1.0 - s),
          1.0 - 2.0 * s};
}

double from_box(double x, const Interval& b) {
  const double w = b.hi - b.lo;
  return logit((x - b.lo) / w) + std::log(w);
}

// mu_lambda, sigma_lambda, mu_theta, sigma_theta
std::array<Interval, 4> hyper_boxes(const HyperConstants& h) {
  return {h.lambda_bounds, Interval{0.0, h.sigma_lambda_upper}, h.theta_bounds,
          Interval{0.0, h.sigma_theta_upper}};
}

struct GroupGradient {
  double value = 0.0;
  double d_logit_q = 0.0;
  double d_log_shape = 0.0;
  double d_log_scale = 0.0;
};

}  // namespace

std::string_view to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Baseline:
      return "baseline";
    case ModelVariant::Mixture:
      return "mixture";
    case ModelVariant::Hierarchical:
      return "hierarchical";
  }
  return "unknown";
}

ModelVariant parse_variant(std::string_view name) {
  if (name == "baseline") return ModelVariant::Baseline;
  if (name == "mixture") return ModelVariant::Mixture;
  if (name == "hierarchical") return ModelVariant::Hierarchical;
  throw std::invalid_argument("unknown model variant '" + std::string(name) + "'");
}

void HyperConstants::validate() const {
  auto check_interval = [](const Interval& b, const char* what) {
    if (!(b.lo >= 0.0) || !(b.lo < b.hi) || !std::isfinite(b.hi)) {
      throw std::invalid_argument(std::string(what) + ": need 0 <= lo < hi < inf");
    }
  };
  if (!(pareto_min > 0.0)) throw std::invalid_argument("pareto_min must be positive");
  if (!(pareto_exponent > 0.0)) throw std::invalid_argument("pareto_exponent must be positive");
  check_interval(lambda_bounds, "lambda_bounds");
  check_interval(theta_bounds, "theta_bounds");
  if (!(sigma_lambda_upper > 0.0) || !std::isfinite(sigma_lambda_upper)) {
    throw std::invalid_argument("sigma_lambda_upper must be positive");
  }
  if (!(sigma_theta_upper > 0.0) || !std::isfinite(sigma_theta_upper)) {
    throw std::invalid_argument("sigma_theta_upper must be positive");
  }
}

Dataset::Dataset(std::vector<Observation> observations, int num_categories,
                 double censor_horizon)
    : observations_(std::move(observations)),
      num_categories_(num_categories),
      censor_horizon_(censor_horizon) {
  if (num_categories_ < 1) throw std::invalid_argument("dataset needs at least one category");
  if (!(censor_horizon_ > 0.0)) throw std::invalid_argument("censor horizon must be positive");
  if (observations_.empty()) throw std::invalid_argument("dataset is empty");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_categories_), 0);
  for (std::size_t i = 0; i < observations_.size(); ++i) {
    const auto& o = observations_[i];
    if (!(o.duration > 0.0) || !std::isfinite(o.duration)) {
      throw std::invalid_argument("observation " + std::to_string(i) +
                                  ": duration must be positive");
    }
    if (o.category < 1 || o.category > num_categories_) {
      throw std::invalid_argument("observation " + std::to_string(i) + ": category " +
                                  std::to_string(o.category) + " outside 1.." +
                                  std::to_string(num_categories_));
    }
    if (!o.event_observed && o.duration > censor_horizon_) {
      throw std::invalid_argument("observation " + std::to_string(i) +
                                  ": censored duration exceeds the horizon");
    }
    ++counts[static_cast<std::size_t>(o.category - 1)];
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) {
      throw std::invalid_argument("category " + std::to_string(k + 1) + " has no observations");
    }
  }
}

std::vector<std::size_t> Dataset::category_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_categories_), 0);
  for (const auto& o : observations_) ++counts[static_cast<std::size_t>(o.category - 1)];
  return counts;
}

Dataset Dataset::restrict_to_category(int category) const {
  std::vector<Observation> subset;
  for (const auto& o : observations_) {
    if (o.category == category) subset.push_back({o.duration, o.event_observed, 1});
  }
  return Dataset(std::move(subset), 1, censor_horizon_);
}

ParamLayout::ParamLayout(ModelVariant variant, int num_categories)
    : variant_(variant), num_categories_(num_categories) {
  if (num_categories < 1) throw std::invalid_argument("layout needs at least one category");
  switch (variant) {
    case ModelVariant::Baseline:
      names_ = {"lambda", "theta"};
      break;
    case ModelVariant::Mixture:
      names_ = {"q", "lambda", "theta"};
      break;
    case ModelVariant::Hierarchical:
      for (const char* base : {"q", "lambda", "theta"}) {
        for (int k = 1; k <= num_categories; ++k) {
          names_.push_back(std::string(base) + "[" + std::to_string(k) + "]");
        }
      }
      names_.insert(names_.end(),
                    {"mu", "kappa", "mu_lambda", "sigma_lambda", "mu_theta", "sigma_theta"});
      break;
  }
}

std::size_t ParamLayout::index_of(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw std::out_of_range("no parameter named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names_.begin());
}

Transformed transform_to_constrained(std::span<const double> u, const ModelSpec& spec,
                                     int num_categories) {
  const ParamLayout layout(spec.variant, num_categories);
  if (u.size() != layout.size()) {
    throw std::invalid_argument("unconstrained vector length does not match the layout");
  }
  Transformed out;
  auto& p = out.params;
  p.variant = spec.variant;
  double& lj = out.log_jacobian;
  switch (spec.variant) {
    case ModelVariant::Baseline:
    case ModelVariant::Mixture: {
      const std::size_t off = spec.variant == ModelVariant::Mixture ? 1 : 0;
      const auto shape = to_box(u[off], spec.hyper.lambda_bounds);
      const auto scale = to_box(u[off + 1], spec.hyper.theta_bounds);
      p.categories = {{off ? inv_logit(u[0]) : 1.0, shape.x, scale.x}};
      lj = shape.log_jacobian + scale.log_jacobian;
      if (off) lj += log_inv_logit(u[0]) + log1m_inv_logit(u[0]);
      break;
    }
    case ModelVariant::Hierarchical: {
      const auto K = static_cast<std::size_t>(num_categories);
      p.categories.resize(K);
      for (std::size_t k = 0; k < K; ++k) {
        auto& c = p.categories[k];
        c.q = inv_logit(u[k]);
        c.shape = std::exp(u[K + k]);
        c.scale = std::exp(u[2 * K + k]);
        lj += log_inv_logit(u[k]) + log1m_inv_logit(u[k]) + u[K + k] + u[2 * K + k];
      }
      const std::size_t h = 3 * K;
      p.mu = inv_logit(u[h]);
      p.kappa = spec.hyper.pareto_min + std::exp(u[h + 1]);
      const auto boxes = hyper_boxes(spec.hyper);
      const auto ml = to_box(u[h + 2], boxes[0]);
      const auto sl = to_box(u[h + 3], boxes[1]);
      const auto mt = to_box(u[h + 4], boxes[2]);
      const auto st = to_box(u[h + 5], boxes[3]);
      p.mu_lambda = ml.x;
      p.sigma_lambda = sl.x;
      p.mu_theta = mt.x;
      p.sigma_theta = st.x;
      lj += log_inv_logit(u[h]) + log1m_inv_logit(u[h]) + u[h + 1] + ml.log_jacobian +
            sl.log_jacobian + mt.log_jacobian + st.log_jacobian;
      break;
    }
  }
  return out;
}

std::vector<double> transform_to_unconstrained(const ConstrainedParams& p, const ModelSpec& spec) {
  std::vector<double> u;
  switch (spec.variant) {
    case ModelVariant::Baseline:
    case ModelVariant::Mixture:
      if (spec.variant == ModelVariant::Mixture) u.push_back(logit(p.categories.at(0).q));
      u.push_back(from_box(p.categories.at(0).shape, spec.hyper.lambda_bounds));
      u.push_back(from_box(p.categories.at(0).scale, spec.hyper.theta_bounds));
      break;
    case ModelVariant::Hierarchical:
      for (const auto& c : p.categories) u.push_back(logit(c.q));
      for (const auto& c : p.categories) u.push_back(std::log(c.shape));
      for (const auto& c : p.categories) u.push_back(std::log(c.scale));
      u.push_back(logit(p.mu));
      u.push_back(std::log(p.kappa - spec.hyper.pareto_min));
      const auto boxes = hyper_boxes(spec.hyper);
      u.push_back(from_box(p.mu_lambda, boxes[0]));
      u.push_back(from_box(p.sigma_lambda, boxes[1]));
      u.push_back(from_box(p.mu_theta, boxes[2]));
      u.push_back(from_box(p.sigma_theta, boxes[3]));
      break;
  }
  return u;
}

std::vector<double> flatten(const ConstrainedParams& p) {
  std::vector<double> out;
  switch (p.variant) {
    case ModelVariant::Baseline:
      out = {p.categories.at(0).shape, p.categories.at(0).scale};
      break;
    case ModelVariant::Mixture:
      out = {p.categories.at(0).q, p.categories.at(0).shape, p.categories.at(0).scale};
      break;
    case ModelVariant::Hierarchical:
      for (const auto& c : p.categories) out.push_back(c.q);
      for (const auto& c : p.categories) out.push_back(c.shape);
      for (const auto& c : p.categories) out.push_back(c.scale);
      out.insert(out.end(),
                 {p.mu, p.kappa, p.mu_lambda, p.sigma_lambda, p.mu_theta, p.sigma_theta});
      break;
  }
  return out;
}

ConstrainedParams unflatten(std::span<const double> v, ModelVariant variant, int num_categories) {
  const ParamLayout layout(variant, num_categories);
  if (v.size() != layout.size()) {
    throw std::invalid_argument("constrained vector length does not match the layout");
  }
  ConstrainedParams p;
  p.variant = variant;
  switch (variant) {
    case ModelVariant::Baseline:
      p.categories = {{1.0, v[0], v[1]}};
      break;
    case ModelVariant::Mixture:
      p.categories = {{v[0], v[1], v[2]}};
      break;
    case ModelVariant::Hierarchical: {
      const auto K = static_cast<std::size_t>(num_categories);
      p.categories.resize(K);
      for (std::size_t k = 0; k < K; ++k) {
        p.categories[k] = {v[k], v[K + k], v[2 * K + k]};
      }
      const std::size_t h = 3 * K;
      p.mu = v[h];
      p.kappa = v[h + 1];
      p.mu_lambda = v[h + 2];
      p.sigma_lambda = v[h + 3];
      p.mu_theta = v[h + 4];
      p.sigma_theta = v[h + 5];
      break;
    }
  }
  return p;
}

namespace {

bool params_in_support(const ConstrainedParams& p) {
  for (const auto& c : p.categories) {
    if (!(c.shape > 0.0) || !(c.scale > 0.0) || !std::isfinite(c.shape) ||
        !std::isfinite(c.scale)) {
      return false;
    }
    if (p.variant == ModelVariant::Baseline) continue;
    if (!(c.q > 0.0 && c.q <= 1.0)) return false;
  }
  return true;
}

const CategoryParams& params_for(const ConstrainedParams& p, const Observation& o) {
  if (p.variant == ModelVariant::Hierarchical) {
    return p.categories.at(static_cast<std::size_t>(o.category - 1));
  }
  return p.categories.at(0);
}

void check_variant(const ConstrainedParams& p, const ModelSpec& spec, const Dataset& data) {
  if (p.variant != spec.variant) throw std::invalid_argument("parameters do not match model spec");
  if (p.variant == ModelVariant::Hierarchical &&
      p.categories.size() != static_cast<std::size_t>(data.num_categories())) {
    throw std::invalid_argument("hierarchical parameters do not match the number of categories");
  }
}

}  // namespace

std::vector<double> pointwise_log_likelihood(const ConstrainedParams& params, const Dataset& data,
                                             const ModelSpec& spec) {
  check_variant(params, spec, data);
  std::vector<double> out(data.size(), kNegInf);
  if (!params_in_support(params)) return out;
  const bool mixture = spec.variant != ModelVariant::Baseline;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& o = data.observations()[i];
    const auto& c = params_for(params, o);
    const double log_q = mixture ? std::log(c.q) : 0.0;
    const double log1m_q = mixture ? std::log1p(-c.q) : kNegInf;
    out[i] = observation_log_lik(std::log(o.duration), o.event_observed, mixture, log_q, log1m_q,
                                 c.shape, std::log(c.scale));
  }
  return out;
}

double log_likelihood(const ConstrainedParams& params, const Dataset& data,
                      const ModelSpec& spec) {
  const auto terms = pointwise_log_likelihood(params, data, spec);
  double total = 0.0;
  for (double t : terms) total += t;
  return total;
}

double log_prior(const ConstrainedParams& p, const ModelSpec& spec) {
  if (p.variant != spec.variant) throw std::invalid_argument("parameters do not match model spec");
  const auto& h = spec.hyper;
  double lp = 0.0;
  switch (p.variant) {
    case ModelVariant::Baseline:
    case ModelVariant::Mixture: {
      const auto& c = p.categories.at(0);
      if (p.variant == ModelVariant::Mixture) lp += uniform_log_pdf(c.q, 0.0, 1.0);
      lp += uniform_log_pdf(c.shape, h.lambda_bounds.lo, h.lambda_bounds.hi);
      lp += uniform_log_pdf(c.scale, h.theta_bounds.lo, h.theta_bounds.hi);
      return lp;
    }
    case ModelVariant::Hierarchical: {
      if (!(p.mu > 0.0 && p.mu < 1.0) || !(p.kappa > 0.0) || !(p.sigma_lambda > 0.0) ||
          !(p.sigma_theta > 0.0) || !std::isfinite(p.kappa)) {
        return kNegInf;
      }
      lp += uniform_log_pdf(p.mu, 0.0, 1.0);
      lp += pareto_log_pdf(p.kappa, ParetoParams(h.pareto_min, h.pareto_exponent));
      lp += uniform_log_pdf(p.mu_lambda, h.lambda_bounds.lo, h.lambda_bounds.hi);
      lp += uniform_log_pdf(p.sigma_lambda, 0.0, h.sigma_lambda_upper);
      lp += uniform_log_pdf(p.mu_theta, h.theta_bounds.lo, h.theta_bounds.hi);
      lp += uniform_log_pdf(p.sigma_theta, 0.0, h.sigma_theta_upper);
      if (lp == kNegInf || !(p.mu_lambda > 0.0) || !(p.mu_theta > 0.0)) return kNegInf;
      const BetaParams beta(p.beta_alpha(), p.beta_beta());
      const NormalParams shape_prior(p.mu_lambda, p.sigma_lambda);
      const NormalParams scale_prior(p.mu_theta, p.sigma_theta);
      for (const auto& c : p.categories) {
        lp += beta_log_pdf(c.q, beta);
        lp += positive_normal_log_pdf(c.shape, shape_prior);
        lp += positive_normal_log_pdf(c.scale, scale_prior);
      }
      return lp;
    }
  }
  return kNegInf;
}

LogPosterior log_posterior_and_grad(std::span<const double> unconstrained, const Dataset& data,
                                    const ModelSpec& spec, double temper) {
  const PosteriorModel model(spec, data);
  LogPosterior out;
  out.gradient.assign(model.dimension(), 0.0);
  out.value = model.log_density(unconstrained, temper, out.gradient);
  return out;
}

PosteriorModel::PosteriorModel(ModelSpec spec, const Dataset& data)
    : spec_(spec),
      layout_(spec.variant, data.num_categories()),
      num_categories_(data.num_categories()),
      num_observations_(data.size()),
      groups_(static_cast<std::size_t>(group_count(spec.variant, data.num_categories()))) {
  spec_.hyper.validate();
  const bool pooled = is_pooled(spec_.variant);
  std::vector<std::vector<double>> censored(groups_.size());
  for (const auto& o : data.observations()) {
    const auto k = pooled ? 0 : static_cast<std::size_t>(o.category - 1);
    if (o.event_observed) {
      groups_[k].event_log_t.push_back(std::log(o.duration));
    } else {
      censored[k].push_back(o.duration);
    }
  }
  // Censored subjects sharing a duration contribute identical terms; with a
  // common study end that is most of them.
  for (std::size_t k = 0; k < groups_.size(); ++k) {
    auto& c = censored[k];
    std::sort(c.begin(), c.end());
    for (std::size_t i = 0; i < c.size();) {
      std::size_t j = i;
      while (j < c.size() && c[j] == c[i]) ++j;
      groups_[k].censored_log_t.push_back(std::log(c[i]));
      groups_[k].censored_count.push_back(static_cast<double>(j - i));
      i = j;
    }
  }
}

namespace {

// Likelihood of one parameter group and its gradient with respect to
// (logit q, log shape, log scale).
template <typename Group>
GroupGradient group_gradient(const Group& data, bool mixture, double logit_q, double log_shape,
                             double log_scale) {
  const auto& event_log_t = data.event_log_t;
  const auto& censored_log_t = data.censored_log_t;
  const auto& censored_count = data.censored_count;
  GroupGradient g;
  const double shape = std::exp(log_shape);
  const double log_q = mixture ? log_inv_logit(logit_q) : 0.0;
  const double log1m_q = mixture ? log1m_inv_logit(logit_q) : kNegInf;

  double sum_z = 0.0;
  double sum_log_ratio = 0.0;
  double sum_log_ratio_z = 0.0;
  for (double log_t : event_log_t) {
    const double log_ratio = log_t - log_scale;
    const double z = std::exp(shape * log_ratio);
    sum_z += z;
    sum_log_ratio += log_ratio;
    sum_log_ratio_z += log_ratio * z;
  }
  const auto n_event = static_cast<double>(event_log_t.size());
  g.value = n_event * (log_shape - log_scale) + (shape - 1.0) * sum_log_ratio - sum_z;
  g.d_log_shape = n_event + shape * (sum_log_ratio - sum_log_ratio_z);
  g.d_log_scale = shape * (sum_z - n_event);
  if (mixture) {
    g.value += n_event * log_q;
    g.d_logit_q = n_event * std::exp(log1m_q);
  }

  if (!mixture) {
    for (std::size_t i = 0; i < censored_log_t.size(); ++i) {
      const double log_ratio = censored_log_t[i] - log_scale;
      const double z = censored_count[i] * std::exp(shape * log_ratio);
      g.value -= z;
      g.d_log_shape -= shape * log_ratio * z;
      g.d_log_scale += shape * z;
    }
    return g;
  }

  const double log_q_1mq = log_q + log1m_q;
  for (std::size_t i = 0; i < censored_log_t.size(); ++i) {
    const double n = censored_count[i];
    const double log_ratio = censored_log_t[i] - log_scale;
    const double z = std::exp(shape * log_ratio);
    const bool clamped = -z < kLogSurvivalFloor;
    const double log_s = clamped ? kLogSurvivalFloor : -z;
    const double ll = log_sum_exp(log1m_q, log_q + log_s);
    g.value += n * ll;
    g.d_logit_q += n * std::exp(log_q_1mq - ll) * std::expm1(log_s);
    if (!clamped) {
      const double w = n * std::exp(log_q + log_s - ll);  // P(active | censored)
      g.d_log_shape -= w * shape * log_ratio * z;
      g.d_log_scale += w * shape * z;
    }
  }
  return g;
}

// d/dx log Phi-normalized normal restricted to x > 0, for x, location, spread.
struct PositiveNormalGrad {
  double value;
  double d_x;
  double d_location;
  double d_spread;
};

PositiveNormalGrad positive_normal_grad(double x, double m, double s) {
  const double z = (x - m) / s;
  const double ratio = m / s;
  const double mills = std::exp(-0.5 * ratio * ratio - 0.5 * std::log(2.0 * std::numbers::pi) -
                                log_std_normal_cdf(ratio));
  PositiveNormalGrad g{};
  g.value = -0.5 * z * z - std::log(s) - 0.5 * std::log(2.0 * std::numbers::pi) - log_std_normal_cdf(ratio);
  g.d_x = -z / s;
  g.d_location = z / s - mills / s;
  g.d_spread = -1.0 / s + z * z / s + mills * m / (s * s);
  return g;
}

}  // namespace

double PosteriorModel::log_density(std::span<const double> u, double temper,
                                   std::span<double> grad) const {
  const std::size_t d = dimension();
  if (u.size() != d || grad.size() != d) {
    throw std::invalid_argument("log_density: vector length does not match the layout");
  }
  std::fill(grad.begin(), grad.end(), 0.0);
  const auto& h = spec_.hyper;
  double value = 0.0;

  auto fail = [&] {
    std::fill(grad.begin(), grad.end(), 0.0);
    return kNegInf;
  };

  if (is_pooled(spec_.variant)) {
    const bool mixture = spec_.variant == ModelVariant::Mixture;
    const std::size_t off = mixture ? 1 : 0;
    const double uq = mixture ? u[0] : 0.0;
    const auto shape = to_box(u[off], h.lambda_bounds);
    const auto scale = to_box(u[off + 1], h.theta_bounds);
    if (!(shape.x > 0.0) || !(scale.x > 0.0)) return fail();
    const auto g = group_gradient(groups_[0], mixture, uq, std::log(shape.x), std::log(scale.x));
    // Flat priors on the bounded boxes; mixture q has a Uniform(0, 1) prior.
    double lp = uniform_log_pdf(shape.x, h.lambda_bounds.lo, h.lambda_bounds.hi) +
                uniform_log_pdf(scale.x, h.theta_bounds.lo, h.theta_bounds.hi);
    double lj = shape.log_jacobian + scale.log_jacobian;
    if (mixture) lj += log_inv_logit(uq) + log1m_inv_logit(uq);
    value = temper * g.value + lp + lj;
    if (mixture) grad[0] = temper * g.d_logit_q + (1.0 - 2.0 * inv_logit(uq));
    grad[off] = temper * g.d_log_shape * shape.dx_du / shape.x + shape.d_log_jacobian;
    grad[off + 1] = temper * g.d_log_scale * scale.dx_du / scale.x + scale.d_log_jacobian;
  } else {
    const auto K = static_cast<std::size_t>(num_categories_);
    const std::size_t hb = 3 * K;
    const double mu = inv_logit(u[hb]);
    const double kappa = h.pareto_min + std::exp(u[hb + 1]);
    const auto boxes = hyper_boxes(h);
    const auto ml = to_box(u[hb + 2], boxes[0]);
    const auto sl = to_box(u[hb + 3], boxes[1]);
    const auto mt = to_box(u[hb + 4], boxes[2]);
    const auto st = to_box(u[hb + 5], boxes[3]);
    const double mu_lambda = ml.x;
    const double sigma_lambda = sl.x;
    const double mu_theta = mt.x;
    const double sigma_theta = st.x;

    double lp = pareto_log_pdf(kappa, ParetoParams(h.pareto_min, h.pareto_exponent)) +
                uniform_log_pdf(mu, 0.0, 1.0) +
                uniform_log_pdf(mu_lambda, h.lambda_bounds.lo, h.lambda_bounds.hi) +
                uniform_log_pdf(sigma_lambda, 0.0, h.sigma_lambda_upper) +
                uniform_log_pdf(mu_theta, h.theta_bounds.lo, h.theta_bounds.hi) +
                uniform_log_pdf(sigma_theta, 0.0, h.sigma_theta_upper);
    if (!std::isfinite(lp)) return fail();

    const double alpha = mu * kappa;
    const double beta = kappa * (1.0 - mu);
    const double log_beta_norm = std::lgamma(kappa) - std::lgamma(alpha) - std::lgamma(beta);
    const double psi_alpha = digamma(alpha);
    const double psi_beta = digamma(beta);
    const double psi_kappa = digamma(kappa);

    double d_mu = 0.0;     // d log p / d mu
    double d_kappa = -(h.pareto_exponent + 1.0) / kappa;
    double d_mu_lambda = 0.0, d_sigma_lambda = 0.0, d_mu_theta = 0.0, d_sigma_theta = 0.0;
    double ll = 0.0;
    double lj = log_inv_logit(u[hb]) + log1m_inv_logit(u[hb]) + u[hb + 1] + ml.log_jacobian +
                sl.log_jacobian + mt.log_jacobian + st.log_jacobian;

    for (std::size_t k = 0; k < K; ++k) {
      const double uq = u[k];
      const double a = u[K + k];
      const double b = u[2 * K + k];
      const double log_q = log_inv_logit(uq);
      const double log1m_q = log1m_inv_logit(uq);
      const double q = inv_logit(uq);

      const auto g = group_gradient(groups_[k], true, uq, a, b);
      ll += g.value;

      // Beta(mu * kappa, kappa * (1 - mu)) on q_k, plus the logit Jacobian.
      lp += log_beta_norm + (alpha - 1.0) * log_q + (beta - 1.0) * log1m_q;
      lj += log_q + log1m_q + a + b;
      grad[k] = temper * g.d_logit_q + alpha * (1.0 - q) - beta * q;
      d_mu += kappa * ((log_q - psi_alpha) - (log1m_q - psi_beta));
      d_kappa += psi_kappa + mu * (log_q - psi_alpha) + (1.0 - mu) * (log1m_q - psi_beta);

      const double shape = std::exp(a);
      const double scale = std::exp(b);
      const auto sp = positive_normal_grad(shape, mu_lambda, sigma_lambda);
      const auto tp = positive_normal_grad(scale, mu_theta, sigma_theta);
      lp += sp.value + tp.value;
      grad[K + k] = temper * g.d_log_shape + sp.d_x * shape + 1.0;
      grad[2 * K + k] = temper * g.d_log_scale + tp.d_x * scale + 1.0;
      d_mu_lambda += sp.d_location;
      d_sigma_lambda += sp.d_spread;
      d_mu_theta += tp.d_location;
      d_sigma_theta += tp.d_spread;
    }

    value = temper * ll + lp + lj;
    grad[hb] = d_mu * mu * (1.0 - mu) + (1.0 - 2.0 * mu);
    grad[hb + 1] = d_kappa * (kappa - h.pareto_min) + 1.0;
    grad[hb + 2] = d_mu_lambda * ml.dx_du + ml.d_log_jacobian;
    grad[hb + 3] = d_sigma_lambda * sl.dx_du + sl.d_log_jacobian;
    grad[hb + 4] = d_mu_theta * mt.dx_du + mt.d_log_jacobian;
    grad[hb + 5] = d_sigma_theta * st.dx_du + st.d_log_jacobian;
  }

  if (!std::isfinite(value)) return fail();
  for (double gi : grad) {
    if (!std::isfinite(gi)) return fail();
  }
  return value;
}

double PosteriorModel::log_likelihood(std::span<const double> u) const {
  if (u.size() != dimension()) throw std::invalid_argument("log_likelihood: bad vector length");
  if (is_pooled(spec_.variant)) {
    const bool mixture = spec_.variant == ModelVariant::Mixture;
    const std::size_t off = mixture ? 1 : 0;
    const double shape = to_box(u[off], spec_.hyper.lambda_bounds).x;
    const double scale = to_box(u[off + 1], spec_.hyper.theta_bounds).x;
    return group_gradient(groups_[0], mixture, mixture ? u[0] : 0.0, std::log(shape),
                          std::log(scale))
        .value;
  }
  const auto K = static_cast<std::size_t>(num_categories_);
  double ll = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    ll += group_gradient(groups_[k], true, u[k], u[K + k], u[2 * K + k])
              .value;
  }
  return ll;
}

void PosteriorModel::write_constrained(std::span<const double> x, std::span<double> out) const {
  const auto flat = flatten(transform_to_constrained(x, spec_, num_categories_).params);
  if (out.size() != flat.size()) throw std::invalid_argument("write_constrained: bad output size");
  std::copy(flat.begin(), flat.end(), out.begin());
}

}  // namespace bwsurv
