#include "bwsurv/diagnostics.hpp"

#include "bwsurv/dists.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace bwsurv {

namespace {

constexpr double kHighVariance = 0.4;

struct MeanVar {
  double mean;
  double var;  // unbiased
};

MeanVar mean_var(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, ss / static_cast<double>(x.size() - 1)};
}

}  // namespace

double split_rhat(std::span<const std::vector<double>> chains) {
  if (chains.size() < 2) throw DiagnosticError("split_rhat needs at least two chains");
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw DiagnosticError("split_rhat needs at least four draws per chain");
  const std::size_t half = n / 2;

  // Each chain contributes its first and last `half` draws; an odd middle
  // draw is dropped.
  std::vector<MeanVar> stats;
  stats.reserve(2 * chains.size());
  for (const auto& c : chains) {
    stats.push_back(mean_var(std::span<const double>(c.data(), half)));
    stats.push_back(mean_var(std::span<const double>(c.data() + (n - half), half)));
  }
  const auto m = static_cast<double>(stats.size());
  const auto N = static_cast<double>(half);
  double grand = 0.0, W = 0.0;
  for (const auto& s : stats) {
    grand += s.mean;
    W += s.var;
  }
  grand /= m;
  W /= m;
  double B = 0.0;
  for (const auto& s : stats) B += (s.mean - grand) * (s.mean - grand);
  B *= N / (m - 1.0);
  if (!(W > 0.0)) {
    if (B > 0.0) return std::numeric_limits<double>::infinity();
    throw DiagnosticError("split_rhat undefined: all draws are identical");
  }
  const double var_plus = (N - 1.0) / N * W + B / N;
  return std::sqrt(var_plus / W);
}

double split_rhat(const std::vector<ChainDraws>& chains, std::size_t column) {
  std::vector<std::vector<double>> cols;
  cols.reserve(chains.size());
  for (const auto& c : chains) cols.push_back(c.column(column));
  return split_rhat(std::span<const std::vector<double>>(cols));
}

CriterionReport waic(const PointwiseMatrix& ll) {
  if (ll.num_draws < 2) throw DiagnosticError("waic needs at least two draws");
  if (ll.values.size() != ll.num_draws * ll.num_observations) {
    throw std::invalid_argument("waic: matrix size does not match its dimensions");
  }
  CriterionReport r;
  r.per_observation.resize(ll.num_observations);
  const auto S = static_cast<double>(ll.num_draws);
  std::vector<double> col(ll.num_draws);
  for (std::size_t i = 0; i < ll.num_observations; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < ll.num_draws; ++s) {
      col[s] = ll(s, i);
      if (!std::isfinite(col[s])) throw DiagnosticError("waic: non-finite log-likelihood");
      mx = std::max(mx, col[s]);
    }
    double sum = 0.0;
    for (double v : col) sum += std::exp(v - mx);
    const double lppd_i = mx + std::log(sum / S);
    const double var_i = mean_var(col).var;
    r.lppd += lppd_i;
    r.p_waic += var_i;
    if (var_i > kHighVariance) ++r.high_variance_terms;
    r.per_observation[i] = -2.0 * (lppd_i - var_i);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

WaicAccumulator::WaicAccumulator(std::size_t n)
    : max_(n, -std::numeric_limits<double>::infinity()),
      scaled_sum_(n, 0.0),
      mean_(n, 0.0),
      m2_(n, 0.0) {}

void WaicAccumulator::add_draw(std::span<const double> ll) {
  if (ll.size() != max_.size()) throw std::invalid_argument("waic: pointwise length mismatch");
  ++num_draws_;
  const auto n = static_cast<double>(num_draws_);
  for (std::size_t i = 0; i < ll.size(); ++i) {
    const double v = ll[i];
    if (!std::isfinite(v)) throw DiagnosticError("waic: non-finite log-likelihood");
    if (v > max_[i]) {
      scaled_sum_[i] = scaled_sum_[i] * std::exp(max_[i] - v) + 1.0;
      max_[i] = v;
    } else {
      scaled_sum_[i] += std::exp(v - max_[i]);
    }
    const double delta = v - mean_[i];
    mean_[i] += delta / n;
    m2_[i] += delta * (v - mean_[i]);
  }
}

CriterionReport WaicAccumulator::report() const {
  if (num_draws_ < 2) throw DiagnosticError("waic needs at least two draws");
  CriterionReport r;
  r.per_observation.resize(max_.size());
  const auto S = static_cast<double>(num_draws_);
  for (std::size_t i = 0; i < max_.size(); ++i) {
    const double lppd_i = max_[i] + std::log(scaled_sum_[i] / S);
    const double var_i = m2_[i] / (S - 1.0);
    r.lppd += lppd_i;
    r.p_waic += var_i;
    if (var_i > kHighVariance) ++r.high_variance_terms;
    r.per_observation[i] = -2.0 * (lppd_i - var_i);
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

CriterionReport waic(const std::vector<ChainDraws>& chains, const ModelSpec& spec,
                     const Dataset& data) {
  WaicAccumulator acc(data.size());
  for (const auto& ch : chains) {
    if (ch.tempered) throw DiagnosticError("waic needs draws from an untempered run");
    for (std::size_t s = 0; s < ch.num_draws; ++s) {
      const auto params = unflatten(ch.row(s), spec.variant, data.num_categories());
      acc.add_draw(pointwise_log_likelihood(params, data, spec));
    }
  }
  return acc.report();
}

double wbic(const std::vector<ChainDraws>& chains) {
  if (chains.empty()) throw DiagnosticError("wbic needs draws");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& ch : chains) {
    if (!ch.tempered) throw DiagnosticError("wbic needs draws produced by run_tempered");
    for (double ll : ch.log_lik) {
      sum += ll;
      ++count;
    }
  }
  if (count == 0) throw DiagnosticError("wbic needs draws");
  return -sum / static_cast<double>(count);
}

}  // namespace bwsurv
