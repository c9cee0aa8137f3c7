#include "bwsurv/posterior.hpp"

#include "bwsurv/diagnostics.hpp"
#include "bwsurv/dists.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace bwsurv {

namespace {

constexpr std::size_t kMinDraws = 100;
constexpr std::size_t kKdeGrid = 512;

double sample_sd(std::span<const double> x) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double quantile_sorted(const std::vector<double>& sorted, double p) {
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

double quantile(std::span<const double> draws, double p) {
  if (draws.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("quantile level must lie in [0, 1]");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  return quantile_sorted(sorted, p);
}

double kde_mode(std::span<const double> draws) {
  if (draws.empty()) throw std::invalid_argument("kde_mode of an empty sample");
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (!(hi > lo)) return lo;

  const auto n = static_cast<double>(sorted.size());
  const double sd = sample_sd(sorted);
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  double spread = std::min(sd, iqr / 1.34);
  if (!(spread > 0.0)) spread = sd;
  const double bw = 0.9 * spread * std::pow(n, -0.2);

  // Kernel mass beyond 8 bandwidths is below 1e-14; sum only the draws
  // inside that window around each grid point.
  const double reach = 8.0 * bw;
  double best_x = lo;
  double best_density = -1.0;
  for (std::size_t g = 0; g < kKdeGrid; ++g) {
    const double x = lo + (hi - lo) * static_cast<double>(g) / static_cast<double>(kKdeGrid - 1);
    auto first = std::lower_bound(sorted.begin(), sorted.end(), x - reach);
    auto last = std::upper_bound(first, sorted.end(), x + reach);
    double density = 0.0;
    for (auto it = first; it != last; ++it) {
      const double z = (x - *it) / bw;
      density += std::exp(-0.5 * z * z);
    }
    if (density > best_density) {
      best_density = density;
      best_x = x;
    }
  }
  return best_x;
}

PosteriorSummary summarize(std::span<const double> draws, std::string name) {
  if (draws.size() < kMinDraws) {
    throw std::invalid_argument("summarize '" + name + "': need at least " +
                                std::to_string(kMinDraws) + " draws, got " +
                                std::to_string(draws.size()));
  }
  std::vector<double> sorted(draws.begin(), draws.end());
  std::sort(sorted.begin(), sorted.end());
  PosteriorSummary s;
  s.name = std::move(name);
  s.sd = sample_sd(sorted);
  s.ci_low = quantile_sorted(sorted, 0.025);
  s.ci_high = quantile_sorted(sorted, 0.975);
  s.map = kde_mode(sorted);
  s.map_outside_ci = s.map < s.ci_low || s.map > s.ci_high;
  return s;
}

PosteriorSummary summarize(const std::vector<std::vector<double>>& chains, std::string name) {
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  auto s = summarize(pooled, std::move(name));
  if (chains.size() >= 2) {
    try {
      s.rhat = split_rhat(std::span<const std::vector<double>>(chains));
    } catch (const DiagnosticError&) {
      s.rhat.reset();
    }
  }
  return s;
}

std::vector<PosteriorSummary> summarize_chains(const std::vector<ChainDraws>& chains) {
  std::vector<PosteriorSummary> out;
  if (chains.empty()) return out;
  const auto& names = chains.front().names;
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<std::vector<double>> cols;
    for (const auto& c : chains) cols.push_back(c.column(j));
    out.push_back(summarize(cols, names[j]));
  }
  return out;
}

DerivedQuantity risk_ratio(std::span<const double> q_k, std::span<const double> q_ref,
                           std::string name) {
  if (q_k.size() != q_ref.size()) throw std::invalid_argument("risk_ratio: draw counts differ");
  DerivedQuantity out;
  out.name = std::move(name);
  out.values.resize(q_k.size());
  for (std::size_t i = 0; i < q_k.size(); ++i) {
    if (!(q_ref[i] > 0.0) || !(q_k[i] >= 0.0)) {
      throw std::domain_error("risk_ratio: active rates must be positive");
    }
    out.values[i] = q_k[i] / q_ref[i];
  }
  out.summary = summarize(out.values, out.name);
  return out;
}

DerivedQuantity conversion_rate(std::span<const double> q, std::span<const double> shape,
                                std::span<const double> scale, double horizon, std::string name) {
  if (q.size() != shape.size() || q.size() != scale.size()) {
    throw std::invalid_argument("conversion_rate: draw counts differ");
  }
  if (!(horizon >= 0.0)) throw std::domain_error("conversion_rate: horizon must be non-negative");
  DerivedQuantity out;
  out.name = std::move(name);
  out.values.resize(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    out.values[i] = q[i] * weibull_cdf(horizon, WeibullParams(shape[i], scale[i]));
  }
  out.summary = summarize(out.values, out.name);
  return out;
}

std::vector<CurveRow> curves(std::span<const CurveParams> params, std::span<const double> grid) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || (i > 0 && !(grid[i] > grid[i - 1]))) {
      throw std::invalid_argument("curves: grid must be non-negative and strictly increasing");
    }
  }
  std::vector<CurveRow> rows;
  rows.reserve(params.size() * grid.size());
  for (const auto& cp : params) {
    const WeibullParams w(cp.shape, cp.scale);
    for (double t : grid) {
      CurveRow r{cp.category, t, 0.0, weibull_cdf(t, w), weibull_survival(t, w), 0.0};
      if (t > 0.0) {
        r.hazard = weibull_hazard(t, w);
        r.pdf = r.hazard * r.survival;
      } else {
        // Limits at zero: hazard and pdf are 0, 1/scale or +inf for shape >, =, < 1.
        const double h0 = w.shape() > 1.0 ? 0.0
                          : w.shape() == 1.0 ? 1.0 / w.scale()
                                             : std::numeric_limits<double>::infinity();
        r.hazard = h0;
        r.pdf = h0;
      }
      rows.push_back(r);
    }
  }
  return rows;
}

double residual_tail(double cdf_at_window) {
  if (!(cdf_at_window >= 0.0 && cdf_at_window <= 1.0)) {
    throw std::domain_error("residual_tail: CDF value must lie in [0, 1]");
  }
  return 1.0 - cdf_at_window;
}

Histogram histogram(std::span<const double> draws, std::size_t bins, std::optional<double> cap) {
  if (draws.empty() || bins == 0) throw std::invalid_argument("histogram: empty input");
  const auto [mn, mx] = std::minmax_element(draws.begin(), draws.end());
  double lo = *mn;
  double hi = cap ? std::max(*cap, lo) : *mx;
  if (!(hi > lo)) hi = lo + 1.0;
  Histogram h;
  h.edges.resize(bins + 1);
  h.counts.assign(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  h.edges[bins] = hi;
  for (double v : draws) {
    auto b = static_cast<std::size_t>(std::max(0.0, std::floor((v - lo) / width)));
    h.counts[std::min(b, bins - 1)]++;
  }
  return h;
}

}  // namespace bwsurv
