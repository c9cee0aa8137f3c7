#pragma once

// Posterior summaries and derived quantities: MAP / sd / credible interval
// tables, risk ratios, time-bounded conversion rates and curve data.

#include "bwsurv/sampler.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bwsurv {

struct PosteriorSummary {
  std::string name;
  double map = 0.0;      // marginal KDE mode
  double sd = 0.0;
  double ci_low = 0.0;   // 2.5th percentile
  double ci_high = 0.0;  // 97.5th percentile
  std::optional<double> rhat;
  bool map_outside_ci = false;
};

/// Throws std::invalid_argument for fewer than 100 draws.
PosteriorSummary summarize(std::span<const double> draws, std::string name);

/// Pools all chains for the summary and attaches the split R-hat.
PosteriorSummary summarize(const std::vector<std::vector<double>>& chains, std::string name);

/// Summaries for every column of fitted chains.
std::vector<PosteriorSummary> summarize_chains(const std::vector<ChainDraws>& chains);

/// Linear-interpolated empirical quantile, `p` in [0, 1].
double quantile(std::span<const double> draws, double p);

/// Gaussian KDE (Silverman bandwidth) maximized on a 512-point grid over
/// the draw range.
double kde_mode(std::span<const double> draws);

struct DerivedQuantity {
  std::string name;
  std::vector<double> values;
  PosteriorSummary summary;
};

DerivedQuantity risk_ratio(std::span<const double> q_k, std::span<const double> q_ref,
                           std::string name = "risk_ratio");

/// Per draw q * F(horizon; shape, scale). A zero horizon gives zeros.
DerivedQuantity conversion_rate(std::span<const double> q, std::span<const double> shape,
                                std::span<const double> scale, double horizon,
                                std::string name = "conversion_rate");

struct CurveRow {
  int category;
  double t;
  double pdf;
  double cdf;
  double survival;
  double hazard;
};

struct CurveParams {
  int category;
  double shape;
  double scale;
};

/// Long-format curve table. Grid must be strictly increasing and
/// non-negative; at t = 0 the pdf and hazard take their limiting values.
std::vector<CurveRow> curves(std::span<const CurveParams> params, std::span<const double> grid);

/// 1 - F(window).
double residual_tail(double cdf_at_window);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;
};

/// Equal-width histogram of `draws`. When `cap` is given, the range is
/// [min, cap] and larger draws land in the last bin; the draws themselves
/// are untouched.
Histogram histogram(std::span<const double> draws, std::size_t bins,
                    std::optional<double> cap = std::nullopt);

}  // namespace bwsurv
