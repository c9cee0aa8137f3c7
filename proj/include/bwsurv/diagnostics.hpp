#pragma once

// Split-chain R-hat and the WAIC / WBIC information criteria.

#include "bwsurv/sampler.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bwsurv {

class DiagnosticError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Potential scale reduction over split halves of each chain (no rank
/// normalization). Throws DiagnosticError when fewer than two chains or
/// four draws per chain are given, or when every draw is identical.
double split_rhat(std::span<const std::vector<double>> chains);

/// R-hat of one named column across chains.
double split_rhat(const std::vector<ChainDraws>& chains, std::size_t column);

struct CriterionReport {
  double waic = 0.0;   // deviance scale: -2 (lppd - p_waic)
  double lppd = 0.0;
  double p_waic = 0.0;
  std::optional<double> wbic;  // expected negative log-likelihood under tempering
  std::vector<double> per_observation;  // -2 (lppd_i - var_i)
  std::size_t high_variance_terms = 0;  // observations with var_s(ll) > 0.4
};

/// Pointwise log-likelihood matrix, rows = draws, columns = observations.
struct PointwiseMatrix {
  std::size_t num_draws = 0;
  std::size_t num_observations = 0;
  std::vector<double> values;  // row-major

  double operator()(std::size_t s, std::size_t i) const {
    return values[s * num_observations + i];
  }
};

CriterionReport waic(const PointwiseMatrix& ll);

/// Streaming WAIC: feeds one draw's pointwise log-likelihood vector at a
/// time, so the draws x observations matrix never has to be stored.
class WaicAccumulator {
 public:
  explicit WaicAccumulator(std::size_t num_observations);

  void add_draw(std::span<const double> pointwise);
  std::size_t num_draws() const { return num_draws_; }
  CriterionReport report() const;

 private:
  std::size_t num_draws_ = 0;
  std::vector<double> max_;
  std::vector<double> scaled_sum_;  // sum exp(ll - max)
  std::vector<double> mean_;
  std::vector<double> m2_;
};

/// WAIC for fitted chains: recomputes the pointwise log-likelihood at every
/// draw. Chains must come from an untempered run of `spec` on `data`.
CriterionReport waic(const std::vector<ChainDraws>& chains, const ModelSpec& spec,
                     const Dataset& data);

/// Negative mean total log-likelihood over draws of a tempered run. Throws
/// DiagnosticError for draws not produced by run_tempered.
double wbic(const std::vector<ChainDraws>& tempered_chains);

}  // namespace bwsurv
