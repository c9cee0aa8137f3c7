#pragma once

// No-U-Turn Hamiltonian Monte Carlo with multinomial trajectory sampling,
// dual-averaging step size adaptation and windowed diagonal metric
// estimation.

#include "bwsurv/dists.hpp"
#include "bwsurv/model.hpp"
#include "bwsurv/target.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bwsurv {

struct SamplerConfig {
  int num_chains = 4;
  int warmup = 1000;
  int samples_per_chain = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  double temper = 1.0;
  /// Energy error above which a transition is flagged divergent.
  double max_energy_error = 1000.0;
  /// Abort when more than this fraction of post-warmup transitions diverge.
  double max_divergent_fraction = 0.25;
  /// Run chains on separate threads. Results do not depend on this flag.
  bool parallel = true;

  void validate() const;
};

/// Post-warmup draws of one chain, in constrained space.
struct ChainDraws {
  std::vector<std::string> names;
  std::size_t num_draws = 0;
  std::vector<double> draws;    // row-major, num_draws x names.size()
  std::vector<double> lp;       // log density (tempered, with Jacobian)
  std::vector<double> log_lik;  // untempered total log-likelihood per draw
  std::vector<int> tree_depth;
  std::vector<char> divergent;  // per draw
  int divergences = 0;
  double accept_stat = 0.0;  // mean over post-warmup transitions
  double step_size = 0.0;
  std::vector<double> inv_metric;
  double temper = 1.0;
  bool tempered = false;  // produced by run_tempered

  std::size_t dim() const { return names.size(); }
  std::span<const double> row(std::size_t i) const {
    return {draws.data() + i * dim(), dim()};
  }
  std::vector<double> column(std::size_t j) const;
};

class SamplerFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One NUTS transition engine bound to a target; exposed for testing the
/// integrator and trajectory logic.
class NutsSampler {
 public:
  NutsSampler(const LogDensity& target, double temper, int max_tree_depth,
              double max_energy_error, std::uint64_t seed);

  struct Transition {
    double log_density;
    double accept_stat;
    int tree_depth;
    int n_leapfrog;
    bool divergent;
  };

  void set_position(std::span<const double> x);
  std::span<const double> position() const { return position_; }
  double log_density() const { return log_density_; }

  void set_step_size(double eps) { step_size_ = eps; }
  double step_size() const { return step_size_; }
  void set_inv_metric(std::vector<double> inv_metric);
  const std::vector<double>& inv_metric() const { return inv_metric_; }

  Transition transition();

  /// Stan-style heuristic: double or halve the step until a single
  /// leapfrog step's acceptance crosses 0.8.
  void initialize_step_size();

  /// One leapfrog step of size `eps` from (q, p), updating both in place.
  /// Returns the new log density; `grad` holds its gradient.
  double leapfrog(std::vector<double>& q, std::vector<double>& p, std::vector<double>& grad,
                  double eps) const;
  double hamiltonian(double log_density, std::span<const double> p) const;

  Rng& rng() { return rng_; }

 private:
  struct State {
    std::vector<double> q;
    std::vector<double> p;
    std::vector<double> grad;
    double log_density = 0.0;
  };

  bool build_tree(int depth, State& z, State& z_propose, std::vector<double>& p_sharp_beg,
                  std::vector<double>& p_sharp_end, std::vector<double>& rho,
                  std::vector<double>& p_beg, std::vector<double>& p_end, double H0, double sign,
                  int& n_leapfrog, double& log_sum_weight, double& sum_metro_prob,
                  bool& divergent);
  void sharp(std::span<const double> p, std::vector<double>& out) const;
  void sample_momentum(std::vector<double>& p);

  const LogDensity& target_;
  double temper_;
  int max_tree_depth_;
  double max_energy_error_;
  Rng rng_;
  std::vector<double> position_;
  std::vector<double> gradient_;
  double log_density_ = 0.0;
  double step_size_ = 1.0;
  std::vector<double> inv_metric_;
};

/// Dual averaging of log step size toward a target acceptance statistic.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double target_accept) : delta_(target_accept) {}
  void restart(double initial_step);
  double learn(double accept_stat);
  double final_step() const;

 private:
  double delta_;
  double mu_ = 0.0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  int counter_ = 0;
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
};

/// Warmup windows for metric estimation: an initial fast buffer, a series
/// of doubling slow windows, and a terminal fast buffer. The last slow
/// window is stretched to the terminal buffer, so for 1000 warmup
/// iterations the final metric comes from roughly the second half.
class WarmupSchedule {
 public:
  explicit WarmupSchedule(int warmup);

  bool in_window(int iteration) const;
  bool ends_window(int iteration) const;
  const std::vector<int>& window_ends() const { return ends_; }

 private:
  int warmup_;
  int init_buffer_ = 0;
  int term_buffer_ = 0;
  std::vector<int> ends_;
};

std::vector<ChainDraws> run_chains(const LogDensity& target, const SamplerConfig& cfg);
std::vector<ChainDraws> run_chains(const ModelSpec& spec, const Dataset& data,
                                   const SamplerConfig& cfg);

/// 1 / log(n); requires n >= 3.
double wbic_temperature(std::size_t n);

/// Runs with temper = 1 / log(n) and tags the draws for WBIC.
std::vector<ChainDraws> run_tempered(const LogDensity& target, const SamplerConfig& cfg);
std::vector<ChainDraws> run_tempered(const ModelSpec& spec, const Dataset& data,
                                     const SamplerConfig& cfg);

/// Writes draws as CSV: chain,draw,lp__,log_lik__,<names...>.
void write_draws_csv(std::ostream& os, const std::vector<ChainDraws>& chains);
std::vector<ChainDraws> read_draws_csv(std::istream& is);

}  // namespace bwsurv
