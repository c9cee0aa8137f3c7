#include "bwsurv/sampler.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

namespace bwsurv {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr int kMaxInitAttempts = 100;
constexpr double kInitRadius = 2.0;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t chain_seed(std::uint64_t seed, int chain) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(chain) + 1));
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool compute_criterion(std::span<const double> p_sharp_minus, std::span<const double> p_sharp_plus,
                       std::span<const double> rho) {
  return dot(p_sharp_plus, rho) > 0.0 && dot(p_sharp_minus, rho) > 0.0;
}

std::vector<double> add(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

// Running mean and variance per coordinate.
class VarianceEstimator {
 public:
  explicit VarianceEstimator(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  void add(std::span<const double> x) {
    ++n_;
    for (std::size_t i = 0; i < mean_.size(); ++i) {
      const double delta = x[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(n_);
      m2_[i] += delta * (x[i] - mean_[i]);
    }
  }

  std::size_t count() const { return n_; }

  // Sample variance shrunk toward 1e-3, as Stan regularizes its diagonal metric.
  std::vector<double> regularized_variance() const {
    const auto n = static_cast<double>(n_);
    std::vector<double> var(mean_.size());
    for (std::size_t i = 0; i < var.size(); ++i) {
      const double v = n > 1 ? m2_[i] / (n - 1.0) : 1.0;
      var[i] = (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0));
    }
    return var;
  }

  void restart() {
    n_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

}  // namespace

void SamplerConfig::validate() const {
  if (num_chains < 1) throw std::invalid_argument("num_chains must be positive");
  if (warmup < 0) throw std::invalid_argument("warmup must be non-negative");
  if (samples_per_chain < 1) throw std::invalid_argument("samples_per_chain must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0)) {
    throw std::invalid_argument("target_accept must lie in (0, 1)");
  }
  if (max_tree_depth < 1) throw std::invalid_argument("max_tree_depth must be positive");
  if (!(temper > 0.0 && temper <= 1.0)) throw std::invalid_argument("temper must lie in (0, 1]");
}

std::vector<double> ChainDraws::column(std::size_t j) const {
  std::vector<double> out(num_draws);
  for (std::size_t i = 0; i < num_draws; ++i) out[i] = draws[i * dim() + j];
  return out;
}

NutsSampler::NutsSampler(const LogDensity& target, double temper, int max_tree_depth,
                         double max_energy_error, std::uint64_t seed)
    : target_(target),
      temper_(temper),
      max_tree_depth_(max_tree_depth),
      max_energy_error_(max_energy_error),
      rng_(seed),
      position_(target.dimension(), 0.0),
      gradient_(target.dimension(), 0.0),
      inv_metric_(target.dimension(), 1.0) {}

void NutsSampler::set_position(std::span<const double> x) {
  position_.assign(x.begin(), x.end());
  log_density_ = target_.log_density(position_, temper_, gradient_);
}

void NutsSampler::set_inv_metric(std::vector<double> inv_metric) {
  if (inv_metric.size() != position_.size()) throw std::invalid_argument("metric size mismatch");
  inv_metric_ = std::move(inv_metric);
}

void NutsSampler::sharp(std::span<const double> p, std::vector<double>& out) const {
  out.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = inv_metric_[i] * p[i];
}

void NutsSampler::sample_momentum(std::vector<double>& p) {
  p.resize(position_.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = standard_normal(rng_) / std::sqrt(inv_metric_[i]);
  }
}

double NutsSampler::hamiltonian(double log_density, std::span<const double> p) const {
  double kinetic = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kinetic += inv_metric_[i] * p[i] * p[i];
  return -log_density + 0.5 * kinetic;
}

double NutsSampler::leapfrog(std::vector<double>& q, std::vector<double>& p,
                             std::vector<double>& grad, double eps) const {
  const std::size_t d = q.size();
  for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * eps * grad[i];
  for (std::size_t i = 0; i < d; ++i) q[i] += eps * inv_metric_[i] * p[i];
  const double lp = target_.log_density(q, temper_, grad);
  for (std::size_t i = 0; i < d; ++i) p[i] += 0.5 * eps * grad[i];
  return lp;
}

void NutsSampler::initialize_step_size() {
  if (step_size_ == 0.0 || step_size_ > 1e7 || std::isnan(step_size_)) return;
  const double log_target = std::log(0.8);

  auto trial = [&] {
    State z{position_, {}, gradient_, log_density_};
    sample_momentum(z.p);
    const double H0 = hamiltonian(z.log_density, z.p);
    z.log_density = leapfrog(z.q, z.p, z.grad, step_size_);
    double h = hamiltonian(z.log_density, z.p);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    return H0 - h;
  };

  double delta_h = trial();
  const int direction = delta_h > log_target ? 1 : -1;
  for (int iter = 0; iter < 200; ++iter) {
    delta_h = trial();
    if (direction == 1 && !(delta_h > log_target)) break;
    if (direction == -1 && !(delta_h < log_target)) break;
    step_size_ = direction == 1 ? step_size_ * 2.0 : step_size_ * 0.5;
    if (step_size_ > 1e7) throw SamplerFailure("step size diverged during initialization");
    if (step_size_ == 0.0) throw SamplerFailure("step size collapsed to zero; posterior is ill-posed");
  }
}

bool NutsSampler::build_tree(int depth, State& z, State& z_propose,
                             std::vector<double>& p_sharp_beg, std::vector<double>& p_sharp_end,
                             std::vector<double>& rho, std::vector<double>& p_beg,
                             std::vector<double>& p_end, double H0, double sign, int& n_leapfrog,
                             double& log_sum_weight, double& sum_metro_prob, bool& divergent) {
  if (depth == 0) {
    z.log_density = leapfrog(z.q, z.p, z.grad, sign * step_size_);
    ++n_leapfrog;
    double h = hamiltonian(z.log_density, z.p);
    if (std::isnan(h)) h = std::numeric_limits<double>::infinity();
    if (h - H0 > max_energy_error_) divergent = true;
    log_sum_weight = log_sum_exp(log_sum_weight, H0 - h);
    sum_metro_prob += H0 - h > 0.0 ? 1.0 : std::exp(H0 - h);
    z_propose = z;
    sharp(z.p, p_sharp_beg);
    p_sharp_end = p_sharp_beg;
    for (std::size_t i = 0; i < rho.size(); ++i) rho[i] += z.p[i];
    p_beg = z.p;
    p_end = p_beg;
    return !divergent;
  }

  const std::size_t d = rho.size();

  double log_sum_weight_init = kNegInf;
  std::vector<double> p_init_end(d), p_sharp_init_end(d), rho_init(d, 0.0);
  if (!build_tree(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
                  p_init_end, H0, sign, n_leapfrog, log_sum_weight_init, sum_metro_prob,
                  divergent)) {
    return false;
  }

  State z_propose_final = z;
  double log_sum_weight_final = kNegInf;
  std::vector<double> p_final_beg(d), p_sharp_final_beg(d), rho_final(d, 0.0);
  if (!build_tree(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
                  p_final_beg, p_end, H0, sign, n_leapfrog, log_sum_weight_final,
                  sum_metro_prob, divergent)) {
    return false;
  }

  const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
  log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

  if (log_sum_weight_final > log_sum_weight_subtree) {
    z_propose = z_propose_final;
  } else if (uniform01(rng_) < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
    z_propose = z_propose_final;
  }

  const auto rho_subtree = add(rho_init, rho_final);
  for (std::size_t i = 0; i < d; ++i) rho[i] += rho_subtree[i];

  bool persist = compute_criterion(p_sharp_beg, p_sharp_end, rho_subtree);
  persist = persist && compute_criterion(p_sharp_beg, p_sharp_final_beg, add(rho_init, p_final_beg));
  persist = persist && compute_criterion(p_sharp_init_end, p_sharp_end, add(rho_final, p_init_end));
  return persist;
}

NutsSampler::Transition NutsSampler::transition() {
  const std::size_t d = position_.size();
  State z{position_, {}, gradient_, log_density_};
  sample_momentum(z.p);

  State z_fwd = z;
  State z_bck = z;
  State z_sample = z;
  State z_propose = z;

  std::vector<double> p_sharp_init;
  sharp(z.p, p_sharp_init);
  std::vector<double> p_fwd_fwd = z.p, p_sharp_fwd_fwd = p_sharp_init;
  std::vector<double> p_fwd_bck = z.p, p_sharp_fwd_bck = p_sharp_init;
  std::vector<double> p_bck_fwd = z.p, p_sharp_bck_fwd = p_sharp_init;
  std::vector<double> p_bck_bck = z.p, p_sharp_bck_bck = p_sharp_init;
  std::vector<double> rho = z.p;

  double log_sum_weight = 0.0;
  const double H0 = hamiltonian(z.log_density, z.p);
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  int depth = 0;
  bool divergent = false;

  while (depth < max_tree_depth_) {
    std::vector<double> rho_fwd(d, 0.0), rho_bck(d, 0.0);
    bool valid = false;
    double log_sum_weight_subtree = kNegInf;

    if (uniform01(rng_) > 0.5) {
      z = z_fwd;
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      valid = build_tree(depth, z, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck,
                         p_fwd_fwd, H0, 1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob,
                         divergent);
      z_fwd = z;
    } else {
      z = z_bck;
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      valid = build_tree(depth, z, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd,
                         p_bck_bck, H0, -1.0, n_leapfrog, log_sum_weight_subtree, sum_metro_prob,
                         divergent);
      z_bck = z;
    }

    if (!valid) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (uniform01(rng_) < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = add(rho_bck, rho_fwd);
    bool persist = compute_criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && compute_criterion(p_sharp_bck_bck, p_sharp_fwd_bck, add(rho_bck, p_fwd_bck));
    persist = persist && compute_criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, add(rho_fwd, p_bck_fwd));
    if (!persist) break;
  }

  position_ = z_sample.q;
  gradient_ = z_sample.grad;
  log_density_ = z_sample.log_density;
  return {log_density_, n_leapfrog > 0 ? sum_metro_prob / n_leapfrog : 0.0, depth, n_leapfrog,
          divergent};
}

void StepSizeAdapter::restart(double initial_step) {
  mu_ = std::log(10.0 * initial_step);
  s_bar_ = 0.0;
  x_bar_ = 0.0;
  counter_ = 0;
}

double StepSizeAdapter::learn(double accept_stat) {
  ++counter_;
  accept_stat = std::min(1.0, accept_stat);
  const double n = counter_;
  const double eta = 1.0 / (n + kT0);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(n) / kGamma;
  const double x_eta = std::pow(n, -kKappa);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double StepSizeAdapter::final_step() const { return std::exp(x_bar_); }

WarmupSchedule::WarmupSchedule(int warmup) : warmup_(warmup) {
  if (warmup < 20) return;
  int init = 75, term = 50, base = 25;
  if (init + base + term > warmup) {
    init = static_cast<int>(0.15 * warmup);
    term = static_cast<int>(0.1 * warmup);
    base = warmup - (init + term);
  }
  init_buffer_ = init;
  term_buffer_ = term;
  const int last = warmup - term - 1;
  int size = base;
  int next = init + base - 1;
  for (;;) {
    ends_.push_back(next);
    if (next >= last) break;
    size *= 2;
    next += size;
    if (next != last && next + 2 * size >= warmup - term) next = last;
    next = std::min(next, last);
  }
}

bool WarmupSchedule::in_window(int i) const {
  return !ends_.empty() && i >= init_buffer_ && i < warmup_ - term_buffer_;
}

bool WarmupSchedule::ends_window(int i) const {
  return std::find(ends_.begin(), ends_.end(), i) != ends_.end();
}

namespace {

ChainDraws run_one_chain(const LogDensity& target, const SamplerConfig& cfg, double temper,
                         int chain) {
  const std::size_t d = target.dimension();
  NutsSampler sampler(target, temper, cfg.max_tree_depth, cfg.max_energy_error,
                      chain_seed(cfg.seed, chain));

  // Uniform initialization in [-2, 2] on the unconstrained scale.
  std::vector<double> init(d), grad(d);
  bool ok = false;
  for (int attempt = 0; attempt < kMaxInitAttempts && !ok; ++attempt) {
    for (auto& v : init) v = kInitRadius * (2.0 * uniform01(sampler.rng()) - 1.0);
    const double lp = target.log_density(init, temper, grad);
    ok = std::isfinite(lp) && std::all_of(grad.begin(), grad.end(),
                                          [](double g) { return std::isfinite(g); });
  }
  if (!ok) {
    throw SamplerFailure("chain " + std::to_string(chain + 1) +
                         ": no finite initial point found in [-2, 2]^d");
  }
  sampler.set_position(init);
  sampler.set_step_size(1.0);
  sampler.initialize_step_size();

  StepSizeAdapter adapter(cfg.target_accept);
  adapter.restart(sampler.step_size());
  const WarmupSchedule schedule(cfg.warmup);
  VarianceEstimator estimator(d);

  for (int i = 0; i < cfg.warmup; ++i) {
    const auto t = sampler.transition();
    sampler.set_step_size(adapter.learn(t.accept_stat));
    if (schedule.in_window(i)) estimator.add(sampler.position());
    if (schedule.ends_window(i)) {
      sampler.set_inv_metric(estimator.regularized_variance());
      estimator.restart();
      sampler.initialize_step_size();
      adapter.restart(sampler.step_size());
    }
  }
  if (cfg.warmup > 0) sampler.set_step_size(adapter.final_step());

  ChainDraws out;
  out.names = target.output_names();
  out.num_draws = static_cast<std::size_t>(cfg.samples_per_chain);
  out.draws.resize(out.num_draws * out.names.size());
  out.lp.resize(out.num_draws);
  out.log_lik.resize(out.num_draws);
  out.tree_depth.resize(out.num_draws);
  out.divergent.resize(out.num_draws);
  out.temper = temper;
  double accept_sum = 0.0;
  for (std::size_t s = 0; s < out.num_draws; ++s) {
    const auto t = sampler.transition();
    accept_sum += t.accept_stat;
    if (t.divergent) ++out.divergences;
    out.divergent[s] = t.divergent;
    out.lp[s] = t.log_density;
    out.tree_depth[s] = t.tree_depth;
    out.log_lik[s] = target.log_likelihood(sampler.position());
    target.write_constrained(sampler.position(),
                             std::span<double>(out.draws.data() + s * out.dim(), out.dim()));
  }
  out.accept_stat = accept_sum / static_cast<double>(out.num_draws);
  out.step_size = sampler.step_size();
  out.inv_metric = sampler.inv_metric();
  return out;
}

std::vector<ChainDraws> run_with_temper(const LogDensity& target, const SamplerConfig& cfg,
                                        double temper) {
  cfg.validate();
  if (!(temper > 0.0 && temper <= 1.0)) throw std::invalid_argument("temper must lie in (0, 1]");
  const auto n = static_cast<std::size_t>(cfg.num_chains);
  std::vector<ChainDraws> chains(n);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t c) {
    try {
      chains[c] = run_one_chain(target, cfg, temper, static_cast<int>(c));
    } catch (...) {
      errors[c] = std::current_exception();
    }
  };
  if (cfg.parallel && n > 1) {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (std::size_t c = 0; c < n; ++c) threads.emplace_back(work, c);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t c = 0; c < n; ++c) work(c);
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::size_t divergent = 0, total = 0;
  for (const auto& ch : chains) {
    divergent += static_cast<std::size_t>(ch.divergences);
    total += ch.num_draws;
  }
  if (static_cast<double>(divergent) > cfg.max_divergent_fraction * static_cast<double>(total)) {
    throw SamplerFailure(std::to_string(divergent) + " of " + std::to_string(total) +
                         " post-warmup transitions diverged");
  }
  return chains;
}

}  // namespace

std::vector<ChainDraws> run_chains(const LogDensity& target, const SamplerConfig& cfg) {
  return run_with_temper(target, cfg, cfg.temper);
}

std::vector<ChainDraws> run_chains(const ModelSpec& spec, const Dataset& data,
                                   const SamplerConfig& cfg) {
  const PosteriorModel model(spec, data);
  return run_chains(model, cfg);
}

double wbic_temperature(std::size_t n) {
  if (n < 3) throw std::invalid_argument("WBIC needs at least 3 observations");
  return 1.0 / std::log(static_cast<double>(n));
}

std::vector<ChainDraws> run_tempered(const LogDensity& target, const SamplerConfig& cfg) {
  auto chains = run_with_temper(target, cfg, wbic_temperature(target.num_observations()));
  for (auto& c : chains) c.tempered = true;
  return chains;
}

std::vector<ChainDraws> run_tempered(const ModelSpec& spec, const Dataset& data,
                                     const SamplerConfig& cfg) {
  const PosteriorModel model(spec, data);
  return run_tempered(model, cfg);
}

namespace {

void write_double(std::ostream& os, double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  os.write(buf, res.ptr - buf);
}

}  // namespace

void write_draws_csv(std::ostream& os, const std::vector<ChainDraws>& chains) {
  if (chains.empty()) return;
  os << "chain,draw,lp__,log_lik__";
  for (const auto& n : chains.front().names) os << ',' << n;
  os << '\n';
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& ch = chains[c];
    for (std::size_t s = 0; s < ch.num_draws; ++s) {
      os << c + 1 << ',' << s + 1 << ',';
      write_double(os, ch.lp[s]);
      os << ',';
      write_double(os, ch.log_lik[s]);
      for (double v : ch.row(s)) {
        os << ',';
        write_double(os, v);
      }
      os << '\n';
    }
  }
}

std::vector<ChainDraws> read_draws_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("draws CSV is empty");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 5 || header[0] != "chain" || header[1] != "draw" || header[2] != "lp__" ||
      header[3] != "log_lik__") {
    throw std::runtime_error("draws CSV header must start with chain,draw,lp__,log_lik__");
  }
  const std::vector<std::string> names(header.begin() + 4, header.end());
  std::map<long, ChainDraws> by_chain;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> cells;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      double v = 0.0;
      auto res = std::from_chars(p, comma, v);
      if (res.ec != std::errc() || res.ptr != comma) {
        throw std::runtime_error("draws CSV line " + std::to_string(line_no) + ": bad number");
      }
      cells.push_back(v);
      p = comma + 1;
    }
    if (cells.size() != header.size()) {
      throw std::runtime_error("draws CSV line " + std::to_string(line_no) +
                               ": wrong number of columns");
    }
    auto& ch = by_chain[static_cast<long>(cells[0])];
    if (ch.names.empty()) ch.names = names;
    ch.lp.push_back(cells[2]);
    ch.log_lik.push_back(cells[3]);
    ch.draws.insert(ch.draws.end(), cells.begin() + 4, cells.end());
    ++ch.num_draws;
  }
  std::vector<ChainDraws> out;
  for (auto& [id, ch] : by_chain) out.push_back(std::move(ch));
  return out;
}

}  // namespace bwsurv
