// bwsurv: simulate, fit, compare and summarize Bernoulli-Weibull survival models.

#include "bwsurv/commands.hpp"
#include "bwsurv/io.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

namespace {

using namespace bwsurv;

struct SamplerFlags {
  std::optional<std::filesystem::path> config;
  std::optional<int> chains, warmup, samples, max_depth;
  std::optional<std::uint64_t> seed;
  std::optional<double> target_accept;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Sampler settings as JSON; flags override it")
        ->check(CLI::ExistingFile);
    app->add_option("--chains", chains, "Number of chains (default 4)");
    app->add_option("--warmup", warmup, "Warmup iterations per chain (default 1000)");
    app->add_option("--samples", samples, "Post-warmup draws per chain (default 1000)");
    app->add_option("--seed", seed, "Random seed (default 1)");
    app->add_option("--target-accept", target_accept, "Step size adaptation target (default 0.8)");
    app->add_option("--max-depth", max_depth, "Maximum NUTS tree depth (default 10)");
  }

  SamplerConfig resolve() const {
    SamplerConfig cfg;
    if (config) cfg = sampler_from_json(read_json_file(*config), cfg);
    if (chains) cfg.num_chains = *chains;
    if (warmup) cfg.warmup = *warmup;
    if (samples) cfg.samples_per_chain = *samples;
    if (seed) cfg.seed = *seed;
    if (target_accept) cfg.target_accept = *target_accept;
    if (max_depth) cfg.max_tree_depth = *max_depth;
    return cfg;
  }
};

ModelVariant variant_or_throw(const std::string& name) {
  try {
    return parse_variant(name);
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian Bernoulli-Weibull survival models for rare-event data"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);

  SimulateOptions sim;
  std::optional<std::uint64_t> sim_seed;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->add_option("--scenario", sim.scenario, "Scenario JSON (built-in default when omitted)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--seed", sim_seed, "Override the scenario's seed");
  simulate->add_option("--out", sim.out, "Output directory")->required();

  FitOptions fit;
  std::string fit_model = "hierarchical";
  SamplerFlags fit_flags;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one model by NUTS");
  fit_cmd->add_option("data", fit.data, "Dataset CSV")->required();
  fit_cmd->add_option("--model", fit_model, "baseline, mixture or hierarchical");
  fit_cmd->add_option("--hyper", fit.hyper, "Prior constants as JSON")->check(CLI::ExistingFile);
  fit_cmd->add_option("--subsample", fit.subsample, "Keep at most N subjects per category");
  fit_cmd->add_option("--out", fit.out, "Output directory")->required();
  fit_flags.attach(fit_cmd);

  CompareOptions cmp;
  std::vector<std::string> cmp_models;
  SamplerFlags cmp_flags;
  auto* compare = app.add_subcommand("compare", "Rank models by WAIC and WBIC");
  compare->add_option("data", cmp.data, "Dataset CSV")->required();
  compare->add_option("--models", cmp_models, "Models to compare (default: all three)")
      ->delimiter(',');
  compare->add_option("--hyper", cmp.hyper, "Prior constants as JSON")->check(CLI::ExistingFile);
  compare->add_option("--subsample", cmp.subsample, "Keep at most N subjects per category");
  compare->add_option("--out", cmp.out, "Output directory")->required();
  cmp_flags.attach(compare);

  SummarizeOptions sum;
  auto* summarize = app.add_subcommand("summarize", "Derived quantities and plot data from a fit");
  summarize->add_option("fit_dir", sum.fit_dir, "Output directory of `fit`")->required();
  summarize->add_option("--horizon", sum.horizon, "Conversion-rate horizon in days (default 120)");
  summarize->add_option("--curve-end", sum.curve_end, "Last day of the curve grid (default 180)");
  summarize->add_option("--bins", sum.bins, "Histogram bins (default 50)");
  summarize->add_option("--hist-cap", sum.hist_cap, "Upper range limit for rate histograms");
  summarize->add_option("--out", sum.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_code::bad_input;
  }

  try {
    if (*simulate) {
      sim.seed = sim_seed;
      return cmd_simulate(sim, std::cerr);
    }
    if (*fit_cmd) {
      fit.model = variant_or_throw(fit_model);
      fit.sampler = fit_flags.resolve();
      return cmd_fit(fit, std::cerr);
    }
    if (*compare) {
      if (!cmp_models.empty()) {
        cmp.models.clear();
        for (const auto& m : cmp_models) cmp.models.push_back(variant_or_throw(m));
      }
      cmp.sampler = cmp_flags.resolve();
      return cmd_compare(cmp, std::cerr);
    }
    return cmd_summarize(sum, std::cerr);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code::bad_input;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
