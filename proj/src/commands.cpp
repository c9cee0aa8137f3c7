#include "bwsurv/commands.hpp"

#include "bwsurv/diagnostics.hpp"
#include "bwsurv/io.hpp"
#include "bwsurv/posterior.hpp"
#include "bwsurv/simgen.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace bwsurv {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string_view version() { return "0.1.0"; }

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

ordered_json sampler_json(const SamplerConfig& c) {
  return {{"num_chains", c.num_chains},     {"warmup", c.warmup},
          {"samples_per_chain", c.samples_per_chain}, {"seed", c.seed},
          {"target_accept", c.target_accept}, {"max_tree_depth", c.max_tree_depth},
          {"max_energy_error", c.max_energy_error},
          {"max_divergent_fraction", c.max_divergent_fraction}};
}

ordered_json input_entry(const fs::path& p) {
  return {{"path", p.string()}, {"digest", file_digest(p)}};
}

// The manifest is written last so that its presence marks a finished run.
void write_manifest(const fs::path& dir, const std::string& command, std::uint64_t seed,
                    ordered_json config, ordered_json inputs, const std::vector<std::string>& outputs,
                    int exit_status, const Stopwatch& clock) {
  ordered_json m;
  m["command"] = command;
  m["version"] = std::string(version());
  m["seed"] = seed;
  m["config"] = std::move(config);
  m["inputs"] = std::move(inputs);
  m["outputs"] = outputs;
  m["exit_code"] = exit_status;
  m["wall_clock_seconds"] = clock.seconds();
  write_json_file(dir / "manifest.json", m);
}

void prepare_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
}

// Subsampling uses its own stream so the chains' seeds stay untouched.
constexpr std::uint64_t kSubsampleSalt = 0x5b5ad4c1e3f2a917ULL;

Dataset load_dataset(const fs::path& path, std::size_t subsample, std::uint64_t seed) {
  Dataset d = read_dataset_csv(path);
  if (subsample > 0) d = subsample_per_category(d, subsample, seed ^ kSubsampleSalt);
  return d;
}

ModelSpec load_spec(ModelVariant variant, const std::optional<fs::path>& hyper) {
  ModelSpec spec;
  spec.variant = variant;
  if (hyper) spec.hyper = hyper_from_json(read_json_file(*hyper));
  return spec;
}

void validate_sampler(const SamplerConfig& cfg) {
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("sampler config: ") + e.what());
  }
  if (cfg.num_chains * cfg.samples_per_chain < 100) {
    throw InputError("sampler config: summaries need at least 100 draws in total");
  }
}

std::optional<double> max_rhat(const std::vector<PosteriorSummary>& rows) {
  std::optional<double> worst;
  for (const auto& s : rows) {
    if (s.rhat && (!worst || !(*s.rhat <= *worst))) worst = *s.rhat;
  }
  return worst;
}

bool converged(const std::optional<double>& rhat) {
  return !rhat || *rhat < kRhatThreshold;
}

ordered_json chain_stats(const std::vector<ChainDraws>& chains) {
  ordered_json arr = ordered_json::array();
  for (std::size_t c = 0; c < chains.size(); ++c) {
    const auto& ch = chains[c];
    double depth = 0.0;
    for (int d : ch.tree_depth) depth += d;
    arr.push_back({{"chain", c + 1},
                   {"divergences", ch.divergences},
                   {"accept_stat", ch.accept_stat},
                   {"step_size", ch.step_size},
                   {"mean_tree_depth", ch.num_draws ? depth / static_cast<double>(ch.num_draws) : 0.0},
                   {"inv_metric", ch.inv_metric}});
  }
  return arr;
}

std::string sanitize(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == '[') out += '_';
    else if (c != ']') out += c;
  }
  return out;
}

}  // namespace

int cmd_simulate(const SimulateOptions& opt, std::ostream& log) {
  const Stopwatch clock;
  ScenarioConfig cfg;
  ordered_json inputs = ordered_json::array();
  try {
    cfg = opt.scenario ? read_scenario(*opt.scenario) : default_scenario();
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.scenario) inputs.push_back(input_entry(*opt.scenario));
    prepare_dir(opt.out);
  } catch (const InputError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::bad_input;
  }

  const Dataset data = generate(cfg);
  std::ostringstream csv;
  write_dataset_csv(csv, data);
  write_text_file(opt.out / "data.csv", csv.str());
  write_json_file(opt.out / "scenario.json", to_json(cfg));
  write_json_file(opt.out / "dataset_summary.json",
                  ordered_json{{"categories", to_json(summarize_dataset(data))}});
  write_manifest(opt.out, "simulate", cfg.seed, to_json(cfg), inputs,
                 {"data.csv", "scenario.json", "dataset_summary.json"}, exit_code::ok, clock);
  log << "simulated " << data.size() << " subjects in " << cfg.categories.size()
      << " categories\n";
  return exit_code::ok;
}

int cmd_fit(const FitOptions& opt, std::ostream& log) {
  const Stopwatch clock;
  ModelSpec spec;
  std::optional<Dataset> data;
  ordered_json inputs = ordered_json::array();
  try {
    validate_sampler(opt.sampler);
    spec = load_spec(opt.model, opt.hyper);
    data = load_dataset(opt.data, opt.subsample, opt.sampler.seed);
    inputs.push_back(input_entry(opt.data));
    if (opt.hyper) inputs.push_back(input_entry(*opt.hyper));
    prepare_dir(opt.out);
  } catch (const InputError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::bad_input;
  }

  ordered_json config{{"model", std::string(to_string(spec.variant))},
                      {"hyper", to_json(spec.hyper)},
                      {"sampler", sampler_json(opt.sampler)},
                      {"subsample", opt.subsample},
                      {"num_observations", data->size()},
                      {"num_categories", data->num_categories()}};

  std::vector<ChainDraws> chains;
  try {
    chains = run_chains(spec, *data, opt.sampler);
  } catch (const SamplerFailure& e) {
    log << "sampler failure: " << e.what() << '\n';
    write_manifest(opt.out, "fit", opt.sampler.seed, config, inputs, {}, exit_code::sampler_failure,
                   clock);
    return exit_code::sampler_failure;
  }

  const auto rows = summarize_chains(chains);
  ordered_json summary{{"summary", ordered_json::array()}};
  for (const auto& s : rows) summary["summary"].push_back(to_json(s));

  std::ostringstream draws;
  write_draws_csv(draws, chains);

  const auto worst = max_rhat(rows);
  const int status = converged(worst) ? exit_code::ok : exit_code::not_converged;

  write_json_file(opt.out / "summary.json", summary);
  write_text_file(opt.out / "draws.csv", draws.str());
  write_json_file(opt.out / "sampler.json",
                  ordered_json{{"max_rhat", worst ? ordered_json(*worst) : ordered_json(nullptr)},
                               {"chains", chain_stats(chains)}});
  write_manifest(opt.out, "fit", opt.sampler.seed, config, inputs,
                 {"summary.json", "draws.csv", "sampler.json"}, status, clock);

  for (const auto& s : rows) {
    log << s.name << ": map " << s.map << "  95% CI [" << s.ci_low << ", " << s.ci_high
        << "]  rhat " << (s.rhat ? std::to_string(*s.rhat) : "n/a") << '\n';
  }
  if (status == exit_code::not_converged) {
    log << "warning: R-hat >= " << kRhatThreshold << " for at least one parameter\n";
  }
  return status;
}

int cmd_compare(const CompareOptions& opt, std::ostream& log) {
  const Stopwatch clock;
  std::optional<Dataset> data;
  HyperConstants hyper;
  ordered_json inputs = ordered_json::array();
  try {
    validate_sampler(opt.sampler);
    if (opt.models.empty()) throw InputError("no models to compare");
    hyper = load_spec(ModelVariant::Mixture, opt.hyper).hyper;
    data = load_dataset(opt.data, opt.subsample, opt.sampler.seed);
    if (data->size() < 3) throw InputError("model comparison needs at least 3 observations");
    inputs.push_back(input_entry(opt.data));
    if (opt.hyper) inputs.push_back(input_entry(*opt.hyper));
    prepare_dir(opt.out);
  } catch (const InputError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::bad_input;
  }

  struct Entry {
    ModelVariant model;
    std::optional<CriterionReport> report;
    std::optional<double> rhat;
    std::optional<double> rhat_tempered;
    std::string error;
  };
  std::vector<Entry> entries;
  for (auto variant : opt.models) {
    Entry e{variant, std::nullopt, std::nullopt, std::nullopt, {}};
    const ModelSpec spec{variant, hyper};
    try {
      log << "fitting " << to_string(variant) << '\n';
      const auto chains = run_chains(spec, *data, opt.sampler);
      e.rhat = max_rhat(summarize_chains(chains));
      auto report = waic(chains, spec, *data);
      const auto tempered = run_tempered(spec, *data, opt.sampler);
      e.rhat_tempered = max_rhat(summarize_chains(tempered));
      report.wbic = wbic(tempered);
      e.report = std::move(report);
    } catch (const std::exception& ex) {
      e.error = ex.what();
      log << "  failed: " << e.error << '\n';
    }
    entries.push_back(std::move(e));
  }

  // Ascending WAIC; failures keep their request order after the successes.
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.report && b.report) return a.report->waic < b.report->waic;
    return a.report.has_value() && !b.report.has_value();
  });
  std::vector<const Entry*> by_wbic;
  for (const auto& e : entries) {
    if (e.report) by_wbic.push_back(&e);
  }
  std::stable_sort(by_wbic.begin(), by_wbic.end(), [](const Entry* a, const Entry* b) {
    return *a->report->wbic < *b->report->wbic;
  });

  int status = exit_code::ok;
  ordered_json comparison = ordered_json::array();
  std::vector<std::string> outputs{"comparison.json"};
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const std::string name(to_string(e.model));
    if (!e.report) {
      comparison.push_back({{"model", name},
                            {"waic", nullptr},
                            {"wbic", nullptr},
                            {"status", "failed"},
                            {"error", e.error}});
      status = exit_code::sampler_failure;
      continue;
    }
    auto j = to_json(*e.report, name);
    j["waic_rank"] = i + 1;
    j["wbic_rank"] = static_cast<std::size_t>(
        std::find(by_wbic.begin(), by_wbic.end(), &e) - by_wbic.begin() + 1);
    j["high_variance_terms"] = e.report->high_variance_terms;
    j["max_rhat"] = e.rhat ? ordered_json(*e.rhat) : ordered_json(nullptr);
    j["max_rhat_tempered"] = e.rhat_tempered ? ordered_json(*e.rhat_tempered) : ordered_json(nullptr);
    j["status"] = "ok";
    comparison.push_back(j);
    write_json_file(opt.out / ("criterion_" + name + ".json"), to_json(*e.report, name));
    outputs.push_back("criterion_" + name + ".json");
    if (status == exit_code::ok && !(converged(e.rhat) && converged(e.rhat_tempered))) {
      status = exit_code::not_converged;
    }
  }

  ordered_json models = ordered_json::array();
  for (auto v : opt.models) models.push_back(std::string(to_string(v)));
  ordered_json config{{"models", models},
                      {"hyper", to_json(hyper)},
                      {"sampler", sampler_json(opt.sampler)},
                      {"subsample", opt.subsample},
                      {"num_observations", data->size()},
                      {"wbic_temperature", wbic_temperature(data->size())}};
  write_json_file(opt.out / "comparison.json", ordered_json{{"comparison", comparison}});
  write_manifest(opt.out, "compare", opt.sampler.seed, config, inputs, outputs, status, clock);

  for (const auto& row : comparison) {
    log << row["model"].get<std::string>() << ": " << row["status"].get<std::string>();
    if (!row["waic"].is_null()) {
      log << "  WAIC " << row["waic"].get<double>() << "  WBIC " << row["wbic"].get<double>();
    }
    log << '\n';
  }
  return status;
}

int cmd_summarize(const SummarizeOptions& opt, std::ostream& log) {
  const Stopwatch clock;
  const fs::path draws_path = opt.fit_dir / "draws.csv";
  std::vector<ChainDraws> chains;
  ordered_json inputs = ordered_json::array();
  try {
    if (!(opt.horizon >= 0.0) || !std::isfinite(opt.horizon)) {
      throw InputError("horizon must be non-negative");
    }
    if (!(opt.curve_end >= 1.0)) throw InputError("curve end must be at least 1 day");
    if (opt.bins == 0) throw InputError("histograms need at least one bin");
    std::ifstream in(draws_path);
    if (!in) throw InputError("missing draws file " + draws_path.string());
    try {
      chains = read_draws_csv(in);
    } catch (const std::runtime_error& e) {
      throw InputError(draws_path.string() + ": " + e.what());
    }
    if (chains.empty()) throw InputError(draws_path.string() + ": no draws");
    inputs.push_back(input_entry(draws_path));
    prepare_dir(opt.out);
  } catch (const InputError& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::bad_input;
  }

  // Pool every chain per named column.
  const auto& names = chains.front().names;
  std::map<std::string, std::vector<double>> pooled;
  for (std::size_t j = 0; j < names.size(); ++j) {
    auto& col = pooled[names[j]];
    for (const auto& c : chains) {
      const auto v = c.column(j);
      col.insert(col.end(), v.begin(), v.end());
    }
  }
  auto column = [&](const std::string& name) -> const std::vector<double>* {
    auto it = pooled.find(name);
    return it == pooled.end() ? nullptr : &it->second;
  };

  // Category parameter names for each fitted model variant.
  struct CategoryColumns {
    int category;
    std::string q, shape, scale;
  };
  std::vector<CategoryColumns> cats;
  if (column("q[1]")) {
    for (int k = 1; column("q[" + std::to_string(k) + "]"); ++k) {
      const auto s = "[" + std::to_string(k) + "]";
      cats.push_back({k, "q" + s, "lambda" + s, "theta" + s});
    }
  } else if (column("lambda")) {
    cats.push_back({1, column("q") ? "q" : "", "lambda", "theta"});
  }
  for (const auto& c : cats) {
    if (!column(c.shape) || !column(c.scale)) {
      log << "error: " << draws_path.string() << ": missing " << c.shape << " or " << c.scale
          << " columns\n";
      return exit_code::bad_input;
    }
  }
  if (cats.empty()) {
    log << "error: " << draws_path.string() << ": no category parameters in draws\n";
    return exit_code::bad_input;
  }
  const std::size_t n_draws = column(cats.front().shape)->size();
  const std::vector<double> ones(n_draws, 1.0);
  auto q_of = [&](const CategoryColumns& c) -> const std::vector<double>& {
    return c.q.empty() ? ones : *column(c.q);
  };

  ordered_json derived;
  derived["horizon"] = opt.horizon;
  derived["risk_ratios"] = ordered_json::array();
  derived["conversion_rates"] = ordered_json::array();
  derived["map_parameters"] = ordered_json::array();
  derived["residual_tail"] = ordered_json::array();
  std::vector<std::pair<std::string, std::vector<double>>> hist_inputs;

  std::vector<CurveParams> curve_params;
  try {
    for (const auto& c : cats) {
      const auto suffix = "[" + std::to_string(c.category) + "]";
      auto rr = risk_ratio(q_of(c), q_of(cats.front()), "rr" + suffix);
      auto g = conversion_rate(q_of(c), *column(c.shape), *column(c.scale), opt.horizon,
                               "g" + suffix);
      auto rr_json = to_json(rr.summary);
      rr_json["category"] = c.category;
      rr_json["reference"] = cats.front().category;
      derived["risk_ratios"].push_back(rr_json);
      auto g_json = to_json(g.summary);
      g_json["category"] = c.category;
      derived["conversion_rates"].push_back(g_json);

      const double shape = kde_mode(*column(c.shape));
      const double scale = kde_mode(*column(c.scale));
      curve_params.push_back({c.category, shape, scale});
      derived["map_parameters"].push_back(
          {{"category", c.category},
           {"q", c.q.empty() ? 1.0 : kde_mode(*column(c.q))},
           {"shape", shape},
           {"scale", scale}});
      const double cdf_end = weibull_cdf(opt.curve_end, WeibullParams(shape, scale));
      derived["residual_tail"].push_back(
          {{"category", c.category}, {"t", opt.curve_end}, {"value", residual_tail(cdf_end)}});

      if (!c.q.empty()) hist_inputs.emplace_back(c.q, *column(c.q));
      hist_inputs.emplace_back(c.shape, *column(c.shape));
      hist_inputs.emplace_back(c.scale, *column(c.scale));
      hist_inputs.emplace_back(rr.name, std::move(rr.values));
      hist_inputs.emplace_back(g.name, std::move(g.values));
    }
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return exit_code::bad_input;
  }

  std::vector<double> grid;
  for (double t = 1.0; t <= opt.curve_end; t += 1.0) grid.push_back(t);
  std::ostringstream curve_csv;
  write_curves_csv(curve_csv, curves(curve_params, grid));

  std::vector<std::string> outputs{"derived.json", "curves.csv"};
  write_json_file(opt.out / "derived.json", derived);
  write_text_file(opt.out / "curves.csv", curve_csv.str());
  for (const auto& [name, values] : hist_inputs) {
    // The cap only applies to rates, which live in [0, 1].
    const bool rate = name.rfind("q", 0) == 0 || name.rfind("g", 0) == 0;
    std::ostringstream csv;
    write_histogram_csv(csv, histogram(values, opt.bins, rate ? opt.hist_cap : std::nullopt));
    const auto file = "hist_" + sanitize(name) + ".csv";
    write_text_file(opt.out / file, csv.str());
    outputs.push_back(file);
  }
  ordered_json config{{"fit_dir", opt.fit_dir.string()},
                      {"horizon", opt.horizon},
                      {"curve_end", opt.curve_end},
                      {"bins", opt.bins},
                      {"hist_cap", opt.hist_cap ? ordered_json(*opt.hist_cap) : ordered_json(nullptr)}};
  write_manifest(opt.out, "summarize", 0, config, inputs, outputs, exit_code::ok, clock);

  for (const auto& g : derived["conversion_rates"]) {
    log << "category " << g["category"].get<int>() << ": conversion within " << opt.horizon
        << " days, map " << g["map"].get<double>() << '\n';
  }
  return exit_code::ok;
}

}  // namespace bwsurv
