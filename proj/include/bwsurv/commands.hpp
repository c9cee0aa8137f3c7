#pragma once

// The batch commands behind the `bwsurv` executable. Each returns a process
// exit code and writes its outputs only after all computation finished.

#include "bwsurv/model.hpp"
#include "bwsurv/sampler.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace bwsurv {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int bad_input = 2;
inline constexpr int not_converged = 3;  // some R-hat >= 1.1; outputs still written
inline constexpr int sampler_failure = 4;
}  // namespace exit_code

inline constexpr double kRhatThreshold = 1.1;

std::string_view version();

struct SimulateOptions {
  /// Scenario JSON; the built-in five-category scenario when empty.
  std::optional<std::filesystem::path> scenario;
  std::optional<std::uint64_t> seed;  // overrides the scenario's seed
  std::filesystem::path out = ".";
};

/// Writes data.csv, scenario.json, dataset_summary.json and manifest.json.
int cmd_simulate(const SimulateOptions& opt, std::ostream& log);

struct FitOptions {
  std::filesystem::path data;
  ModelVariant model = ModelVariant::Hierarchical;
  SamplerConfig sampler{};
  std::optional<std::filesystem::path> hyper;  // JSON overrides of the prior constants
  /// Keep at most this many subjects per category (0 keeps all).
  std::size_t subsample = 0;
  std::filesystem::path out = ".";
};

/// Writes summary.json, draws.csv, sampler.json and manifest.json.
int cmd_fit(const FitOptions& opt, std::ostream& log);

struct CompareOptions {
  std::filesystem::path data;
  std::vector<ModelVariant> models{ModelVariant::Baseline, ModelVariant::Mixture,
                                   ModelVariant::Hierarchical};
  SamplerConfig sampler{};
  std::optional<std::filesystem::path> hyper;
  std::size_t subsample = 0;
  std::filesystem::path out = ".";
};

/// Writes comparison.json (entries sorted by ascending WAIC, failed models
/// last), one criterion_<model>.json per successful model, and manifest.json.
int cmd_compare(const CompareOptions& opt, std::ostream& log);

struct SummarizeOptions {
  std::filesystem::path fit_dir;  // output directory of cmd_fit
  double horizon = 120.0;
  double curve_end = 180.0;  // curves on t = 1, 2, ..., curve_end
  std::size_t bins = 50;
  std::optional<double> hist_cap;
  std::filesystem::path out = ".";
};

/// Writes derived.json, curves.csv, hist_<name>.csv per category parameter
/// and manifest.json.
int cmd_summarize(const SummarizeOptions& opt, std::ostream& log);

}  // namespace bwsurv
