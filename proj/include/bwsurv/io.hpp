#pragma once

// File formats: dataset CSV, scenario / hyperprior JSON, and the JSON
// reports written by the command-line tool.

#include "bwsurv/diagnostics.hpp"
#include "bwsurv/model.hpp"
#include "bwsurv/posterior.hpp"
#include "bwsurv/sampler.hpp"
#include "bwsurv/simgen.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace bwsurv {

/// Malformed input file; the message carries the file and line where known.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dataset CSV: subject_id,category,duration_days,event_observed
void write_dataset_csv(std::ostream& os, const Dataset& d);
/// K is the largest category id; `censor_horizon` defaults to the largest
/// censored duration when not given.
Dataset read_dataset_csv(std::istream& is, const std::string& source = "<stream>",
                         double censor_horizon = 0.0);
Dataset read_dataset_csv(const std::filesystem::path& path, double censor_horizon = 0.0);

nlohmann::ordered_json to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const nlohmann::json& j);
ScenarioConfig read_scenario(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const HyperConstants& h);
HyperConstants hyper_from_json(const nlohmann::json& j);

/// Reads sampler settings; absent keys keep their value from `base`.
SamplerConfig sampler_from_json(const nlohmann::json& j, SamplerConfig base = {});

nlohmann::ordered_json to_json(const PosteriorSummary& s);
PosteriorSummary summary_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const CriterionReport& r, const std::string& model);
nlohmann::ordered_json to_json(const std::vector<CategorySummary>& table);

void write_histogram_csv(std::ostream& os, const Histogram& h);
void write_curves_csv(std::ostream& os, const std::vector<CurveRow>& rows);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& contents);
void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace bwsurv
