#include "bwsurv/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace bwsurv {

using nlohmann::json;
using nlohmann::ordered_json;

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_dataset_csv(std::ostream& os, const Dataset& d) {
  os << "subject_id,category,duration_days,event_observed\n";
  std::size_t id = 1;
  for (const auto& o : d.observations()) {
    os << id++ << ',' << o.category << ',' << format_double(o.duration) << ','
       << (o.event_observed ? 1 : 0) << '\n';
  }
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

Dataset read_dataset_csv(std::istream& is, const std::string& source, double censor_horizon) {
  auto fail = [&](std::size_t line, const std::string& msg) -> InputError {
    return InputError(source + ":" + std::to_string(line) + ": " + msg);
  };
  std::string line;
  if (!std::getline(is, line)) throw fail(1, "empty file");
  const auto header = split_commas(trim(line));
  const std::vector<std::string_view> expected = {"subject_id", "category", "duration_days",
                                                  "event_observed"};
  if (header.size() != expected.size() ||
      !std::equal(header.begin(), header.end(), expected.begin(),
                  [](std::string_view a, std::string_view b) { return trim(a) == b; })) {
    throw fail(1, "header must be subject_id,category,duration_days,event_observed");
  }
  std::vector<Observation> obs;
  int max_category = 0;
  double max_censored = 0.0;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(trim(line));
    if (cells.size() != 4) throw fail(line_no, "expected 4 columns");
    Observation o;
    int flag = -1;
    if (!parse_number(cells[1], o.category) || o.category < 1) {
      throw fail(line_no, "category must be a positive integer");
    }
    if (!parse_number(cells[2], o.duration) || !(o.duration > 0.0) || !std::isfinite(o.duration)) {
      throw fail(line_no, "duration_days must be a positive number");
    }
    if (!parse_number(cells[3], flag) || (flag != 0 && flag != 1)) {
      throw fail(line_no, "event_observed must be 0 or 1");
    }
    o.event_observed = flag == 1;
    max_category = std::max(max_category, o.category);
    if (!o.event_observed) max_censored = std::max(max_censored, o.duration);
    obs.push_back(o);
  }
  if (obs.empty()) throw fail(line_no, "no observations");
  double horizon = censor_horizon > 0.0 ? censor_horizon : max_censored;
  if (!(horizon > 0.0)) {
    for (const auto& o : obs) horizon = std::max(horizon, o.duration);
  }
  try {
    return Dataset(std::move(obs), max_category, horizon);
  } catch (const std::invalid_argument& e) {
    throw InputError(source + ": " + e.what());
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path, double censor_horizon) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  return read_dataset_csv(in, path.string(), censor_horizon);
}

ordered_json to_json(const ScenarioConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["window"] = cfg.window;
  j["signup_mode"] = std::string(to_string(cfg.signup_mode));
  j["categories"] = ordered_json::array();
  for (const auto& c : cfg.categories) {
    j["categories"].push_back({{"n", c.n}, {"q", c.q}, {"shape", c.shape}, {"scale", c.scale}});
  }
  return j;
}

namespace {

template <typename T>
T get_field(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InputError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

ScenarioConfig scenario_from_json(const json& j) {
  if (!j.is_object()) throw InputError("scenario: expected a JSON object");
  ScenarioConfig cfg;
  if (j.contains("seed")) cfg.seed = get_field<std::uint64_t>(j, "seed", "scenario");
  if (j.contains("window")) cfg.window = get_field<double>(j, "window", "scenario");
  if (j.contains("signup_mode")) {
    try {
      cfg.signup_mode = parse_signup_mode(get_field<std::string>(j, "signup_mode", "scenario"));
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("scenario.signup_mode: ") + e.what());
    }
  }
  const auto cats = j.value("categories", json::array());
  if (!cats.is_array() || cats.empty()) {
    throw InputError("scenario.categories: expected a non-empty array");
  }
  for (std::size_t k = 0; k < cats.size(); ++k) {
    const std::string where = "scenario.categories[" + std::to_string(k) + "]";
    CategoryScenario c;
    const auto n = get_field<long long>(cats[k], "n", where);
    if (n <= 0) throw InputError(where + ".n: must be positive");
    c.n = static_cast<std::size_t>(n);
    c.q = get_field<double>(cats[k], "q", where);
    c.shape = get_field<double>(cats[k], "shape", where);
    c.scale = get_field<double>(cats[k], "scale", where);
    cfg.categories.push_back(c);
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
  return cfg;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // parse_error messages carry the line and column.
    throw InputError(path.string() + ": " + e.what());
  }
}

ScenarioConfig read_scenario(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    return scenario_from_json(j);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

ordered_json to_json(const HyperConstants& h) {
  return {{"pareto_min", h.pareto_min},
          {"pareto_exponent", h.pareto_exponent},
          {"lambda_bounds", {h.lambda_bounds.lo, h.lambda_bounds.hi}},
          {"theta_bounds", {h.theta_bounds.lo, h.theta_bounds.hi}},
          {"sigma_lambda_upper", h.sigma_lambda_upper},
          {"sigma_theta_upper", h.sigma_theta_upper}};
}

HyperConstants hyper_from_json(const json& j) {
  HyperConstants h;
  auto interval = [&](const char* key, Interval& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) throw InputError(std::string("hyper.") + key + ": expected [lo, hi]");
    out = {v[0].get<double>(), v[1].get<double>()};
  };
  if (j.contains("pareto_min")) h.pareto_min = get_field<double>(j, "pareto_min", "hyper");
  if (j.contains("pareto_exponent")) {
    h.pareto_exponent = get_field<double>(j, "pareto_exponent", "hyper");
  }
  interval("lambda_bounds", h.lambda_bounds);
  interval("theta_bounds", h.theta_bounds);
  if (j.contains("sigma_lambda_upper")) {
    h.sigma_lambda_upper = get_field<double>(j, "sigma_lambda_upper", "hyper");
  }
  if (j.contains("sigma_theta_upper")) {
    h.sigma_theta_upper = get_field<double>(j, "sigma_theta_upper", "hyper");
  }
  try {
    h.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("hyper: ") + e.what());
  }
  return h;
}

SamplerConfig sampler_from_json(const json& j, SamplerConfig base) {
  if (!j.is_object()) throw InputError("sampler: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "num_chains") base.num_chains = get_field<int>(j, "num_chains", "sampler");
    else if (key == "warmup") base.warmup = get_field<int>(j, "warmup", "sampler");
    else if (key == "samples_per_chain") {
      base.samples_per_chain = get_field<int>(j, "samples_per_chain", "sampler");
    } else if (key == "seed") base.seed = get_field<std::uint64_t>(j, "seed", "sampler");
    else if (key == "target_accept") {
      base.target_accept = get_field<double>(j, "target_accept", "sampler");
    } else if (key == "max_tree_depth") {
      base.max_tree_depth = get_field<int>(j, "max_tree_depth", "sampler");
    } else if (key == "max_energy_error") {
      base.max_energy_error = get_field<double>(j, "max_energy_error", "sampler");
    } else if (key == "max_divergent_fraction") {
      base.max_divergent_fraction = get_field<double>(j, "max_divergent_fraction", "sampler");
    } else {
      throw InputError("sampler: unknown field '" + key + "'");
    }
  }
  try {
    base.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("sampler: ") + e.what());
  }
  return base;
}

ordered_json to_json(const PosteriorSummary& s) {
  ordered_json j;
  j["name"] = s.name;
  j["map"] = s.map;
  j["sd"] = s.sd;
  j["ci_low"] = s.ci_low;
  j["ci_high"] = s.ci_high;
  j["rhat"] = s.rhat ? ordered_json(*s.rhat) : ordered_json(nullptr);
  if (s.map_outside_ci) j["map_outside_ci"] = true;
  return j;
}

PosteriorSummary summary_from_json(const json& j) {
  PosteriorSummary s;
  s.name = j.at("name").get<std::string>();
  s.map = j.at("map").get<double>();
  s.sd = j.at("sd").get<double>();
  s.ci_low = j.at("ci_low").get<double>();
  s.ci_high = j.at("ci_high").get<double>();
  if (j.contains("rhat") && !j.at("rhat").is_null()) s.rhat = j.at("rhat").get<double>();
  s.map_outside_ci = j.value("map_outside_ci", false);
  return s;
}

ordered_json to_json(const CriterionReport& r, const std::string& model) {
  ordered_json j;
  j["model"] = model;
  j["waic"] = r.waic;
  j["wbic"] = r.wbic ? ordered_json(*r.wbic) : ordered_json(nullptr);
  j["lppd"] = r.lppd;
  j["p_waic"] = r.p_waic;
  return j;
}

ordered_json to_json(const std::vector<CategorySummary>& table) {
  ordered_json arr = ordered_json::array();
  for (const auto& s : table) {
    arr.push_back({{"category", s.category},
                   {"n_event", s.n_event},
                   {"n_censored", s.n_censored},
                   {"mean_duration", s.mean_duration},
                   {"sd_duration", s.sd_duration}});
  }
  return arr;
}

void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin_low,bin_high,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    os << format_double(h.edges[b]) << ',' << format_double(h.edges[b + 1]) << ',' << h.counts[b]
       << '\n';
  }
}

void write_curves_csv(std::ostream& os, const std::vector<CurveRow>& rows) {
  os << "category,t,pdf,cdf,survival,hazard\n";
  for (const auto& r : rows) {
    os << r.category << ',' << format_double(r.t) << ',' << format_double(r.pdf) << ','
       << format_double(r.cdf) << ',' << format_double(r.survival) << ','
       << format_double(r.hazard) << '\n';
  }
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
}

void write_json_file(const std::filesystem::path& path, const ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace bwsurv
