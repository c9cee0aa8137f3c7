#include "bwsurv/commands.hpp"
#include "bwsurv/diagnostics.hpp"
#include "bwsurv/dists.hpp"
#include "bwsurv/io.hpp"
#include "bwsurv/model.hpp"
#include "bwsurv/posterior.hpp"
#include "bwsurv/sampler.hpp"
#include "bwsurv/simgen.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace bwsurv;

namespace {

py::array_t<double> draws_array(const ChainDraws& c) {
  py::array_t<double> out({c.num_draws, c.dim()});
  std::copy(c.draws.begin(), c.draws.end(), out.mutable_data());
  return out;
}

SamplerConfig make_config(int chains, int warmup, int samples, std::uint64_t seed,
                          double target_accept, int max_depth) {
  SamplerConfig cfg;
  cfg.num_chains = chains;
  cfg.warmup = warmup;
  cfg.samples_per_chain = samples;
  cfg.seed = seed;
  cfg.target_accept = target_accept;
  cfg.max_tree_depth = max_depth;
  cfg.validate();
  return cfg;
}

Dataset dataset_from_arrays(const std::vector<double>& duration, const std::vector<bool>& event,
                            const std::vector<int>& category, std::optional<double> horizon) {
  if (duration.size() != event.size() || duration.size() != category.size()) {
    throw std::invalid_argument("duration, event and category must have equal length");
  }
  std::vector<Observation> obs(duration.size());
  int K = 0;
  double h = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    obs[i] = {duration[i], event[i], category[i]};
    K = std::max(K, category[i]);
    h = std::max(h, duration[i]);
  }
  return Dataset(std::move(obs), K, horizon.value_or(h));
}

}  // namespace

PYBIND11_MODULE(_bwsurv, m) {
  m.doc() = "Bernoulli-Weibull survival models with NUTS inference";
  m.attr("__version__") = std::string(version());

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<SamplerFailure>(m, "SamplerFailure", PyExc_RuntimeError);
  py::register_exception<DiagnosticError>(m, "DiagnosticError", PyExc_ValueError);

  py::enum_<ModelVariant>(m, "Model")
      .value("baseline", ModelVariant::Baseline)
      .value("mixture", ModelVariant::Mixture)
      .value("hierarchical", ModelVariant::Hierarchical);

  m.def("weibull_pdf", [](double t, double shape, double scale) {
    return weibull_pdf(t, WeibullParams(shape, scale));
  });
  m.def("weibull_cdf", [](double t, double shape, double scale) {
    return weibull_cdf(t, WeibullParams(shape, scale));
  });
  m.def("weibull_survival", [](double t, double shape, double scale) {
    return weibull_survival(t, WeibullParams(shape, scale));
  });
  m.def("weibull_hazard", [](double t, double shape, double scale) {
    return weibull_hazard(t, WeibullParams(shape, scale));
  });

  py::class_<Observation>(m, "Observation")
      .def_readonly("duration", &Observation::duration)
      .def_readonly("event_observed", &Observation::event_observed)
      .def_readonly("category", &Observation::category);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&dataset_from_arrays), py::arg("duration"), py::arg("event"),
           py::arg("category"), py::arg("censor_horizon") = py::none())
      .def_property_readonly("num_categories", &Dataset::num_categories)
      .def_property_readonly("censor_horizon", &Dataset::censor_horizon)
      .def("__len__", &Dataset::size)
      .def("category_counts", &Dataset::category_counts)
      .def_property_readonly("duration",
                             [](const Dataset& d) {
                               std::vector<double> v;
                               for (const auto& o : d.observations()) v.push_back(o.duration);
                               return v;
                             })
      .def_property_readonly("event",
                             [](const Dataset& d) {
                               std::vector<bool> v;
                               for (const auto& o : d.observations()) v.push_back(o.event_observed);
                               return v;
                             })
      .def_property_readonly("category",
                             [](const Dataset& d) {
                               std::vector<int> v;
                               for (const auto& o : d.observations()) v.push_back(o.category);
                               return v;
                             })
      .def("to_csv", [](const Dataset& d) {
        std::ostringstream os;
        write_dataset_csv(os, d);
        return os.str();
      });

  m.def("read_csv", [](const std::filesystem::path& p) { return read_dataset_csv(p); });
  m.def("parse_csv", [](const std::string& text) {
    std::istringstream is(text);
    return read_dataset_csv(is);
  });

  m.def(
      "simulate",
      [](const std::string& scenario_json) {
        return generate(scenario_from_json(nlohmann::json::parse(scenario_json)));
      },
      py::arg("scenario_json"), "Generate a dataset from a scenario given as a JSON string.");
  m.def(
      "default_scenario", [](std::uint64_t seed) { return to_json(default_scenario(seed)).dump(); },
      py::arg("seed") = 1, "The built-in five-category scenario as a JSON string.");

  m.def(
      "log_likelihood",
      [](const Dataset& d, ModelVariant model, const std::vector<double>& params) {
        return log_likelihood(unflatten(params, model, d.num_categories()), d,
                              ModelSpec{model, {}});
      },
      py::arg("data"), py::arg("model"), py::arg("params"),
      "Log-likelihood at constrained parameter values in parameter-name order.");
  m.def(
      "parameter_names",
      [](ModelVariant model, int K) { return ParamLayout(model, K).names(); }, py::arg("model"),
      py::arg("num_categories") = 1);

  py::class_<ChainDraws>(m, "Chain")
      .def_readonly("names", &ChainDraws::names)
      .def_property_readonly("draws", &draws_array)
      .def_readonly("lp", &ChainDraws::lp)
      .def_readonly("log_lik", &ChainDraws::log_lik)
      .def_readonly("divergences", &ChainDraws::divergences)
      .def_readonly("accept_stat", &ChainDraws::accept_stat)
      .def_readonly("step_size", &ChainDraws::step_size)
      .def_readonly("temper", &ChainDraws::temper);

  m.def(
      "fit",
      [](const Dataset& d, ModelVariant model, int chains, int warmup, int samples,
         std::uint64_t seed, double target_accept, int max_depth, bool tempered) {
        const auto cfg = make_config(chains, warmup, samples, seed, target_accept, max_depth);
        const ModelSpec spec{model, {}};
        py::gil_scoped_release release;
        return tempered ? run_tempered(spec, d, cfg) : run_chains(spec, d, cfg);
      },
      py::arg("data"), py::arg("model") = ModelVariant::Hierarchical, py::arg("chains") = 4,
      py::arg("warmup") = 1000, py::arg("samples") = 1000, py::arg("seed") = 1,
      py::arg("target_accept") = 0.8, py::arg("max_depth") = 10, py::arg("tempered") = false);

  py::class_<PosteriorSummary>(m, "Summary")
      .def_readonly("name", &PosteriorSummary::name)
      .def_readonly("map", &PosteriorSummary::map)
      .def_readonly("sd", &PosteriorSummary::sd)
      .def_readonly("ci_low", &PosteriorSummary::ci_low)
      .def_readonly("ci_high", &PosteriorSummary::ci_high)
      .def_readonly("rhat", &PosteriorSummary::rhat)
      .def("__repr__", [](const PosteriorSummary& s) { return to_json(s).dump(); });

  m.def("summarize", &summarize_chains, py::arg("chains"));
  m.def(
      "summarize_draws",
      [](const std::vector<double>& draws, const std::string& name) {
        return summarize(std::span<const double>(draws), name);
      },
      py::arg("draws"), py::arg("name") = "x");

  py::class_<CriterionReport>(m, "CriterionReport")
      .def_readonly("waic", &CriterionReport::waic)
      .def_readonly("lppd", &CriterionReport::lppd)
      .def_readonly("p_waic", &CriterionReport::p_waic)
      .def_readonly("wbic", &CriterionReport::wbic)
      .def_readonly("high_variance_terms", &CriterionReport::high_variance_terms);

  m.def(
      "waic",
      [](const std::vector<ChainDraws>& chains, const Dataset& d, ModelVariant model) {
        return waic(chains, ModelSpec{model, {}}, d);
      },
      py::arg("chains"), py::arg("data"), py::arg("model"));
  m.def("wbic", &wbic, py::arg("tempered_chains"));
  m.def("split_rhat", py::overload_cast<std::span<const std::vector<double>>>(&split_rhat),
        py::arg("chains"));
  m.def("wbic_temperature", &wbic_temperature);

  m.def(
      "conversion_rate",
      [](const std::vector<double>& q, const std::vector<double>& shape,
         const std::vector<double>& scale, double horizon) {
        return conversion_rate(q, shape, scale, horizon).values;
      },
      py::arg("q"), py::arg("shape"), py::arg("scale"), py::arg("horizon") = 120.0);
  m.def(
      "risk_ratio",
      [](const std::vector<double>& q_k, const std::vector<double>& q_ref) {
        return risk_ratio(q_k, q_ref).values;
      },
      py::arg("q_k"), py::arg("q_ref"));
}
