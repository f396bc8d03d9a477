#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spconf/areal.hpp"
#include "spconf/cli.hpp"
#include "spconf/errors.hpp"
#include "spconf/inference.hpp"
#include "spconf/metrics.hpp"
#include "spconf/simstudy.hpp"
#include "spconf/tgmrf.hpp"

namespace py = pybind11;
using namespace spconf;

namespace {

std::vector<ParamEstimate> estimates(const Eigen::VectorXd& mean, const Eigen::VectorXd& sd, const Eigen::VectorXd& lo,
                                     const Eigen::VectorXd& hi) {
  const Eigen::Index k = mean.size();
  if (sd.size() != k || lo.size() != k || hi.size() != k) throw ValidationError("estimate arrays differ in length");
  std::vector<ParamEstimate> v;
  for (Eigen::Index i = 0; i < k; ++i) v.push_back({mean(i), sd(i), lo(i), hi(i)});
  return v;
}

py::dict summary_dict(const PosteriorSummary& ps) {
  py::list params;
  for (const auto& p : ps.parameters) {
    py::dict d;
    d["name"] = p.name;
    d["mean"] = p.mean;
    d["sd"] = p.sd;
    d["q025"] = p.q025;
    d["q975"] = p.q975;
    d["rhat"] = p.rhat;
    d["ess"] = p.ess;
    params.append(d);
  }
  std::vector<std::string> names;
  for (const auto& p : ps.parameters) names.push_back(p.name);
  py::dict out;
  out["model"] = ps.model;
  out["parameters"] = params;
  out["names"] = names;
  out["samples"] = ps.samples;
  out["fitted_risk"] = ps.fitted_risk;
  out["waic"] = ps.waic;
  out["p_waic"] = ps.p_waic;
  out["converged"] = ps.converged;
  out["warning"] = ps.warning;
  out["metadata"] = ps.metadata;
  return out;
}

McmcConfig mcmc_from(int chains, int iterations, int burn_in, int thin, std::uint64_t seed, int workers) {
  McmcConfig c;
  c.chains = chains;
  c.iterations = iterations;
  c.burn_in = burn_in;
  c.thin = thin;
  c.seed = seed;
  c.workers = workers;
  c.validate();
  return c;
}

std::vector<py::dict> rows(const StudySummary& s) {
  std::vector<py::dict> out;
  for (const auto& r : s.rows) {
    py::dict d;
    d["scenario"] = r.scenario;
    d["subscenario"] = r.subscenario;
    d["model"] = r.model;
    d["metric"] = r.metric;
    d["value"] = r.value;
    out.push_back(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_spconf, m) {
  m.doc() = "Spatial confounding models for areal count data";

  auto err = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", err);
  py::register_exception<ParseError>(m, "ParseError", err);
  py::register_exception<IoError>(m, "IoError", err);
  py::register_exception<NumericError>(m, "NumericError", err);

  m.def("version", &version);

  py::class_<AreaGraph>(m, "AreaGraph")
      .def_static("from_edges", &AreaGraph::from_edges, py::arg("n"), py::arg("edges"))
      .def_property_readonly("size", &AreaGraph::size)
      .def_property_readonly("edges", &AreaGraph::edges)
      .def_property_readonly("n_components", &AreaGraph::n_components)
      .def("neighbours", &AreaGraph::neighbours)
      .def("icar_precision", [](const AreaGraph& g) { return icar_precision(g).dense(); })
      .def("__len__", &AreaGraph::size);
  m.def("load_graph", &load_graph, py::arg("path"));
  m.def("lattice_graph", &lattice_graph, py::arg("rows"), py::arg("cols"));

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("y", &Dataset::y)
      .def_readonly("e", &Dataset::e)
      .def_readonly("X", &Dataset::X)
      .def_readonly("covariate_names", &Dataset::covariate_names)
      .def_readonly("covariate_means", &Dataset::covariate_means)
      .def_readonly("covariate_sds", &Dataset::covariate_sds)
      .def("__len__", &Dataset::size);
  m.def(
      "make_dataset",
      [](Eigen::VectorXd y, Eigen::VectorXd e, Eigen::MatrixXd X, std::vector<std::string> names,
         Eigen::MatrixXd centroids) { return make_dataset(y, e, X, names, centroids); },
      py::arg("y"), py::arg("e"), py::arg("X"), py::arg("names") = std::vector<std::string>{},
      py::arg("centroids") = Eigen::MatrixXd());
  m.def(
      "ingest",
      [](const std::string& csv, const std::string& adj) {
        IngestedData in = ingest_dataset(csv, adj);
        return py::make_tuple(in.data, in.graph);
      },
      py::arg("csv"), py::arg("adj"), "Read an area CSV and its adjacency; returns (dataset, graph).");

  m.def(
      "fit",
      [](const std::string& model, const Dataset& d, const AreaGraph& g, int chains, int iterations, int burn_in,
         int thin, std::uint64_t seed) {
        const McmcConfig cfg = mcmc_from(chains, iterations, burn_in, thin, seed, 1);
        const ModelSpec spec = ModelSpec::from_name(model);
        PosteriorSummary ps;
        {
          py::gil_scoped_release release;
          ps = fit_model(d, MapStructure::build(g), spec, PriorSpec{}, cfg);
        }
        ps.model = spec.name;
        return summary_dict(ps);
      },
      py::arg("model"), py::arg("data"), py::arg("graph"), py::arg("chains") = 3, py::arg("iterations") = 10000,
      py::arg("burn_in") = 2000, py::arg("thin") = 20, py::arg("seed") = 20240101,
      "Fit one model (Null, Spatial, RSR, SpatPlus<k>, TGMRF1, ...) and return its posterior summary.");

  m.def(
      "simulate",
      [](int scenario, double cor, int study, int K, std::vector<std::string> models, int chains, int iterations,
         int burn_in, int thin, std::uint64_t seed, int workers) {
        std::vector<ModelSpec> specs;
        for (const auto& n : models) specs.push_back(ModelSpec::from_name(n));
        ScenarioSpec s;
        s.scenario = scenario;
        s.correlation_target = cor;
        s.study = study;
        if (study == 2) s.beta2 = 0.0;
        s.K = K;
        s.seed = seed;
        s.field_correlation_target = reference_field_correlation(scenario);
        const McmcConfig cfg = mcmc_from(chains, iterations, burn_in, thin, seed, 1);
        StudyResult r;
        {
          py::gil_scoped_release release;
          r = run_study(s, desk_map(), specs, PriorSpec{}, cfg, workers);
        }
        py::dict out;
        out["summary"] = rows(r.summary);
        out["achieved_correlation"] = r.data.achieved_correlation;
        out["cor_x1_S"] = r.data.cor_x1_S;
        out["n_failed"] = r.failures.size();
        return out;
      },
      py::arg("scenario"), py::arg("cor"), py::arg("study") = 1, py::arg("K") = 10,
      py::arg("models") = std::vector<std::string>{"Null", "Spatial", "RSR"}, py::arg("chains") = 2,
      py::arg("iterations") = 2000, py::arg("burn_in") = 500, py::arg("thin") = 5, py::arg("seed") = 20240101,
      py::arg("workers") = 1, "Run one scenario of the simulation study on the desk lattice map.");

  m.def("waic", [](const Eigen::MatrixXd& ll) { return waic(ll); }, py::arg("loglik"));
  m.def(
      "se_sim_and_est",
      [](const Eigen::VectorXd& mean, const Eigen::VectorXd& sd) {
        const SeResult r = se_sim_and_est(estimates(mean, sd, mean, mean));
        return py::make_tuple(r.se_sim, r.se_est);
      },
      py::arg("mean"), py::arg("sd"));
  m.def(
      "coverage_and_length",
      [](const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, double truth) {
        const CoverageResult r = coverage_and_length(estimates(lo, lo, lo, hi), truth);
        return py::make_tuple(r.coverage, r.length);
      },
      py::arg("lo"), py::arg("hi"), py::arg("truth"));
  m.def(
      "type_s_rate",
      [](const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) { return type_s_rate(estimates(lo, lo, lo, hi)); },
      py::arg("lo"), py::arg("hi"));
  m.def(
      "marb_mrrmse",
      [](const Eigen::VectorXd& mean, double truth, bool mean_of_abs) {
        const BiasResult r = marb_mrrmse(estimates(mean, mean, mean, mean), truth,
                                         mean_of_abs ? MarbVariant::MeanOfAbs : MarbVariant::AbsOfMean);
        return py::make_tuple(r.marb, r.mrrmse);
      },
      py::arg("mean"), py::arg("truth"), py::arg("mean_of_abs") = false);

  m.def(
      "scaled_car_precision", [](const AreaGraph& g, double rho) { return scaled_car_precision(g, rho).Q_star; },
      py::arg("graph"), py::arg("rho"));
}
