#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "pipefuse/consensus.hpp"
#include "pipefuse/ekf.hpp"
#include "pipefuse/error.hpp"
#include "pipefuse/fusvaf.hpp"
#include "pipefuse/sim/config.hpp"
#include "pipefuse/sim/output.hpp"
#include "pipefuse/sim/simulation.hpp"

namespace py = pybind11;
using namespace pipefuse;

namespace {

using Edges = std::vector<std::pair<std::size_t, std::size_t>>;

py::dict ekf_filter(const std::vector<double>& values, double q, double r, std::optional<double> x0,
                    std::optional<double> p0) {
  if (values.empty()) throw Error(ErrorKind::empty_input, "no measurements");
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < values.size(); ++i) samples.push_back({static_cast<Tick>(i), values[i]});
  const Trace trace("py", SensorKind::pressure, samples);
  const ekf::FilterState init{ekf::Vector::Constant(1, x0.value_or(values.front())),
                              ekf::Matrix::Constant(1, 1, p0.value_or(r)), 0};
  const auto steps = ekf::run_filter(ekf::ProcessModel::random_walk(q, r), init, trace);
  Eigen::VectorXd est(static_cast<Eigen::Index>(steps.size())), var(est.size()), inn(est.size());
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    est(i) = steps[k].posterior.x_hat(0);
    var(i) = steps[k].posterior.P(0, 0);
    inn(i) = steps[k].innovation;
  }
  py::dict out;
  out["estimate"] = est;
  out["variance"] = var;
  out["innovation"] = inn;
  return out;
}

py::dict consensus_run(const std::vector<double>& values, const Edges& edges, double tol, std::size_t max_iter) {
  const consensus::CommGraph graph(values.size(), edges);
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  const auto r = consensus::run_consensus({x, 0}, graph, tol, max_iter);
  py::dict out;
  out["estimates"] = r.estimates;
  out["iterations"] = r.iterations;
  out["mse_history"] = r.mse_history;
  out["converged"] = r.converged;
  return out;
}

py::dict run_scenario(const std::string& path, const std::vector<std::string>& overrides,
                      std::optional<std::uint64_t> seed) {
  nlohmann::json doc = sim::with_defaults(sim::read_config_json(path));
  for (const auto& o : overrides) sim::apply_override(doc, o);
  if (seed) doc["simulation"]["seed"] = *seed;
  const sim::ScenarioConfig cfg = sim::parse_config(doc);
  const sim::RunMetrics m = sim::run_simulation(cfg);
  const auto names = sim::metrics_columns();
  const auto values = sim::metrics_values(m, cfg);
  py::dict out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (values[i].empty()) out[py::str(names[i])] = py::none();
    else out[py::str(names[i])] = std::stod(values[i]);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_pipefuse, m) {
  m.doc() = "State estimation, validated fusion and consensus for pipeline sensor networks";

  // Messages carry the error category so Python callers can match on it.
  static PyObject* error_type = nullptr;
  py::register_exception<Error>(m, "PipefuseError", PyExc_RuntimeError);
  error_type = m.attr("PipefuseError").ptr();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      PyErr_SetString(error_type, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  py::class_<fusvaf::ValidationGate>(m, "ValidationGate")
      .def(py::init<double, double, double, double, double>(), py::arg("x_hat"), py::arg("v_l"), py::arg("v_r"),
           py::arg("a_l"), py::arg("a_r"))
      .def_static("centered", &fusvaf::ValidationGate::centered, py::arg("x_hat"), py::arg("half_width"))
      .def_property_readonly("x_hat", &fusvaf::ValidationGate::x_hat)
      .def_property_readonly("v_l", &fusvaf::ValidationGate::v_l)
      .def_property_readonly("v_r", &fusvaf::ValidationGate::v_r)
      .def_property_readonly("a_l", &fusvaf::ValidationGate::a_l)
      .def_property_readonly("a_r", &fusvaf::ValidationGate::a_r)
      .def("confidence", [](const fusvaf::ValidationGate& g, double z) { return fusvaf::confidence(g, z); })
      .def(
          "fuse",
          [](const fusvaf::ValidationGate& g, const std::vector<double>& z, double alpha, double omega) {
            return fusvaf::fuse(g, {alpha, omega}, z);
          },
          py::arg("measurements"), py::arg("alpha") = 1.0, py::arg("omega") = 1.0);

  m.def("ekf_filter", &ekf_filter, py::arg("values"), py::arg("q") = 0.1, py::arg("r") = 0.1,
        py::arg("x0") = py::none(), py::arg("p0") = py::none(),
        "Scalar random-walk EKF over a sequence; returns estimate, variance and innovation arrays.");
  m.def(
      "metropolis_weights",
      [](std::size_t n, const Edges& edges) { return consensus::metropolis_weights(consensus::CommGraph(n, edges)); },
      py::arg("n"), py::arg("edges"));
  m.def("run_consensus", &consensus_run, py::arg("values"), py::arg("edges"), py::arg("tol") = 1e-12,
        py::arg("max_iter") = 10000);
  m.def("run_scenario", &run_scenario, py::arg("path"), py::arg("overrides") = std::vector<std::string>{},
        py::arg("seed") = py::none(), "Run a scenario file and return the metrics row as a dict.");
}
