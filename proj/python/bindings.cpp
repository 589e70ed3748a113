#include "fbmxcov/analysis.hpp"
#include "fbmxcov/errors.hpp"
#include "fbmxcov/function_spec.hpp"
#include "fbmxcov/quadrature.hpp"
#include "fbmxcov/run_config.hpp"
#include "fbmxcov/simulate.hpp"
#include "fbmxcov/version.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <variant>

namespace py = pybind11;
using namespace fbmxcov;

namespace {

using FunctionArg = std::variant<GFunction, std::string>;

GFunction as_function(const FunctionArg& f) {
  if (const auto* s = std::get_if<std::string>(&f)) return parse_function_spec(*s);
  return std::get<GFunction>(f);
}

QuadratureConfig quadrature_config(int base_cells, int gauss_nodes, double target, std::optional<double> grading,
                                   unsigned threads) {
  QuadratureConfig c;
  c.base_cells_per_axis = base_cells;
  c.gauss_nodes_per_cell = gauss_nodes;
  c.target_rel_error = target;
  c.diagonal_grading_exponent = grading;
  c.threads = threads;
  return c;
}

py::dict covariance_dict(const CovarianceResult& r) {
  py::dict d;
  d["value"] = r.value;
  d["isometry_term"] = r.isometry_term;
  d["trace_term"] = r.trace_term;
  d["est_rel_error"] = r.est_rel_error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_fbmxcov, m) {
  m.doc() = "Covariance of divergence integrals of fractional Brownian motion";
  m.attr("__version__") = kVersion;

  auto non_convergence = py::register_exception<NonConvergenceError>(m, "NonConvergenceError", PyExc_RuntimeError);
  py::register_exception<QuadratureError>(m, "QuadratureError", PyExc_RuntimeError);
  py::register_exception<SingularPointError>(m, "SingularPointError", PyExc_ValueError);
  py::register_exception<SpecParseError>(m, "SpecParseError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  (void)non_convergence;

  py::class_<GFunction>(m, "GFunction")
      .def_static("constant", &GFunction::constant)
      .def_static("identity", &GFunction::identity)
      .def_static("sign", &GFunction::sign)
      .def_static("tanh", &GFunction::tanh)
      .def_static("sine", &GFunction::sine)
      .def_static(
          "steps",
          [](const std::vector<std::pair<double, double>>& jumps, double base) {
            std::vector<Jump> js;
            for (auto [loc, size] : jumps) js.push_back({loc, size});
            return GFunction::steps(js, base);
          },
          py::arg("jumps"), py::arg("base_value") = 0.0)
      .def_static("parse", [](const std::string& s) { return parse_function_spec(s); })
      .def("__call__", &GFunction::operator())
      .def("__add__", [](const GFunction& a, const GFunction& b) { return a + b; })
      .def("mollify", [](const GFunction& f, int n) { return mollify(f, n); })
      .def_property_readonly("label", &GFunction::label)
      .def("__repr__", [](const GFunction& f) { return "GFunction(" + f.label() + ")"; });

  m.def("covariance_rh", [](double t, double s, double h) { return covariance_rh(t, s, HurstParameter(h)); });
  m.def("gamma_kernel", [](double tau, double sigma, double h) { return gamma_kernel(tau, sigma, HurstParameter(h)); });

  m.def(
      "cross_covariance",
      [](const FunctionArg& F, const FunctionArg& G, double t, double s, double h, int base_cells, int gauss_nodes,
         double target, std::optional<double> grading, unsigned threads) {
        const auto cfg = quadrature_config(base_cells, gauss_nodes, target, grading, threads);
        const GFunction f = as_function(F), g = as_function(G);
        CovarianceResult r;
        {
          py::gil_scoped_release nogil;
          r = cross_covariance(f, g, t, s, HurstParameter(h), cfg);
        }
        return covariance_dict(r);
      },
      py::arg("F"), py::arg("G"), py::arg("t"), py::arg("s"), py::arg("hurst"), py::arg("base_cells") = 8,
      py::arg("gauss_nodes") = 6, py::arg("target_rel_error") = 1e-6, py::arg("grading_exponent") = py::none(),
      py::arg("threads") = 0);

  m.def(
      "m_kernel",
      [](const FunctionArg& F, const FunctionArg& G, double tau, double sigma, double h) {
        return m_kernel(as_function(F), as_function(G), tau, sigma, HurstParameter(h));
      },
      py::arg("F"), py::arg("G"), py::arg("tau"), py::arg("sigma"), py::arg("hurst"));
  m.def(
      "p_kernel",
      [](const FunctionArg& F, const FunctionArg& G, double tau, double sigma, double h) {
        return p_kernel(as_function(F), as_function(G), tau, sigma, HurstParameter(h));
      },
      py::arg("F"), py::arg("G"), py::arg("tau"), py::arg("sigma"), py::arg("hurst"));
  m.def(
      "integrand_at",
      [](const FunctionArg& F, const FunctionArg& G, double tau, double sigma, double h) {
        return integrand_at(as_function(F), as_function(G), tau, sigma, HurstParameter(h));
      },
      py::arg("F"), py::arg("G"), py::arg("tau"), py::arg("sigma"), py::arg("hurst"));

  m.def(
      "mc_cross_covariance",
      [](const FunctionArg& F, const FunctionArg& G, double t, double s, double h, std::size_t steps,
         std::size_t n_paths, std::uint64_t seed, const std::string& generator, unsigned threads) {
        EnsembleParams p;
        p.steps = steps;
        p.n_paths = n_paths;
        p.seed = Seed{seed};
        p.generator = generator_from_string(generator);
        p.threads = threads;
        const GFunction f = as_function(F), g = as_function(G);
        McEstimate r;
        {
          py::gil_scoped_release nogil;
          r = mc_cross_covariance(f, g, t, s, HurstParameter(h), p);
        }
        py::dict d;
        d["estimate"] = r.estimate;
        d["std_error"] = r.std_error;
        d["n_paths"] = r.n_paths;
        return d;
      },
      py::arg("F"), py::arg("G"), py::arg("t"), py::arg("s"), py::arg("hurst"), py::arg("steps") = 512,
      py::arg("n_paths") = 100000, py::arg("seed") = 12345, py::arg("generator") = "circulant",
      py::arg("threads") = 0);

  m.def(
      "sample_paths",
      [](double h, double horizon, std::size_t steps, std::size_t n_paths, std::uint64_t seed,
         const std::string& generator) {
        const auto sampler =
            make_sampler(generator_from_string(generator), TimeGrid::uniform(horizon, steps), HurstParameter(h), Seed{seed});
        return PathMatrix(generate(*sampler, n_paths).paths);
      },
      py::arg("hurst"), py::arg("horizon"), py::arg("steps"), py::arg("n_paths"), py::arg("seed") = 12345,
      py::arg("generator") = "circulant",
      "Array of shape (n_paths, steps + 1) with fBm values on a uniform grid; column 0 is zero.");

  m.def(
      "not_fbm_test",
      [](const FunctionArg& F, const FunctionArg& G, double h, const std::vector<std::array<double, 4>>& probes,
         const std::vector<double>& htilde) {
        std::vector<ProbePair> pp;
        for (const auto& p : probes) pp.push_back({p[0], p[1], p[2], p[3]});
        const auto r = not_fbm_test(as_function(F), as_function(G), HurstParameter(h), pp, htilde);
        py::dict d;
        d["not_fbm"] = r.not_fbm;
        d["verdict"] = r.verdict;
        d["reasoning"] = r.reasoning;
        py::list rows;
        for (const auto& p : r.probes) {
          rows.append(py::dict(py::arg("first") = p.first.value, py::arg("second") = p.second.value,
                               py::arg("rel_discrepancy") = p.rel_discrepancy, py::arg("separated") = p.separated));
        }
        d["probes"] = rows;
        return d;
      },
      py::arg("F"), py::arg("G"), py::arg("hurst"),
      py::arg("probes") = std::vector<std::array<double, 4>>{{1.0, 0.5, 1.5, 1.0}},
      py::arg("htilde_grid") = std::vector<double>{0.55, 0.65, 0.75, 0.85, 0.95});

  m.def(
      "brownian_limit_study",
      [](const FunctionArg& F, const FunctionArg& G, double t, double s, const std::vector<double>& eps) {
        const auto r = brownian_limit_study(as_function(F), as_function(G), t, s, eps);
        py::dict d;
        d["target"] = r.target;
        d["extrapolated"] = r.extrapolated;
        d["deviations_weakly_decreasing"] = r.deviations_weakly_decreasing;
        d["alpha_gamma_ratios"] = r.alpha_gamma_ratios;
        std::vector<double> values, deviations;
        for (const auto& l : r.levels) values.push_back(l.covariance.value), deviations.push_back(l.deviation);
        d["values"] = values;
        d["deviations"] = deviations;
        return d;
      },
      py::arg("F"), py::arg("G"), py::arg("t"), py::arg("s"),
      py::arg("eps_ladder") = std::vector<double>{0.1, 0.05, 0.025});

  m.def(
      "finiteness_check",
      [](double h, double T) {
        const auto r = finiteness_check(HurstParameter(h), T);
        return py::dict(py::arg("value") = r.value, py::arg("coarse_value") = r.coarse_value,
                        py::arg("rel_change") = r.rel_change);
      },
      py::arg("hurst"), py::arg("T") = 1.0);

  m.def(
      "run",
      [](const std::string& config_json) {
        const auto out = run(config_from_json(config_json));
        return py::make_tuple(out.exit_code, out.message);
      },
      py::arg("config_json"), "Run a command from a JSON config; returns (exit_code, message).");
}
