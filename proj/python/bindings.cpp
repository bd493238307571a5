#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pmoe/attention.hpp"
#include "pmoe/error.hpp"
#include "pmoe/estimation/degenerate.hpp"
#include "pmoe/estimation/rates.hpp"
#include "pmoe/estimation/voronoi.hpp"
#include "pmoe/hide/runner.hpp"
#include "pmoe/moe_view.hpp"
#include "pmoe/norga.hpp"
#include "pmoe/verify.hpp"

namespace py = pybind11;
using namespace pmoe;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-D array, got " + std::to_string(a.ndim()) + "-D");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

HeadParams make_head(const Array& w_q, const Array& w_k, const Array& w_v) {
  HeadParams h{Tensor(to_matrix(w_q)), Tensor(to_matrix(w_k)), Tensor(to_matrix(w_v))};
  h.validate();
  return h;
}

Prefix make_prefix(const Array& p_k, const Array& p_v) {
  Prefix p{Tensor(to_matrix(p_k)), Tensor(to_matrix(p_v))};
  p.validate();
  return p;
}

estimation::GateKind gate_kind(const std::string& gate, const std::string& activation) {
  if (gate == "linear") return estimation::GateKind::linear();
  if (gate == "norga") return estimation::GateKind::norga(parse_activation(activation));
  throw ConfigError("gate must be 'norga' or 'linear', got '" + gate + "'");
}

py::dict metrics_dict(const hide::ClMetrics& m) {
  py::dict d;
  d["FA"] = m.fa;
  d["CA"] = m.ca;
  d["FM"] = m.fm;
  d["A_t"] = m.a;
  return d;
}

py::dict slope_dict(const estimation::SlopeFit& s) {
  py::dict d;
  d["slope"] = s.slope;
  d["intercept"] = s.intercept;
  d["half_width"] = s.half_width;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Prefix tuning as mixture of experts: attention/MoE views, NoRGa, rate and continual-learning experiments";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ProtocolError>(m, "ProtocolError", PyExc_RuntimeError);
  py::register_exception<ExperimentError>(m, "ExperimentError", PyExc_RuntimeError);

  m.def(
      "head_forward",
      [](const Array& x, const Array& w_q, const Array& w_k, const Array& w_v) {
        return to_array(head_forward(Tensor(to_matrix(x)), make_head(w_q, w_k, w_v)).value());
      },
      py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"));

  m.def(
      "moe_head_row",
      [](const Array& x, const Array& w_q, const Array& w_k, const Array& w_v, std::size_t i) {
        return moe_head_row(to_matrix(x), make_head(w_q, w_k, w_v), i);
      },
      py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"), py::arg("i"));

  m.def(
      "gate_weights",
      [](const Array& x, const Array& w_q, const Array& w_k, const Array& w_v, const Array& p_k, const Array& p_v,
         std::size_t i) { return gate_weights(to_matrix(x), make_head(w_q, w_k, w_v), make_prefix(p_k, p_v), i); },
      py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"), py::arg("p_k"), py::arg("p_v"), py::arg("i"));

  m.def(
      "norga_head_forward",
      [](const Array& x, const Array& w_q, const Array& w_k, const Array& w_v, const Array& p_k, const Array& p_v,
         double alpha, double tau, const std::string& activation) {
        const auto gate = NorgaGate::fixed(parse_activation(activation), alpha, tau);
        return to_array(
            norga_attention(Tensor(to_matrix(x)), make_head(w_q, w_k, w_v), make_prefix(p_k, p_v), gate).value());
      },
      py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"), py::arg("p_k"), py::arg("p_v"),
      py::arg("alpha") = 1.0, py::arg("tau") = 1.0, py::arg("activation") = "tanh");

  m.def(
      "verify",
      [](std::size_t trials, std::size_t grad_trials, std::uint64_t seed) {
        VerifyConfig cfg{trials, grad_trials, seed};
        std::vector<PropertyResult> results;
        {
          py::gil_scoped_release release;
          results = run_oracle_suite(cfg);
        }
        py::list out;
        for (const auto& r : results) {
          py::dict d;
          d["name"] = r.name;
          d["passed"] = r.passed;
          d["instances"] = r.instances;
          d["max_deviation"] = r.max_deviation;
          d["tolerance"] = r.tolerance;
          d["worst_seed"] = r.worst_seed;
          out.append(d);
        }
        return out;
      },
      py::arg("trials") = 200, py::arg("grad_trials") = 50, py::arg("seed") = 0);

  m.def(
      "degenerate_curve",
      [](const std::vector<double>& ns, double r, std::size_t mc_points, std::uint64_t seed) {
        const auto p = estimation::default_problem(estimation::GateKind::linear());
        py::list out;
        for (const auto& pt : estimation::degenerate_curve(p, ns, r, mc_points, seed)) {
          py::dict d;
          d["n"] = pt.n;
          d["loss"] = pt.loss;
          d["closed_form"] = pt.closed_form;
          d["l2"] = pt.l2;
          d["ratio"] = pt.ratio;
          out.append(d);
        }
        return out;
      },
      py::arg("ns"), py::arg("r") = 1.0, py::arg("mc_points") = 100000, py::arg("seed") = 0);

  m.def(
      "rate_experiment",
      [](const std::string& gate, const std::string& activation, const std::vector<std::size_t>& ns, int trials,
         std::size_t extra_atoms, std::size_t mc_points, int restarts, double nu, std::uint64_t seed, int jobs) {
        const auto p = estimation::default_problem(gate_kind(gate, activation));
        estimation::RateConfig cfg;
        cfg.ns = ns;
        cfg.trials = trials;
        cfg.fitted_atoms = p.g_star.size() + extra_atoms;
        cfg.mc_points = mc_points;
        cfg.fit.restarts = restarts;
        cfg.nu = nu;
        cfg.seed = seed;
        cfg.jobs = jobs;
        estimation::RateResult res;
        {
          py::gil_scoped_release release;
          res = estimation::rate_experiment(p, cfg);
        }
        py::dict d;
        d["gate"] = res.gate;
        d["fitted_atoms"] = res.fitted_atoms;
        d["slope_l1"] = slope_dict(res.slope_l1);
        d["slope_l2r"] = slope_dict(res.slope_l2r);
        d["slope_l2mu"] = slope_dict(res.slope_l2mu);
        py::list rows;
        for (const auto& r : res.records) {
          py::dict row;
          row["n"] = r.n;
          row["trial"] = r.trial;
          row["loss_l1"] = r.loss_l1;
          row["loss_l2r"] = r.loss_l2r;
          row["l2mu_error"] = r.l2mu_error;
          row["failed"] = r.failed;
          rows.append(row);
        }
        d["records"] = rows;
        return d;
      },
      py::arg("gate") = "norga", py::arg("activation") = "tanh",
      py::arg("ns") = std::vector<std::size_t>{200, 400, 800, 1600, 3200, 6400}, py::arg("trials") = 20,
      py::arg("extra_atoms") = 0, py::arg("mc_points") = 20000, py::arg("restarts") = 8, py::arg("nu") = 0.1,
      py::arg("seed") = 0, py::arg("jobs") = 1);

  m.def(
      "cl_metrics", [](const Array& s) { return metrics_dict(hide::cl_metrics(to_matrix(s))); }, py::arg("s"));

  m.def(
      "run_cl",
      [](const std::string& gate, const std::string& activation, std::uint64_t seed, std::size_t tasks,
         std::size_t epochs, std::size_t prompt_length) {
        hide::RunConfig cfg;
        cfg.seed = seed;
        cfg.stream.tasks = tasks;
        cfg.hide.epochs = epochs;
        cfg.hide.prompt_length = prompt_length;
        cfg.hide.activation = parse_activation(activation);
        if (gate == "linear") cfg.hide.gate = hide::PromptGate::Linear;
        else if (gate == "none") cfg.hide.prompt_length = 0;
        else if (gate != "norga") throw ConfigError("gate must be 'norga', 'linear' or 'none', got '" + gate + "'");
        cfg.stream.validate();
        cfg.hide.validate();
        hide::RunResult r;
        {
          py::gil_scoped_release release;
          r = hide::run_stream(cfg);
        }
        py::dict d = metrics_dict(r.metrics);
        d["oracle"] = metrics_dict(r.oracle_metrics);
        d["S"] = to_array(r.s);
        d["isolation_ok"] = r.isolation_ok;
        d["prompts_frozen_ok"] = r.prompts_frozen_ok;
        d["alpha"] = r.alpha;
        d["tau"] = r.tau;
        return d;
      },
      py::arg("gate") = "norga", py::arg("activation") = "tanh", py::arg("seed") = 0, py::arg("tasks") = 5,
      py::arg("epochs") = 20, py::arg("prompt_length") = 4);
}
