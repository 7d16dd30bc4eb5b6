#include "cbfd/check.hpp"
#include "cbfd/dagger.hpp"
#include "cbfd/io.hpp"
#include "cbfd/qp.hpp"
#include "cbfd/wopt.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace cbfd;

namespace {

using ScenarioPtr = std::shared_ptr<Scenario>;

Box make_box(const Vec& lo, const Vec& hi) {
  Box b{lo, hi};
  b.validate();
  return b;
}

// Policies accepted from Python: the expert, a trained network or any callable.
Policy to_policy(const py::object& obj) {
  if (py::isinstance<ExpertPolicy>(obj)) return obj.cast<const ExpertPolicy&>().as_policy();
  if (py::isinstance<MlpPolicy>(obj)) return obj.cast<const MlpPolicy&>().as_policy();
  auto fn = obj.cast<std::function<Vec(const Vec&)>>();
  return [fn](const Vec& x) {
    py::gil_scoped_acquire gil;
    return fn(x);
  };
}

py::dict trajectory_dict(const Scenario& sc, const Trajectory& t) {
  const auto rows = static_cast<Eigen::Index>(t.size());
  Mat x(rows, sc.dynamics.n), u(rows, sc.dynamics.mu), w(rows, sc.dynamics.l);
  Vec times(rows);
  for (Eigen::Index k = 0; k < rows; ++k) {
    times[k] = t.times[static_cast<std::size_t>(k)];
    x.row(k) = t.states[static_cast<std::size_t>(k)].transpose();
    u.row(k) = t.controls[static_cast<std::size_t>(k)].transpose();
    w.row(k) = t.disturbances[static_cast<std::size_t>(k)].transpose();
  }
  std::ostringstream csv;
  write_trajectory_csv(csv, sc, t);
  py::dict d;
  d["t"] = times;
  d["x"] = x;
  d["u"] = u;
  d["w"] = w;
  d["termination"] = to_string(t.termination);
  d["failure"] = t.failure_message;
  d["min_h"] = t.min_barrier_values();
  d["safe"] = t.safe();
  d["reached_goal"] = t.reached_goal();
  d["csv"] = csv.str();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Robust HOCBF safety filter, simulator and DAgger policy distillation";
  m.attr("__version__") = CBFD_VERSION;

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", error.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", error.ptr());
  py::register_exception<SeparabilityViolation>(m, "SeparabilityViolation", error.ptr());
  py::register_exception<Infeasible>(m, "Infeasible", error.ptr());
  py::register_exception<DimMismatch>(m, "DimMismatch", error.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", error.ptr());
  py::register_exception<ExpertFailure>(m, "ExpertFailure", error.ptr());

  py::class_<Scenario, ScenarioPtr>(m, "Scenario")
      .def_static(
          "load", [](const std::string& name_or_path) { return std::make_shared<Scenario>(make_scenario(load_scenario_config(name_or_path))); },
          py::arg("name_or_path"), "Builtin name or path to a scenario JSON file")
      .def_static(
          "from_json",
          [](const std::string& text) {
            return std::make_shared<Scenario>(make_scenario(scenario_config_from_json(nlohmann::json::parse(text))));
          },
          py::arg("text"))
      .def_property_readonly("name", [](const Scenario& s) { return s.name; })
      .def_property_readonly("n", [](const Scenario& s) { return s.dynamics.n; })
      .def_property_readonly("mu", [](const Scenario& s) { return s.dynamics.mu; })
      .def_property_readonly("l", [](const Scenario& s) { return s.dynamics.l; })
      .def_property_readonly("barrier_ids",
                             [](const Scenario& s) {
                               std::vector<std::string> ids;
                               for (const auto& b : s.barriers) ids.push_back(b.id);
                               return ids;
                             })
      .def("config_json", [](const Scenario& s) { return to_json(s.config).dump(); })
      .def("h",
           [](const Scenario& s, const Vec& x) {
             if (x.size() != s.dynamics.n) throw DimMismatch("h: state has wrong dimension");
             std::vector<double> out;
             for (const auto& b : s.barriers) out.push_back(b.h(x));
             return out;
           },
           py::arg("x"))
      .def("rows",
           [](const Scenario& s, const Vec& x) {
             if (x.size() != s.dynamics.n) throw DimMismatch("rows: state has wrong dimension");
             std::vector<std::tuple<Vec, double, std::string>> out;
             for (const auto& b : s.barriers) {
               const ConstraintRow r = assemble_row(s.dynamics, b, x, s.dist_box());
               out.emplace_back(r.a, r.b, r.barrier_id);
             }
             return out;
           },
           py::arg("x"), "Robust constraint rows (a, b, id) meaning a.u >= b")
      .def("u_ref", [](const Scenario& s, const Vec& x) { return s.u_ref(x); }, py::arg("x"))
      .def("sample_initial_state", [](const Scenario& s, std::uint64_t seed) { return sample_initial_state(s, seed); },
           py::arg("seed"));

  py::class_<ExpertPolicy>(m, "Expert")
      .def(py::init([](ScenarioPtr sc, const std::string& fallback) {
             return ExpertPolicy(std::move(sc), fallback_from_string(fallback));
           }),
           py::arg("scenario"), py::arg("fallback") = "error")
      .def("control", [](const ExpertPolicy& e, const Vec& x) { return e.control(x).first; }, py::arg("x"))
      .def("diagnostics", [](const ExpertPolicy& e, const Vec& x) { return to_json(e.control(x).second).dump(); },
           py::arg("x"))
      .def("__call__", [](const ExpertPolicy& e, const Vec& x) { return e(x); }, py::arg("x"));

  py::class_<MlpPolicy>(m, "Mlp")
      .def(py::init([](std::vector<int> dims, std::uint64_t seed, const std::string& fmap) {
             return MlpPolicy(std::move(dims), seed, feature_map_from_string(fmap));
           }),
           py::arg("dims"), py::arg("seed") = 0, py::arg("feature_map") = "identity")
      .def_static(
          "zeros",
          [](std::vector<int> dims, const std::string& fmap) {
            return MlpPolicy::zeros(std::move(dims), feature_map_from_string(fmap));
          },
          py::arg("dims"), py::arg("feature_map") = "identity")
      .def_static("from_json", [](const std::string& text) { return mlp_from_json(nlohmann::json::parse(text)); },
                  py::arg("text"))
      .def("to_json", [](const MlpPolicy& p) { return to_json(p).dump(); })
      .def_property_readonly("layer_dims", &MlpPolicy::layer_dims)
      .def("forward", [](const MlpPolicy& p, const Vec& features) { return p.forward(features); }, py::arg("features"))
      .def("act", &MlpPolicy::act, py::arg("x"))
      .def("__call__", &MlpPolicy::act, py::arg("x"));

  m.def("solve_linear_wopt",
        [](const Vec& c, const Vec& lo, const Vec& hi) { return solve_linear_wopt(c, make_box(lo, hi)); },
        py::arg("c"), py::arg("lo"), py::arg("hi"), "argmax over the box of -c.w");
  m.def(
      "solve_box_qp_wopt",
      [](const Mat& q, const Vec& c, const Vec& lo, const Vec& hi) {
        const BoxQpSolution s = solve_box_qp_wopt({q, c, make_box(lo, hi)});
        return py::make_tuple(s.w, s.value);
      },
      py::arg("q"), py::arg("c"), py::arg("lo"), py::arg("hi"), "argmax over the box of -w'Qw - c.w, and its value");
  m.def(
      "solve_control_qp",
      [](const Vec& u_ref, const Mat& a, const Vec& b, std::optional<Vec> u_lo, std::optional<Vec> u_hi) {
        if (a.rows() != b.size() || (a.rows() && a.cols() != u_ref.size())) {
          throw DimMismatch("solve_control_qp: A must be (rows x mu) with one b per row");
        }
        if (u_lo.has_value() != u_hi.has_value()) throw InvalidArgument("solve_control_qp: give both u_lo and u_hi");
        ControlQp qp{u_ref, {}, std::nullopt};
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
          qp.rows.push_back({a.row(i).transpose(), b[i], "row" + std::to_string(i)});
        }
        if (u_lo) qp.u_box = make_box(*u_lo, *u_hi);
        return solve_control_qp(qp);
      },
      py::arg("u_ref"), py::arg("a"), py::arg("b"), py::arg("u_lo") = py::none(), py::arg("u_hi") = py::none(),
      "min ||u - u_ref||^2 subject to A u >= b");

  m.def(
      "rollout",
      [](ScenarioPtr sc, const py::object& policy, const std::string& dist, std::uint64_t seed,
         std::optional<Vec> x0) {
        const Policy p = to_policy(policy);
        const DisturbanceSignal sig = disturbance_from_string(dist, sc->dynamics.l);
        RolloutOptions opts;
        opts.x0 = std::move(x0);
        Trajectory t;
        {
          py::gil_scoped_release release;
          t = rollout(*sc, p, sig, seed, opts);
        }
        return trajectory_dict(*sc, t);
      },
      py::arg("scenario"), py::arg("policy"), py::arg("dist") = "zero", py::arg("seed") = 0,
      py::arg("x0") = py::none());

  m.def(
      "render_svg",
      [](ScenarioPtr sc, const py::object& policy, const std::string& dist, const std::vector<std::uint64_t>& seeds) {
        const Policy p = to_policy(policy);
        const DisturbanceSignal sig = disturbance_from_string(dist, sc->dynamics.l);
        std::vector<Trajectory> trajs;
        py::gil_scoped_release release;
        for (auto s : seeds) trajs.push_back(rollout(*sc, p, sig, s, {}));
        return render_svg(*sc, trajs);
      },
      py::arg("scenario"), py::arg("policy"), py::arg("dist") = "zero", py::arg("seeds") = std::vector<std::uint64_t>{0});

  m.def(
      "check_scenario",
      [](ScenarioPtr sc, int states, std::uint64_t seed) {
        CheckReport r;
        {
          py::gil_scoped_release release;
          r = check_scenario(*sc, states, seed);
        }
        return to_json(r).dump();
      },
      py::arg("scenario"), py::arg("states") = 200, py::arg("seed") = 0, "Derivative and separability checks (JSON)");

  m.def("dagger_beta", &dagger_beta, py::arg("p"), py::arg("i"));

  m.def(
      "run_dagger",
      [](ScenarioPtr sc, double p, int iterations, int n_init_samples, int epochs, int record_stride,
         std::vector<int> hidden, std::uint64_t seed, const std::string& fallback) {
        DaggerConfig cfg;
        cfg.p = p;
        cfg.iterations = iterations;
        cfg.n_init_samples = n_init_samples;
        cfg.train.epochs = epochs;
        cfg.record_stride = record_stride;
        cfg.hidden = std::move(hidden);
        cfg.seed = seed;
        const ExpertPolicy expert(sc, fallback_from_string(fallback));
        std::optional<DaggerResult> res;
        {
          py::gil_scoped_release release;
          res = run_dagger(sc, expert, cfg);
        }
        nlohmann::json report = to_json(res->report);
        report["config"] = to_json(cfg);
        return py::make_tuple(res->policy, report.dump());
      },
      py::arg("scenario"), py::arg("p") = 0.8, py::arg("iterations") = 15, py::arg("n_init_samples") = 20,
      py::arg("epochs") = TrainConfig{}.epochs, py::arg("record_stride") = DaggerConfig{}.record_stride,
      py::arg("hidden") = DaggerConfig{}.hidden, py::arg("seed") = 0, py::arg("fallback") = "error",
      "Returns (selected policy, report JSON)");
}
