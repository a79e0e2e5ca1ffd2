#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "reglearn/datagen.hpp"
#include "reglearn/serialize.hpp"

namespace py = pybind11;
using namespace reglearn;

namespace {

mlp::Architecture make_arch(const std::vector<int>& widths, const std::string& activation) {
  mlp::Architecture arch{widths, mlp::activation_from_name(activation)};
  arch.validate();
  return arch;
}

outer::OuterConfig make_outer_config(double nu, double tol, int max_steps,
                                     double inner_tol, int inner_max_iter, int workers,
                                     double eps_request) {
  outer::OuterConfig cfg;
  cfg.nu = nu;
  cfg.tol = tol;
  cfg.max_steps = max_steps;
  cfg.inner_opts = {inner_tol, inner_max_iter, 0.5};
  cfg.workers = workers;
  cfg.eps_request = eps_request;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Adjoint-based training of neural-network regularizers for 1D "
            "conductivity identification";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<EllipticityError>(m, "EllipticityError", PyExc_ArithmeticError);
  py::register_exception<StagnationError>(m, "StagnationError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<GenerationError>(m, "GenerationError", PyExc_RuntimeError);

  py::class_<mlp::Architecture>(m, "Architecture")
      .def(py::init(&make_arch), py::arg("widths"), py::arg("activation") = "tanh")
      .def_readonly("widths", &mlp::Architecture::widths)
      .def_property_readonly("activation",
                             [](const mlp::Architecture& a) {
                               return std::string(mlp::activation_name(a.activation));
                             })
      .def("input_dim", &mlp::Architecture::input_dim)
      .def("output_dim", &mlp::Architecture::output_dim)
      .def("weight_count", [](const mlp::Architecture& a) { return mlp::weight_count(a); });

  py::class_<mlp::WeightVector>(m, "WeightVector")
      .def("flatten", &mlp::weight_flatten)
      .def("norm", &mlp::weight_norm);

  m.def("zero_weights", &mlp::zero_weights, py::arg("arch"));
  m.def(
      "random_weights",
      [](const mlp::Architecture& arch, double stddev, std::uint64_t seed) {
        Rng rng(seed);
        return mlp::random_weights(arch, stddev, rng);
      },
      py::arg("arch"), py::arg("stddev"), py::arg("seed"));
  m.def("unflatten_weights", &mlp::weight_unflatten, py::arg("arch"), py::arg("entries"));

  m.def(
      "forward",
      [](const mlp::Architecture& arch, const mlp::WeightVector& w,
         const Eigen::VectorXd& u) { return mlp::forward(arch, w, u); },
      py::arg("arch"), py::arg("weights"), py::arg("u"));
  m.def(
      "jacobian_u",
      [](const mlp::Architecture& arch, const mlp::WeightVector& w,
         const Eigen::VectorXd& u) {
        mlp::ForwardTape tape;
        mlp::forward(arch, w, u, &tape);
        return mlp::jacobian_u(arch, w, tape);
      },
      py::arg("arch"), py::arg("weights"), py::arg("u"));
  m.def(
      "hessian_uu",
      [](const mlp::Architecture& arch, const mlp::WeightVector& w,
         const Eigen::VectorXd& u) {
        mlp::ForwardTape tape;
        mlp::forward(arch, w, u, &tape);
        return mlp::hessian_uu(arch, w, tape);
      },
      py::arg("arch"), py::arg("weights"), py::arg("u"));
  m.def("lipschitz_bound", &mlp::lipschitz_bound, py::arg("arch"), py::arg("weights"));

  m.def(
      "solve_state",
      [](const Eigen::VectorXd& values, int cells, double f, double g_left,
         double g_right) {
        const fem1d::Mesh mesh(cells);
        const fem1d::ControlField u{
            values,
            fem1d::ControlField::uniform_groups(cells, static_cast<int>(values.size())),
            fem1d::Bounds{1e-12, 1e12}};
        return fem1d::solve_state(
                   u, fem1d::ProblemData::constant_source(mesh, f, g_left, g_right), mesh)
            .nodal;
      },
      py::arg("values"), py::arg("cells"), py::arg("f") = 1.0, py::arg("g_left") = 0.0,
      py::arg("g_right") = 0.0,
      "Nodal P1 solution of -(u y')' = f on (0,1) with Dirichlet data; the "
      "control values spread over uniform blocks of cells.");

  py::class_<outer::DataSet>(m, "DataSet")
      .def_property_readonly("size", &outer::DataSet::size)
      .def_property_readonly("control_dim", &outer::DataSet::control_dim)
      .def_property_readonly("u_hat",
                             [](const outer::DataSet& d) { return d.u_hat; })
      .def_property_readonly("z_hat",
                             [](const outer::DataSet& d) {
                               std::vector<Eigen::VectorXd> out;
                               for (const auto& z : d.z_hat) out.push_back(z.nodal);
                               return out;
                             });

  m.def(
      "gen_l2_dataset",
      [](int count, int groups, int cells, double f, double sample_lo, double sample_hi,
         double c_reg, std::uint64_t seed) {
        datagen::GenConfig cfg;
        cfg.count = count;
        cfg.groups = groups;
        cfg.mesh = fem1d::Mesh(cells);
        cfg.data = fem1d::ProblemData::constant_source(cfg.mesh, f, 0.0, 0.0);
        cfg.sample_lo = sample_lo;
        cfg.sample_hi = sample_hi;
        cfg.c_reg = c_reg;
        cfg.seed = seed;
        return datagen::gen_l2_dataset(cfg);
      },
      py::arg("count"), py::arg("groups"), py::arg("cells"), py::arg("f") = 15.0,
      py::arg("sample_lo") = 0.8, py::arg("sample_hi") = 1.5, py::arg("c_reg") = 1.5,
      py::arg("seed") = 1);

  m.def(
      "gen_noisy_dataset",
      [](int count, int groups, int cells, double f, double sample_lo, double sample_hi,
         double sigma_rel, std::uint64_t seed) {
        datagen::GenConfig cfg;
        cfg.count = count;
        cfg.groups = groups;
        cfg.mesh = fem1d::Mesh(cells);
        cfg.data = fem1d::ProblemData::constant_source(cfg.mesh, f, 0.0, 0.0);
        cfg.sample_lo = sample_lo;
        cfg.sample_hi = sample_hi;
        cfg.seed = seed;
        return datagen::gen_noisy_dataset(
            cfg, datagen::NoiseSpec{-1.0, sigma_rel, derive_seed(seed, 0x6e)});
      },
      py::arg("count"), py::arg("groups"), py::arg("cells"), py::arg("f") = 15.0,
      py::arg("sample_lo") = 1.0, py::arg("sample_hi") = 3.0, py::arg("sigma_rel") = 0.01,
      py::arg("seed") = 1);

  py::class_<inner::InnerSolution>(m, "InnerSolution")
      .def_readonly("u", &inner::InnerSolution::u)
      .def_property_readonly("y",
                             [](const inner::InnerSolution& s) { return s.y.nodal; })
      .def_readonly("grad_norm", &inner::InnerSolution::grad_norm)
      .def_readonly("iterations", &inner::InnerSolution::iterations)
      .def_readonly("objective", &inner::InnerSolution::objective)
      .def_readonly("converged", &inner::InnerSolution::converged);

  m.def(
      "solve_inner",
      [](const outer::DataSet& data, const mlp::Architecture& arch,
         const mlp::WeightVector& w, int task, double tol, int max_iter) {
        if (task < 0 || task >= data.size())
          throw DimensionError("task index out of range");
        inner::InnerProblem prob{data.mesh,       data.data,   data.z_hat[task], arch, w,
                                 inner::Gamma::Identity, data.group_map, data.bounds};
        return inner::nesterov_solve(prob, data.mean_control(), {tol, max_iter, 0.5});
      },
      py::arg("data"), py::arg("arch"), py::arg("weights"), py::arg("task") = 0,
      py::arg("tol") = 1e-10, py::arg("max_iter") = 5000);

  py::class_<outer::TrainReport>(m, "TrainReport")
      .def_readonly("misfit_percent", &outer::TrainReport::misfit_percent)
      .def_readonly("grad_norm", &outer::TrainReport::grad_norm)
      .def_readonly("inner_iterations", &outer::TrainReport::inner_iterations)
      .def_readonly("converged", &outer::TrainReport::converged)
      .def_readonly("wall_time_s", &outer::TrainReport::wall_time_s)
      .def_readonly("final_weights", &outer::TrainReport::final_weights);

  m.def(
      "train",
      [](const outer::DataSet& data, const mlp::Architecture& arch,
         const mlp::WeightVector& w0, double nu, double tol, int max_steps,
         double inner_tol, int inner_max_iter, int workers, double eps_request) {
        return outer::bb_solve(data, arch, w0,
                               make_outer_config(nu, tol, max_steps, inner_tol,
                                                 inner_max_iter, workers, eps_request));
      },
      py::arg("data"), py::arg("arch"), py::arg("w0"), py::arg("nu") = 0.0,
      py::arg("tol") = 1e-8, py::arg("max_steps") = 40, py::arg("inner_tol") = 1e-10,
      py::arg("inner_max_iter") = 5000, py::arg("workers") = 1,
      py::arg("eps_request") = 1e-8);

  m.def(
      "outer_gradient_norm",
      [](const outer::DataSet& data, const mlp::Architecture& arch,
         const mlp::WeightVector& w, double inner_tol, int inner_max_iter) {
        outer::OuterConfig cfg;
        cfg.inner_opts = {inner_tol, inner_max_iter, 0.5};
        return outer::outer_gradient(data, arch, w, cfg).grad_norm;
      },
      py::arg("data"), py::arg("arch"), py::arg("weights"), py::arg("inner_tol") = 1e-10,
      py::arg("inner_max_iter") = 5000);

  m.def("relative_misfit",
        py::overload_cast<const std::vector<Eigen::VectorXd>&,
                          const std::vector<Eigen::VectorXd>&>(&outer::relative_misfit),
        py::arg("u"), py::arg("u_hat"));

  m.def(
      "save_weights",
      [](const std::string& path, const mlp::Architecture& arch,
         const mlp::WeightVector& w) { io::save_json(io::weights_to_json(arch, w), path); },
      py::arg("path"), py::arg("arch"), py::arg("weights"));
  m.def(
      "load_weights",
      [](const std::string& path) { return io::weights_from_json(io::load_json(path)); },
      py::arg("path"));
  m.def(
      "save_dataset",
      [](const std::string& path, const outer::DataSet& data) {
        io::save_json(io::dataset_to_json(data), path);
      },
      py::arg("path"), py::arg("data"));
  m.def(
      "load_dataset",
      [](const std::string& path, double lower, double upper) {
        return io::dataset_from_json(io::load_json(path), fem1d::Bounds{lower, upper});
      },
      py::arg("path"), py::arg("lower") = 0.1, py::arg("upper") = 10.0);

#ifdef VERSION_INFO
#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)
  m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
  m.attr("__version__") = "dev";
#endif
}
