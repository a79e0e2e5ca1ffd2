#include <doctest.h>

#include <cmath>

#include "reglearn/datagen.hpp"
#include "reglearn/outer.hpp"
#include "support/fd.hpp"
#include "support/instances.hpp"

using namespace reglearn;
using namespace testsupport;

namespace {

/// Raw (unsymmetrized) Hessian rebuilt from the public pieces; the asymmetry
/// check below relies on this staying independent of assemble_hessian.
Eigen::MatrixXd raw_hessian(const inner::InnerProblem& prob, const Eigen::VectorXd& u,
                            const fem1d::StateField& y, const fem1d::StateField& p) {
  const int n = prob.control_dim();
  const fem1d::ControlField control = prob.make_control(u);
  std::vector<fem1d::StateField> tangent(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(n);
    dir[j] = 1.0;
    tangent[j] = fem1d::solve_linearized(control, y, dir, prob.mesh);
  }
  Eigen::MatrixXd h(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      h(i, j) = fem1d::l2_inner(tangent[i], tangent[j], prob.mesh);
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd s =
        fem1d::grad_dot_integrals(control, tangent[j], p, prob.mesh);
    h.col(j) += s;
    h.row(j) += s.transpose();
  }
  mlp::ForwardTape tape;
  const Eigen::VectorXd r = mlp::forward(prob.arch, prob.weights, u, &tape);
  const auto r_uu = mlp::hessian_uu(prob.arch, prob.weights, tape);
  const Eigen::VectorXd gg = inner::gamma_grad(prob.gamma, r);
  for (int i = 0; i < prob.arch.output_dim(); ++i) h += gg[i] * r_uu[i];
  const Eigen::MatrixXd gh = inner::gamma_hess(prob.gamma, r);
  const Eigen::MatrixXd ju = mlp::jacobian_u(prob.arch, prob.weights, tape);
  if (gh.cwiseAbs().maxCoeff() > 0.0) h += ju.transpose() * gh * ju;
  return h;
}

outer::DataSet self_consistent_dataset(const mlp::Architecture& arch,
                                       const mlp::WeightVector& w, int count,
                                       std::uint64_t seed) {
  // Ground truths are the inner solutions under the given network, so the
  // trained map already fits the data perfectly.
  const int groups = arch.input_dim();
  datagen::GenConfig cfg;
  cfg.count = count;
  cfg.groups = groups;
  cfg.sample_lo = 0.8;
  cfg.sample_hi = 2.0;
  cfg.mesh = fem1d::Mesh(20);
  cfg.data = fem1d::ProblemData::constant_source(cfg.mesh, 8.0, 0.0, 0.0);
  cfg.seed = seed;
  outer::DataSet ds{cfg.mesh,
                    cfg.data,
                    fem1d::ControlField::uniform_groups(cfg.mesh.cells, groups),
                    cfg.bounds,
                    {},
                    {}};
  const auto stars = datagen::sample_controls(cfg);
  for (const Eigen::VectorXd& star : stars) {
    const auto z = fem1d::solve_state(fem1d::ControlField{star, ds.group_map, ds.bounds},
                                      cfg.data, cfg.mesh);
    inner::InnerProblem prob{cfg.mesh,    cfg.data, z,        arch, w,
                             inner::Gamma::Identity, ds.group_map, ds.bounds};
    const auto sol = inner::nesterov_solve(prob, star, {1e-12, 20000, 0.5});
    REQUIRE(sol.converged);
    ds.z_hat.push_back(z);
    ds.u_hat.push_back(sol.u);
  }
  return ds;
}

mlp::WeightVector small_net(const mlp::Architecture& arch, std::uint64_t seed,
                            double scale) {
  mlp::WeightVector w = uniform_weights(arch, seed);
  for (mlp::Layer& l : w.layers) {
    l.A *= scale;
    l.b *= scale;
  }
  return w;
}

}  // namespace

TEST_SUITE("outer") {

TEST_CASE("hessian: Gauss-Newton form at a perfect fit is positive semidefinite") {
  auto prob = random_inner_problem(20, 4, 11);
  prob.weights = mlp::zero_weights(prob.arch);
  const Eigen::VectorXd u = uniform_vector(4, derive_seed(11, 1), 0.6, 2.5);
  prob.z_hat = fem1d::solve_state(prob.make_control(u), prob.data, prob.mesh);
  fem1d::StateField y, p;
  inner::gradient(prob, u, &y, &p);
  CHECK(p.nodal.norm() < 1e-14);  // zero residual, zero adjoint

  const Eigen::MatrixXd h = outer::assemble_hessian(prob, u, y, p);
  const Eigen::VectorXd eigs = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(h).eigenvalues();
  CHECK(eigs.minCoeff() >= -1e-12 * std::abs(eigs.maxCoeff()));
}

TEST_CASE("hessian: decoupled quadratic regularizer gives 3 I") {
  const auto [arch, w] = datagen::quadratic_regularizer(3, 1.5);
  const fem1d::Mesh mesh(12);
  inner::InnerProblem prob{
      mesh,
      fem1d::ProblemData::constant_source(mesh, 0.0, 0.0, 0.0),
      fem1d::StateField{Eigen::VectorXd::Zero(mesh.node_count())},
      arch,
      w,
      inner::Gamma::HalfSquaredNorm,
      fem1d::ControlField::uniform_groups(12, 3),
      fem1d::Bounds{0.1, 10.0}};
  const Eigen::VectorXd u = uniform_vector(3, 13, 0.5, 2.0);
  fem1d::StateField y, p;
  inner::gradient(prob, u, &y, &p);
  const Eigen::MatrixXd h = outer::assemble_hessian(prob, u, y, p);
  CHECK(rel_error(h, Eigen::MatrixXd(3.0 * Eigen::MatrixXd::Identity(3, 3))) < 1e-13);
}

TEST_CASE("hessian matches differencing of the gradient and is symmetric") {
  int instances = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto prob = random_inner_problem(20, 4, seed + 40);
    const Eigen::VectorXd u = uniform_vector(4, derive_seed(seed, 21), 0.6, 2.5);
    fem1d::StateField y, p;
    inner::gradient(prob, u, &y, &p);

    const Eigen::MatrixXd raw = raw_hessian(prob, u, y, p);
    CHECK((raw - raw.transpose()).norm() <= 1e-10 * raw.norm());

    const Eigen::MatrixXd h = outer::assemble_hessian(prob, u, y, p);
    CHECK(rel_error(h, Eigen::MatrixXd(0.5 * (raw + raw.transpose()))) < 1e-14);

    const Eigen::MatrixXd fd = fd_jacobian(
        [&](const Eigen::VectorXd& x) { return inner::gradient(prob, x); }, u, 1e-6);
    CHECK(rel_error(h, Eigen::MatrixXd(0.5 * (fd + fd.transpose()))) < 1e-4);
    ++instances;
  }
  CHECK(instances >= 10);
}

TEST_CASE("epsilon_shift closed cases") {
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(3, 3);
  auto [h1, e1] = outer::epsilon_shift(id, 0.5);
  CHECK(e1 == 0.0);
  CHECK((h1 - id).norm() == 0.0);

  const Eigen::MatrixXd zero1 = Eigen::MatrixXd::Zero(1, 1);
  auto [h2, e2] = outer::epsilon_shift(zero1, 0.25);
  CHECK(e2 == 0.25);
  CHECK(h2(0, 0) == 0.25);

  Eigen::MatrixXd d(2, 2);
  d << 0.0, 0.0, 0.0, 2.0;
  auto [h3, e3] = outer::epsilon_shift(d, 0.5);
  CHECK(e3 == 0.5);
  CHECK(h3(0, 0) == 0.5);
  CHECK(h3(1, 1) == 2.5);
}

TEST_CASE("epsilon_shift fixes rank-deficient Gram matrices") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(derive_seed(seed, 0x97a));
    const int n = 3 + static_cast<int>(rng.uniform(0.0, 7.0));
    const int r = 1 + static_cast<int>(rng.uniform(0.0, n - 1.0));
    Eigen::MatrixXd x(n, r);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < r; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    const Eigen::MatrixXd gram = x * x.transpose();  // rank <= r < n

    auto [shifted, eps] = outer::epsilon_shift(gram, 1e-6);
    CHECK(eps > 0.0);
    CHECK(std::abs(shifted.partialPivLu().determinant()) > 0.0);
    // The shifted matrix solves consistently.
    const Eigen::VectorXd rhs = uniform_vector(n, seed + 500);
    const Eigen::VectorXd sol = shifted.partialPivLu().solve(rhs);
    CHECK((shifted * sol - rhs).norm() <= 1e-8 * rhs.norm());
  }
}

TEST_CASE("solve_costate basics and residual") {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
  Eigen::VectorXd u = uniform_vector(4, 61, 0.5, 2.0);
  CHECK(outer::solve_costate(Eigen::MatrixXd::Identity(4, 4), u, u, ones).norm() == 0.0);

  const Eigen::VectorXd u_hat = uniform_vector(4, 62, 0.5, 2.0);
  const Eigen::VectorXd mu =
      outer::solve_costate(Eigen::MatrixXd::Identity(4, 4), u, u_hat, ones);
  CHECK(rel_error(mu, Eigen::VectorXd(-(u - u_hat))) < 1e-14);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Eigen::MatrixXd x(6, 6);
    Rng rng(derive_seed(seed, 0xabc));
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) x(i, j) = rng.uniform(-1.0, 1.0);
    const Eigen::MatrixXd spd =
        x * x.transpose() + 0.5 * Eigen::MatrixXd::Identity(6, 6);
    const Eigen::VectorXd a = uniform_vector(6, seed + 80, 0.2, 2.0);
    const Eigen::VectorXd b = uniform_vector(6, seed + 81, 0.2, 2.0);
    const Eigen::VectorXd m = outer::solve_costate(spd, a, b, Eigen::VectorXd::Ones(6));
    CHECK((spd.transpose() * m + (a - b)).norm() <= 1e-10 * (a - b).norm());
  }
}

TEST_CASE("relative_misfit closed cases") {
  std::vector<Eigen::VectorXd> u{uniform_vector(3, 70, 0.5, 2.0)};
  std::vector<Eigen::VectorXd> u_hat = u;
  CHECK(outer::relative_misfit(u, u_hat) == 0.0);
  std::vector<Eigen::VectorXd> zero{Eigen::VectorXd::Zero(3)};
  CHECK(outer::relative_misfit(zero, u_hat) == doctest::Approx(100.0).epsilon(1e-14));
  std::vector<Eigen::VectorXd> scaled{1.1 * u_hat[0]};
  CHECK(outer::relative_misfit(scaled, u_hat) == doctest::Approx(10.0).epsilon(1e-10));
  CHECK_THROWS_AS(outer::relative_misfit(zero, zero), std::invalid_argument);
}

TEST_CASE("outer_gradient reduces to nu w at a perfectly fit dataset") {
  const mlp::Architecture arch{{1, 4, 1}, mlp::Activation::Tanh};
  const mlp::WeightVector w = small_net(arch, 5, 0.2);
  const outer::DataSet data = self_consistent_dataset(arch, w, 3, 17);

  outer::OuterConfig cfg;
  cfg.nu = 0.3;
  cfg.inner_opts = {1e-12, 20000, 0.5};
  const outer::OuterEval ev = outer::outer_gradient(data, arch, w, cfg);
  CHECK(ev.misfit_percent < 1e-5);
  const mlp::WeightVector nu_w = mlp::weight_axpy(0.3 - 1.0, w, w);  // 0.3 * w
  CHECK(mlp::weight_norm(mlp::weight_axpy(-1.0, ev.gradient, nu_w)) < 1e-5);
}

TEST_CASE("outer_gradient matches differencing through the bilevel objective") {
  const mlp::Architecture arch{{1, 2, 1}, mlp::Activation::Tanh};
  const mlp::WeightVector w = small_net(arch, 23, 0.4);
  const outer::DataSet data = self_consistent_dataset(arch, small_net(arch, 29, 0.3), 1, 31);

  outer::OuterConfig cfg;
  cfg.inner_opts = {1e-12, 50000, 0.5};
  const outer::OuterEval ev = outer::outer_gradient(data, arch, w, cfg);

  const Eigen::VectorXd flat = mlp::weight_flatten(w);
  const Eigen::VectorXd fd = fd_gradient(
      [&](const Eigen::VectorXd& entries) {
        return outer::outer_objective(data, arch, mlp::weight_unflatten(arch, entries), cfg);
      },
      flat, 1e-4);
  CHECK(rel_error(mlp::weight_flatten(ev.gradient), fd) < 1e-3);
}

TEST_CASE("outer_objective: perfect fit leaves only the weight penalty") {
  const mlp::Architecture arch{{1, 3, 1}, mlp::Activation::Tanh};
  const mlp::WeightVector w = small_net(arch, 7, 0.2);
  const outer::DataSet data = self_consistent_dataset(arch, w, 2, 53);
  outer::OuterConfig cfg;
  cfg.inner_opts = {1e-12, 20000, 0.5};
  CHECK(outer::outer_objective(data, arch, w, cfg) < 1e-12);
  cfg.nu = 2.0;
  const double wn = mlp::weight_norm(w);
  CHECK(outer::outer_objective(data, arch, w, cfg) ==
        doctest::Approx(wn * wn).epsilon(1e-9));
}

TEST_CASE("bb_solve: stationary start produces a one-entry report") {
  const mlp::Architecture arch{{1, 3, 1}, mlp::Activation::Tanh};
  const mlp::WeightVector w = small_net(arch, 9, 0.2);
  const outer::DataSet data = self_consistent_dataset(arch, w, 2, 59);
  outer::OuterConfig cfg;
  cfg.inner_opts = {1e-12, 20000, 0.5};
  cfg.tol = 1e-4;  // the fit is exact to solver tolerance, norms are ~1e-6
  const outer::TrainReport report = outer::bb_solve(data, arch, w, cfg);
  CHECK(report.misfit_percent.size() == 1);
  CHECK(report.converged);
}

TEST_CASE("bb_solve: secant steps close a scalar-parameter gap superlinearly") {
  // Identity two-layer net: r(u) = a2 (a1 u + b1) + b2, so the inner gradient
  // only sees theta = a2 a1. The data is generated at theta* and training
  // must recover theta = theta*.
  const mlp::Architecture arch{{1, 1, 1}, mlp::Activation::Identity};
  mlp::WeightVector w_star = mlp::zero_weights(arch);
  w_star.layers[0].A(0, 0) = 1.0;
  w_star.layers[1].A(0, 0) = 0.8;
  const outer::DataSet data = self_consistent_dataset(arch, w_star, 2, 67);

  mlp::WeightVector w0 = mlp::zero_weights(arch);
  w0.layers[0].A(0, 0) = 1.0;
  w0.layers[1].A(0, 0) = 0.2;
  outer::OuterConfig cfg;
  cfg.inner_opts = {1e-12, 20000, 0.5};
  cfg.tol = 1e-9;
  cfg.max_steps = 25;
  const outer::TrainReport report = outer::bb_solve(data, arch, w0, cfg);
  CHECK(report.converged);
  const double theta = report.final_weights.layers[0].A(0, 0) *
                       report.final_weights.layers[1].A(0, 0);
  CHECK(theta == doctest::Approx(0.8).epsilon(1e-5));
  CHECK(report.misfit_percent.back() < 1e-4);
}

TEST_CASE("bb_solve: max_steps = 0 reports only the initial misfit") {
  const mlp::Architecture arch{{1, 2, 1}, mlp::Activation::Tanh};
  const outer::DataSet data = self_consistent_dataset(arch, small_net(arch, 3, 0.3), 2, 71);
  outer::OuterConfig cfg;
  cfg.max_steps = 0;
  cfg.inner_opts = {1e-10, 5000, 0.5};
  const outer::TrainReport report =
      outer::bb_solve(data, arch, small_net(arch, 4, 0.3), cfg);
  CHECK(report.misfit_percent.size() == 1);
  CHECK_FALSE(report.converged);
}

}  // TEST_SUITE
