#include "reglearn/inner.hpp"

#include <cmath>

namespace reglearn::inner {

double gamma_value(Gamma g, const Eigen::VectorXd& r) {
  switch (g) {
    case Gamma::Identity: return r[0];
    case Gamma::HalfSquaredNorm: return 0.5 * r.squaredNorm();
  }
  return 0.0;
}

Eigen::VectorXd gamma_grad(Gamma g, const Eigen::VectorXd& r) {
  switch (g) {
    case Gamma::Identity: return Eigen::VectorXd::Ones(1);
    case Gamma::HalfSquaredNorm: return r;
  }
  return {};
}

Eigen::MatrixXd gamma_hess(Gamma g, const Eigen::VectorXd& r) {
  switch (g) {
    case Gamma::Identity: return Eigen::MatrixXd::Zero(1, 1);
    case Gamma::HalfSquaredNorm:
      return Eigen::MatrixXd::Identity(r.size(), r.size());
  }
  return {};
}

void InnerProblem::validate() const {
  arch.validate();
  bounds.validate();
  if (gamma == Gamma::Identity && arch.output_dim() != 1)
    throw DimensionError("identity gamma requires a scalar network output");
  if (static_cast<int>(group_map.size()) != mesh.cells)
    throw DimensionError("group_map length does not match cell count");
  for (int c = 0; c < mesh.cells; ++c)
    if (group_map[c] < 0 || group_map[c] >= arch.input_dim())
      throw DimensionError("group_map entry out of network input range");
  if (z_hat.nodal.size() != mesh.node_count())
    throw DimensionError("task state must be nodal on the problem mesh");
  if (data.f_cell.size() != mesh.cells)
    throw DimensionError("source must have one value per cell");
}

fem1d::ControlField InnerProblem::make_control(const Eigen::VectorXd& values) const {
  return fem1d::ControlField{values, group_map, bounds};
}

double objective(const InnerProblem& prob, const Eigen::VectorXd& u) {
  const fem1d::StateField y = fem1d::solve_state(prob.make_control(u), prob.data, prob.mesh);
  const fem1d::StateField residual{y.nodal - prob.z_hat.nodal};
  const Eigen::VectorXd r = mlp::forward(prob.arch, prob.weights, u);
  return 0.5 * fem1d::l2_inner(residual, residual, prob.mesh) +
         gamma_value(prob.gamma, r);
}

Eigen::VectorXd gradient(const InnerProblem& prob, const Eigen::VectorXd& u,
                         fem1d::StateField* y_out, fem1d::StateField* p_out) {
  const fem1d::ControlField control = prob.make_control(u);
  const fem1d::StateField y = fem1d::solve_state(control, prob.data, prob.mesh);
  const fem1d::StateField p = fem1d::solve_adjoint(control, y, prob.z_hat, prob.mesh);

  mlp::ForwardTape tape;
  const Eigen::VectorXd r = mlp::forward(prob.arch, prob.weights, u, &tape);
  const Eigen::MatrixXd jac = mlp::jacobian_u(prob.arch, prob.weights, tape);

  Eigen::VectorXd g = jac.transpose() * gamma_grad(prob.gamma, r);
  g += fem1d::grad_dot_integrals(control, y, p, prob.mesh);
  if (y_out != nullptr) *y_out = y;
  if (p_out != nullptr) *p_out = p;
  return g;
}

Eigen::VectorXd project_box(Eigen::VectorXd u, const fem1d::Bounds& bounds) {
  bounds.validate();
  for (Eigen::Index i = 0; i < u.size(); ++i)
    u[i] = std::min(std::max(u[i], bounds.lower), bounds.upper);
  return u;
}

Eigen::VectorXd projected_gradient(const Eigen::VectorXd& u, const Eigen::VectorXd& g,
                                   const fem1d::Bounds& bounds) {
  Eigen::VectorXd pg = g;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    if (u[i] <= bounds.lower && g[i] > 0.0) pg[i] = 0.0;
    if (u[i] >= bounds.upper && g[i] < 0.0) pg[i] = 0.0;
  }
  return pg;
}

std::pair<Eigen::VectorXd, double> armijo_init(const InnerProblem& prob,
                                               const Eigen::VectorXd& u0,
                                               const Eigen::VectorXd& g0,
                                               double alpha, int cap) {
  if (g0.norm() == 0.0)
    throw std::invalid_argument("armijo_init: gradient is identically zero");
  const double j0 = objective(prob, u0);
  double step = 1.0;
  for (int n = 0; n <= cap; ++n) {
    const Eigen::VectorXd trial = project_box(u0 - step * g0, prob.bounds);
    if (objective(prob, trial) < j0) return {trial, step};
    step *= alpha;
  }
  throw StagnationError(
      "armijo_init: no decrease within " + std::to_string(cap) +
      " halvings; the gradient is numerically zero or not a descent direction");
}

namespace {

struct Eval {
  fem1d::StateField y, p;
  Eigen::VectorXd grad;
  double objective = 0.0;
  double pg_norm = 0.0;
};

Eval evaluate(const InnerProblem& prob, const Eigen::VectorXd& u) {
  Eval e;
  e.grad = gradient(prob, u, &e.y, &e.p);
  const fem1d::StateField residual{e.y.nodal - prob.z_hat.nodal};
  const Eigen::VectorXd r = mlp::forward(prob.arch, prob.weights, u);
  e.objective = 0.5 * fem1d::l2_inner(residual, residual, prob.mesh) +
                gamma_value(prob.gamma, r);
  e.pg_norm = projected_gradient(u, e.grad, prob.bounds).norm();
  return e;
}

bool on_boundary(const Eigen::VectorXd& u, const fem1d::Bounds& b) {
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (u[i] <= b.lower || u[i] >= b.upper) return true;
  return false;
}

InnerSolution pack(const Eigen::VectorXd& u, const Eval& e, int iterations,
                   const InnerProblem& prob, double tol, std::vector<double> history) {
  InnerSolution sol;
  sol.u = u;
  sol.y = e.y;
  sol.p = e.p;
  sol.grad_norm = e.pg_norm;
  sol.iterations = iterations;
  sol.objective = e.objective;
  sol.converged = e.pg_norm <= tol;
  sol.boundary_active = on_boundary(u, prob.bounds);
  sol.objective_history = std::move(history);
  return sol;
}

}  // namespace

namespace {

/// Near a minimizer the objective increments fall under double rounding while
/// the gradient still carries signal, so once the line search stagnates the
/// iteration switches to fixed-step projected gradient steps monitored by the
/// projected-gradient norm, halving the step whenever the norm grows.
void gradient_polish(const InnerProblem& prob, Eigen::VectorXd& x, Eval& cur,
                     double step, int& iterations, const InnerOptions& opts,
                     std::vector<double>& history) {
  while (iterations < opts.max_iter && cur.pg_norm > opts.tol && step > 1e-18) {
    const Eigen::VectorXd x_try = project_box(x - step * cur.grad, prob.bounds);
    const Eval next = evaluate(prob, x_try);
    ++iterations;  // every gradient evaluation counts against the budget
    if (next.pg_norm <= cur.pg_norm) {
      x = x_try;
      cur = next;
      history.push_back(cur.objective);
    } else {
      step *= 0.5;
    }
  }
}

}  // namespace

InnerSolution nesterov_solve(const InnerProblem& prob, const Eigen::VectorXd& u_init,
                             const InnerOptions& opts) {
  prob.validate();
  if (u_init.size() != prob.control_dim())
    throw DimensionError("u_init does not match the control dimension");

  std::vector<double> history;
  Eigen::VectorXd x = project_box(u_init, prob.bounds);
  Eval cur = evaluate(prob, x);
  history.push_back(cur.objective);
  if (cur.pg_norm <= opts.tol) return pack(x, cur, 0, prob, opts.tol, history);

  double step = 0.0;
  Eigen::VectorXd x_prev = x;
  try {
    auto [x1, s] = armijo_init(prob, x, cur.grad, opts.armijo_alpha);
    step = s;
    x = x1;
  } catch (const StagnationError&) {
    // Already within rounding of the floor; refine on the gradient alone.
    int iterations = 0;
    gradient_polish(prob, x, cur, 1.0, iterations, opts, history);
    return pack(x, cur, iterations, prob, opts.tol, history);
  }
  cur = evaluate(prob, x);
  history.push_back(cur.objective);
  int iterations = 1;
  int momentum = 1;  // steps since the last restart

  while (iterations < opts.max_iter && cur.pg_norm > opts.tol) {
    const double beta =
        static_cast<double>(momentum - 1) / static_cast<double>(momentum + 2);
    const Eigen::VectorXd v = project_box(x + beta * (x - x_prev), prob.bounds);
    const Eigen::VectorXd gv = gradient(prob, v);
    Eigen::VectorXd x_new = project_box(v - step * gv, prob.bounds);
    Eval next = evaluate(prob, x_new);

    if (next.objective > cur.objective) {
      // Function-value restart: drop momentum, re-derive the step at x.
      try {
        auto [xa, s] = armijo_init(prob, x, cur.grad, opts.armijo_alpha);
        step = s;
        x_new = xa;
        next = evaluate(prob, x_new);
        momentum = 1;
      } catch (const StagnationError&) {
        gradient_polish(prob, x, cur, step, iterations, opts, history);
        return pack(x, cur, iterations, prob, opts.tol, history);
      }
    } else {
      ++momentum;
    }

    x_prev = x;
    x = x_new;
    cur = next;
    history.push_back(cur.objective);
    ++iterations;
  }
  return pack(x, cur, iterations, prob, opts.tol, history);
}

}  // namespace reglearn::inner
