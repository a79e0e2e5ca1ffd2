#pragma once

#include <Eigen/Dense>

#include <utility>
#include <vector>

#include "reglearn/errors.hpp"
#include "reglearn/fem1d.hpp"
#include "reglearn/mlp.hpp"

namespace reglearn::inner {

/// Outer map applied to the network output inside the objective.
enum class Gamma { Identity, HalfSquaredNorm };

double gamma_value(Gamma g, const Eigen::VectorXd& r);
Eigen::VectorXd gamma_grad(Gamma g, const Eigen::VectorXd& r);
Eigen::MatrixXd gamma_hess(Gamma g, const Eigen::VectorXd& r);

/// One identification task: misfit against `z_hat` plus the network
/// regularizer, constrained by the 1D conductivity equation.
struct InnerProblem {
  fem1d::Mesh mesh;
  fem1d::ProblemData data;
  fem1d::StateField z_hat;
  mlp::Architecture arch;
  mlp::WeightVector weights;
  Gamma gamma = Gamma::Identity;
  std::vector<int> group_map;
  fem1d::Bounds bounds;

  int control_dim() const { return arch.input_dim(); }
  /// Throws unless shapes line up and (gamma == Identity => n_out == 1).
  void validate() const;
  fem1d::ControlField make_control(const Eigen::VectorXd& values) const;
};

struct InnerSolution {
  Eigen::VectorXd u;
  fem1d::StateField y;
  fem1d::StateField p;
  double grad_norm = 0.0;  // projected gradient norm at u
  int iterations = 0;
  double objective = 0.0;
  bool converged = false;
  bool boundary_active = false;  // some component sits exactly on a bound
  std::vector<double> objective_history;  // one value per accepted iterate
};

/// Reduced objective 0.5 || S(u) - z_hat ||_L2^2 + gamma(r(w, u)).
double objective(const InnerProblem& prob, const Eigen::VectorXd& u);

/// Gradient of the reduced objective via the adjoint state:
/// per group j, [J_u^T gamma'(r)]_j + int_{group j} y' p'.
/// Optionally returns the state and adjoint used.
Eigen::VectorXd gradient(const InnerProblem& prob, const Eigen::VectorXd& u,
                         fem1d::StateField* y_out = nullptr,
                         fem1d::StateField* p_out = nullptr);

/// Componentwise clamp into [bounds.lower, bounds.upper].
Eigen::VectorXd project_box(Eigen::VectorXd u, const fem1d::Bounds& bounds);

/// Gradient with blocked components zeroed: at the lower bound only descent
/// directions pointing inward count, likewise at the upper bound.
Eigen::VectorXd projected_gradient(const Eigen::VectorXd& u, const Eigen::VectorXd& g,
                                   const fem1d::Bounds& bounds);

/// Backtracking initialization: smallest n >= 0 with
/// J(project(u0 - alpha^n g0)) < J(u0). Returns the new point and the step.
/// Throws std::invalid_argument when g0 = 0 and StagnationError when no
/// decrease is found within `cap` halvings.
std::pair<Eigen::VectorXd, double> armijo_init(const InnerProblem& prob,
                                               const Eigen::VectorXd& u0,
                                               const Eigen::VectorXd& g0,
                                               double alpha = 0.5, int cap = 60);

struct InnerOptions {
  double tol = 1e-10;
  int max_iter = 5000;
  double armijo_alpha = 0.5;
};

/// Accelerated projected gradient descent. The step comes from the initial
/// backtracking; whenever the objective increases the momentum is dropped and
/// the step is re-derived by backtracking from the current iterate.
InnerSolution nesterov_solve(const InnerProblem& prob, const Eigen::VectorXd& u_init,
                             const InnerOptions& opts = {});

}  // namespace reglearn::inner
