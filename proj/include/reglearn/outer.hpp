#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "reglearn/inner.hpp"

namespace reglearn::outer {

/// K tasks (z_hat_k) with their ground-truth controls (u_hat_k), sharing one
/// mesh, source, grouping and bounds.
struct DataSet {
  fem1d::Mesh mesh{2};
  fem1d::ProblemData data;
  std::vector<int> group_map;
  fem1d::Bounds bounds;
  std::vector<fem1d::StateField> z_hat;
  std::vector<Eigen::VectorXd> u_hat;

  int size() const { return static_cast<int>(z_hat.size()); }
  int control_dim() const;
  void validate() const;
  /// Componentwise mean of the ground-truth controls, the stock start point
  /// for the per-task solves.
  Eigen::VectorXd mean_control() const;
};

struct OuterConfig {
  double nu = 0.0;             // weight penalty coefficient
  double eps_request = 1e-8;   // first shift tried when the Hessian is singular
  int eps_sign = +1;
  double tol = 1e-8;
  int max_steps = 100;
  double armijo_beta = 0.5;
  inner::InnerOptions inner_opts;
  inner::Gamma gamma = inner::Gamma::Identity;
  int workers = 1;
  /// Use group-measure weights in the control norm instead of plain Euclidean.
  bool measure_weighted_norm = false;
};

struct TrainReport {
  std::vector<double> misfit_percent;   // one entry per visited weight iterate
  std::vector<double> grad_norm;
  std::vector<int> inner_iterations;    // summed over tasks, per iterate
  std::vector<int> boundary_active;     // tasks with an active bound, per iterate
  std::vector<int> inner_unconverged;   // tasks flagged by the inner solver
  mlp::WeightVector final_weights;
  double wall_time_s = 0.0;
  bool converged = false;
};

/// Group measures (sum of cell lengths per group) when the weighted norm is
/// on, otherwise all ones.
Eigen::VectorXd control_weights(const DataSet& data, const OuterConfig& cfg);

/// Hessian of the reduced inner objective in the control, assembled from one
/// tangent solve per control direction:
///   H = S'^T M S' + sym(int e_i t_j' p') + network terms.
/// Requires y = S(u) and p the matching adjoint.
Eigen::MatrixXd assemble_hessian(const inner::InnerProblem& prob,
                                 const Eigen::VectorXd& u, const fem1d::StateField& y,
                                 const fem1d::StateField& p);

/// Returns (H, 0) when H factorizes with every LU pivot above 1e-12 * ||H||_F;
/// otherwise adds sign * eps * I with eps the smallest value in
/// {eps_request * 2^j} that makes the factorization succeed.
std::pair<Eigen::MatrixXd, double> epsilon_shift(const Eigen::MatrixXd& h,
                                                 double eps_request, int sign = +1);

/// Costate solve H^T mu = -(weights .* (u - u_hat)); verifies the residual to
/// 1e-10 relative and throws NumericalError past that.
Eigen::VectorXd solve_costate(const Eigen::MatrixXd& h_shifted, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& u_hat,
                              const Eigen::VectorXd& weights);

/// 100 * sqrt( sum_k |u_k - u_hat_k|^2 / sum_k |u_hat_k|^2 ).
double relative_misfit(const std::vector<Eigen::VectorXd>& u,
                       const std::vector<Eigen::VectorXd>& u_hat);
double relative_misfit(const std::vector<Eigen::VectorXd>& u,
                       const std::vector<Eigen::VectorXd>& u_hat,
                       const Eigen::VectorXd& weights);

/// Everything one weight-gradient evaluation produces.
struct OuterEval {
  mlp::WeightVector gradient;
  double grad_norm = 0.0;
  double objective = 0.0;
  double misfit_percent = 0.0;
  std::vector<inner::InnerSolution> solutions;
  std::vector<double> eps_used;
};

/// Gradient of the relaxed outer objective with respect to the weights:
/// solves every task, assembles and (if needed) shifts each Hessian, solves
/// the costates, and accumulates nu * w + (1/K) sum_k adj_w(u_k, mu_k).
OuterEval outer_gradient(const DataSet& data, const mlp::Architecture& arch,
                         const mlp::WeightVector& w, const OuterConfig& cfg);

/// (1/2K) sum_k |u_k - u_hat_k|^2 + (nu/2) ||w||^2 with u_k the per-task
/// solutions under the current weights.
double outer_objective(const DataSet& data, const mlp::Architecture& arch,
                       const mlp::WeightVector& w, const OuterConfig& cfg);

/// Trains the weights: backtracking for the first update, Barzilai-Borwein
/// steps afterwards, stopping at ||grad|| <= tol or max_steps updates.
TrainReport bb_solve(const DataSet& data, const mlp::Architecture& arch,
                     const mlp::WeightVector& w0, const OuterConfig& cfg);

}  // namespace reglearn::outer
