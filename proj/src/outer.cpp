#include "reglearn/outer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <thread>

namespace reglearn::outer {

int DataSet::control_dim() const {
  return u_hat.empty() ? 0 : static_cast<int>(u_hat.front().size());
}

void DataSet::validate() const {
  if (z_hat.empty() || z_hat.size() != u_hat.size())
    throw DimensionError("dataset needs matching, non-empty task and control lists");
  bounds.validate();
  const int n = control_dim();
  for (const Eigen::VectorXd& u : u_hat) {
    if (u.size() != n) throw DimensionError("controls have inconsistent dimensions");
    for (Eigen::Index i = 0; i < u.size(); ++i)
      if (u[i] < bounds.lower || u[i] > bounds.upper)
        throw DimensionError("ground-truth control leaves the admissible box");
  }
  for (const fem1d::StateField& z : z_hat)
    if (z.nodal.size() != mesh.node_count())
      throw DimensionError("task states must be nodal on the dataset mesh");
  if (static_cast<int>(group_map.size()) != mesh.cells)
    throw DimensionError("group_map length does not match cell count");
}

Eigen::VectorXd DataSet::mean_control() const {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(control_dim());
  for (const Eigen::VectorXd& u : u_hat) m += u;
  return m / static_cast<double>(size());
}

Eigen::VectorXd control_weights(const DataSet& data, const OuterConfig& cfg) {
  const int n = data.control_dim();
  if (!cfg.measure_weighted_norm) return Eigen::VectorXd::Ones(n);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
  for (int c = 0; c < data.mesh.cells; ++c) w[data.group_map[c]] += data.mesh.h;
  return w;
}

Eigen::MatrixXd assemble_hessian(const inner::InnerProblem& prob,
                                 const Eigen::VectorXd& u, const fem1d::StateField& y,
                                 const fem1d::StateField& p) {
  prob.validate();
  const int n = prob.control_dim();
  const fem1d::ControlField control = prob.make_control(u);

  std::vector<fem1d::StateField> tangent(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd dir = Eigen::VectorXd::Zero(n);
    dir[j] = 1.0;
    tangent[j] = fem1d::solve_linearized(control, y, dir, prob.mesh);
  }

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
  // Gauss-Newton block S'^T M S'.
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      const double v = fem1d::l2_inner(tangent[i], tangent[j], prob.mesh);
      h(i, j) += v;
      if (i != j) h(j, i) += v;
    }
  // Second-order state block: int e_i t_j' p' + int e_j t_i' p'.
  for (int j = 0; j < n; ++j) {
    const Eigen::VectorXd s = fem1d::grad_dot_integrals(control, tangent[j], p, prob.mesh);
    h.col(j) += s;
    h.row(j) += s.transpose();
  }
  // Network block: gamma'(r) . r_uu + J_u^T gamma''(r) J_u.
  mlp::ForwardTape tape;
  const Eigen::VectorXd r = mlp::forward(prob.arch, prob.weights, u, &tape);
  const mlp::DerivativeCache cache(prob.arch, prob.weights, tape);
  const Eigen::VectorXd gg = inner::gamma_grad(prob.gamma, r);
  const std::vector<Eigen::MatrixXd> r_uu = cache.hessian_uu();
  for (int i = 0; i < prob.arch.output_dim(); ++i) h += gg[i] * r_uu[i];
  const Eigen::MatrixXd gh = inner::gamma_hess(prob.gamma, r);
  if (gh.cwiseAbs().maxCoeff() > 0.0)
    h += cache.jacobian_u().transpose() * gh * cache.jacobian_u();

  if (!h.allFinite()) throw NumericalError("Hessian assembly produced non-finite entries");
  return 0.5 * (h + h.transpose());
}

namespace {

bool factorizable(const Eigen::MatrixXd& m) {
  const double scale = m.norm();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(m);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  return min_pivot > 1e-12 * scale;
}

}  // namespace

std::pair<Eigen::MatrixXd, double> epsilon_shift(const Eigen::MatrixXd& h,
                                                 double eps_request, int sign) {
  if (h.rows() != h.cols()) throw DimensionError("epsilon_shift needs a square matrix");
  if (sign != 1 && sign != -1) throw DimensionError("epsilon_shift sign must be +-1");
  if (factorizable(h)) return {h, 0.0};
  double eps = eps_request > 0.0 ? eps_request : 1e-12 * (1.0 + h.norm());
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(h.rows(), h.cols());
  for (;;) {
    const Eigen::MatrixXd shifted = h + sign * eps * id;
    if (factorizable(shifted)) return {shifted, eps};
    eps *= 2.0;  // terminates: for large eps the shift dominates the spectrum
  }
}

Eigen::VectorXd solve_costate(const Eigen::MatrixXd& h_shifted, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& u_hat,
                              const Eigen::VectorXd& weights) {
  if (h_shifted.rows() != h_shifted.cols() || h_shifted.rows() != u.size() ||
      u.size() != u_hat.size() || weights.size() != u.size())
    throw DimensionError("solve_costate: size mismatch");
  const Eigen::VectorXd rhs = -weights.cwiseProduct(u - u_hat);
  const Eigen::VectorXd mu = h_shifted.transpose().partialPivLu().solve(rhs);
  const double residual = (h_shifted.transpose() * mu - rhs).norm();
  if (residual > 1e-10 * std::max(rhs.norm(), 1e-300))
    throw NumericalError("costate solve residual " + std::to_string(residual) +
                         " exceeds tolerance");
  return mu;
}

double relative_misfit(const std::vector<Eigen::VectorXd>& u,
                       const std::vector<Eigen::VectorXd>& u_hat) {
  if (u.empty() || u.size() != u_hat.size())
    throw std::invalid_argument("relative_misfit: mismatched lists");
  return relative_misfit(u, u_hat, Eigen::VectorXd::Ones(u_hat.front().size()));
}

double relative_misfit(const std::vector<Eigen::VectorXd>& u,
                       const std::vector<Eigen::VectorXd>& u_hat,
                       const Eigen::VectorXd& weights) {
  if (u.empty() || u.size() != u_hat.size())
    throw std::invalid_argument("relative_misfit: mismatched lists");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    num += (u[k] - u_hat[k]).cwiseProduct(weights.cwiseSqrt()).squaredNorm();
    den += u_hat[k].cwiseProduct(weights.cwiseSqrt()).squaredNorm();
  }
  if (den == 0.0)
    throw std::invalid_argument("relative_misfit: ground-truth controls are all zero");
  return 100.0 * std::sqrt(num / den);
}

namespace {

inner::InnerProblem task_problem(const DataSet& data, const mlp::Architecture& arch,
                                 const mlp::WeightVector& w, const OuterConfig& cfg,
                                 int k) {
  return inner::InnerProblem{data.mesh,  data.data, data.z_hat[k], arch,
                             w,          cfg.gamma, data.group_map, data.bounds};
}

/// Runs fn(k) for k in [0, n) on up to `workers` threads. Exceptions from the
/// tasks are rethrown in the calling thread.
template <typename Fn>
void parallel_for(int n, int workers, Fn&& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::atomic<int> next{0};
  auto body = [&] {
    for (;;) {
      const int k = next.fetch_add(1);
      if (k >= n) return;
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<inner::InnerSolution> solve_all(const DataSet& data,
                                            const mlp::Architecture& arch,
                                            const mlp::WeightVector& w,
                                            const OuterConfig& cfg) {
  const Eigen::VectorXd u_init =
      inner::project_box(data.mean_control(), data.bounds);
  std::vector<inner::InnerSolution> sols(data.size());
  parallel_for(data.size(), cfg.workers, [&](int k) {
    sols[k] = inner::nesterov_solve(task_problem(data, arch, w, cfg, k), u_init,
                                    cfg.inner_opts);
  });
  return sols;
}

double objective_of(const DataSet& data, const std::vector<inner::InnerSolution>& sols,
                    const mlp::WeightVector& w, const OuterConfig& cfg,
                    const Eigen::VectorXd& weights) {
  double fit = 0.0;
  for (int k = 0; k < data.size(); ++k)
    fit += weights.cwiseProduct((sols[k].u - data.u_hat[k]).cwiseAbs2()).sum();
  const double wn = mlp::weight_norm(w);
  return fit / (2.0 * data.size()) + 0.5 * cfg.nu * wn * wn;
}

/// Adjoint of the map (layer direction) -> d G / d w_layer at (u_k, mu_k),
/// assembled entry by entry over unit directions of the layer.
mlp::Layer layer_adjoint(const inner::InnerProblem& prob, const mlp::DerivativeCache& cache,
                         const Eigen::VectorXd& gamma_g, const Eigen::MatrixXd& gamma_h,
                         const Eigen::VectorXd& mu, int layer, int rows, int cols) {
  mlp::Layer out{Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows)};
  mlp::Layer dir{Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows)};
  const bool curved = gamma_h.cwiseAbs().maxCoeff() > 0.0;
  const Eigen::VectorXd ju_mu = cache.jacobian_u() * mu;
  auto entry_value = [&]() {
    double v = gamma_g.dot(cache.mixed_uw(layer, dir) * mu);
    if (curved) v += ju_mu.dot(gamma_h * cache.jacobian_w(layer, dir));
    return v;
  };
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      dir.A(i, j) = 1.0;
      out.A(i, j) = entry_value();
      dir.A(i, j) = 0.0;
    }
  for (int i = 0; i < rows; ++i) {
    dir.b[i] = 1.0;
    out.b[i] = entry_value();
    dir.b[i] = 0.0;
  }
  (void)prob;
  return out;
}

}  // namespace

OuterEval outer_gradient(const DataSet& data, const mlp::Architecture& arch,
                         const mlp::WeightVector& w, const OuterConfig& cfg) {
  data.validate();
  const Eigen::VectorXd weights = control_weights(data, cfg);
  const int K = data.size();

  OuterEval ev;
  ev.solutions.resize(K);
  ev.eps_used.assign(K, 0.0);
  std::vector<mlp::WeightVector> contrib(K);

  const Eigen::VectorXd u_init = inner::project_box(data.mean_control(), data.bounds);
  parallel_for(K, cfg.workers, [&](int k) {
    const inner::InnerProblem prob = task_problem(data, arch, w, cfg, k);
    inner::InnerSolution sol = inner::nesterov_solve(prob, u_init, cfg.inner_opts);

    const Eigen::MatrixXd h = assemble_hessian(prob, sol.u, sol.y, sol.p);
    auto [h_shifted, eps] = epsilon_shift(h, cfg.eps_request, cfg.eps_sign);
    const Eigen::VectorXd mu = solve_costate(h_shifted, sol.u, data.u_hat[k], weights);

    mlp::ForwardTape tape;
    const Eigen::VectorXd r = mlp::forward(arch, w, sol.u, &tape);
    const mlp::DerivativeCache cache(arch, w, tape);
    const Eigen::VectorXd gg = inner::gamma_grad(cfg.gamma, r);
    const Eigen::MatrixXd gh = inner::gamma_hess(cfg.gamma, r);

    mlp::WeightVector g_k = mlp::zero_weights(arch);
    for (int l = 0; l < arch.layer_count(); ++l)
      g_k.layers[l] = layer_adjoint(prob, cache, gg, gh, mu, l, arch.widths[l + 1],
                                    arch.widths[l]);
    contrib[k] = std::move(g_k);
    ev.solutions[k] = std::move(sol);
    ev.eps_used[k] = eps;
  });

  // Fixed-order reduction keeps runs bit-identical for any worker count.
  mlp::WeightVector grad = mlp::zero_weights(arch);
  for (int k = 0; k < K; ++k) grad = mlp::weight_axpy(1.0 / K, grad, contrib[k]);
  if (cfg.nu != 0.0) grad = mlp::weight_axpy(cfg.nu, grad, w);

  std::vector<Eigen::VectorXd> u_list;
  u_list.reserve(K);
  for (const inner::InnerSolution& s : ev.solutions) u_list.push_back(s.u);
  ev.gradient = std::move(grad);
  ev.grad_norm = mlp::weight_norm(ev.gradient);
  ev.objective = objective_of(data, ev.solutions, w, cfg, weights);
  ev.misfit_percent = relative_misfit(u_list, data.u_hat, weights);
  return ev;
}

double outer_objective(const DataSet& data, const mlp::Architecture& arch,
                       const mlp::WeightVector& w, const OuterConfig& cfg) {
  data.validate();
  const Eigen::VectorXd weights = control_weights(data, cfg);
  return objective_of(data, solve_all(data, arch, w, cfg), w, cfg, weights);
}

namespace {

void record(TrainReport& report, const OuterEval& ev) {
  report.misfit_percent.push_back(ev.misfit_percent);
  report.grad_norm.push_back(ev.grad_norm);
  int iters = 0, boundary = 0, unconverged = 0;
  for (const inner::InnerSolution& s : ev.solutions) {
    iters += s.iterations;
    boundary += s.boundary_active ? 1 : 0;
    unconverged += s.converged ? 0 : 1;
  }
  report.inner_iterations.push_back(iters);
  report.boundary_active.push_back(boundary);
  report.inner_unconverged.push_back(unconverged);
}

}  // namespace

TrainReport bb_solve(const DataSet& data, const mlp::Architecture& arch,
                     const mlp::WeightVector& w0, const OuterConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  TrainReport report;

  mlp::WeightVector w = w0;
  OuterEval ev = outer_gradient(data, arch, w, cfg);
  record(report, ev);

  auto finish = [&](bool converged) {
    report.converged = converged;
    report.final_weights = w;
    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
  };

  if (ev.grad_norm <= cfg.tol || cfg.max_steps == 0) return finish(ev.grad_norm <= cfg.tol);

  // First update by backtracking on the outer objective.
  double step = 1.0;
  mlp::WeightVector w_next;
  bool decreased = false;
  for (int n = 0; n <= 60; ++n) {
    w_next = mlp::weight_axpy(-step, w, ev.gradient);
    if (outer_objective(data, arch, w_next, cfg) < ev.objective) {
      decreased = true;
      break;
    }
    step *= cfg.armijo_beta;
  }
  if (!decreased)
    throw StagnationError(
        "outer line search found no decrease at the initial weights; re-seed them");

  mlp::WeightVector w_prev = w;
  OuterEval ev_prev = ev;
  w = w_next;
  ev = outer_gradient(data, arch, w, cfg);
  record(report, ev);
  double eta_prev = step;

  for (int s = 2; s <= cfg.max_steps && ev.grad_norm > cfg.tol; ++s) {
    const mlp::WeightVector secant = mlp::weight_axpy(-1.0, w, w_prev);
    const mlp::WeightVector grad_diff =
        mlp::weight_axpy(-1.0, ev.gradient, ev_prev.gradient);
    const double denom = mlp::weight_dot(secant, grad_diff);
    double eta = denom > 0.0 ? mlp::weight_dot(secant, secant) / denom : eta_prev;
    eta = std::clamp(eta, 1e-8, 1e3);

    w_prev = w;
    ev_prev = ev;
    w = mlp::weight_axpy(-eta, w, ev.gradient);
    ev = outer_gradient(data, arch, w, cfg);
    record(report, ev);
    eta_prev = eta;
  }
  return finish(ev.grad_norm <= cfg.tol);
}

}  // namespace reglearn::outer
