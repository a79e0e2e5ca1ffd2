#include "reglearn/datagen.hpp"

#include <cmath>
#include <string>

namespace reglearn::datagen {

void GenConfig::validate() const {
  if (count < 1) throw DimensionError("need at least one pair");
  bounds.validate();
  if (!(sample_lo <= sample_hi) || sample_lo < bounds.lower || sample_hi > bounds.upper)
    throw DimensionError("sampling range must sit inside the admissible box");
  if (data.f_cell.size() != mesh.cells)
    throw DimensionError("source must have one value per cell");
  if (groups < 1 || groups > mesh.cells)
    throw DimensionError("group count must lie in [1, cells]");
}

std::pair<mlp::Architecture, mlp::WeightVector> quadratic_regularizer(int dim, double c) {
  if (dim < 1 || c < 0.0) throw DimensionError("quadratic_regularizer: bad arguments");
  mlp::Architecture arch{{dim, dim, dim}, mlp::Activation::Identity};
  mlp::WeightVector w = mlp::zero_weights(arch);
  w.layers[0].A = Eigen::MatrixXd::Identity(dim, dim);
  w.layers[1].A = std::sqrt(2.0 * c) * Eigen::MatrixXd::Identity(dim, dim);
  return {arch, w};
}

std::vector<Eigen::VectorXd> sample_controls(const GenConfig& cfg) {
  cfg.validate();
  std::vector<Eigen::VectorXd> controls(cfg.count);
  for (int k = 0; k < cfg.count; ++k) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(k)));
    Eigen::VectorXd u(cfg.groups);
    for (int j = 0; j < cfg.groups; ++j) u[j] = rng.uniform(cfg.sample_lo, cfg.sample_hi);
    controls[k] = u;
  }
  return controls;
}

namespace {

outer::DataSet blank_dataset(const GenConfig& cfg) {
  outer::DataSet ds{cfg.mesh,
                    cfg.data,
                    fem1d::ControlField::uniform_groups(cfg.mesh.cells, cfg.groups),
                    cfg.bounds,
                    {},
                    {}};
  return ds;
}

}  // namespace

outer::DataSet gen_l2_dataset(const GenConfig& cfg) {
  outer::DataSet ds = blank_dataset(cfg);
  const auto [arch, weights] = quadratic_regularizer(cfg.groups, cfg.c_reg);
  const std::vector<Eigen::VectorXd> ground = sample_controls(cfg);

  for (int k = 0; k < cfg.count; ++k) {
    const fem1d::ControlField star{ground[k], ds.group_map, cfg.bounds};
    const fem1d::StateField z = fem1d::solve_state(star, cfg.data, cfg.mesh);
    const inner::InnerProblem prob{cfg.mesh,         cfg.data, z,
                                   arch,             weights,  inner::Gamma::HalfSquaredNorm,
                                   ds.group_map,     cfg.bounds};
    const inner::InnerSolution sol = inner::nesterov_solve(prob, ground[k], cfg.inner_opts);
    if (!sol.converged)
      throw GenerationError("inner solve for pair " + std::to_string(k) +
                            " stopped at gradient norm " + std::to_string(sol.grad_norm));
    ds.z_hat.push_back(z);
    ds.u_hat.push_back(sol.u);
  }
  return ds;
}

outer::DataSet gen_noisy_dataset(const GenConfig& cfg, const NoiseSpec& noise) {
  outer::DataSet ds = blank_dataset(cfg);
  const std::vector<Eigen::VectorXd> truth = sample_controls(cfg);

  std::vector<fem1d::StateField> clean(cfg.count);
  double sup = 0.0;
  for (int k = 0; k < cfg.count; ++k) {
    const fem1d::ControlField u{truth[k], ds.group_map, cfg.bounds};
    clean[k] = fem1d::solve_state(u, cfg.data, cfg.mesh);
    sup = std::max(sup, clean[k].nodal.cwiseAbs().maxCoeff());
  }
  const double sigma = noise.sigma >= 0.0 ? noise.sigma : noise.sigma_rel * sup;

  for (int k = 0; k < cfg.count; ++k) {
    Rng rng(derive_seed(noise.seed, static_cast<std::uint64_t>(k)));
    fem1d::StateField z = clean[k];
    for (int i = 1; i < cfg.mesh.cells; ++i) z.nodal[i] += sigma * rng.normal();
    ds.z_hat.push_back(std::move(z));
    ds.u_hat.push_back(truth[k]);
  }
  return ds;
}

}  // namespace reglearn::datagen
