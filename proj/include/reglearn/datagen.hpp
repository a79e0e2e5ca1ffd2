#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "reglearn/outer.hpp"
#include "reglearn/rng.hpp"

namespace reglearn::datagen {

/// Gaussian perturbation of the interior nodal state values. A negative
/// `sigma` means "relative": sigma_rel times the largest sup-norm among the
/// clean states of the batch.
struct NoiseSpec {
  double sigma = -1.0;
  double sigma_rel = 0.01;
  std::uint64_t seed = 0;
};

struct GenConfig {
  int count = 1;                       // number of (task, control) pairs
  int groups = 1;                      // control dimension
  double sample_lo = 0.5;              // uniform sampling range for controls
  double sample_hi = 3.0;
  fem1d::Mesh mesh{100};
  fem1d::ProblemData data;
  fem1d::Bounds bounds;
  std::uint64_t seed = 0;
  double c_reg = 1.5;                  // generating regularizer c_reg * |u|^2
  inner::InnerOptions inner_opts{1e-12, 20000, 0.5};

  void validate() const;
};

/// Identity-activation network r(u) = sqrt(2 c) u composed with the
/// half-squared-norm gamma; together they realize u -> c |u|^2.
std::pair<mlp::Architecture, mlp::WeightVector> quadratic_regularizer(int dim, double c);

/// Seeded i.i.d. uniform controls, one per pair, values in
/// [sample_lo, sample_hi] per group. Pair k draws from derive_seed(seed, k).
std::vector<Eigen::VectorXd> sample_controls(const GenConfig& cfg);

/// Sample ground controls u*, set z_hat = S(u*), then solve each task under
/// the quadratic regularizer to get u_hat. Throws GenerationError when an
/// inner solve does not converge.
outer::DataSet gen_l2_dataset(const GenConfig& cfg);

/// Sample true controls, push them through the state solve and perturb the
/// interior nodal values with Gaussian noise (boundary values stay exact);
/// u_hat is the unperturbed truth.
outer::DataSet gen_noisy_dataset(const GenConfig& cfg, const NoiseSpec& noise);

}  // namespace reglearn::datagen
