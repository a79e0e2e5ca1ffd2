#include <doctest.h>

#include <cmath>

#include "reglearn/datagen.hpp"
#include "support/instances.hpp"

using namespace reglearn;
using namespace testsupport;

namespace {

datagen::GenConfig small_config(std::uint64_t seed, int count = 3, int groups = 2) {
  datagen::GenConfig cfg;
  cfg.count = count;
  cfg.groups = groups;
  cfg.sample_lo = 0.8;
  cfg.sample_hi = 2.5;
  cfg.mesh = fem1d::Mesh(20);
  cfg.data = fem1d::ProblemData::constant_source(cfg.mesh, 8.0, 0.0, 0.0);
  cfg.seed = seed;
  return cfg;
}

bool identical(const outer::DataSet& a, const outer::DataSet& b) {
  if (a.size() != b.size()) return false;
  for (int k = 0; k < a.size(); ++k) {
    if ((a.u_hat[k] - b.u_hat[k]).cwiseAbs().maxCoeff() != 0.0) return false;
    if ((a.z_hat[k].nodal - b.z_hat[k].nodal).cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("sample_controls: degenerate range, bounds, determinism") {
  datagen::GenConfig cfg = small_config(5, 4, 3);
  cfg.sample_lo = cfg.sample_hi = 1.3;
  for (const Eigen::VectorXd& u : datagen::sample_controls(cfg))
    CHECK((u.array() == 1.3).all());

  cfg = small_config(6, 8, 3);
  for (const Eigen::VectorXd& u : datagen::sample_controls(cfg)) {
    CHECK(u.minCoeff() >= cfg.bounds.lower);
    CHECK(u.maxCoeff() <= cfg.bounds.upper);
  }
  const auto once = datagen::sample_controls(cfg);
  const auto twice = datagen::sample_controls(cfg);
  for (std::size_t k = 0; k < once.size(); ++k)
    CHECK((once[k] - twice[k]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gen_l2_dataset: same seed, bit-identical output") {
  const datagen::GenConfig cfg = small_config(11);
  CHECK(identical(datagen::gen_l2_dataset(cfg), datagen::gen_l2_dataset(cfg)));
}

TEST_CASE("gen_l2_dataset: every pair is stationary under the generator") {
  const datagen::GenConfig cfg = small_config(13);
  const outer::DataSet ds = datagen::gen_l2_dataset(cfg);
  const auto [arch, w] = datagen::quadratic_regularizer(cfg.groups, cfg.c_reg);
  for (int k = 0; k < ds.size(); ++k) {
    inner::InnerProblem prob{ds.mesh,  ds.data, ds.z_hat[k],
                             arch,     w,       inner::Gamma::HalfSquaredNorm,
                             ds.group_map, ds.bounds};
    const Eigen::VectorXd g = inner::gradient(prob, ds.u_hat[k]);
    CHECK(inner::projected_gradient(ds.u_hat[k], g, ds.bounds).norm() <= 1e-10);
    // Re-solving from u_hat terminates immediately.
    const auto sol = inner::nesterov_solve(prob, ds.u_hat[k], cfg.inner_opts);
    CHECK(sol.iterations == 0);
  }
}

TEST_CASE("gen_l2_dataset: stronger regularizers push controls down") {
  double previous_mean = 1e300;
  for (double c_reg : {1.5, 15.0, 150.0}) {
    datagen::GenConfig cfg = small_config(17);
    cfg.c_reg = c_reg;
    const outer::DataSet ds = datagen::gen_l2_dataset(cfg);
    double mean = 0.0;
    for (const Eigen::VectorXd& u : ds.u_hat) mean += u.mean();
    mean /= ds.size();
    CHECK(mean < previous_mean);
    CHECK(mean >= cfg.bounds.lower);
    previous_mean = mean;
  }
}

TEST_CASE("gen_noisy_dataset: zero noise reproduces the forward map") {
  const datagen::GenConfig cfg = small_config(19);
  const outer::DataSet ds = datagen::gen_noisy_dataset(cfg, {0.0, 0.01, 7});
  for (int k = 0; k < ds.size(); ++k) {
    const auto y = fem1d::solve_state(
        fem1d::ControlField{ds.u_hat[k], ds.group_map, ds.bounds}, ds.data, ds.mesh);
    CHECK((y.nodal - ds.z_hat[k].nodal).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("gen_noisy_dataset: seeded noise is reproducible and boundary-exact") {
  const datagen::GenConfig cfg = small_config(23);
  const datagen::NoiseSpec noise{0.05, 0.01, 99};
  const outer::DataSet a = datagen::gen_noisy_dataset(cfg, noise);
  const outer::DataSet b = datagen::gen_noisy_dataset(cfg, noise);
  CHECK(identical(a, b));
  for (int k = 0; k < a.size(); ++k) {
    const auto y = fem1d::solve_state(
        fem1d::ControlField{a.u_hat[k], a.group_map, a.bounds}, a.data, a.mesh);
    CHECK(a.z_hat[k].nodal[0] == y.nodal[0]);
    CHECK(a.z_hat[k].nodal[cfg.mesh.cells] == y.nodal[cfg.mesh.cells]);
  }
}

TEST_CASE("gen_noisy_dataset: empirical noise level matches the request") {
  datagen::GenConfig cfg = small_config(29, 30, 2);  // 30 * 19 interior samples
  const double sigma = 0.04;
  const outer::DataSet ds = datagen::gen_noisy_dataset(cfg, {sigma, 0.01, 31});
  double sq = 0.0;
  int n = 0;
  for (int k = 0; k < ds.size(); ++k) {
    const auto y = fem1d::solve_state(
        fem1d::ControlField{ds.u_hat[k], ds.group_map, ds.bounds}, ds.data, ds.mesh);
    for (int i = 1; i < cfg.mesh.cells; ++i) {
      const double d = ds.z_hat[k].nodal[i] - y.nodal[i];
      sq += d * d;
      ++n;
    }
  }
  CHECK(n >= 500);
  const double empirical = std::sqrt(sq / n);
  CHECK(empirical >= 0.9 * sigma);
  CHECK(empirical <= 1.1 * sigma);
}

TEST_CASE("relative sigma scales with the largest clean state") {
  datagen::GenConfig cfg = small_config(37, 6, 1);
  const double rel = 0.02;
  const outer::DataSet ds = datagen::gen_noisy_dataset(cfg, {-1.0, rel, 41});
  double sup = 0.0;
  std::vector<double> diffs;
  for (int k = 0; k < ds.size(); ++k) {
    const auto y = fem1d::solve_state(
        fem1d::ControlField{ds.u_hat[k], ds.group_map, ds.bounds}, ds.data, ds.mesh);
    sup = std::max(sup, y.nodal.cwiseAbs().maxCoeff());
    for (int i = 1; i < cfg.mesh.cells; ++i)
      diffs.push_back(ds.z_hat[k].nodal[i] - y.nodal[i]);
  }
  double sq = 0.0;
  for (double d : diffs) sq += d * d;
  const double empirical = std::sqrt(sq / diffs.size());
  CHECK(empirical >= 0.7 * rel * sup);
  CHECK(empirical <= 1.3 * rel * sup);
}

TEST_CASE("generated controls are admissible") {
  const datagen::GenConfig cfg = small_config(43);
  for (const outer::DataSet& ds :
       {datagen::gen_l2_dataset(cfg), datagen::gen_noisy_dataset(cfg, {0.01, 0.01, 3})}) {
    CHECK_NOTHROW(ds.validate());
    for (const Eigen::VectorXd& u : ds.u_hat) {
      CHECK(u.minCoeff() >= cfg.bounds.lower);
      CHECK(u.maxCoeff() <= cfg.bounds.upper);
    }
  }
}

TEST_CASE("config validation") {
  datagen::GenConfig cfg = small_config(47);
  cfg.sample_lo = 0.01;  // below the admissible box
  CHECK_THROWS_AS(cfg.validate(), DimensionError);
  cfg = small_config(47);
  cfg.count = 0;
  CHECK_THROWS_AS(cfg.validate(), DimensionError);
}

}  // TEST_SUITE
