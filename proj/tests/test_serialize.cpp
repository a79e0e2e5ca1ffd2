#include <doctest.h>

#include <nlohmann/json.hpp>

#include "reglearn/datagen.hpp"
#include "reglearn/serialize.hpp"
#include "support/instances.hpp"

using namespace reglearn;
using namespace testsupport;

TEST_SUITE("serialize") {

TEST_CASE("weights round-trip bit-exactly") {
  const mlp::Architecture arch{{2, 5, 3, 1}, mlp::Activation::Softplus};
  const mlp::WeightVector w = uniform_weights(arch, 3);
  const nlohmann::json j = io::weights_to_json(arch, w);
  CHECK(j.at("activation") == "softplus");
  CHECK(j.at("widths") == std::vector<int>{2, 5, 3, 1});

  // Through text, as the CLI writes it.
  const nlohmann::json parsed = nlohmann::json::parse(j.dump());
  const auto [arch2, w2] = io::weights_from_json(parsed);
  CHECK(arch2.activation == arch.activation);
  CHECK(arch2.widths == arch.widths);
  CHECK(mlp::weight_norm(mlp::weight_axpy(-1.0, w, w2)) == 0.0);
}

TEST_CASE("weights json stores A row-major") {
  const mlp::Architecture arch{{2, 2, 1}, mlp::Activation::Identity};
  mlp::WeightVector w = mlp::zero_weights(arch);
  w.layers[0].A << 1.0, 2.0, 3.0, 4.0;
  const nlohmann::json j = io::weights_to_json(arch, w);
  CHECK(j["layers"][0]["A"] == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("dataset round-trips through its document form") {
  datagen::GenConfig cfg;
  cfg.count = 3;
  cfg.groups = 2;
  cfg.mesh = fem1d::Mesh(20);
  cfg.data = fem1d::ProblemData::constant_source(cfg.mesh, 8.0, 0.1, -0.3);
  cfg.sample_lo = 0.8;
  cfg.sample_hi = 2.0;
  cfg.seed = 5;
  const outer::DataSet ds = datagen::gen_noisy_dataset(cfg, {0.01, 0.01, 5});

  const nlohmann::json j = io::dataset_to_json(ds);
  CHECK(j.at("mesh").at("N") == 20);
  CHECK(j.at("problem").at("f").is_number());  // constant source collapses
  const nlohmann::json parsed = nlohmann::json::parse(j.dump());
  const outer::DataSet back = io::dataset_from_json(parsed, ds.bounds);
  CHECK(back.size() == ds.size());
  CHECK(back.group_map == ds.group_map);
  for (int k = 0; k < ds.size(); ++k) {
    CHECK((back.u_hat[k] - ds.u_hat[k]).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.z_hat[k].nodal - ds.z_hat[k].nodal).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK((back.data.f_cell - ds.data.f_cell).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.data.g_left == ds.data.g_left);
  CHECK(back.data.g_right == ds.data.g_right);
}

TEST_CASE("non-constant sources serialize per cell") {
  const fem1d::Mesh mesh(4);
  outer::DataSet ds{mesh,
                    fem1d::ProblemData{Eigen::Vector4d(1.0, 2.0, 3.0, 4.0), 0.0, 0.0},
                    fem1d::ControlField::uniform_groups(4, 2),
                    fem1d::Bounds{0.1, 10.0},
                    {fem1d::StateField{Eigen::VectorXd::Zero(5)}},
                    {Eigen::VectorXd::Constant(2, 1.0)}};
  const nlohmann::json j = io::dataset_to_json(ds);
  CHECK(j.at("problem").at("f").is_array());
  const outer::DataSet back = io::dataset_from_json(j, ds.bounds);
  CHECK((back.data.f_cell - ds.data.f_cell).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("misfit csv uses LF endings and dot decimals") {
  outer::TrainReport report;
  report.misfit_percent = {54.6, 31.1, 0.27};
  const std::string csv = io::misfit_csv(report);
  CHECK(csv == "step,misfit_percent\n1,54.6\n2,31.1\n3,0.27\n");
}

TEST_CASE("report document carries the training history") {
  const mlp::Architecture arch{{1, 2, 1}, mlp::Activation::Tanh};
  outer::TrainReport report;
  report.misfit_percent = {50.0, 10.0};
  report.grad_norm = {1.0, 0.1};
  report.inner_iterations = {120, 80};
  report.boundary_active = {0, 0};
  report.inner_unconverged = {0, 0};
  report.converged = false;
  report.wall_time_s = 1.25;
  report.final_weights = mlp::zero_weights(arch);
  const nlohmann::json j = io::report_to_json(report, arch);
  CHECK(j.at("misfit_percent").size() == 2);
  CHECK(j.at("final_weights").at("widths") == std::vector<int>{1, 2, 1});
  const auto [arch2, w2] = io::weights_from_json(j.at("final_weights"));
  CHECK(mlp::weight_norm(w2) == 0.0);
}

}  // TEST_SUITE
