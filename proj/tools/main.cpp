// Command-line front end: dataset generation, training, single-task solves
// and network evaluation, all driven by a JSON configuration.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "reglearn/datagen.hpp"
#include "reglearn/serialize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace reglearn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

struct RunConfig {
  fem1d::Bounds bounds;
  int mesh_cells = 100;
  double f_value = 1.0;
  std::optional<std::vector<double>> f_cells;
  double g_left = 0.0, g_right = 0.0;

  std::string dataset_kind = "l2";
  int pairs = 5;
  int groups = 1;
  double sample_lo = 0.5, sample_hi = 3.0;
  double c_reg = 1.5;
  double noise_sigma = -1.0;
  double noise_sigma_rel = 0.01;
  std::uint64_t data_seed = 1;

  std::vector<int> widths;
  std::string activation = "tanh";
  double init_std = 0.01;
  std::uint64_t weight_seed = 2025;

  inner::InnerOptions inner_opts;
  outer::OuterConfig outer_cfg;

  std::string data_path = "dataset.json";
};

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  if (j.contains("mesh")) cfg.mesh_cells = j["mesh"].value("N", cfg.mesh_cells);
  if (j.contains("bounds")) {
    cfg.bounds.lower = j["bounds"][0].get<double>();
    cfg.bounds.upper = j["bounds"][1].get<double>();
  }
  if (j.contains("problem")) {
    const json& p = j["problem"];
    if (p.contains("f")) {
      if (p["f"].is_number())
        cfg.f_value = p["f"].get<double>();
      else
        cfg.f_cells = p["f"].get<std::vector<double>>();
    }
    if (p.contains("g")) {
      cfg.g_left = p["g"][0].get<double>();
      cfg.g_right = p["g"][1].get<double>();
    }
  }
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    cfg.dataset_kind = d.value("kind", cfg.dataset_kind);
    cfg.pairs = d.value("K", cfg.pairs);
    cfg.groups = d.value("groups", cfg.groups);
    if (d.contains("sample_range")) {
      cfg.sample_lo = d["sample_range"][0].get<double>();
      cfg.sample_hi = d["sample_range"][1].get<double>();
    }
    cfg.c_reg = d.value("c_reg", cfg.c_reg);
    cfg.noise_sigma = d.value("noise_sigma", cfg.noise_sigma);
    cfg.noise_sigma_rel = d.value("noise_sigma_rel", cfg.noise_sigma_rel);
    cfg.data_seed = d.value("seed", cfg.data_seed);
  }
  if (j.contains("network")) {
    const json& n = j["network"];
    if (n.contains("widths")) cfg.widths = n["widths"].get<std::vector<int>>();
    cfg.activation = n.value("activation", cfg.activation);
    cfg.init_std = n.value("init_std", cfg.init_std);
    cfg.weight_seed = n.value("seed", cfg.weight_seed);
  }
  if (j.contains("inner")) {
    const json& i = j["inner"];
    cfg.inner_opts.tol = i.value("tol", cfg.inner_opts.tol);
    cfg.inner_opts.max_iter = i.value("max_iter", cfg.inner_opts.max_iter);
    cfg.inner_opts.armijo_alpha = i.value("alpha", cfg.inner_opts.armijo_alpha);
  }
  if (j.contains("outer")) {
    const json& o = j["outer"];
    cfg.outer_cfg.nu = o.value("nu", cfg.outer_cfg.nu);
    cfg.outer_cfg.tol = o.value("tol", cfg.outer_cfg.tol);
    cfg.outer_cfg.max_steps = o.value("max_steps", cfg.outer_cfg.max_steps);
    cfg.outer_cfg.armijo_beta = o.value("beta", cfg.outer_cfg.armijo_beta);
    cfg.outer_cfg.eps_request = o.value("epsilon", cfg.outer_cfg.eps_request);
    cfg.outer_cfg.eps_sign = o.value("epsilon_sign", cfg.outer_cfg.eps_sign);
    cfg.outer_cfg.measure_weighted_norm =
        o.value("measure_weighted_norm", cfg.outer_cfg.measure_weighted_norm);
  }
  if (j.contains("paths")) cfg.data_path = j["paths"].value("data", cfg.data_path);
  cfg.outer_cfg.inner_opts = cfg.inner_opts;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  return parse_config(io::load_json(path));
}

datagen::GenConfig gen_config(const RunConfig& cfg) {
  datagen::GenConfig g;
  g.count = cfg.pairs;
  g.groups = cfg.groups;
  g.sample_lo = cfg.sample_lo;
  g.sample_hi = cfg.sample_hi;
  g.mesh = fem1d::Mesh(cfg.mesh_cells);
  if (cfg.f_cells) {
    g.data.f_cell = Eigen::Map<const Eigen::VectorXd>(cfg.f_cells->data(),
                                                      cfg.f_cells->size());
    g.data.g_left = cfg.g_left;
    g.data.g_right = cfg.g_right;
  } else {
    g.data = fem1d::ProblemData::constant_source(g.mesh, cfg.f_value, cfg.g_left,
                                                 cfg.g_right);
  }
  g.bounds = cfg.bounds;
  g.seed = cfg.data_seed;
  g.c_reg = cfg.c_reg;
  return g;
}

void check_writable_dir(const std::string& file_path) {
  const fs::path parent = fs::path(file_path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw std::system_error(std::make_error_code(std::errc::no_such_file_or_directory),
                            "output directory does not exist: " + parent.string());
}

std::string joined(const std::string& out_dir, const std::string& name) {
  return (fs::path(out_dir) / name).string();
}

void write_text(const std::string& path, const std::string& text) {
  check_writable_dir(path);
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings as-is
  if (!out) throw std::system_error(errno, std::generic_category(), "cannot write " + path);
  out << text;
}

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
  RunConfig cfg = load_config(config_path);
  if (seed) cfg.data_seed = *seed;
  datagen::GenConfig g = gen_config(cfg);

  outer::DataSet data = [&] {
    if (cfg.dataset_kind == "l2") return datagen::gen_l2_dataset(g);
    if (cfg.dataset_kind == "noisy") {
      datagen::NoiseSpec noise{cfg.noise_sigma, cfg.noise_sigma_rel,
                               derive_seed(cfg.data_seed, 0x6e6f697365ull)};
      return datagen::gen_noisy_dataset(g, noise);
    }
    throw std::invalid_argument("dataset kind must be 'l2' or 'noisy', got '" +
                                cfg.dataset_kind + "'");
  }();

  const std::string path = joined(out_dir, cfg.data_path);
  check_writable_dir(path);
  io::save_json(io::dataset_to_json(data), path);
  std::cout << "wrote " << data.size() << " pairs to " << path << "\n";
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed, int workers,
              const std::string& data_override) {
  RunConfig cfg = load_config(config_path);
  if (seed) cfg.weight_seed = *seed;
  cfg.outer_cfg.workers = workers;

  const std::string data_path =
      data_override.empty() ? joined(out_dir, cfg.data_path) : data_override;
  outer::DataSet data = io::dataset_from_json(io::load_json(data_path), cfg.bounds);

  std::vector<int> widths = cfg.widths;
  if (widths.empty()) widths = {data.control_dim(), 8, 8, 1};
  if (widths.front() != data.control_dim())
    throw std::invalid_argument("network input width " + std::to_string(widths.front()) +
                                " does not match the dataset control dimension " +
                                std::to_string(data.control_dim()));
  mlp::Architecture arch{widths, mlp::activation_from_name(cfg.activation)};
  Rng rng(cfg.weight_seed);
  const mlp::WeightVector w0 = mlp::random_weights(arch, cfg.init_std, rng);

  outer::TrainReport report;
  try {
    report = outer::bb_solve(data, arch, w0, cfg.outer_cfg);
  } catch (const StagnationError& e) {
    std::cerr << "train: initialization: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "train: gradient step: " << e.what() << "\n";
    return kExitNumerical;
  }

  io::save_json(io::report_to_json(report, arch), joined(out_dir, "report.json"));
  write_text(joined(out_dir, "misfit.csv"), io::misfit_csv(report));
  io::save_json(io::weights_to_json(arch, report.final_weights),
                joined(out_dir, "weights.json"));
  std::cout << "steps: " << report.misfit_percent.size() << "  final misfit: "
            << format_double(report.misfit_percent.back()) << "%  converged: "
            << (report.converged ? "yes" : "no") << "\n";
  return kExitOk;
}

int cmd_solve_inner(const std::string& config_path, const std::string& weights_path,
                    const std::string& out_dir, int task,
                    const std::string& u_init_path, const std::string& data_override) {
  const RunConfig cfg = load_config(config_path);
  const std::string data_path =
      data_override.empty() ? joined(out_dir, cfg.data_path) : data_override;
  const outer::DataSet data = io::dataset_from_json(io::load_json(data_path), cfg.bounds);
  if (task < 0 || task >= data.size())
    throw std::invalid_argument("task index " + std::to_string(task) +
                                " outside [0, " + std::to_string(data.size()) + ")");
  auto [arch, weights] = io::weights_from_json(io::load_json(weights_path));
  if (arch.input_dim() != data.control_dim())
    throw std::invalid_argument("weights input width does not match the dataset");

  Eigen::VectorXd u_init = data.mean_control();
  if (!u_init_path.empty()) {
    const json j = io::load_json(u_init_path);
    const json& arr = j.is_array() ? j : j.at("u");
    u_init.resize(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) u_init[i] = arr[i].get<double>();
  }

  inner::InnerProblem prob{data.mesh, data.data,      data.z_hat[task], arch,
                           weights,   inner::Gamma::Identity, data.group_map,
                           data.bounds};
  const inner::InnerSolution sol = inner::nesterov_solve(prob, u_init, cfg.inner_opts);

  io::save_json(io::solution_to_json(sol), joined(out_dir, "solution.json"));
  std::cout << "iterations: " << sol.iterations << "  grad_norm: "
            << format_double(sol.grad_norm) << "\n";
  return sol.converged ? kExitOk : kExitNumerical;
}

int cmd_eval(const std::string& weights_path, const std::string& out_dir,
             double grid_min, double grid_max, int samples, bool reference,
             double ref_coeff) {
  auto [arch, weights] = io::weights_from_json(io::load_json(weights_path));
  if (arch.input_dim() != 1)
    throw std::invalid_argument("graph mode needs a scalar-input network, got n_in = " +
                                std::to_string(arch.input_dim()));
  if (samples < 1) throw std::invalid_argument("need at least one sample");

  std::string csv = reference ? "u,r,reference\n" : "u,r\n";
  for (int i = 0; i < samples; ++i) {
    const double u = samples == 1
                         ? grid_min
                         : grid_min + (grid_max - grid_min) * i / (samples - 1.0);
    Eigen::VectorXd uv(1);
    uv[0] = u;
    const double r = mlp::forward(arch, weights, uv)[0];
    csv += format_double(u);
    csv += ',';
    csv += format_double(r);
    if (reference) {
      csv += ',';
      csv += format_double(ref_coeff * u * u);
    }
    csv += '\n';
  }
  write_text(joined(out_dir, "eval.csv"), csv);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learns neural-network regularizers for 1D conductivity "
               "identification by bi-level adjoint training"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", weights_path, u_init_path, data_override;
  std::optional<std::uint64_t> seed;
  int workers = 1, task = 0, samples = 101;
  double grid_min = 0.0, grid_max = 1.0, ref_coeff = 1.5;
  bool reference = false;

  CLI::App* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--config", config_path, "JSON configuration")->required();
  gen->add_option("--out", out_dir, "Output directory");
  gen->add_option("--seed", seed, "Override the dataset seed");

  CLI::App* train = app.add_subcommand("train", "Train the regularizer weights");
  train->add_option("--config", config_path, "JSON configuration")->required();
  train->add_option("--out", out_dir, "Output directory");
  train->add_option("--seed", seed, "Override the weight-init seed");
  train->add_option("--workers", workers, "Parallel per-task pipelines");
  train->add_option("--data", data_override, "Dataset path (defaults to config)");

  CLI::App* solve = app.add_subcommand("solve-inner", "Solve one task");
  solve->add_option("--config", config_path, "JSON configuration")->required();
  solve->add_option("--weights", weights_path, "Weights checkpoint")->required();
  solve->add_option("--out", out_dir, "Output directory");
  solve->add_option("--task", task, "Task index in the dataset");
  solve->add_option("--u-init", u_init_path, "JSON start point ({\"u\": [...]} or array)");
  solve->add_option("--data", data_override, "Dataset path (defaults to config)");

  CLI::App* eval = app.add_subcommand("eval", "Sample the network on a 1D grid");
  eval->add_option("--weights", weights_path, "Weights checkpoint")->required();
  eval->add_option("--out", out_dir, "Output directory");
  eval->add_option("--grid-min", grid_min, "Grid start");
  eval->add_option("--grid-max", grid_max, "Grid end");
  eval->add_option("--samples", samples, "Grid size");
  eval->add_flag("--reference", reference, "Also emit the quadratic reference column");
  eval->add_option("--ref-coeff", ref_coeff, "Reference coefficient");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed);
    if (train->parsed()) return cmd_train(config_path, out_dir, seed, workers, data_override);
    if (solve->parsed())
      return cmd_solve_inner(config_path, weights_path, out_dir, task, u_init_path,
                             data_override);
    if (eval->parsed())
      return cmd_eval(weights_path, out_dir, grid_min, grid_max, samples, reference,
                      ref_coeff);
  } catch (const std::system_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const GenerationError& e) {
    std::cerr << "generation error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
