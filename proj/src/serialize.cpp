#include "reglearn/serialize.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <system_error>

namespace reglearn::io {

namespace {

using nlohmann::json;

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Eigen::VectorXd vector_from_json(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

/// Shortest decimal form that round-trips; locale independent.
std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace

nlohmann::json weights_to_json(const mlp::Architecture& arch, const mlp::WeightVector& w) {
  json j;
  j["widths"] = arch.widths;
  j["activation"] = mlp::activation_name(arch.activation);
  json layers = json::array();
  for (const mlp::Layer& layer : w.layers) {
    json a = json::array();
    for (Eigen::Index i = 0; i < layer.A.rows(); ++i)
      for (Eigen::Index c = 0; c < layer.A.cols(); ++c) a.push_back(layer.A(i, c));
    layers.push_back({{"A", std::move(a)}, {"b", vector_to_json(layer.b)}});
  }
  j["layers"] = std::move(layers);
  return j;
}

std::pair<mlp::Architecture, mlp::WeightVector> weights_from_json(const nlohmann::json& j) {
  mlp::Architecture arch;
  arch.widths = j.at("widths").get<std::vector<int>>();
  arch.activation = mlp::activation_from_name(j.at("activation").get<std::string>());
  arch.validate();
  const json& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != arch.layer_count())
    throw DimensionError("checkpoint layer count does not match widths");
  mlp::WeightVector w = mlp::zero_weights(arch);
  for (int l = 0; l < arch.layer_count(); ++l) {
    const json& a = layers[l].at("A");
    mlp::Layer& layer = w.layers[l];
    if (static_cast<Eigen::Index>(a.size()) != layer.A.size())
      throw DimensionError("checkpoint layer " + std::to_string(l) + " has wrong A size");
    std::size_t at = 0;
    for (Eigen::Index i = 0; i < layer.A.rows(); ++i)
      for (Eigen::Index c = 0; c < layer.A.cols(); ++c)
        layer.A(i, c) = a[at++].get<double>();
    const Eigen::VectorXd b = vector_from_json(layers[l].at("b"));
    if (b.size() != layer.b.size())
      throw DimensionError("checkpoint layer " + std::to_string(l) + " has wrong b size");
    layer.b = b;
  }
  return {arch, w};
}

nlohmann::json dataset_to_json(const outer::DataSet& data) {
  json j;
  j["mesh"] = {{"N", data.mesh.cells}};
  const double f0 = data.data.f_cell.size() > 0 ? data.data.f_cell[0] : 0.0;
  const bool constant = (data.data.f_cell.array() == f0).all();
  j["problem"]["f"] = constant ? json(f0) : vector_to_json(data.data.f_cell);
  j["problem"]["g"] = {data.data.g_left, data.data.g_right};
  json pairs = json::array();
  for (int k = 0; k < data.size(); ++k)
    pairs.push_back({{"z_hat", vector_to_json(data.z_hat[k].nodal)},
                     {"u_hat", vector_to_json(data.u_hat[k])}});
  j["pairs"] = std::move(pairs);
  return j;
}

outer::DataSet dataset_from_json(const nlohmann::json& j, const fem1d::Bounds& bounds) {
  const fem1d::Mesh mesh(j.at("mesh").at("N").get<int>());
  fem1d::ProblemData data;
  const json& f = j.at("problem").at("f");
  data.f_cell = f.is_number() ? Eigen::VectorXd::Constant(mesh.cells, f.get<double>())
                              : vector_from_json(f);
  data.g_left = j.at("problem").at("g")[0].get<double>();
  data.g_right = j.at("problem").at("g")[1].get<double>();

  const json& pairs = j.at("pairs");
  if (pairs.empty()) throw DimensionError("dataset has no pairs");
  const int groups = static_cast<int>(pairs[0].at("u_hat").size());

  outer::DataSet ds{mesh,
                    std::move(data),
                    fem1d::ControlField::uniform_groups(mesh.cells, groups),
                    bounds,
                    {},
                    {}};
  for (const json& pair : pairs) {
    ds.z_hat.push_back({vector_from_json(pair.at("z_hat"))});
    ds.u_hat.push_back(vector_from_json(pair.at("u_hat")));
  }
  ds.validate();
  return ds;
}

nlohmann::json report_to_json(const outer::TrainReport& report,
                              const mlp::Architecture& arch) {
  json j;
  j["misfit_percent"] = report.misfit_percent;
  j["grad_norm"] = report.grad_norm;
  j["inner_iterations"] = report.inner_iterations;
  j["boundary_active"] = report.boundary_active;
  j["inner_unconverged"] = report.inner_unconverged;
  j["converged"] = report.converged;
  j["wall_time_s"] = report.wall_time_s;
  j["final_weights"] = weights_to_json(arch, report.final_weights);
  return j;
}

std::string misfit_csv(const outer::TrainReport& report) {
  std::string out = "step,misfit_percent\n";
  for (std::size_t i = 0; i < report.misfit_percent.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    out += format_double(report.misfit_percent[i]);
    out += '\n';
  }
  return out;
}

nlohmann::json solution_to_json(const inner::InnerSolution& sol) {
  json j;
  j["u"] = vector_to_json(sol.u);
  j["y"] = vector_to_json(sol.y.nodal);
  j["grad_norm"] = sol.grad_norm;
  j["iterations"] = sol.iterations;
  j["objective"] = sol.objective;
  j["converged"] = sol.converged;
  j["boundary_active"] = sol.boundary_active;
  return j;
}

void save_json(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::system_error(errno, std::generic_category(), "cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw std::system_error(errno, std::generic_category(), "short write to " + path);
}

nlohmann::json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot read " + path);
  return json::parse(in);
}

}  // namespace reglearn::io
