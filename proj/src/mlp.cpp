#include "reglearn/mlp.hpp"

#include <cmath>

namespace reglearn::mlp {

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "softplus") return Activation::Softplus;
  if (name == "identity") return Activation::Identity;
  throw DimensionError("unknown activation '" + name + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
    case Activation::Identity: return "identity";
  }
  return "?";
}

double act(Activation a, double x) {
  switch (a) {
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::Softplus:
      // max(x,0) + log1p(exp(-|x|)) avoids overflow on either side.
      return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
    case Activation::Identity:
      return x;
  }
  return 0.0;
}

double act_d1(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Softplus:
      return 1.0 / (1.0 + std::exp(-x));
    case Activation::Identity:
      return 1.0;
  }
  return 0.0;
}

double act_d2(Activation a, double x) {
  switch (a) {
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return -2.0 * t * (1.0 - t * t);
    }
    case Activation::Softplus: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case Activation::Identity:
      return 0.0;
  }
  return 0.0;
}

double act_d1_sup(Activation a) {
  (void)a;
  return 1.0;  // tanh' <= 1, sigmoid <= 1, identity' = 1
}

int Architecture::hidden_size() const {
  int total = 0;
  for (int l = 0; l + 2 < static_cast<int>(widths.size()); ++l) total += widths[l];
  return total;
}

void Architecture::validate() const {
  if (widths.size() < 3) throw DimensionError("network needs at least 2 layers");
  for (int n : widths)
    if (n < 1) throw DimensionError("all layer widths must be >= 1");
}

WeightVector zero_weights(const Architecture& arch) {
  arch.validate();
  WeightVector w;
  for (int l = 0; l < arch.layer_count(); ++l)
    w.layers.push_back({Eigen::MatrixXd::Zero(arch.widths[l + 1], arch.widths[l]),
                        Eigen::VectorXd::Zero(arch.widths[l + 1])});
  return w;
}

WeightVector random_weights(const Architecture& arch, double stddev, Rng& rng) {
  WeightVector w = zero_weights(arch);
  for (Layer& layer : w.layers) {
    for (Eigen::Index i = 0; i < layer.A.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.A.cols(); ++j)
        layer.A(i, j) = stddev * rng.normal();
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b[i] = stddev * rng.normal();
  }
  return w;
}

double weight_norm(const WeightVector& w) { return std::sqrt(weight_dot(w, w)); }

double weight_dot(const WeightVector& a, const WeightVector& b) {
  if (a.layers.size() != b.layers.size())
    throw DimensionError("weight_dot: layer counts differ");
  double acc = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    if (a.layers[l].A.rows() != b.layers[l].A.rows() ||
        a.layers[l].A.cols() != b.layers[l].A.cols())
      throw DimensionError("weight_dot: layer shapes differ");
    acc += a.layers[l].A.cwiseProduct(b.layers[l].A).sum();
    acc += a.layers[l].b.dot(b.layers[l].b);
  }
  return acc;
}

WeightVector weight_axpy(double a, const WeightVector& w1, const WeightVector& w2) {
  if (w1.layers.size() != w2.layers.size())
    throw DimensionError("weight_axpy: layer counts differ");
  WeightVector out = w1;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    if (w1.layers[l].A.rows() != w2.layers[l].A.rows() ||
        w1.layers[l].A.cols() != w2.layers[l].A.cols())
      throw DimensionError("weight_axpy: layer shapes differ");
    out.layers[l].A += a * w2.layers[l].A;
    out.layers[l].b += a * w2.layers[l].b;
  }
  return out;
}

int weight_count(const Architecture& arch) {
  int n = 0;
  for (int l = 0; l < arch.layer_count(); ++l)
    n += arch.widths[l + 1] * (arch.widths[l] + 1);
  return n;
}

Eigen::VectorXd weight_flatten(const WeightVector& w) {
  Eigen::Index n = 0;
  for (const Layer& l : w.layers) n += l.A.size() + l.b.size();
  Eigen::VectorXd out(n);
  Eigen::Index at = 0;
  for (const Layer& l : w.layers) {
    for (Eigen::Index i = 0; i < l.A.rows(); ++i)       // row-major order
      for (Eigen::Index j = 0; j < l.A.cols(); ++j) out[at++] = l.A(i, j);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) out[at++] = l.b[i];
  }
  return out;
}

WeightVector weight_unflatten(const Architecture& arch, const Eigen::VectorXd& entries) {
  if (entries.size() != weight_count(arch))
    throw DimensionError("weight_unflatten: entry count does not match architecture");
  WeightVector w = zero_weights(arch);
  Eigen::Index at = 0;
  for (Layer& l : w.layers) {
    for (Eigen::Index i = 0; i < l.A.rows(); ++i)
      for (Eigen::Index j = 0; j < l.A.cols(); ++j) l.A(i, j) = entries[at++];
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = entries[at++];
  }
  return w;
}

namespace {

void check_shapes(const Architecture& arch, const WeightVector& w) {
  arch.validate();
  if (static_cast<int>(w.layers.size()) != arch.layer_count())
    throw DimensionError("weights do not match architecture layer count");
  for (int l = 0; l < arch.layer_count(); ++l) {
    if (w.layers[l].A.rows() != arch.widths[l + 1] ||
        w.layers[l].A.cols() != arch.widths[l] ||
        w.layers[l].b.size() != arch.widths[l + 1])
      throw DimensionError("layer " + std::to_string(l) + " has wrong shape");
  }
}

}  // namespace

Eigen::VectorXd forward(const Architecture& arch, const WeightVector& w,
                        const Eigen::VectorXd& u, ForwardTape* tape) {
  check_shapes(arch, w);
  if (u.size() != arch.input_dim())
    throw DimensionError("input size does not match architecture");
  if (tape != nullptr) {
    tape->input = u;
    tape->pre.clear();
    tape->pre.reserve(arch.layer_count());
  }
  Eigen::VectorXd a = u;
  Eigen::VectorXd pre;
  const int L = arch.layer_count();
  for (int l = 0; l < L; ++l) {
    pre = w.layers[l].A * a + w.layers[l].b;
    if (tape != nullptr) tape->pre.push_back(pre);
    if (l + 1 < L) {
      a.resize(pre.size());
      for (Eigen::Index i = 0; i < pre.size(); ++i) a[i] = act(arch.activation, pre[i]);
    }
  }
  return pre;
}

DerivativeCache::DerivativeCache(const Architecture& arch, const WeightVector& w,
                                 const ForwardTape& tape)
    : arch_(arch), w_(w) {
  check_shapes(arch, w);
  const int L = arch.layer_count();
  if (static_cast<int>(tape.pre.size()) != L || tape.input.size() != arch.input_dim())
    throw DimensionError("tape does not match architecture");

  a_.resize(L);
  a_[0] = tape.input;
  d1_.resize(L - 1);
  d2_.resize(L - 1);
  for (int l = 0; l + 1 < L; ++l) {
    const Eigen::VectorXd& pre = tape.pre[l];
    Eigen::VectorXd av(pre.size()), d1v(pre.size()), d2v(pre.size());
    for (Eigen::Index i = 0; i < pre.size(); ++i) {
      av[i] = act(arch.activation, pre[i]);
      d1v[i] = act_d1(arch.activation, pre[i]);
      d2v[i] = act_d2(arch.activation, pre[i]);
    }
    a_[l + 1] = std::move(av);
    d1_[l] = std::move(d1v);
    d2_[l] = std::move(d2v);
  }

  // pre_in_[l] = d pre[l] / d u, act_in_[l] = d a_[l] / d u (forward chain).
  pre_in_.resize(L);
  act_in_.resize(L);
  act_in_[0] = Eigen::MatrixXd::Identity(arch.input_dim(), arch.input_dim());
  pre_in_[0] = w.layers[0].A;
  for (int l = 1; l < L; ++l) {
    act_in_[l] = d1_[l - 1].asDiagonal() * pre_in_[l - 1];
    pre_in_[l] = w.layers[l].A * act_in_[l];
  }

  // out_pre_[l] = d out / d pre[l], out_act_[l] = d out / d a_[l+1] (backward).
  out_pre_.resize(L);
  out_act_.resize(L - 1);
  out_pre_[L - 1] = Eigen::MatrixXd::Identity(arch.output_dim(), arch.output_dim());
  for (int l = L - 2; l >= 0; --l) {
    out_act_[l] = out_pre_[l + 1] * w.layers[l + 1].A;
    out_pre_[l] = out_act_[l] * d1_[l].asDiagonal();
  }

  jac_u_ = pre_in_[L - 1];
}

void DerivativeCache::check_layer(int layer, const Layer& dir) const {
  if (layer < 0 || layer >= arch_.layer_count())
    throw DimensionError("layer index out of range");
  if (dir.A.rows() != arch_.widths[layer + 1] || dir.A.cols() != arch_.widths[layer] ||
      dir.b.size() != arch_.widths[layer + 1])
    throw DimensionError("direction has wrong shape for layer " + std::to_string(layer));
}

Eigen::VectorXd DerivativeCache::jacobian_w(int layer, const Layer& dir) const {
  check_layer(layer, dir);
  return out_pre_[layer] * (dir.A * a_[layer] + dir.b);
}

std::vector<Eigen::MatrixXd> DerivativeCache::hessian_uu() const {
  const int L = arch_.layer_count();
  const int n_in = arch_.input_dim();
  std::vector<Eigen::MatrixXd> hess(arch_.output_dim(),
                                    Eigen::MatrixXd::Zero(n_in, n_in));
  for (int l = 0; l + 1 < L; ++l) {
    for (int i = 0; i < arch_.output_dim(); ++i) {
      const Eigen::VectorXd scale =
          out_act_[l].row(i).transpose().cwiseProduct(d2_[l]);
      hess[i].noalias() +=
          pre_in_[l].transpose() * scale.asDiagonal() * pre_in_[l];
    }
  }
  return hess;
}

Eigen::MatrixXd DerivativeCache::mixed_uw(int layer, const Layer& dir) const {
  check_layer(layer, dir);
  const int L = arch_.layer_count();
  // Term from the affine stage itself: out_pre[s] * dir.A * d a_[s] / d u.
  Eigen::MatrixXd res = out_pre_[layer] * dir.A * act_in_[layer];
  // Chain terms from rho'(pre[l]) for l >= s; g tracks d pre[l] / d w_s . dir.
  Eigen::VectorXd g = dir.A * a_[layer] + dir.b;
  for (int l = layer; l + 1 < L; ++l) {
    res.noalias() += out_act_[l] * d2_[l].cwiseProduct(g).asDiagonal() * pre_in_[l];
    if (l + 2 < L) g = w_.layers[l + 1].A * d1_[l].cwiseProduct(g);
  }
  return res;
}

Eigen::MatrixXd jacobian_u(const Architecture& arch, const WeightVector& w,
                           const ForwardTape& tape) {
  return DerivativeCache(arch, w, tape).jacobian_u();
}

Eigen::VectorXd jacobian_w(const Architecture& arch, const WeightVector& w,
                           const ForwardTape& tape, int layer, const Layer& dir) {
  return DerivativeCache(arch, w, tape).jacobian_w(layer, dir);
}

std::vector<Eigen::MatrixXd> hessian_uu(const Architecture& arch,
                                        const WeightVector& w,
                                        const ForwardTape& tape) {
  return DerivativeCache(arch, w, tape).hessian_uu();
}

Eigen::MatrixXd mixed_uw(const Architecture& arch, const WeightVector& w,
                         const ForwardTape& tape, int layer, const Layer& dir) {
  return DerivativeCache(arch, w, tape).mixed_uw(layer, dir);
}

double lipschitz_bound(const Architecture& arch, const WeightVector& w) {
  check_shapes(arch, w);
  double prod = 1.0;
  for (const Layer& l : w.layers) prod *= l.A.norm();
  return prod * std::pow(act_d1_sup(arch.activation), arch.hidden_size());
}

}  // namespace reglearn::mlp
