#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "reglearn/errors.hpp"
#include "reglearn/rng.hpp"

namespace reglearn::mlp {

/// Coordinate-wise C^2 activation. ReLU is excluded on purpose: the second
/// derivative below must exist everywhere.
enum class Activation { Tanh, Softplus, Identity };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a);

double act(Activation a, double x);
double act_d1(Activation a, double x);
double act_d2(Activation a, double x);
/// sup |rho'| over the real line (equals 1 for all supported kinds).
double act_d1_sup(Activation a);

/// Layer widths [n_in, hidden..., n_out] together with the activation kind.
struct Architecture {
  std::vector<int> widths;
  Activation activation = Activation::Tanh;

  int layer_count() const { return static_cast<int>(widths.size()) - 1; }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  /// Number of activated coordinates feeding the chain rule; this is the
  /// exponent of sup|rho'| in lipschitz_bound().
  int hidden_size() const;
  /// Throws DimensionError unless there are >= 2 layers and all widths >= 1.
  void validate() const;
};

/// One affine map z -> A z + b. Also used as a direction in weight space.
struct Layer {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

/// Full parameter set (A_l, b_l), one Layer per affine stage.
struct WeightVector {
  std::vector<Layer> layers;
};

WeightVector zero_weights(const Architecture& arch);
/// I.i.d. normal entries with the given standard deviation.
WeightVector random_weights(const Architecture& arch, double stddev, Rng& rng);

/// Euclidean norm over all entries: sqrt(sum_l ||A_l||_F^2 + |b_l|^2).
double weight_norm(const WeightVector& w);
double weight_dot(const WeightVector& a, const WeightVector& b);
/// Entrywise w1 + a * w2. Throws DimensionError on mismatched shapes.
WeightVector weight_axpy(double a, const WeightVector& w1, const WeightVector& w2);

int weight_count(const Architecture& arch);
Eigen::VectorXd weight_flatten(const WeightVector& w);
WeightVector weight_unflatten(const Architecture& arch, const Eigen::VectorXd& entries);

/// Pre-activations recorded during forward(); every derivative routine reads
/// them back instead of re-running the network.
struct ForwardTape {
  Eigen::VectorXd input;
  std::vector<Eigen::VectorXd> pre;  // pre[l] = A_l a_l + b_l for l = 0..L-1
};

/// Network value r(w, u). The last affine stage is not activated. Fills
/// `tape` when non-null.
Eigen::VectorXd forward(const Architecture& arch, const WeightVector& w,
                        const Eigen::VectorXd& u, ForwardTape* tape = nullptr);

/// d r / d u, an (n_out x n_in) matrix.
Eigen::MatrixXd jacobian_u(const Architecture& arch, const WeightVector& w,
                           const ForwardTape& tape);

/// Directional derivative d r / d w_layer applied to `dir` (0-based layer).
Eigen::VectorXd jacobian_w(const Architecture& arch, const WeightVector& w,
                           const ForwardTape& tape, int layer, const Layer& dir);

/// Second derivative in the input: one symmetric (n_in x n_in) slice per
/// output coordinate.
std::vector<Eigen::MatrixXd> hessian_uu(const Architecture& arch,
                                        const WeightVector& w,
                                        const ForwardTape& tape);

/// Mixed second derivative: d(jacobian_u)/d w_layer applied to `dir`,
/// an (n_out x n_in) matrix.
Eigen::MatrixXd mixed_uw(const Architecture& arch, const WeightVector& w,
                         const ForwardTape& tape, int layer, const Layer& dir);

/// Global Lipschitz bound prod_l ||A_l||_F * sup|rho'|^hidden_size. The
/// Frobenius norm over-estimates the operator norm, so this is an upper bound.
double lipschitz_bound(const Architecture& arch, const WeightVector& w);

/// Shared forward/backward sensitivity products for one (w, u) pair. Build it
/// once when sweeping many weight directions at the same point; the referenced
/// architecture, weights and tape must outlive the cache.
class DerivativeCache {
 public:
  DerivativeCache(const Architecture& arch, const WeightVector& w,
                  const ForwardTape& tape);

  const Eigen::MatrixXd& jacobian_u() const { return jac_u_; }
  Eigen::VectorXd jacobian_w(int layer, const Layer& dir) const;
  std::vector<Eigen::MatrixXd> hessian_uu() const;
  Eigen::MatrixXd mixed_uw(int layer, const Layer& dir) const;

 private:
  void check_layer(int layer, const Layer& dir) const;

  const Architecture& arch_;
  const WeightVector& w_;
  std::vector<Eigen::VectorXd> a_;    // a_[l]: input fed into layer l
  std::vector<Eigen::VectorXd> d1_;   // rho'(pre[l]),  l = 0..L-2
  std::vector<Eigen::VectorXd> d2_;   // rho''(pre[l]), l = 0..L-2
  std::vector<Eigen::MatrixXd> out_pre_;   // d out / d pre[l]
  std::vector<Eigen::MatrixXd> out_act_;   // d out / d rho(pre[l]), l <= L-2
  std::vector<Eigen::MatrixXd> pre_in_;    // d pre[l] / d input
  std::vector<Eigen::MatrixXd> act_in_;    // d a_[l] / d input
  Eigen::MatrixXd jac_u_;
};

}  // namespace reglearn::mlp
