#include "reglearn/fem1d.hpp"

#include <cmath>
#include <string>

namespace reglearn::fem1d {

bool ControlField::within_bounds() const {
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (values[i] < bounds.lower || values[i] > bounds.upper) return false;
  return true;
}

std::vector<int> ControlField::uniform_groups(int cells, int groups) {
  if (groups < 1 || groups > cells)
    throw DimensionError("group count must lie in [1, cells]");
  std::vector<int> map(cells);
  for (int c = 0; c < cells; ++c)
    map[c] = static_cast<int>((static_cast<long long>(c) * groups) / cells);
  return map;
}

ProblemData ProblemData::constant_source(const Mesh& mesh, double f, double g_left,
                                         double g_right) {
  ProblemData data;
  data.f_cell = Eigen::VectorXd::Constant(mesh.cells, f);
  data.g_left = g_left;
  data.g_right = g_right;
  return data;
}

Eigen::VectorXd SymTridiagonal::apply(const Eigen::VectorXd& x) const {
  if (x.size() != diag.size()) throw DimensionError("tridiagonal apply: size mismatch");
  const Eigen::Index n = diag.size();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double v = diag[i] * x[i];
    if (i > 0) v += off[i - 1] * x[i - 1];
    if (i + 1 < n) v += off[i] * x[i + 1];
    y[i] = v;
  }
  return y;
}

Eigen::VectorXd SymTridiagonal::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() != diag.size()) throw DimensionError("tridiagonal solve: size mismatch");
  const Eigen::Index n = diag.size();
  Eigen::VectorXd d = diag;
  Eigen::VectorXd b = rhs;
  // Forward elimination; positive pivots certify the SPD assumption.
  for (Eigen::Index i = 1; i < n; ++i) {
    if (!(d[i - 1] > 0.0))
      throw NumericalError("tridiagonal solve: non-positive pivot at row " +
                           std::to_string(i - 1));
    const double m = off[i - 1] / d[i - 1];
    d[i] -= m * off[i - 1];
    b[i] -= m * b[i - 1];
  }
  if (!(d[n - 1] > 0.0))
    throw NumericalError("tridiagonal solve: non-positive pivot at last row");
  Eigen::VectorXd x(n);
  x[n - 1] = b[n - 1] / d[n - 1];
  for (Eigen::Index i = n - 2; i >= 0; --i) x[i] = (b[i] - off[i] * x[i + 1]) / d[i];
  return x;
}

namespace {

void check_control(const ControlField& u, const Mesh& mesh) {
  if (static_cast<int>(u.group_map.size()) != mesh.cells)
    throw DimensionError("group_map length does not match cell count");
  for (int c = 0; c < mesh.cells; ++c)
    if (u.group_map[c] < 0 || u.group_map[c] >= u.group_count())
      throw DimensionError("group_map entry out of range");
  for (Eigen::Index j = 0; j < u.values.size(); ++j)
    if (!(u.values[j] > 0.0))
      throw EllipticityError("conductivity value " + std::to_string(u.values[j]) +
                             " is not strictly positive");
}

Eigen::VectorXd cell_gradient(const StateField& y, const Mesh& mesh) {
  Eigen::VectorXd g(mesh.cells);
  for (int c = 0; c < mesh.cells; ++c) g[c] = (y.nodal[c + 1] - y.nodal[c]) / mesh.h;
  return g;
}

}  // namespace

SymTridiagonal assemble_stiffness(const ControlField& u, const Mesh& mesh) {
  check_control(u, mesh);
  const int n = mesh.cells - 1;  // interior nodes
  SymTridiagonal k;
  k.diag.resize(n);
  k.off.resize(n - 1);
  for (int i = 0; i < n; ++i) {
    // Node i+1 is supported on cells i and i+1.
    k.diag[i] = (u.cell_value(i) + u.cell_value(i + 1)) / mesh.h;
    if (i + 1 < n) k.off[i] = -u.cell_value(i + 1) / mesh.h;
  }
  return k;
}

SymTridiagonal mass_matrix(const Mesh& mesh) {
  const int n = mesh.node_count();
  SymTridiagonal m;
  m.diag.resize(n);
  m.off = Eigen::VectorXd::Constant(n - 1, mesh.h / 6.0);
  for (int i = 0; i < n; ++i)
    m.diag[i] = (i == 0 || i == n - 1) ? mesh.h / 3.0 : 2.0 * mesh.h / 3.0;
  return m;
}

StateField solve_state(const ControlField& u, const ProblemData& data, const Mesh& mesh) {
  if (data.f_cell.size() != mesh.cells)
    throw DimensionError("source must have one value per cell");
  const SymTridiagonal k = assemble_stiffness(u, mesh);
  const int n = mesh.cells - 1;
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i)
    rhs[i] = 0.5 * mesh.h * (data.f_cell[i] + data.f_cell[i + 1]);
  // Dirichlet lifting: move the boundary couplings to the right-hand side.
  rhs[0] += u.cell_value(0) / mesh.h * data.g_left;
  rhs[n - 1] += u.cell_value(mesh.cells - 1) / mesh.h * data.g_right;
  const Eigen::VectorXd interior = k.solve(rhs);
  StateField y;
  y.nodal.resize(mesh.node_count());
  y.nodal[0] = data.g_left;
  y.nodal.segment(1, n) = interior;
  y.nodal[mesh.cells] = data.g_right;
  return y;
}

StateField solve_adjoint(const ControlField& u, const StateField& y,
                         const StateField& z_hat, const Mesh& mesh) {
  if (y.nodal.size() != mesh.node_count() || z_hat.nodal.size() != mesh.node_count())
    throw DimensionError("state fields must be nodal on the same mesh");
  const SymTridiagonal k = assemble_stiffness(u, mesh);
  const Eigen::VectorXd weighted = mass_matrix(mesh).apply(y.nodal - z_hat.nodal);
  const Eigen::VectorXd rhs = -weighted.segment(1, mesh.cells - 1);
  StateField p;
  p.nodal = Eigen::VectorXd::Zero(mesh.node_count());
  p.nodal.segment(1, mesh.cells - 1) = k.solve(rhs);
  return p;
}

StateField solve_linearized(const ControlField& u, const StateField& y,
                            const Eigen::VectorXd& du, const Mesh& mesh) {
  if (y.nodal.size() != mesh.node_count())
    throw DimensionError("state must be nodal on the same mesh");
  if (du.size() != u.values.size())
    throw DimensionError("control direction must have one value per group");
  const SymTridiagonal k = assemble_stiffness(u, mesh);
  const Eigen::VectorXd grad_y = cell_gradient(y, mesh);
  const int n = mesh.cells - 1;
  Eigen::VectorXd rhs(n);
  for (int i = 0; i < n; ++i) {
    // Row i of the stiffness form with coefficient du, applied to y.
    const double left = du[u.group_map[i]] * grad_y[i];
    const double right = du[u.group_map[i + 1]] * grad_y[i + 1];
    rhs[i] = -(left - right);
  }
  StateField t;
  t.nodal = Eigen::VectorXd::Zero(mesh.node_count());
  t.nodal.segment(1, n) = k.solve(rhs);
  return t;
}

double l2_inner(const StateField& a, const StateField& b, const Mesh& mesh) {
  if (a.nodal.size() != mesh.node_count() || b.nodal.size() != mesh.node_count())
    throw DimensionError("l2_inner: fields must live on the given mesh");
  return a.nodal.dot(mass_matrix(mesh).apply(b.nodal));
}

double h1_seminorm(const StateField& a, const Mesh& mesh) {
  if (a.nodal.size() != mesh.node_count())
    throw DimensionError("h1_seminorm: field must live on the given mesh");
  double acc = 0.0;
  for (int c = 0; c < mesh.cells; ++c) {
    const double d = a.nodal[c + 1] - a.nodal[c];
    acc += d * d / mesh.h;
  }
  return std::sqrt(acc);
}

Eigen::VectorXd grad_dot_integrals(const ControlField& u, const StateField& y,
                                   const StateField& p, const Mesh& mesh) {
  if (static_cast<int>(u.group_map.size()) != mesh.cells)
    throw DimensionError("group_map length does not match cell count");
  const Eigen::VectorXd gy = cell_gradient(y, mesh);
  const Eigen::VectorXd gp = cell_gradient(p, mesh);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(u.group_count());
  for (int c = 0; c < mesh.cells; ++c)
    out[u.group_map[c]] += mesh.h * gy[c] * gp[c];
  return out;
}

}  // namespace reglearn::fem1d
