#pragma once

#include <Eigen/Dense>

#include <vector>

#include "reglearn/errors.hpp"

namespace reglearn::fem1d {

/// Uniform partition of (0,1) into `cells` intervals, P1 nodal basis.
struct Mesh {
  int cells = 0;
  double h = 0.0;

  explicit Mesh(int n) : cells(n), h(1.0 / n) {
    if (n < 2) throw DimensionError("mesh needs at least 2 cells");
  }
  int node_count() const { return cells + 1; }
  double node(int i) const { return i * h; }
};

/// Admissible box 0 < lower <= u <= upper for the conductivity.
struct Bounds {
  double lower = 0.1;
  double upper = 10.0;

  void validate() const {
    if (!(upper > lower) || !(lower > 0.0))
      throw DimensionError("bounds must satisfy upper > lower > 0");
  }
};

/// Piecewise-constant conductivity. One value per control group; `group_map`
/// sends each mesh cell to its group, so the control dimension can be far
/// below the cell count.
struct ControlField {
  Eigen::VectorXd values;
  std::vector<int> group_map;
  Bounds bounds;

  int group_count() const { return static_cast<int>(values.size()); }
  double cell_value(int cell) const { return values[group_map[cell]]; }
  bool within_bounds() const;

  /// Contiguous blocks: cell c -> group c * groups / cells. Every group is hit.
  static std::vector<int> uniform_groups(int cells, int groups);
};

/// Nodal P1 coefficients; states, adjoints and tangents all use this shape.
struct StateField {
  Eigen::VectorXd nodal;
};

/// Cellwise-constant source and Dirichlet boundary pair.
struct ProblemData {
  Eigen::VectorXd f_cell;
  double g_left = 0.0;
  double g_right = 0.0;

  static ProblemData constant_source(const Mesh& mesh, double f, double g_left,
                                     double g_right);
};

/// Symmetric tridiagonal matrix with a pivot-free elimination solve (valid
/// because every system assembled here is SPD).
struct SymTridiagonal {
  Eigen::VectorXd diag;  // size n
  Eigen::VectorXd off;   // size n-1

  int size() const { return static_cast<int>(diag.size()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// Thomas elimination; throws NumericalError if a pivot is not positive.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
};

/// Stiffness form sum_cells u_cell int phi_i' phi_j' restricted to interior
/// nodes (Dirichlet rows/columns eliminated). Throws EllipticityError when a
/// coefficient value is not strictly positive.
SymTridiagonal assemble_stiffness(const ControlField& u, const Mesh& mesh);

/// Exact P1 mass matrix over all nodes.
SymTridiagonal mass_matrix(const Mesh& mesh);

/// State solve: -(u y')' = f with y(0) = g_left, y(1) = g_right.
StateField solve_state(const ControlField& u, const ProblemData& data, const Mesh& mesh);

/// Adjoint solve: -(u p')' = -(y - z_hat) with homogeneous Dirichlet data.
StateField solve_adjoint(const ControlField& u, const StateField& y,
                         const StateField& z_hat, const Mesh& mesh);

/// Tangent solve: the derivative of the state in the control direction `du`
/// (one entry per group) solves -(u t')' = (du y')' with zero boundary data.
StateField solve_linearized(const ControlField& u, const StateField& y,
                            const Eigen::VectorXd& du, const Mesh& mesh);

/// Exact P1 quadrature of int a b over (0,1).
double l2_inner(const StateField& a, const StateField& b, const Mesh& mesh);

/// sqrt(int |a'|^2); the gradient of a P1 field is constant per cell.
double h1_seminorm(const StateField& a, const Mesh& mesh);

/// Per-group integrals [ int_{group j} y' p' ]_j; the PDE part of the reduced
/// misfit gradient with respect to the control values.
Eigen::VectorXd grad_dot_integrals(const ControlField& u, const StateField& y,
                                   const StateField& p, const Mesh& mesh);

}  // namespace reglearn::fem1d
