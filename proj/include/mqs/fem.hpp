#pragma once

#include <Eigen/Sparse>
#include <functional>
#include <vector>

#include "mqs/materials.hpp"
#include "mqs/mesh.hpp"
#include "mqs/types.hpp"

namespace mqs {

/// Symmetric 3-point rule on the reference triangle, exact for degree 2.
struct QuadRule {
  struct Point {
    double l0, l1, l2, w;  // barycentric coordinates and weight (sums to 1)
  };
  std::vector<Point> points;
  static const QuadRule& tri3();
};

/// Precomputed P1 element data: area, shape gradients, and the rotated
/// gradients c_i = 1_z x grad(phi_i) used by the curl terms.  For P1 the
/// discrete flux density b = 1_z x grad(a) is constant per triangle.
class P1Geometry {
 public:
  explicit P1Geometry(const TriMesh& mesh);

  struct TriData {
    double area;
    std::array<Eigen::Vector2d, 3> grad;
    std::array<Eigen::Vector2d, 3> curl;  // 1_z x grad  = (-grad.y, grad.x)
  };
  const TriData& operator[](int t) const { return tri_[t]; }
  int size() const { return static_cast<int>(tri_.size()); }

  /// Physical location of quadrature point q of triangle t.
  Eigen::Vector2d gauss_point(const TriMesh& mesh, int t, int q) const;

  /// Constant per-triangle flux density from nodal potentials.
  BVec flux_density(const TriMesh& mesh, int t, const std::vector<double>& a) const;

  /// P1 interpolation of nodal values at quadrature point q.
  double interpolate(const TriMesh& mesh, int t, int q, const std::vector<double>& a) const;

 private:
  std::vector<TriData> tri_;
};

/// Node constraint resolution: Dirichlet values, periodic master-slave
/// folding, and the extra scalar dofs (per-grain constants, zero-mean
/// Lagrange multiplier).
class DofMap {
 public:
  struct Options {
    // Nodes touching a boundary edge with a tag accepted by this predicate
    // become Dirichlet.
    std::function<bool(BoundaryTag)> dirichlet_tags;
    // Value imposed at Dirichlet nodes (default zero).
    std::function<double(const Eigen::Vector2d&)> dirichlet_value;
    bool use_periodic = false;
    int n_grain_constants = 0;
    bool zero_mean = false;
  };

  static DofMap build(const TriMesh& mesh, const Options& opts);

  int node_dof(int node) const { return node_dof_[node]; }  // -1 when Dirichlet
  bool is_dirichlet(int node) const { return dirichlet_[node]; }
  double dirichlet_value(int node) const { return value_[node]; }
  int grain_dof(int slot) const { return grain_offset_ + slot; }
  int zero_mean_dof() const { return zero_mean_dof_; }
  int n_grain_constants() const { return n_grain_; }
  bool has_zero_mean() const { return zero_mean_dof_ >= 0; }
  int size() const { return n_dofs_; }
  int n_nodes() const { return static_cast<int>(node_dof_.size()); }

  /// Scatters a reduced solution into a full nodal vector (slaves copy
  /// their master, Dirichlet nodes take their imposed value).
  std::vector<double> expand(const Eigen::VectorXd& x) const;
  /// Adds a reduced increment to a full nodal vector in place.
  void add_increment(const Eigen::VectorXd& dx, std::vector<double>& nodal) const;

 private:
  std::vector<int> node_dof_;
  std::vector<bool> dirichlet_;
  std::vector<double> value_;
  int grain_offset_ = -1;
  int zero_mean_dof_ = -1;
  int n_grain_ = 0;
  int n_dofs_ = 0;
};

/// Accumulates triplets and a right-hand side in the reduced numbering.
/// Dirichlet rows are dropped; when `lift` is set, Dirichlet columns move
/// their contribution to the RHS (for direct linear solves).
class SystemAssembler {
 public:
  SystemAssembler(const DofMap& dofs, bool lift_dirichlet = false);

  void add_node_pair(int ni, int nj, double v);
  void add_node_dof(int ni, int dj, double v);
  void add_dof_node(int di, int nj, double v);
  void add_dof_pair(int di, int dj, double v);
  void add_rhs_node(int ni, double v);
  void add_rhs_dof(int di, double v);

  const std::vector<Eigen::Triplet<double>>& triplets() const { return trips_; }
  Eigen::VectorXd& rhs() { return rhs_; }
  const DofMap& dofs() const { return dofs_; }

 private:
  const DofMap& dofs_;
  bool lift_;
  std::vector<Eigen::Triplet<double>> trips_;
  Eigen::VectorXd rhs_;
};

/// Residual vector helper in the reduced numbering, tracking the absolute
/// magnitude of contributions for round-off floors.
class ResidualVector {
 public:
  explicit ResidualVector(const DofMap& dofs)
      : dofs_(dofs), r_(Eigen::VectorXd::Zero(dofs.size())) {}
  void add_node(int ni, double v) {
    const int d = dofs_.node_dof(ni);
    if (d >= 0) {
      r_[d] += v;
      scale_ += std::abs(v);
    }
  }
  void add_dof(int di, double v) {
    r_[di] += v;
    scale_ += std::abs(v);
  }
  const Eigen::VectorXd& vec() const { return r_; }
  double scale() const { return scale_; }
  const DofMap& dofs() const { return dofs_; }

 private:
  const DofMap& dofs_;
  Eigen::VectorXd r_;
  double scale_ = 0.0;
};

/// sigma/dt-weighted P1 mass matrix over conducting regions.
void assemble_mass_sigma(const TriMesh& mesh, const P1Geometry& geom, const DofMap& dofs,
                         const std::function<double(const RegionTag&)>& sigma_of, double dt,
                         SystemAssembler& out);

/// Mass action r += (sigma/dt) M (a - a_prev) in residual form.
void apply_mass_sigma(const TriMesh& mesh, const P1Geometry& geom,
                      const std::function<double(const RegionTag&)>& sigma_of, double dt,
                      const std::vector<double>& a, const std::vector<double>& a_prev,
                      ResidualVector& r);

struct LawEval {
  HVec h;
  Tangent2 dh_db;
};
using LawCallback = std::function<LawEval(int tri, int q, const BVec& b)>;

/// Curl-term residual r_i += sum_q w A h(b) . c_i and consistent tangent
/// K_ij += sum_q w A c_i^T (dh/db) c_j with b = 1_z x grad(a) per triangle.
/// Either output may be null.
void assemble_curl_term(const TriMesh& mesh, const P1Geometry& geom,
                        const std::vector<double>& a, const LawCallback& law,
                        ResidualVector* residual, SystemAssembler* tangent);

/// Zero-mean gauge row/column: lambda couples to int(phi_i) over the whole
/// mesh; with P1 this is area/3 per node.
void add_zero_mean_gauge(const TriMesh& mesh, const P1Geometry& geom, const DofMap& dofs,
                         SystemAssembler& out);
/// Residual contributions of the gauge: r_i += lambda int(phi_i) and
/// r_lambda += int(a).
void apply_zero_mean_gauge(const TriMesh& mesh, const P1Geometry& geom,
                           const std::vector<double>& a, double lambda, ResidualVector& r);

/// Integral of a P1 field over the mesh.
double integrate_p1(const TriMesh& mesh, const P1Geometry& geom, const std::vector<double>& a);

/// Direct sparse LU with fill-reducing ordering.  Deterministic: identical
/// input reproduces identical factors and solutions.
class SparseDirectSolver {
 public:
  void factorize(int n, const std::vector<Eigen::Triplet<double>>& triplets);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  bool analyzed() const { return analyzed_; }

 private:
  Eigen::SparseMatrix<double> mat_;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu_;
  bool analyzed_ = false;
};

/// One-shot assemble-and-solve convenience.
Eigen::VectorXd sparse_solve(int n, const std::vector<Eigen::Triplet<double>>& triplets,
                             const Eigen::VectorXd& rhs);

}  // namespace mqs
