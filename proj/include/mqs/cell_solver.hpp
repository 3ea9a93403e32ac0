#pragma once

#include <memory>
#include <vector>

#include "mqs/fem.hpp"
#include "mqs/jiles_atherton.hpp"
#include "mqs/materials.hpp"
#include "mqs/mesh.hpp"
#include "mqs/types.hpp"

namespace mqs {

/// Macroscale quantities downscaled to one cell problem.  kappa = 1/(n-1)
/// with n = 2 in this plane formulation.
struct CellSources {
  BVec b_M = BVec::Zero();
  BVec db_M_dt = BVec::Zero();
  double e_Mz = 0.0;  // -d/dt a_zM at the Gauss point
  double dt = 1.0;
  double kappa = 1.0;
};

/// Backward-difference downscaling of the macro iterate.
CellSources downscale(const BVec& b_M, const BVec& b_M_prev, double az_gp, double az_gp_prev,
                      double dt);

/// z-component of (v x y) for in-plane v.
inline double cross_z(const BVec& v, const Eigen::Vector2d& y) {
  return v.x() * y.y() - v.y() * y.x();
}

/// Source electric field at cell point y.
inline double cell_source_field(const CellSources& s, const Eigen::Vector2d& y) {
  return s.e_Mz - s.kappa * cross_z(s.db_M_dt, y);
}

struct UpscaledLaw {
  HVec h_M = HVec::Zero();
  Tangent2 tangent = Tangent2::Zero();
  double loss_density = 0.0;  // W/m^3, averaged over the full cell
};

struct CellNewtonOptions {
  double tol = 1e-8;
  int max_iter = 30;
  double under_relax = 0.5;
};

struct CellSolveStats {
  int solves = 0;
  int max_iterations = 0;
  double max_final_rel = 0.0;
};

/// One mesoscale periodic unit-cell problem bound to a macro Gauss point.
/// Unknowns: the nodal correction potential a_zc (periodic, zero mean via a
/// Lagrange multiplier) and one constant u_c per conducting grain enforcing
/// zero net axial current.  The committed state advances only through
/// commit(); solve_step/upscale_tangent work on trial copies.
class CellProblem {
 public:
  CellProblem(std::shared_ptr<const TriMesh> mesh, std::shared_ptr<const P1Geometry> geom,
              const MaterialMap& materials, const CellNewtonOptions& opts,
              const Eigen::Vector2d& anchor = Eigen::Vector2d::Zero());

  /// Implicit-Euler Newton solve at the given sources, starting from the
  /// committed history.  Fills h_M and the upscaled loss density; the
  /// tangent entry is left zero (see upscale_tangent).
  UpscaledLaw solve_step(const CellSources& src, bool static_mode = false);

  /// Two additional perturbed solves (b_M + delta*e_x, b_M + delta*e_y)
  /// from copied states; returns the finite-difference tangent, column c
  /// holding the response to a perturbation along direction c.
  Tangent2 upscale_tangent(const CellSources& src, double delta_b, bool static_mode = false);

  /// Accepts the most recent base solve as history.
  void commit();

  const TriMesh& mesh() const { return *mesh_; }
  const P1Geometry& geometry() const { return *geom_; }
  const Eigen::Vector2d& anchor() const { return anchor_; }
  void set_anchor(const Eigen::Vector2d& a) { anchor_ = a; }

  const UpscaledLaw& last_upscaled() const { return base_.out; }
  const std::vector<double>& committed_potential() const { return committed_a_; }
  const Eigen::VectorXd& committed_constants() const { return committed_u_; }

  /// Correction flux 1_z x grad(a_zc) of the committed state on cell
  /// triangle t.
  BVec committed_correction_flux(int t) const;

  /// <1_z x grad a_zc>_Y of the base trial solve (T).
  BVec trial_mean_flux_correction() const;
  /// max over grains of |net correction current| relative to
  /// sigma * |e_src| * grain area, for the base trial solve.
  double trial_max_grain_current_rel(const CellSources& src) const;

  const CellSolveStats& stats() const { return stats_; }
  void reset_stats() { stats_ = {}; }

  int n_grains() const { return static_cast<int>(grain_slots_.size()); }

 private:
  struct SolveWork {
    std::vector<double> a;
    Eigen::VectorXd u;
    double lambda = 0.0;
    std::vector<JAState> ja;
    std::vector<HVec> h_gp;  // per (tri, q), from the converged iterate
    UpscaledLaw out;
    int iterations = 0;
    double final_rel = 0.0;
    std::vector<double> residual_history;
  };

  SolveWork run_newton(const CellSources& src, const BVec& delta_b, bool static_mode,
                       const SolveWork* warm);

  std::shared_ptr<const TriMesh> mesh_;
  std::shared_ptr<const P1Geometry> geom_;
  const MaterialMap* materials_;
  CellNewtonOptions opts_;
  Eigen::Vector2d anchor_;

  DofMap dofs_dyn_;
  DofMap dofs_static_;
  std::vector<int> grain_slots_;        // sorted grain ids; slot = index
  std::vector<int> tri_grain_slot_;     // per triangle, -1 if not a grain
  std::vector<double> tri_sigma_;
  double cell_area_ = 0.0;
  std::vector<double> grain_areas_;     // per slot
  bool has_ja_ = false;

  // Cached coupling weights sigma * int_g(phi_i) between grain constants
  // and nodes (used scaled by 1/dt on the constraint rows).
  struct NodeSlotEntry {
    int node;
    int slot;
    double val;
  };
  std::vector<NodeSlotEntry> u_couple_;
  std::vector<double> grain_sigma_area_;  // per slot: sigma * |grain|
  // Load basis: int(sigma e_src phi_i) = e_Mz*Fe[i] - kappa*(db_x*Fx[i] - db_y*Fy[i])
  // with Fx = int(sigma y2 phi_i), Fy = int(sigma y1 phi_i); same for the
  // grain-constant rows.
  std::vector<double> load_e_node_, load_x_node_, load_y_node_;
  std::vector<double> load_e_u_, load_x_u_, load_y_u_;

  // Committed history and most recent base trial.
  std::vector<double> committed_a_;
  Eigen::VectorXd committed_u_;
  std::vector<JAState> committed_ja_;
  SolveWork base_;
  bool has_base_ = false;

  SparseDirectSolver solver_dyn_;
  SparseDirectSolver solver_static_;
  CellSolveStats stats_;
};

struct HomogenizedConductivity {
  double zz = 0.0;
  double xx = 0.0;
  double yy = 0.0;
};

/// Homogenized conductivity of a periodic cell: the axial component is the
/// plain area average; the in-plane components solve the periodic
/// electrokinetic cell problem (exactly zero for grains that do not
/// percolate).
HomogenizedConductivity homogenize_conductivity(const TriMesh& mesh, const MaterialMap& materials);

}  // namespace mqs
