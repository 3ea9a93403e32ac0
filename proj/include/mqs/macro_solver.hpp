#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "mqs/cell_solver.hpp"
#include "mqs/config.hpp"
#include "mqs/fem.hpp"
#include "mqs/metrics.hpp"

namespace mqs {

struct StepDiagnostics {
  int step = 0;
  double time = 0.0;
  int newton_solves = 0;                  // linear solves performed
  std::vector<double> residual_history;   // absolute 2-norms per evaluation
  double final_rel_residual = 0.0;
  int cell_solves = 0;                    // base + perturbed, this step
  int max_cell_iters = 0;
  double max_cell_final_rel = 0.0;
  double max_cell_mean_flux = 0.0;        // |<1_z x grad a_zc>| worst cell, T
  double max_cell_grain_current_rel = 0.0;
  int dt_halvings = 0;
  double upscaled_power = 0.0;            // W/m
};

struct ProbeSeries {
  Eigen::Vector2d location;
  bool has_meso = false;
  std::vector<BVec> macro_b;  // per recorded time (incl. t0)
  std::vector<BVec> meso_b;   // empty when !has_meso
};

/// Per-step snapshot of one selected cell problem (optional dump).
struct CellDump {
  int gp = -1;
  std::vector<std::vector<double>> a_zc;  // committed correction per recorded time
  std::vector<Eigen::VectorXd> u_c;
  std::vector<CellSources> sources;
};

struct MacroRunResult {
  std::vector<double> times;                     // incl. t0
  std::vector<std::vector<double>> az_history;   // nodal potentials per time
  LossSeries losses;                             // upscaled Joule power
  std::vector<StepDiagnostics> diagnostics;      // per accepted step
  std::vector<ProbeSeries> probes;
  HomogenizedConductivity sigma_M;
  CellDump cell_dump;                            // empty unless requested
};

/// Monolithic FE-HMM driver: macro implicit-Euler/Newton loop with the
/// upscaled constitutive law; every macro Newton iteration dispatches all
/// cell problems (one base + two perturbed solves each).  Cell states
/// commit only when a macro step is accepted.
class MacroSolver {
 public:
  explicit MacroSolver(const RunConfig& cfg);

  MacroRunResult run_dynamic();
  MacroRunResult run_static();

  const TriMesh& mesh() const { return *mesh_; }
  const P1Geometry& geometry() const { return *geom_; }
  const DofMap& dof_map() const { return dofs_; }
  int n_gauss_points() const { return static_cast<int>(gps_.size()); }
  const HomogenizedConductivity& sigma_M() const { return sigma_M_; }

  /// Macro residual at iterate `a` with cells trial-solved from committed
  /// history (no commit).  Testing surface for Jacobian checks.
  Eigen::VectorXd residual_at(const std::vector<double>& a, const std::vector<double>& a_prev,
                              double t, double dt);
  /// The reduced Jacobian at the same iterate, as a dense-solvable sparse
  /// triplet list.
  std::vector<Eigen::Triplet<double>> jacobian_at(const std::vector<double>& a,
                                                  const std::vector<double>& a_prev, double t,
                                                  double dt);

 private:
  struct GaussPoint {
    int tri = -1;
    int q = -1;
    Eigen::Vector2d location;
    std::unique_ptr<CellProblem> cell;
  };

  struct Assembled {
    Eigen::VectorXd residual;
    double scale = 0.0;
    std::vector<Eigen::Triplet<double>> tangent;
    double source_norm = 0.0;
  };

  void solve_cells(const std::vector<double>& a, const std::vector<double>& a_prev, double dt,
                   bool static_mode);
  Assembled assemble(const std::vector<double>& a, const std::vector<double>& a_prev, double t,
                     double dt, bool with_tangent, bool static_mode);
  // Newton loop for one time step; returns diagnostics, throws SolverError
  // on non-convergence.  `a` is updated in place.
  StepDiagnostics newton_solve(std::vector<double>& a, const std::vector<double>& a_prev, double t,
                               double dt, bool static_mode);
  void commit_cells(StepDiagnostics& diag, const std::vector<double>& a,
                    const std::vector<double>& a_prev, double dt, bool static_mode);
  void record_probes(MacroRunResult& result, const std::vector<double>& a) const;
  double upscaled_power() const;

  RunConfig cfg_;
  std::shared_ptr<const TriMesh> mesh_;
  std::shared_ptr<const P1Geometry> geom_;
  DofMap dofs_;
  std::shared_ptr<const TriMesh> cell_mesh_;
  std::shared_ptr<const P1Geometry> cell_geom_;
  MaterialMap materials_;       // cell-level laws
  MaterialMap macro_materials_; // exact laws for air/inductor on the macro mesh
  std::vector<GaussPoint> gps_;
  std::vector<int> tri_gp_base_;  // per macro tri: first gp index or -1
  HomogenizedConductivity sigma_M_;
  double macro_sigma_zz_ = 0.0;  // value used in the macro mass term
  std::vector<double> source_shape_;  // per node: signed int(phi_i) over inductors

  struct ProbeBinding {
    Eigen::Vector2d location;
    int macro_tri = -1;
    int gp = -1;        // -1 when outside the homogenized block
    int cell_tri = -1;  // triangle of the wrapped point in the cell mesh
  };
  std::vector<ProbeBinding> probe_bindings_;

  SparseDirectSolver macro_lu_;
};

}  // namespace mqs
