#pragma once

#include <memory>
#include <vector>

#include "mqs/config.hpp"
#include "mqs/fem.hpp"
#include "mqs/jiles_atherton.hpp"
#include "mqs/macro_solver.hpp"
#include "mqs/metrics.hpp"

namespace mqs {

struct ReferenceRunResult {
  std::vector<double> times;                    // incl. t0
  std::vector<std::vector<double>> az_history;  // nodal potentials per time
  LossSeries losses;
  std::vector<StepDiagnostics> diagnostics;
  std::vector<ProbeSeries> probes;  // direct fields in macro_b
};

/// Brute-force solver of the fullscale problem on the finely meshed domain
/// with every grain resolved: implicit Euler + Newton on
/// (sigma dt_a, a') + (h, 1_z x grad a') = (j_s, a'), with optional
/// per-grain constants enforcing zero net axial current (benchmark default).
class ReferenceSolver {
 public:
  explicit ReferenceSolver(const RunConfig& cfg);

  ReferenceRunResult run();

  const TriMesh& mesh() const { return *mesh_; }
  const P1Geometry& geometry() const { return *geom_; }
  const DofMap& dof_map() const { return dofs_; }

  /// Piecewise-constant flux density at `p` from a nodal solution.
  BVec field_at(const std::vector<double>& a, const Eigen::Vector2d& p) const;
  /// b(t) series at a spatial point over a stored run.
  std::vector<BVec> probe_field(const ReferenceRunResult& run, const Eigen::Vector2d& p) const;

  /// Warns (returns false) when fewer than two elements resolve the skin
  /// depth at the run frequency, using the linearized grain reluctivity.
  bool resolution_ok(double* skin_depth = nullptr) const;

 private:
  struct Assembled {
    Eigen::VectorXd residual;
    double scale = 0.0;
    std::vector<Eigen::Triplet<double>> tangent;
    double source_norm = 0.0;
  };
  Assembled assemble(const std::vector<double>& a, const Eigen::VectorXd& u,
                     const std::vector<double>& a_prev, double t, double dt, bool with_tangent,
                     std::vector<JAState>* trial_ja);
  StepDiagnostics newton_solve(std::vector<double>& a, Eigen::VectorXd& u,
                               const std::vector<double>& a_prev, double t, double dt);
  double joule_power(const std::vector<double>& a, const Eigen::VectorXd& u,
                     const std::vector<double>& a_prev, double dt) const;

  RunConfig cfg_;
  std::shared_ptr<const TriMesh> mesh_;
  std::shared_ptr<const P1Geometry> geom_;
  DofMap dofs_;
  MaterialMap materials_;
  std::vector<int> grain_slots_;
  std::vector<int> tri_grain_slot_;
  std::vector<double> tri_sigma_;
  struct NodeSlotEntry {
    int node;
    int slot;
    double val;  // sigma * int_g(phi_i)
  };
  std::vector<NodeSlotEntry> u_couple_;
  std::vector<double> grain_sigma_area_;
  std::vector<double> source_shape_;
  std::vector<JAState> committed_ja_;
  std::vector<JAState> trial_ja_;
  bool has_ja_ = false;
  SparseDirectSolver lu_;
};

}  // namespace mqs
