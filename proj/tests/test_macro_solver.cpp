#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mqs/macro_solver.hpp"

using namespace mqs;

namespace {

// Small desk-scale configuration for fast solver tests.
RunConfig small_config() {
  RunConfig cfg;
  cfg.geometry.side_length = 400e-6;
  cfg.geometry.grains_per_side = 4;
  cfg.geometry.air_margin = 300e-6;
  cfg.macro_divisions = 2;
  cfg.cell_refine = 1;
  cfg.reference_refine = 1;
  cfg.steps_per_period = 8;
  cfg.n_periods = 0.25;
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("zero source gives a zero solution with no Newton updates") {
  RunConfig cfg = small_config();
  cfg.source.j_s0 = 0.0;
  MacroSolver solver(cfg);
  const MacroRunResult r = solver.run_dynamic();
  for (const auto& a : r.az_history)
    for (double v : a) CHECK(v == 0.0);
  for (double p : r.losses.values) CHECK(p == 0.0);
  for (const auto& d : r.diagnostics) {
    CHECK(d.newton_solves == 0);
    CHECK(d.residual_history.size() == 1);
  }
}

TEST_CASE("linear law converges in one Newton solve per step") {
  RunConfig cfg = small_config();
  cfg.law = LawKind::Linear;
  cfg.linear_nu = NU0 / 100.0;  // mu_r = 100 grains
  MacroSolver solver(cfg);
  const MacroRunResult r = solver.run_dynamic();
  for (const auto& d : r.diagnostics) CHECK(d.newton_solves == 1);
  CHECK(r.losses.values.back() > 0.0);
}

TEST_CASE("boundary conditions: GAMMA_V stays free, outer and horizontal pinned") {
  RunConfig cfg = small_config();
  MacroSolver solver(cfg);
  const TriMesh& mesh = solver.mesh();
  const DofMap& dofs = solver.dof_map();
  const double w = cfg.geometry.outer_halfwidth();
  for (const auto& be : mesh.bedges) {
    for (int n : {be.n0, be.n1}) {
      const auto& p = mesh.nodes[n];
      if (p.y() == 0.0 || p.x() == w || p.y() == w) {
        CHECK(dofs.is_dirichlet(n));
      } else if (p.x() == 0.0) {
        CHECK(!dofs.is_dirichlet(n));
      }
    }
  }
}

TEST_CASE("every macro Newton iteration solves N_GP * 3 cell problems") {
  RunConfig cfg = small_config();
  cfg.steps_per_period = 4;
  cfg.n_periods = 0.25;  // one step
  MacroSolver solver(cfg);
  const MacroRunResult r = solver.run_dynamic();
  REQUIRE(r.diagnostics.size() == 1);
  const auto& d = r.diagnostics[0];
  const int evaluations = static_cast<int>(d.residual_history.size());
  CHECK(d.cell_solves == solver.n_gauss_points() * 3 * evaluations);
}

TEST_CASE("time-reversal symmetry: flipping the source flips the fields") {
  RunConfig cfg = small_config();
  cfg.steps_per_period = 6;
  cfg.n_periods = 0.5;
  MacroSolver pos(cfg);
  const MacroRunResult rp = pos.run_dynamic();

  RunConfig neg_cfg = cfg;
  neg_cfg.source.j_s0 = -cfg.source.j_s0;
  MacroSolver neg(neg_cfg);
  const MacroRunResult rn = neg.run_dynamic();

  REQUIRE(rp.az_history.size() == rn.az_history.size());
  double scale = 0.0;
  for (double v : rp.az_history.back()) scale = std::max(scale, std::abs(v));
  REQUIRE(scale > 0.0);
  for (size_t s = 0; s < rp.az_history.size(); ++s)
    for (size_t i = 0; i < rp.az_history[s].size(); ++i)
      CHECK(std::abs(rp.az_history[s][i] + rn.az_history[s][i]) <= 1e-10 * scale);
}

TEST_CASE("static mode matches the dynamic dt->infinity limit for linear laws") {
  RunConfig cfg = small_config();
  cfg.law = LawKind::Linear;
  cfg.linear_nu = NU0 / 50.0;

  MacroSolver stat(cfg);
  const MacroRunResult rs = stat.run_static();

  // One dynamic step covering a quarter period of a vanishing frequency:
  // sin(2 pi f t) = 1 at t = 1/(4f), with dt -> infinity.
  RunConfig dyn_cfg = cfg;
  dyn_cfg.source.frequency = 1e-9;
  dyn_cfg.steps_per_period = 4;
  dyn_cfg.n_periods = 0.25;
  MacroSolver dyn(dyn_cfg);
  const MacroRunResult rd = dyn.run_dynamic();

  const auto& a_s = rs.az_history.back();
  const auto& a_d = rd.az_history.back();
  double scale = 0.0;
  for (double v : a_s) scale = std::max(scale, std::abs(v));
  REQUIRE(scale > 0.0);
  for (size_t i = 0; i < a_s.size(); ++i) CHECK(std::abs(a_s[i] - a_d[i]) <= 1e-8 * scale);

  SUBCASE("static solve ignores the time discretization") {
    RunConfig other = cfg;
    other.steps_per_period = 17;
    MacroSolver stat2(other);
    const MacroRunResult rs2 = stat2.run_static();
    for (size_t i = 0; i < a_s.size(); ++i) CHECK(rs2.az_history.back()[i] == a_s[i]);
  }
}

TEST_CASE("reduced Jacobian properties with linear cells") {
  RunConfig cfg = small_config();
  cfg.law = LawKind::Linear;
  cfg.linear_nu = NU0 / 10.0;
  MacroSolver solver(cfg);

  std::vector<double> a(solver.mesh().nodes.size(), 0.0);
  const auto trips = solver.jacobian_at(a, a, 1e-4, 1e-4);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(solver.dof_map().size(), solver.dof_map().size());
  for (const auto& t : trips) J(t.row(), t.col()) += t.value();

  SUBCASE("Jacobian is symmetric for reversible isotropic laws") {
    CHECK((J - J.transpose()).norm() <= 1e-8 * J.norm());
  }

  SUBCASE("Jacobian equals the single-scale assembly with the upscaled reluctivity") {
    // With uniform linear cells the upscaled law is a fixed tangent;
    // assembling the macro system directly with that tangent in the block
    // must reproduce the reduced Jacobian.
    const TriMesh& mesh = solver.mesh();
    auto cell_mesh = std::make_shared<const TriMesh>(build_cell_mesh(cfg.geometry, cfg.cell_refine));
    auto cell_geom = std::make_shared<const P1Geometry>(*cell_mesh);
    MaterialMap mm = cfg.material_map();
    CellProblem cell(cell_mesh, cell_geom, mm, CellNewtonOptions{});
    CellSources src;
    src.b_M = BVec::Zero();
    src.dt = 1e-4;
    cell.solve_step(src);
    const Tangent2 t_up = cell.upscale_tangent(src, cfg.perturbation_b);

    SystemAssembler K(solver.dof_map());
    auto law = [&](int tri, int, const BVec& b) -> LawEval {
      if (mesh.tris[tri].region.kind == RegionKind::SmcHomogenized) return {t_up * b, t_up};
      auto [h, tan] = eval_law(mm.law_for(mesh.tris[tri].region), b);
      return {h, tan};
    };
    assemble_curl_term(mesh, solver.geometry(), a, law, nullptr, &K);
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(J.rows(), J.cols());
    for (const auto& t : K.triplets()) S(t.row(), t.col()) += t.value();
    CHECK((J - S).norm() <= 1e-8 * S.norm());
  }
}

TEST_CASE("Jacobian-vector product matches finite differences of the residual") {
  RunConfig cfg = small_config();
  cfg.law = LawKind::Exponential;
  cfg.cell_tol = 1e-12;  // keeps cell-solve noise below the FD resolution
  cfg.steps_per_period = 8;
  cfg.n_periods = 0.125;  // one accepted step for a realistic state
  MacroSolver solver(cfg);
  const MacroRunResult warm = solver.run_dynamic();
  const std::vector<double> a_prev = warm.az_history.front();
  const std::vector<double> a0 = warm.az_history.back();
  const int n = solver.dof_map().size();

  std::mt19937 rng(31);
  std::uniform_real_distribution<double> dist(-1, 1);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = dist(rng);
  v.normalize();

  const double dt = cfg.time_grid().dt();
  const double t = warm.times.back();
  const auto trips = solver.jacobian_at(a0, a_prev, t, dt);
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (const auto& tr : trips) J(tr.row(), tr.col()) += tr.value();

  double a_scale = 0.0;
  for (double av : a0) a_scale = std::max(a_scale, std::abs(av));
  REQUIRE(a_scale > 0.0);
  const double eps = 1e-5 * a_scale;
  std::vector<double> a_pert = a0;
  Eigen::VectorXd ve = eps * v;
  solver.dof_map().add_increment(ve, a_pert);
  const Eigen::VectorXd r0 = solver.residual_at(a0, a_prev, t, dt);
  const Eigen::VectorXd r1 = solver.residual_at(a_pert, a_prev, t, dt);
  const Eigen::VectorXd fd = (r1 - r0) / eps;
  const Eigen::VectorXd jv = J * v;
  CHECK((jv - fd).norm() <= 1e-3 * jv.norm());
}

TEST_CASE("quarter-domain solve matches the full-domain oracle") {
  RunConfig cfg = small_config();
  cfg.law = LawKind::Linear;
  cfg.linear_nu = NU0 / 200.0;
  cfg.macro_divisions = 4;

  MacroSolver quarter(cfg);
  const MacroRunResult rq = quarter.run_static();

  RunConfig full_cfg = cfg;
  full_cfg.geometry.quarter_symmetry = false;
  MacroSolver full(full_cfg);
  const MacroRunResult rf = full.run_static();

  // Compare b at matching sample points inside the block (quarter
  // coordinates are the upper-right quadrant of the full domain).
  const auto& qm = quarter.mesh();
  const auto& fm = full.mesh();
  const P1Geometry& qg = quarter.geometry();
  const P1Geometry& fg = full.geometry();
  double max_err = 0.0, bscale = 0.0;
  for (const Eigen::Vector2d p :
       {Eigen::Vector2d{60e-6, 60e-6}, Eigen::Vector2d{140e-6, 60e-6}, Eigen::Vector2d{140e-6, 140e-6}}) {
    const int tq = qm.find_triangle(p);
    const int tf = fm.find_triangle(p);
    REQUIRE(tq >= 0);
    REQUIRE(tf >= 0);
    const BVec bq = qg.flux_density(qm, tq, rq.az_history.back());
    const BVec bf = fg.flux_density(fm, tf, rf.az_history.back());
    bscale = std::max(bscale, bf.norm());
    max_err = std::max(max_err, (bq - bf).norm());
  }
  REQUIRE(bscale > 0.0);
  CHECK(max_err <= 0.01 * bscale);
}

TEST_CASE("upscaled Joule power is non-negative at every step") {
  RunConfig cfg = small_config();
  cfg.steps_per_period = 6;
  cfg.n_periods = 0.5;
  MacroSolver solver(cfg);
  const MacroRunResult r = solver.run_dynamic();
  for (double p : r.losses.values) CHECK(p >= 0.0);
  CHECK(*std::max_element(r.losses.values.begin(), r.losses.values.end()) > 0.0);
}

TEST_CASE("residuals decrease within each converged Newton loop") {
  RunConfig cfg = small_config();
  cfg.steps_per_period = 6;
  cfg.n_periods = 0.5;
  MacroSolver solver(cfg);
  const MacroRunResult r = solver.run_dynamic();
  for (const auto& d : r.diagnostics) {
    REQUIRE(!d.residual_history.empty());
    CHECK(d.final_rel_residual <= cfg.macro_tol);
    // Monotone decrease after at most two initial iterations.
    for (size_t i = 3; i < d.residual_history.size(); ++i)
      CHECK(d.residual_history[i] <= d.residual_history[i - 1] * (1.0 + 1e-12));
  }
}

TEST_CASE("probe bindings record macro and meso series") {
  RunConfig cfg = small_config();
  cfg.steps_per_period = 4;
  cfg.n_periods = 0.25;
  cfg.probes.push_back({25e-6, 25e-6});                                 // inside the block
  cfg.probes.push_back({cfg.geometry.outer_halfwidth() * 0.9, 25e-6});  // in air
  MacroSolver solver(cfg);
  const MacroRunResult r = solver.run_dynamic();
  REQUIRE(r.probes.size() == 2);
  CHECK(r.probes[0].has_meso);
  CHECK(!r.probes[1].has_meso);
  CHECK(r.probes[0].macro_b.size() == r.times.size());
  CHECK(r.probes[0].meso_b.size() == r.times.size());
  CHECK(r.probes[0].meso_b.back().norm() > 0.0);

  SUBCASE("probes outside the mesh are rejected") {
    RunConfig bad = cfg;
    bad.probes = {{1.0, 1.0}};
    CHECK_THROWS_AS(MacroSolver{bad}, ProbeError);
  }
}
