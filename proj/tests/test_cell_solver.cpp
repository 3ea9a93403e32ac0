#include <doctest.h>

#include <cmath>
#include <memory>

#include "mqs/cell_solver.hpp"
#include "mqs/geometry.hpp"

using namespace mqs;

namespace {

SmcGeometry desk_geometry() {
  SmcGeometry g;
  g.side_length = 800e-6;
  g.grains_per_side = 8;
  return g;
}

struct CellFixture {
  std::shared_ptr<const TriMesh> mesh;
  std::shared_ptr<const P1Geometry> geom;
  MaterialMap materials;
  CellNewtonOptions opts;

  CellFixture(const TriMesh& m, const MaterialMap& mm) : materials(mm) {
    mesh = std::make_shared<const TriMesh>(m);
    geom = std::make_shared<const P1Geometry>(*mesh);
  }
  CellProblem make() const { return CellProblem(mesh, geom, materials, opts); }
};

MaterialMap exp_materials() {
  MaterialMap mm;
  mm.grain_law = MagneticLawSpec::make_exp(ExpLawParams{});
  mm.grain_sigma = 5e6;
  return mm;
}

MaterialMap uniform_linear_materials(double nu) {
  MaterialMap mm;
  mm.grain_law = MagneticLawSpec::make_linear(nu);
  mm.background_law = MagneticLawSpec::make_linear(nu);
  mm.grain_sigma = 5e6;
  return mm;
}

}  // namespace

TEST_CASE("downscale: backward differences of the macro iterate") {
  SUBCASE("constant macro solution gives zero rates") {
    const CellSources src = downscale({0.3, -0.1}, {0.3, -0.1}, 2.5, 2.5, 1e-3);
    CHECK(src.db_M_dt.norm() == 0.0);
    CHECK(src.e_Mz == 0.0);
    CHECK(src.b_M.x() == 0.3);
    CHECK(src.kappa == 1.0);
  }
  SUBCASE("rates follow the differences") {
    const CellSources src = downscale({0.2, 0.0}, {0.1, 0.0}, 1.0, 2.0, 0.5);
    CHECK(src.db_M_dt.x() == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(src.e_Mz == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("identical iterates produce identical sources") {
    const CellSources a = downscale({0.2, 0.1}, {0.15, 0.1}, 1.0, 0.9, 1e-4);
    const CellSources b = downscale({0.2, 0.1}, {0.15, 0.1}, 1.0, 0.9, 1e-4);
    CHECK(a.b_M == b.b_M);
    CHECK(a.db_M_dt == b.db_M_dt);
    CHECK(a.e_Mz == b.e_Mz);
  }
  SUBCASE("source field evaluation uses (db x y)_z") {
    CellSources src;
    src.e_Mz = 2.0;
    src.db_M_dt = {3.0, 5.0};
    // e = e_Mz - kappa (db_x y2 - db_y y1)
    CHECK(cell_source_field(src, {0.5, 1.0}) == doctest::Approx(2.0 - (3.0 * 1.0 - 5.0 * 0.5)));
  }
}

TEST_CASE("zero sources and zero history: fields stay identically zero") {
  CellFixture fx(build_cell_mesh(desk_geometry(), 1), exp_materials());
  CellProblem cell = fx.make();
  CellSources src;
  src.dt = 1e-3;
  const UpscaledLaw up = cell.solve_step(src);
  CHECK(up.h_M.norm() == 0.0);
  CHECK(up.loss_density == 0.0);
  for (double v : cell.committed_potential()) CHECK(v == 0.0);
}

TEST_CASE("uniform linear cell under uniform flux: zero correction, exact tangent") {
  const double nu = 1234.5;
  CellFixture fx(build_cell_mesh(desk_geometry(), 1), uniform_linear_materials(nu));
  CellProblem cell = fx.make();
  CellSources src;
  src.b_M = {0.4, -0.2};
  const UpscaledLaw up = cell.solve_step(src, /*static_mode=*/true);

  // A uniform field is a cell-periodic equilibrium: no Newton update fires.
  BVec mean = cell.trial_mean_flux_correction();
  CHECK(mean.norm() == 0.0);
  CHECK(up.h_M.x() == doctest::Approx(nu * 0.4).epsilon(1e-14));
  CHECK(up.h_M.y() == doctest::Approx(nu * -0.2).epsilon(1e-14));

  const Tangent2 t = cell.upscale_tangent(src, 1e-4, true);
  CHECK(t(0, 0) == doctest::Approx(nu).epsilon(1e-8));
  CHECK(t(1, 1) == doctest::Approx(nu).epsilon(1e-8));
  CHECK(std::abs(t(0, 1)) <= 1e-8 * nu);
  CHECK(std::abs(t(1, 0)) <= 1e-8 * nu);
}

TEST_CASE("uniform exponential cell at zero flux: tangent is (alpha+beta) I") {
  MaterialMap mm;
  mm.grain_law = MagneticLawSpec::make_exp(ExpLawParams{});
  mm.background_law = mm.grain_law;
  CellFixture fx(build_cell_mesh(desk_geometry(), 1), mm);
  CellProblem cell = fx.make();
  CellSources src;  // b_M = 0
  cell.solve_step(src, true);
  const Tangent2 t = cell.upscale_tangent(src, 1e-4, true);
  const double expected = 388.0 + 0.3774;
  CHECK(t(0, 0) == doctest::Approx(expected).epsilon(1e-8));
  CHECK(t(1, 1) == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("laminate cell reproduces series/parallel mixing") {
  const double nu1 = 100.0, nu2 = 5000.0;
  const double fill = 0.4;
  MaterialMap mm;
  mm.grain_overrides[0] = MagneticLawSpec::make_linear(nu1);
  mm.grain_overrides[1] = MagneticLawSpec::make_linear(nu2);
  mm.grain_sigma = 0.0;
  CellFixture fx(build_laminate_cell_mesh(1e-4, fill, 6), mm);
  CellProblem cell = fx.make();

  CellSources src;
  src.b_M = {0.5, 0.3};
  cell.solve_step(src, /*static_mode=*/true);
  const Tangent2 t = cell.upscale_tangent(src, 1e-4, true);

  // Layers are normal to y: flux along x sees reluctivities in "series"
  // (harmonic mean), flux along y sees them in "parallel" (arithmetic).
  const double nu_harmonic = 1.0 / (fill / nu1 + (1.0 - fill) / nu2);
  const double nu_arithmetic = fill * nu1 + (1.0 - fill) * nu2;
  CHECK(t(0, 0) == doctest::Approx(nu_harmonic).epsilon(1e-6));
  CHECK(t(1, 1) == doctest::Approx(nu_arithmetic).epsilon(1e-6));
  CHECK(std::abs(t(0, 1)) <= 1e-6 * nu_arithmetic);
  CHECK(std::abs(t(1, 0)) <= 1e-6 * nu_arithmetic);
}

TEST_CASE("upscaled tangent agrees with a central-difference oracle") {
  CellFixture fx(build_cell_mesh(desk_geometry(), 2), exp_materials());
  CellProblem cell = fx.make();

  CellSources src;
  src.b_M = {0.03, 0.015};
  src.db_M_dt = {60.0, 30.0};
  src.e_Mz = -3e-4;
  src.dt = 5e-4;

  cell.solve_step(src);
  const double delta = 1e-4;
  const Tangent2 t = cell.upscale_tangent(src, delta);

  // Central difference over separate solves from the same virgin history.
  Tangent2 oracle;
  for (int dir = 0; dir < 2; ++dir) {
    CellSources sp = src, sm = src;
    sp.b_M[dir] += delta;
    sm.b_M[dir] -= delta;
    CellProblem cp = fx.make();
    const HVec hp = cp.solve_step(sp).h_M;
    CellProblem cm = fx.make();
    const HVec hm = cm.solve_step(sm).h_M;
    oracle.col(dir) = (hp - hm) / (2.0 * delta);
  }
  CHECK((t - oracle).norm() <= 1e-3 * oracle.norm());
}

TEST_CASE("dynamic step honors the downscaling invariants") {
  CellFixture fx(build_cell_mesh(desk_geometry(), 2), exp_materials());
  CellProblem cell = fx.make();

  CellSources src;
  src.b_M = {0.02, 0.005};
  src.db_M_dt = {40.0, 10.0};
  src.e_Mz = -2.4e-4;
  src.dt = 5e-4;
  cell.solve_step(src);

  SUBCASE("flux mean of the correction vanishes") {
    CHECK(cell.trial_mean_flux_correction().norm() <= 1e-10);
  }
  SUBCASE("per-grain net correction current vanishes") {
    CHECK(cell.trial_max_grain_current_rel(src) <= 1e-8);
  }
  SUBCASE("upscaled loss density is non-negative") {
    CHECK(cell.last_upscaled().loss_density >= 0.0);
    CHECK(cell.last_upscaled().loss_density > 0.0);  // nonzero drive
  }
}

TEST_CASE("static mode equals the dynamic dt->infinity limit") {
  CellFixture fx(build_cell_mesh(desk_geometry(), 1), exp_materials());

  CellSources src_static;
  src_static.b_M = {0.4, 0.1};
  CellProblem cell_s = fx.make();
  const UpscaledLaw up_s = cell_s.solve_step(src_static, true);

  CellSources src_dyn = src_static;
  src_dyn.dt = 1e12;  // sigma terms vanish
  CellProblem cell_d = fx.make();
  const UpscaledLaw up_d = cell_d.solve_step(src_dyn, false);

  CHECK((up_s.h_M - up_d.h_M).norm() <= 1e-8 * up_s.h_M.norm());
}

TEST_CASE("repeated solves are bit-identical") {
  CellFixture fx(build_cell_mesh(desk_geometry(), 1), exp_materials());
  CellSources src;
  src.b_M = {0.05, 0.02};
  src.db_M_dt = {100.0, 40.0};
  src.e_Mz = -1e-3;
  src.dt = 5e-4;

  CellProblem a = fx.make();
  CellProblem b = fx.make();
  const UpscaledLaw ua = a.solve_step(src);
  const UpscaledLaw ub = b.solve_step(src);
  CHECK(ua.h_M.x() == ub.h_M.x());
  CHECK(ua.h_M.y() == ub.h_M.y());
  CHECK(ua.loss_density == ub.loss_density);
}

TEST_CASE("commit versus trial state discipline") {
  CellFixture fx(build_cell_mesh(desk_geometry(), 1), exp_materials());
  CellProblem cell = fx.make();
  CellSources src;
  src.b_M = {0.05, 0.0};
  src.db_M_dt = {100.0, 0.0};
  src.e_Mz = -5e-4;
  src.dt = 5e-4;

  cell.solve_step(src);
  // Nothing committed yet.
  for (double v : cell.committed_potential()) CHECK(v == 0.0);
  cell.commit();
  double norm = 0.0;
  for (double v : cell.committed_potential()) norm += v * v;
  CHECK(norm > 0.0);
}

TEST_CASE("homogenized conductivity") {
  SUBCASE("uniform conducting cell returns sigma in every component") {
    // Both laminate layers are grains, so the whole cell conducts.
    const TriMesh lam = build_laminate_cell_mesh(1e-4, 0.5, 2);
    MaterialMap mm;
    mm.grain_sigma = 5e6;
    const HomogenizedConductivity s = homogenize_conductivity(lam, mm);
    CHECK(s.zz == doctest::Approx(5e6).epsilon(1e-12));
    CHECK(s.xx == doctest::Approx(5e6).epsilon(1e-9));
    CHECK(s.yy == doctest::Approx(5e6).epsilon(1e-9));
  }

  SUBCASE("two-element toy: area average in zz") {
    TriMesh toy;
    toy.nodes = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    toy.tris = {{{0, 1, 2}, RegionTag::make_grain(0)}, {{0, 2, 3}, {RegionKind::Insulation, -1}}};
    toy.bedges = {{0, 1, BoundaryTag::CellBottom},
                  {1, 2, BoundaryTag::CellRight},
                  {2, 3, BoundaryTag::CellTop},
                  {3, 0, BoundaryTag::CellLeft}};
    toy.periodic = {{1, 0}, {2, 0}, {3, 0}};
    MaterialMap mm;
    mm.grain_sigma = 8.0;
    const HomogenizedConductivity s = homogenize_conductivity(toy, mm);
    CHECK(s.zz == doctest::Approx(4.0).epsilon(1e-14));
  }

  SUBCASE("disconnected grains: zz is the fill average, in-plane vanishes") {
    const SmcGeometry geom = desk_geometry();
    const TriMesh cell = build_cell_mesh(geom, 1);
    MaterialMap mm = exp_materials();
    const HomogenizedConductivity s = homogenize_conductivity(cell, mm);
    CHECK(s.zz == doctest::Approx(geom.fill_factor() * 5e6).epsilon(1e-10));
    CHECK(std::abs(s.xx) <= 1e-9 * 5e6);
    CHECK(std::abs(s.yy) <= 1e-9 * 5e6);
  }

  SUBCASE("no conductivity anywhere") {
    const TriMesh cell = build_cell_mesh(desk_geometry(), 1);
    MaterialMap mm;
    mm.grain_sigma = 0.0;
    const HomogenizedConductivity s = homogenize_conductivity(cell, mm);
    CHECK(s.zz == 0.0);
    CHECK(s.xx == 0.0);
    CHECK(s.yy == 0.0);
  }
}
