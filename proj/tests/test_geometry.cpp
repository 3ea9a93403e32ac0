#include <doctest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "mqs/geometry.hpp"

using namespace mqs;

namespace {

SmcGeometry desk_geometry() {
  SmcGeometry g;
  g.side_length = 800e-6;
  g.grains_per_side = 8;
  return g;
}

RegionTag air_region(const Eigen::Vector2d&) { return {RegionKind::Air, -1}; }
BoundaryTag inf_boundary(RectSide) { return BoundaryTag::GammaInf; }

}  // namespace

TEST_CASE("unit square with one division gives two triangles of total area 1") {
  const TriMesh mesh = build_rect_mesh({0.0, 1.0}, {0.0, 1.0}, air_region, inf_boundary);
  CHECK(mesh.tris.size() == 2);
  CHECK(mesh.nodes.size() == 4);
  CHECK(mesh.total_area() == doctest::Approx(1.0).epsilon(1e-15));
  mesh.validate();
}

TEST_CASE("triangle areas partition the analytic domain area") {
  const SmcGeometry geom = desk_geometry();
  const double w = geom.outer_halfwidth();

  const TriMesh macro = build_macro_mesh(geom, 4);
  CHECK(macro.total_area() == doctest::Approx(w * w).epsilon(1e-12));

  const TriMesh cell = build_cell_mesh(geom, 2);
  const double p = geom.pitch();
  CHECK(cell.total_area() == doctest::Approx(p * p).epsilon(1e-12));

  const TriMesh ref = build_reference_mesh(geom, 1);
  CHECK(ref.total_area() == doctest::Approx(w * w).epsilon(1e-12));
}

TEST_CASE("paper quarter geometry has a 500x500 um homogenized block") {
  // L = 1000 um with 20 grains per side: the macro build only needs the
  // block itself, grains are not resolved here.
  SmcGeometry geom;
  geom.side_length = 1000e-6;
  geom.grains_per_side = 20;
  const TriMesh mesh = build_macro_mesh(geom, 5);
  mesh.validate();

  const double smc_area = mesh.region_area({RegionKind::SmcHomogenized, -1});
  CHECK(smc_area == doctest::Approx(500e-6 * 500e-6).epsilon(1e-12));

  const double ind_area = mesh.region_area({RegionKind::InductorPos, -1});
  CHECK(ind_area == doctest::Approx(500e-6 * geom.inductor_thickness).epsilon(1e-12));
  CHECK(mesh.region_area({RegionKind::Air, -1}) > 0.0);

  // Boundary tags sit on the expected sides.
  for (const auto& be : mesh.bedges) {
    const Eigen::Vector2d mid = 0.5 * (mesh.nodes[be.n0] + mesh.nodes[be.n1]);
    switch (be.tag) {
      case BoundaryTag::GammaV:
        CHECK(mid.x() == 0.0);
        break;
      case BoundaryTag::GammaH:
        CHECK(mid.y() == 0.0);
        break;
      case BoundaryTag::GammaInf:
        CHECK((mid.x() == geom.outer_halfwidth() || mid.y() == geom.outer_halfwidth()));
        break;
      default:
        FAIL("unexpected boundary tag on macro mesh");
    }
  }
}

TEST_CASE("inconsistent dimensions raise a geometry error") {
  SmcGeometry geom = desk_geometry();
  geom.air_margin = 0.0;
  CHECK_THROWS_AS(build_macro_mesh(geom, 2), GeometryError);

  SmcGeometry bad = desk_geometry();
  bad.inductor_thickness = -1e-6;
  CHECK_THROWS_AS(build_macro_mesh(bad, 2), GeometryError);

  // Grains larger than the pitch are fine for the macro mesh but not for
  // grain-resolved builders.
  SmcGeometry tight;
  tight.side_length = 1000e-6;
  tight.grains_per_side = 20;  // pitch 50 um < grain side 75 um
  CHECK_NOTHROW(build_macro_mesh(tight, 2));
  CHECK_THROWS_AS(build_cell_mesh(tight, 1), GeometryError);
  CHECK_THROWS_AS(build_reference_mesh(tight, 1), GeometryError);
}

TEST_CASE("cell mesh: periodic pairing is a compressed bijection") {
  const SmcGeometry geom = desk_geometry();
  const TriMesh cell = build_cell_mesh(geom, 1);
  cell.validate();
  const double p = geom.pitch();

  std::set<int> slaves, masters;
  for (const auto& [s, m] : cell.periodic) {
    CHECK(slaves.insert(s).second);
    masters.insert(m);
  }
  for (int s : slaves) CHECK(masters.count(s) == 0);

  // Partners match under translation by the cell period to 1e-12 m.
  const double hp = 0.5 * p;
  for (const auto& [s, m] : cell.periodic) {
    Eigen::Vector2d expected = cell.nodes[s];
    if (std::abs(expected.x() - hp) < 1e-15) expected.x() -= p;
    if (std::abs(expected.y() - hp) < 1e-15) expected.y() -= p;
    CHECK((expected - cell.nodes[m]).norm() < 1e-12);
  }

  // Every node on the right/top boundary is a slave; left/bottom interior
  // edge nodes are masters.
  for (size_t i = 0; i < cell.nodes.size(); ++i) {
    const auto& n = cell.nodes[i];
    const bool is_slave_side =
        std::abs(n.x() - hp) < 1e-15 || std::abs(n.y() - hp) < 1e-15;
    if (is_slave_side) CHECK(slaves.count(static_cast<int>(i)) == 1);
  }
}

TEST_CASE("cell mesh grain fraction matches the analytic fill factor") {
  const SmcGeometry geom = desk_geometry();
  CHECK(geom.fill_factor() == doctest::Approx(0.5625).epsilon(1e-15));
  for (int refine : {1, 2, 3}) {
    const TriMesh cell = build_cell_mesh(geom, refine);
    const double frac = cell.grain_area() / cell.total_area();
    CHECK(frac == doctest::Approx(geom.fill_factor()).epsilon(1e-10));
  }
}

TEST_CASE("reference mesh: grain counts and conducting area") {
  SUBCASE("quarter of a 20x20 layout carries 100 grain tags") {
    SmcGeometry geom;
    geom.side_length = 2000e-6;  // pitch 100 um keeps grains inside cells
    geom.grains_per_side = 20;
    const TriMesh mesh = build_reference_mesh(geom, 1);
    mesh.validate();
    CHECK(mesh.grain_ids().size() == 100);
    const double g = geom.grain_side();
    CHECK(mesh.grain_area() == doctest::Approx(100.0 * g * g).epsilon(1e-10));
  }

  SUBCASE("degenerate 1x1 grain layout stays valid") {
    SmcGeometry geom;
    geom.side_length = 100e-6;
    geom.grains_per_side = 1;
    const TriMesh mesh = build_reference_mesh(geom, 1);
    mesh.validate();
    CHECK(mesh.grain_ids().size() == 1);
    // Quarter symmetry clips the centered grain to a quarter square.
    const double g = geom.grain_side();
    CHECK(mesh.grain_area() == doctest::Approx(0.25 * g * g).epsilon(1e-10));
  }

  SUBCASE("desk quarter: 16 grains") {
    const TriMesh mesh = build_reference_mesh(desk_geometry(), 1);
    mesh.validate();
    CHECK(mesh.grain_ids().size() == 16);
    const double g = desk_geometry().grain_side();
    CHECK(mesh.grain_area() == doctest::Approx(16.0 * g * g).epsilon(1e-10));
  }
}

TEST_CASE("mesh validation catches broken meshes") {
  TriMesh bad;
  bad.nodes = {{0, 0}, {1, 0}, {0, 1}};
  bad.tris = {{{0, 2, 1}, {RegionKind::Air, -1}}};  // clockwise: negative area
  CHECK_THROWS_AS(bad.validate(), GeometryError);

  TriMesh untagged;
  untagged.nodes = {{0, 0}, {1, 0}, {0, 1}};
  untagged.tris = {{{0, 1, 2}, {RegionKind::Air, -1}}};
  CHECK_THROWS_AS(untagged.validate(), GeometryError);  // boundary edges unlisted

  untagged.bedges = {{0, 1, BoundaryTag::GammaInf},
                     {1, 2, BoundaryTag::GammaInf},
                     {2, 0, BoundaryTag::GammaInf}};
  CHECK_NOTHROW(untagged.validate());
}

TEST_CASE("mesh ASCII round trip is lossless") {
  const SmcGeometry geom = desk_geometry();
  const TriMesh cell = build_cell_mesh(geom, 1);

  std::stringstream ss;
  write_mesh(cell, ss);
  const TriMesh back = read_mesh(ss);

  REQUIRE(back.nodes.size() == cell.nodes.size());
  for (size_t i = 0; i < cell.nodes.size(); ++i) {
    CHECK(back.nodes[i].x() == cell.nodes[i].x());
    CHECK(back.nodes[i].y() == cell.nodes[i].y());
  }
  REQUIRE(back.tris.size() == cell.tris.size());
  for (size_t i = 0; i < cell.tris.size(); ++i) {
    CHECK(back.tris[i].v == cell.tris[i].v);
    CHECK(back.tris[i].region == cell.tris[i].region);
  }
  REQUIRE(back.bedges.size() == cell.bedges.size());
  REQUIRE(back.periodic == cell.periodic);
}

TEST_CASE("region tag parsing") {
  CHECK(parse_region_tag("GRAIN(3)") == RegionTag::make_grain(3));
  CHECK(parse_region_tag("AIR").kind == RegionKind::Air);
  CHECK(parse_region_tag(to_string(RegionTag{RegionKind::SmcHomogenized, -1})).kind ==
        RegionKind::SmcHomogenized);
  CHECK_THROWS_AS(parse_region_tag("GRAIN(x)"), IoError);
  CHECK_THROWS_AS(parse_region_tag("VOID"), IoError);
}

TEST_CASE("laminate cell: areas and periodicity") {
  const double pitch = 1.0;
  const double fill = 0.4;
  const TriMesh lam = build_laminate_cell_mesh(pitch, fill, 5);
  lam.validate();
  CHECK(lam.grain_ids().size() == 2);
  CHECK(lam.region_area(RegionTag::make_grain(0)) == doctest::Approx(fill * pitch * pitch).epsilon(1e-12));
  CHECK(lam.region_area(RegionTag::make_grain(1)) ==
        doctest::Approx((1.0 - fill) * pitch * pitch).epsilon(1e-12));
  CHECK(!lam.periodic.empty());
}

TEST_CASE("find_triangle locates interior points") {
  const TriMesh mesh = build_macro_mesh(desk_geometry(), 4);
  const Eigen::Vector2d p{25e-6, 25e-6};
  const int t = mesh.find_triangle(p);
  REQUIRE(t >= 0);
  CHECK(mesh.tris[t].region.kind == RegionKind::SmcHomogenized);
  CHECK(mesh.find_triangle({1.0, 1.0}) == -1);
}
