#include "mqs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace mqs {

void SmcGeometry::validate_basic() const {
  if (side_length <= 0 || grain_diagonal <= 0 || inductor_thickness <= 0 || inductor_gap <= 0)
    throw GeometryError("SMC geometry: all lengths must be positive");
  if (air_margin <= 0)
    throw GeometryError("SMC geometry: inductor exceeds the bounding box (air_margin <= 0)");
  if (grains_per_side < 1) throw GeometryError("SMC geometry: grains_per_side must be >= 1");
}

void SmcGeometry::validate_grains() const {
  validate_basic();
  if (grain_side() >= pitch())
    throw GeometryError("SMC geometry: grain side " + std::to_string(grain_side()) +
                        " m does not fit in lattice pitch " + std::to_string(pitch()) + " m");
}

TriMesh build_rect_mesh(const std::vector<double>& xbreaks, const std::vector<double>& ybreaks,
                        const std::function<RegionTag(const Eigen::Vector2d&)>& region_of,
                        const std::function<BoundaryTag(RectSide)>& boundary_of) {
  const int nx = static_cast<int>(xbreaks.size()) - 1;
  const int ny = static_cast<int>(ybreaks.size()) - 1;
  if (nx < 1 || ny < 1) throw GeometryError("rect mesh needs at least one cell per direction");
  for (int i = 0; i < nx; ++i)
    if (xbreaks[i + 1] <= xbreaks[i]) throw GeometryError("x breakpoints not strictly increasing");
  for (int j = 0; j < ny; ++j)
    if (ybreaks[j + 1] <= ybreaks[j]) throw GeometryError("y breakpoints not strictly increasing");

  TriMesh mesh;
  mesh.nodes.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) mesh.nodes.push_back({xbreaks[i], ybreaks[j]});
  auto nid = [nx](int i, int j) { return j * (nx + 1) + i; };

  mesh.tris.reserve(2 * nx * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Eigen::Vector2d center{0.5 * (xbreaks[i] + xbreaks[i + 1]), 0.5 * (ybreaks[j] + ybreaks[j + 1])};
      const RegionTag tag = region_of(center);
      const int bl = nid(i, j), br = nid(i + 1, j), tr = nid(i + 1, j + 1), tl = nid(i, j + 1);
      mesh.tris.push_back({{bl, br, tr}, tag});
      mesh.tris.push_back({{bl, tr, tl}, tag});
    }
  }

  for (int i = 0; i < nx; ++i) {
    mesh.bedges.push_back({nid(i, 0), nid(i + 1, 0), boundary_of(RectSide::Bottom)});
    mesh.bedges.push_back({nid(i, ny), nid(i + 1, ny), boundary_of(RectSide::Top)});
  }
  for (int j = 0; j < ny; ++j) {
    mesh.bedges.push_back({nid(0, j), nid(0, j + 1), boundary_of(RectSide::Left)});
    mesh.bedges.push_back({nid(nx, j), nid(nx, j + 1), boundary_of(RectSide::Right)});
  }
  return mesh;
}

namespace {

// Subdivides each band [edges[k], edges[k+1]] into max(1, round(w/h)) equal
// pieces; endpoints are kept bit-exact.
std::vector<double> refine_bands(const std::vector<double>& edges, double target_h) {
  std::vector<double> out;
  out.push_back(edges.front());
  for (size_t k = 0; k + 1 < edges.size(); ++k) {
    const double a = edges[k], b = edges[k + 1];
    const int n = std::max(1, static_cast<int>(std::lround((b - a) / target_h)));
    for (int i = 1; i < n; ++i) out.push_back(a + (b - a) * i / n);
    out.push_back(b);
  }
  return out;
}

std::vector<double> refine_bands_counts(const std::vector<double>& edges, const std::vector<int>& counts) {
  std::vector<double> out;
  out.push_back(edges.front());
  for (size_t k = 0; k + 1 < edges.size(); ++k) {
    const double a = edges[k], b = edges[k + 1];
    const int n = std::max(1, counts[k]);
    for (int i = 1; i < n; ++i) out.push_back(a + (b - a) * i / n);
    out.push_back(b);
  }
  return out;
}

// Mirrors breakpoints [0 ... w] to [-w ... w] with exact negation.
std::vector<double> mirror_breaks(const std::vector<double>& half) {
  std::vector<double> out;
  for (auto it = half.rbegin(); it != half.rend(); ++it)
    if (*it != 0.0) out.push_back(-*it);
  out.insert(out.end(), half.begin(), half.end());
  return out;
}

BoundaryTag quarter_boundary(RectSide s) {
  switch (s) {
    case RectSide::Left:
      return BoundaryTag::GammaV;
    case RectSide::Bottom:
      return BoundaryTag::GammaH;
    default:
      return BoundaryTag::GammaInf;
  }
}

BoundaryTag cell_boundary(RectSide s) {
  switch (s) {
    case RectSide::Left:
      return BoundaryTag::CellLeft;
    case RectSide::Right:
      return BoundaryTag::CellRight;
    case RectSide::Bottom:
      return BoundaryTag::CellBottom;
    case RectSide::Top:
      return BoundaryTag::CellTop;
  }
  return BoundaryTag::CellLeft;
}

// Canonical periodic pairing on a structured grid over a rectangle: right
// column folds onto the left, top row onto the bottom, corners onto the
// bottom-left corner.  Pairs are compressed by construction.
void add_periodic_pairs(TriMesh& mesh, int nx, int ny) {
  auto nid = [nx](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j) {
    for (int i = 0; i <= nx; ++i) {
      const int ci = (i == nx) ? 0 : i;
      const int cj = (j == ny) ? 0 : j;
      if (ci != i || cj != j) mesh.periodic.emplace_back(nid(i, j), nid(ci, cj));
    }
  }
}

}  // namespace

TriMesh build_macro_mesh(const SmcGeometry& geom, int n_divisions) {
  geom.validate_basic();
  if (n_divisions < 1) throw GeometryError("macro mesh: n_divisions must be >= 1");

  const double hs = 0.5 * geom.side_length;
  const double y_ind0 = hs + geom.inductor_gap;
  const double y_ind1 = y_ind0 + geom.inductor_thickness;
  const double w = geom.outer_halfwidth();

  const int margin_div = std::max(1, n_divisions / 2);
  const std::vector<double> edges = {0.0, hs, y_ind0, y_ind1, w};
  const std::vector<int> counts = {n_divisions, 1, 1, margin_div};
  const std::vector<double> half = refine_bands_counts(edges, counts);

  auto region_quarter = [&](const Eigen::Vector2d& c) -> RegionTag {
    if (c.x() < hs && c.y() < hs) return {RegionKind::SmcHomogenized, -1};
    if (c.x() < hs && c.y() > y_ind0 && c.y() < y_ind1) return {RegionKind::InductorPos, -1};
    return {RegionKind::Air, -1};
  };

  if (geom.quarter_symmetry) return build_rect_mesh(half, half, region_quarter, quarter_boundary);

  const std::vector<double> full = mirror_breaks(half);
  auto region_full = [&](const Eigen::Vector2d& c) -> RegionTag {
    const double ax = std::abs(c.x());
    if (ax < hs && std::abs(c.y()) < hs) return {RegionKind::SmcHomogenized, -1};
    if (ax < hs && c.y() > y_ind0 && c.y() < y_ind1) return {RegionKind::InductorPos, -1};
    if (ax < hs && c.y() < -y_ind0 && c.y() > -y_ind1) return {RegionKind::InductorNeg, -1};
    return {RegionKind::Air, -1};
  };
  return build_rect_mesh(full, full, region_full, [](RectSide) { return BoundaryTag::GammaInf; });
}

TriMesh build_cell_mesh(const SmcGeometry& geom, int n_refine) {
  geom.validate_grains();
  if (n_refine < 1) throw GeometryError("cell mesh: n_refine must be >= 1");

  const double hp = 0.5 * geom.pitch();
  const double hg = 0.5 * geom.grain_side();
  const double target_h = geom.pitch() / (8.0 * n_refine);
  const std::vector<double> half = refine_bands({0.0, hg, hp}, target_h);
  const std::vector<double> breaks = mirror_breaks(half);

  auto region_of = [&](const Eigen::Vector2d& c) -> RegionTag {
    if (std::abs(c.x()) < hg && std::abs(c.y()) < hg) return RegionTag::make_grain(0);
    return {RegionKind::Insulation, -1};
  };
  TriMesh mesh = build_rect_mesh(breaks, breaks, region_of, cell_boundary);
  const int n = static_cast<int>(breaks.size()) - 1;
  add_periodic_pairs(mesh, n, n);
  return mesh;
}

TriMesh build_reference_mesh(const SmcGeometry& geom, int n_refine) {
  geom.validate_grains();
  if (n_refine < 1) throw GeometryError("reference mesh: n_refine must be >= 1");

  const double hs = 0.5 * geom.side_length;
  const double p = geom.pitch();
  const double g = geom.grain_side();
  const int n = geom.grains_per_side;
  const double y_ind0 = hs + geom.inductor_gap;
  const double y_ind1 = y_ind0 + geom.inductor_thickness;
  const double w = geom.outer_halfwidth();
  const double lo_clip = geom.quarter_symmetry ? 0.0 : -hs;

  // Grain-aligned breakpoints inside the SMC block.
  std::set<double> smc_edge_set;
  smc_edge_set.insert(lo_clip);
  smc_edge_set.insert(hs);
  for (int k = 0; k <= n; ++k) {
    const double c = -hs + k * p;
    if (c > lo_clip && c < hs) smc_edge_set.insert(c);
  }
  for (int k = 0; k < n; ++k) {
    const double gc = -hs + (k + 0.5) * p;
    for (double e : {gc - 0.5 * g, gc + 0.5 * g})
      if (e > lo_clip && e < hs) smc_edge_set.insert(e);
  }
  std::vector<double> smc_edges(smc_edge_set.begin(), smc_edge_set.end());
  const double target_h = p / (8.0 * n_refine);
  std::vector<double> breaks = refine_bands(smc_edges, target_h);

  // Coarser air/gap/inductor bands outside the block.
  const std::vector<double> outer_edges = {hs, y_ind0, y_ind1, w};
  const std::vector<int> outer_counts = {std::max(1, n_refine), std::max(1, n_refine), 2 * n_refine};
  const std::vector<double> outer = refine_bands_counts(outer_edges, outer_counts);
  breaks.insert(breaks.end(), outer.begin() + 1, outer.end());

  if (!geom.quarter_symmetry) {
    std::vector<double> neg;
    for (auto it = breaks.rbegin(); it != breaks.rend(); ++it)
      if (*it > hs) neg.push_back(-*it);  // mirror only the outer bands; SMC already covers [-hs, hs]
    neg.insert(neg.end(), breaks.begin(), breaks.end());
    breaks = std::move(neg);
  }

  // Visible-grain numbering (row-major), clipped grains included.
  auto first_visible = [&](double clip_lo) {
    int k = 0;
    while (k < n && (-hs + (k + 0.5) * p + 0.5 * g) <= clip_lo) ++k;
    return k;
  };
  const int i0 = first_visible(lo_clip);
  const int count_x = n - i0;

  auto grain_index_at = [&](const Eigen::Vector2d& c) -> int {
    if (c.x() >= hs || c.y() >= hs || c.x() <= -hs || c.y() <= -hs) return -1;
    const int i = std::clamp(static_cast<int>(std::floor((c.x() + hs) / p)), 0, n - 1);
    const int j = std::clamp(static_cast<int>(std::floor((c.y() + hs) / p)), 0, n - 1);
    const double gcx = -hs + (i + 0.5) * p;
    const double gcy = -hs + (j + 0.5) * p;
    if (std::abs(c.x() - gcx) >= 0.5 * g || std::abs(c.y() - gcy) >= 0.5 * g) return -1;
    return (j - i0) * count_x + (i - i0);
  };

  auto region_of = [&](const Eigen::Vector2d& c) -> RegionTag {
    const int gk = grain_index_at(c);
    if (gk >= 0) return RegionTag::make_grain(gk);
    if (c.x() > lo_clip && c.x() < hs && c.y() > lo_clip && c.y() < hs) return {RegionKind::Insulation, -1};
    const bool in_ind_x = c.x() > lo_clip && c.x() < hs;
    if (in_ind_x && c.y() > y_ind0 && c.y() < y_ind1) return {RegionKind::InductorPos, -1};
    if (!geom.quarter_symmetry && in_ind_x && c.y() < -y_ind0 && c.y() > -y_ind1)
      return {RegionKind::InductorNeg, -1};
    return {RegionKind::Air, -1};
  };

  if (geom.quarter_symmetry) return build_rect_mesh(breaks, breaks, region_of, quarter_boundary);
  return build_rect_mesh(breaks, breaks, region_of, [](RectSide) { return BoundaryTag::GammaInf; });
}

TriMesh build_laminate_cell_mesh(double pitch, double fill, int n_divisions) {
  if (pitch <= 0 || fill <= 0 || fill >= 1) throw GeometryError("laminate cell: need pitch > 0 and 0 < fill < 1");
  if (n_divisions < 1) throw GeometryError("laminate cell: n_divisions must be >= 1");

  const double hp = 0.5 * pitch;
  const double hb = 0.5 * fill * pitch;  // half thickness of the center layer
  const double target_h = pitch / (2.0 * n_divisions);
  const std::vector<double> yhalf = refine_bands({0.0, hb, hp}, target_h);
  const std::vector<double> ybreaks = mirror_breaks(yhalf);
  const std::vector<double> xbreaks = refine_bands({-hp, hp}, target_h);

  auto region_of = [&](const Eigen::Vector2d& c) -> RegionTag {
    return RegionTag::make_grain(std::abs(c.y()) < hb ? 0 : 1);
  };
  TriMesh mesh = build_rect_mesh(xbreaks, ybreaks, region_of, cell_boundary);
  add_periodic_pairs(mesh, static_cast<int>(xbreaks.size()) - 1, static_cast<int>(ybreaks.size()) - 1);
  return mesh;
}

}  // namespace mqs
