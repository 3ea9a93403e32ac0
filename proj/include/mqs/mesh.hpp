#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mqs/types.hpp"

namespace mqs {

/// Per-triangle material region label.  Grains carry an index so that
/// per-grain constraints and conductivities can be attached.
enum class RegionKind {
  Grain,
  Insulation,
  InductorPos,
  InductorNeg,
  Air,
  SmcHomogenized,  // coarse-mesh placeholder for the homogenized composite
};

struct RegionTag {
  RegionKind kind = RegionKind::Air;
  int grain = -1;

  static RegionTag make_grain(int k) { return {RegionKind::Grain, k}; }
  bool is_grain() const { return kind == RegionKind::Grain; }
  bool operator==(const RegionTag& o) const {
    return kind == o.kind && (kind != RegionKind::Grain || grain == o.grain);
  }
  bool operator!=(const RegionTag& o) const { return !(*this == o); }
};

std::string to_string(const RegionTag& tag);
RegionTag parse_region_tag(const std::string& token);

/// Boundary edge labels: outer/symmetry boundaries for macro and reference
/// meshes, cell sides for the periodic unit cell.
enum class BoundaryTag {
  GammaInf,
  GammaH,
  GammaV,
  CellLeft,
  CellRight,
  CellBottom,
  CellTop,
};

std::string to_string(BoundaryTag tag);
BoundaryTag parse_boundary_tag(const std::string& token);

/// 2D triangular mesh with region and boundary tagging.  Immutable once
/// built; safe to share across threads.
struct TriMesh {
  struct Tri {
    std::array<int, 3> v;
    RegionTag region;
  };
  struct BoundaryEdge {
    int n0, n1;
    BoundaryTag tag;
  };

  std::vector<Eigen::Vector2d> nodes;
  std::vector<Tri> tris;
  std::vector<BoundaryEdge> bedges;
  // Periodic pairings {slave, master}; masters are never slaves themselves.
  std::vector<std::pair<int, int>> periodic;

  double tri_area(int t) const;
  Eigen::Vector2d centroid(int t) const;
  double total_area() const;

  /// Sum of triangle areas whose region matches `tag`.
  double region_area(const RegionTag& tag) const;
  /// Sum over all grain-tagged triangles.
  double grain_area() const;
  /// Sorted list of distinct grain indices present in the mesh.
  std::vector<int> grain_ids() const;

  /// Index of the triangle containing `p` (barycentric test with tolerance),
  /// or -1 if no triangle contains it.
  int find_triangle(const Eigen::Vector2d& p, double tol = 1e-12) const;

  /// Checks positive areas, edge conformity (every interior edge shared by
  /// exactly two triangles, every boundary edge listed in `bedges`), and
  /// that periodic pairings form a compressed bijection.
  /// Throws GeometryError on violation.
  void validate() const;
};

void write_mesh(const TriMesh& mesh, std::ostream& os);
void write_mesh(const TriMesh& mesh, const std::string& path);
TriMesh read_mesh(std::istream& is);
TriMesh read_mesh(const std::string& path);

}  // namespace mqs
