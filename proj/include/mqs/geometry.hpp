#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "mqs/mesh.hpp"
#include "mqs/types.hpp"

namespace mqs {

/// Soft-magnetic-composite benchmark geometry: a square block of
/// `grains_per_side` x `grains_per_side` conducting grains embedded in a
/// perfect insulator, with current-carrying inductor bars above and below
/// and an air box around everything.  Grains are axis-aligned squares of
/// diagonal `grain_diagonal`, centered in their lattice cell.
struct SmcGeometry {
  double side_length = 1000e-6;                       // L, SMC block side
  int grains_per_side = 10;
  double grain_diagonal = 150e-6 * 0.70710678118654752440;  // e_a
  double inductor_thickness = 100e-6;                 // e_i
  double inductor_gap = 100e-6;                       // e_gap
  double air_margin = 400e-6;                         // outer air shell
  bool quarter_symmetry = true;

  double grain_side() const { return grain_diagonal * 0.70710678118654752440; }
  double pitch() const { return side_length / grains_per_side; }
  double fill_factor() const {
    const double r = grain_side() / pitch();
    return r * r;
  }
  /// Half-width of the full computational box (SMC half side + gap +
  /// inductor + margin).
  double outer_halfwidth() const {
    return 0.5 * side_length + inductor_gap + inductor_thickness + air_margin;
  }

  /// Positivity and containment checks shared by every builder.
  void validate_basic() const;
  /// Additionally requires grains to fit in their lattice cell; needed by
  /// the cell and reference builders.
  void validate_grains() const;
};

enum class RectSide { Left, Right, Bottom, Top };

/// Structured triangulation of the tensor grid `xbreaks` x `ybreaks`:
/// each quad split into two triangles.  `region_of` classifies quads by
/// center; `boundary_of` tags the outer edges.
TriMesh build_rect_mesh(const std::vector<double>& xbreaks, const std::vector<double>& ybreaks,
                        const std::function<RegionTag(const Eigen::Vector2d&)>& region_of,
                        const std::function<BoundaryTag(RectSide)>& boundary_of);

/// Coarse mesh for the homogenized run: the SMC block is a single
/// SMC-tagged region, inductor and air are meshed with the exact local
/// laws in mind.  `n_divisions` is the number of grid divisions across the
/// SMC block (per quarter when quarter_symmetry, per half block otherwise).
TriMesh build_macro_mesh(const SmcGeometry& geom, int n_divisions);

/// Periodic unit cell (one lattice pitch squared, centered at the origin)
/// with one centered conducting grain tagged GRAIN(0).  Boundary nodes are
/// paired periodically (right->left, top->bottom, corners to the
/// bottom-left corner).
TriMesh build_cell_mesh(const SmcGeometry& geom, int n_refine);

/// Fullscale mesh with every grain resolved, tagged GRAIN(0..N-1)
/// row-major.  Grains cut by the symmetry planes (odd grain counts) are
/// clipped.
TriMesh build_reference_mesh(const SmcGeometry& geom, int n_refine);

/// Two-phase periodic laminate cell: layers normal to y, the center band
/// of volume fraction `fill` tagged GRAIN(0), the rest GRAIN(1).  Used as
/// the analytic series/parallel mixing oracle.
TriMesh build_laminate_cell_mesh(double pitch, double fill, int n_divisions);

}  // namespace mqs
