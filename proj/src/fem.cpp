#include "mqs/fem.hpp"

#include <cmath>
#include <set>

namespace mqs {

const QuadRule& QuadRule::tri3() {
  static const QuadRule rule{{
      {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0},
      {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0},
      {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0},
  }};
  return rule;
}

P1Geometry::P1Geometry(const TriMesh& mesh) {
  tri_.resize(mesh.tris.size());
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const auto& tr = mesh.tris[t];
    const Eigen::Vector2d& p0 = mesh.nodes[tr.v[0]];
    const Eigen::Vector2d& p1 = mesh.nodes[tr.v[1]];
    const Eigen::Vector2d& p2 = mesh.nodes[tr.v[2]];
    const double twice_area =
        (p1.x() - p0.x()) * (p2.y() - p0.y()) - (p2.x() - p0.x()) * (p1.y() - p0.y());
    if (twice_area <= 0.0) throw GeometryError("P1Geometry: non-positive triangle area");
    TriData d;
    d.area = 0.5 * twice_area;
    // grad(phi_i) = (rotated opposite edge) / (2A)
    d.grad[0] = Eigen::Vector2d(p1.y() - p2.y(), p2.x() - p1.x()) / twice_area;
    d.grad[1] = Eigen::Vector2d(p2.y() - p0.y(), p0.x() - p2.x()) / twice_area;
    d.grad[2] = Eigen::Vector2d(p0.y() - p1.y(), p1.x() - p0.x()) / twice_area;
    for (int k = 0; k < 3; ++k) d.curl[k] = Eigen::Vector2d(-d.grad[k].y(), d.grad[k].x());
    tri_[t] = d;
  }
}

Eigen::Vector2d P1Geometry::gauss_point(const TriMesh& mesh, int t, int q) const {
  const auto& pt = QuadRule::tri3().points[q];
  const auto& tr = mesh.tris[t];
  return pt.l0 * mesh.nodes[tr.v[0]] + pt.l1 * mesh.nodes[tr.v[1]] + pt.l2 * mesh.nodes[tr.v[2]];
}

BVec P1Geometry::flux_density(const TriMesh& mesh, int t, const std::vector<double>& a) const {
  const auto& tr = mesh.tris[t];
  const auto& d = tri_[t];
  BVec b = BVec::Zero();
  for (int k = 0; k < 3; ++k) b += a[tr.v[k]] * d.curl[k];
  return b;
}

double P1Geometry::interpolate(const TriMesh& mesh, int t, int q, const std::vector<double>& a) const {
  const auto& pt = QuadRule::tri3().points[q];
  const auto& tr = mesh.tris[t];
  return pt.l0 * a[tr.v[0]] + pt.l1 * a[tr.v[1]] + pt.l2 * a[tr.v[2]];
}

DofMap DofMap::build(const TriMesh& mesh, const Options& opts) {
  const int nn = static_cast<int>(mesh.nodes.size());
  DofMap map;
  map.node_dof_.assign(nn, -2);
  map.dirichlet_.assign(nn, false);
  map.value_.assign(nn, 0.0);

  if (opts.dirichlet_tags) {
    for (const auto& be : mesh.bedges) {
      if (!opts.dirichlet_tags(be.tag)) continue;
      for (int node : {be.n0, be.n1}) {
        map.dirichlet_[node] = true;
        map.value_[node] = opts.dirichlet_value ? opts.dirichlet_value(mesh.nodes[node]) : 0.0;
      }
    }
  }

  std::vector<int> master(nn, -1);
  if (opts.use_periodic) {
    std::set<int> masters;
    for (const auto& [s, m] : mesh.periodic) {
      if (master[s] >= 0) throw GeometryError("DofMap: node is slave of two masters");
      master[s] = m;
      masters.insert(m);
    }
    for (const auto& [s, m] : mesh.periodic) {
      (void)m;
      if (masters.count(s)) throw GeometryError("DofMap: periodic constraint cycle");
    }
    // A Dirichlet slave pins its master instead.
    for (const auto& [s, m] : mesh.periodic) {
      if (map.dirichlet_[s] && !map.dirichlet_[m]) {
        map.dirichlet_[m] = true;
        map.value_[m] = map.value_[s];
      }
    }
  }

  int next = 0;
  for (int i = 0; i < nn; ++i) {
    if (master[i] >= 0) continue;  // slaves resolved below
    if (map.dirichlet_[i]) {
      map.node_dof_[i] = -1;
    } else {
      map.node_dof_[i] = next++;
    }
  }
  for (int i = 0; i < nn; ++i) {
    if (master[i] >= 0) {
      const int m = master[i];
      map.dirichlet_[i] = map.dirichlet_[m];
      map.value_[i] = map.value_[m];
      map.node_dof_[i] = map.node_dof_[m];
    }
  }

  map.n_grain_ = opts.n_grain_constants;
  if (opts.n_grain_constants > 0) {
    map.grain_offset_ = next;
    next += opts.n_grain_constants;
  }
  if (opts.zero_mean) map.zero_mean_dof_ = next++;
  map.n_dofs_ = next;
  return map;
}

std::vector<double> DofMap::expand(const Eigen::VectorXd& x) const {
  std::vector<double> nodal(node_dof_.size());
  for (size_t i = 0; i < node_dof_.size(); ++i)
    nodal[i] = dirichlet_[i] ? value_[i] : x[node_dof_[i]];
  return nodal;
}

void DofMap::add_increment(const Eigen::VectorXd& dx, std::vector<double>& nodal) const {
  for (size_t i = 0; i < node_dof_.size(); ++i)
    if (!dirichlet_[i]) nodal[i] += dx[node_dof_[i]];
}

SystemAssembler::SystemAssembler(const DofMap& dofs, bool lift_dirichlet)
    : dofs_(dofs), lift_(lift_dirichlet), rhs_(Eigen::VectorXd::Zero(dofs.size())) {}

void SystemAssembler::add_node_pair(int ni, int nj, double v) {
  const int ri = dofs_.node_dof(ni);
  if (ri < 0) return;
  const int cj = dofs_.node_dof(nj);
  if (cj < 0) {
    if (lift_) rhs_[ri] -= v * dofs_.dirichlet_value(nj);
    return;
  }
  trips_.emplace_back(ri, cj, v);
}

void SystemAssembler::add_node_dof(int ni, int dj, double v) {
  const int ri = dofs_.node_dof(ni);
  if (ri < 0) return;
  trips_.emplace_back(ri, dj, v);
}

void SystemAssembler::add_dof_node(int di, int nj, double v) {
  const int cj = dofs_.node_dof(nj);
  if (cj < 0) {
    if (lift_) rhs_[di] -= v * dofs_.dirichlet_value(nj);
    return;
  }
  trips_.emplace_back(di, cj, v);
}

void SystemAssembler::add_dof_pair(int di, int dj, double v) { trips_.emplace_back(di, dj, v); }

void SystemAssembler::add_rhs_node(int ni, double v) {
  const int ri = dofs_.node_dof(ni);
  if (ri >= 0) rhs_[ri] += v;
}

void SystemAssembler::add_rhs_dof(int di, double v) { rhs_[di] += v; }

namespace {
// Exact P1 mass matrix A/12 * [2 1 1; 1 2 1; 1 1 2].
constexpr double kMass[3][3] = {{2, 1, 1}, {1, 2, 1}, {1, 1, 2}};
}  // namespace

void assemble_mass_sigma(const TriMesh& mesh, const P1Geometry& geom, const DofMap& dofs,
                         const std::function<double(const RegionTag&)>& sigma_of, double dt,
                         SystemAssembler& out) {
  if (dt <= 0) throw SolverError("assemble_mass_sigma: dt must be positive");
  (void)dofs;
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const double sigma = sigma_of(mesh.tris[t].region);
    if (sigma == 0.0) continue;
    const double f = sigma / dt * geom[static_cast<int>(t)].area / 12.0;
    const auto& v = mesh.tris[t].v;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out.add_node_pair(v[i], v[j], f * kMass[i][j]);
  }
}

void apply_mass_sigma(const TriMesh& mesh, const P1Geometry& geom,
                      const std::function<double(const RegionTag&)>& sigma_of, double dt,
                      const std::vector<double>& a, const std::vector<double>& a_prev,
                      ResidualVector& r) {
  for (size_t t = 0; t < mesh.tris.size(); ++t) {
    const double sigma = sigma_of(mesh.tris[t].region);
    if (sigma == 0.0) continue;
    const double f = sigma / dt * geom[static_cast<int>(t)].area / 12.0;
    const auto& v = mesh.tris[t].v;
    for (int i = 0; i < 3; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 3; ++j) acc += kMass[i][j] * (a[v[j]] - a_prev[v[j]]);
      r.add_node(v[i], f * acc);
    }
  }
}

void assemble_curl_term(const TriMesh& mesh, const P1Geometry& geom,
                        const std::vector<double>& a, const LawCallback& law,
                        ResidualVector* residual, SystemAssembler* tangent) {
  const auto& rule = QuadRule::tri3();
  for (int t = 0; t < static_cast<int>(mesh.tris.size()); ++t) {
    const auto& d = geom[t];
    const auto& v = mesh.tris[t].v;
    const BVec b = geom.flux_density(mesh, t, a);
    for (int q = 0; q < static_cast<int>(rule.points.size()); ++q) {
      const LawEval ev = law(t, q, b);
      const double wA = rule.points[q].w * d.area;
      if (residual) {
        for (int i = 0; i < 3; ++i) residual->add_node(v[i], wA * ev.h.dot(d.curl[i]));
      }
      if (tangent) {
        for (int i = 0; i < 3; ++i) {
          const Eigen::Vector2d tci = ev.dh_db.transpose() * d.curl[i];
          for (int j = 0; j < 3; ++j) tangent->add_node_pair(v[i], v[j], wA * tci.dot(d.curl[j]));
        }
      }
    }
  }
}

void add_zero_mean_gauge(const TriMesh& mesh, const P1Geometry& geom, const DofMap& dofs,
                         SystemAssembler& out) {
  const int lam = dofs.zero_mean_dof();
  if (lam < 0) throw SolverError("add_zero_mean_gauge: DofMap has no zero-mean dof");
  for (int t = 0; t < static_cast<int>(mesh.tris.size()); ++t) {
    const double w = geom[t].area / 3.0;
    for (int k = 0; k < 3; ++k) {
      out.add_node_dof(mesh.tris[t].v[k], lam, w);
      out.add_dof_node(lam, mesh.tris[t].v[k], w);
    }
  }
}

void apply_zero_mean_gauge(const TriMesh& mesh, const P1Geometry& geom,
                           const std::vector<double>& a, double lambda, ResidualVector& r) {
  const int lam = r.dofs().zero_mean_dof();
  if (lam < 0) throw SolverError("apply_zero_mean_gauge: DofMap has no zero-mean dof");
  double integral = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.tris.size()); ++t) {
    const double w = geom[t].area / 3.0;
    for (int k = 0; k < 3; ++k) {
      const int node = mesh.tris[t].v[k];
      r.add_node(node, lambda * w);
      integral += w * a[node];
    }
  }
  r.add_dof(lam, integral);
}

double integrate_p1(const TriMesh& mesh, const P1Geometry& geom, const std::vector<double>& a) {
  double s = 0.0;
  for (int t = 0; t < static_cast<int>(mesh.tris.size()); ++t) {
    const auto& v = mesh.tris[t].v;
    s += geom[t].area / 3.0 * (a[v[0]] + a[v[1]] + a[v[2]]);
  }
  return s;
}

void SparseDirectSolver::factorize(int n, const std::vector<Eigen::Triplet<double>>& triplets) {
  Eigen::SparseMatrix<double> next(n, n);
  next.setFromTriplets(triplets.begin(), triplets.end());
  next.makeCompressed();
  const bool same_pattern =
      analyzed_ && mat_.rows() == next.rows() && mat_.nonZeros() == next.nonZeros() &&
      std::equal(mat_.outerIndexPtr(), mat_.outerIndexPtr() + mat_.outerSize() + 1, next.outerIndexPtr()) &&
      std::equal(mat_.innerIndexPtr(), mat_.innerIndexPtr() + mat_.nonZeros(), next.innerIndexPtr());
  mat_ = std::move(next);
  if (!same_pattern) {
    lu_.analyzePattern(mat_);
    analyzed_ = true;
  }
  lu_.factorize(mat_);
  if (lu_.info() != Eigen::Success) {
    // Point to a structurally empty column if there is one.
    for (int r = 0; r < n; ++r)
      if (mat_.outerIndexPtr()[r + 1] == mat_.outerIndexPtr()[r])
        throw SolverError("singular system: dof " + std::to_string(r) + " has no entries");
    throw SolverError("sparse factorization failed: " + lu_.lastErrorMessage());
  }
}

Eigen::VectorXd SparseDirectSolver::solve(const Eigen::VectorXd& rhs) const {
  Eigen::VectorXd x = lu_.solve(rhs);
  if (lu_.info() != Eigen::Success) throw SolverError("sparse solve failed");
  return x;
}

Eigen::VectorXd sparse_solve(int n, const std::vector<Eigen::Triplet<double>>& triplets,
                             const Eigen::VectorXd& rhs) {
  SparseDirectSolver solver;
  solver.factorize(n, triplets);
  return solver.solve(rhs);
}

}  // namespace mqs
