#include "mqs/cell_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mqs {

CellSources downscale(const BVec& b_M, const BVec& b_M_prev, double az_gp, double az_prev_gp,
                      double dt) {
  CellSources src;
  src.b_M = b_M;
  src.db_M_dt = (b_M - b_M_prev) / dt;
  src.e_Mz = -(az_gp - az_prev_gp) / dt;
  src.dt = dt;
  src.kappa = 1.0;
  return src;
}

CellProblem::CellProblem(std::shared_ptr<const TriMesh> mesh, std::shared_ptr<const P1Geometry> geom,
                         const MaterialMap& materials, const CellNewtonOptions& opts,
                         const Eigen::Vector2d& anchor)
    : mesh_(std::move(mesh)), geom_(std::move(geom)), materials_(&materials), opts_(opts), anchor_(anchor) {
  const TriMesh& m = *mesh_;
  grain_slots_ = m.grain_ids();

  DofMap::Options dyn;
  dyn.use_periodic = true;
  dyn.zero_mean = true;
  dyn.n_grain_constants = static_cast<int>(grain_slots_.size());
  dofs_dyn_ = DofMap::build(m, dyn);

  DofMap::Options sta;
  sta.use_periodic = true;
  sta.zero_mean = true;
  dofs_static_ = DofMap::build(m, sta);

  const int nt = static_cast<int>(m.tris.size());
  tri_grain_slot_.assign(nt, -1);
  tri_sigma_.assign(nt, 0.0);
  grain_areas_.assign(grain_slots_.size(), 0.0);
  grain_sigma_area_.assign(grain_slots_.size(), 0.0);
  const int nn = static_cast<int>(m.nodes.size());
  load_e_node_.assign(nn, 0.0);
  load_x_node_.assign(nn, 0.0);
  load_y_node_.assign(nn, 0.0);
  load_e_u_.assign(grain_slots_.size(), 0.0);
  load_x_u_.assign(grain_slots_.size(), 0.0);
  load_y_u_.assign(grain_slots_.size(), 0.0);

  const auto& rule = QuadRule::tri3();
  for (int t = 0; t < nt; ++t) {
    const auto& tag = m.tris[t].region;
    const double area = (*geom_)[t].area;
    cell_area_ += area;
    tri_sigma_[t] = materials_->sigma_for(tag);
    if (materials_->law_for(tag).kind == LawKind::JilesAtherton) has_ja_ = true;
    if (!tag.is_grain() || tri_sigma_[t] == 0.0) continue;

    const int slot = static_cast<int>(
        std::lower_bound(grain_slots_.begin(), grain_slots_.end(), tag.grain) - grain_slots_.begin());
    tri_grain_slot_[t] = slot;
    grain_areas_[slot] += area;
    grain_sigma_area_[slot] += tri_sigma_[t] * area;

    const auto& v = m.tris[t].v;
    for (int k = 0; k < 3; ++k)
      u_couple_.push_back({v[k], slot, tri_sigma_[t] * area / 3.0});
    for (int q = 0; q < 3; ++q) {
      const auto& pt = rule.points[q];
      const double phi[3] = {pt.l0, pt.l1, pt.l2};
      const Eigen::Vector2d y = geom_->gauss_point(m, t, q);
      const double wA = pt.w * area * tri_sigma_[t];
      for (int k = 0; k < 3; ++k) {
        load_e_node_[v[k]] += wA * phi[k];
        load_x_node_[v[k]] += wA * phi[k] * y.y();
        load_y_node_[v[k]] += wA * phi[k] * y.x();
      }
      load_e_u_[slot] += wA;
      load_x_u_[slot] += wA * y.y();
      load_y_u_[slot] += wA * y.x();
    }
  }

  committed_a_.assign(nn, 0.0);
  committed_u_ = Eigen::VectorXd::Zero(static_cast<int>(grain_slots_.size()));
  if (has_ja_) committed_ja_.assign(nt * 3, JAState{});
}

CellProblem::SolveWork CellProblem::run_newton(const CellSources& src, const BVec& delta_b,
                                               bool static_mode, const SolveWork* warm) {
  const TriMesh& m = *mesh_;
  const P1Geometry& g = *geom_;
  const DofMap& dofs = static_mode ? dofs_static_ : dofs_dyn_;
  const int nt = static_cast<int>(m.tris.size());
  const int n_slots = static_cast<int>(grain_slots_.size());

  SolveWork w;
  w.a = warm ? warm->a : committed_a_;
  w.u = warm && !static_mode ? warm->u : Eigen::VectorXd::Zero(static_mode ? 0 : n_slots);
  w.lambda = warm ? warm->lambda : 0.0;
  if (has_ja_) w.ja.assign(nt * 3, JAState{});
  w.h_gp.assign(nt * 3, HVec::Zero());

  auto sigma_of = [this](const RegionTag& tag) { return materials_->sigma_for(tag); };
  auto law_cb = [&](int t, int q, const BVec& b_corr) -> LawEval {
    const BVec b_m = src.b_M + delta_b + b_corr;
    const auto& law = materials_->law_for(m.tris[t].region);
    LawEval ev;
    if (law.kind == LawKind::JilesAtherton) {
      JAResult res = ja_update(b_m, committed_ja_[t * 3 + q], law.ja);
      ev.h = res.h;
      ev.dh_db = res.dh_db;
      w.ja[t * 3 + q] = res.state;
    } else {
      auto [h, tan] = eval_law(law, b_m);
      ev.h = h;
      ev.dh_db = tan;
    }
    w.h_gp[t * 3 + q] = ev.h;
    return ev;
  };

  const double inv_dt = 1.0 / src.dt;
  double ref = 0.0;
  double prev_norm = 0.0;
  int consecutive_increases = 0;
  double relax = 1.0;
  SparseDirectSolver& solver = static_mode ? solver_static_ : solver_dyn_;

  for (int iter = 0;; ++iter) {
    ResidualVector R(dofs);
    SystemAssembler K(dofs);
    assemble_curl_term(m, g, w.a, law_cb, &R, &K);

    if (!static_mode) {
      apply_mass_sigma(m, g, sigma_of, src.dt, w.a, committed_a_, R);
      assemble_mass_sigma(m, g, dofs, sigma_of, src.dt, K);
      for (const auto& e : u_couple_) {
        const int ud = dofs.grain_dof(e.slot);
        R.add_node(e.node, e.val * w.u[e.slot]);
        K.add_node_dof(e.node, ud, e.val);
        K.add_dof_node(ud, e.node, e.val * inv_dt);
        R.add_dof(ud, e.val * inv_dt * (w.a[e.node] - committed_a_[e.node]));
      }
      for (int s = 0; s < n_slots; ++s) {
        const int ud = dofs.grain_dof(s);
        K.add_dof_pair(ud, ud, grain_sigma_area_[s]);
        R.add_dof(ud, grain_sigma_area_[s] * w.u[s]);
        const double load = src.e_Mz * load_e_u_[s] -
                            src.kappa * (src.db_M_dt.x() * load_x_u_[s] - src.db_M_dt.y() * load_y_u_[s]);
        R.add_dof(ud, -load);
      }
      for (int i = 0; i < static_cast<int>(m.nodes.size()); ++i) {
        if (load_e_node_[i] == 0.0 && load_x_node_[i] == 0.0 && load_y_node_[i] == 0.0) continue;
        const double load = src.e_Mz * load_e_node_[i] -
                            src.kappa * (src.db_M_dt.x() * load_x_node_[i] - src.db_M_dt.y() * load_y_node_[i]);
        R.add_node(i, -load);
      }
    }

    apply_zero_mean_gauge(m, g, w.a, w.lambda, R);
    add_zero_mean_gauge(m, g, dofs, K);

    const double norm = R.vec().norm();
    w.residual_history.push_back(norm);
    if (iter == 0) ref = norm;
    const double floor = 1e-14 * R.scale();
    const bool converged = (ref == 0.0) || norm <= opts_.tol * ref || norm <= floor;
    if (converged) {
      w.iterations = iter;
      w.final_rel = ref > 0.0 ? norm / ref : 0.0;
      break;
    }
    if (iter >= opts_.max_iter) {
      std::ostringstream os;
      os << "cell Newton did not converge after " << iter << " iterations; residuals:";
      for (double r : w.residual_history) os << " " << r;
      throw SolverError(os.str());
    }
    if (iter > 0) {
      consecutive_increases = norm > prev_norm ? consecutive_increases + 1 : 0;
      if (consecutive_increases >= 2) relax = opts_.under_relax;
    }
    prev_norm = norm;

    solver.factorize(dofs.size(), K.triplets());
    const Eigen::VectorXd delta = solver.solve(-R.vec());
    Eigen::VectorXd scaled = relax * delta;
    dofs.add_increment(scaled, w.a);
    if (!static_mode)
      for (int s = 0; s < n_slots; ++s) w.u[s] += scaled[dofs.grain_dof(s)];
    w.lambda += scaled[dofs.zero_mean_dof()];
  }

  // Upscale h_M over the full cell.
  HVec h_sum = HVec::Zero();
  const auto& rule = QuadRule::tri3();
  for (int t = 0; t < nt; ++t)
    for (int q = 0; q < 3; ++q) h_sum += rule.points[q].w * g[t].area * w.h_gp[t * 3 + q];
  w.out.h_M = h_sum / cell_area_;

  if (!static_mode) {
    double loss = 0.0;
    for (int t = 0; t < nt; ++t) {
      const int slot = tri_grain_slot_[t];
      if (slot < 0) continue;
      const auto& v = m.tris[t].v;
      for (int q = 0; q < 3; ++q) {
        const auto& pt = rule.points[q];
        const double da_dt =
            inv_dt * (pt.l0 * (w.a[v[0]] - committed_a_[v[0]]) + pt.l1 * (w.a[v[1]] - committed_a_[v[1]]) +
                      pt.l2 * (w.a[v[2]] - committed_a_[v[2]]));
        const double e_def = da_dt + w.u[slot] - cell_source_field(src, g.gauss_point(m, t, q));
        loss += pt.w * g[t].area * tri_sigma_[t] * e_def * e_def;
      }
    }
    w.out.loss_density = loss / cell_area_;
  }

  stats_.solves += 1;
  stats_.max_iterations = std::max(stats_.max_iterations, w.iterations);
  stats_.max_final_rel = std::max(stats_.max_final_rel, w.final_rel);
  return w;
}

UpscaledLaw CellProblem::solve_step(const CellSources& src, bool static_mode) {
  base_ = run_newton(src, BVec::Zero(), static_mode, nullptr);
  has_base_ = true;
  return base_.out;
}

Tangent2 CellProblem::upscale_tangent(const CellSources& src, double delta_b, bool static_mode) {
  if (!has_base_) throw SolverError("upscale_tangent requires a preceding solve_step");
  Tangent2 t;
  for (int dir = 0; dir < 2; ++dir) {
    BVec db = BVec::Zero();
    db[dir] = delta_b;
    const SolveWork pert = run_newton(src, db, static_mode, &base_);
    t.col(dir) = (pert.out.h_M - base_.out.h_M) / delta_b;
  }
  base_.out.tangent = t;
  return t;
}

void CellProblem::commit() {
  if (!has_base_) throw SolverError("commit requires a preceding solve_step");
  committed_a_ = base_.a;
  if (base_.u.size() == committed_u_.size()) committed_u_ = base_.u;
  if (has_ja_) committed_ja_ = base_.ja;
}

BVec CellProblem::committed_correction_flux(int t) const {
  return geom_->flux_density(*mesh_, t, committed_a_);
}

BVec CellProblem::trial_mean_flux_correction() const {
  if (!has_base_) throw SolverError("no trial solve available");
  BVec sum = BVec::Zero();
  for (int t = 0; t < static_cast<int>(mesh_->tris.size()); ++t)
    sum += (*geom_)[t].area * geom_->flux_density(*mesh_, t, base_.a);
  return sum / cell_area_;
}

double CellProblem::trial_max_grain_current_rel(const CellSources& src) const {
  if (!has_base_) throw SolverError("no trial solve available");
  const TriMesh& m = *mesh_;
  const P1Geometry& g = *geom_;
  const auto& rule = QuadRule::tri3();
  const double inv_dt = 1.0 / src.dt;
  const int n_slots = static_cast<int>(grain_slots_.size());
  std::vector<double> current(n_slots, 0.0), scale(n_slots, 0.0);
  for (int t = 0; t < static_cast<int>(m.tris.size()); ++t) {
    const int slot = tri_grain_slot_[t];
    if (slot < 0) continue;
    const auto& v = m.tris[t].v;
    for (int q = 0; q < 3; ++q) {
      const auto& pt = rule.points[q];
      const double wA = pt.w * g[t].area * tri_sigma_[t];
      const double da_dt =
          inv_dt * (pt.l0 * (base_.a[v[0]] - committed_a_[v[0]]) + pt.l1 * (base_.a[v[1]] - committed_a_[v[1]]) +
                    pt.l2 * (base_.a[v[2]] - committed_a_[v[2]]));
      const double es = cell_source_field(src, g.gauss_point(m, t, q));
      const double u = base_.u.size() > 0 ? base_.u[slot] : 0.0;
      current[slot] += wA * (da_dt + u - es);
      scale[slot] = std::max(scale[slot], std::abs(es));
    }
  }
  double worst = 0.0;
  for (int s = 0; s < n_slots; ++s) {
    double denom = grain_sigma_area_[s] * scale[s];
    if (denom == 0.0) {
      // No driving field: normalize against the RMS local current scale.
      const double u = base_.u.size() > 0 ? std::abs(base_.u[s]) : 0.0;
      denom = grain_sigma_area_[s] * std::max(u, 1e-300);
    }
    worst = std::max(worst, std::abs(current[s]) / denom);
  }
  return worst;
}

HomogenizedConductivity homogenize_conductivity(const TriMesh& mesh, const MaterialMap& materials) {
  HomogenizedConductivity out;
  P1Geometry geom(mesh);
  const int nt = static_cast<int>(mesh.tris.size());
  double area = 0.0;
  for (int t = 0; t < nt; ++t) {
    const double s = materials.sigma_for(mesh.tris[t].region);
    area += geom[t].area;
    out.zz += s * geom[t].area;
  }
  out.zz /= area;

  // In-plane: periodic electrokinetic cell problem per direction.
  DofMap::Options opt;
  opt.use_periodic = true;
  const DofMap dofs = DofMap::build(mesh, opt);
  const int n = dofs.size();

  // Connected components of the conducting node graph (in folded dofs).
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  std::vector<bool> conducting(n, false);
  for (int t = 0; t < nt; ++t) {
    if (materials.sigma_for(mesh.tris[t].region) == 0.0) continue;
    const auto& v = mesh.tris[t].v;
    for (int k = 0; k < 3; ++k) {
      const int a = dofs.node_dof(v[k]);
      const int b = dofs.node_dof(v[(k + 1) % 3]);
      conducting[a] = conducting[b] = true;
      parent[find(a)] = find(b);
    }
  }
  std::vector<bool> pinned(n, false);
  std::vector<bool> seen_root(n, false);
  for (int d = 0; d < n; ++d) {
    if (!conducting[d]) {
      pinned[d] = true;
      continue;
    }
    const int root = find(d);
    if (!seen_root[root]) {
      seen_root[root] = true;
      pinned[d] = true;  // first dof of each conducting component
    }
  }

  std::vector<Eigen::Triplet<double>> trips;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 2);
  for (int t = 0; t < nt; ++t) {
    const double s = materials.sigma_for(mesh.tris[t].region);
    if (s == 0.0) continue;
    const auto& v = mesh.tris[t].v;
    const auto& d = geom[t];
    for (int i = 0; i < 3; ++i) {
      const int di = dofs.node_dof(v[i]);
      if (pinned[di]) continue;
      for (int j = 0; j < 3; ++j) {
        const int dj = dofs.node_dof(v[j]);
        if (pinned[dj]) continue;
        trips.emplace_back(di, dj, s * d.area * d.grad[i].dot(d.grad[j]));
      }
      for (int dir = 0; dir < 2; ++dir) rhs(di, dir) -= s * d.area * d.grad[i][dir];
    }
  }
  for (int d = 0; d < n; ++d)
    if (pinned[d]) trips.emplace_back(d, d, 1.0);

  SparseDirectSolver solver;
  solver.factorize(n, trips);
  double result[2] = {0.0, 0.0};
  for (int dir = 0; dir < 2; ++dir) {
    const Eigen::VectorXd u = solver.solve(rhs.col(dir));
    const std::vector<double> nodal = dofs.expand(u);
    double acc = 0.0;
    for (int t = 0; t < nt; ++t) {
      const double s = materials.sigma_for(mesh.tris[t].region);
      if (s == 0.0) continue;
      const auto& v = mesh.tris[t].v;
      const auto& d = geom[t];
      Eigen::Vector2d grad_u = Eigen::Vector2d::Zero();
      for (int k = 0; k < 3; ++k) grad_u += nodal[v[k]] * d.grad[k];
      acc += s * d.area * (grad_u[dir] + 1.0);
    }
    result[dir] = acc / area;
  }
  out.xx = result[0];
  out.yy = result[1];
  return out;
}

}  // namespace mqs
