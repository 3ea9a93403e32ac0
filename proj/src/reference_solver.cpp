#include "mqs/reference_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mqs {

ReferenceSolver::ReferenceSolver(const RunConfig& cfg) : cfg_(cfg) {
  cfg_.geometry.validate_grains();
  mesh_ = std::make_shared<const TriMesh>(build_reference_mesh(cfg_.geometry, cfg_.reference_refine));
  mesh_->validate();
  geom_ = std::make_shared<const P1Geometry>(*mesh_);
  materials_ = cfg_.material_map();

  grain_slots_ = mesh_->grain_ids();
  DofMap::Options opt;
  opt.dirichlet_tags = [](BoundaryTag t) {
    return t == BoundaryTag::GammaInf || t == BoundaryTag::GammaH;
  };
  opt.n_grain_constants = cfg_.reference_grain_constraints ? static_cast<int>(grain_slots_.size()) : 0;
  dofs_ = DofMap::build(*mesh_, opt);

  const int nt = static_cast<int>(mesh_->tris.size());
  tri_grain_slot_.assign(nt, -1);
  tri_sigma_.assign(nt, 0.0);
  grain_sigma_area_.assign(grain_slots_.size(), 0.0);
  source_shape_.assign(mesh_->nodes.size(), 0.0);
  for (int t = 0; t < nt; ++t) {
    const auto& tag = mesh_->tris[t].region;
    tri_sigma_[t] = materials_.sigma_for(tag);
    if (materials_.law_for(tag).kind == LawKind::JilesAtherton) has_ja_ = true;
    if (tag.kind == RegionKind::InductorPos || tag.kind == RegionKind::InductorNeg) {
      const double pol = tag.kind == RegionKind::InductorPos ? 1.0 : -1.0;
      const double w = pol * (*geom_)[t].area / 3.0;
      for (int k = 0; k < 3; ++k) source_shape_[mesh_->tris[t].v[k]] += w;
    }
    if (!tag.is_grain() || tri_sigma_[t] == 0.0) continue;
    const int slot = static_cast<int>(
        std::lower_bound(grain_slots_.begin(), grain_slots_.end(), tag.grain) - grain_slots_.begin());
    tri_grain_slot_[t] = slot;
    grain_sigma_area_[slot] += tri_sigma_[t] * (*geom_)[t].area;
    if (cfg_.reference_grain_constraints) {
      for (int k = 0; k < 3; ++k)
        u_couple_.push_back({mesh_->tris[t].v[k], slot, tri_sigma_[t] * (*geom_)[t].area / 3.0});
    }
  }
  if (has_ja_) committed_ja_.assign(nt * 3, JAState{});
}

ReferenceSolver::Assembled ReferenceSolver::assemble(const std::vector<double>& a,
                                                     const Eigen::VectorXd& u,
                                                     const std::vector<double>& a_prev, double t,
                                                     double dt, bool with_tangent,
                                                     std::vector<JAState>* trial_ja) {
  Assembled out;
  ResidualVector R(dofs_);
  SystemAssembler K(dofs_);

  auto law_cb = [&](int tri, int q, const BVec& b) -> LawEval {
    const auto& law = materials_.law_for(mesh_->tris[tri].region);
    if (law.kind == LawKind::JilesAtherton) {
      JAResult res = ja_update(b, committed_ja_[tri * 3 + q], law.ja);
      if (trial_ja) (*trial_ja)[tri * 3 + q] = res.state;
      return {res.h, res.dh_db};
    }
    auto [h, tan] = eval_law(law, b);
    return {h, tan};
  };
  assemble_curl_term(*mesh_, *geom_, a, law_cb, &R, with_tangent ? &K : nullptr);

  auto sigma_of = [this](const RegionTag& tag) { return materials_.sigma_for(tag); };
  apply_mass_sigma(*mesh_, *geom_, sigma_of, dt, a, a_prev, R);
  if (with_tangent) assemble_mass_sigma(*mesh_, *geom_, dofs_, sigma_of, dt, K);

  if (cfg_.reference_grain_constraints) {
    const double inv_dt = 1.0 / dt;
    for (const auto& e : u_couple_) {
      const int ud = dofs_.grain_dof(e.slot);
      R.add_node(e.node, e.val * u[e.slot]);
      R.add_dof(ud, e.val * inv_dt * (a[e.node] - a_prev[e.node]));
      if (with_tangent) {
        K.add_node_dof(e.node, ud, e.val);
        K.add_dof_node(ud, e.node, e.val * inv_dt);
      }
    }
    for (int s = 0; s < static_cast<int>(grain_slots_.size()); ++s) {
      const int ud = dofs_.grain_dof(s);
      R.add_dof(ud, grain_sigma_area_[s] * u[s]);
      if (with_tangent) K.add_dof_pair(ud, ud, grain_sigma_area_[s]);
    }
  }

  const double js = cfg_.source.value(t);
  double source_norm2 = 0.0;
  for (int i = 0; i < static_cast<int>(source_shape_.size()); ++i) {
    if (source_shape_[i] == 0.0) continue;
    R.add_node(i, -js * source_shape_[i]);
    if (dofs_.node_dof(i) >= 0) source_norm2 += js * js * source_shape_[i] * source_shape_[i];
  }

  out.residual = R.vec();
  out.scale = R.scale();
  out.tangent = K.triplets();
  out.source_norm = std::sqrt(source_norm2);
  return out;
}

StepDiagnostics ReferenceSolver::newton_solve(std::vector<double>& a, Eigen::VectorXd& u,
                                              const std::vector<double>& a_prev, double t, double dt) {
  StepDiagnostics diag;
  diag.time = t;
  if (has_ja_) trial_ja_.assign(mesh_->tris.size() * 3, JAState{});

  double ref = 0.0;
  double prev_norm = 0.0;
  int consecutive_increases = 0;
  double relax = 1.0;

  for (int iter = 0;; ++iter) {
    Assembled sys = assemble(a, u, a_prev, t, dt, true, has_ja_ ? &trial_ja_ : nullptr);
    const double norm = sys.residual.norm();
    diag.residual_history.push_back(norm);
    if (iter == 0) ref = std::max(norm, sys.source_norm);
    const double floor = 1e-14 * sys.scale;
    if (ref == 0.0 || norm <= cfg_.macro_tol * ref || norm <= floor) {
      diag.final_rel_residual = ref > 0.0 ? norm / ref : 0.0;
      break;
    }
    if (iter >= cfg_.macro_max_iter) {
      std::ostringstream os;
      os << "reference Newton did not converge at t = " << t << "; residuals:";
      for (double r : diag.residual_history) os << " " << r;
      throw SolverError(os.str());
    }
    if (iter > 0) {
      consecutive_increases = norm > prev_norm ? consecutive_increases + 1 : 0;
      if (consecutive_increases >= 2) relax = 0.5;
    }
    prev_norm = norm;

    lu_.factorize(dofs_.size(), sys.tangent);
    const Eigen::VectorXd delta = lu_.solve(-sys.residual);
    Eigen::VectorXd scaled = relax * delta;
    dofs_.add_increment(scaled, a);
    for (int s = 0; s < static_cast<int>(u.size()); ++s) u[s] += scaled[dofs_.grain_dof(s)];
    ++diag.newton_solves;
  }
  return diag;
}

double ReferenceSolver::joule_power(const std::vector<double>& a, const Eigen::VectorXd& u,
                                    const std::vector<double>& a_prev, double dt) const {
  const auto& rule = QuadRule::tri3();
  const double inv_dt = 1.0 / dt;
  double p = 0.0;
  for (int t = 0; t < static_cast<int>(mesh_->tris.size()); ++t) {
    if (tri_sigma_[t] == 0.0) continue;
    const auto& v = mesh_->tris[t].v;
    const int slot = tri_grain_slot_[t];
    const double uc = (slot >= 0 && u.size() > 0) ? u[slot] : 0.0;
    for (int q = 0; q < 3; ++q) {
      const auto& pt = rule.points[q];
      const double da_dt = inv_dt * (pt.l0 * (a[v[0]] - a_prev[v[0]]) + pt.l1 * (a[v[1]] - a_prev[v[1]]) +
                                     pt.l2 * (a[v[2]] - a_prev[v[2]]));
      const double e = da_dt + uc;
      p += pt.w * (*geom_)[t].area * tri_sigma_[t] * e * e;
    }
  }
  return p;
}

ReferenceRunResult ReferenceSolver::run() {
  const TimeGrid grid = cfg_.time_grid();
  const double dt = grid.dt();

  ReferenceRunResult result;
  result.probes.resize(cfg_.probes.size());
  std::vector<int> probe_tris(cfg_.probes.size());
  for (size_t i = 0; i < cfg_.probes.size(); ++i) {
    result.probes[i].location = cfg_.probes[i];
    probe_tris[i] = mesh_->find_triangle(cfg_.probes[i]);
    if (probe_tris[i] < 0) throw ProbeError("probe outside reference mesh");
  }

  std::vector<double> a(mesh_->nodes.size(), 0.0);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dofs_.n_grain_constants());
  result.times.push_back(grid.t0);
  result.az_history.push_back(a);
  result.losses.times.push_back(grid.t0);
  result.losses.values.push_back(0.0);
  for (size_t i = 0; i < cfg_.probes.size(); ++i)
    result.probes[i].macro_b.push_back(geom_->flux_density(*mesh_, probe_tris[i], a));

  std::vector<double> a_prev = a;
  for (int k = 1; k <= grid.n_steps; ++k) {
    const double t = grid.time(k);
    StepDiagnostics diag;
    std::vector<double> a_next = a_prev;
    Eigen::VectorXd u_next = u;
    double power = 0.0;
    try {
      diag = newton_solve(a_next, u_next, a_prev, t, dt);
      diag.step = k;
      power = joule_power(a_next, u_next, a_prev, dt);
      if (has_ja_) committed_ja_ = trial_ja_;
    } catch (const SolverError&) {
      if (!cfg_.dt_halving) throw;
      const double th = t - 0.5 * dt;
      a_next = a_prev;
      u_next = u;
      StepDiagnostics half1 = newton_solve(a_next, u_next, a_prev, th, 0.5 * dt);
      if (has_ja_) committed_ja_ = trial_ja_;
      std::vector<double> a_mid = a_next;
      diag = newton_solve(a_next, u_next, a_mid, t, 0.5 * dt);
      diag.step = k;
      diag.dt_halvings = 1;
      diag.newton_solves += half1.newton_solves;
      power = joule_power(a_next, u_next, a_mid, 0.5 * dt);
      if (has_ja_) committed_ja_ = trial_ja_;
    }

    a_prev = a_next;
    u = u_next;
    result.times.push_back(t);
    result.az_history.push_back(a_next);
    result.losses.times.push_back(t);
    result.losses.values.push_back(power);
    result.diagnostics.push_back(std::move(diag));
    for (size_t i = 0; i < cfg_.probes.size(); ++i)
      result.probes[i].macro_b.push_back(geom_->flux_density(*mesh_, probe_tris[i], a_next));
  }
  return result;
}

BVec ReferenceSolver::field_at(const std::vector<double>& a, const Eigen::Vector2d& p) const {
  const int t = mesh_->find_triangle(p);
  if (t < 0) throw ProbeError("point outside reference mesh");
  return geom_->flux_density(*mesh_, t, a);
}

std::vector<BVec> ReferenceSolver::probe_field(const ReferenceRunResult& run,
                                               const Eigen::Vector2d& p) const {
  const int t = mesh_->find_triangle(p);
  if (t < 0) throw ProbeError("point outside reference mesh");
  std::vector<BVec> out;
  out.reserve(run.az_history.size());
  for (const auto& a : run.az_history) out.push_back(geom_->flux_density(*mesh_, t, a));
  return out;
}

bool ReferenceSolver::resolution_ok(double* skin_depth) const {
  // Linearized grain reluctivity at zero field.
  double nu = NU0;
  const auto& law = materials_.grain_law;
  switch (law.kind) {
    case LawKind::Linear:
      nu = law.linear.nu;
      break;
    case LawKind::Exponential:
      nu = law.exp.alpha + law.exp.beta;
      break;
    case LawKind::JilesAtherton: {
      const double chi = law.ja.c * law.ja.Ms / (3.0 * law.ja.a);
      nu = NU0 / (1.0 + chi / std::max(1e-12, 1.0 - law.ja.alpha * chi));
      break;
    }
  }
  const double omega = 2.0 * 3.14159265358979323846 * cfg_.source.frequency;
  const double delta = std::sqrt(2.0 * nu / (std::max(cfg_.sigma, 1e-300) * omega));
  if (skin_depth) *skin_depth = delta;
  // Finest grain-band element size of the structured mesh.
  const double h = cfg_.geometry.pitch() / (8.0 * cfg_.reference_refine);
  return delta >= 2.0 * h;
}

}  // namespace mqs
