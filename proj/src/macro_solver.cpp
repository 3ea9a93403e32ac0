#include "mqs/macro_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "mqs/parallel.hpp"

namespace mqs {

namespace {

double source_polarity(const RegionTag& tag) {
  if (tag.kind == RegionKind::InductorPos) return 1.0;
  if (tag.kind == RegionKind::InductorNeg) return -1.0;
  return 0.0;
}

}  // namespace

MacroSolver::MacroSolver(const RunConfig& cfg) : cfg_(cfg) {
  cfg_.geometry.validate_basic();
  mesh_ = std::make_shared<const TriMesh>(build_macro_mesh(cfg_.geometry, cfg_.macro_divisions));
  mesh_->validate();
  geom_ = std::make_shared<const P1Geometry>(*mesh_);

  for (const auto& be : mesh_->bedges) {
    switch (be.tag) {
      case BoundaryTag::GammaInf:
      case BoundaryTag::GammaH:
      case BoundaryTag::GammaV:
        break;
      default:
        throw ConfigError("macro mesh carries a cell boundary tag");
    }
  }
  DofMap::Options opt;
  opt.dirichlet_tags = [](BoundaryTag t) {
    return t == BoundaryTag::GammaInf || t == BoundaryTag::GammaH;
  };
  dofs_ = DofMap::build(*mesh_, opt);

  materials_ = cfg_.material_map();
  macro_materials_ = materials_;  // grain law unused on the macro mesh

  cell_mesh_ = std::make_shared<const TriMesh>(build_cell_mesh(cfg_.geometry, cfg_.cell_refine));
  cell_mesh_->validate();
  cell_geom_ = std::make_shared<const P1Geometry>(*cell_mesh_);

  sigma_M_ = homogenize_conductivity(*cell_mesh_, materials_);
  macro_sigma_zz_ = cfg_.macro_sigma_mode == MacroSigmaMode::Computed ? sigma_M_.zz : 0.0;

  // One cell problem per Gauss point of every homogenized triangle,
  // anchored to the nearest grain-lattice center for field reconstruction.
  CellNewtonOptions cell_opts;
  cell_opts.tol = cfg_.cell_tol;
  cell_opts.max_iter = cfg_.cell_max_iter;
  const double hs = 0.5 * cfg_.geometry.side_length;
  const double pitch = cfg_.geometry.pitch();
  const int n_grains = cfg_.geometry.grains_per_side;
  tri_gp_base_.assign(mesh_->tris.size(), -1);
  for (int t = 0; t < static_cast<int>(mesh_->tris.size()); ++t) {
    if (mesh_->tris[t].region.kind != RegionKind::SmcHomogenized) continue;
    tri_gp_base_[t] = static_cast<int>(gps_.size());
    for (int q = 0; q < 3; ++q) {
      GaussPoint gp;
      gp.tri = t;
      gp.q = q;
      gp.location = geom_->gauss_point(*mesh_, t, q);
      Eigen::Vector2d anchor;
      for (int c = 0; c < 2; ++c) {
        int idx = static_cast<int>(std::floor((gp.location[c] + hs) / pitch));
        idx = std::clamp(idx, 0, n_grains - 1);
        anchor[c] = -hs + (idx + 0.5) * pitch;
      }
      gp.cell = std::make_unique<CellProblem>(cell_mesh_, cell_geom_, materials_, cell_opts, anchor);
      gps_.push_back(std::move(gp));
    }
  }

  source_shape_.assign(mesh_->nodes.size(), 0.0);
  for (int t = 0; t < static_cast<int>(mesh_->tris.size()); ++t) {
    const double pol = source_polarity(mesh_->tris[t].region);
    if (pol == 0.0) continue;
    const double w = pol * (*geom_)[t].area / 3.0;
    for (int k = 0; k < 3; ++k) source_shape_[mesh_->tris[t].v[k]] += w;
  }

  // Probe bindings: containing macro triangle, nearest cell for points in
  // the homogenized block, and the cell triangle of the wrapped position.
  for (const auto& p : cfg_.probes) {
    ProbeBinding pb;
    pb.location = p;
    pb.macro_tri = mesh_->find_triangle(p);
    if (pb.macro_tri < 0) throw ProbeError("probe outside macro mesh");
    if (mesh_->tris[pb.macro_tri].region.kind == RegionKind::SmcHomogenized) {
      double best = std::numeric_limits<double>::max();
      for (int g = 0; g < static_cast<int>(gps_.size()); ++g) {
        const double d = (gps_[g].location - p).squaredNorm();
        if (d < best) {
          best = d;
          pb.gp = g;
        }
      }
      const Eigen::Vector2d anchor = gps_[pb.gp].cell->anchor();
      Eigen::Vector2d y = p - anchor;
      for (int c = 0; c < 2; ++c) y[c] -= pitch * std::round(y[c] / pitch);
      pb.cell_tri = cell_mesh_->find_triangle(y);
      if (pb.cell_tri < 0) throw ProbeError("wrapped probe position missed the cell mesh");
    }
    probe_bindings_.push_back(pb);
  }
}

void MacroSolver::solve_cells(const std::vector<double>& a, const std::vector<double>& a_prev,
                              double dt, bool static_mode) {
  const int n = static_cast<int>(gps_.size());
  parallel_for(n, cfg_.resolved_threads(), [&](int i) {
    GaussPoint& gp = gps_[i];
    const BVec b_M = geom_->flux_density(*mesh_, gp.tri, a);
    CellSources src;
    if (static_mode) {
      src.b_M = b_M;
    } else {
      const BVec b_M_prev = geom_->flux_density(*mesh_, gp.tri, a_prev);
      const double az = geom_->interpolate(*mesh_, gp.tri, gp.q, a);
      const double az_prev = geom_->interpolate(*mesh_, gp.tri, gp.q, a_prev);
      src = downscale(b_M, b_M_prev, az, az_prev, dt);
    }
    gp.cell->solve_step(src, static_mode);
    const double delta = std::max(cfg_.perturbation_b, cfg_.perturbation_b * src.b_M.norm());
    gp.cell->upscale_tangent(src, delta, static_mode);
  });
}

MacroSolver::Assembled MacroSolver::assemble(const std::vector<double>& a,
                                             const std::vector<double>& a_prev, double t, double dt,
                                             bool with_tangent, bool static_mode) {
  Assembled out;
  ResidualVector R(dofs_);
  SystemAssembler K(dofs_);

  auto law_cb = [&](int tri, int q, const BVec& b) -> LawEval {
    const int base = tri_gp_base_[tri];
    if (base >= 0) {
      const UpscaledLaw& up = gps_[base + q].cell->last_upscaled();
      return {up.h_M, up.tangent};
    }
    auto [h, tan] = eval_law(macro_materials_.law_for(mesh_->tris[tri].region), b);
    return {h, tan};
  };
  assemble_curl_term(*mesh_, *geom_, a, law_cb, &R, with_tangent ? &K : nullptr);

  if (!static_mode && macro_sigma_zz_ != 0.0) {
    auto sigma_of = [this](const RegionTag& tag) {
      return tag.kind == RegionKind::SmcHomogenized ? macro_sigma_zz_ : 0.0;
    };
    apply_mass_sigma(*mesh_, *geom_, sigma_of, dt, a, a_prev, R);
    if (with_tangent) assemble_mass_sigma(*mesh_, *geom_, dofs_, sigma_of, dt, K);
  }

  const double js = static_mode ? cfg_.source.j_s0 : cfg_.source.value(t);
  double source_norm2 = 0.0;
  for (int i = 0; i < static_cast<int>(source_shape_.size()); ++i) {
    if (source_shape_[i] == 0.0) continue;
    R.add_node(i, -js * source_shape_[i]);
    if (dofs_.node_dof(i) >= 0) {
      const double f = js * source_shape_[i];
      source_norm2 += f * f;
    }
  }

  out.residual = R.vec();
  out.scale = R.scale();
  out.tangent = K.triplets();
  out.source_norm = std::sqrt(source_norm2);
  return out;
}

StepDiagnostics MacroSolver::newton_solve(std::vector<double>& a, const std::vector<double>& a_prev,
                                          double t, double dt, bool static_mode) {
  StepDiagnostics diag;
  diag.time = t;
  for (auto& gp : gps_) gp.cell->reset_stats();

  double ref = 0.0;
  double prev_norm = 0.0;
  int consecutive_increases = 0;
  double relax = 1.0;

  for (int iter = 0;; ++iter) {
    solve_cells(a, a_prev, dt, static_mode);
    Assembled sys = assemble(a, a_prev, t, dt, /*with_tangent=*/true, static_mode);
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
      os << "macro Newton did not converge at t = " << t << " after " << iter
         << " iterations; residuals:";
      for (double r : diag.residual_history) os << " " << r;
      throw SolverError(os.str());
    }
    if (iter > 0) {
      consecutive_increases = norm > prev_norm ? consecutive_increases + 1 : 0;
      if (consecutive_increases >= 2) relax = 0.5;
    }
    prev_norm = norm;

    macro_lu_.factorize(dofs_.size(), sys.tangent);
    const Eigen::VectorXd delta = macro_lu_.solve(-sys.residual);
    Eigen::VectorXd scaled = relax * delta;
    dofs_.add_increment(scaled, a);
    ++diag.newton_solves;
  }

  for (const auto& gp : gps_) {
    diag.cell_solves += gp.cell->stats().solves;
    diag.max_cell_iters = std::max(diag.max_cell_iters, gp.cell->stats().max_iterations);
    diag.max_cell_final_rel = std::max(diag.max_cell_final_rel, gp.cell->stats().max_final_rel);
  }
  return diag;
}

void MacroSolver::commit_cells(StepDiagnostics& diag, const std::vector<double>& a,
                               const std::vector<double>& a_prev, double dt, bool static_mode) {
  for (auto& gp : gps_) {
    if (!static_mode) {
      const BVec b_M = geom_->flux_density(*mesh_, gp.tri, a);
      const BVec b_M_prev = geom_->flux_density(*mesh_, gp.tri, a_prev);
      const double az = geom_->interpolate(*mesh_, gp.tri, gp.q, a);
      const double az_prev = geom_->interpolate(*mesh_, gp.tri, gp.q, a_prev);
      const CellSources src = downscale(b_M, b_M_prev, az, az_prev, dt);
      diag.max_cell_mean_flux =
          std::max(diag.max_cell_mean_flux, gp.cell->trial_mean_flux_correction().norm());
      diag.max_cell_grain_current_rel =
          std::max(diag.max_cell_grain_current_rel, gp.cell->trial_max_grain_current_rel(src));
    }
    gp.cell->commit();
  }
  diag.upscaled_power = upscaled_power();
}

double MacroSolver::upscaled_power() const {
  double p = 0.0;
  const auto& rule = QuadRule::tri3();
  for (const auto& gp : gps_)
    p += rule.points[gp.q].w * (*geom_)[gp.tri].area * gp.cell->last_upscaled().loss_density;
  return p;
}

void MacroSolver::record_probes(MacroRunResult& result, const std::vector<double>& a) const {
  for (size_t i = 0; i < probe_bindings_.size(); ++i) {
    const ProbeBinding& pb = probe_bindings_[i];
    ProbeSeries& series = result.probes[i];
    const BVec b_macro = geom_->flux_density(*mesh_, pb.macro_tri, a);
    series.macro_b.push_back(b_macro);
    if (pb.gp >= 0) {
      const BVec b_M = geom_->flux_density(*mesh_, gps_[pb.gp].tri, a);
      series.meso_b.push_back(b_M + gps_[pb.gp].cell->committed_correction_flux(pb.cell_tri));
    }
  }
}

MacroRunResult MacroSolver::run_dynamic() {
  const TimeGrid grid = cfg_.time_grid();
  const double dt = grid.dt();

  MacroRunResult result;
  result.sigma_M = sigma_M_;
  result.probes.resize(probe_bindings_.size());
  for (size_t i = 0; i < probe_bindings_.size(); ++i) {
    result.probes[i].location = probe_bindings_[i].location;
    result.probes[i].has_meso = probe_bindings_[i].gp >= 0;
  }

  const bool dump_cell = cfg_.dump_cell_gp >= 0 && cfg_.dump_cell_gp < static_cast<int>(gps_.size());
  if (dump_cell) result.cell_dump.gp = cfg_.dump_cell_gp;
  auto record_cell_dump = [&](const CellSources& src) {
    if (!dump_cell) return;
    const CellProblem& cell = *gps_[cfg_.dump_cell_gp].cell;
    result.cell_dump.a_zc.push_back(cell.committed_potential());
    result.cell_dump.u_c.push_back(cell.committed_constants());
    result.cell_dump.sources.push_back(src);
  };

  std::vector<double> a(mesh_->nodes.size(), 0.0);
  result.times.push_back(grid.t0);
  result.az_history.push_back(a);
  result.losses.times.push_back(grid.t0);
  result.losses.values.push_back(0.0);
  record_probes(result, a);
  record_cell_dump(CellSources{});

  std::vector<double> a_prev = a;
  for (int k = 1; k <= grid.n_steps; ++k) {
    const double t = grid.time(k);
    StepDiagnostics diag;
    std::vector<double> a_next = a_prev;
    try {
      diag = newton_solve(a_next, a_prev, t, dt, /*static_mode=*/false);
      diag.step = k;
      commit_cells(diag, a_next, a_prev, dt, false);
    } catch (const SolverError&) {
      if (!cfg_.dt_halving) throw;
      // One retry with two half steps landing back on the grid time.
      const double th = t - 0.5 * dt;
      a_next = a_prev;
      StepDiagnostics half1 = newton_solve(a_next, a_prev, th, 0.5 * dt, false);
      commit_cells(half1, a_next, a_prev, 0.5 * dt, false);
      std::vector<double> a_mid = a_next;
      diag = newton_solve(a_next, a_mid, t, 0.5 * dt, false);
      diag.step = k;
      diag.dt_halvings = 1;
      diag.newton_solves += half1.newton_solves;
      diag.cell_solves += half1.cell_solves;
      commit_cells(diag, a_next, a_mid, 0.5 * dt, false);
    }

    result.times.push_back(t);
    result.az_history.push_back(a_next);
    result.losses.times.push_back(t);
    result.losses.values.push_back(diag.upscaled_power);
    result.diagnostics.push_back(std::move(diag));
    record_probes(result, a_next);
    if (dump_cell) {
      const GaussPoint& gp = gps_[cfg_.dump_cell_gp];
      const BVec b_M = geom_->flux_density(*mesh_, gp.tri, a_next);
      const BVec b_M_prev = geom_->flux_density(*mesh_, gp.tri, a_prev);
      const double az = geom_->interpolate(*mesh_, gp.tri, gp.q, a_next);
      const double az_prev = geom_->interpolate(*mesh_, gp.tri, gp.q, a_prev);
      record_cell_dump(downscale(b_M, b_M_prev, az, az_prev,
                                 diag.dt_halvings > 0 ? 0.5 * dt : dt));
    }
    a_prev = a_next;
  }
  return result;
}

MacroRunResult MacroSolver::run_static() {
  MacroRunResult result;
  result.sigma_M = sigma_M_;
  result.probes.resize(probe_bindings_.size());
  for (size_t i = 0; i < probe_bindings_.size(); ++i) {
    result.probes[i].location = probe_bindings_[i].location;
    result.probes[i].has_meso = probe_bindings_[i].gp >= 0;
  }

  std::vector<double> a(mesh_->nodes.size(), 0.0);
  const std::vector<double> a_prev = a;
  StepDiagnostics diag = newton_solve(a, a_prev, 0.0, 1.0, /*static_mode=*/true);
  diag.step = 0;
  commit_cells(diag, a, a_prev, 1.0, true);

  result.times.push_back(0.0);
  result.az_history.push_back(a);
  result.losses.times.push_back(0.0);
  result.losses.values.push_back(0.0);
  result.diagnostics.push_back(std::move(diag));
  record_probes(result, a);
  return result;
}

Eigen::VectorXd MacroSolver::residual_at(const std::vector<double>& a,
                                         const std::vector<double>& a_prev, double t, double dt) {
  solve_cells(a, a_prev, dt, false);
  return assemble(a, a_prev, t, dt, /*with_tangent=*/false, false).residual;
}

std::vector<Eigen::Triplet<double>> MacroSolver::jacobian_at(const std::vector<double>& a,
                                                             const std::vector<double>& a_prev,
                                                             double t, double dt) {
  solve_cells(a, a_prev, dt, false);
  return assemble(a, a_prev, t, dt, /*with_tangent=*/true, false).tangent;
}

}  // namespace mqs
