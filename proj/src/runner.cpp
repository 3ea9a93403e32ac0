#include "mqs/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include "mqs/csv.hpp"

namespace mqs {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

void write_run_log(const std::vector<StepDiagnostics>& diags, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  for (const auto& d : diags) {
    os << "step " << d.step << ", t " << format_double(d.time) << ", NR_iters " << d.newton_solves
       << ", residual_history";
    for (double r : d.residual_history) os << " " << format_double(r);
    os << ", cell_failures 0";
    if (d.dt_halvings > 0) os << ", dt_halvings " << d.dt_halvings;
    os << "\n";
  }
}

std::string probe_row(int id, const char* kind, const Eigen::Vector2d& p, int step, double t,
                      const BVec& b) {
  std::ostringstream os;
  os << id << ", " << kind << ", " << format_double(p.x()) << ", " << format_double(p.y()) << ", "
     << step << ", " << format_double(t) << ", " << format_double(b.x()) << ", "
     << format_double(b.y());
  return os.str();
}

// Field CSV: step, t_s, tri_id, cx, cy, bx, by, jz (one row per triangle
// per recorded time).
void write_fields_csv(const TriMesh& mesh, const P1Geometry& geom,
                      const std::vector<double>& times,
                      const std::vector<std::vector<double>>& az_history,
                      const std::function<double(int step, int tri)>& jz_of,
                      const std::string& path) {
  std::vector<std::string> lines;
  lines.reserve(1 + times.size() * mesh.tris.size());
  lines.push_back("step, t_s, tri_id, cx, cy, bx, by, jz");
  for (size_t s = 0; s < times.size(); ++s) {
    for (int t = 0; t < static_cast<int>(mesh.tris.size()); ++t) {
      const BVec b = geom.flux_density(mesh, t, az_history[s]);
      const Eigen::Vector2d c = mesh.centroid(t);
      std::ostringstream os;
      os << s << ", " << format_double(times[s]) << ", " << t << ", " << format_double(c.x())
         << ", " << format_double(c.y()) << ", " << format_double(b.x()) << ", "
         << format_double(b.y()) << ", " << format_double(jz_of(static_cast<int>(s), t));
      lines.push_back(os.str());
    }
  }
  write_lines(path, lines);
}

void write_cell_dump_csv(const RunConfig& cfg, const CellDump& dump, const TriMesh& cell_mesh,
                         const P1Geometry& cell_geom, const std::vector<double>& times,
                         const std::string& path) {
  std::vector<std::string> lines;
  lines.push_back("gp_id, step, t_s, tri_id, cx, cy, a_zc0, a_zc1, a_zc2, bx, by, jz");
  const MaterialMap mm = cfg.material_map();
  const std::vector<int> grains = cell_mesh.grain_ids();
  for (size_t s = 0; s < dump.a_zc.size(); ++s) {
    const auto& a = dump.a_zc[s];
    const auto& a_prev = dump.a_zc[s > 0 ? s - 1 : 0];
    const CellSources& src = dump.sources[s];
    for (int t = 0; t < static_cast<int>(cell_mesh.tris.size()); ++t) {
      const BVec b = src.b_M + cell_geom.flux_density(cell_mesh, t, a);
      const Eigen::Vector2d c = cell_mesh.centroid(t);
      const double sigma = mm.sigma_for(cell_mesh.tris[t].region);
      double jz = 0.0;
      if (sigma > 0.0 && s > 0) {
        const auto& v = cell_mesh.tris[t].v;
        const double da_dt = ((a[v[0]] + a[v[1]] + a[v[2]]) - (a_prev[v[0]] + a_prev[v[1]] + a_prev[v[2]])) /
                             (3.0 * src.dt);
        const int slot = static_cast<int>(
            std::lower_bound(grains.begin(), grains.end(), cell_mesh.tris[t].region.grain) -
            grains.begin());
        const double uc = dump.u_c[s].size() > slot ? dump.u_c[s][static_cast<int>(slot)] : 0.0;
        jz = sigma * (cell_source_field(src, c) - da_dt - uc);
      }
      std::ostringstream os;
      os << dump.gp << ", " << s << ", " << format_double(times[s]) << ", " << t << ", "
         << format_double(c.x()) << ", " << format_double(c.y()) << ", "
         << format_double(a[cell_mesh.tris[t].v[0]]) << ", " << format_double(a[cell_mesh.tris[t].v[1]])
         << ", " << format_double(a[cell_mesh.tris[t].v[2]]) << ", " << format_double(b.x()) << ", "
         << format_double(b.y()) << ", " << format_double(jz);
      lines.push_back(os.str());
    }
  }
  write_lines(path, lines);
}

}  // namespace

void write_losses_csv(const LossSeries& losses, const std::string& path) {
  std::vector<std::string> lines;
  lines.reserve(losses.times.size() + 1);
  lines.push_back("t_s, p_w_per_m");
  for (size_t i = 0; i < losses.times.size(); ++i)
    lines.push_back(format_double(losses.times[i]) + ", " + format_double(losses.values[i]));
  write_lines(path, lines);
}

LossSeries read_losses_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int ct = table.column("t_s");
  const int cp = table.column("p_w_per_m");
  LossSeries out;
  for (const auto& row : table.rows) {
    out.times.push_back(parse_double(row[ct], "t_s"));
    out.values.push_back(parse_double(row[cp], "p_w_per_m"));
  }
  return out;
}

void write_probes_csv(const std::vector<ProbeSeries>& probes, const std::vector<double>& times,
                      const std::string& kind_macro, const std::string& path) {
  std::vector<std::string> lines;
  lines.push_back("probe_id, kind, x_m, y_m, step, t_s, bx, by");
  for (size_t p = 0; p < probes.size(); ++p) {
    const ProbeSeries& ps = probes[p];
    for (size_t s = 0; s < ps.macro_b.size(); ++s)
      lines.push_back(probe_row(static_cast<int>(p), kind_macro.c_str(), ps.location,
                                static_cast<int>(s), times[s], ps.macro_b[s]));
    for (size_t s = 0; s < ps.meso_b.size(); ++s)
      lines.push_back(
          probe_row(static_cast<int>(p), "meso", ps.location, static_cast<int>(s), times[s], ps.meso_b[s]));
  }
  write_lines(path, lines);
}

ProbeSeriesData read_probe_series(const std::string& path, const std::string& kind, double x,
                                  double y) {
  const CsvTable table = read_csv(path);
  const int ck = table.column("kind");
  const int cx = table.column("x_m");
  const int cy = table.column("y_m");
  const int ct = table.column("t_s");
  const int cbx = table.column("bx");
  const int cby = table.column("by");

  double best = std::numeric_limits<double>::max();
  double bx = 0.0, by = 0.0;
  for (const auto& row : table.rows) {
    if (row[ck] != kind) continue;
    const double px = parse_double(row[cx], "x_m");
    const double py = parse_double(row[cy], "y_m");
    const double d = (px - x) * (px - x) + (py - y) * (py - y);
    if (d < best) {
      best = d;
      bx = px;
      by = py;
    }
  }
  if (best == std::numeric_limits<double>::max())
    throw IoError("no '" + kind + "' probe rows in " + path);

  ProbeSeriesData out;
  out.x = bx;
  out.y = by;
  for (const auto& row : table.rows) {
    if (row[ck] != kind) continue;
    if (parse_double(row[cx], "x_m") != bx || parse_double(row[cy], "y_m") != by) continue;
    out.times.push_back(parse_double(row[ct], "t_s"));
    const double vx = parse_double(row[cbx], "bx");
    const double vy = parse_double(row[cby], "by");
    out.bnorm.push_back(std::sqrt(vx * vx + vy * vy));
  }
  return out;
}

std::vector<Eigen::Vector2d> read_probe_list(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int cx = table.column("x_m");
  const int cy = table.column("y_m");
  std::vector<Eigen::Vector2d> out;
  for (const auto& row : table.rows)
    out.push_back({parse_double(row[cx], "x_m"), parse_double(row[cy], "y_m")});
  return out;
}

void run_multiscale_to_dir(const RunConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  MacroSolver solver(cfg);
  const MacroRunResult result = solver.run_dynamic();
  write_metadata(cfg, dir + "/metadata.txt");
  write_losses_csv(result.losses, dir + "/losses.csv");
  write_probes_csv(result.probes, result.times, "macro", dir + "/probes.csv");
  write_run_log(result.diagnostics, dir + "/run.log");
  if (cfg.dump_fields) {
    write_fields_csv(solver.mesh(), solver.geometry(), result.times, result.az_history,
                     [](int, int) { return 0.0; }, dir + "/fields.csv");
  }
  if (result.cell_dump.gp >= 0) {
    const TriMesh cell_mesh = build_cell_mesh(cfg.geometry, cfg.cell_refine);
    const P1Geometry cell_geom(cell_mesh);
    write_cell_dump_csv(cfg, result.cell_dump, cell_mesh, cell_geom, result.times,
                        dir + "/cell_fields.csv");
  }
}

void run_reference_to_dir(const RunConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  ReferenceSolver solver(cfg);
  double skin = 0.0;
  if (!solver.resolution_ok(&skin))
    std::cerr << "warning: reference mesh under-resolves the skin depth (" << skin << " m)\n";
  const ReferenceRunResult result = solver.run();
  write_metadata(cfg, dir + "/metadata.txt");
  write_losses_csv(result.losses, dir + "/losses.csv");
  write_probes_csv(result.probes, result.times, "ref", dir + "/probes.csv");
  write_run_log(result.diagnostics, dir + "/run.log");
  if (cfg.dump_fields) {
    const TimeGrid grid = cfg.time_grid();
    const auto& mesh = solver.mesh();
    const MaterialMap mm = cfg.material_map();
    auto jz_of = [&](int step, int tri) {
      if (step == 0) return 0.0;
      const double sigma = mm.sigma_for(mesh.tris[tri].region);
      if (sigma == 0.0) return 0.0;
      const auto& v = mesh.tris[tri].v;
      const auto& a = result.az_history[step];
      const auto& ap = result.az_history[step - 1];
      const double da_dt =
          ((a[v[0]] + a[v[1]] + a[v[2]]) - (ap[v[0]] + ap[v[1]] + ap[v[2]])) / (3.0 * grid.dt());
      return -sigma * da_dt;
    };
    write_fields_csv(mesh, solver.geometry(), result.times, result.az_history, jz_of,
                     dir + "/fields.csv");
  }
}

void run_static_to_dir(const RunConfig& cfg, const std::string& dir) {
  ensure_dir(dir);
  MacroSolver solver(cfg);
  const MacroRunResult result = solver.run_static();
  write_metadata(cfg, dir + "/metadata.txt");
  write_losses_csv(result.losses, dir + "/losses.csv");
  write_probes_csv(result.probes, result.times, "macro", dir + "/probes.csv");
  write_run_log(result.diagnostics, dir + "/run.log");
  if (cfg.dump_fields) {
    write_fields_csv(solver.mesh(), solver.geometry(), result.times, result.az_history,
                     [](int, int) { return 0.0; }, dir + "/fields.csv");
  }
}

ErrorReport compare_dirs(const std::string& ref_dir, const std::string& ms_dir,
                         const std::vector<Eigen::Vector2d>& probes) {
  ErrorReport report;
  const LossSeries p_ref = read_losses_csv(ref_dir + "/losses.csv");
  const LossSeries p_ms = read_losses_csv(ms_dir + "/losses.csv");
  report.err_p = loss_error(p_ms, p_ref);
  for (const auto& probe : probes) {
    const ProbeSeriesData ref = read_probe_series(ref_dir + "/probes.csv", "ref", probe.x(), probe.y());
    const ProbeSeriesData meso =
        read_probe_series(ms_dir + "/probes.csv", "meso", probe.x(), probe.y());
    const ProbeSeriesData macro =
        read_probe_series(ms_dir + "/probes.csv", "macro", probe.x(), probe.y());
    ProbeErrorRow row;
    row.x = probe.x();
    row.y = probe.y();
    row.err_meso = field_error(meso.times, meso.bnorm, ref.times, ref.bnorm);
    row.err_macro = field_error(macro.times, macro.bnorm, ref.times, ref.bnorm);
    report.probes.push_back(row);
  }
  return report;
}

std::vector<SweepRow> frequency_sweep(const RunConfig& base, const std::vector<double>& freqs,
                                      const SweepRunner& runner) {
  SweepRunner effective = runner;
  if (!effective) {
    effective = [](const RunConfig& cfg) {
      MacroSolver ms(cfg);
      const MacroRunResult m = ms.run_dynamic();
      ReferenceSolver rs(cfg);
      const ReferenceRunResult r = rs.run();
      return std::make_pair(m.losses, r.losses);
    };
  }
  std::vector<SweepRow> rows;
  for (double f : freqs) {
    RunConfig cfg = base;
    cfg.source.frequency = f;
    SweepRow row;
    row.frequency = f;
    try {
      auto [pm, pref] = effective(cfg);
      row.err_p = loss_error(pm, pref);
      row.ok = true;
    } catch (const Error& e) {
      row.message = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::vector<std::string> lines;
  lines.push_back("f_hz, err_p");
  for (const auto& r : rows)
    lines.push_back(format_double(r.frequency) + ", " + (r.ok ? format_double(r.err_p) : "nan"));
  write_lines(path, lines);
}

}  // namespace mqs
