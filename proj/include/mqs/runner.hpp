#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mqs/config.hpp"
#include "mqs/macro_solver.hpp"
#include "mqs/metrics.hpp"
#include "mqs/reference_solver.hpp"

namespace mqs {

/// Runs one mode and writes losses.csv, probes.csv, metadata.txt, run.log
/// (and fields.csv / cell_fields.csv when dumping) into `dir`.
void run_multiscale_to_dir(const RunConfig& cfg, const std::string& dir);
void run_reference_to_dir(const RunConfig& cfg, const std::string& dir);
void run_static_to_dir(const RunConfig& cfg, const std::string& dir);

void write_losses_csv(const LossSeries& losses, const std::string& path);
LossSeries read_losses_csv(const std::string& path);

/// Probe CSV rows: probe_id, kind, x_m, y_m, step, t_s, bx, by with kind in
/// {macro, meso, ref}.
void write_probes_csv(const std::vector<ProbeSeries>& probes, const std::vector<double>& times,
                      const std::string& kind_macro, const std::string& path);

struct ProbeSeriesData {
  double x = 0.0, y = 0.0;
  std::vector<double> times;
  std::vector<double> bnorm;
};
/// Reads back the series of one kind at the probe nearest to (x, y).
ProbeSeriesData read_probe_series(const std::string& path, const std::string& kind, double x,
                                  double y);

/// Input probe list CSV with header x_m, y_m.
std::vector<Eigen::Vector2d> read_probe_list(const std::string& path);

/// Loss and per-probe field errors between two run directories.
ErrorReport compare_dirs(const std::string& ref_dir, const std::string& ms_dir,
                         const std::vector<Eigen::Vector2d>& probes);

struct SweepRow {
  double frequency = 0.0;
  double err_p = 0.0;
  bool ok = false;
  std::string message;
};

using SweepRunner = std::function<std::pair<LossSeries, LossSeries>(const RunConfig&)>;

/// Err_P per frequency; failed rows are reported and skipped.  The default
/// runner executes the multiscale and reference solvers; tests may stub it.
std::vector<SweepRow> frequency_sweep(const RunConfig& base, const std::vector<double>& freqs,
                                      const SweepRunner& runner = {});
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace mqs
