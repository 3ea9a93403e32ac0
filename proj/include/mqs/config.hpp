#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mqs/geometry.hpp"
#include "mqs/materials.hpp"
#include "mqs/types.hpp"

namespace mqs {

/// Sinusoidal source current density in the inductors, j_s = j_s0 sin(2 pi f t),
/// top inductor positive, bottom negative.
struct SourceWaveform {
  double j_s0 = 35e7;       // A/m^2
  double frequency = 50.0;  // Hz
  double value(double t) const {
    constexpr double two_pi = 6.283185307179586476925286766559;
    return j_s0 * std::sin(two_pi * frequency * t);
  }
  double period() const { return 1.0 / frequency; }
};

struct TimeGrid {
  double t0 = 0.0;
  double t_end = 0.0;
  int n_steps = 0;
  double dt() const { return (t_end - t0) / n_steps; }
  double time(int k) const { return t0 + (t_end - t0) * k / n_steps; }
};

enum class RunMode { Multiscale, Reference, Static };
enum class MacroSigmaMode { Zero, Computed };

/// Full run configuration with the benchmark defaults.
struct RunConfig {
  // [geometry]
  SmcGeometry geometry;
  int macro_divisions = 4;
  int cell_refine = 3;
  int reference_refine = 2;

  // [material]
  LawKind law = LawKind::Exponential;
  double sigma = 5e6;
  ExpLawParams exp;
  JilesAthertonParams ja;
  double linear_nu = NU0;

  // [source]
  SourceWaveform source;

  // [discretization]
  int steps_per_period = 40;
  double n_periods = 1.5;
  double macro_tol = 1e-6;
  int macro_max_iter = 25;
  double cell_tol = 1e-8;
  int cell_max_iter = 30;
  double perturbation_b = 1e-4;
  MacroSigmaMode macro_sigma_mode = MacroSigmaMode::Zero;
  bool reference_grain_constraints = true;
  bool dt_halving = true;

  // [output]
  std::string output_dir = "out";
  bool dump_fields = false;
  int dump_cell_gp = -1;
  std::vector<Eigen::Vector2d> probes;

  int threads = 0;  // 0: hardware concurrency (capped at 8)

  TimeGrid time_grid() const {
    TimeGrid g;
    g.t0 = 0.0;
    g.t_end = n_periods * source.period();
    g.n_steps = std::max(1, static_cast<int>(std::lround(steps_per_period * n_periods)));
    return g;
  }
  MaterialMap material_map() const;
  int resolved_threads() const;
};

/// Parses the flat `key = value` sections config format ('#' comments).
/// Unknown keys, duplicates, malformed numbers and trailing unit suffixes
/// are errors carrying the line number.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");

/// Full echo of the configuration (defaults included) in the same format,
/// plus derived quantities as comments; re-parsing it reproduces the run.
std::string metadata_text(const RunConfig& cfg);
void write_metadata(const RunConfig& cfg, const std::string& path);

}  // namespace mqs
