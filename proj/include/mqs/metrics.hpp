#pragma once

#include <vector>

#include "mqs/types.hpp"

namespace mqs {

/// Joule losses per meter of extrusion depth over a time grid.
struct LossSeries {
  std::vector<double> times;   // s
  std::vector<double> values;  // W/m
};

/// Relative L-infinity(0,T) loss error ||P_m - P_ref||_inf / ||P_ref||_inf.
/// Series on different grids are compared after linear resampling of P_m
/// onto the reference grid.  Throws MetricsError when the reference maximum
/// is zero.
double loss_error(const LossSeries& p_m, const LossSeries& p_ref);

/// Relative L2(0,T) error of two scalar time series (trapezoidal rule),
/// resampling the first onto the second grid when needed.  Throws
/// MetricsError when the reference norm is zero.
double field_error(const std::vector<double>& times_m, const std::vector<double>& values_m,
                   const std::vector<double>& times_ref, const std::vector<double>& values_ref);

/// Piecewise-linear resampling; times must be sorted.  Outside the source
/// range the boundary value is held.
std::vector<double> resample_linear(const std::vector<double>& times_src,
                                    const std::vector<double>& values_src,
                                    const std::vector<double>& times_dst);

double trapezoid(const std::vector<double>& times, const std::vector<double>& values);

struct ProbeErrorRow {
  double x = 0.0, y = 0.0;
  double err_meso = 0.0;   // Err_m^b at this probe
  double err_macro = 0.0;  // Err_M^b at this probe
};

struct ErrorReport {
  double err_p = 0.0;
  std::vector<ProbeErrorRow> probes;
};

}  // namespace mqs
