#include "mqs/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace mqs {

std::vector<double> resample_linear(const std::vector<double>& times_src,
                                    const std::vector<double>& values_src,
                                    const std::vector<double>& times_dst) {
  if (times_src.size() != values_src.size() || times_src.empty())
    throw MetricsError("resample: inconsistent or empty source series");
  std::vector<double> out(times_dst.size());
  for (size_t i = 0; i < times_dst.size(); ++i) {
    const double t = times_dst[i];
    if (t <= times_src.front()) {
      out[i] = values_src.front();
    } else if (t >= times_src.back()) {
      out[i] = values_src.back();
    } else {
      const auto it = std::upper_bound(times_src.begin(), times_src.end(), t);
      const size_t k = it - times_src.begin();
      const double w = (t - times_src[k - 1]) / (times_src[k] - times_src[k - 1]);
      out[i] = (1.0 - w) * values_src[k - 1] + w * values_src[k];
    }
  }
  return out;
}

double trapezoid(const std::vector<double>& times, const std::vector<double>& values) {
  if (times.size() != values.size()) throw MetricsError("trapezoid: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i + 1 < times.size(); ++i)
    s += 0.5 * (values[i] + values[i + 1]) * (times[i + 1] - times[i]);
  return s;
}

double loss_error(const LossSeries& p_m, const LossSeries& p_ref) {
  if (p_ref.times.size() != p_ref.values.size() || p_ref.times.empty())
    throw MetricsError("loss_error: bad reference series");
  std::vector<double> m = (p_m.times == p_ref.times)
                              ? p_m.values
                              : resample_linear(p_m.times, p_m.values, p_ref.times);
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < p_ref.values.size(); ++i) {
    num = std::max(num, std::abs(m[i] - p_ref.values[i]));
    den = std::max(den, std::abs(p_ref.values[i]));
  }
  if (den == 0.0) throw MetricsError("loss_error: reference losses are identically zero");
  return num / den;
}

double field_error(const std::vector<double>& times_m, const std::vector<double>& values_m,
                   const std::vector<double>& times_ref, const std::vector<double>& values_ref) {
  if (times_ref.size() != values_ref.size() || times_ref.empty())
    throw MetricsError("field_error: bad reference series");
  std::vector<double> m =
      (times_m == times_ref) ? values_m : resample_linear(times_m, values_m, times_ref);
  std::vector<double> diff2(times_ref.size()), ref2(times_ref.size());
  for (size_t i = 0; i < times_ref.size(); ++i) {
    const double d = m[i] - values_ref[i];
    diff2[i] = d * d;
    ref2[i] = values_ref[i] * values_ref[i];
  }
  const double den = trapezoid(times_ref, ref2);
  if (den == 0.0) throw MetricsError("field_error: reference field norm is zero");
  return std::sqrt(trapezoid(times_ref, diff2) / den);
}

}  // namespace mqs
