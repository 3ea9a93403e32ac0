#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mqs {

// Magnetic flux density (T) and magnetic field (A/m), in-plane components.
using BVec = Eigen::Vector2d;
using HVec = Eigen::Vector2d;

// Consistent material tangent, stored as the Jacobian of the b->h map:
// dh = T * db, i.e. T(r, c) = d h_r / d b_c.  A finite-difference
// perturbation along direction c fills column c.
using Tangent2 = Eigen::Matrix2d;

inline constexpr double MU0 = 4.0e-7 * 3.14159265358979323846;
inline constexpr double NU0 = 1.0 / MU0;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};
struct GeometryError : Error {
  using Error::Error;
};
struct MaterialError : Error {
  using Error::Error;
};
struct SolverError : Error {
  using Error::Error;
};
struct ProbeError : Error {
  using Error::Error;
};
struct MetricsError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

}  // namespace mqs
