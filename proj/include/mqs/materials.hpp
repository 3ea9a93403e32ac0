#pragma once

#include <map>
#include <utility>

#include "mqs/mesh.hpp"
#include "mqs/types.hpp"

namespace mqs {

/// Saturating exponential law h = (alpha + beta exp(gamma |b|^2)) b.
struct ExpLawParams {
  double alpha = 388.0;   // A/m per T
  double beta = 0.3774;   // A/m per T
  double gamma = 2.97;    // 1/T^2
};

HVec exp_law_h(const BVec& b, const ExpLawParams& p);
Tangent2 exp_law_tangent(const BVec& b, const ExpLawParams& p);

struct LinearLawParams {
  double nu = NU0;  // reluctivity, A/m per T
};

struct JilesAthertonParams {
  double Ms = 1145500.0;   // saturation magnetization, A/m
  double a = 59.0;         // anhysteretic shape, A/m
  double k = 99.0;         // pinning, A/m
  double c = 0.55;         // reversibility weight
  double alpha = 1.3e-4;   // mean-field coupling
};

enum class LawKind { Linear, Exponential, JilesAtherton };

/// One constitutive law with its parameters.  Stateless evaluation covers
/// the reversible kinds; the Jiles-Atherton law additionally carries a
/// per-quadrature-point state owned by the solvers.
struct MagneticLawSpec {
  LawKind kind = LawKind::Linear;
  LinearLawParams linear;
  ExpLawParams exp;
  JilesAthertonParams ja;

  static MagneticLawSpec make_linear(double nu) {
    MagneticLawSpec s;
    s.kind = LawKind::Linear;
    s.linear.nu = nu;
    return s;
  }
  static MagneticLawSpec make_exp(const ExpLawParams& p) {
    MagneticLawSpec s;
    s.kind = LawKind::Exponential;
    s.exp = p;
    return s;
  }
  static MagneticLawSpec make_ja(const JilesAthertonParams& p) {
    MagneticLawSpec s;
    s.kind = LawKind::JilesAtherton;
    s.ja = p;
    return s;
  }
};

/// Evaluates a stateless (reversible) law; throws MaterialError for
/// Jiles-Atherton, which must go through ja_update with its state.
std::pair<HVec, Tangent2> eval_law(const MagneticLawSpec& law, const BVec& b);

/// Piecewise-constant electric conductivity: grains conduct, everything
/// else is a perfect insulator.
double conductivity(const RegionTag& tag, double grain_sigma);

/// Region -> (law, conductivity) binding for one run.
struct MaterialMap {
  MagneticLawSpec grain_law;                      // applied to every GRAIN(k)
  MagneticLawSpec background_law = MagneticLawSpec::make_linear(NU0);
  std::map<int, MagneticLawSpec> grain_overrides; // per-grain laws (oracle cells)
  double grain_sigma = 5e6;

  const MagneticLawSpec& law_for(const RegionTag& tag) const;
  double sigma_for(const RegionTag& tag) const { return conductivity(tag, grain_sigma); }
};

}  // namespace mqs
