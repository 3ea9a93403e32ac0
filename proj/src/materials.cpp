#include "mqs/materials.hpp"

#include <cmath>

namespace mqs {

namespace {

// exp() argument guard; beyond this the law is out of its physical range.
double guarded_exp(double arg) {
  if (arg > 700.0) throw MaterialError("exponential law overflow: gamma*|b|^2 = " + std::to_string(arg));
  return std::exp(arg);
}

}  // namespace

HVec exp_law_h(const BVec& b, const ExpLawParams& p) {
  const double nu = p.alpha + p.beta * guarded_exp(p.gamma * b.squaredNorm());
  return nu * b;
}

Tangent2 exp_law_tangent(const BVec& b, const ExpLawParams& p) {
  const double e = guarded_exp(p.gamma * b.squaredNorm());
  const double nu = p.alpha + p.beta * e;
  return nu * Tangent2::Identity() + (2.0 * p.beta * p.gamma * e) * (b * b.transpose());
}

std::pair<HVec, Tangent2> eval_law(const MagneticLawSpec& law, const BVec& b) {
  switch (law.kind) {
    case LawKind::Linear:
      return {law.linear.nu * b, law.linear.nu * Tangent2::Identity()};
    case LawKind::Exponential:
      return {exp_law_h(b, law.exp), exp_law_tangent(b, law.exp)};
    case LawKind::JilesAtherton:
      throw MaterialError("Jiles-Atherton law requires state; use ja_update");
  }
  throw MaterialError("unknown law kind");
}

double conductivity(const RegionTag& tag, double grain_sigma) {
  return tag.is_grain() ? grain_sigma : 0.0;
}

const MagneticLawSpec& MaterialMap::law_for(const RegionTag& tag) const {
  if (tag.is_grain()) {
    auto it = grain_overrides.find(tag.grain);
    return it != grain_overrides.end() ? it->second : grain_law;
  }
  return background_law;
}

}  // namespace mqs
