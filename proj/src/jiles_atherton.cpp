#include "mqs/jiles_atherton.hpp"

#include <cmath>

namespace mqs {

double langevin(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-4) return x / 3.0 - x * x * x / 45.0;
  if (ax > 350.0) return x > 0 ? 1.0 - 1.0 / x : -1.0 - 1.0 / x;
  return 1.0 / std::tanh(x) - 1.0 / x;
}

double langevin_prime(double x) {
  const double ax = std::abs(x);
  if (ax < 1e-4) return 1.0 / 3.0 - x * x / 15.0;
  if (ax > 350.0) return 1.0 / (x * x);
  const double s = std::sinh(x);
  return 1.0 / (x * x) - 1.0 / (s * s);
}

namespace {

HVec anhysteretic(const HVec& h_e, const JilesAthertonParams& p) {
  const double n = h_e.norm();
  if (n < 1e-300) return HVec::Zero();
  // M_an = Ms L(|h_e|/a) h_e/|h_e|; smooth through the origin since
  // L(x) ~ x/3.
  return (p.Ms * langevin(n / p.a) / n) * h_e;
}

struct StepContext {
  HVec h_e_old;
  HVec m_irr_old;
  const JilesAthertonParams* p;
};

// One-increment magnetization update: explicit in the new effective field.
// The irreversible part moves towards the anhysteretic value by the
// non-negative projection of the effective-field increment, scaled by the
// pinning parameter k.
HVec magnetization_at(const HVec& h_e, const StepContext& ctx) {
  const JilesAthertonParams& p = *ctx.p;
  const HVec m_an = anhysteretic(h_e, p);
  HVec m_irr = ctx.m_irr_old;
  const HVec diff = m_an - ctx.m_irr_old;
  const double dn = diff.norm();
  if (dn > 1e-12 * p.Ms) {
    const HVec u = diff / dn;
    const double drive = u.dot(h_e - ctx.h_e_old);
    if (drive > 0.0) {
      const double zeta = std::min(drive / p.k, 1.0);
      m_irr += zeta * diff;
    }
  }
  return p.c * m_an + (1.0 - p.c) * m_irr;
}

}  // namespace

JAResult ja_update(const BVec& b_target, const JAState& state, const JilesAthertonParams& p, double mu0) {
  if (!b_target.allFinite()) throw MaterialError("Jiles-Atherton: non-finite flux density target");

  StepContext ctx;
  ctx.p = &p;
  ctx.h_e_old = state.h_prev + p.alpha * state.M;
  if (1.0 - p.c > 1e-12) {
    const HVec m_an_old = anhysteretic(ctx.h_e_old, p);
    ctx.m_irr_old = (state.M - p.c * m_an_old) / (1.0 - p.c);
  } else {
    ctx.m_irr_old = state.M;
  }

  // With h = h_e - alpha M, the flux density is an explicit function of the
  // new effective field: b(h_e) = mu0 (h_e + (1 - alpha) M(h_e)).
  auto b_of = [&](const HVec& h_e) -> BVec {
    return mu0 * (h_e + (1.0 - p.alpha) * magnetization_at(h_e, ctx));
  };

  HVec h_e = ctx.h_e_old;
  BVec r = b_of(h_e) - b_target;
  double rn = r.norm();
  const double tol = 1e-13 + 1e-11 * b_target.norm();
  bool converged = rn <= tol;
  int dead_searches = 0;

  for (int it = 0; it < 50 && !converged; ++it) {
    const double dh = 1e-6 * std::max({h_e.norm(), p.a, 1.0});
    Tangent2 jac;  // db/dh_e by forward differences
    for (int c = 0; c < 2; ++c) {
      HVec hp = h_e;
      hp[c] += dh;
      jac.col(c) = (b_of(hp) - (r + b_target)) / dh;
    }
    const HVec step = jac.fullPivLu().solve(-r);
    double lambda = 1.0;
    bool accepted = false;
    for (int halve = 0; halve < 30; ++halve) {
      const HVec ht = h_e + lambda * step;
      const double rt = (b_of(ht) - b_target).norm();
      if (rt < rn || rt <= tol) {
        h_e = ht;
        rn = rt;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      // The residual is piecewise smooth (reversal kink); nudge across and
      // let the next iteration recover.
      h_e += (lambda * 2.0) * step;
      rn = (b_of(h_e) - b_target).norm();
      if (++dead_searches > 5)
        throw MaterialError("Jiles-Atherton inversion stalled, residual " + std::to_string(rn) + " T");
    } else {
      dead_searches = 0;
    }
    r = b_of(h_e) - b_target;
    converged = rn <= tol;
  }
  if (!converged)
    throw MaterialError("Jiles-Atherton inversion did not converge, residual " + std::to_string(rn) + " T");

  const HVec m = magnetization_at(h_e, ctx);
  const HVec h = h_e - p.alpha * m;

  // Consistent tangent with the step history frozen: central differences of
  // the explicit magnetization map.
  const double dh = 1e-6 * std::max({h_e.norm(), p.a, 1.0});
  Tangent2 dm_dhe;
  for (int c = 0; c < 2; ++c) {
    HVec hp = h_e, hm = h_e;
    hp[c] += dh;
    hm[c] -= dh;
    dm_dhe.col(c) = (magnetization_at(hp, ctx) - magnetization_at(hm, ctx)) / (2.0 * dh);
  }
  const Tangent2 dh_dhe = Tangent2::Identity() - p.alpha * dm_dhe;
  const Tangent2 db_dhe = mu0 * (Tangent2::Identity() + (1.0 - p.alpha) * dm_dhe);

  JAResult out;
  out.h = h;
  out.dh_db = dh_dhe * db_dhe.fullPivLu().inverse();
  out.state.M = m;
  out.state.h_prev = h;
  return out;
}

}  // namespace mqs
