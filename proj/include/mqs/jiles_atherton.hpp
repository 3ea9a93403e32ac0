#pragma once

#include "mqs/materials.hpp"
#include "mqs/types.hpp"

namespace mqs {

/// History carried by one quadrature point: magnetization and the last
/// converged magnetic field.  Solvers commit a state only when a time step
/// is accepted; Newton trial evaluations work on copies.
struct JAState {
  HVec M = HVec::Zero();
  HVec h_prev = HVec::Zero();
};

struct JAResult {
  HVec h;
  Tangent2 dh_db;
  JAState state;
};

/// Inverts the vector Jiles-Atherton relation b = mu0 (h + M(h, history))
/// for h with a damped Newton iteration, advancing the magnetization by one
/// increment of the differential law.  Returns the field, the consistent
/// tangent dh/db, and the advanced state (not committed anywhere).
///
/// The vectorization is isotropic: scalar model quantities are evaluated on
/// |h_e| with h_e = h + alpha*M, and the irreversible increment follows the
/// direction of (M_an - M_irr), counting only its non-negative projection
/// on the effective-field increment.
///
/// Throws MaterialError if the inversion has not converged after 50
/// iterations.
JAResult ja_update(const BVec& b_target, const JAState& state, const JilesAthertonParams& p,
                   double mu0 = MU0);

/// Langevin function coth(x) - 1/x with a series expansion near zero.
double langevin(double x);
double langevin_prime(double x);

}  // namespace mqs
