#pragma once

namespace gncqr {

/// Tick (pinball) loss rho_tau(u) = u * (tau - 1{u < 0}).
inline double tick_loss(double u, double tau) { return u * (tau - (u < 0 ? 1.0 : 0.0)); }

}  // namespace gncqr
