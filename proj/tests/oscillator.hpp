#pragma once

// Harmonic oscillator qdot = p, pdot = -omega^2 q as a minimal system for
// exercising the generic steppers.

#include "hodgewave/timeloop.hpp"

namespace hodgewave::testing {

struct Oscillator {
  double omega2 = 1.0;
  int dim() const { return 2; }
  int half_dim() const { return 1; }
  VecX u_part(const VecX& y) const { return {y[0]}; }
  VecX p_part(const VecX& y) const { return {y[1]}; }
  VecX join(const VecX& q, const VecX& p) const { return {q[0], p[0]}; }
  VecX rhs(double, const VecX& y, StageTraces* = nullptr, StageStats* = nullptr) const {
    return {y[1], -omega2 * y[0]};
  }
  VecX f_p(double, const VecX&, const VecX& p) const { return p; }
  VecX pdot(double, const VecX& q, StageTraces* = nullptr, StageStats* = nullptr) const {
    return {-omega2 * q[0]};
  }
  VecX solve_stage(double, double c, const VecX& base, StageTraces* = nullptr,
                   StageStats* = nullptr) const {
    double det = 1.0 + c * c * omega2;
    return {(base[0] + c * base[1]) / det, (base[1] - c * omega2 * base[0]) / det};
  }
  double energy(const VecX& y) const { return 0.5 * (y[1] * y[1] + omega2 * y[0] * y[0]); }
  VecX exact(double t, const VecX& y0) const {
    double w = std::sqrt(omega2);
    return {y0[0] * std::cos(w * t) + y0[1] / w * std::sin(w * t),
            -y0[0] * w * std::sin(w * t) + y0[1] * std::cos(w * t)};
  }
};

}  // namespace hodgewave::testing
