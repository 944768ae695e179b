#pragma once

#include "hodgewave/systems.hpp"

namespace hodgewave {

struct ButcherTableau {
  std::string name;
  int s = 0;
  std::vector<double> a;  // s*s row-major
  std::vector<double> b, c;
  // second set for partitioned methods
  bool partitioned = false;
  std::vector<double> abar, bbar, cbar;

  double A(int i, int j) const { return a[std::size_t(i) * s + j]; }
  double Abar(int i, int j) const { return abar[std::size_t(i) * s + j]; }

  bool row_sum_consistent(double tol = 1e-13) const {
    for (int i = 0; i < s; ++i) {
      double sum = 0.0;
      for (int j = 0; j < s; ++j) sum += A(i, j);
      if (std::abs(sum - c[i]) > tol) return false;
    }
    return true;
  }
};

inline ButcherTableau midpoint_tableau() {
  return {"midpoint", 1, {0.5}, {1.0}, {0.5}, false, {}, {}, {}};
}

inline ButcherTableau forward_euler_tableau() {
  return {"forward_euler", 1, {0.0}, {1.0}, {0.0}, false, {}, {}, {}};
}

inline ButcherTableau gauss2_tableau() {
  const double s3 = std::sqrt(3.0) / 6.0;
  return {"gauss2",
          2,
          {0.25, 0.25 - s3, 0.25 + s3, 0.25},
          {0.5, 0.5},
          {0.5 - s3, 0.5 + s3},
          false,
          {},
          {},
          {}};
}

// Stormer/Verlet as a partitioned pair; the cbar = c version is symplectic
// for non-autonomous systems, the cbar = 1/2 variant is not.
inline ButcherTableau verlet_tableau() {
  ButcherTableau t;
  t.name = "verlet";
  t.s = 2;
  t.a = {0.0, 0.0, 0.5, 0.5};
  t.b = {0.5, 0.5};
  t.c = {0.0, 1.0};
  t.partitioned = true;
  t.abar = {0.5, 0.0, 0.5, 0.0};
  t.bbar = {0.5, 0.5};
  t.cbar = {0.0, 1.0};
  return t;
}

inline ButcherTableau verlet_tableau_nonsymplectic_cbar() {
  ButcherTableau t = verlet_tableau();
  t.name = "verlet_cbar_half";
  t.cbar = {0.5, 0.5};
  return t;
}

struct SymplecticCheck {
  bool symplectic = false;
  double max_violation = 0.0;
};

// b_i b_j - b_i a_ij - b_j a_ji = 0 conserves quadratic invariants.
inline SymplecticCheck check_symplectic_rk(const ButcherTableau& t, double tol = 1e-14) {
  double v = 0.0;
  for (int i = 0; i < t.s; ++i)
    for (int j = 0; j < t.s; ++j)
      v = std::max(v, std::abs(t.b[i] * t.b[j] - t.b[i] * t.A(i, j) - t.b[j] * t.A(j, i)));
  return {v <= tol, v};
}

// b_i bbar_j - b_i abar_ij - bbar_j a_ji = 0 with b = bbar and c = cbar
// conserves bilinear invariants.
inline SymplecticCheck check_symplectic_prk(const ButcherTableau& t, double tol = 1e-14) {
  require(t.partitioned, "check_symplectic_prk: tableau has no second set");
  double v = 0.0;
  for (int i = 0; i < t.s; ++i)
    for (int j = 0; j < t.s; ++j)
      v = std::max(v, std::abs(t.b[i] * t.bbar[j] - t.b[i] * t.Abar(i, j) -
                               t.bbar[j] * t.A(j, i)));
  for (int i = 0; i < t.s; ++i) {
    v = std::max(v, std::abs(t.b[i] - t.bbar[i]));
    v = std::max(v, std::abs(t.c[i] - t.cbar[i]));
  }
  return {v <= tol, v};
}

// Triple-jump composition weights for order 6 (palindromic, 7 substeps).
// Sum w = 1, sum w^3 = 0, sum w^5 = 0.
inline std::array<double, 7> yoshida6_weights() {
  const double w1 = -1.17767998417887;
  const double w2 = 0.235573213359357;
  const double w3 = 0.784513610477560;
  const double w0 = 1.0 - 2.0 * (w1 + w2 + w3);
  return {w3, w2, w1, w0, w1, w2, w3};
}

// ---- generic Runge-Kutta stepping ----

struct StepResult {
  VecX y;
  StepReport report;
};

// Diagonally implicit (or explicit) single-tableau RK step. Stage derivatives
// for implicit stages are recovered algebraically from the stage solve.
template <class System>
StepResult step_rk_dirk(const System& sys, const ButcherTableau& tab, double t, double dt,
                        const VecX& y0, bool want_traces) {
  const int s = tab.s;
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j)
      require(tab.A(i, j) == 0.0, "step_rk_generic: tableau is not diagonally implicit");
  StepResult out;
  out.report.b_weights = tab.b;
  out.report.stages.resize(want_traces ? s : 0);
  std::vector<VecX> kdot(s);
  for (int i = 0; i < s; ++i) {
    VecX base = y0;
    for (int j = 0; j < i; ++j) axpy(dt * tab.A(i, j), kdot[j], base);
    double ts = t + tab.c[i] * dt;
    StageTraces* tr = want_traces ? &out.report.stages[i] : nullptr;
    StageStats st;
    if (tab.A(i, i) == 0.0) {
      kdot[i] = sys.rhs(ts, base, tr, &st);
    } else {
      double coeff = dt * tab.A(i, i);
      VecX yi = sys.solve_stage(ts, coeff, base, tr, &st);
      kdot[i] = yi;
      axpy(-1.0, base, kdot[i]);
      scale(1.0 / coeff, kdot[i]);
    }
    out.report.absorb(st);
  }
  out.y = y0;
  for (int i = 0; i < s; ++i) axpy(dt * tab.b[i], kdot[i], out.y);
  return out;
}

// Fully implicit single-tableau RK step by fixed-point iteration on the
// stage values. Intended for gentle time steps; no shipped tableau relies on
// it in production runs.
template <class System>
StepResult step_rk_fixed_point(const System& sys, const ButcherTableau& tab, double t, double dt,
                               const VecX& y0, bool want_traces, double tol = 1e-13,
                               int maxit = 400) {
  const int s = tab.s;
  StepResult out;
  out.report.b_weights = tab.b;
  out.report.stages.resize(want_traces ? s : 0);
  std::vector<VecX> kdot(s, sys.rhs(t, y0, nullptr, nullptr));
  double scale_ref = std::max(1.0, norm(kdot[0]));
  for (int it = 0;; ++it) {
    double change = 0.0;
    for (int i = 0; i < s; ++i) {
      VecX yi = y0;
      for (int j = 0; j < s; ++j) axpy(dt * tab.A(i, j), kdot[j], yi);
      StageStats st;
      VecX knew = sys.rhs(t + tab.c[i] * dt, yi,
                          want_traces ? &out.report.stages[i] : nullptr, &st);
      out.report.absorb(st);
      VecX diff = knew;
      axpy(-1.0, kdot[i], diff);
      change = std::max(change, norm(diff));
      kdot[i] = std::move(knew);
    }
    if (change <= tol * scale_ref) break;
    if (it >= maxit)
      throw solver_error("step_rk_generic: stage fixed point stalled at change " +
                         std::to_string(change));
  }
  out.y = y0;
  for (int i = 0; i < s; ++i) axpy(dt * tab.b[i], kdot[i], out.y);
  return out;
}

// Partitioned RK step via Gauss-Seidel sweeps over the stages. For separable
// systems with explicit-pattern pairs (Verlet) this terminates in a few
// sweeps; stage traces come from the q-stage constraint solves.
template <class System>
StepResult step_prk(const System& sys, const ButcherTableau& tab, double t, double dt,
                    const VecX& y0, bool want_traces, double tol = 1e-12, int max_sweeps = 12) {
  require(tab.partitioned, "step_prk: tableau has no second set");
  const int s = tab.s;
  const int m = sys.half_dim();
  VecX q0 = sys.u_part(y0), p0 = sys.p_part(y0);
  StepResult out;
  out.report.b_weights = tab.b;
  out.report.stages.resize(want_traces ? s : 0);

  std::vector<VecX> qdot(s), pdot(s), qs(s), ps(s);
  {
    StageStats st;
    VecX pd0 = sys.pdot(t, q0, nullptr, &st);
    out.report.absorb(st);
    for (int i = 0; i < s; ++i) {
      qdot[i] = sys.f_p(t, q0, p0);
      pdot[i] = pd0;
    }
  }
  double ref = std::max({1.0, norm(q0), norm(p0)});
  for (int sweep = 0;; ++sweep) {
    double change = 0.0;
    for (int i = 0; i < s; ++i) {
      VecX qi = q0, pi = p0;
      for (int j = 0; j < s; ++j) {
        axpy(dt * tab.A(i, j), qdot[j], qi);
        axpy(dt * tab.Abar(i, j), pdot[j], pi);
      }
      StageStats st;
      VecX pd = sys.pdot(t + tab.cbar[i] * dt, qi,
                         want_traces ? &out.report.stages[i] : nullptr, &st);
      out.report.absorb(st);
      VecX qd = sys.f_p(t + tab.c[i] * dt, qi, pi);
      VecX dq = qd, dp = pd;
      axpy(-1.0, qdot[i], dq);
      axpy(-1.0, pdot[i], dp);
      change = std::max(change, std::max(norm(dq), norm(dp)));
      qdot[i] = std::move(qd);
      pdot[i] = std::move(pd);
      qs[i] = std::move(qi);
      ps[i] = std::move(pi);
    }
    if (change <= tol * ref) break;
    if (sweep >= max_sweeps)
      throw solver_error("step_prk: stage sweeps stalled at change " + std::to_string(change));
  }
  VecX q1 = q0, p1 = p0;
  for (int i = 0; i < s; ++i) {
    axpy(dt * tab.b[i], qdot[i], q1);
    axpy(dt * tab.bbar[i], pdot[i], p1);
  }
  (void)m;
  out.y = sys.join(q1, p1);
  return out;
}

template <class System>
StepResult step_rk_generic(const System& sys, const ButcherTableau& tab, double t, double dt,
                           const VecX& y0, bool want_traces = false) {
  if (tab.partitioned) {
    if constexpr (requires(const System& s2, double tt, const VecX& q) {
                    s2.pdot(tt, q, nullptr, nullptr);
                  }) {
      return step_prk(sys, tab, t, dt, y0, want_traces);
    } else {
      throw config_error("step_rk_generic: system does not support partitioned stepping");
    }
  }
  bool dirk = true;
  for (int i = 0; i < tab.s && dirk; ++i)
    for (int j = i + 1; j < tab.s; ++j)
      if (tab.A(i, j) != 0.0) dirk = false;
  if (dirk) return step_rk_dirk(sys, tab, t, dt, y0, want_traces);
  return step_rk_fixed_point(sys, tab, t, dt, y0, want_traces);
}

template <class System>
StepResult step_midpoint(const System& sys, double t, double dt, const VecX& y0,
                         bool want_traces = false) {
  return step_rk_dirk(sys, midpoint_tableau(), t, dt, y0, want_traces);
}

// Order-6 composition of implicit midpoint substeps. With traces requested,
// the report carries the seven substage bundles weighted by the composition
// weights, so the stepwise conservation-law identity telescopes across the
// substeps.
template <class System>
StepResult step_yoshida6(const System& sys, double t, double dt, const VecX& y0,
                         bool want_traces = false) {
  auto w = yoshida6_weights();
  StepResult out;
  out.y = y0;
  double tc = t;
  for (double wi : w) {
    StepResult sub = step_midpoint(sys, tc, wi * dt, out.y, want_traces);
    out.y = std::move(sub.y);
    out.report.newton_iters_max =
        std::max(out.report.newton_iters_max, sub.report.newton_iters_max);
    out.report.lin_residual_max =
        std::max(out.report.lin_residual_max, sub.report.lin_residual_max);
    if (want_traces) {
      out.report.b_weights.push_back(wi);
      out.report.stages.push_back(std::move(sub.report.stages[0]));
    }
    tc += wi * dt;
  }
  return out;
}

// ---- Stormer/Verlet for the multisymplectic system ----
//
// Step 1: constraint solves at u0, then p_half = p0 + dt/2 M^-1 L(t0, u0).
// Step 2: u1 = u0 + dt p_half.
// Step 3: constraint solves at u1, p1 = p_half + dt/2 M^-1 L(t1, u1).
// Only linear solves appear, also with a nonlinear source. The kick at u1 is
// cached so the next step reuses it, and leapfrog mode merges Step 3 with the
// following Step 1 into one full kick.
class VerletStepper {
 public:
  explicit VerletStepper(const MsWaveSystem& sys) : sys_(&sys) {}

  StepResult step(double t, double dt, const VecX& y0, bool want_traces = false) {
    const MsWaveSystem& sys = *sys_;
    VecX u0 = sys.u_part(y0), p0 = sys.p_part(y0);
    StepResult out;
    out.report.b_weights = {0.5, 0.5};
    out.report.stages.resize(want_traces ? 2 : 0);
    StageStats st;

    VecX kick0 = cached_kick(t, u0, want_traces ? &out.report.stages[0] : nullptr, &st);
    VecX ph = p0;
    axpy(0.5 * dt, kick0, ph);
    VecX u1 = u0;
    axpy(dt, ph, u1);
    VecX kick1 = fresh_kick(t + dt, u1, want_traces ? &out.report.stages[1] : nullptr, &st);
    VecX p1 = ph;
    axpy(0.5 * dt, kick1, p1);
    out.report.absorb(st);
    out.y = sys.join(u1, p1);
    return out;
  }

  void reset() { have_cache_ = false; }

 private:
  VecX cached_kick(double t, const VecX& u, StageTraces* tr, StageStats* st) {
    if (have_cache_ && cache_u_ == u) {
      if (tr) *tr = cache_traces_;
      return cache_kick_;
    }
    return fresh_kick(t, u, tr, st);
  }
  VecX fresh_kick(double t, const VecX& u, StageTraces* tr, StageStats* st) {
    StageTraces local;
    VecX k = sys_->pdot(t, u, &local, st);
    if (tr) *tr = local;
    cache_u_ = u;
    cache_kick_ = k;
    cache_traces_ = std::move(local);
    have_cache_ = true;
    return k;
  }
  const MsWaveSystem* sys_;
  bool have_cache_ = false;
  VecX cache_u_, cache_kick_;
  StageTraces cache_traces_;
};

inline StepResult step_verlet(const MsWaveSystem& sys, double t, double dt, const VecX& y0,
                              bool want_traces = false) {
  VerletStepper stepper(sys);
  return stepper.step(t, dt, y0, want_traces);
}

// Leapfrog run: u at integer steps, p at half steps, one kick per step.
// Returns states at every step (p reconstructed at integer times).
inline std::vector<VecX> run_verlet_leapfrog(const MsWaveSystem& sys, double t0, double dt,
                                             int nsteps, const VecX& y0) {
  VecX u = sys.u_part(y0), p = sys.p_part(y0);
  std::vector<VecX> states;
  states.push_back(y0);
  VecX kick = sys.pdot(t0, u, nullptr, nullptr);
  VecX ph = p;
  axpy(0.5 * dt, kick, ph);
  for (int n = 0; n < nsteps; ++n) {
    VecX u1 = u;
    axpy(dt, ph, u1);
    u = std::move(u1);
    kick = sys.pdot(t0 + (n + 1) * dt, u, nullptr, nullptr);
    VecX p_int = ph;
    axpy(0.5 * dt, kick, p_int);
    states.push_back(sys.join(u, p_int));
    if (n + 1 < nsteps) axpy(dt, kick, ph);  // merged kick
  }
  return states;
}

}  // namespace hodgewave
