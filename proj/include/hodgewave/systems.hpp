#pragma once

#include <cstring>
#include <map>

#include "hodgewave/assembly.hpp"

namespace hodgewave {

struct NewtonOpts {
  double tol = 1e-12;
  int maxit = 25;
};

// Per-stage data retained for multisymplectic diagnostics: the stage volume
// fields entering the flux formulas plus the stage trace coefficients.
struct StageTraces {
  VecX u, sigma, rho;
  VecX sigma_hat, u_hat;  // u_hat holds p_hat for the mixed method
  TraceTag tag = TraceTag::ms_u_hat;
  bool valid = false;
};

struct StageStats {
  int newton_iters = 0;
  double lin_residual = 0.0;
};

struct StepReport {
  std::vector<double> b_weights;
  std::vector<StageTraces> stages;
  int newton_iters_max = 0;
  double lin_residual_max = 0.0;

  void absorb(const StageStats& st) {
    newton_iters_max = std::max(newton_iters_max, st.newton_iters);
    lin_residual_max = std::max(lin_residual_max, st.lin_residual);
  }
};

namespace detail {
inline std::uint64_t key_of(double x) {
  std::uint64_t k;
  std::memcpy(&k, &x, sizeof(k));
  return k;
}
}  // namespace detail

// Multisymplectic LDG-H semidiscretization reduced to y = [u; p].
// The vector field needs the two global constraint solves; implicit midpoint
// stages are solved monolithically in (u, p, sigma, sigma_hat, rho, u_hat).
class MsWaveSystem {
 public:
  const Mesh* mesh = nullptr;
  const FeSpace* fe = nullptr;
  const Penalties* pen = nullptr;
  AssembledForms forms;
  ConstraintSystems cs;
  Nonlinearity nl;
  NewtonOpts newton;
  bool collect_traces = false;

  MsWaveSystem(const Mesh& m, const FeSpace& f, const Penalties& p, Nonlinearity n,
               SolverOpts opts = {})
      : mesh(&m), fe(&f), pen(&p), nl(n) {
    forms = assemble_forms(m, f, p);
    cs = build_constraint_systems(forms, opts);
  }

  int dim() const { return 2 * fe->layout.n1(); }
  int half_dim() const { return fe->layout.n1(); }

  VecX u_part(const VecX& y) const { return VecX(y.begin(), y.begin() + half_dim()); }
  VecX p_part(const VecX& y) const { return VecX(y.begin() + half_dim(), y.end()); }
  VecX join(const VecX& q, const VecX& p) const {
    VecX y(q);
    y.insert(y.end(), p.begin(), p.end());
    return y;
  }

  StageTraces bundle(const VecX& u, const ConstraintSolution& c) const {
    StageTraces t;
    t.u = u;
    t.sigma = c.sigma;
    t.rho = c.rho;
    t.sigma_hat = c.sigma_hat;
    t.u_hat = c.u_hat;
    t.tag = TraceTag::ms_u_hat;
    t.valid = true;
    return t;
  }

  // M pdot = L(u); mass matrices are diagonal.
  VecX pdot(double t, const VecX& u, StageTraces* tr = nullptr,
            StageStats* st = nullptr) const {
    ConstraintSolution c = solve_constraints(cs, u);
    FieldState s;
    s.sigma = c.sigma;
    s.rho = c.rho;
    s.u = u;
    TraceState trc{c.sigma_hat, c.u_hat, TraceTag::ms_u_hat};
    VecX L = momentum_rhs(forms, s, trc, t, nl);
    for (int i = 0; i < forms.n1(); ++i) L[i] /= forms.m1[i];
    if (tr) *tr = bundle(u, c);
    if (st) {
      st->lin_residual =
          std::max(st->lin_residual, std::max(c.info_sigma.rel_residual, c.info_rho.rel_residual));
    }
    return L;
  }

  VecX f_p(double /*t*/, const VecX& /*q*/, const VecX& p) const { return p; }

  VecX rhs(double t, const VecX& y, StageTraces* tr = nullptr, StageStats* st = nullptr) const {
    VecX u = u_part(y), p = p_part(y);
    VecX pd = pdot(t, u, tr, st);
    return join(p, pd);
  }

  // Linearized momentum operator: K v = -L_lin(v) with the constraint fields
  // of v from the two global solves; K is symmetric positive semidefinite.
  VecX apply_k(const VecX& v, double tol) const {
    const SpaceLayout& lo = fe->layout;
    const int n0 = lo.n0(), n2 = lo.n2();
    VecX xs = solve_sigma_system(cs, spmv(cs.B_sigma, v), nullptr, tol);
    VecX xr = solve_rho_system(cs, spmv(cs.B_rho, v), nullptr, tol);
    VecX kv(lo.n1(), 0.0);
    VecX sig(xs.begin(), xs.begin() + n0), sig_hat(xs.begin() + n0, xs.end());
    VecX rho(xr.begin(), xr.begin() + n2), u_hat(xr.begin() + n2, xr.end());
    forms.Bs_vol_t.multiply_add(sig, kv, -1.0);
    forms.Bs_fac_t.multiply_add(sig_hat, kv, -1.0);
    forms.Br_vol_t.multiply_add(rho, kv, 1.0);
    forms.Br_fac_t.multiply_add(u_hat, kv, -1.0);
    forms.P_alpha1.multiply_add(v, kv, 1.0);
    return kv;
  }

  // Solve Y = base + coeff * f(t_stage, Y); returns Y = [u;p]. The implicit
  // stage is solved by block elimination: the constraint blocks reduce onto a
  // symmetric positive definite system (M + coeff^2 K) for the momentum
  // update, handled by matrix-free CG; the assembled monolithic system is
  // kept only to verify the stage residual (and for the Newton correction of
  // the cubic source).
  VecX solve_stage(double t_stage, double coeff, const VecX& base, StageTraces* tr = nullptr,
                   StageStats* st = nullptr) const {
    const SpaceLayout& lo = fe->layout;
    MsStageLayout sl(lo);
    const StageOp& op = stage_op(coeff);
    VecX ub = u_part(base), pb = p_part(base);
    const double gamma = coeff;
    const double inner_tol = std::min(cs.opts.tol, 0.1 * newton.tol);

    VecX rhs(sl.n, 0.0);
    for (int i = 0; i < sl.n1; ++i) {
      rhs[sl.off_u + i] = forms.m1[i] * ub[i];
      rhs[sl.off_p + i] = forms.m1[i] * pb[i];
    }

    VecX x(sl.n, 0.0);
    auto it_ws = warm_start_.find(detail::key_of(coeff));
    if (it_ws != warm_start_.end()) {
      x = it_ws->second;
    } else {
      for (int i = 0; i < sl.n1; ++i) {
        x[sl.off_u + i] = ub[i] + coeff * pb[i];
        x[sl.off_p + i] = pb[i];
      }
    }

    VecX minv1(std::size_t(sl.n1));
    for (int i = 0; i < sl.n1; ++i) minv1[i] = 1.0 / forms.m1[i];

    double rhs_norm = std::max(norm(rhs), 1e-30);
    StageStats stats;
    const int max_outer = nl.active() ? newton.maxit : 6;
    for (int itn = 0;; ++itn) {
      VecX res = rhs;
      op.S.multiply_add(x, res, -1.0);
      VecX ustar(x.begin() + sl.off_u, x.begin() + sl.off_u + sl.n1);
      SparseMatrix jac_nl;
      if (nl.active()) {
        VecX load = assemble_nonlinear_load(forms, nl, t_stage, ustar);
        for (int i = 0; i < sl.n1; ++i) res[sl.off_p + i] -= coeff * load[i];
      }
      double rn = norm(res) / rhs_norm;
      if (rn <= newton.tol) {
        stats.newton_iters = itn;
        stats.lin_residual = rn;
        break;
      }
      if (itn >= max_outer)
        throw solver_error("ms stage: solve did not converge, residual " + std::to_string(rn));
      if (nl.active()) jac_nl = assemble_nonlinear_jacobian(forms, nl, ustar);

      // residual slices
      VecX res_u(res.begin() + sl.off_u, res.begin() + sl.off_u + sl.n1);
      VecX res_p(res.begin() + sl.off_p, res.begin() + sl.off_p + sl.n1);
      VecX res_c(res.begin() + sl.off_sigma, res.begin() + sl.off_sigma + sl.n0 + sl.nt);
      VecX res_r(res.begin() + sl.off_rho, res.begin() + sl.off_rho + sl.n2 + sl.nt);

      VecX ru(std::size_t(sl.n1));
      for (int i = 0; i < sl.n1; ++i) ru[i] = minv1[i] * res_u[i];

      // constraint corrections at du = ru feed the reduced right-hand side
      auto constraint_corrections = [&](const VecX& du, VecX& sig, VecX& sig_hat, VecX& rho,
                                        VecX& u_hat) {
        VecX rs = spmv(cs.B_sigma, du);
        axpy(-1.0, res_c, rs);
        VecX xs = solve_sigma_system(cs, rs, nullptr, inner_tol);
        VecX rr = spmv(cs.B_rho, du);
        axpy(1.0, res_r, rr);
        VecX xr = solve_rho_system(cs, rr, nullptr, inner_tol);
        sig.assign(xs.begin(), xs.begin() + sl.n0);
        sig_hat.assign(xs.begin() + sl.n0, xs.end());
        rho.assign(xr.begin(), xr.begin() + sl.n2);
        u_hat.assign(xr.begin() + sl.n2, xr.end());
      };
      VecX sig0, sig_hat0, rho0, u_hat0;
      constraint_corrections(ru, sig0, sig_hat0, rho0, u_hat0);
      VecX rhs_p = res_p;
      forms.Bs_vol_t.multiply_add(sig0, rhs_p, gamma);
      forms.Bs_fac_t.multiply_add(sig_hat0, rhs_p, gamma);
      forms.Br_vol_t.multiply_add(rho0, rhs_p, -gamma);
      forms.Br_fac_t.multiply_add(u_hat0, rhs_p, gamma);
      forms.P_alpha1.multiply_add(ru, rhs_p, -gamma);
      if (nl.active()) jac_nl.multiply_add(ru, rhs_p, -gamma);

      auto apply = [&](const VecX& v) {
        VecX w(std::size_t(sl.n1));
        for (int i = 0; i < sl.n1; ++i) w[i] = forms.m1[i] * v[i];
        VecX kv = apply_k(v, inner_tol);
        axpy(gamma * gamma, kv, w);
        if (nl.active()) jac_nl.multiply_add(v, w, gamma * gamma);
        return w;
      };
      // one CG pass per outer sweep; the outer residual check drives further
      // sweeps, so a moderate tolerance suffices here
      VecX dp;
      SolveInfo cg = solve_spd_operator(apply, rhs_p, dp, 1e-11, 400, minv1);
      if (!cg.converged && cg.rel_residual > 1e-5)
        throw solver_error("ms stage: reduced CG stalled at residual " +
                           std::to_string(cg.rel_residual));
      VecX du = ru;
      axpy(gamma, dp, du);
      VecX dsig, dsig_hat, drho, du_hat;
      constraint_corrections(du, dsig, dsig_hat, drho, du_hat);

      for (int i = 0; i < sl.n1; ++i) {
        x[sl.off_u + i] += du[i];
        x[sl.off_p + i] += dp[i];
      }
      for (int i = 0; i < sl.n0; ++i) x[sl.off_sigma + i] += dsig[i];
      for (int i = 0; i < sl.nt; ++i) x[sl.off_sighat + i] += dsig_hat[i];
      for (int i = 0; i < sl.n2; ++i) x[sl.off_rho + i] += drho[i];
      for (int i = 0; i < sl.nt; ++i) x[sl.off_uhat + i] += du_hat[i];
    }
    warm_start_[detail::key_of(coeff)] = x;

    if (tr) {
      tr->u.assign(x.begin() + sl.off_u, x.begin() + sl.off_u + sl.n1);
      tr->sigma.assign(x.begin() + sl.off_sigma, x.begin() + sl.off_sigma + sl.n0);
      tr->sigma_hat.assign(x.begin() + sl.off_sighat, x.begin() + sl.off_sighat + sl.nt);
      tr->rho.assign(x.begin() + sl.off_rho, x.begin() + sl.off_rho + sl.n2);
      tr->u_hat.assign(x.begin() + sl.off_uhat, x.begin() + sl.off_uhat + sl.nt);
      tr->tag = TraceTag::ms_u_hat;
      tr->valid = true;
    }
    if (st) *st = stats;
    VecX y(2 * sl.n1);
    for (int i = 0; i < sl.n1; ++i) {
      y[i] = x[sl.off_u + i];
      y[sl.n1 + i] = x[sl.off_p + i];
    }
    return y;
  }

  void reset_caches() const {
    stage_ops_.clear();
    warm_start_.clear();
  }

 private:
  // the assembled monolithic stage matrix is kept for residual verification
  struct StageOp {
    SparseMatrix S;
  };
  const StageOp& stage_op(double gamma) const {
    auto key = detail::key_of(gamma);
    auto it = stage_ops_.find(key);
    if (it != stage_ops_.end()) return it->second;
    StageOp op;
    op.S = build_ms_stage_matrix(forms, gamma);
    return stage_ops_.emplace(key, std::move(op)).first->second;
  }
  mutable std::map<std::uint64_t, StageOp> stage_ops_;
  mutable std::map<std::uint64_t, VecX> warm_start_;
};

// Mixed LDG-H semidiscretization: a plain ODE in y = [sigma; u; rho; p] after
// facet-local trace elimination.
class MixedWaveSystem {
 public:
  const Mesh* mesh = nullptr;
  const FeSpace* fe = nullptr;
  const Penalties* pen = nullptr;
  AssembledForms forms;
  MixedOperator op;
  Nonlinearity nl;
  NewtonOpts newton;
  SolverOpts solver;

  MixedWaveSystem(const Mesh& m, const FeSpace& f, const Penalties& p, Nonlinearity n,
                  SolverOpts opts = {})
      : mesh(&m), fe(&f), pen(&p), nl(n), solver(opts) {
    forms = assemble_forms(m, f, p);
    op = build_mixed_operator(forms);
  }

  int dim() const { return op.ny; }

  VecX rhs(double t, const VecX& y, StageTraces* tr = nullptr,
           StageStats* /*st*/ = nullptr) const {
    if (tr) *tr = bundle(y);
    return op.rhs_action(t, y, nl);
  }

  StageTraces bundle(const VecX& y) const {
    StageTraces t;
    t.sigma.assign(y.begin() + op.off_sigma, y.begin() + op.off_sigma + op.n0);
    t.u.assign(y.begin() + op.off_u, y.begin() + op.off_u + op.n1);
    t.rho.assign(y.begin() + op.off_rho, y.begin() + op.off_rho + op.n2);
    t.sigma_hat = spmv(op.E_sig, y);
    t.u_hat = spmv(op.E_p, y);
    t.tag = TraceTag::mixed_p_hat;
    t.valid = true;
    return t;
  }

  VecX solve_stage(double t_stage, double coeff, const VecX& base, StageTraces* tr = nullptr,
                   StageStats* st = nullptr) const {
    const StageOp& sop = stage_op(coeff);
    VecX rhs(op.ny);
    for (int i = 0; i < op.ny; ++i) rhs[i] = op.mdiag[i] * base[i];
    double rhs_norm = std::max(norm(rhs), 1e-30);
    VecX x = base;
    StageStats stats;
    const int max_outer = nl.active() ? newton.maxit : 3;
    for (int itn = 0;; ++itn) {
      VecX res = spmv(sop.S, x);
      axpy(-1.0, rhs, res);
      VecX ustar(x.begin() + op.off_u, x.begin() + op.off_u + op.n1);
      if (nl.active()) {
        VecX load = assemble_nonlinear_load(forms, nl, t_stage, ustar);
        for (int i = 0; i < op.n1; ++i) res[op.off_p + i] += coeff * load[i];
      }
      double rn = norm(res) / rhs_norm;
      if (rn <= newton.tol) {
        stats.newton_iters = itn;
        stats.lin_residual = rn;
        break;
      }
      if (itn >= max_outer)
        throw solver_error("mixed stage: solve did not converge, residual " +
                           std::to_string(rn));
      scale(-1.0, res);
      // equilibrated correction system D^-1 S D^-1 (D dx) = D^-1 res
      for (int i = 0; i < op.ny; ++i) res[i] *= sop.dinv[i];
      double tol_eff = std::min(1e-3, solver.tol * rhs_norm / (norm(res) + 1e-300));
      VecX dz;
      SolveInfo info;
      if (nl.active()) {
        SparseMatrix jac_nl = assemble_nonlinear_jacobian(forms, nl, ustar);
        SparseBuilder jb(op.ny, op.ny);
        add_block(jb, sop.Se, 0, 0);
        for (int i = 0; i < jac_nl.nrows; ++i)
          for (int k = jac_nl.row_ptr[i]; k < jac_nl.row_ptr[i + 1]; ++k)
            jb.add(op.off_p + i, op.off_u + jac_nl.col[k],
                   coeff * sop.dinv[op.off_p + i] * jac_nl.val[k] *
                       sop.dinv[op.off_u + jac_nl.col[k]]);
        SparseMatrix jac = jb.build();
        BlockJacobi pre_j(jac, mixed_stage_blocks(op));
        info = solve_general(jac, res, dz, tol_eff, solver.maxit, &pre_j,
                             solver.gmres_restart);
      } else {
        info = solve_general(sop.Se, res, dz, tol_eff, solver.maxit, &sop.pre,
                             solver.gmres_restart);
      }
      (void)info;
      for (int i = 0; i < op.ny; ++i) x[i] += sop.dinv[i] * dz[i];
    }
    if (tr) *tr = bundle(x);
    if (st) *st = stats;
    return x;
  }

  void reset_caches() const { stage_ops_.clear(); }

 private:
  struct StageOp {
    SparseMatrix S;   // M - gamma A, used for residual evaluation
    SparseMatrix Se;  // symmetrically equilibrated copy passed to GMRES
    VecX dinv;        // inverse diagonal scale
    BlockJacobi pre;
  };
  const StageOp& stage_op(double gamma) const {
    auto key = detail::key_of(gamma);
    auto it = stage_ops_.find(key);
    if (it != stage_ops_.end()) return it->second;
    StageOp sop;
    sop.S = build_mixed_stage_matrix(op, gamma);
    sop.dinv.assign(op.ny, 1.0);
    for (int i = 0; i < sop.S.nrows; ++i)
      for (int k = sop.S.row_ptr[i]; k < sop.S.row_ptr[i + 1]; ++k)
        if (sop.S.col[k] == i && sop.S.val[k] != 0.0)
          sop.dinv[i] = 1.0 / std::sqrt(std::abs(sop.S.val[k]));
    sop.Se = sop.S;
    for (int i = 0; i < sop.Se.nrows; ++i)
      for (int k = sop.Se.row_ptr[i]; k < sop.Se.row_ptr[i + 1]; ++k)
        sop.Se.val[k] *= sop.dinv[i] * sop.dinv[sop.Se.col[k]];
    sop.pre = BlockJacobi(sop.Se, mixed_stage_blocks(op));
    return stage_ops_.emplace(key, std::move(sop)).first->second;
  }
  mutable std::map<std::uint64_t, StageOp> stage_ops_;
};

}  // namespace hodgewave
