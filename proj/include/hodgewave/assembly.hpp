#pragma once

#include "hodgewave/calculus.hpp"
#include "hodgewave/linalg.hpp"

namespace hodgewave {

// f(t,x,u) source terms. The cubic case is f(u) = (1 - |u|^2) u with
// potential F(u) = |u|^2/2 - |u|^4/4; integrals use the high-order rule so
// the quartic F is integrated exactly.
struct Nonlinearity {
  enum class Kind { none, cubic };
  Kind kind = Kind::none;

  bool active() const { return kind != Kind::none; }
  Vec2 f(Vec2 u) const {
    if (kind == Kind::none) return {0.0, 0.0};
    double s = 1.0 - dot(u, u);
    return {s * u.x, s * u.y};
  }
  double potential(Vec2 u) const {
    if (kind == Kind::none) return 0.0;
    double q = dot(u, u);
    return 0.5 * q - 0.25 * q * q;
  }
  // derivative of f at u applied to a direction
  void fprime(Vec2 u, double out[2][2]) const {
    double q = dot(u, u);
    out[0][0] = (1.0 - q) - 2.0 * u.x * u.x;
    out[0][1] = -2.0 * u.x * u.y;
    out[1][0] = -2.0 * u.y * u.x;
    out[1][1] = (1.0 - q) - 2.0 * u.y * u.y;
  }
};

namespace detail {

struct Side {
  int s;        // 0 plus, 1 minus
  int elem;
  double sgn;   // +1 / -1
};

inline int side_count(const Facet& fc) { return fc.minus ? 2 : 1; }

inline Side facet_side_rec(const Facet& fc, int s) {
  if (s == 0) return {0, fc.plus.elem, +1.0};
  return {1, fc.minus->elem, -1.0};
}

}  // namespace detail

// All penalty-folded bilinear forms shared by the two LDG-H variants.
// Trace dofs on one-sided (boundary) facets are pinned to zero, which
// imposes homogeneous Dirichlet data there.
struct AssembledForms {
  const Mesh* mesh = nullptr;
  const FeSpace* fe = nullptr;
  const Penalties* pen = nullptr;

  VecX m0, m1, m2;  // diagonal mass matrices

  SparseMatrix Bs_vol;    // n0 x n1: (rot u, tau)_K
  SparseMatrix Bs_fac;    // ntr x n1: sum_sides (u x n_side, chi)_e
  SparseMatrix Br_vol;    // n2 x n1: (u, grad eta)_K
  SparseMatrix Br_fac;    // ntr x n1: sum_sides alpha1 (u . n_facet, chi)_e
  SparseMatrix C_tau_a0;  // n0 x ntr: sum_sides alpha0 (sig_hat, tau)_e
  SparseMatrix C_eta;     // n2 x ntr: sum_sides sgn (u_hat, eta)_e
  SparseMatrix P0_a0;     // n0 x n0: sum_sides alpha0 (sigma, tau)_e
  SparseMatrix P_alpha1;  // n1 x n1: sum_sides alpha1 (u . n, v . n)_e
  SparseMatrix Dhat_a0;   // ntr x ntr: sum_sides alpha0 (sig_hat, tau_hat)_e; pinned diag -1
  SparseMatrix Dhat_a1;   // ntr x ntr: sum_sides alpha1 (u_hat, v_hat)_e; pinned diag +1

  SparseMatrix Bs_vol_t, Bs_fac_t, Br_vol_t, Br_fac_t, C_tau_a0_t, C_eta_t;

  std::vector<char> pinned;  // per facet

  int n0() const { return fe->layout.n0(); }
  int n1() const { return fe->layout.n1(); }
  int n2() const { return fe->layout.n2(); }
  int ntr() const { return fe->layout.ntrace(); }
};

inline AssembledForms assemble_forms(const Mesh& mesh, const FeSpace& fe, const Penalties& pen) {
  AssembledForms F;
  F.mesh = &mesh;
  F.fe = &fe;
  F.pen = &pen;
  const SpaceLayout& lo = fe.layout;
  const int d0 = fe.d0, nm = lo.trace_modes();

  F.m0.resize(lo.n0());
  F.m2.resize(lo.n2());
  F.m1.resize(lo.n1());
  for (int e = 0; e < mesh.num_elements(); ++e)
    for (int i = 0; i < d0; ++i) {
      F.m0[lo.idx0(e, i)] = fe.detj[e];
      F.m2[lo.idx2(e, i)] = fe.detj[e];
      F.m1[lo.idx1(e, 0, i)] = fe.detj[e];
      F.m1[lo.idx1(e, 1, i)] = fe.detj[e];
    }

  F.pinned.assign(mesh.num_facets(), 0);
  for (int f = 0; f < mesh.num_facets(); ++f)
    if (!mesh.facets[f].two_sided()) F.pinned[f] = 1;

  SparseBuilder bs_vol(lo.n0(), lo.n1()), br_vol(lo.n2(), lo.n1());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const double dj = fe.detj[e];
    for (int k = 0; k < fe.vq.size(); ++k) {
      const double w = dj * fe.vq.weights[k];
      for (int i = 0; i < d0; ++i) {
        double pi = fe.phi[std::size_t(k) * d0 + i];
        Vec2 gi = fe.maps[e].push_gradient(fe.gphi[std::size_t(k) * d0 + i]);
        for (int j = 0; j < d0; ++j) {
          double pj = fe.phi[std::size_t(k) * d0 + j];
          Vec2 gj = fe.maps[e].push_gradient(fe.gphi[std::size_t(k) * d0 + j]);
          // (rot u, tau): x-component contributes -d/dy, y-component +d/dx
          bs_vol.add(lo.idx0(e, i), lo.idx1(e, 0, j), -w * (gj.y * pi));
          bs_vol.add(lo.idx0(e, i), lo.idx1(e, 1, j), w * (gj.x * pi));
          // (u, grad eta)
          br_vol.add(lo.idx2(e, i), lo.idx1(e, 0, j), w * (pj * gi.x));
          br_vol.add(lo.idx2(e, i), lo.idx1(e, 1, j), w * (pj * gi.y));
        }
      }
    }
  }
  F.Bs_vol = bs_vol.build();
  F.Br_vol = br_vol.build();

  SparseBuilder bs_fac(lo.ntrace(), lo.n1()), br_fac(lo.ntrace(), lo.n1());
  SparseBuilder c_tau(lo.n0(), lo.ntrace()), c_eta(lo.n2(), lo.ntrace());
  SparseBuilder p0(lo.n0(), lo.n0()), p1(lo.n1(), lo.n1());
  SparseBuilder dh0(lo.ntrace(), lo.ntrace()), dh1(lo.ntrace(), lo.ntrace());

  for (int f = 0; f < mesh.num_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    const double len = fc.length;
    const double a0 = pen.alpha0[f], a1 = pen.alpha1[f];
    const double tsc = fe.facet_scale(f);
    const Vec2 n = fc.normal;
    const bool pin = F.pinned[f] != 0;

    for (int sc = 0; sc < detail::side_count(fc); ++sc) {
      detail::Side sd = detail::facet_side_rec(fc, sc);
      const auto& tr = fe.trace_phi[f][sd.s];
      const Vec2 ns{sd.sgn * n.x, sd.sgn * n.y};
      for (int k = 0; k < fe.eq.size(); ++k) {
        const double w = len * fe.eq.weights[k];
        for (int i = 0; i < d0; ++i) {
          double pi = tr[std::size_t(k) * d0 + i];
          // element-local penalty blocks (include boundary sides)
          for (int j = 0; j < d0; ++j) {
            double pj = tr[std::size_t(k) * d0 + j];
            double mass = w * (pi * pj);
            p0.add(lo.idx0(sd.elem, i), lo.idx0(sd.elem, j), a0 * mass);
            for (int c1 = 0; c1 < 2; ++c1)
              for (int c2 = 0; c2 < 2; ++c2) {
                double nc = (c1 == 0 ? n.x : n.y) * (c2 == 0 ? n.x : n.y);
                p1.add(lo.idx1(sd.elem, c1, i), lo.idx1(sd.elem, c2, j), a1 * nc * mass);
              }
          }
          if (pin) continue;
          for (int m = 0; m < nm; ++m) {
            double chi = tsc * fe.chi[std::size_t(k) * nm + m];
            double mix = w * (pi * chi);
            c_tau.add(lo.idx0(sd.elem, i), lo.idxtr(f, m), a0 * mix);
            c_eta.add(lo.idx2(sd.elem, i), lo.idxtr(f, m), sd.sgn * mix);
            // u x n_side and u . n_facet couplings
            bs_fac.add(lo.idxtr(f, m), lo.idx1(sd.elem, 0, i), ns.y * mix);
            bs_fac.add(lo.idxtr(f, m), lo.idx1(sd.elem, 1, i), -ns.x * mix);
            br_fac.add(lo.idxtr(f, m), lo.idx1(sd.elem, 0, i), a1 * n.x * mix);
            br_fac.add(lo.idxtr(f, m), lo.idx1(sd.elem, 1, i), a1 * n.y * mix);
          }
        }
        if (!pin) {
          for (int m = 0; m < nm; ++m) {
            double cm = tsc * fe.chi[std::size_t(k) * nm + m];
            for (int m2 = 0; m2 < nm; ++m2) {
              double cm2 = tsc * fe.chi[std::size_t(k) * nm + m2];
              double mass = w * (cm * cm2);
              dh0.add(lo.idxtr(f, m), lo.idxtr(f, m2), a0 * mass);
              dh1.add(lo.idxtr(f, m), lo.idxtr(f, m2), a1 * mass);
            }
          }
        }
      }
    }
    if (pin) {
      for (int m = 0; m < nm; ++m) {
        dh0.add(lo.idxtr(f, m), lo.idxtr(f, m), -1.0);
        dh1.add(lo.idxtr(f, m), lo.idxtr(f, m), 1.0);
      }
    }
  }
  F.Bs_fac = bs_fac.build();
  F.Br_fac = br_fac.build();
  F.C_tau_a0 = c_tau.build();
  F.C_eta = c_eta.build();
  F.P0_a0 = p0.build();
  F.P_alpha1 = p1.build();
  F.Dhat_a0 = dh0.build();
  F.Dhat_a1 = dh1.build();

  F.Bs_vol_t = transpose(F.Bs_vol);
  F.Bs_fac_t = transpose(F.Bs_fac);
  F.Br_vol_t = transpose(F.Br_vol);
  F.Br_fac_t = transpose(F.Br_fac);
  F.C_tau_a0_t = transpose(F.C_tau_a0);
  F.C_eta_t = transpose(F.C_eta);
  return F;
}

// Load vector (f(t,u), v) over W1, high-order rule.
inline VecX assemble_nonlinear_load(const AssembledForms& F, const Nonlinearity& nl, double t,
                                    const VecX& u) {
  (void)t;
  const FeSpace& fe = *F.fe;
  const SpaceLayout& lo = fe.layout;
  VecX load(lo.n1(), 0.0);
  if (!nl.active()) return load;
  for (int e = 0; e < F.mesh->num_elements(); ++e) {
    double dj = fe.detj[e];
    for (int k = 0; k < fe.vq_hi.size(); ++k) {
      Vec2 uv{0.0, 0.0};
      for (int i = 0; i < fe.d0; ++i) {
        double b = fe.phi_hi[std::size_t(k) * fe.d0 + i];
        uv.x += u[lo.idx1(e, 0, i)] * b;
        uv.y += u[lo.idx1(e, 1, i)] * b;
      }
      Vec2 fv = nl.f(uv);
      double w = dj * fe.vq_hi.weights[k];
      for (int i = 0; i < fe.d0; ++i) {
        double b = fe.phi_hi[std::size_t(k) * fe.d0 + i];
        load[lo.idx1(e, 0, i)] += w * (fv.x * b);
        load[lo.idx1(e, 1, i)] += w * (fv.y * b);
      }
    }
  }
  return load;
}

// Element-diagonal Jacobian block d/du (f(u), v).
inline SparseMatrix assemble_nonlinear_jacobian(const AssembledForms& F, const Nonlinearity& nl,
                                                const VecX& u) {
  const FeSpace& fe = *F.fe;
  const SpaceLayout& lo = fe.layout;
  SparseBuilder b(lo.n1(), lo.n1());
  if (nl.active()) {
    for (int e = 0; e < F.mesh->num_elements(); ++e) {
      double dj = fe.detj[e];
      for (int k = 0; k < fe.vq_hi.size(); ++k) {
        Vec2 uv{0.0, 0.0};
        for (int i = 0; i < fe.d0; ++i) {
          double bb = fe.phi_hi[std::size_t(k) * fe.d0 + i];
          uv.x += u[lo.idx1(e, 0, i)] * bb;
          uv.y += u[lo.idx1(e, 1, i)] * bb;
        }
        double fp[2][2];
        nl.fprime(uv, fp);
        double w = dj * fe.vq_hi.weights[k];
        for (int i = 0; i < fe.d0; ++i) {
          double bi = fe.phi_hi[std::size_t(k) * fe.d0 + i];
          for (int j = 0; j < fe.d0; ++j) {
            double bj = fe.phi_hi[std::size_t(k) * fe.d0 + j];
            for (int c1 = 0; c1 < 2; ++c1)
              for (int c2 = 0; c2 < 2; ++c2)
                b.add(lo.idx1(e, c1, i), lo.idx1(e, c2, j), w * fp[c1][c2] * (bi * bj));
          }
        }
      }
    }
  }
  return b.build();
}

// ---- multisymplectic constraint systems ----

struct SolverOpts {
  double tol = 1e-13;
  int maxit = 20000;
  int gmres_restart = 0;  // 0 = full
};

struct ConstraintSystems {
  const AssembledForms* forms = nullptr;
  SparseMatrix A_sigma;      // symmetric negative definite over (sigma, sigma_hat)
  SparseMatrix A_sigma_neg;  // SPD, handed to CG
  SparseMatrix B_sigma;      // rhs map from u
  SparseMatrix A_rho;        // positive definite, nonsymmetric, over (rho, u_hat)
  SparseMatrix B_rho;
  // The u_hat block of A_rho is facet-block diagonal, so u_hat eliminates
  // exactly and the solve reduces to an SPD system in rho alone.
  SparseMatrix Dhat_a1_inv;
  SparseMatrix A_rho_reduced;  // M2 + C_eta Dhat^-1 C_eta^T
  BlockJacobi pre_sigma, pre_rho, pre_rho_reduced;
  SolverOpts opts;
};

inline std::vector<std::vector<int>> volume_trace_blocks(const SpaceLayout& lo, int nvol_fields) {
  std::vector<std::vector<int>> blocks;
  for (int e = 0; e < lo.num_elements; ++e) {
    std::vector<int> idx;
    for (int i = 0; i < nvol_fields * lo.d0; ++i) idx.push_back(e * nvol_fields * lo.d0 + i);
    blocks.push_back(std::move(idx));
  }
  int off = lo.num_elements * nvol_fields * lo.d0;
  for (int f = 0; f < lo.num_facets; ++f) {
    std::vector<int> idx;
    for (int mm = 0; mm < lo.trace_modes(); ++mm) idx.push_back(off + lo.idxtr(f, mm));
    blocks.push_back(std::move(idx));
  }
  return blocks;
}

inline void add_block(SparseBuilder& b, const SparseMatrix& m, int row_off, int col_off,
                      double scl = 1.0) {
  for (int i = 0; i < m.nrows; ++i)
    for (int k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
      b.add(row_off + i, col_off + m.col[k], scl * m.val[k]);
}

inline void add_diag(SparseBuilder& b, const VecX& d, int row_off, int col_off, double scl = 1.0) {
  for (std::size_t i = 0; i < d.size(); ++i)
    b.add(row_off + int(i), col_off + int(i), scl * d[i]);
}

inline ConstraintSystems build_constraint_systems(const AssembledForms& F,
                                                  SolverOpts opts = {}) {
  const SpaceLayout& lo = F.fe->layout;
  ConstraintSystems cs;
  cs.forms = &F;
  cs.opts = opts;
  const int n0 = lo.n0(), n2 = lo.n2(), nt = lo.ntrace();

  {  // A_sigma = [ -M0 + P0_a0 , -C_tau_a0 ; -C_tau_a0^T , Dhat_a0 ]
    SparseBuilder b(n0 + nt, n0 + nt);
    add_diag(b, F.m0, 0, 0, -1.0);
    add_block(b, F.P0_a0, 0, 0);
    add_block(b, F.C_tau_a0, 0, n0, -1.0);
    add_block(b, F.C_tau_a0_t, n0, 0, -1.0);
    add_block(b, F.Dhat_a0, n0, n0);
    cs.A_sigma = b.build();
    cs.A_sigma_neg = sparse_add(cs.A_sigma, cs.A_sigma, -1.0, 0.0);
  }
  {  // rhs(u) = [ (rot u, tau) ; (u x n, tau_hat) ]
    SparseBuilder b(n0 + nt, lo.n1());
    add_block(b, F.Bs_vol, 0, 0);
    add_block(b, F.Bs_fac, n0, 0);
    cs.B_sigma = b.build();
  }
  {  // A_rho = [ M2 , C_eta ; -C_eta^T , Dhat_a1 ]
    SparseBuilder b(n2 + nt, n2 + nt);
    add_diag(b, F.m2, 0, 0);
    add_block(b, F.C_eta, 0, n2);
    add_block(b, F.C_eta_t, n2, 0, -1.0);
    add_block(b, F.Dhat_a1, n2, n2);
    cs.A_rho = b.build();
  }
  {  // rhs(u) = [ (u, grad eta) ; alpha1 (u . n, v_hat) ]
    SparseBuilder b(n2 + nt, lo.n1());
    add_block(b, F.Br_vol, 0, 0);
    add_block(b, F.Br_fac, n2, 0);
    cs.B_rho = b.build();
  }
  cs.pre_sigma = BlockJacobi(cs.A_sigma_neg, volume_trace_blocks(lo, 1));
  cs.pre_rho = BlockJacobi(cs.A_rho, volume_trace_blocks(lo, 1));
  {  // facet-blockwise inverse of the u_hat mass
    SparseBuilder b(nt, nt);
    int nm = lo.trace_modes();
    std::vector<double> block(std::size_t(nm) * nm);
    for (int f = 0; f < lo.num_facets; ++f) {
      std::vector<int> where(nm);
      for (int i = 0; i < nm; ++i) where[i] = lo.idxtr(f, i);
      std::fill(block.begin(), block.end(), 0.0);
      for (int i = 0; i < nm; ++i) {
        int row = where[i];
        for (int k = F.Dhat_a1.row_ptr[row]; k < F.Dhat_a1.row_ptr[row + 1]; ++k)
          for (int j = 0; j < nm; ++j)
            if (F.Dhat_a1.col[k] == where[j]) block[std::size_t(i) * nm + j] = F.Dhat_a1.val[k];
      }
      DenseLU lu;
      lu.factor(block, nm);
      for (int j = 0; j < nm; ++j) {
        std::vector<double> e(nm, 0.0);
        e[j] = 1.0;
        lu.solve_in_place(e.data());
        for (int i = 0; i < nm; ++i) b.add(where[i], where[j], e[i]);
      }
    }
    cs.Dhat_a1_inv = b.build();
  }
  {
    SparseMatrix cross =
        sparse_multiply(F.C_eta, sparse_multiply(cs.Dhat_a1_inv, F.C_eta_t));
    SparseBuilder b(n2, n2);
    add_diag(b, F.m2, 0, 0);
    add_block(b, cross, 0, 0);
    cs.A_rho_reduced = b.build();
    std::vector<std::vector<int>> blocks;
    for (int e = 0; e < lo.num_elements; ++e) {
      std::vector<int> idx;
      for (int i = 0; i < lo.d0; ++i) idx.push_back(lo.idx2(e, i));
      blocks.push_back(std::move(idx));
    }
    cs.pre_rho_reduced = BlockJacobi(cs.A_rho_reduced, std::move(blocks));
  }
  return cs;
}

struct ConstraintSolution {
  VecX sigma, sigma_hat, rho, u_hat;
  SolveInfo info_sigma, info_rho;
};

// A_sigma x = rhs for a general right-hand side over (tau, tau_hat) dofs.
inline VecX solve_sigma_system(const ConstraintSystems& cs, VecX rhs, SolveInfo* info = nullptr,
                               double tol = 0.0) {
  scale(-1.0, rhs);  // CG solves (-A_sigma) x = -rhs
  VecX x;
  SolveInfo si = solve_spd(cs.A_sigma_neg, rhs, x, tol > 0 ? tol : cs.opts.tol, cs.opts.maxit,
                           &cs.pre_sigma);
  if (info) *info = si;
  return x;
}

// A_rho x = rhs for a general right-hand side over (eta, v_hat) dofs, via the
// exact facet-local elimination of u_hat onto the SPD reduced system.
inline VecX solve_rho_system(const ConstraintSystems& cs, const VecX& rhs,
                             SolveInfo* info = nullptr, double tol = 0.0) {
  const AssembledForms& F = *cs.forms;
  const int n2 = F.n2(), nt = F.ntr();
  VecX r_eta(rhs.begin(), rhs.begin() + n2);
  VecX r_vhat(rhs.begin() + n2, rhs.end());
  VecX t1 = spmv(cs.Dhat_a1_inv, r_vhat);
  VecX rhs_red = r_eta;
  F.C_eta.multiply_add(t1, rhs_red, -1.0);
  VecX rho;
  SolveInfo si = solve_spd(cs.A_rho_reduced, rhs_red, rho, tol > 0 ? tol : cs.opts.tol,
                           cs.opts.maxit, &cs.pre_rho_reduced);
  if (info) *info = si;
  VecX ctr(nt, 0.0);
  F.C_eta_t.multiply_add(rho, ctr);
  VecX u_hat = t1;
  VecX tmp = spmv(cs.Dhat_a1_inv, ctr);
  axpy(1.0, tmp, u_hat);
  VecX x(std::size_t(n2 + nt));
  std::copy(rho.begin(), rho.end(), x.begin());
  std::copy(u_hat.begin(), u_hat.end(), x.begin() + n2);
  return x;
}

inline ConstraintSolution solve_constraints(const ConstraintSystems& cs, const VecX& u,
                                            double tol = 0.0) {
  const SpaceLayout& lo = cs.forms->fe->layout;
  require(int(u.size()) == lo.n1(), "solve_constraints: u size mismatch");
  const int n0 = lo.n0(), n2 = lo.n2();
  ConstraintSolution out;
  VecX xs = solve_sigma_system(cs, spmv(cs.B_sigma, u), &out.info_sigma, tol);
  out.sigma.assign(xs.begin(), xs.begin() + n0);
  out.sigma_hat.assign(xs.begin() + n0, xs.end());
  VecX xr = solve_rho_system(cs, spmv(cs.B_rho, u), &out.info_rho, tol);
  out.rho.assign(xr.begin(), xr.begin() + n2);
  out.u_hat.assign(xr.begin() + n2, xr.end());
  return out;
}

// Momentum load L with M pdot = L:
//   L[v] = (sigma, rot v) - (grad rho, v) + (sigma_hat, v x n) +
//          (alpha1 (u_hat - u) . n, v . n) - (f(t,u), v).
inline VecX momentum_rhs(const AssembledForms& F, const FieldState& state,
                         const TraceState& traces, double t, const Nonlinearity& nl) {
  require(traces.tag == TraceTag::ms_u_hat, "momentum_rhs: traces must carry u_hat");
  VecX L(F.n1(), 0.0);
  F.Bs_vol_t.multiply_add(state.sigma, L);
  F.Bs_fac_t.multiply_add(traces.sigma_hat, L);
  F.Br_vol_t.multiply_add(state.rho, L, -1.0);
  F.Br_fac_t.multiply_add(traces.u_or_p_hat, L);
  F.P_alpha1.multiply_add(state.u, L, -1.0);
  if (nl.active()) {
    VecX load = assemble_nonlinear_load(F, nl, t, state.u);
    axpy(-1.0, load, L);
  }
  return L;
}

// ---- mixed (non-multisymplectic) operator with facet-local trace elimination ----

struct MixedOperator {
  const AssembledForms* forms = nullptr;
  int n0 = 0, n1 = 0, n2 = 0, ny = 0;
  // state layout y = [sigma | u | rho | p]
  int off_sigma = 0, off_u = 0, off_rho = 0, off_p = 0;
  SparseMatrix A;      // M ydot = A y - nonlinear load embedded at the p rows
  VecX mdiag, minv;    // diagonal mass of y
  SparseMatrix E_sig;  // ntr x ny: facet-local sigma_hat
  SparseMatrix E_p;    // ntr x ny: facet-local p_hat

  VecX rhs_action(double t, const VecX& y, const Nonlinearity& nl) const {
    VecX ay = spmv(A, y);
    if (nl.active()) {
      VecX u(y.begin() + off_u, y.begin() + off_u + n1);
      VecX load = assemble_nonlinear_load(*forms, nl, t, u);
      for (int i = 0; i < n1; ++i) ay[off_p + i] -= load[i];
    }
    for (int i = 0; i < ny; ++i) ay[i] *= minv[i];
    return ay;
  }
};

inline MixedOperator build_mixed_operator(const AssembledForms& F) {
  const SpaceLayout& lo = F.fe->layout;
  for (int f = 0; f < lo.num_facets; ++f) {
    require(F.pen->alpha0[f] != 0.0 && F.pen->alpha1[f] != 0.0,
            "build_mixed_operator: zero penalty makes trace elimination singular");
  }
  MixedOperator M;
  M.forms = &F;
  M.n0 = lo.n0();
  M.n1 = lo.n1();
  M.n2 = lo.n2();
  M.ny = M.n0 + 2 * M.n1 + M.n2;
  M.off_sigma = 0;
  M.off_u = M.n0;
  M.off_rho = M.n0 + M.n1;
  M.off_p = M.n0 + M.n1 + M.n2;

  const int nt = lo.ntrace(), nm = lo.trace_modes();

  // facet-local eliminations (exact for equal-order spaces, constant alpha):
  //   sigma_hat = avg(sigma) + [sum_sides p x n_side] / (2 alpha0)
  //   p_hat . n = [jump(rho)] / (2 alpha1) + avg(p . n)
  // Boundary facets keep hatted traces pinned at zero.
  {
    SparseBuilder es(nt, M.ny), ep(nt, M.ny);
    const FeSpace& fe = *F.fe;
    const Mesh& mesh = *F.mesh;
    for (int f = 0; f < mesh.num_facets(); ++f) {
      if (F.pinned[f]) continue;
      const Facet& fc = mesh.facets[f];
      const double len = fc.length, tsc = fe.facet_scale(f);
      const double a0 = F.pen->alpha0[f], a1 = F.pen->alpha1[f];
      const Vec2 n = fc.normal;
      for (int sc = 0; sc < detail::side_count(fc); ++sc) {
        detail::Side sd = detail::facet_side_rec(fc, sc);
        const auto& tr = fe.trace_phi[f][sd.s];
        const Vec2 ns{sd.sgn * n.x, sd.sgn * n.y};
        for (int k = 0; k < fe.eq.size(); ++k) {
          double w = len * fe.eq.weights[k];
          for (int i = 0; i < fe.d0; ++i) {
            double pi = tr[std::size_t(k) * fe.d0 + i];
            for (int m = 0; m < nm; ++m) {
              double chi = tsc * fe.chi[std::size_t(k) * nm + m];
              double mix = w * (pi * chi);
              es.add(lo.idxtr(f, m), M.off_sigma + lo.idx0(sd.elem, i), 0.5 * mix);
              es.add(lo.idxtr(f, m), M.off_p + lo.idx1(sd.elem, 0, i), ns.y * mix / (2.0 * a0));
              es.add(lo.idxtr(f, m), M.off_p + lo.idx1(sd.elem, 1, i), -ns.x * mix / (2.0 * a0));
              ep.add(lo.idxtr(f, m), M.off_rho + lo.idx2(sd.elem, i),
                     sd.sgn * mix / (2.0 * a1));
              ep.add(lo.idxtr(f, m), M.off_p + lo.idx1(sd.elem, 0, i), 0.5 * n.x * mix);
              ep.add(lo.idxtr(f, m), M.off_p + lo.idx1(sd.elem, 1, i), 0.5 * n.y * mix);
            }
          }
        }
      }
    }
    M.E_sig = es.build();
    M.E_p = ep.build();
  }

  // M ydot = A y:
  //  sigma rows: -Bs_vol p - C_tau_a0 sigma_hat + P0_a0 sigma
  //  u rows:      M1 p
  //  rho rows:    Br_vol p - C_eta p_hat
  //  p rows:      Bs_vol^T sigma + Bs_fac^T sigma_hat - Br_vol^T rho
  //               + Br_fac^T p_hat - P_alpha1 p
  SparseBuilder a(M.ny, M.ny);
  add_block(a, F.Bs_vol, M.off_sigma, M.off_p, -1.0);
  add_block(a, F.P0_a0, M.off_sigma, M.off_sigma);
  add_block(a, sparse_multiply(F.C_tau_a0, M.E_sig), M.off_sigma, 0, -1.0);
  add_diag(a, F.m1, M.off_u, M.off_p);
  add_block(a, F.Br_vol, M.off_rho, M.off_p);
  add_block(a, sparse_multiply(F.C_eta, M.E_p), M.off_rho, 0, -1.0);
  add_block(a, F.Bs_vol_t, M.off_p, M.off_sigma);
  add_block(a, sparse_multiply(F.Bs_fac_t, M.E_sig), M.off_p, 0);
  add_block(a, F.Br_vol_t, M.off_p, M.off_rho, -1.0);
  add_block(a, sparse_multiply(F.Br_fac_t, M.E_p), M.off_p, 0);
  add_block(a, F.P_alpha1, M.off_p, M.off_p, -1.0);
  M.A = a.build();

  M.mdiag.resize(M.ny);
  for (int i = 0; i < M.n0; ++i) M.mdiag[M.off_sigma + i] = F.m0[i];
  for (int i = 0; i < M.n1; ++i) M.mdiag[M.off_u + i] = F.m1[i];
  for (int i = 0; i < M.n2; ++i) M.mdiag[M.off_rho + i] = F.m2[i];
  for (int i = 0; i < M.n1; ++i) M.mdiag[M.off_p + i] = F.m1[i];
  M.minv = M.mdiag;
  for (double& v : M.minv) v = 1.0 / v;
  return M;
}

// ---- implicit midpoint stage matrices ----

// Monolithic stage system for the multisymplectic method, unknowns
// x = [u | p | sigma | sigma_hat | rho | u_hat] with u* = u0 + gamma p*.
struct MsStageLayout {
  int n0, n1, n2, nt;
  int off_u, off_p, off_sigma, off_sighat, off_rho, off_uhat, n;
  explicit MsStageLayout(const SpaceLayout& lo)
      : n0(lo.n0()), n1(lo.n1()), n2(lo.n2()), nt(lo.ntrace()) {
    off_u = 0;
    off_p = n1;
    off_sigma = 2 * n1;
    off_sighat = 2 * n1 + n0;
    off_rho = 2 * n1 + n0 + nt;
    off_uhat = 2 * n1 + n0 + nt + n2;
    n = 2 * n1 + n0 + n2 + 2 * nt;
  }
};

inline SparseMatrix build_ms_stage_matrix(const AssembledForms& F, double gamma) {
  MsStageLayout sl(F.fe->layout);
  SparseBuilder b(sl.n, sl.n);
  // u row: M1 u - gamma M1 p
  add_diag(b, F.m1, sl.off_u, sl.off_u);
  add_diag(b, F.m1, sl.off_u, sl.off_p, -gamma);
  // p row: M1 p - gamma L(x)
  add_diag(b, F.m1, sl.off_p, sl.off_p);
  add_block(b, F.Bs_vol_t, sl.off_p, sl.off_sigma, -gamma);
  add_block(b, F.Bs_fac_t, sl.off_p, sl.off_sighat, -gamma);
  add_block(b, F.Br_vol_t, sl.off_p, sl.off_rho, gamma);
  add_block(b, F.Br_fac_t, sl.off_p, sl.off_uhat, -gamma);
  add_block(b, F.P_alpha1, sl.off_p, sl.off_u, gamma);
  // sigma constraint row
  add_block(b, F.Bs_vol, sl.off_sigma, sl.off_u);
  add_diag(b, F.m0, sl.off_sigma, sl.off_sigma);
  add_block(b, F.C_tau_a0, sl.off_sigma, sl.off_sighat);
  add_block(b, F.P0_a0, sl.off_sigma, sl.off_sigma, -1.0);
  // sigma_hat conservativity row
  add_block(b, F.Bs_fac, sl.off_sighat, sl.off_u);
  add_block(b, F.Dhat_a0, sl.off_sighat, sl.off_sighat, -1.0);
  add_block(b, F.C_tau_a0_t, sl.off_sighat, sl.off_sigma);
  // rho constraint row
  add_block(b, F.Br_vol, sl.off_rho, sl.off_u, -1.0);
  add_diag(b, F.m2, sl.off_rho, sl.off_rho);
  add_block(b, F.C_eta, sl.off_rho, sl.off_uhat);
  // u_hat conservativity row (oriented for a positive diagonal)
  add_block(b, F.Dhat_a1, sl.off_uhat, sl.off_uhat);
  add_block(b, F.Br_fac, sl.off_uhat, sl.off_u, -1.0);
  add_block(b, F.C_eta_t, sl.off_uhat, sl.off_rho, -1.0);
  return b.build();
}

inline std::vector<std::vector<int>> ms_stage_blocks(const SpaceLayout& lo) {
  MsStageLayout sl(lo);
  std::vector<std::vector<int>> blocks;
  for (int e = 0; e < lo.num_elements; ++e) {
    std::vector<int> up;
    for (int i = 0; i < 2 * lo.d0; ++i) {
      up.push_back(sl.off_u + e * 2 * lo.d0 + i);
      up.push_back(sl.off_p + e * 2 * lo.d0 + i);
    }
    blocks.push_back(std::move(up));
    std::vector<int> s, r;
    for (int i = 0; i < lo.d0; ++i) {
      s.push_back(sl.off_sigma + lo.idx0(e, i));
      r.push_back(sl.off_rho + lo.idx2(e, i));
    }
    blocks.push_back(std::move(s));
    blocks.push_back(std::move(r));
  }
  for (int f = 0; f < lo.num_facets; ++f) {
    std::vector<int> sh, uh;
    for (int m = 0; m < lo.trace_modes(); ++m) {
      sh.push_back(sl.off_sighat + lo.idxtr(f, m));
      uh.push_back(sl.off_uhat + lo.idxtr(f, m));
    }
    blocks.push_back(std::move(sh));
    blocks.push_back(std::move(uh));
  }
  return blocks;
}

// Mixed midpoint stage: (M - gamma A) y* = M y0 (+ nonlinear Newton terms).
inline SparseMatrix build_mixed_stage_matrix(const MixedOperator& M, double gamma) {
  SparseBuilder b(M.ny, M.ny);
  add_diag(b, M.mdiag, 0, 0);
  add_block(b, M.A, 0, 0, -gamma);
  return b.build();
}

inline std::vector<std::vector<int>> mixed_stage_blocks(const MixedOperator& M) {
  const SpaceLayout& lo = M.forms->fe->layout;
  std::vector<std::vector<int>> blocks;
  for (int e = 0; e < lo.num_elements; ++e) {
    std::vector<int> idx;
    for (int i = 0; i < lo.d0; ++i) idx.push_back(M.off_sigma + lo.idx0(e, i));
    for (int i = 0; i < 2 * lo.d0; ++i) idx.push_back(M.off_u + e * 2 * lo.d0 + i);
    for (int i = 0; i < lo.d0; ++i) idx.push_back(M.off_rho + lo.idx2(e, i));
    for (int i = 0; i < 2 * lo.d0; ++i) idx.push_back(M.off_p + e * 2 * lo.d0 + i);
    blocks.push_back(std::move(idx));
  }
  return blocks;
}

}  // namespace hodgewave
