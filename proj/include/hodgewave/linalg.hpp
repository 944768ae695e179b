#pragma once

#include <algorithm>
#include <tuple>

#include "hodgewave/core.hpp"

namespace hodgewave {

// Compressed sparse row, strictly increasing column indices per row.
// Row-major accumulation keeps spmv summation order deterministic.
struct SparseMatrix {
  int nrows = 0, ncols = 0;
  std::vector<int> row_ptr;
  std::vector<int> col;
  std::vector<double> val;

  void multiply(const VecX& x, VecX& y) const {
    y.assign(nrows, 0.0);
    for (int i = 0; i < nrows; ++i) {
      double s = 0.0;
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
      y[i] = s;
    }
  }
  // y += scale * A x
  void multiply_add(const VecX& x, VecX& y, double scale = 1.0) const {
    for (int i = 0; i < nrows; ++i) {
      double s = 0.0;
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
      y[i] += scale * s;
    }
  }
  // y += scale * A^T x
  void multiply_transpose_add(const VecX& x, VecX& y, double scale = 1.0) const {
    for (int i = 0; i < nrows; ++i) {
      double xi = scale * x[i];
      for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) y[col[k]] += val[k] * xi;
    }
  }
};

inline VecX spmv(const SparseMatrix& a, const VecX& x) {
  require(int(x.size()) == a.ncols, "spmv: dimension mismatch");
  VecX y;
  a.multiply(x, y);
  return y;
}

struct SparseBuilder {
  int nrows = 0, ncols = 0;
  std::vector<std::tuple<int, int, double>> entries;

  SparseBuilder(int nr, int nc) : nrows(nr), ncols(nc) {}
  void add(int i, int j, double v) {
    if (v != 0.0) entries.emplace_back(i, j, v);
  }
  SparseMatrix build() const {
    std::vector<std::tuple<int, int, double>> e = entries;
    std::stable_sort(e.begin(), e.end(), [](const auto& a, const auto& b) {
      return std::make_pair(std::get<0>(a), std::get<1>(a)) <
             std::make_pair(std::get<0>(b), std::get<1>(b));
    });
    SparseMatrix m;
    m.nrows = nrows;
    m.ncols = ncols;
    m.row_ptr.assign(nrows + 1, 0);
    for (std::size_t k = 0; k < e.size();) {
      int i = std::get<0>(e[k]), j = std::get<1>(e[k]);
      double s = 0.0;
      while (k < e.size() && std::get<0>(e[k]) == i && std::get<1>(e[k]) == j)
        s += std::get<2>(e[k++]);
      m.col.push_back(j);
      m.val.push_back(s);
      m.row_ptr[i + 1]++;
    }
    for (int i = 0; i < nrows; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
    return m;
  }
};

inline SparseMatrix transpose(const SparseMatrix& a) {
  SparseBuilder b(a.ncols, a.nrows);
  for (int i = 0; i < a.nrows; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) b.add(a.col[k], i, a.val[k]);
  return b.build();
}

inline SparseMatrix sparse_add(const SparseMatrix& a, const SparseMatrix& b, double ca = 1.0,
                               double cb = 1.0) {
  require(a.nrows == b.nrows && a.ncols == b.ncols, "sparse_add: dimension mismatch");
  SparseBuilder out(a.nrows, a.ncols);
  for (int i = 0; i < a.nrows; ++i)
    for (int k = a.row_ptr[i]; k < a.row_ptr[i + 1]; ++k) out.add(i, a.col[k], ca * a.val[k]);
  for (int i = 0; i < b.nrows; ++i)
    for (int k = b.row_ptr[i]; k < b.row_ptr[i + 1]; ++k) out.add(i, b.col[k], cb * b.val[k]);
  return out.build();
}

inline SparseMatrix sparse_multiply(const SparseMatrix& a, const SparseMatrix& b) {
  require(a.ncols == b.nrows, "sparse_multiply: dimension mismatch");
  SparseBuilder out(a.nrows, b.ncols);
  for (int i = 0; i < a.nrows; ++i)
    for (int ka = a.row_ptr[i]; ka < a.row_ptr[i + 1]; ++ka) {
      int j = a.col[ka];
      double v = a.val[ka];
      for (int kb = b.row_ptr[j]; kb < b.row_ptr[j + 1]; ++kb)
        out.add(i, b.col[kb], v * b.val[kb]);
    }
  return out.build();
}

// Small dense matrix with LU solve, used for preconditioner blocks and local
// eliminations.
struct DenseLU {
  int n = 0;
  std::vector<double> a;  // row-major, factored in place
  std::vector<int> piv;

  void factor(std::vector<double> mat, int size) {
    n = size;
    a = std::move(mat);
    piv.resize(n);
    for (int k = 0; k < n; ++k) {
      int p = k;
      for (int i = k + 1; i < n; ++i)
        if (std::abs(a[i * n + k]) > std::abs(a[p * n + k])) p = i;
      piv[k] = p;
      if (p != k)
        for (int j = 0; j < n; ++j) std::swap(a[k * n + j], a[p * n + j]);
      double d = a[k * n + k];
      if (d == 0.0) throw solver_error("DenseLU: singular block");
      for (int i = k + 1; i < n; ++i) {
        double l = a[i * n + k] / d;
        a[i * n + k] = l;
        for (int j = k + 1; j < n; ++j) a[i * n + j] -= l * a[k * n + j];
      }
    }
  }
  void solve_in_place(double* x) const {
    // all row interchanges first; the stored multipliers are in the final
    // row order, so they must not be interleaved with the swaps
    for (int k = 0; k < n; ++k)
      if (piv[k] != k) std::swap(x[k], x[piv[k]]);
    for (int k = 0; k < n; ++k)
      for (int i = k + 1; i < n; ++i) x[i] -= a[i * n + k] * x[k];
    for (int i = n - 1; i >= 0; --i) {
      for (int j = i + 1; j < n; ++j) x[i] -= a[i * n + j] * x[j];
      x[i] /= a[i * n + i];
    }
  }
};

// Block-Jacobi preconditioner over explicit index groups (element dof blocks
// and facet trace blocks).
struct BlockJacobi {
  std::vector<std::vector<int>> blocks;
  std::vector<DenseLU> lu;

  BlockJacobi() = default;
  BlockJacobi(const SparseMatrix& a, std::vector<std::vector<int>> groups)
      : blocks(std::move(groups)) {
    lu.resize(blocks.size());
    for (std::size_t g = 0; g < blocks.size(); ++g) {
      const auto& idx = blocks[g];
      int n = int(idx.size());
      std::vector<double> dense(std::size_t(n) * n, 0.0);
      std::vector<int> where(a.ncols, -1);
      for (int c = 0; c < n; ++c) where[idx[c]] = c;
      for (int r = 0; r < n; ++r) {
        int row = idx[r];
        for (int k = a.row_ptr[row]; k < a.row_ptr[row + 1]; ++k) {
          int c = where[a.col[k]];
          if (c >= 0) dense[std::size_t(r) * n + c] = a.val[k];
        }
      }
      lu[g].factor(std::move(dense), n);
    }
  }

  void apply(const VecX& r, VecX& z) const {
    z = r;
    VecX tmp;
    for (std::size_t g = 0; g < blocks.size(); ++g) {
      const auto& idx = blocks[g];
      tmp.resize(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) tmp[k] = r[idx[k]];
      lu[g].solve_in_place(tmp.data());
      for (std::size_t k = 0; k < idx.size(); ++k) z[idx[k]] = tmp[k];
    }
  }
};

struct SolveInfo {
  int iterations = 0;
  double rel_residual = 0.0;
  bool converged = false;
};

// Conjugate gradients on a matrix-free SPD operator with a diagonal
// preconditioner (pass empty for none).
template <class Apply>
inline SolveInfo solve_spd_operator(Apply&& apply, const VecX& b, VecX& x, double tol,
                                    int maxit, const VecX& inv_diag) {
  int n = int(b.size());
  if (int(x.size()) != n) x.assign(n, 0.0);
  double bnorm = norm(b);
  if (bnorm == 0.0) {
    x.assign(n, 0.0);
    return {0, 0.0, true};
  }
  VecX r = b;
  if (norm(x) != 0.0) {
    VecX ax = apply(x);
    axpy(-1.0, ax, r);
  }
  auto precond = [&](const VecX& v) {
    if (inv_diag.empty()) return v;
    VecX z(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) z[i] = inv_diag[i] * v[i];
    return z;
  };
  VecX z = precond(r), p = z;
  double rz = dot(r, z);
  double rel = norm(r) / bnorm;
  if (rel <= tol) return {0, rel, true};
  for (int it = 1; it <= maxit; ++it) {
    VecX q = apply(p);
    double pq = dot(p, q);
    if (pq <= 0.0) throw solver_error("solve_spd_operator: nonpositive curvature");
    double alpha = rz / pq;
    axpy(alpha, p, x);
    axpy(-alpha, q, r);
    rel = norm(r) / bnorm;
    if (rel <= tol) return {it, rel, true};
    z = precond(r);
    double rz_new = dot(r, z);
    double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return {maxit, rel, false};
}

// Conjugate gradients for SPD systems; optional block-Jacobi preconditioner.
// Nonpositive curvature reports an SPD violation.
inline SolveInfo solve_spd(const SparseMatrix& a, const VecX& b, VecX& x, double tol = 1e-13,
                           int maxit = -1, const BlockJacobi* pre = nullptr) {
  require(a.nrows == a.ncols && int(b.size()) == a.nrows, "solve_spd: dimension mismatch");
  int n = a.nrows;
  if (maxit < 0) maxit = 3 * n + 50;
  x.assign(n, 0.0);
  double bnorm = norm(b);
  if (bnorm == 0.0) return {0, 0.0, true};
  VecX r = b, z, p, q(n);
  if (pre)
    pre->apply(r, z);
  else
    z = r;
  p = z;
  double rz = dot(r, z);
  for (int it = 1; it <= maxit; ++it) {
    a.multiply(p, q);
    double pq = dot(p, q);
    if (pq <= 0.0)
      throw solver_error("solve_spd: nonpositive curvature, matrix is not SPD");
    double alpha = rz / pq;
    axpy(alpha, p, x);
    axpy(-alpha, q, r);
    double rel = norm(r) / bnorm;
    if (rel <= tol) return {it, rel, true};
    if (pre)
      pre->apply(r, z);
    else
      z = r;
    double rz_new = dot(r, z);
    double beta = rz_new / rz;
    rz = rz_new;
    for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  throw solver_error("solve_spd: max iterations exceeded, residual " +
                     std::to_string(norm(r) / bnorm));
}

// Right-preconditioned GMRES with modified Gram-Schmidt and Givens rotations.
// restart = 0 keeps the full Krylov basis.
inline SolveInfo solve_general(const SparseMatrix& a, const VecX& b, VecX& x, double tol = 1e-13,
                               int maxit = -1, const BlockJacobi* pre = nullptr,
                               int restart = 0) {
  require(a.nrows == a.ncols && int(b.size()) == a.nrows, "solve_general: dimension mismatch");
  int n = a.nrows;
  if (maxit < 0) maxit = 4 * n + 100;
  if (restart <= 0) restart = maxit;
  x.assign(n, 0.0);
  double bnorm = norm(b);
  if (bnorm == 0.0) return {0, 0.0, true};

  int total_it = 0;
  VecX r = b;  // x = 0 initially; on restart recomputed below
  while (true) {
    double beta = norm(r);
    double rel0 = beta / bnorm;
    if (rel0 <= tol) return {total_it, rel0, true};
    int m = std::min({restart, maxit - total_it, n});
    if (m <= 0)
      throw solver_error("solve_general: max iterations exceeded, residual " +
                         std::to_string(rel0));
    std::vector<VecX> v;
    VecX v0 = r;
    scale(1.0 / beta, v0);
    v.push_back(std::move(v0));
    std::vector<std::vector<double>> hc;  // Hessenberg columns, grown on demand
    std::vector<double> cs, sn, g(1, beta);
    int j = 0;
    for (; j < m; ++j) {
      ++total_it;
      VecX w, mz;
      if (pre) {
        pre->apply(v[j], mz);
        a.multiply(mz, w);
      } else {
        a.multiply(v[j], w);
      }
      hc.emplace_back(j + 2, 0.0);
      auto& col = hc[j];
      for (int i = 0; i <= j; ++i) {
        double hij = dot(w, v[i]);
        col[i] = hij;
        axpy(-hij, v[i], w);
      }
      double hnext = norm(w);
      for (int i = 0; i < j; ++i) {
        double t1 = cs[i] * col[i] + sn[i] * col[i + 1];
        double t2 = -sn[i] * col[i] + cs[i] * col[i + 1];
        col[i] = t1;
        col[i + 1] = t2;
      }
      double denom = std::hypot(col[j], hnext);
      if (denom == 0.0) {
        cs.push_back(1.0);
        sn.push_back(0.0);
      } else {
        cs.push_back(col[j] / denom);
        sn.push_back(hnext / denom);
      }
      col[j] = denom;
      g.push_back(-sn[j] * g[j]);
      g[j] = cs[j] * g[j];
      bool happy = hnext == 0.0;
      if (!happy) {
        scale(1.0 / hnext, w);
        v.push_back(std::move(w));
      }
      if (std::abs(g[j + 1]) / bnorm <= tol || happy || total_it >= maxit || j == m - 1) {
        ++j;
        break;
      }
    }
    // back-substitute
    std::vector<double> y(j, 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int k = i + 1; k < j; ++k) s -= hc[k][i] * y[k];
      y[i] = s / hc[i][i];
    }
    VecX dx(n, 0.0);
    for (int i = 0; i < j; ++i) axpy(y[i], v[i], dx);
    if (pre) {
      VecX mdx;
      pre->apply(dx, mdx);
      axpy(1.0, mdx, x);
    } else {
      axpy(1.0, dx, x);
    }
    VecX ax;
    a.multiply(x, ax);
    r = b;
    axpy(-1.0, ax, r);
    double rel = norm(r) / bnorm;
    if (rel <= tol) return {total_it, rel, true};
    if (total_it >= maxit)
      throw solver_error("solve_general: max iterations exceeded, residual " +
                         std::to_string(rel));
  }
}

}  // namespace hodgewave
