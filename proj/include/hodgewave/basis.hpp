#pragma once

#include <array>

#include "hodgewave/quadrature.hpp"

namespace hodgewave {

constexpr int kMaxDegree = 5;

inline int scalar_space_dim(int r) { return (r + 1) * (r + 2) / 2; }

// Scalar modal basis on the reference triangle: monomials in graded
// lexicographic order, orthonormalized in L2 by repeated Gram-Schmidt using
// the exact monomial moments. Element mass matrices on affine elements are
// then |det J| times the identity.
struct TriBasis {
  int r = 0;
  int dim = 0;
  std::vector<std::array<int, 2>> powers;   // monomial exponents (a,b)
  std::vector<std::vector<double>> coeffs;  // coeffs[i][k]: basis i in monomial k

  double eval(int i, Vec2 p) const {
    double v = 0.0;
    for (int k = 0; k <= i; ++k)
      v += coeffs[i][k] * std::pow(p.x, powers[k][0]) * std::pow(p.y, powers[k][1]);
    return v;
  }

  Vec2 grad(int i, Vec2 p) const {
    Vec2 g{0.0, 0.0};
    for (int k = 0; k <= i; ++k) {
      int a = powers[k][0], b = powers[k][1];
      if (a > 0) g.x += coeffs[i][k] * a * std::pow(p.x, a - 1) * std::pow(p.y, b);
      if (b > 0) g.y += coeffs[i][k] * b * std::pow(p.x, a) * std::pow(p.y, b - 1);
    }
    return g;
  }
};

inline TriBasis reference_basis(int r) {
  require(r >= 0 && r <= kMaxDegree,
          "reference_basis: unsupported degree " + std::to_string(r));
  TriBasis basis;
  basis.r = r;
  basis.dim = scalar_space_dim(r);
  for (int d = 0; d <= r; ++d)
    for (int a = d; a >= 0; --a) basis.powers.push_back({a, d - a});

  const int n = basis.dim;
  std::vector<std::vector<long double>> gram(n, std::vector<long double>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      gram[i][j] = triangle_monomial_moment(basis.powers[i][0] + basis.powers[j][0],
                                            basis.powers[i][1] + basis.powers[j][1]);

  std::vector<std::vector<long double>> c(n);
  auto inner = [&](const std::vector<long double>& u, const std::vector<long double>& v) {
    long double s = 0.0L;
    for (std::size_t i = 0; i < u.size(); ++i)
      for (std::size_t j = 0; j < v.size(); ++j) s += u[i] * gram[i][j] * v[j];
    return s;
  };
  for (int i = 0; i < n; ++i) {
    std::vector<long double> v(i + 1, 0.0L);
    v[i] = 1.0L;
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j < i; ++j) {
        long double proj = inner(v, c[j]);
        for (std::size_t k = 0; k < c[j].size(); ++k) v[k] -= proj * c[j][k];
      }
    }
    long double nrm = sqrtl(inner(v, v));
    for (auto& x : v) x /= nrm;
    c[i] = v;
  }
  basis.coeffs.resize(n);
  for (int i = 0; i < n; ++i) {
    basis.coeffs[i].assign(n, 0.0);
    for (int k = 0; k <= i; ++k) basis.coeffs[i][k] = double(c[i][k]);
  }
  return basis;
}

// Legendre trace basis on the reference edge parameter t in [0,1]:
// orthonormal there; divide by sqrt(edge length) for physical orthonormality.
inline double edge_basis_eval(int m, double t) {
  double x = 2.0 * t - 1.0;
  double p0 = 1.0, p1 = x;
  if (m == 0) return 1.0;
  for (int k = 2; k <= m; ++k) {
    double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return std::sqrt(2.0 * m + 1.0) * p1;
}

}  // namespace hodgewave
