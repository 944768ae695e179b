#pragma once

#include <cmath>

#include "hodgewave/core.hpp"

namespace hodgewave {

// Quadrature on the reference triangle {x,y >= 0, x+y <= 1} (weights sum to
// 1/2) or on the reference edge [0,1] (weights sum to 1).
struct QuadRule {
  std::vector<Vec2> points;  // edge rules store the parameter in .x
  std::vector<double> weights;
  int order = 0;  // exact for total degree <= order
  int size() const { return int(weights.size()); }
};

namespace detail {

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
inline void gauss_legendre(int n, std::vector<double>& xs, std::vector<double>& ws) {
  xs.assign(n, 0.0);
  ws.assign(n, 0.0);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    xs[i] = -x;
    xs[n - 1 - i] = x;
    ws[i] = ws[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

}  // namespace detail

constexpr int kMaxTriangleQuadOrder = 30;

// Gauss rule on [0,1], exact for polynomials of degree <= order.
inline QuadRule edge_quadrature(int order) {
  require(order >= 0, "edge_quadrature: order must be nonnegative");
  int n = (order + 2) / 2;  // ceil((order+1)/2)
  std::vector<double> xs, ws;
  detail::gauss_legendre(n, xs, ws);
  QuadRule q;
  q.order = order;
  q.points.resize(n);
  q.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    q.points[i] = {0.5 * (xs[i] + 1.0), 0.0};
    q.weights[i] = 0.5 * ws[i];
  }
  return q;
}

// Collapsed (Duffy) tensor Gauss rule on the reference triangle:
//   x = s(1-t), y = t,  dx dy = (1-t) ds dt.
// Exact for total degree <= order; all weights positive.
inline QuadRule triangle_quadrature(int order) {
  require(order >= 0 && order <= kMaxTriangleQuadOrder,
          "triangle_quadrature: unsupported order " + std::to_string(order));
  int ns = (order + 2) / 2;  // s-degree <= order
  int nt = (order + 3) / 2;  // t-degree <= order+1 after the (1-t) factor
  std::vector<double> xs, wsv, xt, wt;
  detail::gauss_legendre(ns, xs, wsv);
  detail::gauss_legendre(nt, xt, wt);
  QuadRule q;
  q.order = order;
  for (int j = 0; j < nt; ++j) {
    double t = 0.5 * (xt[j] + 1.0);
    for (int i = 0; i < ns; ++i) {
      double s = 0.5 * (xs[i] + 1.0);
      q.points.push_back({s * (1.0 - t), t});
      q.weights.push_back(0.25 * wsv[i] * wt[j] * (1.0 - t));
    }
  }
  return q;
}

// Exact reference-triangle monomial moment: integral of x^a y^b = a! b! / (a+b+2)!.
inline double triangle_monomial_moment(int a, int b) {
  long double v = 1.0L;
  // a! b! / (a+b+2)! computed as a product of ratios to stay in range
  for (int k = 1; k <= a + b + 2; ++k) v /= k;
  for (int k = 1; k <= a; ++k) v *= k;
  for (int k = 1; k <= b; ++k) v *= k;
  return double(v);
}

}  // namespace hodgewave
