#include <catch2/catch_amalgamated.hpp>

#include "hodgewave/basis.hpp"
#include "hodgewave/core.hpp"

using namespace hodgewave;

TEST_CASE("degree 0 basis is the constant sqrt(2)", "[basis]") {
  TriBasis b = reference_basis(0);
  REQUIRE(b.dim == 1);
  REQUIRE(std::abs(b.eval(0, {0.3, 0.1}) - std::sqrt(2.0)) < 1e-14);
}

TEST_CASE("Gram matrix is the identity under exact quadrature", "[basis]") {
  for (int r : {1, 3}) {
    TriBasis b = reference_basis(r);
    QuadRule q = triangle_quadrature(2 * r);
    // quadrature-side evaluation roundoff grows mildly with the degree
    double tol = (r <= 1) ? 1e-13 : 5e-13;
    for (int i = 0; i < b.dim; ++i) {
      for (int j = 0; j <= i; ++j) {
        double s = 0.0;
        for (int k = 0; k < q.size(); ++k)
          s += q.weights[k] * b.eval(i, q.points[k]) * b.eval(j, q.points[k]);
        REQUIRE(std::abs(s - (i == j ? 1.0 : 0.0)) < tol);
      }
    }
  }
  // at the top supported degree, check orthonormality at the coefficient
  // level against the exact monomial moments
  TriBasis b5 = reference_basis(5);
  for (int i = 0; i < b5.dim; ++i)
    for (int j = 0; j <= i; ++j) {
      long double s = 0.0L;
      for (int k = 0; k <= i; ++k)
        for (int l = 0; l <= j; ++l)
          s += (long double)b5.coeffs[i][k] * b5.coeffs[j][l] *
               triangle_monomial_moment(b5.powers[k][0] + b5.powers[l][0],
                                        b5.powers[k][1] + b5.powers[l][1]);
      REQUIRE(std::abs(double(s) - (i == j ? 1.0 : 0.0)) < 1e-12);
    }
}

TEST_CASE("cubic monomials are reproduced exactly at r=3", "[basis]") {
  TriBasis b = reference_basis(3);
  REQUIRE(b.dim == 10);
  QuadRule q = triangle_quadrature(6);
  Rng rng(7);
  for (auto [a, c] : std::vector<std::pair<int, int>>{{3, 0}, {2, 1}, {1, 2}, {0, 3}}) {
    // project x^a y^c onto the basis with the exact-moment oracle, then
    // compare pointwise
    VecX coeff(b.dim, 0.0);
    for (int i = 0; i < b.dim; ++i)
      for (int k = 0; k <= i; ++k)
        coeff[i] += b.coeffs[i][k] *
                    triangle_monomial_moment(b.powers[k][0] + a, b.powers[k][1] + c);
    for (int trial = 0; trial < 20; ++trial) {
      double x = rng.uniform01(), y = rng.uniform01() * (1.0 - x);
      double exact = std::pow(x, a) * std::pow(y, c);
      double approx = 0.0;
      for (int i = 0; i < b.dim; ++i) approx += coeff[i] * b.eval(i, {x, y});
      REQUIRE(std::abs(approx - exact) < 1e-12);
    }
  }
}

TEST_CASE("basis gradients match finite differences", "[basis]") {
  TriBasis b = reference_basis(4);
  double h = 1e-6;
  for (int i = 0; i < b.dim; ++i) {
    Vec2 p{0.21, 0.34};
    Vec2 g = b.grad(i, p);
    double gx = (b.eval(i, {p.x + h, p.y}) - b.eval(i, {p.x - h, p.y})) / (2 * h);
    double gy = (b.eval(i, {p.x, p.y + h}) - b.eval(i, {p.x, p.y - h})) / (2 * h);
    REQUIRE(std::abs(g.x - gx) < 1e-6);
    REQUIRE(std::abs(g.y - gy) < 1e-6);
  }
}

TEST_CASE("unsupported degrees are rejected", "[basis]") {
  REQUIRE_THROWS_AS(reference_basis(6), config_error);
  REQUIRE_THROWS_AS(reference_basis(-1), config_error);
}

TEST_CASE("edge basis is orthonormal on [0,1]", "[basis]") {
  QuadRule q = edge_quadrature(10);
  for (int m = 0; m <= 5; ++m)
    for (int n = 0; n <= m; ++n) {
      double s = 0.0;
      for (int k = 0; k < q.size(); ++k)
        s += q.weights[k] * edge_basis_eval(m, q.points[k].x) * edge_basis_eval(n, q.points[k].x);
      REQUIRE(std::abs(s - (m == n ? 1.0 : 0.0)) < 1e-14);
    }
}
