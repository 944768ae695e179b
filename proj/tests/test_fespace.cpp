#include <catch2/catch_amalgamated.hpp>

#include "hodgewave/calculus.hpp"

using namespace hodgewave;

TEST_CASE("layout counts", "[fespace]") {
  Mesh m = build_periodic_rect_mesh(4, 3, 1.0, 1.0, true, true);
  FeSpace fe = make_fespace(m, 2);
  const SpaceLayout& lo = fe.layout;
  REQUIRE(lo.d0 == 6);
  REQUIRE(lo.n0() == m.num_elements() * 6);
  REQUIRE(lo.n1() == 2 * m.num_elements() * 6);
  REQUIRE(lo.n2() == lo.n0());
  REQUIRE(lo.ntrace() == m.num_facets() * 3);
  // offsets are disjoint and contiguous
  std::vector<char> seen(lo.n1(), 0);
  for (int e = 0; e < lo.num_elements; ++e)
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < lo.d0; ++i) {
        int idx = lo.idx1(e, c, i);
        REQUIRE(idx >= 0);
        REQUIRE(idx < lo.n1());
        REQUIRE(seen[idx] == 0);
        seen[idx] = 1;
      }
}

TEST_CASE("element mass matrices are detJ times identity", "[fespace]") {
  Mesh m = build_periodic_rect_mesh(2, 2, 1.3, 0.7, false, false);
  FeSpace fe = make_fespace(m, 3);
  for (int e = 0; e < 2; ++e) {
    for (int i = 0; i < fe.d0; ++i)
      for (int j = 0; j <= i; ++j) {
        double s = 0.0;
        for (int k = 0; k < fe.vq.size(); ++k)
          s += fe.vq.weights[k] * fe.phi[std::size_t(k) * fe.d0 + i] *
               fe.phi[std::size_t(k) * fe.d0 + j];
        s *= fe.detj[e];
        double expect = (i == j) ? fe.detj[e] : 0.0;
        REQUIRE(std::abs(s - expect) < 1e-13 * (1.0 + fe.detj[e]));
      }
  }
}

TEST_CASE("projection reproduces constants and polynomials", "[fespace]") {
  Mesh m = build_periodic_rect_mesh(3, 2, 1.0, 1.0, false, false);
  FeSpace fe = make_fespace(m, 2);
  VecX cu = l2_project(fe, 1, std::function<Vec2(Vec2)>([](Vec2) { return Vec2{1.0, 0.0}; }));
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    int e = int(rng.uniform01() * m.num_elements());
    double a = rng.uniform01(), b = rng.uniform01() * (1 - a);
    Vec2 v = eval_vector(fe, cu, e, {a, b});
    REQUIRE(std::abs(v.x - 1.0) < 1e-13);
    REQUIRE(std::abs(v.y) < 1e-13);
  }
  VecX cxy =
      l2_project(fe, 0, std::function<double(Vec2)>([](Vec2 x) { return x.x * x.y; }));
  for (int trial = 0; trial < 30; ++trial) {
    int e = int(rng.uniform01() * m.num_elements());
    double a = rng.uniform01(), b = rng.uniform01() * (1 - a);
    Vec2 x = fe.maps[e].to_physical({a, b});
    REQUIRE(std::abs(eval_scalar(fe, cxy, e, {a, b}) - x.x * x.y) < 1e-12);
  }
}

TEST_CASE("projection error of the plane wave decreases at second order", "[fespace]") {
  auto err_at = [](int nx) {
    Mesh m = build_periodic_rect_mesh(nx, std::max(1, nx / 10), 1.0, 0.1, true, true);
    FeSpace fe = make_fespace(m, 1);
    auto uex = [](Vec2 x) {
      return Vec2{0.0, std::sin(4.0 * M_PI * x.x)};
    };
    VecX c = l2_project(fe, 1, std::function<Vec2(Vec2)>(uex));
    QuadRule q = triangle_quadrature(8);
    double e2 = 0.0;
    for (int e = 0; e < m.num_elements(); ++e)
      for (int k = 0; k < q.size(); ++k) {
        Vec2 ref = q.points[k];
        Vec2 d = eval_vector(fe, c, e, ref) - uex(fe.maps[e].to_physical(ref));
        e2 += fe.detj[e] * q.weights[k] * dot(d, d);
      }
    return std::sqrt(e2);
  };
  double e1 = err_at(20), e2 = err_at(40);
  double order = std::log2(e1 / e2);
  REQUIRE(order > 1.6);
  REQUIRE(order < 2.4);
}

TEST_CASE("trace tables are exact across periodic facets", "[fespace]") {
  // A polynomial that is constant along the gluing direction is exactly
  // continuous across the periodic identification, so the trace tables must
  // agree to roundoff on every two-sided facet.
  Mesh m = build_periodic_rect_mesh(3, 2, 1.0, 0.5, true, false);
  FeSpace fe = make_fespace(m, 2);
  VecX c = l2_project(fe, 0, std::function<double(Vec2)>([](Vec2 x) {
                        return x.y * x.y + 0.3 * x.y - 1.2;
                      }));
  for (int f = 0; f < m.num_facets(); ++f) {
    const Facet& fc = m.facets[f];
    if (!fc.minus) continue;
    for (int k = 0; k < fe.eq.size(); ++k) {
      double vp = 0.0, vm = 0.0;
      for (int i = 0; i < fe.d0; ++i) {
        vp += c[fe.layout.idx0(fc.plus.elem, i)] * fe.trace_phi[f][0][std::size_t(k) * fe.d0 + i];
        vm +=
            c[fe.layout.idx0(fc.minus->elem, i)] * fe.trace_phi[f][1][std::size_t(k) * fe.d0 + i];
      }
      REQUIRE(std::abs(vp - vm) < 1e-12);
    }
  }
  // same check for the y-periodic gluing with a polynomial in x
  Mesh my = build_periodic_rect_mesh(3, 2, 1.0, 0.5, false, true);
  FeSpace fey = make_fespace(my, 2);
  VecX cy = l2_project(fey, 0, std::function<double(Vec2)>([](Vec2 x) {
                         return 0.5 * x.x * x.x - x.x + 0.25;
                       }));
  for (int f = 0; f < my.num_facets(); ++f) {
    const Facet& fc = my.facets[f];
    if (!fc.minus) continue;
    for (int k = 0; k < fey.eq.size(); ++k) {
      double vp = 0.0, vm = 0.0;
      for (int i = 0; i < fey.d0; ++i) {
        vp +=
            cy[fey.layout.idx0(fc.plus.elem, i)] * fey.trace_phi[f][0][std::size_t(k) * fey.d0 + i];
        vm += cy[fey.layout.idx0(fc.minus->elem, i)] *
              fey.trace_phi[f][1][std::size_t(k) * fey.d0 + i];
      }
      REQUIRE(std::abs(vp - vm) < 1e-12);
    }
  }
}
