#include <catch2/catch_amalgamated.hpp>

#include "hodgewave/mesh.hpp"

using namespace hodgewave;

TEST_CASE("unit square splits into two half-squares", "[mesh]") {
  Mesh m = build_periodic_rect_mesh(1, 1, 1.0, 1.0, false, false);
  REQUIRE(m.num_elements() == 2);
  REQUIRE(m.num_facets() == 5);
  REQUIRE(std::abs(m.total_area() - 1.0) < 1e-14);
}

TEST_CASE("fully periodic strip mesh", "[mesh]") {
  Mesh m = build_periodic_rect_mesh(40, 4, 1.0, 0.1, true, true);
  REQUIRE(m.num_elements() == 320);
  for (const Facet& f : m.facets) REQUIRE(f.two_sided());
  REQUIRE(m.num_facets() == 3 * 320 / 2);  // Euler count on a periodic mesh
  REQUIRE(std::abs(m.max_edge_length() - std::hypot(0.025, 0.025)) < 1e-14);
  REQUIRE(std::abs(m.total_area() - 0.1) < 1e-12 * 0.1);
}

TEST_CASE("periodicity in x only", "[mesh]") {
  Mesh m = build_periodic_rect_mesh(2, 1, 2.0, 1.0, true, false);
  int periodic = 0, one_sided = 0;
  for (const Facet& f : m.facets) {
    if (f.periodic) {
      ++periodic;
      REQUIRE(f.two_sided());
      // glued edges sit on x=0 and x=2
      REQUIRE(std::abs(f.a_plus.x - f.a_minus.x) == Catch::Approx(2.0));
    }
    if (!f.two_sided()) ++one_sided;
  }
  REQUIRE(periodic == 1);
  REQUIRE(one_sided == 4);  // two bottom and two top edges
}

TEST_CASE("plus and minus outward normals are opposite", "[mesh]") {
  Mesh m = build_periodic_rect_mesh(3, 2, 1.5, 0.8, true, true);
  for (int f = 0; f < m.num_facets(); ++f) {
    const Facet& fc = m.facets[f];
    REQUIRE(std::abs(norm(fc.normal) - 1.0) < 1e-14);
    // outward normal from the minus element equals the negated facet normal
    if (fc.minus) {
      Vec2 mid = 0.5 * (fc.a_minus + fc.b_minus);
      Vec2 opp = m.vertices[m.triangles[fc.minus->elem][(fc.minus->local_edge + 2) % 3]];
      REQUIRE(dot({-fc.normal.x, -fc.normal.y}, opp - mid) < 0.0);
    }
  }
}

TEST_CASE("every element edge has a facet record", "[mesh]") {
  Mesh m = build_periodic_rect_mesh(4, 3, 1.0, 1.0, true, false);
  for (int e = 0; e < m.num_elements(); ++e)
    for (int k = 0; k < 3; ++k) {
      int f = m.elem_facet[e][k];
      REQUIRE(f >= 0);
      int sign = m.elem_facet_sign[e][k];
      const Facet& fc = m.facets[f];
      if (sign > 0) {
        REQUIRE(fc.plus.elem == e);
        REQUIRE(fc.plus.local_edge == k);
      } else {
        REQUIRE(fc.minus.has_value());
        REQUIRE(fc.minus->elem == e);
      }
    }
}

TEST_CASE("facet geometry examples", "[mesh]") {
  // triangle above the segment (0,0)-(1,0): outward normal points down
  Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {0.5, 1.0}};
  m.triangles = {{0, 1, 2}};
  validate_mesh(m);
  auto edges = detail::collect_edges(m);
  detail::build_facets(m, edges, {});
  int f_bottom = -1, f_left = -1;
  for (int f = 0; f < m.num_facets(); ++f) {
    if (m.facets[f].verts == std::array<int, 2>{0, 1}) f_bottom = f;
    if (m.facets[f].verts == std::array<int, 2>{0, 2}) f_left = f;
  }
  REQUIRE(f_bottom >= 0);
  FacetGeometry g = facet_geometry(m, f_bottom);
  REQUIRE(std::abs(g.normal.x) < 1e-14);
  REQUIRE(g.normal.y == Catch::Approx(-1.0));
  REQUIRE(g.length == Catch::Approx(1.0));
  REQUIRE(f_left >= 0);
  REQUIRE_THROWS_AS(facet_geometry(m, m.num_facets()), config_error);

  // diagonal facet (0,0)-(1,1) on the unit-square mesh
  Mesh sq = build_periodic_rect_mesh(1, 1, 1.0, 1.0, false, false);
  for (int f = 0; f < sq.num_facets(); ++f) {
    if (sq.facets[f].two_sided()) {
      FacetGeometry dg = facet_geometry(sq, f);
      REQUIRE(dg.length == Catch::Approx(std::sqrt(2.0)));
      REQUIRE(std::abs(std::abs(dg.normal.x) - 1.0 / std::sqrt(2.0)) < 1e-14);
      REQUIRE(std::abs(dg.normal.x + dg.normal.y) < 1e-14);  // +-(1,-1)/sqrt(2)
    }
  }
}

TEST_CASE("mesh file round trip preserves adjacency", "[mesh]") {
  Mesh m = build_periodic_rect_mesh(3, 2, 1.0, 0.5, true, true);
  Mesh m2 = load_mesh(save_mesh(m));
  REQUIRE(m2.num_elements() == m.num_elements());
  REQUIRE(m2.num_facets() == m.num_facets());
  for (int e = 0; e < m.num_elements(); ++e)
    for (int k = 0; k < 3; ++k) {
      int f1 = m.elem_facet[e][k], f2 = m2.elem_facet[e][k];
      REQUIRE(m.facets[f1].plus.elem == m2.facets[f2].plus.elem);
      bool b1 = m.facets[f1].two_sided(), b2 = m2.facets[f2].two_sided();
      REQUIRE(b1 == b2);
      if (b1) REQUIRE(m.facets[f1].minus->elem == m2.facets[f2].minus->elem);
    }
}

TEST_CASE("simple ASCII mesh loads", "[mesh]") {
  std::string txt =
      "# a single triangle\n"
      "3 1 0\n"
      "0 0\n"
      "1 0\n"
      "0 1\n"
      "0 1 2\n";
  Mesh m = load_mesh(txt);
  REQUIRE(m.num_elements() == 1);
  REQUIRE(std::abs(m.total_area() - 0.5) < 1e-15);
  int boundary = 0;
  for (const Facet& f : m.facets)
    if (!f.two_sided()) ++boundary;
  REQUIRE(boundary == 3);
}

TEST_CASE("clockwise triangles are rejected with a line number", "[mesh]") {
  std::string txt =
      "3 1 0\n"
      "0 0\n"
      "1 0\n"
      "0 1\n"
      "0 2 1\n";
  REQUIRE_THROWS_WITH(load_mesh(txt), Catch::Matchers::ContainsSubstring("nonpositive area"));
  std::string bad =
      "3 1 0\n"
      "0 0\n"
      "1 0\n";
  REQUIRE_THROWS_WITH(load_mesh(bad), Catch::Matchers::ContainsSubstring("line"));
}

TEST_CASE("invalid dimensions are rejected", "[mesh]") {
  REQUIRE_THROWS_AS(build_periodic_rect_mesh(0, 1, 1.0, 1.0, false, false), config_error);
  REQUIRE_THROWS_AS(build_periodic_rect_mesh(1, 1, -1.0, 1.0, false, false), config_error);
}

TEST_CASE("non-manifold meshes are rejected", "[mesh]") {
  // edge (0,2) is shared by three triangles
  std::string nm3 =
      "6 3 0\n"
      "0 0\n"
      "1 0\n"
      "0 1\n"
      "1 1\n"
      "-1 0\n"
      "-1 -1\n"
      "0 1 2\n"
      "0 2 4\n"
      "0 2 5\n";
  REQUIRE_THROWS_WITH(load_mesh(nm3), Catch::Matchers::ContainsSubstring("non-manifold"));
}

TEST_CASE("periodic twin facets report equal length and opposite normals", "[mesh]") {
  Mesh m = build_periodic_rect_mesh(4, 2, 2.0, 1.0, true, true);
  for (const Facet& f : m.facets) {
    if (!f.periodic) continue;
    REQUIRE(norm(f.b_minus - f.a_minus) == Catch::Approx(f.length));
    // translation gluing: edge vectors agree
    Vec2 d1 = f.b_plus - f.a_plus, d2 = f.b_minus - f.a_minus;
    REQUIRE(norm(d1 - d2) < 1e-13);
  }
}
