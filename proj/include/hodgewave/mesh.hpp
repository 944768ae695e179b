#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>

#include "hodgewave/core.hpp"

namespace hodgewave {

struct FacetSide {
  int elem = -1;
  int local_edge = -1;  // edge i joins triangle vertices i and (i+1)%3
};

// A logical facet. Periodically identified edge pairs form one facet whose
// minus side lives on a translated copy of the plus edge; a_minus/b_minus are
// the minus-side physical coordinates matching parameter t=0 and t=1.
struct Facet {
  std::array<int, 2> verts{-1, -1};  // plus-side endpoints, ascending index
  FacetSide plus;
  std::optional<FacetSide> minus;
  Vec2 normal;  // unit, outward from the plus element
  double length = 0.0;
  Vec2 a_plus, b_plus;
  Vec2 a_minus, b_minus;
  bool periodic = false;
  bool two_sided() const { return minus.has_value(); }
};

struct Mesh {
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<Facet> facets;
  std::vector<std::array<int, 3>> elem_facet;       // facet index per local edge
  std::vector<std::array<int, 3>> elem_facet_sign;  // +1 plus side, -1 minus side

  int num_elements() const { return int(triangles.size()); }
  int num_facets() const { return int(facets.size()); }

  double signed_area(int e) const {
    const auto& t = triangles[e];
    return 0.5 * cross(vertices[t[1]] - vertices[t[0]], vertices[t[2]] - vertices[t[0]]);
  }

  double total_area() const {
    double a = 0.0;
    for (int e = 0; e < num_elements(); ++e) a += signed_area(e);
    return a;
  }

  double max_edge_length() const {
    double h = 0.0;
    for (int e = 0; e < num_elements(); ++e)
      for (int k = 0; k < 3; ++k)
        h = std::max(h, norm(vertices[triangles[e][k]] - vertices[triangles[e][(k + 1) % 3]]));
    return h;
  }

  // Physical point on a facet side at parameter t in [0,1].
  Vec2 facet_point(int f, int side_sign, double t) const {
    const Facet& fc = facets[f];
    if (side_sign > 0) return fc.a_plus + t * (fc.b_plus - fc.a_plus);
    return fc.a_minus + t * (fc.b_minus - fc.a_minus);
  }
};

// Affine map from the reference triangle to element e.
struct RefMap {
  Vec2 v0;
  double j[2][2];     // columns are edge vectors
  double inv_t[2][2]; // inverse transpose, for gradient pushforward
  double det = 0.0;

  Vec2 to_physical(Vec2 ref) const {
    return {v0.x + j[0][0] * ref.x + j[0][1] * ref.y,
            v0.y + j[1][0] * ref.x + j[1][1] * ref.y};
  }
  Vec2 to_reference(Vec2 phys) const {
    double dx = phys.x - v0.x, dy = phys.y - v0.y;
    return {(j[1][1] * dx - j[0][1] * dy) / det, (-j[1][0] * dx + j[0][0] * dy) / det};
  }
  Vec2 push_gradient(Vec2 ref_grad) const {
    return {inv_t[0][0] * ref_grad.x + inv_t[0][1] * ref_grad.y,
            inv_t[1][0] * ref_grad.x + inv_t[1][1] * ref_grad.y};
  }
};

inline RefMap ref_map(const Mesh& m, int e) {
  const auto& t = m.triangles[e];
  RefMap r;
  r.v0 = m.vertices[t[0]];
  Vec2 e1 = m.vertices[t[1]] - r.v0, e2 = m.vertices[t[2]] - r.v0;
  r.j[0][0] = e1.x;
  r.j[1][0] = e1.y;
  r.j[0][1] = e2.x;
  r.j[1][1] = e2.y;
  r.det = e1.x * e2.y - e1.y * e2.x;
  require(r.det > 0, "ref_map: inverted element " + std::to_string(e));
  r.inv_t[0][0] = r.j[1][1] / r.det;
  r.inv_t[0][1] = -r.j[1][0] / r.det;
  r.inv_t[1][0] = -r.j[0][1] / r.det;
  r.inv_t[1][1] = r.j[0][0] / r.det;
  return r;
}

namespace detail {

struct EdgeRec {
  std::array<int, 2> verts;  // ascending vertex indices
  std::vector<FacetSide> sides;
};

// Canonical edge enumeration: ascending (vmin, vmax) pairs.
inline std::vector<EdgeRec> collect_edges(const Mesh& m) {
  std::map<std::array<int, 2>, std::vector<FacetSide>> emap;
  for (int e = 0; e < m.num_elements(); ++e) {
    for (int k = 0; k < 3; ++k) {
      int a = m.triangles[e][k], b = m.triangles[e][(k + 1) % 3];
      std::array<int, 2> key{std::min(a, b), std::max(a, b)};
      emap[key].push_back({e, k});
    }
  }
  std::vector<EdgeRec> edges;
  for (auto& [key, sides] : emap) {
    require(sides.size() <= 2, "mesh: non-manifold edge (" + std::to_string(key[0]) + "," +
                                   std::to_string(key[1]) + ")");
    edges.push_back({key, sides});
  }
  return edges;
}

inline Vec2 outward_normal(const Mesh& m, const FacetSide& side, Vec2 a, Vec2 b) {
  Vec2 d = b - a;
  double len = norm(d);
  Vec2 n{d.y / len, -d.x / len};
  // flip toward the exterior: the opposite vertex must be on the inside
  Vec2 opp = m.vertices[m.triangles[side.elem][(side.local_edge + 2) % 3]];
  Vec2 mid = 0.5 * (a + b);
  if (dot(n, opp - mid) > 0) n = {-n.x, -n.y};
  return n;
}

// Assemble facet records from edge records plus a list of periodic pairs
// (indices into the canonical edge enumeration).
inline void build_facets(Mesh& m, std::vector<EdgeRec> edges,
                         const std::vector<std::array<int, 2>>& periodic_pairs) {
  std::vector<char> consumed(edges.size(), 0);
  m.facets.clear();

  auto push_facet = [&](const EdgeRec& plus_edge, const EdgeRec* minus_edge) {
    Facet f;
    f.verts = plus_edge.verts;
    f.plus = plus_edge.sides[0];
    f.a_plus = m.vertices[f.verts[0]];
    f.b_plus = m.vertices[f.verts[1]];
    f.length = norm(f.b_plus - f.a_plus);
    require(f.length > 0, "mesh: degenerate edge");
    if (minus_edge == nullptr) {
      if (plus_edge.sides.size() == 2) {
        // interior facet, both sides on the same physical edge
        f.minus = plus_edge.sides[1];
        if (f.minus->elem < f.plus.elem) std::swap(f.plus, *f.minus);
        f.a_minus = f.a_plus;
        f.b_minus = f.b_plus;
      }
    } else {
      // periodic identification by translation
      f.periodic = true;
      FacetSide ms = minus_edge->sides[0];
      Vec2 c = m.vertices[minus_edge->verts[0]], d = m.vertices[minus_edge->verts[1]];
      require(std::abs(norm(d - c) - f.length) < 1e-12 * (1.0 + f.length),
              "mesh: periodic pair has mismatched edge lengths");
      Vec2 shift = 0.5 * ((f.a_plus + f.b_plus) - (c + d));
      Vec2 am = f.a_plus - shift, bm = f.b_plus - shift;
      double tol = 1e-10 * (1.0 + f.length);
      bool direct = norm(am - c) < tol && norm(bm - d) < tol;
      bool swapped = norm(am - d) < tol && norm(bm - c) < tol;
      require(direct || swapped, "mesh: periodic pair is not a translation");
      f.a_minus = am;
      f.b_minus = bm;
      f.minus = ms;
      if (ms.elem < f.plus.elem) {
        // keep "plus = lower element index": swap roles, re-anchor on the
        // other physical edge
        std::swap(f.plus, *f.minus);
        std::swap(f.a_plus, f.a_minus);
        std::swap(f.b_plus, f.b_minus);
        f.verts = minus_edge->verts;
        if (swapped) {
          // canonical order on the new plus edge
          if (norm(f.a_plus - m.vertices[f.verts[0]]) > tol) {
            std::swap(f.a_plus, f.b_plus);
            std::swap(f.a_minus, f.b_minus);
          }
        }
      }
    }
    f.normal = outward_normal(m, f.plus, f.a_plus, f.b_plus);
    m.facets.push_back(f);
  };

  for (const auto& pr : periodic_pairs) {
    int ia = pr[0], ib = pr[1];
    require(ia >= 0 && ia < int(edges.size()) && ib >= 0 && ib < int(edges.size()) && ia != ib,
            "mesh: invalid periodic pair indices");
    require(!consumed[ia] && !consumed[ib], "mesh: edge appears in two periodic pairs");
    require(edges[ia].sides.size() == 1 && edges[ib].sides.size() == 1,
            "mesh: periodic pair must join boundary edges");
    consumed[ia] = consumed[ib] = 1;
    push_facet(edges[ia], &edges[ib]);
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (!consumed[i]) push_facet(edges[i], nullptr);
  }

  // adjacency
  m.elem_facet.assign(m.num_elements(), {-1, -1, -1});
  m.elem_facet_sign.assign(m.num_elements(), {0, 0, 0});
  for (int f = 0; f < m.num_facets(); ++f) {
    const Facet& fc = m.facets[f];
    m.elem_facet[fc.plus.elem][fc.plus.local_edge] = f;
    m.elem_facet_sign[fc.plus.elem][fc.plus.local_edge] = +1;
    if (fc.minus) {
      m.elem_facet[fc.minus->elem][fc.minus->local_edge] = f;
      m.elem_facet_sign[fc.minus->elem][fc.minus->local_edge] = -1;
    }
  }
  for (int e = 0; e < m.num_elements(); ++e)
    for (int k = 0; k < 3; ++k)
      require(m.elem_facet[e][k] >= 0, "mesh: element edge missing a facet record");
}

}  // namespace detail

inline void validate_mesh(const Mesh& m) {
  for (int e = 0; e < m.num_elements(); ++e) {
    for (int k = 0; k < 3; ++k)
      require(m.triangles[e][k] >= 0 && m.triangles[e][k] < int(m.vertices.size()),
              "mesh: vertex index out of range in triangle " + std::to_string(e));
    require(m.signed_area(e) > 0,
            "mesh: triangle " + std::to_string(e) + " has nonpositive area (clockwise?)");
  }
}

inline Mesh build_periodic_rect_mesh(int nx, int ny, double lx, double ly, bool periodic_x,
                                     bool periodic_y) {
  require(nx >= 1 && ny >= 1, "build_periodic_rect_mesh: nx, ny must be >= 1");
  require(lx > 0 && ly > 0, "build_periodic_rect_mesh: Lx, Ly must be positive");
  Mesh m;
  int npx = nx + 1, npy = ny + 1;
  auto vid = [&](int i, int j) { return j * npx + i; };
  for (int j = 0; j < npy; ++j)
    for (int i = 0; i < npx; ++i)
      m.vertices.push_back({lx * double(i) / nx, ly * double(j) / ny});
  // each cell split along its lower-left to upper-right diagonal
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int v00 = vid(i, j), v10 = vid(i + 1, j), v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
      m.triangles.push_back({v00, v10, v11});
      m.triangles.push_back({v00, v11, v01});
    }
  }
  validate_mesh(m);

  auto edges = detail::collect_edges(m);
  std::map<std::array<int, 2>, int> edge_index;
  for (std::size_t i = 0; i < edges.size(); ++i) edge_index[edges[i].verts] = int(i);
  auto ekey = [&](int a, int b) {
    return std::array<int, 2>{std::min(a, b), std::max(a, b)};
  };
  std::vector<std::array<int, 2>> pairs;
  if (periodic_x) {
    for (int j = 0; j < ny; ++j)
      pairs.push_back({edge_index.at(ekey(vid(0, j), vid(0, j + 1))),
                       edge_index.at(ekey(vid(nx, j), vid(nx, j + 1)))});
  }
  if (periodic_y) {
    for (int i = 0; i < nx; ++i)
      pairs.push_back({edge_index.at(ekey(vid(i, 0), vid(i + 1, 0))),
                       edge_index.at(ekey(vid(i, ny), vid(i + 1, ny)))});
  }
  detail::build_facets(m, edges, pairs);
  return m;
}

struct FacetGeometry {
  Vec2 normal;
  double length;
  Vec2 midpoint;
};

inline FacetGeometry facet_geometry(const Mesh& m, int f) {
  require(f >= 0 && f < m.num_facets(), "facet_geometry: facet index out of range");
  const Facet& fc = m.facets[f];
  return {fc.normal, fc.length, 0.5 * (fc.a_plus + fc.b_plus)};
}

// ASCII format: first data line "NV NT NP"; NV lines "x y"; NT lines
// "v0 v1 v2"; NP lines "edgeA edgeB" indexing the canonical edge enumeration
// (ascending sorted endpoint pairs). '#' starts a comment.
inline Mesh load_mesh(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto next_tokens = [&](int expected) {
    while (std::getline(in, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      std::istringstream ls(line);
      std::vector<double> vals;
      double v;
      while (ls >> v) vals.push_back(v);
      if (vals.empty()) continue;
      require(int(vals.size()) == expected, "mesh parse error at line " + std::to_string(lineno) +
                                                ": expected " + std::to_string(expected) +
                                                " values");
      return vals;
    }
    throw config_error("mesh parse error: unexpected end of file after line " +
                       std::to_string(lineno));
  };

  auto header = next_tokens(3);
  int nv = int(header[0]), nt = int(header[1]), np = int(header[2]);
  require(nv >= 3 && nt >= 1 && np >= 0, "mesh parse error: bad header counts");
  Mesh m;
  for (int i = 0; i < nv; ++i) {
    auto v = next_tokens(2);
    m.vertices.push_back({v[0], v[1]});
  }
  for (int i = 0; i < nt; ++i) {
    auto v = next_tokens(3);
    m.triangles.push_back({int(v[0]), int(v[1]), int(v[2])});
  }
  std::vector<std::array<int, 2>> pairs;
  for (int i = 0; i < np; ++i) {
    auto v = next_tokens(2);
    pairs.push_back({int(v[0]), int(v[1])});
  }
  validate_mesh(m);
  auto edges = detail::collect_edges(m);
  detail::build_facets(m, edges, pairs);
  return m;
}

inline std::string save_mesh(const Mesh& m) {
  // recover periodic pairs in canonical edge enumeration
  std::map<std::array<int, 2>, int> edge_index;
  {
    int idx = 0;
    std::map<std::array<int, 2>, int> seen;
    for (int e = 0; e < m.num_elements(); ++e)
      for (int k = 0; k < 3; ++k) {
        int a = m.triangles[e][k], b = m.triangles[e][(k + 1) % 3];
        std::array<int, 2> key{std::min(a, b), std::max(a, b)};
        seen[key] = 1;
      }
    for (auto& [key, unused] : seen) edge_index[key] = idx++;
  }
  auto side_key = [&](const FacetSide& s) {
    int a = m.triangles[s.elem][s.local_edge], b = m.triangles[s.elem][(s.local_edge + 1) % 3];
    return std::array<int, 2>{std::min(a, b), std::max(a, b)};
  };
  std::ostringstream out;
  out.precision(17);
  std::vector<std::array<int, 2>> pairs;
  for (const Facet& f : m.facets)
    if (f.periodic) pairs.push_back({edge_index.at(side_key(f.plus)), edge_index.at(side_key(*f.minus))});
  out << m.vertices.size() << " " << m.triangles.size() << " " << pairs.size() << "\n";
  for (const Vec2& v : m.vertices) out << v.x << " " << v.y << "\n";
  for (const auto& t : m.triangles) out << t[0] << " " << t[1] << " " << t[2] << "\n";
  for (const auto& p : pairs) out << p[0] << " " << p[1] << "\n";
  return out.str();
}

}  // namespace hodgewave
