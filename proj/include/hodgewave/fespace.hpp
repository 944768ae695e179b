#pragma once

#include <functional>

#include "hodgewave/basis.hpp"
#include "hodgewave/mesh.hpp"

namespace hodgewave {

// Equal-order broken spaces: W0 and W2 are degree-r scalars per element, W1
// is two scalar copies (x then y component); each trace space has r+1
// Legendre modes per facet, shared across periodic twins.
struct SpaceLayout {
  int r = 0;
  int d0 = 0;
  int num_elements = 0;
  int num_facets = 0;

  int n0() const { return num_elements * d0; }
  int n1() const { return 2 * num_elements * d0; }
  int n2() const { return num_elements * d0; }
  int ntrace() const { return num_facets * (r + 1); }
  int trace_modes() const { return r + 1; }

  int idx0(int e, int i) const { return e * d0 + i; }
  int idx1(int e, int comp, int i) const { return e * 2 * d0 + comp * d0 + i; }
  int idx2(int e, int i) const { return e * d0 + i; }
  int idxtr(int f, int m) const { return f * (r + 1) + m; }
};

struct FeSpace {
  const Mesh* mesh = nullptr;
  int r = 0;
  int d0 = 0;
  TriBasis basis;
  SpaceLayout layout;
  QuadRule vq;     // volume rule, order 2r+3
  QuadRule vq_hi;  // volume rule for the nonlinearity, order 4r+1
  QuadRule eq;     // edge rule, order 2r+3

  std::vector<RefMap> maps;
  std::vector<double> detj;

  // reference tables at vq / vq_hi points, flattened [q*d0 + i]
  std::vector<double> phi, phi_hi;
  std::vector<Vec2> gphi;
  // edge Legendre modes at eq points, flattened [q*(r+1) + m], unscaled
  std::vector<double> chi;
  // volume basis traces at facet-side edge-quad points, flattened [q*d0 + i]
  std::vector<std::array<std::vector<double>, 2>> trace_phi;

  double facet_scale(int f) const { return 1.0 / std::sqrt(mesh->facets[f].length); }
};

inline FeSpace make_fespace(const Mesh& mesh, int r) {
  FeSpace fe;
  fe.mesh = &mesh;
  fe.r = r;
  fe.basis = reference_basis(r);
  fe.d0 = fe.basis.dim;
  fe.layout = {r, fe.d0, mesh.num_elements(), mesh.num_facets()};
  fe.vq = triangle_quadrature(2 * r + 3);
  fe.vq_hi = triangle_quadrature(4 * r + 1);
  fe.eq = edge_quadrature(2 * r + 3);

  fe.maps.reserve(mesh.num_elements());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    fe.maps.push_back(ref_map(mesh, e));
    fe.detj.push_back(fe.maps.back().det);
  }

  auto tabulate = [&](const QuadRule& q, std::vector<double>& vals, std::vector<Vec2>* grads) {
    vals.resize(std::size_t(q.size()) * fe.d0);
    if (grads) grads->resize(std::size_t(q.size()) * fe.d0);
    for (int k = 0; k < q.size(); ++k)
      for (int i = 0; i < fe.d0; ++i) {
        vals[std::size_t(k) * fe.d0 + i] = fe.basis.eval(i, q.points[k]);
        if (grads) (*grads)[std::size_t(k) * fe.d0 + i] = fe.basis.grad(i, q.points[k]);
      }
  };
  tabulate(fe.vq, fe.phi, &fe.gphi);
  tabulate(fe.vq_hi, fe.phi_hi, nullptr);

  int nm = r + 1;
  fe.chi.resize(std::size_t(fe.eq.size()) * nm);
  for (int k = 0; k < fe.eq.size(); ++k)
    for (int m = 0; m < nm; ++m)
      fe.chi[std::size_t(k) * nm + m] = edge_basis_eval(m, fe.eq.points[k].x);

  fe.trace_phi.resize(mesh.num_facets());
  for (int f = 0; f < mesh.num_facets(); ++f) {
    const Facet& fc = mesh.facets[f];
    for (int s = 0; s < 2; ++s) {
      if (s == 1 && !fc.minus) continue;
      int elem = (s == 0) ? fc.plus.elem : fc.minus->elem;
      auto& tab = fe.trace_phi[f][s];
      tab.resize(std::size_t(fe.eq.size()) * fe.d0);
      for (int k = 0; k < fe.eq.size(); ++k) {
        Vec2 xq = mesh.facet_point(f, s == 0 ? +1 : -1, fe.eq.points[k].x);
        Vec2 ref = fe.maps[elem].to_reference(xq);
        for (int i = 0; i < fe.d0; ++i)
          tab[std::size_t(k) * fe.d0 + i] = fe.basis.eval(i, ref);
      }
    }
  }
  return fe;
}

// Broken L2 projection. Mass matrices are |det J| times the identity in the
// orthonormal reference basis, so coefficients are plain quadrature sums.
inline VecX l2_project(const FeSpace& fe, int form_degree,
                       const std::function<double(Vec2)>& f) {
  require(form_degree == 0 || form_degree == 2, "l2_project: scalar field needs degree 0 or 2");
  const Mesh& m = *fe.mesh;
  VecX c(std::size_t(fe.layout.n0()), 0.0);
  for (int e = 0; e < m.num_elements(); ++e) {
    for (int k = 0; k < fe.vq_hi.size(); ++k) {
      double fv = f(fe.maps[e].to_physical(fe.vq_hi.points[k]));
      double w = fe.vq_hi.weights[k];
      for (int i = 0; i < fe.d0; ++i)
        c[fe.layout.idx0(e, i)] += w * (fv * fe.phi_hi[std::size_t(k) * fe.d0 + i]);
    }
  }
  return c;
}

inline VecX l2_project(const FeSpace& fe, int form_degree, const std::function<Vec2(Vec2)>& f) {
  require(form_degree == 1, "l2_project: vector field needs degree 1");
  const Mesh& m = *fe.mesh;
  VecX c(std::size_t(fe.layout.n1()), 0.0);
  for (int e = 0; e < m.num_elements(); ++e) {
    for (int k = 0; k < fe.vq_hi.size(); ++k) {
      Vec2 fv = f(fe.maps[e].to_physical(fe.vq_hi.points[k]));
      double w = fe.vq_hi.weights[k];
      for (int i = 0; i < fe.d0; ++i) {
        double b = fe.phi_hi[std::size_t(k) * fe.d0 + i];
        c[fe.layout.idx1(e, 0, i)] += w * (fv.x * b);
        c[fe.layout.idx1(e, 1, i)] += w * (fv.y * b);
      }
    }
  }
  return c;
}

}  // namespace hodgewave
