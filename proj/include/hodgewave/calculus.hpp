#pragma once

#include "hodgewave/fespace.hpp"

namespace hodgewave {

// 2D proxy operators:  d0 = curl (scalar -> vector), d1 = div,
// delta1 = rot (vector -> scalar), delta2 = -grad.
//   curl t = (dt/dy, -dt/dx)      rot v = dvy/dx - dvx/dy
// Trace proxies on a facet with outward normal n:
//   t^tan = t|_e   v^nor = v x n = vx*ny - vy*nx   v^tan ~ v.n   eta^nor ~ eta

enum class TraceTag { ms_u_hat, mixed_p_hat };

struct FieldState {
  VecX sigma, u, rho, p;
  double t = 0.0;
};

struct TraceState {
  VecX sigma_hat;    // scalar trace modes per facet
  VecX u_or_p_hat;   // normal-component modes per facet, relative to the plus normal
  TraceTag tag = TraceTag::ms_u_hat;
};

inline FieldState make_field_state(const SpaceLayout& lo) {
  FieldState s;
  s.sigma = zeros(lo.n0());
  s.u = zeros(lo.n1());
  s.rho = zeros(lo.n2());
  s.p = zeros(lo.n1());
  return s;
}

inline TraceState make_trace_state(const SpaceLayout& lo, TraceTag tag) {
  TraceState t;
  t.sigma_hat = zeros(lo.ntrace());
  t.u_or_p_hat = zeros(lo.ntrace());
  t.tag = tag;
  return t;
}

// Spatially constant in practice; kept per facet for generality.
struct Penalties {
  std::vector<double> alpha0;  // < 0
  std::vector<double> alpha1;  // > 0
  Penalties() = default;
  Penalties(const Mesh& m, double a0, double a1) {
    require(a0 < 0.0, "alpha0 must be negative");
    require(a1 > 0.0, "alpha1 must be positive");
    alpha0.assign(m.num_facets(), a0);
    alpha1.assign(m.num_facets(), a1);
  }
};

// ---- pointwise evaluation on an element (reference coordinates) ----

inline double eval_scalar(const FeSpace& fe, const VecX& coeffs, int e, Vec2 ref) {
  double v = 0.0;
  for (int i = 0; i < fe.d0; ++i) v += coeffs[fe.layout.idx0(e, i)] * fe.basis.eval(i, ref);
  return v;
}

inline Vec2 eval_vector(const FeSpace& fe, const VecX& coeffs, int e, Vec2 ref) {
  Vec2 v{0.0, 0.0};
  for (int i = 0; i < fe.d0; ++i) {
    double b = fe.basis.eval(i, ref);
    v.x += coeffs[fe.layout.idx1(e, 0, i)] * b;
    v.y += coeffs[fe.layout.idx1(e, 1, i)] * b;
  }
  return v;
}

inline Vec2 eval_grad_scalar(const FeSpace& fe, const VecX& coeffs, int e, Vec2 ref) {
  Vec2 g{0.0, 0.0};
  for (int i = 0; i < fe.d0; ++i) {
    Vec2 gr = fe.maps[e].push_gradient(fe.basis.grad(i, ref));
    g = g + coeffs[fe.layout.idx0(e, i)] * gr;
  }
  return g;
}

inline Vec2 eval_curl_scalar(const FeSpace& fe, const VecX& coeffs, int e, Vec2 ref) {
  Vec2 g = eval_grad_scalar(fe, coeffs, e, ref);
  return {g.y, -g.x};
}

inline double eval_rot_vector(const FeSpace& fe, const VecX& coeffs, int e, Vec2 ref) {
  double r = 0.0;
  for (int i = 0; i < fe.d0; ++i) {
    Vec2 gr = fe.maps[e].push_gradient(fe.basis.grad(i, ref));
    r += coeffs[fe.layout.idx1(e, 1, i)] * gr.x - coeffs[fe.layout.idx1(e, 0, i)] * gr.y;
  }
  return r;
}

inline double eval_div_vector(const FeSpace& fe, const VecX& coeffs, int e, Vec2 ref) {
  double d = 0.0;
  for (int i = 0; i < fe.d0; ++i) {
    Vec2 gr = fe.maps[e].push_gradient(fe.basis.grad(i, ref));
    d += coeffs[fe.layout.idx1(e, 0, i)] * gr.x + coeffs[fe.layout.idx1(e, 1, i)] * gr.y;
  }
  return d;
}

struct DiffValues {
  std::vector<Vec2> vec;      // curl (degree 0) or -grad (degree 2)
  std::vector<double> rot;    // degree 1
  std::vector<double> div;    // degree 1
};

inline DiffValues eval_diff(const FeSpace& fe, const VecX& coeffs, int form_degree, int e,
                            const std::vector<Vec2>& ref_points) {
  require(e >= 0 && e < fe.mesh->num_elements(), "eval_diff: element out of range");
  DiffValues out;
  if (form_degree == 0) {
    require(int(coeffs.size()) == fe.layout.n0(), "eval_diff: coefficient size mismatch");
    for (Vec2 p : ref_points) out.vec.push_back(eval_curl_scalar(fe, coeffs, e, p));
  } else if (form_degree == 1) {
    require(int(coeffs.size()) == fe.layout.n1(), "eval_diff: coefficient size mismatch");
    for (Vec2 p : ref_points) {
      out.rot.push_back(eval_rot_vector(fe, coeffs, e, p));
      out.div.push_back(eval_div_vector(fe, coeffs, e, p));
    }
  } else if (form_degree == 2) {
    require(int(coeffs.size()) == fe.layout.n2(), "eval_diff: coefficient size mismatch");
    for (Vec2 p : ref_points) {
      Vec2 g = eval_grad_scalar(fe, coeffs, e, p);
      out.vec.push_back({-g.x, -g.y});
    }
  } else {
    throw config_error("eval_diff: form degree must be 0, 1 or 2");
  }
  return out;
}

// ---- facet traces ----

struct SideRef {
  int elem;
  double sgn;   // +1 plus side, -1 minus side
  Vec2 normal;  // outward from this side
};

inline SideRef facet_side(const Mesh& m, int f, int side_sign) {
  const Facet& fc = m.facets[f];
  if (side_sign > 0) return {fc.plus.elem, +1.0, fc.normal};
  require(fc.minus.has_value(),
          "facet_trace: facet " + std::to_string(f) + " has no minus side");
  return {fc.minus->elem, -1.0, {-fc.normal.x, -fc.normal.y}};
}

struct TraceValues {
  std::vector<double> scalar;     // t^tan or eta (degrees 0 and 2)
  std::vector<double> v_cross_n;  // v^nor proxy (degree 1)
  std::vector<double> v_dot_n;    // v^tan proxy scalar (degree 1)
};

inline TraceValues facet_trace(const FeSpace& fe, const VecX& coeffs, int form_degree, int f,
                               int side_sign, const std::vector<double>& t_params) {
  const Mesh& m = *fe.mesh;
  require(f >= 0 && f < m.num_facets(), "facet_trace: facet index out of range");
  SideRef s = facet_side(m, f, side_sign);
  TraceValues out;
  for (double t : t_params) {
    Vec2 ref = fe.maps[s.elem].to_reference(m.facet_point(f, side_sign, t));
    if (form_degree == 1) {
      Vec2 v = eval_vector(fe, coeffs, s.elem, ref);
      out.v_cross_n.push_back(v.x * s.normal.y - v.y * s.normal.x);
      out.v_dot_n.push_back(dot(v, s.normal));
    } else {
      out.scalar.push_back(eval_scalar(fe, coeffs, s.elem, ref));
    }
  }
  return out;
}

// Trace-space fields evaluated at facet parameters; u_hat is returned as the
// signed normal component seen from the requested side.
inline double eval_trace_scalar(const FeSpace& fe, const VecX& tr, int f, double t) {
  double s = 0.0, sc = fe.facet_scale(f);
  for (int mde = 0; mde <= fe.r; ++mde)
    s += tr[fe.layout.idxtr(f, mde)] * edge_basis_eval(mde, t) * sc;
  return s;
}

struct NumericalTraces {
  std::vector<double> u_hat_nor;    // scalar proxy of the u-flux, this side's normal
  std::vector<double> rho_hat_nor;  // scalar proxy of the rho-flux
};

// LDG-H fluxes: u^nor - alpha0 (sigma_hat - sigma^tan) and
// rho^nor - alpha1 (u_hat - u)^tan, evaluated from one side.
inline NumericalTraces numerical_normal_traces(const FeSpace& fe, const FieldState& state,
                                               const TraceState& traces, const Penalties& pen,
                                               int f, int side_sign,
                                               const std::vector<double>& t_params) {
  require(traces.tag == TraceTag::ms_u_hat,
          "numerical_normal_traces: traces must carry u_hat (multisymplectic tag)");
  const Mesh& m = *fe.mesh;
  SideRef s = facet_side(m, f, side_sign);
  NumericalTraces out;
  for (double t : t_params) {
    Vec2 ref = fe.maps[s.elem].to_reference(m.facet_point(f, side_sign, t));
    Vec2 uv = eval_vector(fe, state.u, s.elem, ref);
    double u_cross_n = uv.x * s.normal.y - uv.y * s.normal.x;
    double u_dot_n = dot(uv, s.normal);
    double sig = eval_scalar(fe, state.sigma, s.elem, ref);
    double rho = eval_scalar(fe, state.rho, s.elem, ref);
    double sig_hat = eval_trace_scalar(fe, traces.sigma_hat, f, t);
    double u_hat_n = s.sgn * eval_trace_scalar(fe, traces.u_or_p_hat, f, t);
    out.u_hat_nor.push_back(u_cross_n - pen.alpha0[f] * (sig_hat - sig));
    out.rho_hat_nor.push_back(rho - pen.alpha1[f] * (u_hat_n - u_dot_n));
  }
  return out;
}

}  // namespace hodgewave
