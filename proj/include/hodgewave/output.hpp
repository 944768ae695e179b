#pragma once

#include <cstdio>
#include <fstream>
#include <optional>

#include "hodgewave/calculus.hpp"

namespace hodgewave {

// %.17g round-trips doubles exactly, keeping outputs byte-reproducible.
inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  require(bool(out), "cannot open output file " + path);
  out << content;
}

// Time-series CSV with the fixed column order; fields without a value are
// written empty.
class TimeSeriesWriter {
 public:
  TimeSeriesWriter() {
    rows_ = "t,H_global,H_discrete,l2err_u,l2err_p,l2err_sigma,l2err_rho,"
            "mscl_max_element_residual,energy_identity_residual,newton_iters_max,"
            "linsolve_residual_max\n";
  }
  struct Row {
    double t = 0.0;
    std::optional<double> h_global, h_discrete;
    std::optional<double> err_u, err_p, err_sigma, err_rho;
    std::optional<double> mscl_max, energy_res;
    std::optional<int> newton_max;
    std::optional<double> linres_max;
  };
  void add(const Row& r) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt_g17(*v) : std::string(); };
    rows_ += fmt_g17(r.t);
    rows_ += "," + opt(r.h_global) + "," + opt(r.h_discrete);
    rows_ += "," + opt(r.err_u) + "," + opt(r.err_p) + "," + opt(r.err_sigma) + "," +
             opt(r.err_rho);
    rows_ += "," + opt(r.mscl_max) + "," + opt(r.energy_res);
    rows_ += ",";
    if (r.newton_max) rows_ += std::to_string(*r.newton_max);
    rows_ += "," + opt(r.linres_max) + "\n";
  }
  const std::string& text() const { return rows_; }

 private:
  std::string rows_;
};

// Legacy ASCII VTK unstructured grid with per-corner point data (corners are
// duplicated per cell, as the fields are discontinuous).
inline std::string vtk_snapshot(const FeSpace& fe, const FieldState& state) {
  const Mesh& m = *fe.mesh;
  std::string out;
  out += "# vtk DataFile Version 2.0\n";
  out += "hodgewave snapshot\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  int nt = m.num_elements();
  out += "POINTS " + std::to_string(3 * nt) + " double\n";
  const Vec2 corners[3] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  for (int e = 0; e < nt; ++e)
    for (Vec2 c : corners) {
      Vec2 x = fe.maps[e].to_physical(c);
      out += fmt_g17(x.x) + " " + fmt_g17(x.y) + " 0\n";
    }
  out += "CELLS " + std::to_string(nt) + " " + std::to_string(4 * nt) + "\n";
  for (int e = 0; e < nt; ++e)
    out += "3 " + std::to_string(3 * e) + " " + std::to_string(3 * e + 1) + " " +
           std::to_string(3 * e + 2) + "\n";
  out += "CELL_TYPES " + std::to_string(nt) + "\n";
  for (int e = 0; e < nt; ++e) out += "5\n";
  out += "POINT_DATA " + std::to_string(3 * nt) + "\n";
  auto scalar_field = [&](const char* name, const VecX& c) {
    out += std::string("SCALARS ") + name + " double 1\nLOOKUP_TABLE default\n";
    for (int e = 0; e < nt; ++e)
      for (Vec2 cr : corners) out += fmt_g17(eval_scalar(fe, c, e, cr)) + "\n";
  };
  auto vector_field = [&](const char* name, const VecX& c) {
    out += std::string("VECTORS ") + name + " double\n";
    for (int e = 0; e < nt; ++e)
      for (Vec2 cr : corners) {
        Vec2 v = eval_vector(fe, c, e, cr);
        out += fmt_g17(v.x) + " " + fmt_g17(v.y) + " 0\n";
      }
  };
  vector_field("u", state.u);
  vector_field("p", state.p);
  scalar_field("sigma", state.sigma);
  scalar_field("rho", state.rho);
  return out;
}

// Samples u_y along a horizontal line; columns x, u_y_numeric, u_y_exact.
template <class ExactUy>
inline std::string cross_section_csv(const FeSpace& fe, const VecX& u, double y_line,
                                     int nsamples, ExactUy&& exact_or_null) {
  const Mesh& m = *fe.mesh;
  double xmin = 1e300, xmax = -1e300;
  for (const Vec2& v : m.vertices) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
  }
  std::string out = "x,u_y_numeric,u_y_exact\n";
  for (int k = 0; k < nsamples; ++k) {
    double x = xmin + (xmax - xmin) * (k + 0.5) / nsamples;
    Vec2 pt{x, y_line};
    // locate the containing element
    int found = -1;
    Vec2 ref{0, 0};
    for (int e = 0; e < m.num_elements(); ++e) {
      Vec2 rc = fe.maps[e].to_reference(pt);
      if (rc.x >= -1e-12 && rc.y >= -1e-12 && rc.x + rc.y <= 1.0 + 1e-12) {
        found = e;
        ref = rc;
        break;
      }
    }
    if (found < 0) continue;
    double uy = eval_vector(fe, u, found, ref).y;
    out += fmt_g17(x) + "," + fmt_g17(uy) + "," + exact_or_null(pt) + "\n";
  }
  return out;
}

}  // namespace hodgewave
