#include <catch2/catch_amalgamated.hpp>

#include "hodgewave/diagnostics.hpp"

using namespace hodgewave;

namespace {

struct Setup {
  Mesh mesh;
  FeSpace fe;
  Penalties pen;
  AssembledForms forms;
  ConstraintSystems cs;
  Setup(int nx, int ny, double lx, double ly, int r, double a0, double a1, bool px = true,
        bool py = true)
      : mesh(build_periodic_rect_mesh(nx, ny, lx, ly, px, py)),
        fe(make_fespace(mesh, r)),
        pen(mesh, a0, a1),
        forms(assemble_forms(mesh, fe, pen)),
        cs(build_constraint_systems(forms)) {}
};

}  // namespace

TEST_CASE("A_sigma is exactly symmetric and negative definite", "[assembly]") {
  Setup s(3, 2, 1.0, 0.5, 2, -0.05, 0.05);
  const SparseMatrix& a = s.cs.A_sigma;
  SparseMatrix at = transpose(a);
  REQUIRE(a.val.size() == at.val.size());
  for (std::size_t k = 0; k < a.val.size(); ++k) {
    REQUIRE(a.col[k] == at.col[k]);
    REQUIRE(a.val[k] == at.val[k]);  // bitwise
  }
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    VecX x = rng.uniform_vec(std::size_t(a.nrows));
    REQUIRE(dot(x, spmv(a, x)) < 0.0);
  }
}

TEST_CASE("A_rho quadratic form controls rho and u_hat", "[assembly]") {
  Setup s(3, 2, 1.0, 0.5, 1, -0.05, 0.05);
  Rng rng(2);
  const SpaceLayout& lo = s.fe.layout;
  for (int trial = 0; trial < 10; ++trial) {
    VecX x = rng.uniform_vec(std::size_t(s.cs.A_rho.nrows));
    double q = dot(x, spmv(s.cs.A_rho, x));
    double rho2 = 0.0, uhat2 = 0.0;
    for (int e = 0; e < lo.num_elements; ++e)
      for (int i = 0; i < lo.d0; ++i)
        rho2 += s.fe.detj[e] * x[lo.idx0(e, i)] * x[lo.idx0(e, i)];
    for (int i = 0; i < lo.ntrace(); ++i) uhat2 += x[lo.n2() + i] * x[lo.n2() + i];
    REQUIRE(q >= 0.999 * (rho2 + 2.0 * 0.05 * uhat2));
  }
}

TEST_CASE("zero u gives the zero constraint solution", "[assembly]") {
  Setup s(2, 2, 1.0, 1.0, 1, -0.05, 0.05);
  VecX u(s.fe.layout.n1(), 0.0);
  ConstraintSolution c = solve_constraints(s.cs, u);
  REQUIRE(norm(c.sigma) == 0.0);
  REQUIRE(norm(c.sigma_hat) == 0.0);
  REQUIRE(norm(c.rho) == 0.0);
  REQUIRE(norm(c.u_hat) == 0.0);
}

TEST_CASE("constant fields are in the kernel of rot and div", "[assembly]") {
  Setup s(4, 2, 1.0, 0.5, 1, -0.05, 0.05);
  const Vec2 cval{0.4, -0.9};
  VecX u = l2_project(s.fe, 1, std::function<Vec2(Vec2)>([&](Vec2) { return cval; }));
  ConstraintSolution c = solve_constraints(s.cs, u);
  REQUIRE(norm(c.sigma) < 1e-11);
  REQUIRE(norm(c.rho) < 1e-11);
  REQUIRE(norm(c.sigma_hat) < 1e-11);
  // u_hat matches u . n on every facet
  for (int f = 0; f < s.mesh.num_facets(); ++f) {
    Vec2 n = s.mesh.facets[f].normal;
    for (double t : {0.2, 0.7}) {
      double uh = eval_trace_scalar(s.fe, c.u_hat, f, t);
      REQUIRE(std::abs(uh - dot(cval, n)) < 1e-11);
    }
  }
}

TEST_CASE("constraint solve residuals and sigma convergence", "[assembly]") {
  ExactSolution exact = plane_wave_solution();
  auto sigma_err = [&](int nx) {
    Setup s(nx, std::max(1, nx / 10), 1.0, 0.1, 1, -0.05, 0.05);
    VecX u = l2_project(s.fe, 1, std::function<Vec2(Vec2)>([&](Vec2 x) {
                          return exact.u(0.0, x);
                        }));
    ConstraintSolution c = solve_constraints(s.cs, u);
    FieldState st = make_field_state(s.fe.layout);
    st.u = u;
    st.sigma = c.sigma;
    st.rho = c.rho;
    TraceState tr{c.sigma_hat, c.u_hat, TraceTag::ms_u_hat};
    REQUIRE(constraint_residual(s.forms, st, tr) < 1e-11);
    L2Errors err = l2_error(s.fe, st, exact, 0.0);
    return err.sigma;
  };
  double e1 = sigma_err(20), e2 = sigma_err(40);
  double order = std::log2(e1 / e2);
  REQUIRE(order > 1.5);  // O(h^{r+1}) with r = 1
}

TEST_CASE("momentum load on simple states", "[assembly]") {
  Setup s(3, 2, 1.0, 0.5, 1, -0.05, 0.05);
  Nonlinearity none;
  SECTION("zero state, zero source") {
    FieldState st = make_field_state(s.fe.layout);
    TraceState tr = make_trace_state(s.fe.layout, TraceTag::ms_u_hat);
    VecX L = momentum_rhs(s.forms, st, tr, 0.0, none);
    REQUIRE(norm(L) == 0.0);
  }
  SECTION("cubic source integrates constants exactly") {
    Nonlinearity cubic{Nonlinearity::Kind::cubic};
    const Vec2 ab{0.3, 0.4};
    VecX u = l2_project(s.fe, 1, std::function<Vec2(Vec2)>([&](Vec2) { return ab; }));
    VecX load = assemble_nonlinear_load(s.forms, cubic, 0.0, u);
    double factor = 1.0 - dot(ab, ab);
    // (f, basis) with f constant: detj * f_c * integral of the reference basis
    for (int e = 0; e < s.mesh.num_elements(); ++e)
      for (int i = 0; i < s.fe.d0; ++i) {
        double ref_int = 0.0;
        for (int k = 0; k <= i; ++k)
          ref_int += s.fe.basis.coeffs[i][k] *
                     triangle_monomial_moment(s.fe.basis.powers[k][0], s.fe.basis.powers[k][1]);
        double expect_x = s.fe.detj[e] * factor * ab.x * ref_int;
        double expect_y = s.fe.detj[e] * factor * ab.y * ref_int;
        REQUIRE(load[s.fe.layout.idx1(e, 0, i)] == Catch::Approx(expect_x).margin(1e-14));
        REQUIRE(load[s.fe.layout.idx1(e, 1, i)] == Catch::Approx(expect_y).margin(1e-14));
      }
  }
}

TEST_CASE("momentum consistency against the exact solution", "[assembly]") {
  ExactSolution exact = plane_wave_solution();
  Nonlinearity none;
  auto pdot_err = [&](int nx) {
    Setup s(nx, std::max(1, nx / 10), 1.0, 0.1, 1, -0.05, 0.05);
    VecX u = l2_project(s.fe, 1,
                        std::function<Vec2(Vec2)>([&](Vec2 x) { return exact.u(0.0, x); }));
    ConstraintSolution c = solve_constraints(s.cs, u);
    FieldState st = make_field_state(s.fe.layout);
    st.u = u;
    st.sigma = c.sigma;
    st.rho = c.rho;
    TraceState tr{c.sigma_hat, c.u_hat, TraceTag::ms_u_hat};
    VecX L = momentum_rhs(s.forms, st, tr, 0.0, none);
    for (int i = 0; i < s.forms.n1(); ++i) L[i] /= s.forms.m1[i];
    // broken L2 distance between M^-1 L and the exact pdot at t = 0
    double h = 1e-4;
    auto pdot_exact = [&](Vec2 x) {
      Vec2 pa = exact.p(-h, x), pb = exact.p(h, x);
      return Vec2{(pb.x - pa.x) / (2 * h), (pb.y - pa.y) / (2 * h)};
    };
    QuadRule q = triangle_quadrature(8);
    double e2 = 0.0;
    for (int e = 0; e < s.mesh.num_elements(); ++e)
      for (int k = 0; k < q.size(); ++k) {
        Vec2 d = eval_vector(s.fe, L, e, q.points[k]) -
                 pdot_exact(s.fe.maps[e].to_physical(q.points[k]));
        e2 += s.fe.detj[e] * q.weights[k] * dot(d, d);
      }
    return std::sqrt(e2);
  };
  double e1 = pdot_err(16), e2 = pdot_err(32);
  REQUIRE(e2 < e1);  // refines
  double order = std::log2(e1 / e2);
  REQUIRE(order > 0.7);  // O(h^r) with r = 1
}

TEST_CASE("facet-local elimination of the mixed traces", "[assembly]") {
  SECTION("continuous data reproduces sigma_hat") {
    // alpha0 = -1, sigma = 1 on both sides, p = 0: sigma_hat = 1
    Setup s(2, 1, 1.0, 1.0, 1, -1.0, 1.0);
    MixedOperator op = build_mixed_operator(s.forms);
    VecX y(op.ny, 0.0);
    VecX one = l2_project(s.fe, 0, std::function<double(Vec2)>([](Vec2) { return 1.0; }));
    std::copy(one.begin(), one.end(), y.begin() + op.off_sigma);
    VecX sig_hat = spmv(op.E_sig, y);
    for (int f = 0; f < s.mesh.num_facets(); ++f)
      for (double t : {0.25, 0.5})
        REQUIRE(eval_trace_scalar(s.fe, sig_hat, f, t) == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("eliminated action matches the full saddle system") {
    Setup s(3, 2, 1.0, 0.5, 2, -0.07, 0.11);
    MixedOperator op = build_mixed_operator(s.forms);
    Rng rng(4);
    VecX y = rng.uniform_vec(std::size_t(op.ny));
    VecX sig_hat = spmv(op.E_sig, y);
    VecX p_hat = spmv(op.E_p, y);
    // conservativity residuals vanish
    VecX sig(y.begin() + op.off_sigma, y.begin() + op.off_sigma + op.n0);
    VecX u(y.begin() + op.off_u, y.begin() + op.off_u + op.n1);
    VecX rho(y.begin() + op.off_rho, y.begin() + op.off_rho + op.n2);
    VecX p(y.begin() + op.off_p, y.begin() + op.off_p + op.n1);
    VecX r1(s.forms.ntr(), 0.0);
    s.forms.Bs_fac.multiply_add(p, r1);
    s.forms.Dhat_a0.multiply_add(sig_hat, r1, -1.0);
    s.forms.C_tau_a0_t.multiply_add(sig, r1);
    REQUIRE(norm(r1) < 1e-12 * (1.0 + norm(p)));
    VecX r2(s.forms.ntr(), 0.0);
    s.forms.Dhat_a1.multiply_add(p_hat, r2);
    s.forms.Br_fac.multiply_add(p, r2, -1.0);
    s.forms.C_eta_t.multiply_add(rho, r2, -1.0);
    REQUIRE(norm(r2) < 1e-12 * (1.0 + norm(p)));
    // eliminated operator action equals the full coupled residual
    VecX ay = spmv(op.A, y);
    VecX full(op.ny, 0.0);
    // sigma rows
    s.forms.Bs_vol.multiply_add(p, full, -1.0);
    VecX tmp(s.forms.n0(), 0.0);
    s.forms.C_tau_a0.multiply_add(sig_hat, tmp, -1.0);
    s.forms.P0_a0.multiply_add(sig, tmp);
    for (int i = 0; i < op.n0; ++i) full[op.off_sigma + i] += tmp[i];
    // u rows
    for (int i = 0; i < op.n1; ++i) full[op.off_u + i] = s.forms.m1[i] * p[i];
    // rho rows
    VecX tr2(s.forms.n2(), 0.0);
    s.forms.Br_vol.multiply_add(p, tr2);
    s.forms.C_eta.multiply_add(p_hat, tr2, -1.0);
    for (int i = 0; i < op.n2; ++i) full[op.off_rho + i] = tr2[i];
    // p rows
    VecX lp(s.forms.n1(), 0.0);
    s.forms.Bs_vol_t.multiply_add(sig, lp);
    s.forms.Bs_fac_t.multiply_add(sig_hat, lp);
    s.forms.Br_vol_t.multiply_add(rho, lp, -1.0);
    s.forms.Br_fac_t.multiply_add(p_hat, lp);
    s.forms.P_alpha1.multiply_add(p, lp, -1.0);
    for (int i = 0; i < op.n1; ++i) full[op.off_p + i] = lp[i];
    VecX d = ay;
    axpy(-1.0, full, d);
    REQUIRE(norm(d) < 1e-12 * (1.0 + norm(ay)));
  }
  SECTION("zero penalties are rejected") {
    Mesh m = build_periodic_rect_mesh(2, 1, 1.0, 1.0, true, true);
    FeSpace fe = make_fespace(m, 1);
    REQUIRE_THROWS_AS(Penalties(m, 0.0, 1.0), config_error);
  }
}

TEST_CASE("flux-difference bracket: multisymplectic vs mixed", "[assembly]") {
  Setup s(4, 2, 1.0, 0.5, 1, -0.05, 0.05);
  Rng rng(6);
  SECTION("multisymplectic flux annihilates the bracket per element") {
    Nonlinearity none;
    MsWaveSystem sys(s.mesh, s.fe, s.pen, none);
    StageTraces t1, t2;
    VecX u1 = rng.uniform_vec(std::size_t(s.fe.layout.n1()));
    VecX u2 = rng.uniform_vec(std::size_t(s.fe.layout.n1()));
    sys.pdot(0.0, u1, &t1);
    sys.pdot(0.0, u2, &t2);
    VecX br = flux_difference_bracket_per_element(s.fe, s.pen, t1, t2);
    for (double v : br) REQUIRE(std::abs(v) < 1e-12);
  }
  SECTION("mixed flux witness is bounded away from zero") {
    Nonlinearity none;
    MixedWaveSystem sys(s.mesh, s.fe, s.pen, none);
    VecX br = mixed_witness_bracket(sys, 99);
    double worst = 0.0, total = 0.0;
    for (double v : br) {
      REQUIRE(v <= 1e-14);  // each element contribution is nonpositive
      worst = std::min(worst, v);
      total += v;
    }
    REQUIRE(std::abs(worst) > 1e-3);
    REQUIRE(total < 0.0);
  }
}

TEST_CASE("mixed midpoint flow preserves the linear constraint invariant", "[assembly]") {
  // The rho constraint -(u, grad eta) + (rho, eta) + <u_hat_tan, eta^nor> = 0
  // becomes a linear invariant of the augmented flow in which u_hat_tan is
  // integrated with the eliminated p-trace; midpoint keeps it to solver
  // accuracy over many steps.
  Setup s(4, 2, 1.0, 0.5, 1, -0.05, 0.05);
  Nonlinearity none;
  MixedWaveSystem sys(s.mesh, s.fe, s.pen, none);
  MsWaveSystem ms(s.mesh, s.fe, s.pen, none);
  Rng rng(14);
  VecX u0 = rng.uniform_vec(std::size_t(s.fe.layout.n1()));
  VecX p0 = rng.uniform_vec(std::size_t(s.fe.layout.n1()));
  ConstraintSolution c0 = solve_constraints(ms.cs, u0);
  VecX y(sys.op.ny, 0.0);
  std::copy(c0.sigma.begin(), c0.sigma.end(), y.begin() + sys.op.off_sigma);
  std::copy(u0.begin(), u0.end(), y.begin() + sys.op.off_u);
  std::copy(c0.rho.begin(), c0.rho.end(), y.begin() + sys.op.off_rho);
  std::copy(p0.begin(), p0.end(), y.begin() + sys.op.off_p);
  VecX uhat_tan = c0.u_hat;

  auto rho_constraint_residual = [&](const VecX& yy, const VecX& uht) {
    VecX uu(yy.begin() + sys.op.off_u, yy.begin() + sys.op.off_u + sys.op.n1);
    VecX rho(yy.begin() + sys.op.off_rho, yy.begin() + sys.op.off_rho + sys.op.n2);
    VecX r_eta(s.forms.n2(), 0.0);
    s.forms.Br_vol.multiply_add(uu, r_eta, -1.0);
    s.forms.C_eta.multiply_add(uht, r_eta);
    for (int i = 0; i < s.forms.n2(); ++i) r_eta[i] += s.forms.m2[i] * rho[i];
    return norm(r_eta);
  };

  double res0 = rho_constraint_residual(y, uhat_tan);
  double t = 0.0, dt = 0.02;
  for (int n = 0; n < 100; ++n) {
    VecX ystage = sys.solve_stage(t + dt / 2, dt / 2, y);
    VecX p_hat_stage = spmv(sys.op.E_p, ystage);
    axpy(dt, p_hat_stage, uhat_tan);
    VecX ynew = ystage;
    scale(2.0, ynew);
    axpy(-1.0, y, ynew);
    y = std::move(ynew);
    t += dt;
  }
  double res_final = rho_constraint_residual(y, uhat_tan);
  REQUIRE(res0 < 1e-11);
  REQUIRE(res_final <= res0 + 1e-10);
}
