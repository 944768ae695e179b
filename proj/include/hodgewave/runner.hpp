#pragma once

#include <fstream>
#include <memory>

#include "hodgewave/config.hpp"
#include "hodgewave/diagnostics.hpp"
#include "hodgewave/output.hpp"

namespace hodgewave {

// Mesh, space and penalties live behind stable pointers so the setup can be
// moved without invalidating the cross-references inside FeSpace.
struct ProblemSetup {
  std::shared_ptr<Mesh> mesh;
  std::shared_ptr<FeSpace> fe;
  std::shared_ptr<Penalties> pen;
  Nonlinearity nl;
  std::optional<ExactSolution> exact;
  VecX u0, p0;
  SolverOpts solver;
  NewtonOpts newton;
};

inline ProblemSetup build_problem(const RunConfig& c) {
  ProblemSetup s;
  if (!c.mesh_file.empty()) {
    std::ifstream in(c.mesh_file);
    require(bool(in), "config: field \"file\" names an unreadable mesh file " + c.mesh_file);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    s.mesh = std::make_shared<Mesh>(load_mesh(text));
  } else {
    s.mesh = std::make_shared<Mesh>(
        build_periodic_rect_mesh(c.nx, c.ny, c.lx, c.ly, c.periodic_x, c.periodic_y));
  }
  s.fe = std::make_shared<FeSpace>(make_fespace(*s.mesh, c.degree));
  s.pen = std::make_shared<Penalties>(*s.mesh, c.alpha0, c.alpha1);
  s.solver.tol = c.solver_tol;
  s.solver.maxit = c.solver_maxit;
  s.newton.tol = c.newton_tol;
  s.newton.maxit = c.newton_maxit;

  switch (c.problem) {
    case Problem::linear_plane_wave:
      s.exact = plane_wave_solution();
      break;
    case Problem::cubic_klein_gordon:
      s.exact = klein_gordon_solution();
      break;
    case Problem::custom:
      break;
  }
  if (s.exact) {
    s.nl = s.exact->nonlinearity();
    const ExactSolution& ex = *s.exact;
    s.u0 = l2_project(*s.fe, 1,
                      std::function<Vec2(Vec2)>([&](Vec2 x) { return ex.u(0.0, x); }));
    s.p0 = l2_project(*s.fe, 1,
                      std::function<Vec2(Vec2)>([&](Vec2 x) { return ex.p(0.0, x); }));
  } else {
    Rng rng(c.seed);
    s.u0 = rng.uniform_vec(std::size_t(s.fe->layout.n1()));
    s.p0 = rng.uniform_vec(std::size_t(s.fe->layout.n1()));
  }
  return s;
}

struct RunResult {
  std::vector<double> times;
  std::vector<double> h_global;
  std::vector<double> h_discrete;  // empty for the mixed method
  double mscl_max_any = 0.0;
  double energy_residual_max = 0.0;
  double final_uy_amplitude = 0.0;
  FieldState final_state;
  std::string csv;
  int steps = 0;
};

namespace detail {

inline double uy_amplitude(const FeSpace& fe, const VecX& u) {
  double amp = 0.0;
  for (int e = 0; e < fe.mesh->num_elements(); ++e)
    for (int k = 0; k < fe.vq_hi.size(); ++k) {
      double v = 0.0;
      for (int i = 0; i < fe.d0; ++i)
        v += u[fe.layout.idx1(e, 1, i)] * fe.phi_hi[std::size_t(k) * fe.d0 + i];
      amp = std::max(amp, std::abs(v));
    }
  return amp;
}

}  // namespace detail

inline ButcherTableau named_tableau(const std::string& name) {
  if (name == "midpoint") return midpoint_tableau();
  if (name == "gauss2") return gauss2_tableau();
  if (name == "forward_euler") return forward_euler_tableau();
  if (name == "verlet_pair") return verlet_tableau();
  throw config_error("unknown tableau \"" + name + "\"");
}

// Executes one configured simulation; when out_dir is nonempty, writes
// timeseries.csv plus the final snapshot and cross-section files there.
inline RunResult run(const RunConfig& cfg, const std::string& out_dir = "") {
  validate_config(cfg);
  ProblemSetup ps = build_problem(cfg);
  const FeSpace& fe = *ps.fe;
  const int nsteps = int(std::llround(cfg.t_final / cfg.dt));
  require(nsteps >= 1, "config: field \"t_final\" must cover at least one step");
  const bool is_ms = cfg.method == Method::ms_ldgh;
  require(!(cfg.mscl && !is_ms),
          "config: field \"mscl\" diagnostics require method = ms_ldgh");
  require(!(cfg.energy_identity && is_ms),
          "config: field \"energy_identity\" requires method = mixed_ldgh");

  RunResult out;
  TimeSeriesWriter csv;

  std::unique_ptr<MsWaveSystem> ms;
  std::unique_ptr<MixedWaveSystem> mixed;
  VecX y;
  // MS systems evolve [u; p]; mixed evolves [sigma; u; rho; p], initialized
  // from the same constraint solve so both methods share H(0).
  ms = std::make_unique<MsWaveSystem>(*ps.mesh, fe, *ps.pen, ps.nl, ps.solver);
  ms->newton = ps.newton;
  ConstraintSolution c0 = solve_constraints(ms->cs, ps.u0);
  if (is_ms) {
    y = ms->join(ps.u0, ps.p0);
  } else {
    mixed = std::make_unique<MixedWaveSystem>(*ps.mesh, fe, *ps.pen, ps.nl, ps.solver);
    mixed->newton = ps.newton;
    y.assign(mixed->op.ny, 0.0);
    std::copy(c0.sigma.begin(), c0.sigma.end(), y.begin() + mixed->op.off_sigma);
    std::copy(ps.u0.begin(), ps.u0.end(), y.begin() + mixed->op.off_u);
    std::copy(c0.rho.begin(), c0.rho.end(), y.begin() + mixed->op.off_rho);
    std::copy(ps.p0.begin(), ps.p0.end(), y.begin() + mixed->op.off_p);
  }

  // variation pair for multisymplectic conservation-law monitoring
  VecX v1, v2;
  if (cfg.mscl) {
    Rng rng(cfg.seed + 101);
    v1 = rng.uniform_vec(std::size_t(2 * fe.layout.n1()));
    v2 = rng.uniform_vec(std::size_t(2 * fe.layout.n1()));
  }

  VerletStepper verlet(*ms);

  auto field_state_of = [&](const VecX& yy, double t) {
    FieldState st = make_field_state(fe.layout);
    st.t = t;
    if (is_ms) {
      st.u = ms->u_part(yy);
      st.p = ms->p_part(yy);
      ConstraintSolution c = solve_constraints(ms->cs, st.u);
      st.sigma = c.sigma;
      st.rho = c.rho;
      return std::make_pair(st, TraceState{c.sigma_hat, c.u_hat, TraceTag::ms_u_hat});
    }
    const MixedOperator& op = mixed->op;
    st.sigma.assign(yy.begin() + op.off_sigma, yy.begin() + op.off_sigma + op.n0);
    st.u.assign(yy.begin() + op.off_u, yy.begin() + op.off_u + op.n1);
    st.rho.assign(yy.begin() + op.off_rho, yy.begin() + op.off_rho + op.n2);
    st.p.assign(yy.begin() + op.off_p, yy.begin() + op.off_p + op.n1);
    return std::make_pair(st, TraceState{spmv(op.E_sig, yy), spmv(op.E_p, yy),
                                         TraceTag::mixed_p_hat});
  };

  double step_mscl_max = 0.0;
  int newton_max = 0;
  double linres_max = 0.0;

  auto emit_row = [&](int step, double t) {
    auto [st, tr] = field_state_of(y, t);
    TimeSeriesWriter::Row row;
    row.t = t;
    row.h_global = global_hamiltonian(fe, ps.nl, st);
    out.times.push_back(t);
    out.h_global.push_back(*row.h_global);
    if (is_ms) {
      row.h_discrete = discrete_hamiltonian(fe, *ps.pen, ps.nl, st, tr);
      out.h_discrete.push_back(*row.h_discrete);
    }
    if (cfg.errors && ps.exact) {
      L2Errors err = l2_error(fe, st, *ps.exact, t);
      row.err_u = err.u;
      row.err_p = err.p;
      row.err_sigma = err.sigma;
      row.err_rho = err.rho;
    }
    if (cfg.mscl && step > 0) row.mscl_max = step_mscl_max;
    if (cfg.energy_identity && !is_ms) {
      EnergyIdentity ei = energy_identity_residual(*mixed, y);
      row.energy_res = ei.residual;
      out.energy_residual_max = std::max(out.energy_residual_max, ei.residual);
    }
    row.newton_max = newton_max;
    row.linres_max = linres_max;
    csv.add(row);
    if (step == nsteps) {
      out.final_state = st;
      out.final_uy_amplitude = detail::uy_amplitude(fe, st.u);
    }
  };

  emit_row(0, 0.0);
  step_mscl_max = 0.0;

  auto advance = [&](VecX& state, double t, bool want_traces) {
    switch (cfg.integrator) {
      case Integrator::midpoint:
        return is_ms ? step_midpoint(*ms, t, cfg.dt, state, want_traces)
                     : step_midpoint(*mixed, t, cfg.dt, state, want_traces);
      case Integrator::yoshida6:
        return is_ms ? step_yoshida6(*ms, t, cfg.dt, state, want_traces)
                     : step_yoshida6(*mixed, t, cfg.dt, state, want_traces);
      case Integrator::verlet:
        return verlet.step(t, cfg.dt, state, want_traces);
      case Integrator::rk_named: {
        ButcherTableau tab = named_tableau(cfg.rk_name);
        if (is_ms) return step_rk_generic(*ms, tab, t, cfg.dt, state, want_traces);
        return step_rk_generic(*mixed, tab, t, cfg.dt, state, want_traces);
      }
    }
    throw config_error("unreachable integrator");
  };

  VerletStepper verlet_v1(*ms), verlet_v2(*ms);
  for (int n = 0; n < nsteps; ++n) {
    double t = n * cfg.dt;
    StepResult res = advance(y, t, false);
    newton_max = std::max(newton_max, res.report.newton_iters_max);
    linres_max = std::max(linres_max, res.report.lin_residual_max);

    if (cfg.mscl) {
      StepResult r1, r2;
      if (cfg.integrator == Integrator::verlet) {
        r1 = verlet_v1.step(t, cfg.dt, v1, true);
        r2 = verlet_v2.step(t, cfg.dt, v2, true);
      } else if (cfg.integrator == Integrator::yoshida6) {
        r1 = step_yoshida6(*ms, t, cfg.dt, v1, true);
        r2 = step_yoshida6(*ms, t, cfg.dt, v2, true);
      } else if (cfg.integrator == Integrator::midpoint) {
        r1 = step_midpoint(*ms, t, cfg.dt, v1, true);
        r2 = step_midpoint(*ms, t, cfg.dt, v2, true);
      } else {
        ButcherTableau tab = named_tableau(cfg.rk_name);
        r1 = step_rk_generic(*ms, tab, t, cfg.dt, v1, true);
        r2 = step_rk_generic(*ms, tab, t, cfg.dt, v2, true);
      }
      MsclResidual mr = mscl_residual(fe, *ps.pen, *ms, v1, v2, r1.y, r2.y, r1.report, r2.report,
                                      cfg.dt);
      step_mscl_max = std::max(step_mscl_max, mr.max_element);
      out.mscl_max_any = std::max(out.mscl_max_any, mr.max_element);
      v1 = std::move(r1.y);
      v2 = std::move(r2.y);
    }

    y = std::move(res.y);
    if ((n + 1) % cfg.cadence == 0 || n + 1 == nsteps) {
      emit_row(n + 1, (n + 1) * cfg.dt);
      step_mscl_max = 0.0;
      newton_max = 0;
      linres_max = 0.0;
    }
  }
  out.steps = nsteps;
  out.csv = csv.text();

  if (!out_dir.empty()) {
    write_file(out_dir + "/timeseries.csv", out.csv);
    if (cfg.snapshot) {
      write_file(out_dir + "/snapshot_final.vtk", vtk_snapshot(fe, out.final_state));
      double ymin = 1e300, ymax = -1e300;
      for (const Vec2& v : ps.mesh->vertices) {
        ymin = std::min(ymin, v.y);
        ymax = std::max(ymax, v.y);
      }
      double yline = cfg.cross_section_y ? *cfg.cross_section_y
                                         : ymin + 0.2 * (ymax - ymin);
      const ExactSolution* ex = ps.exact ? &*ps.exact : nullptr;
      double tf = nsteps * cfg.dt;
      std::string cs = cross_section_csv(
          fe, out.final_state.u, yline, 400, [&](Vec2 x) -> std::string {
            if (!ex) return "";
            return fmt_g17(ex->u(tf, x).y);
          });
      write_file(out_dir + "/cross_section_final.csv", cs);
    }
  }
  return out;
}

// ---- tableau certification ----

struct TableauReportLine {
  std::string name;
  bool expected_pass = true;
  bool pass = false;
  double violation = 0.0;
};

struct TableauReport {
  std::vector<TableauReportLine> lines;
  bool all_as_expected = true;
  std::string text;
};

inline TableauReport check_tableaux() {
  TableauReport rep;
  auto push = [&](const std::string& name, SymplecticCheck c, bool expect_pass) {
    rep.lines.push_back({name, expect_pass, c.symplectic, c.max_violation});
    if (c.symplectic != expect_pass) rep.all_as_expected = false;
  };
  push("midpoint (rk)", check_symplectic_rk(midpoint_tableau()), true);
  push("gauss2 (rk)", check_symplectic_rk(gauss2_tableau(), 1e-15), true);
  push("forward_euler (rk)", check_symplectic_rk(forward_euler_tableau()), false);
  push("verlet (prk)", check_symplectic_prk(verlet_tableau()), true);
  push("verlet_cbar_half (prk)", check_symplectic_prk(verlet_tableau_nonsymplectic_cbar()),
       false);
  {
    auto w = yoshida6_weights();
    double s1 = -1.0, s3 = 0.0, s5 = 0.0;
    for (double wi : w) {
      s1 += wi;
      s3 += wi * wi * wi;
      s5 += wi * wi * wi * wi * wi;
    }
    double viol = std::max({std::abs(s1), std::abs(s3), std::abs(s5)});
    rep.lines.push_back({"yoshida6 order conditions", true, viol <= 1e-12, viol});
    if (viol > 1e-12) rep.all_as_expected = false;
  }
  for (const auto& l : rep.lines) {
    bool ok = l.pass == l.expected_pass;
    rep.text += std::string(ok ? "[ok]   " : "[BAD]  ") + l.name + ": " +
                (l.pass ? "symplectic" : "not symplectic") +
                (l.expected_pass == l.pass && !l.expected_pass ? " (expected)" : "") +
                ", max violation " + fmt_g17(l.violation) + "\n";
  }
  return rep;
}

// ---- convergence study ----

struct ConvergenceLevel {
  double h = 0.0;
  double err_u = 0.0;
  double order = 0.0;  // 0 for the first level
};

struct ConvergenceStudy {
  std::vector<ConvergenceLevel> levels;
  std::string text;
};

inline ConvergenceStudy convergence_study(const RunConfig& base, int extra_levels) {
  require(base.mesh_file.empty(), "convergence_study: needs a structured mesh");
  require(base.problem != Problem::custom, "convergence_study: needs an exact solution");
  ConvergenceStudy cs;
  for (int l = 0; l <= extra_levels; ++l) {
    RunConfig c = base;
    int f = 1 << l;
    c.nx *= f;
    c.ny *= f;
    c.dt /= f;
    c.snapshot = false;
    RunResult r = run(c);
    ExactSolution ex = (c.problem == Problem::linear_plane_wave) ? plane_wave_solution()
                                                                 : klein_gordon_solution();
    Mesh mesh = build_periodic_rect_mesh(c.nx, c.ny, c.lx, c.ly, c.periodic_x, c.periodic_y);
    ConvergenceLevel lvl;
    lvl.h = mesh.max_edge_length();
    FeSpace fe = make_fespace(mesh, c.degree);
    lvl.err_u = l2_error(fe, r.final_state, ex, r.times.back()).u;
    if (!cs.levels.empty()) lvl.order = std::log2(cs.levels.back().err_u / lvl.err_u);
    cs.levels.push_back(lvl);
  }
  cs.text = "h,l2err_u,order\n";
  for (const auto& l : cs.levels)
    cs.text += fmt_g17(l.h) + "," + fmt_g17(l.err_u) + "," +
               (l.order == 0.0 ? std::string() : fmt_g17(l.order)) + "\n";
  return cs;
}

// ---- conservation-law check ----

struct MsclCheckResult {
  double max_element = 0.0;   // worst per-element residual over all steps
  double max_global = 0.0;    // worst whole-domain residual
  double witness_min = 0.0;   // most negative witness bracket (mixed method)
  std::string text;
};

inline MsclCheckResult mscl_check(const RunConfig& cfg, int nsteps_override = 0) {
  ProblemSetup ps = build_problem(cfg);
  MsclCheckResult out;
  int nsteps = nsteps_override > 0 ? nsteps_override
                                   : int(std::llround(cfg.t_final / cfg.dt));
  if (cfg.method == Method::mixed_ldgh) {
    MixedWaveSystem sys(*ps.mesh, *ps.fe, *ps.pen, Nonlinearity{}, ps.solver);
    VecX br = mixed_witness_bracket(sys, cfg.seed);
    for (double v : br) out.witness_min = std::min(out.witness_min, v);
    out.text = "mixed flux witness: most negative element bracket " +
               fmt_g17(out.witness_min) + "\n";
    return out;
  }
  Nonlinearity none;  // variations are solutions only for the linear problem
  MsWaveSystem sys(*ps.mesh, *ps.fe, *ps.pen, none, ps.solver);
  Rng rng(cfg.seed);
  VecX v1 = rng.uniform_vec(std::size_t(2 * ps.fe->layout.n1()));
  VecX v2 = rng.uniform_vec(std::size_t(2 * ps.fe->layout.n1()));
  VerletStepper verlet1(sys), verlet2(sys);
  for (int n = 0; n < nsteps; ++n) {
    double t = n * cfg.dt;
    StepResult r1, r2;
    if (cfg.integrator == Integrator::verlet) {
      r1 = verlet1.step(t, cfg.dt, v1, true);
      r2 = verlet2.step(t, cfg.dt, v2, true);
    } else if (cfg.integrator == Integrator::yoshida6) {
      r1 = step_yoshida6(sys, t, cfg.dt, v1, true);
      r2 = step_yoshida6(sys, t, cfg.dt, v2, true);
    } else if (cfg.integrator == Integrator::rk_named) {
      ButcherTableau tab = named_tableau(cfg.rk_name);
      r1 = step_rk_generic(sys, tab, t, cfg.dt, v1, true);
      r2 = step_rk_generic(sys, tab, t, cfg.dt, v2, true);
    } else {
      r1 = step_midpoint(sys, t, cfg.dt, v1, true);
      r2 = step_midpoint(sys, t, cfg.dt, v2, true);
    }
    MsclResidual mr = mscl_residual(*ps.fe, *ps.pen, sys, v1, v2, r1.y, r2.y, r1.report,
                                    r2.report, cfg.dt);
    out.max_element = std::max(out.max_element, mr.max_element);
    out.max_global = std::max(out.max_global, std::abs(mr.global));
    v1 = std::move(r1.y);
    v2 = std::move(r2.y);
  }
  out.text = "per-element residual max " + fmt_g17(out.max_element) + ", global residual max " +
             fmt_g17(out.max_global) + " over " + std::to_string(nsteps) + " steps\n";
  return out;
}

}  // namespace hodgewave
