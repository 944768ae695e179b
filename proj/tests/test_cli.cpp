#include <catch2/catch_amalgamated.hpp>

#include "hodgewave/runner.hpp"

using namespace hodgewave;

namespace {

std::string smoke_config(const std::string& extra = "") {
  return "[mesh]\n"
         "nx = 8\nny = 2\nlx = 1.0\nly = 0.25\n"
         "periodic_x = true\nperiodic_y = true\n"
         "[method]\n"
         "problem = linear_plane_wave\nmethod = ms_ldgh\nintegrator = midpoint\n"
         "degree = 1\nalpha0 = -0.05\nalpha1 = 0.05\n"
         "[time]\ndt = 0.02\nt_final = 0.2\n"
         "[output]\ncadence = 1\nerrors = true\n" +
         extra;
}

}  // namespace

TEST_CASE("config parsing and validation", "[cli]") {
  RunConfig c = parse_config(smoke_config());
  REQUIRE(c.nx == 8);
  REQUIRE(c.integrator == Integrator::midpoint);
  REQUIRE(c.dt == Catch::Approx(0.02));

  SECTION("invalid alpha1 names the field") {
    std::string bad = smoke_config();
    bad.replace(bad.find("alpha1 = 0.05"), 13, "alpha1 = -1.0");
    REQUIRE_THROWS_WITH(parse_config(bad), Catch::Matchers::ContainsSubstring("alpha1"));
  }
  SECTION("unknown keys are rejected") {
    REQUIRE_THROWS_WITH(parse_config(smoke_config("mystery = 1\n")),
                        Catch::Matchers::ContainsSubstring("mystery"));
  }
  SECTION("unknown section") {
    REQUIRE_THROWS_AS(parse_config("[turbo]\nx = 1\n"), config_error);
  }
  SECTION("verlet requires the multisymplectic method") {
    std::string bad = smoke_config();
    bad.replace(bad.find("method = ms_ldgh"), 16, "method = mixed_ldgh");
    bad.replace(bad.find("integrator = midpoint"), 21, "integrator = verlet");
    REQUIRE_THROWS_WITH(parse_config(bad), Catch::Matchers::ContainsSubstring("verlet"));
  }
  SECTION("rk named integrators parse") {
    std::string cfg = smoke_config();
    cfg.replace(cfg.find("integrator = midpoint"), 21, "integrator = rk:gauss2");
    RunConfig c2 = parse_config(cfg);
    REQUIRE(c2.integrator == Integrator::rk_named);
    REQUIRE(c2.rk_name == "gauss2");
  }
}

TEST_CASE("runs are deterministic and produce the documented CSV", "[cli]") {
  RunConfig c = parse_config(smoke_config());
  RunResult a = run(c);
  RunResult b = run(c);
  REQUIRE(a.csv == b.csv);  // bytewise
  // 10 steps at cadence 1: header plus 11 rows
  int lines = 0;
  for (char ch : a.csv)
    if (ch == '\n') ++lines;
  REQUIRE(lines == 12);
  REQUIRE(a.csv.rfind("t,H_global,H_discrete,l2err_u,l2err_p,l2err_sigma,l2err_rho,"
                      "mscl_max_element_residual,energy_identity_residual,newton_iters_max,"
                      "linsolve_residual_max\n",
                      0) == 0);
  // discrete Hamiltonian is flat for the linear problem under midpoint
  double drift = 0.0;
  for (double h : a.h_discrete) drift = std::max(drift, std::abs(h - a.h_discrete.front()));
  REQUIRE(drift < 1e-11 * std::abs(a.h_discrete.front()));
}

TEST_CASE("mixed-method run emits energy diagnostics and empty H_h", "[cli]") {
  std::string cfg = smoke_config("energy_identity = true\n");
  cfg.replace(cfg.find("method = ms_ldgh"), 16, "method = mixed_ldgh");
  RunConfig c = parse_config(cfg);
  RunResult r = run(c);
  REQUIRE(r.h_discrete.empty());
  REQUIRE(r.energy_residual_max < 1e-11);
  // H_discrete column is empty in the CSV body
  auto second_line = r.csv.substr(r.csv.find('\n') + 1);
  auto first_row = second_line.substr(0, second_line.find('\n'));
  // t,H_global,H_discrete,... -> the third field is empty
  std::size_t c1 = first_row.find(','), c2 = first_row.find(',', c1 + 1);
  REQUIRE(first_row[c2 + 1] == ',');
}

TEST_CASE("mscl toggle reports small residuals for midpoint", "[cli]") {
  RunConfig c = parse_config(smoke_config("mscl = true\n"));
  c.t_final = 0.1;
  RunResult r = run(c);
  REQUIRE(r.mscl_max_any > 0.0);
  REQUIRE(r.mscl_max_any < 1e-11);
}

TEST_CASE("convergence study observes the expected orders", "[cli]") {
  SECTION("degree 1") {
    RunConfig c = parse_config(smoke_config());
    c.nx = 8;
    c.ny = 1;
    c.ly = 0.1;
    c.dt = 0.02;
    c.t_final = 0.1;
    c.errors = false;
    c.snapshot = false;
    ConvergenceStudy cs = convergence_study(c, 2);
    REQUIRE(cs.levels.size() == 3);
    double last = cs.levels.back().order;
    REQUIRE(last > 1.5);
    REQUIRE(last < 2.5);
  }
  SECTION("degree 0") {
    RunConfig c = parse_config(smoke_config());
    c.degree = 0;
    c.nx = 8;
    c.ny = 1;
    c.ly = 0.1;
    c.dt = 0.02;
    c.t_final = 0.1;
    c.snapshot = false;
    ConvergenceStudy cs = convergence_study(c, 2);
    double last = cs.levels.back().order;
    REQUIRE(last > 0.5);
    REQUIRE(last < 1.6);
  }
  SECTION("zero extra levels gives a table without orders") {
    RunConfig c = parse_config(smoke_config());
    c.t_final = 0.04;
    c.dt = 0.02;
    ConvergenceStudy cs = convergence_study(c, 0);
    REQUIRE(cs.levels.size() == 1);
    REQUIRE(cs.levels[0].order == 0.0);
  }
}

TEST_CASE("tableau report certifies the shipped methods", "[cli]") {
  TableauReport rep = check_tableaux();
  REQUIRE(rep.all_as_expected);
  bool found_bad_variant = false;
  for (const auto& l : rep.lines)
    if (l.name.rfind("verlet_cbar", 0) == 0) {
      found_bad_variant = true;
      REQUIRE_FALSE(l.pass);
    }
  REQUIRE(found_bad_variant);
}

TEST_CASE("mscl-check runs both methods", "[cli]") {
  RunConfig c = parse_config(smoke_config());
  c.problem = Problem::custom;
  c.t_final = 0.1;
  MsclCheckResult ms = mscl_check(c, 5);
  REQUIRE(ms.max_element < 1e-11);
  REQUIRE(ms.max_global < 1e-11);
  c.method = Method::mixed_ldgh;
  MsclCheckResult mixed = mscl_check(c, 1);
  REQUIRE(mixed.witness_min < -1e-6);
}
