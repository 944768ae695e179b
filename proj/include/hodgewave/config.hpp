#pragma once

#include <optional>
#include <sstream>

#include "hodgewave/core.hpp"

namespace hodgewave {

enum class Problem { linear_plane_wave, cubic_klein_gordon, custom };
enum class Method { ms_ldgh, mixed_ldgh };
enum class Integrator { midpoint, yoshida6, verlet, rk_named };

struct RunConfig {
  Problem problem = Problem::linear_plane_wave;
  Method method = Method::ms_ldgh;
  Integrator integrator = Integrator::midpoint;
  std::string rk_name;  // for integrator = rk:<name>

  int nx = 8, ny = 8;
  double lx = 1.0, ly = 1.0;
  bool periodic_x = true, periodic_y = true;
  std::string mesh_file;

  int degree = 1;
  double alpha0 = -0.05, alpha1 = 0.05;
  double solver_tol = 1e-13;
  int solver_maxit = 200000;
  double newton_tol = 1e-12;
  int newton_maxit = 25;

  double dt = 0.0, t_final = 0.0;

  int cadence = 1;
  bool mscl = false;
  bool energy_identity = false;
  bool errors = true;
  bool snapshot = true;
  std::uint64_t seed = 1;
  std::optional<double> cross_section_y;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw config_error("config: field \"" + key + "\" expects a boolean, got \"" + v + "\"");
}

inline double parse_num(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (...) {
    throw config_error("config: field \"" + key + "\" expects a number, got \"" + v + "\"");
  }
  if (pos != v.size())
    throw config_error("config: field \"" + key + "\" expects a number, got \"" + v + "\"");
  return x;
}

inline int parse_int(const std::string& key, const std::string& v) {
  double x = parse_num(key, v);
  int i = int(x);
  if (double(i) != x)
    throw config_error("config: field \"" + key + "\" expects an integer, got \"" + v + "\"");
  return i;
}

}  // namespace detail

inline void validate_config(const RunConfig& c) {
  if (c.mesh_file.empty()) {
    require(c.nx >= 1 && c.ny >= 1, "config: fields \"nx\", \"ny\" must be at least 1");
    require(c.lx > 0 && c.ly > 0, "config: fields \"lx\", \"ly\" must be positive");
  }
  require(c.degree >= 0 && c.degree <= 5,
          "config: field \"degree\" must be between 0 and 5");
  require(c.alpha0 < 0, "config: field \"alpha0\" must be negative");
  require(c.alpha1 > 0, "config: field \"alpha1\" must be positive");
  require(c.dt > 0, "config: field \"dt\" must be positive");
  require(c.t_final >= c.dt, "config: field \"t_final\" must be at least dt");
  require(c.cadence >= 1, "config: field \"cadence\" must be at least 1");
  require(c.solver_tol > 0, "config: field \"solver_tol\" must be positive");
  if (c.integrator == Integrator::verlet)
    require(c.method == Method::ms_ldgh,
            "config: field \"integrator\" = verlet requires method = ms_ldgh");
  if (c.integrator == Integrator::rk_named)
    require(c.rk_name == "midpoint" || c.rk_name == "gauss2" || c.rk_name == "forward_euler" ||
                c.rk_name == "verlet_pair",
            "config: field \"integrator\" names an unknown rk tableau \"" + c.rk_name + "\"");
  if (c.integrator == Integrator::rk_named && c.rk_name == "verlet_pair")
    require(c.method == Method::ms_ldgh,
            "config: field \"integrator\" = rk:verlet_pair requires method = ms_ldgh");
}

// Flat "key = value" sections: [mesh], [method], [time], [output].
// Unknown sections or keys are errors.
inline RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw config_error("config: malformed section header at line " + std::to_string(lineno));
      section = line.substr(1, line.size() - 2);
      if (section != "mesh" && section != "method" && section != "time" && section != "output")
        throw config_error("config: unknown section \"" + section + "\"");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: expected key = value at line " + std::to_string(lineno));
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    std::string qual = section + "." + key;

    if (qual == "mesh.nx") c.nx = detail::parse_int(qual, val);
    else if (qual == "mesh.ny") c.ny = detail::parse_int(qual, val);
    else if (qual == "mesh.lx") c.lx = detail::parse_num(qual, val);
    else if (qual == "mesh.ly") c.ly = detail::parse_num(qual, val);
    else if (qual == "mesh.periodic_x") c.periodic_x = detail::parse_bool(qual, val);
    else if (qual == "mesh.periodic_y") c.periodic_y = detail::parse_bool(qual, val);
    else if (qual == "mesh.file") c.mesh_file = val;
    else if (qual == "method.problem") {
      if (val == "linear_plane_wave") c.problem = Problem::linear_plane_wave;
      else if (val == "cubic_klein_gordon") c.problem = Problem::cubic_klein_gordon;
      else if (val == "custom") c.problem = Problem::custom;
      else throw config_error("config: field \"problem\" has unknown value \"" + val + "\"");
    } else if (qual == "method.method") {
      if (val == "ms_ldgh") c.method = Method::ms_ldgh;
      else if (val == "mixed_ldgh") c.method = Method::mixed_ldgh;
      else throw config_error("config: field \"method\" has unknown value \"" + val + "\"");
    } else if (qual == "method.integrator") {
      if (val == "midpoint") c.integrator = Integrator::midpoint;
      else if (val == "yoshida6") c.integrator = Integrator::yoshida6;
      else if (val == "verlet") c.integrator = Integrator::verlet;
      else if (val.rfind("rk:", 0) == 0) {
        c.integrator = Integrator::rk_named;
        c.rk_name = val.substr(3);
      } else {
        throw config_error("config: field \"integrator\" has unknown value \"" + val + "\"");
      }
    } else if (qual == "method.degree") c.degree = detail::parse_int(qual, val);
    else if (qual == "method.alpha0") c.alpha0 = detail::parse_num(qual, val);
    else if (qual == "method.alpha1") c.alpha1 = detail::parse_num(qual, val);
    else if (qual == "method.solver_tol") c.solver_tol = detail::parse_num(qual, val);
    else if (qual == "method.solver_maxit") c.solver_maxit = detail::parse_int(qual, val);
    else if (qual == "method.newton_tol") c.newton_tol = detail::parse_num(qual, val);
    else if (qual == "method.newton_maxit") c.newton_maxit = detail::parse_int(qual, val);
    else if (qual == "time.dt") c.dt = detail::parse_num(qual, val);
    else if (qual == "time.t_final") c.t_final = detail::parse_num(qual, val);
    else if (qual == "output.cadence") c.cadence = detail::parse_int(qual, val);
    else if (qual == "output.mscl") c.mscl = detail::parse_bool(qual, val);
    else if (qual == "output.energy_identity") c.energy_identity = detail::parse_bool(qual, val);
    else if (qual == "output.errors") c.errors = detail::parse_bool(qual, val);
    else if (qual == "output.snapshot") c.snapshot = detail::parse_bool(qual, val);
    else if (qual == "output.seed") c.seed = std::uint64_t(detail::parse_int(qual, val));
    else if (qual == "output.cross_section_y") c.cross_section_y = detail::parse_num(qual, val);
    else throw config_error("config: unknown key \"" + key + "\" in section [" + section + "]");
  }
  validate_config(c);
  return c;
}


}  // namespace hodgewave
