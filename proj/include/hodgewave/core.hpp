#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hodgewave {

// Thrown on bad user input (configs, file formats, argument validation).
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when an iterative or nonlinear solve fails to reach tolerance.
struct solver_error : std::runtime_error {
  explicit solver_error(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw config_error(msg);
}

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

using VecX = std::vector<double>;

inline VecX zeros(std::size_t n) { return VecX(n, 0.0); }

inline double dot(const VecX& a, const VecX& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const VecX& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const VecX& x, VecX& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(double alpha, VecX& x) {
  for (double& v : x) v *= alpha;
}

// splitmix64: small deterministic generator so outputs are identical across
// standard libraries.
struct Rng {
  std::uint64_t state;
  explicit Rng(std::uint64_t seed) : state(seed) {}
  std::uint64_t next_u64() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  // uniform in [0,1)
  double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }
  // uniform in [-1,1)
  double uniform_sym() { return 2.0 * uniform01() - 1.0; }
  VecX uniform_vec(std::size_t n) {
    VecX v(n);
    for (double& x : v) x = uniform_sym();
    return v;
  }
};

}  // namespace hodgewave
