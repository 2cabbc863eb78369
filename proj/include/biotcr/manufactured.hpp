#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include "biotcr/analysis.hpp"

namespace biotcr {

/// Exact solution with the loads it induces for given parameters:
/// f = -div(2 mu eps(u) + lambda div(u) I - alpha p I), g = alpha div u + sigma p - kappa Delta p.
struct ManufacturedCase {
  std::string name;
  ExactSolution exact;
  std::function<VectorFn(const MaterialParams&)> force;
  std::function<ScalarFn(const MaterialParams&)> source;
};

/// u = a (s, s), p_F = s with s = sin(pi x) sin(pi y), a = 0.1.
inline ManufacturedCase trig_case() {
  constexpr double pi = std::numbers::pi;
  constexpr double a = 0.1;
  auto s = [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); };
  auto c = [](double x, double y) { return std::cos(pi * x) * std::cos(pi * y); };
  auto sx = [](double x, double y) { return pi * std::cos(pi * x) * std::sin(pi * y); };
  auto sy = [](double x, double y) { return pi * std::sin(pi * x) * std::cos(pi * y); };

  ManufacturedCase mc;
  mc.name = "trig";
  mc.exact.u = [=](double x, double y) { return Point{a * s(x, y), a * s(x, y)}; };
  mc.exact.grad_u = [=](double x, double y) {
    const Point g{a * sx(x, y), a * sy(x, y)};
    return std::array<Point, 2>{g, g};
  };
  mc.exact.p = s;
  mc.exact.grad_p = [=](double x, double y) { return Point{sx(x, y), sy(x, y)}; };
  mc.exact.p_mean = 4.0 / (pi * pi);
  mc.force = [=](const MaterialParams& q) -> VectorFn {
    return [=](double x, double y) {
      const double base = a * pi * pi * (q.mu * (3.0 * s(x, y) - c(x, y)) + q.lambda * (s(x, y) - c(x, y)));
      return Point{base + q.alpha * sx(x, y), base + q.alpha * sy(x, y)};
    };
  };
  mc.source = [=](const MaterialParams& q) -> ScalarFn {
    return [=](double x, double y) {
      return q.alpha * a * (sx(x, y) + sy(x, y)) + q.sigma * s(x, y) + 2.0 * pi * pi * q.kappa() * s(x, y);
    };
  };
  return mc;
}

/// Divergence-free u = a curl(s^2) = 2a s (s_y, -s_x), p_F = s, a = 0.1.
/// Here p_T = -alpha (p_F - mean) stays bounded as lambda grows, so
/// displacement errors isolate volumetric locking.
inline ManufacturedCase divfree_case() {
  constexpr double pi = std::numbers::pi;
  constexpr double a = 0.1;
  auto s = [](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); };
  auto sx = [](double x, double y) { return pi * std::cos(pi * x) * std::sin(pi * y); };
  auto sy = [](double x, double y) { return pi * std::sin(pi * x) * std::cos(pi * y); };
  auto sxy = [](double x, double y) { return pi * pi * std::cos(pi * x) * std::cos(pi * y); };

  ManufacturedCase mc;
  mc.name = "divfree";
  mc.exact.u = [=](double x, double y) { return Point{2 * a * s(x, y) * sy(x, y), -2 * a * s(x, y) * sx(x, y)}; };
  mc.exact.grad_u = [=](double x, double y) {
    const double v = s(x, y), vx = sx(x, y), vy = sy(x, y), vxy = sxy(x, y), vxx = -pi * pi * v;
    return std::array<Point, 2>{Point{2 * a * (vx * vy + v * vxy), 2 * a * (vy * vy + v * vxx)},
                                Point{-2 * a * (vx * vx + v * vxx), -2 * a * (vy * vx + v * vxy)}};
  };
  mc.exact.p = s;
  mc.exact.grad_p = [=](double x, double y) { return Point{sx(x, y), sy(x, y)}; };
  mc.exact.p_mean = 4.0 / (pi * pi);
  mc.force = [=](const MaterialParams& q) -> VectorFn {
    // div u = 0, so f = -mu lap u + alpha grad p
    return [=](double x, double y) {
      const double sx2 = std::sin(pi * x), sy2 = std::sin(pi * y);
      const double lap1 = 2 * a * pi * pi * pi * std::sin(2 * pi * y) * (1 - 4 * sx2 * sx2);
      const double lap2 = -2 * a * pi * pi * pi * std::sin(2 * pi * x) * (1 - 4 * sy2 * sy2);
      return Point{-q.mu * lap1 + q.alpha * sx(x, y), -q.mu * lap2 + q.alpha * sy(x, y)};
    };
  };
  mc.source = [=](const MaterialParams& q) -> ScalarFn {
    return [=](double x, double y) { return q.sigma * s(x, y) + 2.0 * pi * pi * q.kappa() * s(x, y); };
  };
  return mc;
}

inline ManufacturedCase zero_case() {
  ManufacturedCase mc;
  mc.name = "zero";
  mc.exact.u = [](double, double) { return Point{0, 0}; };
  mc.exact.grad_u = [](double, double) { return std::array<Point, 2>{}; };
  mc.exact.p = [](double, double) { return 0.0; };
  mc.exact.grad_p = [](double, double) { return Point{0, 0}; };
  mc.force = [](const MaterialParams&) -> VectorFn { return [](double, double) { return Point{0, 0}; }; };
  mc.source = [](const MaterialParams&) -> ScalarFn { return [](double, double) { return 0.0; }; };
  return mc;
}

inline ManufacturedCase manufactured_case(const std::string& name) {
  if (name == "trig") return trig_case();
  if (name == "divfree") return divfree_case();
  if (name == "zero") return zero_case();
  throw ConfigError("unknown manufactured case '" + name + "' (expected trig, divfree or zero)");
}

}  // namespace biotcr
