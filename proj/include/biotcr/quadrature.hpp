#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace biotcr {

enum class QuadDomain { triangle, edge };

/// Quadrature rule in barycentric coordinates; weights are normalized so that
/// they sum to one and must be multiplied by the measure of the cell. Edge
/// points carry (1 - s, s, 0).
struct QuadRule {
  QuadDomain domain;
  int degree;
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
};

namespace detail {

inline double factorial(int n) {
  double r = 1.0;
  for (int i = 2; i <= n; ++i) r *= i;
  return r;
}

/// Gauss-Legendre nodes and weights on [0, 1] via Newton iteration on P_n.
inline void gauss_legendre01(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  const double pi = std::acos(-1.0);
  for (int i = 0; i < n; ++i) {
    double z = std::cos(pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p1 = z, p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    x[i] = 0.5 * (1.0 - z);
    w[i] = 1.0 / ((1.0 - z * z) * dp * dp);
  }
}

inline void validate_rule(const QuadRule& r) {
  double worst = 0.0;
  for (int a = 0; a <= r.degree; ++a) {
    for (int b = 0; a + b <= r.degree; ++b) {
      if (r.domain == QuadDomain::edge) {
        double q = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k)
          q += r.weights[k] * std::pow(r.points[k][0], a) * std::pow(r.points[k][1], b);
        const double exact = factorial(a) * factorial(b) / factorial(a + b + 1);
        worst = std::max(worst, std::abs(q - exact));
        continue;
      }
      for (int c = 0; a + b + c <= r.degree; ++c) {
        double q = 0.0;
        for (std::size_t k = 0; k < r.size(); ++k)
          q += r.weights[k] * std::pow(r.points[k][0], a) * std::pow(r.points[k][1], b) *
               std::pow(r.points[k][2], c);
        const double exact =
            factorial(a) * factorial(b) * factorial(c) * 2.0 / factorial(a + b + c + 2);
        worst = std::max(worst, std::abs(q - exact));
      }
    }
  }
  if (worst > 1e-13)
    throw std::logic_error("quadrature rule of degree " + std::to_string(r.degree) +
                           " failed monomial validation");
}

inline QuadRule make_edge_rule(int degree) {
  QuadRule r{QuadDomain::edge, degree, {}, {}};
  std::vector<double> x, w;
  gauss_legendre01(degree / 2 + 1, x, w);
  for (std::size_t i = 0; i < x.size(); ++i) {
    r.points.push_back({1.0 - x[i], x[i], 0.0});
    r.weights.push_back(w[i]);
  }
  validate_rule(r);
  return r;
}

/// Collapsed Gauss product rule symmetrized over the six permutations of the
/// barycentric coordinates.
inline QuadRule make_triangle_rule(int degree) {
  QuadRule r{QuadDomain::triangle, degree, {}, {}};
  std::vector<double> x, w;
  gauss_legendre01((degree + 3) / 2, x, w);
  static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double u = x[i], v = x[j];
      const std::array<double, 3> l{(1.0 - u) * (1.0 - v), u * (1.0 - v), v};
      const double weight = 2.0 * w[i] * w[j] * (1.0 - v) / 6.0;
      for (const auto& p : perms) {
        r.points.push_back({l[p[0]], l[p[1]], l[p[2]]});
        r.weights.push_back(weight);
      }
    }
  }
  validate_rule(r);
  return r;
}

}  // namespace detail

inline constexpr int kMaxTriangleDegree = 10;
inline constexpr int kMaxEdgeDegree = 11;

/// Cached rules, exact up to `degree` (triangles <= 10, edges <= 11).
inline const QuadRule& quad_rule(QuadDomain domain, int degree) {
  const int max_deg = domain == QuadDomain::triangle ? kMaxTriangleDegree : kMaxEdgeDegree;
  if (degree < 0 || degree > max_deg)
    throw std::invalid_argument("quad_rule: unsupported degree " + std::to_string(degree));
  static const auto tri_rules = [] {
    std::vector<QuadRule> v;
    for (int d = 0; d <= kMaxTriangleDegree; ++d) v.push_back(detail::make_triangle_rule(d));
    return v;
  }();
  static const auto edge_rules = [] {
    std::vector<QuadRule> v;
    for (int d = 0; d <= kMaxEdgeDegree; ++d) v.push_back(detail::make_edge_rule(d));
    return v;
  }();
  return domain == QuadDomain::triangle ? tri_rules[degree] : edge_rules[degree];
}

}  // namespace biotcr
