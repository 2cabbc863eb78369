#pragma once

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "biotcr/smoothers.hpp"

namespace biotcr {

/// Invalid user-supplied configuration (parameters, penalty, config files).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct MaterialParams {
  double mu = 1.0;
  double lambda = 1.0;
  double alpha = 1.0;
  double sigma = 0.0;
  double kappa_bar = 1.0;
  double tau = 1.0;

  double kappa() const { return tau * kappa_bar; }

  void validate() const {
    auto need_pos = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be > 0");
    };
    need_pos(mu, "mu");
    need_pos(lambda, "lambda");
    need_pos(kappa_bar, "kappa_bar");
    need_pos(tau, "tau");
    // alpha = 0 is admitted for the decoupled limit.
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be >= 0");
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be >= 0");
  }

  std::string describe() const {
    std::ostringstream os;
    os.precision(6);
    os << "mu=" << mu << " lambda=" << lambda << " alpha=" << alpha << " sigma=" << sigma
       << " kappa_bar=" << kappa_bar << " tau=" << tau;
    return os.str();
  }
};

struct DGConfig {
  double eta = 10.0;
  /// Required lower bound for the smallest eigenvalue of A_dG against G_dG.
  double min_stability = 0.1;
};

namespace detail {

/// Local CR (1 - 2 lambda_i) or P1 (lambda_i) trace values at a face point.
inline std::array<double, 3> local_trace(bool cr, const std::array<double, 3>& b) {
  std::array<double, 3> v{};
  for (int i = 0; i < 3; ++i) v[i] = cr ? 1.0 - 2.0 * b[i] : b[i];
  return v;
}

/// Inertia test: true iff the symmetric matrix K is positive definite.
inline bool positive_definite(const SpMat& K) {
  Eigen::SimplicialLDLT<SpMat> ldlt(K);
  if (ldlt.info() != Eigen::Success) return false;
  const Vec d = ldlt.vectorD();
  return (d.array() > 0.0).all();
}

}  // namespace detail

/// Smallest eigenvalue of the pencil (A, G), G symmetric positive definite.
/// Dense below 2000 unknowns, otherwise bisection on the inertia of A - s G.
inline double min_generalized_eigenvalue(const SpMat& A, const SpMat& G) {
  const int n = static_cast<int>(A.rows());
  if (n <= 2000) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Mat(A), Mat(G), Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("generalized eigensolve failed");
    return es.eigenvalues()[0];
  }
  // A - s G is positive definite exactly for s < lambda_min.
  auto pd_at = [&](double s) { return detail::positive_definite(SpMat(A - s * G)); };
  double pd = -1.0;
  while (!pd_at(pd)) {
    pd *= 2.0;
    if (pd < -1e12) throw std::runtime_error("min_generalized_eigenvalue: bracket failed");
  }
  double npd = 1.0;
  while (pd_at(npd)) {
    pd = npd;
    npd *= 2.0;
    if (npd > 1e12) throw std::runtime_error("min_generalized_eigenvalue: bracket failed");
  }
  for (int it = 0; it < 60 && npd - pd > 1e-9 * std::max(1.0, std::abs(npd)); ++it) {
    const double mid = 0.5 * (pd + npd);
    if (detail::positive_definite(SpMat(A - mid * G)))
      pd = mid;
    else
      npd = mid;
  }
  return 0.5 * (pd + npd);
}

/// Element part of A_CR on CR2: int eps_T(U) : eps_T(V).
inline SpMat assemble_ACR_elastic(const Mesh& m) {
  const int n = m.num_interior_faces();
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto g = m.barycentric_gradients(t);
    std::array<Point, 3> gp;
    std::array<int, 3> dof;
    for (int i = 0; i < 3; ++i) {
      gp[i] = -2.0 * g[i];
      dof[i] = m.interior_face_index(m.triangle_faces(t)[i]);
    }
    const double a = m.area(t);
    for (int c = 0; c < 2; ++c)
      for (int d = 0; d < 2; ++d)
        for (int i = 0; i < 3; ++i) {
          if (dof[i] < 0) continue;
          for (int j = 0; j < 3; ++j) {
            if (dof[j] < 0) continue;
            // eps(phi_i e_c) : eps(phi_j e_d) = 1/2 (delta_cd grad phi_i . grad phi_j + d_d phi_i d_c phi_j)
            const double gi_d = d == 0 ? gp[i].x : gp[i].y;
            const double gj_c = c == 0 ? gp[j].x : gp[j].y;
            const double v = 0.5 * ((c == d ? dot(gp[i], gp[j]) : 0.0) + gi_d * gj_c);
            trip.emplace_back(c * n + dof[i], d * n + dof[j], a * v);
          }
        }
  }
  SpMat K(2 * n, 2 * n);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

/// Scalar jump Gram sum_F w_F int_F [S][T] over all faces, for CR (cr=true)
/// or dG-P1 bases, with weight w_F = scale / h_F.
inline SpMat assemble_jump_gram(const Mesh& m, bool cr, double scale) {
  const QuadRule& r = quad_rule(QuadDomain::edge, 2);
  const int ndofs = cr ? m.num_interior_faces() : 3 * m.num_triangles();
  auto dof = [&](int t, int i) {
    return cr ? m.interior_face_index(m.triangle_faces(t)[i]) : 3 * t + i;
  };
  Triplets trip;
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& fc = m.face(f);
    const int sides = fc.boundary() ? 1 : 2;
    const double w_f = scale / m.face_h(f) * m.face_length(f);
    for (std::size_t q = 0; q < r.size(); ++q) {
      const double s = r.points[q][1];
      std::array<int, 6> idx{};
      std::array<double, 6> val{};
      for (int side = 0; side < sides; ++side) {
        const int t = fc.tri[side];
        const auto v = detail::local_trace(cr, m.face_point_bary(f, side, s));
        for (int i = 0; i < 3; ++i) {
          idx[3 * side + i] = dof(t, i);
          val[3 * side + i] = side == 0 ? v[i] : -v[i];
        }
      }
      for (int a = 0; a < 3 * sides; ++a) {
        if (idx[a] < 0) continue;
        for (int b = 0; b < 3 * sides; ++b) {
          if (idx[b] < 0) continue;
          trip.emplace_back(idx[a], idx[b], r.weights[q] * w_f * val[a] * val[b]);
        }
      }
    }
  }
  SpMat K(ndofs, ndofs);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

/// Weighted jump values at the edge quadrature points, one row per (face,
/// point): L^T L equals assemble_jump_gram, and |L U|^2 has no cancellation.
inline SpMat assemble_jump_operator(const Mesh& m, bool cr, double scale) {
  const QuadRule& r = quad_rule(QuadDomain::edge, 2);
  const int ndofs = cr ? m.num_interior_faces() : 3 * m.num_triangles();
  Triplets trip;
  int row = 0;
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& fc = m.face(f);
    const int sides = fc.boundary() ? 1 : 2;
    const double w_f = scale / m.face_h(f) * m.face_length(f);
    for (std::size_t q = 0; q < r.size(); ++q, ++row) {
      const double s = r.points[q][1], root = std::sqrt(r.weights[q] * w_f);
      for (int side = 0; side < sides; ++side) {
        const int t = fc.tri[side];
        const auto v = detail::local_trace(cr, m.face_point_bary(f, side, s));
        for (int i = 0; i < 3; ++i) {
          const int d = cr ? m.interior_face_index(m.triangle_faces(t)[i]) : 3 * t + i;
          if (d >= 0) trip.emplace_back(row, d, (side == 0 ? root : -root) * v[i]);
        }
      }
    }
  }
  SpMat L(row, ndofs);
  L.setFromTriplets(trip.begin(), trip.end());
  return L;
}

/// A_CR(U, V) = int eps_T(U):eps_T(V) + sum_F h^{-1} int_F [U].[V]; this is
/// also the Gram matrix of the CR norm.
inline SpMat assemble_ACR(const Mesh& m) {
  SpMat J = detail::block_diag2(assemble_jump_gram(m, true, 1.0));
  SpMat K = assemble_ACR_elastic(m) + J;
  return K;
}

/// Broken H1 seminorm Gram on dG-P1.
inline SpMat assemble_dg_gradient(const Mesh& m) {
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto g = m.barycentric_gradients(t);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) trip.emplace_back(3 * t + i, 3 * t + j, m.area(t) * dot(g[i], g[j]));
  }
  SpMat K(3 * m.num_triangles(), 3 * m.num_triangles());
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

/// Gram matrix of the dG norm: int grad_T . grad_T + sum_F eta/h int [.][.].
inline SpMat assemble_GdG(const Mesh& m, const DGConfig& cfg) {
  return assemble_dg_gradient(m) + assemble_jump_gram(m, false, cfg.eta);
}

/// Symmetric interior penalty form without the stability self-check.
inline SpMat assemble_AdG_unchecked(const Mesh& m, const DGConfig& cfg) {
  if (!(cfg.eta > 0.0)) throw ConfigError("eta must be > 0");
  const QuadRule& r = quad_rule(QuadDomain::edge, 2);
  Triplets trip;
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& fc = m.face(f);
    const int sides = fc.boundary() ? 1 : 2;
    const Point n = m.face_normal(f);
    const double len = m.face_length(f);
    // {grad P}.n per local basis: constant along the face.
    std::array<double, 6> gn{};
    for (int side = 0; side < sides; ++side) {
      const auto g = m.barycentric_gradients(fc.tri[side]);
      for (int i = 0; i < 3; ++i) gn[3 * side + i] = (sides == 2 ? 0.5 : 1.0) * dot(g[i], n);
    }
    for (std::size_t q = 0; q < r.size(); ++q) {
      const double s = r.points[q][1];
      std::array<double, 6> jv{};
      for (int side = 0; side < sides; ++side) {
        const auto b = m.face_point_bary(f, side, s);
        for (int i = 0; i < 3; ++i) jv[3 * side + i] = side == 0 ? b[i] : -b[i];
      }
      for (int a = 0; a < 3 * sides; ++a) {
        const int ia = 3 * fc.tri[a / 3] + a % 3;
        for (int b = 0; b < 3 * sides; ++b) {
          const int ib = 3 * fc.tri[b / 3] + b % 3;
          const double v = -(gn[b] * jv[a] + gn[a] * jv[b]);
          trip.emplace_back(ia, ib, r.weights[q] * len * v);
        }
      }
    }
  }
  SpMat K(3 * m.num_triangles(), 3 * m.num_triangles());
  K.setFromTriplets(trip.begin(), trip.end());
  return assemble_dg_gradient(m) + K + assemble_jump_gram(m, false, cfg.eta);
}

/// Smallest eigenvalue of A_dG against the dG-norm Gram.
inline double dg_stability_constant(const Mesh& m, const DGConfig& cfg) {
  return min_generalized_eigenvalue(assemble_AdG_unchecked(m, cfg), assemble_GdG(m, cfg));
}

/// A_dG with the mandatory stability check: A_dG - min_stability * G_dG must
/// be positive definite, otherwise the penalty is reported as too small.
inline SpMat assemble_AdG(const Mesh& m, const DGConfig& cfg) {
  SpMat A = assemble_AdG_unchecked(m, cfg);
  const SpMat G = assemble_GdG(m, cfg);
  if (!detail::positive_definite(SpMat(A - cfg.min_stability * G))) {
    std::ostringstream os;
    os << "penalty parameter eta = " << cfg.eta
       << " is too small: smallest eigenvalue of A_dG against the dG norm is below " << cfg.min_stability;
    throw ConfigError(os.str());
  }
  return A;
}

/// D[t, j] = int_T div_T(phi_j) for the CR2 basis; rows indexed by triangles.
inline SpMat assemble_pair_div(const Mesh& m) {
  const int n = m.num_interior_faces();
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto g = m.barycentric_gradients(t);
    for (int i = 0; i < 3; ++i) {
      const int d = m.interior_face_index(m.triangle_faces(t)[i]);
      if (d < 0) continue;
      trip.emplace_back(t, d, m.area(t) * -2.0 * g[i].x);
      trip.emplace_back(t, n + d, m.area(t) * -2.0 * g[i].y);
    }
  }
  SpMat D(m.num_triangles(), 2 * n);
  D.setFromTriplets(trip.begin(), trip.end());
  return D;
}

/// Mass pairing int Q Q_F with Q in P0 (rows) and Q_F in dG-P1 (columns).
inline SpMat assemble_pair_mass(const Mesh& m) {
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int i = 0; i < 3; ++i) trip.emplace_back(t, 3 * t + i, m.area(t) / 3.0);
  SpMat M(m.num_triangles(), 3 * m.num_triangles());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

inline Vec triangle_areas(const Mesh& m) {
  Vec a(m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) a[t] = m.area(t);
  return a;
}

/// All parameter-independent blocks of the discrete problem on one mesh.
struct BiotOperators {
  DGConfig dg;
  SpMat A_CR;   // CR2 x CR2, also the CR norm Gram
  SpMat A_dG;   // dGP1 x dGP1
  SpMat G_dG;   // dG norm Gram
  SpMat D;      // P0 x CR2 divergence pairing
  SpMat Mass;   // P0 x dGP1 mass pairing
  SpMat Kdiv;   // int div_T U div_T V
  SpMat C;      // int P_F div_T V, CR2 x dGP1
  SpMat Mred;   // int Pi0 P Pi0 Q
  Vec areas;
  int n_u = 0, n_p = 0, n_t = 0;
};

inline BiotOperators assemble_operators(const Mesh& m, const DGConfig& cfg = {}) {
  BiotOperators ops;
  ops.dg = cfg;
  ops.A_CR = assemble_ACR(m);
  ops.A_dG = assemble_AdG(m, cfg);
  ops.G_dG = assemble_GdG(m, cfg);
  ops.D = assemble_pair_div(m);
  ops.Mass = assemble_pair_mass(m);
  ops.areas = triangle_areas(m);
  Vec inv_area = ops.areas.cwiseInverse();
  ops.Kdiv = SpMat(ops.D.transpose()) * inv_area.asDiagonal() * ops.D;
  // div_T V is constant on T, so int P_F div V = div V|_T * |T| * mean(P_F).
  ops.C = SpMat(ops.D.transpose()) * dg_to_p0_matrix(m);
  ops.Mred = SpMat(ops.Mass.transpose()) * inv_area.asDiagonal() * ops.Mass;
  ops.n_u = static_cast<int>(ops.A_CR.rows());
  ops.n_p = static_cast<int>(ops.A_dG.rows());
  ops.n_t = m.num_triangles();
  return ops;
}

struct LinearSystem {
  SpMat matrix;
  Vec rhs;
  int n_u = 0;  // CR2 block size; pressure block follows
  int n_p = 0;
};

namespace detail {

inline SpMat stack_blocks(const SpMat& a, const SpMat& b, const SpMat& c, const SpMat& d) {
  const int n1 = static_cast<int>(a.rows()), n2 = static_cast<int>(d.rows());
  Triplets trip;
  trip.reserve(a.nonZeros() + b.nonZeros() + c.nonZeros() + d.nonZeros());
  auto put = [&trip](const SpMat& M, int r0, int c0) {
    for (int k = 0; k < M.outerSize(); ++k)
      for (SpMat::InnerIterator it(M, k); it; ++it) trip.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
  };
  put(a, 0, 0);
  put(b, 0, n1);
  put(c, n1, 0);
  put(d, n1, n1);
  SpMat K(n1 + n2, n1 + n2);
  K.setFromTriplets(trip.begin(), trip.end());
  return K;
}

}  // namespace detail

/// B = [[2 mu A_CR + lambda Kdiv, -alpha C], [alpha C^T, sigma Mred + kappa A_dG]].
inline SpMat assemble_B(const BiotOperators& ops, const MaterialParams& p) {
  p.validate();
  SpMat uu = 2.0 * p.mu * ops.A_CR + p.lambda * ops.Kdiv;
  SpMat up = -p.alpha * ops.C;
  SpMat pu = p.alpha * SpMat(ops.C.transpose());
  SpMat pp = p.sigma * ops.Mred + p.kappa() * ops.A_dG;
  return detail::stack_blocks(uu, up, pu, pp);
}

inline SpMat assemble_B(const Mesh& m, const MaterialParams& p, const DGConfig& cfg = {}) {
  return assemble_B(assemble_operators(m, cfg), p);
}

/// <f, E_CR V> and <g, E_dG Q_F> for all test basis functions.
inline Vec assemble_rhs_smoothed(const Mesh& m, const SmootherAssembly& S, const VectorFn& f, const ScalarFn& g) {
  const Vec fx = bubble_load(m, S.layout, [&](double x, double y) { return f(x, y).x; });
  const Vec fy = bubble_load(m, S.layout, [&](double x, double y) { return f(x, y).y; });
  const Vec gb = bubble_load(m, S.layout, g);
  Vec fb(fx.size() + fy.size());
  fb << fx, fy;
  Vec rhs(S.E_CR.cols() + S.E_dG.cols());
  rhs << S.E_CR.transpose() * fb, S.E_dG.transpose() * gb;
  return rhs;
}

inline Vec assemble_rhs_smoothed(const Mesh& m, const VectorFn& f, const ScalarFn& g) {
  return assemble_rhs_smoothed(m, assemble_smoothers(m), f, g);
}

/// Moments int g lambda_i per triangle (dG-P1 load vector, degree-8 rule).
inline Vec load_dg(const Mesh& m, const ScalarFn& g) {
  const QuadRule& r = quad_rule(QuadDomain::triangle, kLoadDegree);
  Vec out = Vec::Zero(3 * m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t)
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Point p = m.map(t, r.points[k]);
      const double w = r.weights[k] * m.area(t) * g(p.x, p.y);
      for (int i = 0; i < 3; ++i) out[3 * t + i] += w * r.points[k][i];
    }
  return out;
}

/// Plain moments int f.V and int g Q_F against the nonconforming bases.
inline Vec assemble_rhs_plain(const Mesh& m, const VectorFn& f, const ScalarFn& g) {
  const QuadRule& r = quad_rule(QuadDomain::triangle, kLoadDegree);
  const int n = m.num_interior_faces();
  Vec rhs = Vec::Zero(2 * n + 3 * m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) {
    std::array<int, 3> dof;
    for (int i = 0; i < 3; ++i) dof[i] = m.interior_face_index(m.triangle_faces(t)[i]);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const auto& b = r.points[k];
      const Point p = m.map(t, b);
      const double w = r.weights[k] * m.area(t);
      const Point fv = f(p.x, p.y);
      const double gv = g(p.x, p.y);
      for (int i = 0; i < 3; ++i) {
        if (dof[i] >= 0) {
          rhs[dof[i]] += w * fv.x * (1.0 - 2.0 * b[i]);
          rhs[n + dof[i]] += w * fv.y * (1.0 - 2.0 * b[i]);
        }
        rhs[2 * n + 3 * t + i] += w * gv * b[i];
      }
    }
  }
  return rhs;
}

}  // namespace biotcr
