#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "biotcr/solver.hpp"

namespace biotcr {

/// A smooth exact pair (u, p_F) with derivatives. p_mean is the domain mean
/// of p, needed for the mean-free projection in p_T.
struct ExactSolution {
  VectorFn u;
  std::function<std::array<Point, 2>(double, double)> grad_u;  // grad u_x, grad u_y
  ScalarFn p;
  VectorFn grad_p;
  double p_mean = 0.0;

  double div_u(double x, double y) const {
    const auto g = grad_u(x, y);
    return g[0].x + g[1].y;
  }
  ScalarFn total_pressure(const MaterialParams& q) const {
    return [this, q](double x, double y) { return q.lambda * div_u(x, y) - q.alpha * (p(x, y) - p_mean); };
  }
  ScalarFn fluid_content(const MaterialParams& q) const {
    return [this, q](double x, double y) { return q.alpha * div_u(x, y) + q.sigma * p(x, y); };
  }
};

/// Norms of a discrete pair with the parameter weights used.
struct NormBundle {
  double norm_CR = 0;      // ||U||_CR
  double norm_dG = 0;      // ||P_F||_dG
  double l2_U = 0;
  double l2_PF = 0;
  double l2_PT = 0;
  double l2_M = 0;
  double hminus1_M = 0;    // ||L_dG M||_dG
  double trial = 0;        // discrete trial norm
  double trial_u = 0, trial_pT = 0, trial_pF = 0, trial_m = 0;  // its weighted squares
  double test = 0;         // discrete test norm of (U, P_F) read as a test pair
  MaterialParams params;
};

/// Unweighted squared distances and the weighted total.
struct ErrComponents {
  double u = 0;    // ||u - U||_CR^2
  double pT = 0;   // ||p_T - P_T||^2
  double m = 0;    // ||m - M||_{-1,h}^2
  double pF = 0;   // ||p_F - P_F||_dG^2
  double w_u = 0, w_pT = 0, w_m = 0, w_pF = 0;  // with mu^2 kappa, kappa, mu, mu kappa^2
  double total = 0;                              // ERR (not squared)
};

struct BestApproximation {
  Vec U, P_F, P_T, M, D;  // minimizers (D: dG-P1 projection of div u)
  double u = 0, pT = 0, m = 0, pF = 0, div = 0;  // squared infima
  double lower_bound = 0;  // weighted sqrt sum of the four infima
  double upper_terms = 0;  // same plus mu alpha^2 * div term
};

struct ErrorReport {
  ErrComponents err;
  BestApproximation best;
  ErrComponents comparand;
  double quasi_ratio = 0;   // ERR(solution) / ERR(comparand)
  double lower_ratio = 0;   // ERR(solution) / lower bound, >= 1 up to round-off
  int level = -1;
  MaterialParams params;
  std::string hminus1_note =
      "H^-1 distances use the discrete dual norm ||L_dG r||_dG of the dG-P1 moments of r";
};

inline constexpr int kDenseLimit = 5000;

/// Per-mesh data for error evaluation: jump Grams and factorized saddle-point
/// problems for the right inverses and the H^-1 projection.
class AnalysisContext {
 public:
  explicit AnalysisContext(const Discretization& d)
      : disc(d), lifts(d.ops),
        L_cr(detail::block_diag2(assemble_jump_operator(d.mesh, true, 1.0))),
        L_dg(assemble_jump_operator(d.mesh, false, d.ops.dg.eta)),
        p0_to_dg(p0_to_dg_matrix(d.mesh)), dg_to_p0(dg_to_p0_matrix(d.mesh)) {
    const BiotOperators& o = d.ops;
    const int nu = o.n_u, np = o.n_p, nt = o.n_t;
    // min ||V||_CR with D V = |T| Q0; the extra unknown pins the multiplier constant
    {
      Triplets t;
      append(t, o.A_CR, 0, 0);
      append(t, o.D, nu, 0);
      append(t, SpMat(o.D.transpose()), 0, nu);
      for (int i = 0; i < nt; ++i) {
        t.emplace_back(nu + i, nu + nt, 1.0);
        t.emplace_back(nu + nt, nu + i, 1.0);
      }
      rcr_.compute(detail::from_triplets(nu + nt + 1, nu + nt + 1, t));
    }
    // min ||P||_dG with Mass P = |T| Q
    {
      Triplets t;
      append(t, o.G_dG, 0, 0);
      append(t, o.Mass, np, 0);
      append(t, SpMat(o.Mass.transpose()), 0, np);
      rdg_.compute(detail::from_triplets(np + nt, np + nt, t));
    }
    // min ||L||_dG over (L, M) with A_dG L + Mass^T M = load
    {
      Triplets t;
      append(t, o.G_dG, 0, 0);
      append(t, SpMat(-o.A_dG), 0, np);
      append(t, SpMat(-o.A_dG), np, 0);
      append(t, SpMat(-SpMat(o.Mass.transpose())), np, 2 * np);
      append(t, SpMat(-o.Mass), 2 * np, np);
      hproj_.compute(detail::from_triplets(2 * np + nt, 2 * np + nt, t));
    }
    if (rcr_.info() != Eigen::Success || rdg_.info() != Eigen::Success || hproj_.info() != Eigen::Success)
      throw std::runtime_error("AnalysisContext: saddle-point factorization failed");
  }

  const Discretization& disc;
  RieszLifts lifts;
  SpMat L_cr, L_dg, p0_to_dg, dg_to_p0;  // jump operators: |L U|^2 = jump part of the norm

  /// Minimum CR-norm V with div_T V = Q0 (Q0 mean-free).
  Vec right_inverse_CR(const Vec& Q0) const {
    const BiotOperators& o = disc.ops;
    Vec rhs = Vec::Zero(o.n_u + o.n_t + 1);
    rhs.segment(o.n_u, o.n_t) = o.areas.cwiseProduct(Q0);
    return rcr_.solve(rhs).head(o.n_u);
  }
  /// Minimum dG-norm P with Pi_0 P = Q.
  Vec right_inverse_dG(const Vec& Q) const {
    const BiotOperators& o = disc.ops;
    Vec rhs = Vec::Zero(o.n_p + o.n_t);
    rhs.tail(o.n_t) = o.areas.cwiseProduct(Q);
    return rdg_.solve(rhs).head(o.n_p);
  }
  /// argmin over P0 of ||load - Mass^T M||_{-1,h}.
  Vec hminus1_projection(const Vec& load) const {
    const BiotOperators& o = disc.ops;
    Vec rhs = Vec::Zero(2 * o.n_p + o.n_t);
    rhs.segment(o.n_p, o.n_p) = -load;
    return hproj_.solve(rhs).tail(o.n_t);
  }

 private:
  static void append(Triplets& t, const SpMat& M, int r0, int c0) {
    for (int k = 0; k < M.outerSize(); ++k)
      for (SpMat::InnerIterator it(M, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
  }
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> rcr_, rdg_, hproj_;
};

namespace detail {

inline double frob2_sym_diff(const std::array<Point, 2>& G, Point gx, Point gy) {
  const double e11 = G[0].x - gx.x, e22 = G[1].y - gy.y;
  const double e12 = 0.5 * (G[0].y + G[1].x) - 0.5 * (gx.y + gy.x);
  return e11 * e11 + e22 * e22 + 2.0 * e12 * e12;
}

template <class Fn>
double integrate(const Mesh& m, Fn&& fn) {
  const QuadRule& r = quad_rule(QuadDomain::triangle, kLoadDegree);
  double total = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t)
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Point x = m.map(t, r.points[k]);
      total += r.weights[k] * m.area(t) * fn(t, x, r.points[k]);
    }
  return total;
}

}  // namespace detail

/// ||u - U||_CR^2; u is conforming, so only the jumps of U contribute.
inline double cr_distance2(const AnalysisContext& c, const ExactSolution& ex, const Vec& U) {
  const Mesh& m = c.disc.mesh;
  const int n = m.num_interior_faces();
  const double elem = detail::integrate(m, [&](int t, Point x, const auto&) {
    return detail::frob2_sym_diff(ex.grad_u(x.x, x.y), grad_cr(m, U, 0, t), grad_cr(m, U, n, t));
  });
  return elem + (c.L_cr * U).squaredNorm();
}

inline double dg_distance2(const AnalysisContext& c, const ExactSolution& ex, const Vec& P) {
  const Mesh& m = c.disc.mesh;
  const double elem = detail::integrate(m, [&](int t, Point x, const auto&) {
    const Point d = ex.grad_p(x.x, x.y) - grad_dg(m, P, t);
    return dot(d, d);
  });
  return elem + (c.L_dg * P).squaredNorm();
}

inline double l2_distance2_p0(const Mesh& m, const ScalarFn& q, const Vec& Q) {
  return detail::integrate(m, [&](int t, Point x, const auto&) {
    const double d = q(x.x, x.y) - Q[t];
    return d * d;
  });
}

/// ||r - Q||_{-1,h}^2 for a smooth r and Q in P0.
inline double hminus1_distance2(const AnalysisContext& c, const Vec& r_load, const Vec& Q) {
  const Vec load = r_load - SpMat(c.disc.ops.Mass.transpose()) * Q;
  const double v = c.lifts.h_minus1_norm_load(load);
  return v * v;
}

inline void weigh(ErrComponents& e, const MaterialParams& p) {
  const double k = p.kappa();
  e.w_u = p.mu * p.mu * k * e.u;
  e.w_pT = k * e.pT;
  e.w_m = p.mu * e.m;
  e.w_pF = p.mu * k * k * e.pF;
  e.total = std::sqrt(e.w_u + e.w_pT + e.w_m + e.w_pF);
}

/// ERR between the exact pair and a discrete pair (U, P_F); P_T and M are
/// derived from (U, P_F).
inline ErrComponents compute_err(const AnalysisContext& c, const ExactSolution& ex, const MaterialParams& p,
                                 const Vec& U, const Vec& P) {
  const Mesh& m = c.disc.mesh;
  BiotSolution s;
  s.U.coeffs = U;
  s.P_F.coeffs = P;
  derive_fields(c.disc.ops, p, s);
  ErrComponents e;
  e.u = cr_distance2(c, ex, U);
  e.pF = dg_distance2(c, ex, P);
  e.pT = l2_distance2_p0(m, ex.total_pressure(p), s.P_T.coeffs);
  e.m = hminus1_distance2(c, load_dg(m, ex.fluid_content(p)), s.M.coeffs);
  weigh(e, p);
  return e;
}

inline ErrComponents compute_err(const AnalysisContext& c, const ExactSolution& ex, const BiotSolution& s) {
  return compute_err(c, ex, s.params, s.U.coeffs, s.P_F.coeffs);
}

/// Independent best approximations of u, p_T, m, p_F and the extra
/// divergence term.
inline BestApproximation best_approximation(const AnalysisContext& c, const ExactSolution& ex,
                                            const MaterialParams& p) {
  const Discretization& d = c.disc;
  const Mesh& m = d.mesh;
  const int n = m.num_interior_faces(), nt = m.num_triangles();
  const QuadRule& r = quad_rule(QuadDomain::triangle, kLoadDegree);
  BestApproximation b;

  // CR energy projection: A_CR U = (eps(u), eps_T(phi_j)), using int_T grad u
  Vec rhs_u = Vec::Zero(2 * n), rhs_p = Vec::Zero(3 * nt);
  for (int t = 0; t < nt; ++t) {
    std::array<Point, 2> gu{};
    Point gp{};
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Point x = m.map(t, r.points[k]);
      const double w = r.weights[k] * m.area(t);
      const auto g = ex.grad_u(x.x, x.y);
      gu[0] = gu[0] + w * g[0];
      gu[1] = gu[1] + w * g[1];
      gp = gp + w * ex.grad_p(x.x, x.y);
    }
    const auto bg = m.barycentric_gradients(t);
    for (int i = 0; i < 3; ++i) {
      const int dof = m.interior_face_index(m.triangle_faces(t)[i]);
      rhs_p[3 * t + i] += dot(gp, bg[i]);
      if (dof < 0) continue;
      const Point gphi = -2.0 * bg[i];
      // eps(phi e_x) : E = dphi/dx E11 + dphi/dy E12, with E12 the symmetric part
      const double e12 = 0.5 * (gu[0].y + gu[1].x);
      rhs_u[dof] += gphi.x * gu[0].x + gphi.y * e12;
      rhs_u[n + dof] += gphi.x * e12 + gphi.y * gu[1].y;
    }
  }
  Eigen::SimplicialLDLT<SpMat> acr(d.ops.A_CR), gdg(d.ops.G_dG);
  b.U = acr.solve(rhs_u);
  b.P_F = gdg.solve(rhs_p);
  b.u = cr_distance2(c, ex, b.U);
  b.pF = dg_distance2(c, ex, b.P_F);

  const ScalarFn pT = ex.total_pressure(p);
  b.P_T = project_P0mean0(m, pT).coeffs;
  b.pT = l2_distance2_p0(m, pT, b.P_T);

  const Vec m_load = load_dg(m, ex.fluid_content(p));
  b.M = c.hminus1_projection(m_load);
  b.m = hminus1_distance2(c, m_load, b.M);

  // elementwise L2 projection of div u onto P1
  b.D = Vec::Zero(3 * nt);
  double div2 = 0.0;
  for (int t = 0; t < nt; ++t) {
    Eigen::Matrix3d M3 = Eigen::Matrix3d::Zero();
    Eigen::Vector3d f3 = Eigen::Vector3d::Zero();
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Point x = m.map(t, r.points[k]);
      const double w = r.weights[k] * m.area(t);
      const Eigen::Vector3d l(r.points[k][0], r.points[k][1], r.points[k][2]);
      M3 += w * l * l.transpose();
      f3 += w * ex.div_u(x.x, x.y) * l;
    }
    const Eigen::Vector3d c3 = M3.ldlt().solve(f3);
    b.D.segment<3>(3 * t) = c3;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Point x = m.map(t, r.points[k]);
      const Eigen::Vector3d l(r.points[k][0], r.points[k][1], r.points[k][2]);
      const double e = ex.div_u(x.x, x.y) - c3.dot(l);
      div2 += r.weights[k] * m.area(t) * e * e;
    }
  }
  b.div = div2;

  const double k = p.kappa();
  const double low = p.mu * p.mu * k * b.u + k * b.pT + p.mu * b.m + p.mu * k * k * b.pF;
  b.lower_bound = std::sqrt(low);
  b.upper_terms = std::sqrt(low + p.mu * p.alpha * p.alpha * b.div);
  return b;
}

/// The pair built in the operative error bound from the best approximations:
/// U~ = U^ + R_CR(Pi_mean0 I(div u) - div_T U^), P~ = P^ + R_dG(I(p_F) - Pi_0 P^).
inline std::pair<Vec, Vec> comparand(const AnalysisContext& c, const ExactSolution& ex, const BestApproximation& b) {
  const Discretization& d = c.disc;
  const Mesh& m = d.mesh;
  Field Idiv = interp_I(d.smoothers, m, [&](double x, double y) { return ex.div_u(x, y); });
  const Vec q0 = remove_mean(m, Field{SpaceKind::P0, Idiv.coeffs}).coeffs - broken_divergence(d.ops, b.U);
  const Vec U = b.U + c.right_inverse_CR(q0);
  const Field Ip = interp_I(d.smoothers, m, ex.p);
  const Vec P = b.P_F + c.right_inverse_dG(Ip.coeffs - c.dg_to_p0 * b.P_F);
  return {U, P};
}

inline ErrorReport error_report(const AnalysisContext& c, const ExactSolution& ex, const BiotSolution& s,
                                int level = -1) {
  ErrorReport rep;
  rep.params = s.params;
  rep.level = level;
  rep.err = compute_err(c, ex, s);
  rep.best = best_approximation(c, ex, s.params);
  const auto [U, P] = comparand(c, ex, rep.best);
  rep.comparand = compute_err(c, ex, s.params, U, P);
  rep.quasi_ratio = rep.comparand.total > 0 ? rep.err.total / rep.comparand.total : 0.0;
  rep.lower_ratio = rep.best.lower_bound > 0 ? rep.err.total / rep.best.lower_bound : 0.0;
  return rep;
}

/// Norms of a discrete pair.
inline NormBundle compute_norms(const AnalysisContext& c, const MaterialParams& p, const Vec& U, const Vec& P) {
  const BiotOperators& o = c.disc.ops;
  if (U.size() != o.n_u || P.size() != o.n_p) throw std::invalid_argument("compute_norms: size mismatch");
  BiotSolution s;
  s.U.coeffs = U;
  s.P_F.coeffs = P;
  derive_fields(o, p, s);
  NormBundle nb;
  nb.params = p;
  nb.norm_CR = std::sqrt(std::max(0.0, U.dot(o.A_CR * U)));
  nb.norm_dG = std::sqrt(std::max(0.0, P.dot(o.G_dG * P)));
  const Mesh& m = c.disc.mesh;
  const int n = m.num_interior_faces();
  nb.l2_U = std::sqrt(detail::integrate(m, [&](int t, Point, const auto& b) {
    const double x = eval_cr(m, U, 0, t, b), y = eval_cr(m, U, n, t, b);
    return x * x + y * y;
  }));
  nb.l2_PF = std::sqrt(detail::integrate(m, [&](int t, Point, const auto& b) {
    const double v = eval_dg(P, t, b);
    return v * v;
  }));
  nb.l2_PT = std::sqrt(o.areas.dot(s.P_T.coeffs.cwiseAbs2()));
  nb.l2_M = std::sqrt(o.areas.dot(s.M.coeffs.cwiseAbs2()));
  nb.hminus1_M = c.lifts.h_minus1_norm(s.M);
  const double k = p.kappa();
  nb.trial_u = p.mu * p.mu * k * nb.norm_CR * nb.norm_CR;
  nb.trial_pT = k * nb.l2_PT * nb.l2_PT;
  nb.trial_pF = p.mu * k * k * nb.norm_dG * nb.norm_dG;
  nb.trial_m = p.mu * nb.hminus1_M * nb.hminus1_M;
  nb.trial = std::sqrt(nb.trial_u + nb.trial_pT + nb.trial_pF + nb.trial_m);
  nb.test = std::sqrt(nb.norm_CR * nb.norm_CR / k + nb.norm_dG * nb.norm_dG / (2.0 * p.mu));
  return nb;
}

/// sup over test pairs of B((U, P), (V, Q)) / ||(V, Q)||_2.
inline double dual_test_norm(const AnalysisContext& c, const MaterialParams& p, const Vec& U, const Vec& P) {
  const BiotOperators& o = c.disc.ops;
  Vec x(o.n_u + o.n_p);
  x << U, P;
  const Vec y = assemble_B(o, p) * x;
  Eigen::SimplicialLDLT<SpMat> acr(o.A_CR), gdg(o.G_dG);
  const Vec yu = y.head(o.n_u), yp = y.tail(o.n_p);
  return std::sqrt(p.kappa() * yu.dot(acr.solve(yu)) + 2.0 * p.mu * yp.dot(gdg.solve(yp)));
}

// ---------------------------------------------------------------- inf-sup

enum class InfSupPair { div_CR_P0, div_contP1_P0, mass_P0_dG, mass_P0_P0dGnorm, global_B_weighted };

inline InfSupPair parse_infsup_pair(const std::string& s) {
  if (s == "div_CR_P0") return InfSupPair::div_CR_P0;
  if (s == "div_contP1_P0") return InfSupPair::div_contP1_P0;
  if (s == "mass_P0_dG") return InfSupPair::mass_P0_dG;
  if (s == "mass_P0_P0dGnorm") return InfSupPair::mass_P0_P0dGnorm;
  if (s == "global_B_weighted") return InfSupPair::global_B_weighted;
  throw ConfigError("unknown inf-sup pair '" + s + "'");
}

inline std::string to_string(InfSupPair p) {
  switch (p) {
    case InfSupPair::div_CR_P0: return "div_CR_P0";
    case InfSupPair::div_contP1_P0: return "div_contP1_P0";
    case InfSupPair::mass_P0_dG: return "mass_P0_dG";
    case InfSupPair::mass_P0_P0dGnorm: return "mass_P0_P0dGnorm";
    case InfSupPair::global_B_weighted: return "global_B_weighted";
  }
  return "?";
}

inline constexpr double kSpuriousThreshold = 1e-10;

struct InfSupResult {
  double beta = 0;
  bool spurious = false;  // beta below kSpuriousThreshold
  int dim_trial = 0, dim_test = 0;
};

namespace detail {

inline void dense_guard(long n, const char* what) {
  if (n > kDenseLimit)
    throw ConfigError(std::string(what) + ": dense eigenproblem of size " + std::to_string(n) + " exceeds " +
                      std::to_string(kDenseLimit));
}

/// Extreme eigenvalues of S x = mu N x (N SPD).
inline std::pair<double, double> pencil_extremes(const Mat& S, const Mat& N) {
  Eigen::LLT<Mat> llt(N);
  if (llt.info() != Eigen::Success) throw ConfigError("inf-sup: Gram matrix is not positive definite");
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(S, N, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("inf-sup: eigensolver failed");
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

inline double smallest_pencil_eigenvalue(const Mat& S, const Mat& N) { return pencil_extremes(S, N).first; }

/// beta^2 = min over Q in range(Z) of Q^T Bp Gv^{-1} Bp^T Q / Q^T Gq Q.
inline double pairing_infsup(const SpMat& Bp, const SpMat& Gv, const Mat& Gq, const Mat& Z) {
  dense_guard(Z.cols(), "inf-sup");
  Eigen::SimplicialLDLT<SpMat> gv(Gv);
  if (gv.info() != Eigen::Success) throw ConfigError("inf-sup: trial Gram matrix is not positive definite");
  const Mat BZ = Bp.transpose() * Z;  // nv x k
  const Mat X = gv.solve(BZ);
  const Mat S = BZ.transpose() * X;
  const Mat N = Z.transpose() * Gq * Z;
  return std::sqrt(std::max(0.0, smallest_pencil_eigenvalue(0.5 * (S + S.transpose()), 0.5 * (N + N.transpose()))));
}

/// Basis of mean-free P0: e_i - (|T_i| / |T_last|) e_last.
inline Mat mean_free_basis(const Vec& areas) {
  const int T = static_cast<int>(areas.size());
  Mat Z = Mat::Zero(T, T - 1);
  for (int i = 0; i < T - 1; ++i) {
    Z(i, i) = 1.0;
    Z(T - 1, i) = -areas[i] / areas[T - 1];
  }
  return Z;
}

/// contP1 stiffness on interior vertices.
inline SpMat contP1_stiffness(const Mesh& m) {
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto g = m.barycentric_gradients(t);
    const auto& tr = m.triangle(t);
    for (int i = 0; i < 3; ++i) {
      const int a = m.interior_vertex_index(tr[i]);
      if (a < 0) continue;
      for (int j = 0; j < 3; ++j) {
        const int b = m.interior_vertex_index(tr[j]);
        if (b >= 0) trip.emplace_back(a, b, m.area(t) * dot(g[i], g[j]));
      }
    }
  }
  return from_triplets(m.num_interior_vertices(), m.num_interior_vertices(), trip);
}

/// H^-1 Gram of P0 on m through conforming P1 on a mesh refined `levels`
/// times: Q^T H Q = sup_v (int Q v)^2 / ||grad v||^2. One refinement is not
/// enough: some P0 fields are orthogonal to every hat of the once-refined mesh.
inline Mat hminus1_reference_gram(const Mesh& m, int levels = 3) {
  Mesh fine = m;
  std::vector<int> parent(m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) parent[t] = t;
  for (int l = 0; l < levels; ++l) {
    fine = refine_uniform(fine);
    std::vector<int> next(4 * parent.size());
    for (std::size_t t = 0; t < parent.size(); ++t)
      for (int c = 0; c < 4; ++c) next[4 * t + c] = parent[t];
    parent = std::move(next);
  }
  const SpMat K = contP1_stiffness(fine);
  Triplets trip;
  for (int ft = 0; ft < fine.num_triangles(); ++ft)
    for (int v : fine.triangle(ft)) {
      const int j = fine.interior_vertex_index(v);
      if (j >= 0) trip.emplace_back(parent[ft], j, fine.area(ft) / 3.0);
    }
  const SpMat P = from_triplets(m.num_triangles(), fine.num_interior_vertices(), trip);
  Eigen::SimplicialLDLT<SpMat> k(K);
  const Mat X = k.solve(Mat(P.transpose()));
  return Mat(P * X);
}

/// P0 Gram of the dG norm: only the eta/h jumps survive.
inline SpMat p0_dg_gram(const Mesh& m, double eta) {
  const SpMat J = assemble_jump_gram(m, false, eta);
  const SpMat E = p0_to_dg_matrix(m);
  return SpMat(E.transpose()) * J * E;
}

/// dense H^-1_h Gram on P0: Mass A_dG^{-1} G_dG A_dG^{-1} Mass^T.
inline Mat hminus1_discrete_gram(const BiotOperators& o) {
  Eigen::SimplicialLDLT<SpMat> a(o.A_dG);
  const Mat X = a.solve(Mat(o.Mass.transpose()));
  return X.transpose() * (o.G_dG * X);
}

}  // namespace detail

/// Parameter-free pieces of the global weighted inf-sup problem. In the
/// scaled variables U^ = mu sqrt(k) U, t^ = sqrt(k) P_T, s^ = sqrt(mu) M,
/// P^ = sqrt(mu) k P_F both the trial norm and the dual test norm lose their
/// parameter weights; the parameters only enter the linear map from (U^, P^)
/// to (t^, s^). Working on an orthonormal basis of that graph keeps the
/// eigenproblem well conditioned even for lambda = 1e8, kappa = 1e-8.
class GlobalInfSup {
 public:
  explicit GlobalInfSup(const Discretization& d) : d_(d) {
    const BiotOperators& o = d.ops;
    nu_ = o.n_u;
    np_ = o.n_p;
    nt_ = o.n_t;
    nbig_ = nu_ + 2 * nt_ + np_;
    detail::dense_guard(nbig_, "global_B_weighted");
    const Mat H = detail::hminus1_discrete_gram(o);
    N_ = Mat::Zero(nbig_, nbig_);
    N_.block(0, 0, nu_, nu_) = Mat(o.A_CR);
    N_.block(nu_, nu_, nt_, nt_) = o.areas.asDiagonal();
    N_.block(nu_ + nt_, nu_ + nt_, nt_, nt_) = H;
    N_.block(nu_ + 2 * nt_, nu_ + 2 * nt_, np_, np_) = Mat(o.G_dG);
    // dual test norm: |2 A U^ + D^T t^|^2_{A^-1} + 2 |Mass^T s^ + A_dG P^|^2_{G^-1}
    Mat J1 = Mat::Zero(nu_, nbig_), J2 = Mat::Zero(np_, nbig_);
    J1.block(0, 0, nu_, nu_) = 2.0 * Mat(o.A_CR);
    J1.block(0, nu_, nu_, nt_) = Mat(o.D.transpose());
    J2.block(0, nu_ + nt_, np_, nt_) = Mat(o.Mass.transpose());
    J2.block(0, nu_ + 2 * nt_, np_, np_) = Mat(o.A_dG);
    Eigen::LLT<Mat> a(Mat(o.A_CR)), g(Mat(o.G_dG));
    const Mat X1 = a.solve(J1), X2 = g.solve(J2);
    S_ = J1.transpose() * X1 + 2.0 * J2.transpose() * X2;
    S_ = 0.5 * (S_ + S_.transpose());
    div_ = Mat(o.areas.cwiseInverse().asDiagonal() * o.D);
    pi0_ = Mat(dg_to_p0_matrix(d.mesh));
  }

  /// With equivalent_norm, mu lambda k |div U|^2 + mu sigma k |Pi_0 P_F|^2 is
  /// added to the squared trial norm.
  double beta(const MaterialParams& p, bool equivalent_norm = false) const {
    return std::sqrt(std::max(0.0, extremes(p, equivalent_norm).first));
  }
  /// Continuity constant: largest sup-ratio over trial pairs.
  double continuity(const MaterialParams& p) const { return std::sqrt(extremes(p, false).second); }

  int dim() const { return nu_ + np_; }

 private:
  std::pair<double, double> extremes(const MaterialParams& p, bool equivalent_norm) const {
    p.validate();
    const double k = p.kappa(), mu = p.mu;
    const Mat mf = Mat::Identity(nt_, nt_) - Vec::Ones(nt_) * (d_.ops.areas.transpose() / d_.ops.areas.sum());
    const int extra = equivalent_norm ? 2 * nt_ : 0;
    Mat C = Mat::Zero(nbig_ + extra, nu_ + np_);
    C.block(0, 0, nu_, nu_).setIdentity();
    C.block(nu_ + 2 * nt_, nu_, np_, np_).setIdentity();
    C.block(nu_, 0, nt_, nu_) = (p.lambda / mu) * div_;
    C.block(nu_, nu_, nt_, np_) = -(p.alpha / std::sqrt(mu * k)) * (mf * pi0_);
    C.block(nu_ + nt_, 0, nt_, nu_) = (p.alpha / std::sqrt(mu * k)) * div_;
    C.block(nu_ + nt_, nu_, nt_, np_) = (p.sigma / k) * pi0_;
    Mat S = S_, N = N_;
    if (equivalent_norm) {
      C.block(nbig_, 0, nt_, nu_) = std::sqrt(p.lambda / mu) * div_;
      C.block(nbig_ + nt_, nu_, nt_, np_) = std::sqrt(p.sigma / k) * pi0_;
      S.conservativeResize(nbig_ + extra, nbig_ + extra);
      N.conservativeResize(nbig_ + extra, nbig_ + extra);
      S.rightCols(extra).setZero();
      S.bottomRows(extra).setZero();
      N.rightCols(extra).setZero();
      N.bottomRows(extra).setZero();
      N.block(nbig_, nbig_, nt_, nt_) = d_.ops.areas.asDiagonal();
      N.block(nbig_ + nt_, nbig_ + nt_, nt_, nt_) = d_.ops.areas.asDiagonal();
    }
    Eigen::HouseholderQR<Mat> qr(C);
    const Mat Q = qr.householderQ() * Mat::Identity(C.rows(), C.cols());
    const Mat Sr = Q.transpose() * S * Q, Nr = Q.transpose() * N * Q;
    return detail::pencil_extremes(0.5 * (Sr + Sr.transpose()), 0.5 * (Nr + Nr.transpose()));
  }

  const Discretization& d_;
  int nu_ = 0, np_ = 0, nt_ = 0, nbig_ = 0;
  Mat S_, N_, div_, pi0_;
};

inline InfSupResult infsup_constant(InfSupPair pair, const Mesh& m, const MaterialParams& p = {},
                                    const DGConfig& cfg = {}) {
  InfSupResult res;
  const Vec areas = triangle_areas(m);
  const int T = m.num_triangles();
  switch (pair) {
    case InfSupPair::div_CR_P0: {
      const SpMat D = assemble_pair_div(m);
      res.beta = detail::pairing_infsup(D, assemble_ACR(m), Mat(areas.asDiagonal()), detail::mean_free_basis(areas));
      res.dim_trial = static_cast<int>(D.cols());
      res.dim_test = T - 1;
      break;
    }
    case InfSupPair::div_contP1_P0: {
      // vector contP1 in H^1_0, component-major, with the full gradient norm
      const int nv = m.num_interior_vertices();
      const SpMat K = detail::contP1_stiffness(m);
      Triplets gt, dt;
      for (int k = 0; k < K.outerSize(); ++k)
        for (SpMat::InnerIterator it(K, k); it; ++it)
          for (int c = 0; c < 2; ++c) gt.emplace_back(c * nv + it.row(), c * nv + it.col(), it.value());
      for (int t = 0; t < T; ++t) {
        const auto g = m.barycentric_gradients(t);
        const auto& tr = m.triangle(t);
        for (int i = 0; i < 3; ++i) {
          const int a = m.interior_vertex_index(tr[i]);
          if (a < 0) continue;
          dt.emplace_back(t, a, m.area(t) * g[i].x);
          dt.emplace_back(t, nv + a, m.area(t) * g[i].y);
        }
      }
      if (nv == 0) {
        res.beta = 0.0;
      } else {
        res.beta = detail::pairing_infsup(detail::from_triplets(T, 2 * nv, dt),
                                          detail::from_triplets(2 * nv, 2 * nv, gt), Mat(areas.asDiagonal()),
                                          detail::mean_free_basis(areas));
      }
      res.dim_trial = 2 * nv;
      res.dim_test = T - 1;
      break;
    }
    case InfSupPair::mass_P0_dG: {
      const SpMat Mass = assemble_pair_mass(m);
      res.beta = detail::pairing_infsup(Mass, assemble_GdG(m, cfg), detail::hminus1_reference_gram(m),
                                        Mat::Identity(T, T));
      res.dim_trial = 3 * T;
      res.dim_test = T;
      break;
    }
    case InfSupPair::mass_P0_P0dGnorm: {
      Triplets dt;
      for (int t = 0; t < T; ++t) dt.emplace_back(t, t, areas[t]);
      res.beta = detail::pairing_infsup(detail::from_triplets(T, T, dt), detail::p0_dg_gram(m, cfg.eta),
                                        detail::hminus1_reference_gram(m), Mat::Identity(T, T));
      res.dim_trial = T;
      res.dim_test = T;
      break;
    }
    case InfSupPair::global_B_weighted: {
      Discretization d(m, cfg);
      GlobalInfSup g(d);
      res.beta = g.beta(p);
      res.dim_trial = res.dim_test = g.dim();
      break;
    }
  }
  res.spurious = res.beta < kSpuriousThreshold;
  return res;
}

// ---------------------------------------------------------- checkerboard

/// +1 on bottom/top and -1 on left/right triangles of each crisscross cell,
/// alternating in sign from cell to cell, so neighbours across every interior
/// face carry opposite values.
inline Field checkerboard_mode(const Mesh& m) {
  const auto info = m.structured_info();
  if (!info || info->kind != StructuredKind::crisscross)
    throw std::invalid_argument("checkerboard_mode: needs a crisscross mesh from build_structured");
  const int n = info->n;
  Vec v(m.num_triangles());
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < 4; ++k) v[4 * (j * n + i) + k] = ((i + j) % 2 == 0 ? 1.0 : -1.0) * (k % 2 == 0 ? 1.0 : -1.0);
  return {SpaceKind::P0, v};
}

/// |(Q, c)| / (||Q|| ||c||) for the checkerboard c; 0 for Q = 0.
inline double checkerboard_content(const Mesh& m, const Vec& Q) {
  const Vec c = checkerboard_mode(m).coeffs;
  const Vec a = triangle_areas(m);
  const double qq = a.dot(Q.cwiseAbs2()), cc = a.dot(c.cwiseAbs2());
  if (qq == 0.0) return 0.0;
  return std::abs(a.dot(Q.cwiseProduct(c))) / std::sqrt(qq * cc);
}

}  // namespace biotcr
