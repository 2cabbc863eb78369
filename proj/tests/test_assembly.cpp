#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "biotcr/assembly.hpp"
#include "oracles.hpp"

using namespace biotcr;

namespace {

Vec random_vec(int n) {
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = oracle::uniform();
  return v;
}

double max_abs(const SpMat& A) {
  double r = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) r = std::max(r, std::abs(it.value()));
  return r;
}

// Affine restriction of a scalar CR field (midpoint values) to triangle t.
oracle::Affine cr_affine(const Mesh& m, const Vec& c, int offset, int t) {
  std::array<Point, 3> p;
  std::array<double, 3> v;
  for (int i = 0; i < 3; ++i) {
    const int f = m.triangle_faces(t)[i];
    p[i] = m.face_midpoint(f);
    const int d = m.interior_face_index(f);
    v[i] = d < 0 ? 0.0 : c[offset + d];
  }
  return oracle::affine_through(p, v);
}

oracle::Affine dg_affine(const Mesh& m, const Vec& c, int t) {
  const auto& tr = m.triangle(t);
  return oracle::affine_through({m.vertex(tr[0]), m.vertex(tr[1]), m.vertex(tr[2])},
                                {c[3 * t], c[3 * t + 1], c[3 * t + 2]});
}

// Outward normal of tri[0] on face f, from geometry only.
Point oracle_normal(const Mesh& m, int f) {
  const Face& fc = m.face(f);
  const Point a = m.vertex(fc.v[0]), b = m.vertex(fc.v[1]);
  Point n{b.y - a.y, a.x - b.x};
  n = (1.0 / norm(n)) * n;
  if (dot(n, 0.5 * (a + b) - m.centroid(fc.tri[0])) < 0) n = -1.0 * n;
  return n;
}

// A_CR(U, V) evaluated directly from the definition.
double oracle_ACR(const Mesh& m, const Vec& U, const Vec& V) {
  const int n = m.num_interior_faces();
  double s = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto u1 = cr_affine(m, U, 0, t), u2 = cr_affine(m, U, n, t);
    const auto v1 = cr_affine(m, V, 0, t), v2 = cr_affine(m, V, n, t);
    const double eu[2][2] = {{u1.b, 0.5 * (u1.c + u2.b)}, {0.5 * (u1.c + u2.b), u2.c}};
    const double ev[2][2] = {{v1.b, 0.5 * (v1.c + v2.b)}, {0.5 * (v1.c + v2.b), v2.c}};
    double e = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) e += eu[i][j] * ev[i][j];
    s += m.area(t) * e;
  }
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& fc = m.face(f);
    const Point a = m.vertex(fc.v[0]), b = m.vertex(fc.v[1]);
    for (int c = 0; c < 2; ++c) {
      const auto U0 = cr_affine(m, U, c * n, fc.tri[0]), V0 = cr_affine(m, V, c * n, fc.tri[0]);
      oracle::Affine U1, V1;
      if (!fc.boundary()) {
        U1 = cr_affine(m, U, c * n, fc.tri[1]);
        V1 = cr_affine(m, V, c * n, fc.tri[1]);
      }
      s += oracle::integrate_edge(a, b, [&](double r) {
             const Point x = (1 - r) * a + r * b;
             return (U0(x.x, x.y) - U1(x.x, x.y)) * (V0(x.x, x.y) - V1(x.x, x.y));
           }) /
           m.face_length(f);
    }
  }
  return s;
}

// Symmetric interior penalty form evaluated directly from the definition.
double oracle_AdG(const Mesh& m, const Vec& P, const Vec& Q, double eta) {
  double s = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto p = dg_affine(m, P, t), q = dg_affine(m, Q, t);
    s += m.area(t) * (p.b * q.b + p.c * q.c);
  }
  for (int f = 0; f < m.num_faces(); ++f) {
    const Face& fc = m.face(f);
    const Point a = m.vertex(fc.v[0]), b = m.vertex(fc.v[1]);
    const Point n = oracle_normal(m, f);
    const auto P0 = dg_affine(m, P, fc.tri[0]), Q0 = dg_affine(m, Q, fc.tri[0]);
    oracle::Affine P1, Q1;
    double w = 1.0;
    if (!fc.boundary()) {
      P1 = dg_affine(m, P, fc.tri[1]);
      Q1 = dg_affine(m, Q, fc.tri[1]);
      w = 0.5;
    }
    const double avg_gp = w * ((P0.b + (fc.boundary() ? 0.0 : P1.b)) * n.x + (P0.c + (fc.boundary() ? 0.0 : P1.c)) * n.y);
    const double avg_gq = w * ((Q0.b + (fc.boundary() ? 0.0 : Q1.b)) * n.x + (Q0.c + (fc.boundary() ? 0.0 : Q1.c)) * n.y);
    const double h = norm(b - a);
    s += oracle::integrate_edge(a, b, [&](double r) {
      const Point x = (1 - r) * a + r * b;
      const double jp = P0(x.x, x.y) - P1(x.x, x.y);
      const double jq = Q0(x.x, x.y) - Q1(x.x, x.y);
      return -avg_gp * jq - avg_gq * jp + eta / h * jp * jq;
    });
  }
  return s;
}

}  // namespace

TEST(ACR, Symmetric) {
  const Mesh m = build_structured(StructuredKind::crisscross, 3);
  const SpMat A = assemble_ACR(m);
  EXPECT_LE(max_abs(SpMat(A - SpMat(A.transpose()))), 1e-13 * max_abs(A));
}

TEST(ACR, MatchesDefinition) {
  for (auto kind : {StructuredKind::right_split, StructuredKind::crisscross}) {
    const Mesh m = build_structured(kind, 3);
    const SpMat A = assemble_ACR(m);
    for (int trial = 0; trial < 5; ++trial) {
      const Vec U = random_vec(A.rows()), V = random_vec(A.rows());
      EXPECT_NEAR(U.dot(A * V), oracle_ACR(m, U, V), 1e-12 * (1.0 + std::abs(U.dot(A * V))));
    }
  }
}

TEST(ACR, RigidRotationPenalized) {
  const Mesh m = build_structured(StructuredKind::right_split, 3);
  const Field vx = interpolate_cr(m, [](double, double y) { return -y; });
  const Field vy = interpolate_cr(m, [](double x, double) { return x; });
  Vec V(2 * m.num_interior_faces());
  V << vx.coeffs, vy.coeffs;
  const SpMat A = assemble_ACR(m);
  EXPECT_GT(V.dot(A * V), 1e-3);
  // Elastic part alone is blind to the rotation inside each triangle; the
  // boundary masking produces jump energy only.
  const SpMat K = assemble_ACR_elastic(m);
  EXPECT_LT(V.dot(K * V), V.dot(A * V));
}

TEST(ACR, PositiveDefinite) {
  const Mesh m = build_structured(StructuredKind::right_split, 2);
  Eigen::SelfAdjointEigenSolver<Mat> es{Mat(assemble_ACR(m))};
  EXPECT_GT(es.eigenvalues().minCoeff(), 1e-3);
}

TEST(AdG, SymmetricAndMatchesDefinition) {
  const Mesh m = build_structured(StructuredKind::crisscross, 2);
  const DGConfig cfg{10.0};
  const SpMat A = assemble_AdG(m, cfg);
  EXPECT_LE(max_abs(SpMat(A - SpMat(A.transpose()))), 1e-13 * max_abs(A));
  for (int trial = 0; trial < 5; ++trial) {
    const Vec P = random_vec(A.rows()), Q = random_vec(A.rows());
    EXPECT_NEAR(P.dot(A * Q), oracle_AdG(m, P, Q, 10.0), 1e-11 * (1.0 + std::abs(P.dot(A * Q))));
  }
}

TEST(AdG, ConformingFieldEnergy) {
  const Mesh m = build_structured(StructuredKind::right_split, 4);
  const SpMat A = assemble_AdG(m, {});
  const Vec v = contP1_to_dg(m, random_vec(m.num_interior_vertices()));
  double grad2 = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto a = dg_affine(m, v, t);
    grad2 += m.area(t) * (a.b * a.b + a.c * a.c);
  }
  EXPECT_NEAR(v.dot(A * v), grad2, 1e-12 * grad2);
}

TEST(AdG, PenaltySelfCheck) {
  for (int n : {1, 2, 4}) {
    const Mesh m = build_structured(StructuredKind::right_split, n);
    EXPECT_NO_THROW(assemble_AdG(m, {10.0}));
    EXPECT_GE(dg_stability_constant(m, {10.0}), 0.1);
    try {
      assemble_AdG(m, {0.01});
      ADD_FAILURE() << "eta = 0.01 accepted";
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("eta"), std::string::npos);
    }
  }
  EXPECT_THROW(assemble_AdG(build_structured(StructuredKind::right_split, 1), {0.0}), ConfigError);
}

// The inertia-based bisection agrees with the dense eigensolver.
TEST(AdG, BisectionMatchesDense) {
  const Mesh m = build_structured(StructuredKind::crisscross, 2);
  const SpMat A = assemble_AdG_unchecked(m, {10.0});
  const SpMat G = assemble_GdG(m, {10.0});
  Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(Mat(A), Mat(G), Eigen::EigenvaluesOnly);
  const double dense = es.eigenvalues()[0];
  // Force the sparse path by padding with a decoupled identity block.
  const int n = static_cast<int>(A.rows()), pad = 2100;
  Triplets ta, tg;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) ta.emplace_back(it.row(), it.col(), it.value());
  for (int k = 0; k < G.outerSize(); ++k)
    for (SpMat::InnerIterator it(G, k); it; ++it) tg.emplace_back(it.row(), it.col(), it.value());
  for (int i = 0; i < pad; ++i) {
    ta.emplace_back(n + i, n + i, 5.0);
    tg.emplace_back(n + i, n + i, 1.0);
  }
  SpMat Ab(n + pad, n + pad), Gb(n + pad, n + pad);
  Ab.setFromTriplets(ta.begin(), ta.end());
  Gb.setFromTriplets(tg.begin(), tg.end());
  EXPECT_NEAR(min_generalized_eigenvalue(Ab, Gb), dense, 1e-7);
}

TEST(Pairings, DivAgainstConstantVanishes) {
  const Mesh m = build_structured(StructuredKind::crisscross, 3);
  const SpMat D = assemble_pair_div(m);
  const Vec col_sums = SpMat(D.transpose()) * Vec::Ones(m.num_triangles());
  EXPECT_LT(col_sums.lpNorm<Eigen::Infinity>(), 1e-13);
}

TEST(Pairings, MassIndicator) {
  const Mesh m = build_structured(StructuredKind::right_split, 2);
  const SpMat M = assemble_pair_mass(m);
  for (int t = 0; t < m.num_triangles(); ++t) {
    Vec one_on_t = Vec::Zero(3 * m.num_triangles());
    one_on_t.segment(3 * t, 3).setOnes();
    EXPECT_NEAR((M * one_on_t)[t], m.area(t), 1e-15);
  }
}

TEST(Pairings, MatchQuadratureOracle) {
  const Mesh m = build_structured(StructuredKind::crisscross, 2);
  const int n = m.num_interior_faces();
  const SpMat D = assemble_pair_div(m);
  const SpMat M = assemble_pair_mass(m);
  const Vec V = random_vec(2 * n), Q0 = random_vec(m.num_triangles()), P = random_vec(3 * m.num_triangles());
  double div_pair = 0.0, mass_pair = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto a = cr_affine(m, V, 0, t), b = cr_affine(m, V, n, t);
    div_pair += Q0[t] * m.area(t) * (a.b + b.c);
    const auto& tr = m.triangle(t);
    const auto p = dg_affine(m, P, t);
    mass_pair += Q0[t] * oracle::integrate_triangle(m.vertex(tr[0]), m.vertex(tr[1]), m.vertex(tr[2]),
                                                    [&](double x, double y, std::array<double, 3>) { return p(x, y); });
  }
  EXPECT_NEAR(Q0.dot(D * V), div_pair, 1e-12);
  EXPECT_NEAR(Q0.dot(M * P), mass_pair, 1e-12);
}

TEST(FormB, DecouplesWithoutCoupling) {
  const Mesh m = build_structured(StructuredKind::right_split, 3);
  const BiotOperators ops = assemble_operators(m);
  const MaterialParams p{1.3, 7.0, 0.0, 0.0, 0.5, 0.2};
  const Mat Bd(assemble_B(ops, p));
  const int nu = ops.n_u, np = ops.n_p;
  EXPECT_LT((Bd.topLeftCorner(nu, nu) - Mat(2 * p.mu * ops.A_CR + p.lambda * ops.Kdiv)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((Bd.bottomRightCorner(np, np) - Mat(p.kappa() * ops.A_dG)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(Bd.topRightCorner(nu, np).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(Bd.bottomLeftCorner(np, nu).cwiseAbs().maxCoeff(), 0.0);
}

TEST(FormB, CouplingBlocksNegativeTransposes) {
  const Mesh m = build_structured(StructuredKind::crisscross, 2);
  const BiotOperators ops = assemble_operators(m);
  const Mat Bd(assemble_B(ops, MaterialParams{1.0, 2.0, 0.6, 1.0, 1.0, 1.0}));
  const int nu = ops.n_u, np = ops.n_p;
  EXPECT_LT((Mat(Bd.topRightCorner(nu, np)) + Mat(Bd.bottomLeftCorner(np, nu).transpose())).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(FormB, SignFlipSymmetrizes) {
  const Mesh m = build_structured(StructuredKind::crisscross, 2);
  const BiotOperators ops = assemble_operators(m);
  MaterialParams p{2.0, 3.0, 0.7, 1.0, 1.0, 0.1};
  Mat B(assemble_B(ops, p));
  // Replace Q by -Q in the test space.
  B.bottomRows(ops.n_p) *= -1.0;
  B.bottomRightCorner(ops.n_p, ops.n_p) *= -1.0;
  EXPECT_LT((B - B.transpose()).cwiseAbs().maxCoeff(), 1e-12 * B.cwiseAbs().maxCoeff());
}

TEST(FormB, EnergyIdentityAndPositivity) {
  const Mesh m = build_structured(StructuredKind::right_split, 3);
  const BiotOperators ops = assemble_operators(m);
  const MaterialParams p{1.5, 4.0, 0.8, 1.0, 2.0, 0.25};
  const SpMat B = assemble_B(ops, p);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec x = random_vec(ops.n_u + ops.n_p);
    const Vec V = x.head(ops.n_u), Q = x.tail(ops.n_p);
    const Vec divV = ops.areas.cwiseInverse().asDiagonal() * (ops.D * V);
    const Vec piQ = dg_to_p0_matrix(m) * Q;
    const double expected = 2 * p.mu * V.dot(ops.A_CR * V) + p.lambda * divV.dot(ops.areas.asDiagonal() * divV) +
                            p.sigma * piQ.dot(ops.areas.asDiagonal() * piQ) + p.kappa() * Q.dot(ops.A_dG * Q);
    EXPECT_NEAR(x.dot(B * x), expected, 1e-10 * expected);
    EXPECT_GT(x.dot(B * x), 0.0);
  }
}

TEST(FormB, BlockComposition) {
  const Mesh m = build_structured(StructuredKind::right_split, 2);
  const BiotOperators ops = assemble_operators(m);
  const MaterialParams p{1.0, 10.0, 1.0, 0.5, 1.0, 1.0};
  const SpMat B = assemble_B(ops, p);
  Mat expected = Mat::Zero(ops.n_u + ops.n_p, ops.n_u + ops.n_p);
  expected.topLeftCorner(ops.n_u, ops.n_u) = Mat(ops.A_CR) * 2.0 * p.mu + Mat(ops.Kdiv) * p.lambda;
  expected.topRightCorner(ops.n_u, ops.n_p) = -p.alpha * Mat(ops.C);
  expected.bottomLeftCorner(ops.n_p, ops.n_u) = p.alpha * Mat(ops.C.transpose());
  expected.bottomRightCorner(ops.n_p, ops.n_p) = p.sigma * Mat(ops.Mred) + p.kappa() * Mat(ops.A_dG);
  EXPECT_EQ(Mat(B), expected);
  EXPECT_EQ(Mat(assemble_B(m, p)), Mat(B));
}

TEST(FormB, NoZeroRows) {
  const Mesh m = build_structured(StructuredKind::crisscross, 2);
  const SpMat B = assemble_B(m, MaterialParams{});
  const Mat Bd(B);
  for (int i = 0; i < Bd.rows(); ++i) EXPECT_GT(Bd.row(i).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Params, Validation) {
  MaterialParams p;
  EXPECT_NO_THROW(p.validate());
  p.sigma = 0.0;
  EXPECT_NO_THROW(p.validate());
  p.alpha = 0.0;
  EXPECT_NO_THROW(p.validate());
  p.mu = 0.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = MaterialParams{};
  p.sigma = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = MaterialParams{};
  p.tau = 0.5;
  p.kappa_bar = 4.0;
  EXPECT_DOUBLE_EQ(p.kappa(), 2.0);
}

TEST(Rhs, ZeroLoads) {
  const Mesh m = build_structured(StructuredKind::right_split, 2);
  auto f = [](double, double) { return Point{0.0, 0.0}; };
  auto g = [](double, double) { return 0.0; };
  EXPECT_EQ(assemble_rhs_smoothed(m, f, g).norm(), 0.0);
  EXPECT_EQ(assemble_rhs_plain(m, f, g).norm(), 0.0);
}

TEST(Rhs, ConstantPressureLoadMatchesPlain) {
  const Mesh m = build_structured(StructuredKind::crisscross, 3);
  auto f = [](double, double) { return Point{0.0, 0.0}; };
  auto g = [](double, double) { return 1.0; };
  const Vec s = assemble_rhs_smoothed(m, f, g);
  const Vec p = assemble_rhs_plain(m, f, g);
  EXPECT_LT((s - p).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(Rhs, PiecewiseConstantForceDifferenceBounded) {
  const Mesh m = build_structured(StructuredKind::right_split, 4);
  auto f = [](double x, double y) { return Point{x < 0.5 ? 1.0 : -1.0, y < 0.5 ? 2.0 : 0.5}; };
  auto g = [](double, double) { return 0.0; };
  const int nu = 2 * m.num_interior_faces();
  const Vec s = assemble_rhs_smoothed(m, f, g).head(nu);
  const Vec p = assemble_rhs_plain(m, f, g).head(nu);
  const double gap = (s - p).norm();
  EXPECT_GT(gap, 0.0);
  EXPECT_LT(gap, p.norm());
}

// Dual dG norm of the difference between plain and smoothed pressure loads
// decreases at least linearly.
TEST(Rhs, PlainApproachesSmoothed) {
  auto f = [](double, double) { return Point{0.0, 0.0}; };
  auto g = [](double x, double y) { return std::exp(x) * std::cos(2 * y) + x * y; };
  std::vector<double> gaps;
  for (int n : {4, 8, 16}) {
    const Mesh m = build_structured(StructuredKind::right_split, n);
    const BiotOperators ops = assemble_operators(m);
    const Vec d = (assemble_rhs_smoothed(m, f, g) - assemble_rhs_plain(m, f, g)).tail(ops.n_p);
    Eigen::SimplicialLDLT<SpMat> G(ops.G_dG);
    gaps.push_back(std::sqrt(d.dot(G.solve(d))));
  }
  for (std::size_t i = 1; i < gaps.size(); ++i) EXPECT_GE(std::log2(gaps[i - 1] / gaps[i]), 0.9);
}

TEST(JumpOperator, FactorsTheJumpGram) {
  for (bool cr : {true, false}) {
    const Mesh m = build_structured(StructuredKind::crisscross, 3);
    const SpMat L = assemble_jump_operator(m, cr, 2.5);
    const SpMat J = assemble_jump_gram(m, cr, 2.5);
    EXPECT_LE(Mat(SpMat(L.transpose()) * L - J).cwiseAbs().maxCoeff(), 1e-12 * Mat(J).cwiseAbs().maxCoeff());
  }
}
