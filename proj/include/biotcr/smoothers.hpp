#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "biotcr/fespace.hpp"

namespace biotcr {

namespace detail {

/// Exact local integrals of the 9 bubbleH1 functions on triangle t.
struct BubbleLocal {
  Eigen::Matrix<double, 9, 9> mass;
  Eigen::Matrix<double, 9, 9> stiff;       // grad . grad
  Eigen::Matrix<double, 9, 9> dd[2][2];    // int d_c b_k d_d b_l
  Eigen::Matrix<double, 9, 3> mom1;        // int b_k lambda_j
  Eigen::Matrix<double, 9, 1> integral;    // int b_k
};

inline BubbleLocal bubble_local(const Mesh& m, int t) {
  const QuadRule& r = quad_rule(QuadDomain::triangle, 8);
  BubbleLocal L;
  L.mass.setZero();
  L.stiff.setZero();
  L.mom1.setZero();
  L.integral.setZero();
  for (auto& row : L.dd)
    for (auto& M : row) M.setZero();
  const double a = m.area(t);
  for (std::size_t q = 0; q < r.size(); ++q) {
    const auto b = eval_basis(SpaceKind::bubbleH1, m, t, r.points[q]);
    const double w = r.weights[q] * a;
    for (int k = 0; k < 9; ++k) {
      L.integral[k] += w * b.values[k];
      for (int j = 0; j < 3; ++j) L.mom1(k, j) += w * b.values[k] * r.points[q][j];
      for (int l = 0; l < 9; ++l) {
        L.mass(k, l) += w * b.values[k] * b.values[l];
        L.stiff(k, l) += w * dot(b.grads[k], b.grads[l]);
        const double gk[2] = {b.grads[k].x, b.grads[k].y};
        const double gl[2] = {b.grads[l].x, b.grads[l].y};
        for (int c = 0; c < 2; ++c)
          for (int d = 0; d < 2; ++d) L.dd[c][d](k, l) += w * gk[c] * gl[d];
      }
    }
  }
  return L;
}

inline SpMat from_triplets(int rows, int cols, const Triplets& t) {
  SpMat M(rows, cols);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

inline SpMat block_diag2(const SpMat& A) {
  Triplets t;
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k < A.outerSize(); ++k)
      for (SpMat::InnerIterator it(A, k); it; ++it)
        t.emplace_back(c * A.rows() + it.row(), c * A.cols() + it.col(), it.value());
  return from_triplets(2 * static_cast<int>(A.rows()), 2 * static_cast<int>(A.cols()), t);
}

}  // namespace detail

/// Sparse matrices of the moment-preserving operators. Columns act on input
/// coefficients (dG-P1: 3 per triangle; CR2: two stacked CR blocks), rows are
/// bubbleH1 coefficients in BubbleLayout order (stacked twice for E_CR).
struct SmootherAssembly {
  BubbleLayout layout;
  SpMat A;        // dGP1 -> contP1 part (rows: bubbleH1 layout, vertex block only)
  SpMat E;        // dGP1 -> bubbleH1
  SpMat E_CR;     // CR2 -> bubbleH1^2
  SpMat E_dG;     // dGP1 -> bubbleH1
  SpMat F;        // dGP1 -> bubbleH1
  SpMat I;        // bubbleH1 load vector -> P0 values
  SpMat mass;     // bubbleH1 Gram in L2
  SpMat stiff;    // bubbleH1 Gram in H1 seminorm
  SpMat eps;      // int eps(w):eps(z) on bubbleH1^2
  SpMat mass_dg;  // int b_k psi_j, bubbleH1 x dGP1
  std::vector<Eigen::Matrix3d> local_F;  // M_T = int lambda_i lambda_j S_T

  explicit SmootherAssembly(const Mesh& m) : layout(m) {}
};

/// Assemble every smoother on the given mesh.
inline SmootherAssembly assemble_smoothers(const Mesh& m) {
  SmootherAssembly S(m);
  const BubbleLayout& L = S.layout;
  const int nt = m.num_triangles();
  const int ndg = 3 * nt;
  const int nb = L.size();

  // Averaging: mean of the one-sided values around each interior vertex.
  Triplets ta;
  for (int t = 0; t < nt; ++t)
    for (int i = 0; i < 3; ++i) {
      const int v = m.triangle(t)[i];
      if (m.vertex_on_boundary(v)) continue;
      ta.emplace_back(L.vertex(v), 3 * t + i, 1.0 / m.vertex_triangles(v).size());
    }
  S.A = detail::from_triplets(nb, ndg, ta);

  // Face moments of {S} and of hats, for the face-bubble coefficients.
  Triplets tavg, that;
  for (int f : m.interior_faces()) {
    const Face& fc = m.face(f);
    const double half = 0.5 * m.face_length(f);
    for (int side = 0; side < 2; ++side) {
      const int t = fc.tri[side];
      for (int e = 0; e < 2; ++e) tavg.emplace_back(L.face(f), 3 * t + m.local_vertex(t, fc.v[e]), 0.5 * half);
    }
    for (int e = 0; e < 2; ++e)
      if (!m.vertex_on_boundary(fc.v[e])) that.emplace_back(L.face(f), L.vertex(fc.v[e]), half);
  }
  const SpMat face_avg = detail::from_triplets(nb, ndg, tavg);
  const SpMat face_hat = detail::from_triplets(nb, nb, that);
  S.E = S.A + face_avg - face_hat * S.A;
  S.E.prune(0.0);

  // Local bubble integrals.
  Triplets tint, tmom, tmass, tstiff, teps, tmdg, tinj_c, tinj;
  Triplets tint_dg, tmom_dg;
  S.local_F.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const auto loc = detail::bubble_local(m, t);
    const auto idx = bubble_cell_indices(m, L, t);
    const double a = m.area(t);
    for (int k = 0; k < 9; ++k) {
      if (idx[k] < 0) continue;
      tint.emplace_back(t, idx[k], loc.integral[k]);
      for (int j = 0; j < 3; ++j) {
        tmom.emplace_back(3 * t + j, idx[k], loc.mom1(k, j));
        tmdg.emplace_back(idx[k], 3 * t + j, loc.mom1(k, j));
      }
      for (int l = 0; l < 9; ++l) {
        if (idx[l] < 0) continue;
        tmass.emplace_back(idx[k], idx[l], loc.mass(k, l));
        tstiff.emplace_back(idx[k], idx[l], loc.stiff(k, l));
        // eps(b_k e_c) : eps(b_l e_d) = 1/2 (delta_cd grad b_k . grad b_l + d_d b_k d_c b_l)
        for (int c = 0; c < 2; ++c)
          for (int d = 0; d < 2; ++d)
            teps.emplace_back(c * nb + idx[k], d * nb + idx[l],
                              0.5 * ((c == d ? loc.stiff(k, l) : 0.0) + loc.dd[d][c](k, l)));
      }
    }
    Eigen::Matrix3d MT = loc.mom1.block<3, 3>(6, 0);
    MT = 0.5 * (MT + MT.transpose()).eval();
    const double det = MT.determinant();
    if (!(std::abs(det) > 1e-14 * std::pow(MT.norm(), 3)))
      throw std::runtime_error("smoother F: singular local matrix on triangle " + std::to_string(t));
    S.local_F[t] = MT;
    const Eigen::Matrix3d MTinv = MT.inverse();
    for (int i = 0; i < 3; ++i) {
      tinj_c.emplace_back(L.tri(t, i), t, 1.0);
      tint_dg.emplace_back(t, 3 * t + i, a / 3.0);
      for (int j = 0; j < 3; ++j) {
        tinj.emplace_back(L.tri(t, i), 3 * t + j, MTinv(i, j));
        tmom_dg.emplace_back(3 * t + i, 3 * t + j, a / 12.0 * (i == j ? 2.0 : 1.0));
      }
    }
  }
  const SpMat int_nb = detail::from_triplets(nt, nb, tint);
  const SpMat mom_nb = detail::from_triplets(ndg, nb, tmom);
  const SpMat int_dg = detail::from_triplets(nt, ndg, tint_dg);
  const SpMat mom_dg = detail::from_triplets(ndg, ndg, tmom_dg);
  const SpMat inject_const = detail::from_triplets(nb, nt, tinj_c);
  const SpMat inject_p1 = detail::from_triplets(nb, ndg, tinj);
  S.mass = detail::from_triplets(nb, nb, tmass);
  S.stiff = detail::from_triplets(nb, nb, tstiff);
  S.mass_dg = detail::from_triplets(nb, ndg, tmdg);
  S.eps = detail::from_triplets(2 * nb, 2 * nb, teps);

  S.E_CR = detail::block_diag2(SpMat(S.E * cr_to_dg_matrix(m)));
  S.E_dG = S.E + inject_const * (int_dg - int_nb * S.E);
  S.F = S.E + inject_p1 * (mom_dg - mom_nb * S.E);

  Vec inv_area(nt);
  for (int t = 0; t < nt; ++t) inv_area[t] = 1.0 / m.area(t);
  const SpMat FP0 = S.F * p0_to_dg_matrix(m);
  S.I = inv_area.asDiagonal() * SpMat(FP0.transpose());
  return S;
}

/// Load vector int q b_k over all bubbleH1 basis functions (degree-8 rule).
inline Vec bubble_load(const Mesh& m, const BubbleLayout& L, const ScalarFn& q) {
  const QuadRule& r = quad_rule(QuadDomain::triangle, kLoadDegree);
  Vec out = Vec::Zero(L.size());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto idx = bubble_cell_indices(m, L, t);
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Point p = m.map(t, r.points[k]);
      const double w = r.weights[k] * m.area(t) * q(p.x, p.y);
      const auto b = eval_basis(SpaceKind::bubbleH1, m, t, r.points[k]);
      for (int j = 0; j < 9; ++j)
        if (idx[j] >= 0) out[idx[j]] += w * b.values[j];
    }
  }
  return out;
}

// Field-level application.

inline Field averaging_A(const SmootherAssembly& S, const Mesh& m, const Field& s) {
  if (s.kind != SpaceKind::dGP1) throw std::invalid_argument("averaging_A: expects a dGP1 field");
  const Vec nb = S.A * s.coeffs;
  Vec c(m.num_interior_vertices());
  for (int k = 0; k < c.size(); ++k) c[k] = nb[S.layout.vertex(m.interior_vertices()[k])];
  return {SpaceKind::contP1, c};
}

inline Field smooth_E(const SmootherAssembly& S, const Field& s) {
  if (s.kind != SpaceKind::dGP1) throw std::invalid_argument("smooth_E: expects a dGP1 field");
  return {SpaceKind::bubbleH1, S.E * s.coeffs};
}

/// Result holds the two bubbleH1 components stacked.
inline Field smooth_E_CR(const SmootherAssembly& S, const Field& v) {
  if (v.kind != SpaceKind::CR2) throw std::invalid_argument("smooth_E_CR: expects a CR2 field");
  return {SpaceKind::bubbleH1, S.E_CR * v.coeffs};
}

inline Field smooth_E_dG(const SmootherAssembly& S, const Field& q) {
  if (q.kind != SpaceKind::dGP1) throw std::invalid_argument("smooth_E_dG: expects a dGP1 field");
  return {SpaceKind::bubbleH1, S.E_dG * q.coeffs};
}

inline Field smooth_F(const SmootherAssembly& S, const Field& q) {
  if (q.kind != SpaceKind::dGP1) throw std::invalid_argument("smooth_F: expects a dGP1 field");
  return {SpaceKind::bubbleH1, S.F * q.coeffs};
}

/// I(q)|_T = |T|^{-1} int q F(chi_T).
inline Field interp_I(const SmootherAssembly& S, const Mesh& m, const ScalarFn& q) {
  return {SpaceKind::P0, S.I * bubble_load(m, S.layout, q)};
}

/// Same operator on a discrete dG-P1 input, using exact moments.
inline Field interp_I(const SmootherAssembly& S, const Field& q) {
  if (q.kind != SpaceKind::dGP1) throw std::invalid_argument("interp_I: expects a dGP1 field or a function");
  return {SpaceKind::P0, S.I * (S.mass_dg * q.coeffs)};
}

}  // namespace biotcr
