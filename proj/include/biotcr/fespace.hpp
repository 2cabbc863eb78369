#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biotcr/mesh.hpp"
#include "biotcr/quadrature.hpp"

namespace biotcr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

/// Scalar/vector functions of (x, y) used for loads and exact fields.
using ScalarFn = std::function<double(double, double)>;
using VectorFn = std::function<Point(double, double)>;

/// bubbleH1 holds continuous P1 + face bubbles + (P1 x element bubble).
enum class SpaceKind { CR, CR2, dGP1, P0, P0mean0, contP1, bubbleH1 };

inline std::string to_string(SpaceKind k) {
  switch (k) {
    case SpaceKind::CR: return "CR";
    case SpaceKind::CR2: return "CR2";
    case SpaceKind::dGP1: return "dGP1";
    case SpaceKind::P0: return "P0";
    case SpaceKind::P0mean0: return "P0mean0";
    case SpaceKind::contP1: return "contP1";
    case SpaceKind::bubbleH1: return "bubbleH1";
  }
  return "?";
}

/// A coefficient vector tagged with the space it lives in.
struct Field {
  SpaceKind kind;
  Vec coeffs;
};

enum class Attachment { vertex, face, triangle };

/// Degrees of freedom of a (possibly vector-valued) space. Component c of
/// scalar dof d has global index c * scalar_dofs + d. Cell dofs of
/// eliminated (Dirichlet) entities are -1.
struct DofMap {
  SpaceKind kind;
  int components = 1;
  int scalar_dofs = 0;
  int dofs_per_cell = 0;
  std::vector<int> cell_dofs;  // num_triangles * dofs_per_cell
  std::vector<Attachment> attachment;
  std::vector<int> entity;
  std::vector<bool> dirichlet;  // per entity of the attachment type, eliminated or not

  int ndofs() const { return components * scalar_dofs; }
  int dof(int t, int i) const { return cell_dofs[t * dofs_per_cell + i]; }
};

inline DofMap make_dofmap(const Mesh& m, SpaceKind kind) {
  DofMap d;
  d.kind = kind;
  const int nt = m.num_triangles();
  switch (kind) {
    case SpaceKind::CR:
    case SpaceKind::CR2: {
      d.components = kind == SpaceKind::CR2 ? 2 : 1;
      d.scalar_dofs = m.num_interior_faces();
      d.dofs_per_cell = 3;
      d.cell_dofs.resize(3 * nt);
      for (int t = 0; t < nt; ++t)
        for (int i = 0; i < 3; ++i) d.cell_dofs[3 * t + i] = m.interior_face_index(m.triangle_faces(t)[i]);
      for (int f : m.interior_faces()) {
        d.attachment.push_back(Attachment::face);
        d.entity.push_back(f);
      }
      d.dirichlet.resize(m.num_faces());
      for (int f = 0; f < m.num_faces(); ++f) d.dirichlet[f] = m.face(f).boundary();
      break;
    }
    case SpaceKind::dGP1: {
      d.scalar_dofs = 3 * nt;
      d.dofs_per_cell = 3;
      d.cell_dofs.resize(3 * nt);
      for (int k = 0; k < 3 * nt; ++k) {
        d.cell_dofs[k] = k;
        d.attachment.push_back(Attachment::triangle);
        d.entity.push_back(k / 3);
      }
      d.dirichlet.assign(nt, false);
      break;
    }
    case SpaceKind::P0:
    case SpaceKind::P0mean0: {
      d.scalar_dofs = nt;
      d.dofs_per_cell = 1;
      for (int t = 0; t < nt; ++t) {
        d.cell_dofs.push_back(t);
        d.attachment.push_back(Attachment::triangle);
        d.entity.push_back(t);
      }
      d.dirichlet.assign(nt, false);
      break;
    }
    case SpaceKind::contP1: {
      d.scalar_dofs = m.num_interior_vertices();
      d.dofs_per_cell = 3;
      d.cell_dofs.resize(3 * nt);
      for (int t = 0; t < nt; ++t)
        for (int i = 0; i < 3; ++i) d.cell_dofs[3 * t + i] = m.interior_vertex_index(m.triangle(t)[i]);
      for (int v : m.interior_vertices()) {
        d.attachment.push_back(Attachment::vertex);
        d.entity.push_back(v);
      }
      d.dirichlet.resize(m.num_vertices());
      for (int v = 0; v < m.num_vertices(); ++v) d.dirichlet[v] = m.vertex_on_boundary(v);
      break;
    }
    case SpaceKind::bubbleH1:
      throw std::invalid_argument("make_dofmap: bubbleH1 uses BubbleLayout");
  }
  return d;
}

/// Coefficient layout of bubbleH1 functions:
///   [vertex hats (all V) | face bubbles (all F) | 3 per triangle: lambda_i S_T].
/// Entries on boundary vertices and boundary faces stay zero.
struct BubbleLayout {
  int nv = 0, nf = 0, nt = 0;
  explicit BubbleLayout(const Mesh& m) : nv(m.num_vertices()), nf(m.num_faces()), nt(m.num_triangles()) {}
  int size() const { return nv + nf + 3 * nt; }
  int vertex(int v) const { return v; }
  int face(int f) const { return nv + f; }
  int tri(int t, int i) const { return nv + nf + 3 * t + i; }
};

inline constexpr double kFaceBubbleScale = 6.0;       // (2d-1)!/(d-1)! for d = 2
inline constexpr double kTriangleBubbleScale = 60.0;  // (2d+1)!/d!  for d = 2

struct BasisValues {
  std::vector<double> values;
  std::vector<Point> grads;
};

/// Local basis on triangle t at barycentric point `bary`.
///   CR:       1 - 2 lambda_i (unit at the midpoint of the face opposite vertex i)
///   contP1, dGP1: lambda_i
///   P0, P0mean0: indicator
///   bubbleH1: 3 hats, 3 face bubbles (by local face), lambda_i S_T
inline BasisValues eval_basis(SpaceKind kind, const Mesh& m, int t, const std::array<double, 3>& bary) {
  const double s = bary[0] + bary[1] + bary[2];
  if (std::abs(s - 1.0) > 1e-12 || bary[0] < -1e-12 || bary[1] < -1e-12 || bary[2] < -1e-12)
    throw std::invalid_argument("eval_basis: point outside the reference triangle");
  const auto g = m.barycentric_gradients(t);
  BasisValues out;
  switch (kind) {
    case SpaceKind::CR:
      for (int i = 0; i < 3; ++i) {
        out.values.push_back(1.0 - 2.0 * bary[i]);
        out.grads.push_back(-2.0 * g[i]);
      }
      break;
    case SpaceKind::contP1:
    case SpaceKind::dGP1:
      for (int i = 0; i < 3; ++i) {
        out.values.push_back(bary[i]);
        out.grads.push_back(g[i]);
      }
      break;
    case SpaceKind::P0:
    case SpaceKind::P0mean0:
      out.values.push_back(1.0);
      out.grads.push_back({0.0, 0.0});
      break;
    case SpaceKind::bubbleH1: {
      for (int i = 0; i < 3; ++i) {
        out.values.push_back(bary[i]);
        out.grads.push_back(g[i]);
      }
      for (int j = 0; j < 3; ++j) {
        const int a = (j + 1) % 3, b = (j + 2) % 3;
        const double c = kFaceBubbleScale / m.face_length(m.triangle_faces(t)[j]);
        out.values.push_back(c * bary[a] * bary[b]);
        out.grads.push_back(c * (bary[b] * g[a] + bary[a] * g[b]));
      }
      const double ct = kTriangleBubbleScale / m.area(t);
      const double b3 = bary[0] * bary[1] * bary[2];
      const Point gb3 = bary[1] * bary[2] * g[0] + bary[0] * bary[2] * g[1] + bary[0] * bary[1] * g[2];
      for (int i = 0; i < 3; ++i) {
        out.values.push_back(ct * bary[i] * b3);
        out.grads.push_back(ct * (b3 * g[i] + bary[i] * gb3));
      }
      break;
    }
    case SpaceKind::CR2:
      throw std::invalid_argument("eval_basis: CR2 is vector-valued, evaluate per component with CR");
  }
  return out;
}

/// Global bubbleH1 indices of the 9 local bubbleH1 functions on t, -1 where
/// the function does not belong to the space (boundary vertex / face).
inline std::array<int, 9> bubble_cell_indices(const Mesh& m, const BubbleLayout& L, int t) {
  std::array<int, 9> idx{};
  const auto& tr = m.triangle(t);
  const auto& tf = m.triangle_faces(t);
  for (int i = 0; i < 3; ++i) {
    idx[i] = m.vertex_on_boundary(tr[i]) ? -1 : L.vertex(tr[i]);
    idx[3 + i] = m.face(tf[i]).boundary() ? -1 : L.face(tf[i]);
    idx[6 + i] = L.tri(t, i);
  }
  return idx;
}

/// Indices of the bubbleH1 layout that carry a basis function (interior
/// vertices, interior faces, all triangle slots).
inline std::vector<int> bubble_active_indices(const Mesh& m, const BubbleLayout& L) {
  std::vector<int> idx;
  for (int v : m.interior_vertices()) idx.push_back(L.vertex(v));
  for (int f : m.interior_faces()) idx.push_back(L.face(f));
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int i = 0; i < 3; ++i) idx.push_back(L.tri(t, i));
  return idx;
}

/// Value and gradient of a bubbleH1 function on t.
struct PointValue {
  double value = 0.0;
  Point grad{};
};

inline PointValue eval_bubble_field(const Mesh& m, const BubbleLayout& L, const Vec& c, int t,
                                    const std::array<double, 3>& bary) {
  const auto b = eval_basis(SpaceKind::bubbleH1, m, t, bary);
  const auto idx = bubble_cell_indices(m, L, t);
  PointValue pv;
  for (int k = 0; k < 9; ++k) {
    if (idx[k] < 0) continue;
    pv.value += c[idx[k]] * b.values[k];
    pv.grad = pv.grad + c[idx[k]] * b.grads[k];
  }
  return pv;
}

/// Face bubble S_F = (6/|F|) lambda_a lambda_b on the two neighbours of F.
inline Field face_bubble(const Mesh& m, int f) {
  if (f < 0 || f >= m.num_faces()) throw std::out_of_range("face_bubble: bad face index");
  if (m.face(f).boundary()) throw std::invalid_argument("face_bubble: boundary face has no bubble");
  BubbleLayout L(m);
  Field out{SpaceKind::bubbleH1, Vec::Zero(L.size())};
  out.coeffs[L.face(f)] = 1.0;
  return out;
}

/// Element bubble S_T = (60/|T|) lambda_1 lambda_2 lambda_3 = sum_i lambda_i S_T.
inline Field triangle_bubble(const Mesh& m, int t) {
  if (t < 0 || t >= m.num_triangles()) throw std::out_of_range("triangle_bubble: bad triangle index");
  BubbleLayout L(m);
  Field out{SpaceKind::bubbleH1, Vec::Zero(L.size())};
  for (int i = 0; i < 3; ++i) out.coeffs[L.tri(t, i)] = 1.0;
  return out;
}

// Pointwise evaluation of discrete fields.

/// Value of a scalar CR field (interior-face coefficients) on t.
inline double eval_cr(const Mesh& m, const Vec& c, int offset, int t, const std::array<double, 3>& bary) {
  double v = 0.0;
  for (int i = 0; i < 3; ++i) {
    const int d = m.interior_face_index(m.triangle_faces(t)[i]);
    if (d >= 0) v += c[offset + d] * (1.0 - 2.0 * bary[i]);
  }
  return v;
}

inline Point grad_cr(const Mesh& m, const Vec& c, int offset, int t) {
  const auto g = m.barycentric_gradients(t);
  Point r{};
  for (int i = 0; i < 3; ++i) {
    const int d = m.interior_face_index(m.triangle_faces(t)[i]);
    if (d >= 0) r = r + (-2.0 * c[offset + d]) * g[i];
  }
  return r;
}

inline double eval_dg(const Vec& c, int t, const std::array<double, 3>& bary) {
  return c[3 * t] * bary[0] + c[3 * t + 1] * bary[1] + c[3 * t + 2] * bary[2];
}

inline Point grad_dg(const Mesh& m, const Vec& c, int t) {
  const auto g = m.barycentric_gradients(t);
  return c[3 * t] * g[0] + c[3 * t + 1] * g[1] + c[3 * t + 2] * g[2];
}

// Projections onto piecewise constants.

inline constexpr int kLoadDegree = 8;

/// Per-triangle averages of q (degree-8 quadrature).
inline Field project_P0(const Mesh& m, const ScalarFn& q) {
  const QuadRule& r = quad_rule(QuadDomain::triangle, kLoadDegree);
  Vec out(m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) {
    double s = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const Point p = m.map(t, r.points[k]);
      s += r.weights[k] * q(p.x, p.y);
    }
    out[t] = s;
  }
  return {SpaceKind::P0, out};
}

/// Exact P0 projection of a discrete field (CR scalar, dGP1, contP1, P0).
inline Field project_P0(const Mesh& m, const Field& f) {
  const int nt = m.num_triangles();
  Vec out(nt);
  switch (f.kind) {
    case SpaceKind::dGP1:
      for (int t = 0; t < nt; ++t) out[t] = (f.coeffs[3 * t] + f.coeffs[3 * t + 1] + f.coeffs[3 * t + 2]) / 3.0;
      break;
    case SpaceKind::CR:
      // CR basis functions average to 1/3 on each triangle.
      for (int t = 0; t < nt; ++t) out[t] = eval_cr(m, f.coeffs, 0, t, {1.0 / 3, 1.0 / 3, 1.0 / 3});
      break;
    case SpaceKind::contP1:
      for (int t = 0; t < nt; ++t) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i) {
          const int d = m.interior_vertex_index(m.triangle(t)[i]);
          if (d >= 0) s += f.coeffs[d];
        }
        out[t] = s / 3.0;
      }
      break;
    case SpaceKind::P0:
    case SpaceKind::P0mean0:
      out = f.coeffs;
      break;
    default:
      throw std::invalid_argument("project_P0: unsupported field kind " + to_string(f.kind));
  }
  return {SpaceKind::P0, out};
}

inline double weighted_mean(const Mesh& m, const Vec& p0) {
  double s = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) s += m.area(t) * p0[t];
  return s / m.total_area();
}

/// Subtract the area-weighted mean.
inline Field remove_mean(const Mesh& m, Field f) {
  const double mean = weighted_mean(m, f.coeffs);
  f.coeffs.array() -= mean;
  f.kind = SpaceKind::P0mean0;
  return f;
}

inline Field project_P0mean0(const Mesh& m, const ScalarFn& q) { return remove_mean(m, project_P0(m, q)); }
inline Field project_P0mean0(const Mesh& m, const Field& f) { return remove_mean(m, project_P0(m, f)); }

/// Vertex-value representation of a continuous P1 function sampled from q
/// (boundary values dropped).
inline Field interpolate_contP1(const Mesh& m, const ScalarFn& q) {
  Vec c(m.num_interior_vertices());
  for (int k = 0; k < m.num_interior_vertices(); ++k) {
    const Point p = m.vertex(m.interior_vertices()[k]);
    c[k] = q(p.x, p.y);
  }
  return {SpaceKind::contP1, c};
}

/// Face-moment (midpoint-rule exact for P1) interpolant into CR with zero
/// boundary moments; uses degree-8 edge quadrature for the face means.
inline Field interpolate_cr(const Mesh& m, const ScalarFn& q) {
  const QuadRule& r = quad_rule(QuadDomain::edge, kLoadDegree);
  Vec c(m.num_interior_faces());
  for (int k = 0; k < m.num_interior_faces(); ++k) {
    const int f = m.interior_faces()[k];
    const Point a = m.vertex(m.face(f).v[0]), b = m.vertex(m.face(f).v[1]);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const Point p = r.points[i][0] * a + r.points[i][1] * b;
      s += r.weights[i] * q(p.x, p.y);
    }
    c[k] = s;
  }
  return {SpaceKind::CR, c};
}

/// dG-P1 representation of a continuous P1 field.
inline Vec contP1_to_dg(const Mesh& m, const Vec& c) {
  Vec out = Vec::Zero(3 * m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int i = 0; i < 3; ++i) {
      const int d = m.interior_vertex_index(m.triangle(t)[i]);
      if (d >= 0) out[3 * t + i] = c[d];
    }
  return out;
}

/// Matrix mapping scalar CR coefficients to their dG-P1 vertex values:
/// value at vertex i = sum_j c_j - 2 c_i.
inline SpMat cr_to_dg_matrix(const Mesh& m) {
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const int d = m.interior_face_index(m.triangle_faces(t)[j]);
        if (d >= 0) trip.emplace_back(3 * t + i, d, i == j ? -1.0 : 1.0);
      }
  SpMat M(3 * m.num_triangles(), m.num_interior_faces());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

/// dG-P1 representation of a contP1 function (interior-vertex coefficients).
inline SpMat contP1_to_dg_matrix(const Mesh& m) {
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int i = 0; i < 3; ++i) {
      const int d = m.interior_vertex_index(m.triangle(t)[i]);
      if (d >= 0) trip.emplace_back(3 * t + i, d, 1.0);
    }
  SpMat M(3 * m.num_triangles(), m.num_interior_vertices());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

/// P0 indicator basis -> dG-P1 (constant one on the triangle).
inline SpMat p0_to_dg_matrix(const Mesh& m) {
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int i = 0; i < 3; ++i) trip.emplace_back(3 * t + i, t, 1.0);
  SpMat M(3 * m.num_triangles(), m.num_triangles());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

/// L2 projection dG-P1 -> P0 (triangle means).
inline SpMat dg_to_p0_matrix(const Mesh& m) {
  Triplets trip;
  for (int t = 0; t < m.num_triangles(); ++t)
    for (int i = 0; i < 3; ++i) trip.emplace_back(t, 3 * t + i, 1.0 / 3.0);
  SpMat M(m.num_triangles(), 3 * m.num_triangles());
  M.setFromTriplets(trip.begin(), trip.end());
  return M;
}

}  // namespace biotcr
