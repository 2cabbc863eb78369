#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace biotcr {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
inline double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point a) { return std::hypot(a.x, a.y); }

enum class StructuredKind { right_split, crisscross };

/// Provenance of meshes produced by build_structured; lost on refinement.
struct StructuredInfo {
  StructuredKind kind;
  int n;
};

/// An edge of the triangulation. `tri[0]` is always a valid triangle; `tri[1]`
/// is -1 for boundary faces. `local[k]` is the local index of the face inside
/// `tri[k]`, local face i being the one opposite local vertex i.
struct Face {
  std::array<int, 2> v{-1, -1};
  std::array<int, 2> tri{-1, -1};
  std::array<int, 2> local{-1, -1};
  bool boundary() const { return tri[1] < 0; }
};

/// Conforming triangulation of a polygonal domain with face topology and
/// skeleton metrics. Immutable after construction.
///
/// Interior face normals point from tri[0] to tri[1] (lower to higher triangle
/// index); boundary normals point outward. Jumps are taken as
/// trace(tri[0]) - trace(tri[1]), and as the one-sided trace on the boundary.
class Mesh {
 public:
  Mesh(std::vector<Point> vertices, std::vector<std::array<int, 3>> triangles,
       std::optional<StructuredInfo> info = std::nullopt)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)), info_(info) {
    build();
  }

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_faces() const { return static_cast<int>(faces_.size()); }
  int num_interior_faces() const { return static_cast<int>(interior_faces_.size()); }
  int num_interior_vertices() const { return static_cast<int>(interior_vertices_.size()); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<Face>& faces() const { return faces_; }
  const Point& vertex(int v) const { return vertices_[v]; }
  const std::array<int, 3>& triangle(int t) const { return triangles_[t]; }
  const Face& face(int f) const { return faces_[f]; }
  const std::array<int, 3>& triangle_faces(int t) const { return tri_faces_[t]; }
  const std::vector<int>& vertex_triangles(int v) const { return vertex_tris_[v]; }

  const std::vector<int>& interior_faces() const { return interior_faces_; }
  const std::vector<int>& interior_vertices() const { return interior_vertices_; }
  /// Position of a face among the interior faces, -1 on the boundary.
  int interior_face_index(int f) const { return interior_face_index_[f]; }
  int interior_vertex_index(int v) const { return interior_vertex_index_[v]; }
  bool vertex_on_boundary(int v) const { return vertex_boundary_[v]; }

  double area(int t) const { return areas_[t]; }
  double diameter(int t) const { return diameters_[t]; }
  double face_length(int f) const { return lengths_[f]; }
  /// Meshsize on the skeleton: h_F = diam(F).
  double face_h(int f) const { return lengths_[f]; }
  const Point& face_normal(int f) const { return normals_[f]; }
  Point face_midpoint(int f) const {
    return 0.5 * (vertices_[faces_[f].v[0]] + vertices_[faces_[f].v[1]]);
  }
  Point centroid(int t) const {
    const auto& tr = triangles_[t];
    return (1.0 / 3.0) * (vertices_[tr[0]] + vertices_[tr[1]] + vertices_[tr[2]]);
  }
  double total_area() const {
    double s = 0.0;
    for (double a : areas_) s += a;
    return s;
  }
  double max_h() const { return *std::max_element(diameters_.begin(), diameters_.end()); }

  /// Local index (0..2) of global vertex v inside triangle t, -1 if absent.
  int local_vertex(int t, int v) const {
    const auto& tr = triangles_[t];
    for (int i = 0; i < 3; ++i)
      if (tr[i] == v) return i;
    return -1;
  }

  /// Gradients of the barycentric coordinates of triangle t.
  std::array<Point, 3> barycentric_gradients(int t) const {
    const auto& tr = triangles_[t];
    const double two_area = 2.0 * areas_[t];
    std::array<Point, 3> g;
    for (int i = 0; i < 3; ++i) {
      const Point& p1 = vertices_[tr[(i + 1) % 3]];
      const Point& p2 = vertices_[tr[(i + 2) % 3]];
      g[i] = {(p1.y - p2.y) / two_area, (p2.x - p1.x) / two_area};
    }
    return g;
  }

  Point map(int t, const std::array<double, 3>& bary) const {
    const auto& tr = triangles_[t];
    return bary[0] * vertices_[tr[0]] + bary[1] * vertices_[tr[1]] + bary[2] * vertices_[tr[2]];
  }

  /// Barycentric coordinates in triangle `tri[side]` of face f of the point
  /// (1-s) v[0] + s v[1].
  std::array<double, 3> face_point_bary(int f, int side, double s) const {
    const Face& fc = faces_[f];
    const int t = fc.tri[side];
    std::array<double, 3> b{0.0, 0.0, 0.0};
    b[local_vertex(t, fc.v[0])] = 1.0 - s;
    b[local_vertex(t, fc.v[1])] = s;
    return b;
  }

  const std::optional<StructuredInfo>& structured_info() const { return info_; }

 private:
  void build() {
    const int nv = num_vertices();
    const int nt = num_triangles();
    if (nv < 3 || nt < 1) throw std::invalid_argument("mesh: need at least one triangle");
    areas_.resize(nt);
    diameters_.resize(nt);
    tri_faces_.assign(nt, {-1, -1, -1});
    vertex_tris_.assign(nv, {});

    std::map<std::pair<int, int>, int> edge_index;
    for (int t = 0; t < nt; ++t) {
      const auto& tr = triangles_[t];
      for (int i = 0; i < 3; ++i) {
        if (tr[i] < 0 || tr[i] >= nv)
          throw std::invalid_argument("mesh: triangle " + std::to_string(t) + " has invalid vertex index");
      }
      if (tr[0] == tr[1] || tr[1] == tr[2] || tr[0] == tr[2])
        throw std::invalid_argument("mesh: triangle " + std::to_string(t) + " repeats a vertex");
      const Point& a = vertices_[tr[0]];
      const Point& b = vertices_[tr[1]];
      const Point& c = vertices_[tr[2]];
      areas_[t] = 0.5 * cross(b - a, c - a);
      if (!(areas_[t] > 0.0))
        throw std::invalid_argument("mesh: triangle " + std::to_string(t) +
                                    " is degenerate or clockwise");
      diameters_[t] = std::max({norm(b - a), norm(c - b), norm(a - c)});
      for (int i = 0; i < 3; ++i) vertex_tris_[tr[i]].push_back(t);

      for (int i = 0; i < 3; ++i) {
        const int a_v = tr[(i + 1) % 3];
        const int b_v = tr[(i + 2) % 3];
        const auto key = std::minmax(a_v, b_v);
        auto it = edge_index.find(key);
        if (it == edge_index.end()) {
          Face fc;
          fc.v = {a_v, b_v};
          fc.tri = {t, -1};
          fc.local = {i, -1};
          edge_index.emplace(key, static_cast<int>(faces_.size()));
          tri_faces_[t][i] = static_cast<int>(faces_.size());
          faces_.push_back(fc);
        } else {
          Face& fc = faces_[it->second];
          if (fc.tri[1] >= 0)
            throw std::invalid_argument("mesh: edge shared by more than two triangles");
          // Conformity with consistent orientation: the neighbour traverses the
          // edge in the opposite direction.
          if (!(fc.v[0] == b_v && fc.v[1] == a_v))
            throw std::invalid_argument("mesh: inconsistent orientation across an edge");
          fc.tri[1] = t;
          fc.local[1] = i;
          tri_faces_[t][i] = it->second;
        }
      }
    }

    const int nf = num_faces();
    lengths_.resize(nf);
    normals_.resize(nf);
    vertex_boundary_.assign(nv, false);
    interior_face_index_.assign(nf, -1);
    for (int f = 0; f < nf; ++f) {
      const Face& fc = faces_[f];
      const Point e = vertices_[fc.v[1]] - vertices_[fc.v[0]];
      lengths_[f] = norm(e);
      // fc.v is ordered counterclockwise with respect to tri[0], so the right
      // normal of the edge is the outward normal of tri[0].
      normals_[f] = {e.y / lengths_[f], -e.x / lengths_[f]};
      if (fc.boundary()) {
        vertex_boundary_[fc.v[0]] = true;
        vertex_boundary_[fc.v[1]] = true;
      } else {
        interior_face_index_[f] = static_cast<int>(interior_faces_.size());
        interior_faces_.push_back(f);
      }
    }

    // No hanging nodes: a vertex may not lie in the relative interior of a
    // boundary edge.
    for (int f = 0; f < nf; ++f) {
      if (!faces_[f].boundary()) continue;
      const Point a = vertices_[faces_[f].v[0]];
      const Point b = vertices_[faces_[f].v[1]];
      const Point e = b - a;
      const double len2 = dot(e, e);
      for (int v = 0; v < nv; ++v) {
        if (v == faces_[f].v[0] || v == faces_[f].v[1] || vertex_tris_[v].empty()) continue;
        const Point d = vertices_[v] - a;
        const double s = dot(d, e) / len2;
        if (s <= 1e-12 || s >= 1.0 - 1e-12) continue;
        if (std::abs(cross(e, d)) <= 1e-12 * len2)
          throw std::invalid_argument("mesh: hanging vertex " + std::to_string(v) + " on an edge");
      }
    }

    interior_vertex_index_.assign(nv, -1);
    for (int v = 0; v < nv; ++v) {
      if (vertex_tris_[v].empty()) throw std::invalid_argument("mesh: unused vertex " + std::to_string(v));
      if (!vertex_boundary_[v]) {
        interior_vertex_index_[v] = static_cast<int>(interior_vertices_.size());
        interior_vertices_.push_back(v);
      }
    }
  }

  std::vector<Point> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::optional<StructuredInfo> info_;

  std::vector<Face> faces_;
  std::vector<std::array<int, 3>> tri_faces_;
  std::vector<std::vector<int>> vertex_tris_;
  std::vector<int> interior_faces_;
  std::vector<int> interior_face_index_;
  std::vector<int> interior_vertices_;
  std::vector<int> interior_vertex_index_;
  std::vector<bool> vertex_boundary_;
  std::vector<double> areas_;
  std::vector<double> diameters_;
  std::vector<double> lengths_;
  std::vector<Point> normals_;
};

/// Unit-square meshes. right_split cuts each of the n x n cells along the
/// diagonal through its lower-left corner; crisscross inserts the cell center
/// and orders the four triangles of a cell bottom, right, top, left.
inline Mesh build_structured(StructuredKind kind, int n) {
  if (n < 1) throw std::invalid_argument("build_structured: n must be >= 1");
  std::vector<Point> pts;
  pts.reserve((n + 1) * (n + 1) + n * n);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) pts.push_back({double(i) / n, double(j) / n});
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };

  std::vector<std::array<int, 3>> tris;
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int v00 = vid(i, j), v10 = vid(i + 1, j), v11 = vid(i + 1, j + 1), v01 = vid(i, j + 1);
      if (kind == StructuredKind::right_split) {
        tris.push_back({v00, v10, v11});
        tris.push_back({v00, v11, v01});
      } else {
        const int c = static_cast<int>(pts.size());
        pts.push_back({(i + 0.5) / n, (j + 0.5) / n});
        tris.push_back({v00, v10, c});
        tris.push_back({v10, v11, c});
        tris.push_back({v11, v01, c});
        tris.push_back({v01, v00, c});
      }
    }
  }
  return Mesh(std::move(pts), std::move(tris), StructuredInfo{kind, n});
}

inline StructuredKind parse_structured_kind(const std::string& s) {
  if (s == "right-split" || s == "right_split") return StructuredKind::right_split;
  if (s == "crisscross") return StructuredKind::crisscross;
  throw std::invalid_argument("unknown mesh kind '" + s + "' (expected right-split or crisscross)");
}

inline std::string to_string(StructuredKind k) {
  return k == StructuredKind::right_split ? "right-split" : "crisscross";
}

/// Red refinement: every triangle is split into four similar children by
/// joining its edge midpoints. Midpoint of face f becomes vertex V + f.
inline Mesh refine_uniform(const Mesh& m) {
  std::vector<Point> pts = m.vertices();
  const int nv = m.num_vertices();
  for (int f = 0; f < m.num_faces(); ++f) pts.push_back(m.face_midpoint(f));
  std::vector<std::array<int, 3>> tris;
  tris.reserve(4 * m.num_triangles());
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tr = m.triangle(t);
    const auto& tf = m.triangle_faces(t);
    // tf[i] is opposite vertex i.
    const int m0 = nv + tf[0], m1 = nv + tf[1], m2 = nv + tf[2];
    tris.push_back({tr[0], m2, m1});
    tris.push_back({m2, tr[1], m0});
    tris.push_back({m1, m0, tr[2]});
    tris.push_back({m0, m1, m2});
  }
  return Mesh(std::move(pts), std::move(tris));
}

/// max_T diam(T) / diam(B_T), with diam(B_T) = 2 |T| / semiperimeter(T).
inline double shape_parameter(const Mesh& m) {
  double sigma = 0.0;
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tr = m.triangle(t);
    const Point a = m.vertex(tr[0]), b = m.vertex(tr[1]), c = m.vertex(tr[2]);
    const double area = 0.5 * cross(b - a, c - a);
    if (!(area > 0.0)) throw std::invalid_argument("shape_parameter: degenerate triangle");
    const double semi = 0.5 * (norm(b - a) + norm(c - b) + norm(a - c));
    sigma = std::max(sigma, m.diameter(t) / (2.0 * area / semi));
  }
  return sigma;
}

// ASCII mesh format: "verts <V> tris <T>", V lines "x y", T lines "i j k".

inline void write_mesh(const Mesh& m, std::ostream& os) {
  char buf[128];
  os << "verts " << m.num_vertices() << " tris " << m.num_triangles() << "\n";
  for (const Point& p : m.vertices()) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", p.x, p.y);
    os << buf;
  }
  for (const auto& t : m.triangles()) os << t[0] << " " << t[1] << " " << t[2] << "\n";
}

inline void write_mesh(const Mesh& m, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_mesh(m, os);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline Mesh read_mesh(std::istream& is) {
  std::string kw1, kw2;
  long nv = -1, nt = -1;
  if (!(is >> kw1 >> nv >> kw2 >> nt) || kw1 != "verts" || kw2 != "tris" || nv < 3 || nt < 1)
    throw std::invalid_argument("mesh file: bad header (expected 'verts <V> tris <T>')");
  std::vector<Point> pts(nv);
  for (long i = 0; i < nv; ++i)
    if (!(is >> pts[i].x >> pts[i].y))
      throw std::invalid_argument("mesh file: truncated vertex list at line " + std::to_string(i + 2));
  std::vector<std::array<int, 3>> tris(nt);
  for (long i = 0; i < nt; ++i)
    if (!(is >> tris[i][0] >> tris[i][1] >> tris[i][2]))
      throw std::invalid_argument("mesh file: truncated triangle list");
  return Mesh(std::move(pts), std::move(tris));
}

inline Mesh read_mesh(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open mesh file '" + path + "'");
  return read_mesh(is);
}

}  // namespace biotcr
