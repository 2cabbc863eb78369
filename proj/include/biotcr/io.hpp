#pragma once

// CSV tables (full precision) and legacy ASCII VTK export.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "biotcr/solver.hpp"

namespace biotcr {

/// 17 significant digits in scientific notation; round-trips every double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

inline double parse_cell_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  // from_chars, unlike stod, accepts subnormals
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw std::invalid_argument("csv: not a number: '" + s + "'");
  return v;
}

/// Header row plus string cells; numbers are stored already formatted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  struct Cell {
    std::string text;
    Cell(double v) : text(format_double(v)) {}
    Cell(int v) : text(std::to_string(v)) {}
    Cell(long v) : text(std::to_string(v)) {}
    Cell(std::string v) : text(std::move(v)) {}
    Cell(const char* v) : text(v) {}
  };
  void add_row(const std::vector<Cell>& cells) {
    if (cells.size() != header.size())
      throw std::logic_error("table row has " + std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(header.size()));
    std::vector<std::string> r;
    for (const auto& c : cells) r.push_back(c.text);
    rows.push_back(std::move(r));
  }

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw std::out_of_range("table has no column '" + name + "'");
  }
  double num(std::size_t r, const std::string& name) const { return parse_cell_double(rows.at(r).at(column(name))); }
  const std::string& str(std::size_t r, const std::string& name) const { return rows.at(r).at(column(name)); }
};

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  return os;
}

}  // namespace detail

inline void write_csv(const Table& t, std::ostream& os) {
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << detail::csv_escape(t.header[i]);
  os << "\n";
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << detail::csv_escape(r[i]);
    os << "\n";
  }
}

inline void write_csv(const Table& t, const std::string& path) {
  std::ofstream os = detail::open_out(path);
  write_csv(t, os);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

inline Table read_csv(std::istream& is) {
  Table t;
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("csv: missing header");
  t.header = detail::csv_split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = detail::csv_split(line);
    if (cells.size() != t.header.size())
      throw std::invalid_argument("csv: row " + std::to_string(t.rows.size() + 1) + " has " +
                                  std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

inline Table read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_csv(is);
}

// --------------------------------------------------------------------- VTK

/// Fields for the legacy writer. Cells are the mesh triangles; points are
/// split per cell (3 per triangle) so dG-P1 data stays discontinuous.
struct VtkData {
  std::vector<std::pair<std::string, Vec>> cell_scalars;                    // one value per triangle
  std::vector<std::pair<std::string, std::pair<Vec, Vec>>> cell_vectors;   // x and y per triangle
  std::vector<std::pair<std::string, Vec>> corner_scalars;                  // 3 per triangle, dG-P1 order
};

inline void write_vtk(const Mesh& m, const VtkData& d, std::ostream& os, const std::string& title = "biotcr") {
  const int T = m.num_triangles();
  auto check = [&](const Vec& v, long want, const std::string& name) {
    if (v.size() != want) throw std::invalid_argument("vtk: field '" + name + "' has wrong size");
  };
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << 3 * T << " double\n";
  for (int t = 0; t < T; ++t)
    for (int v : m.triangle(t)) os << format_double(m.vertex(v).x) << " " << format_double(m.vertex(v).y) << " 0\n";
  os << "CELLS " << T << " " << 4 * T << "\n";
  for (int t = 0; t < T; ++t) os << "3 " << 3 * t << " " << 3 * t + 1 << " " << 3 * t + 2 << "\n";
  os << "CELL_TYPES " << T << "\n";
  for (int t = 0; t < T; ++t) os << "5\n";
  if (!d.cell_scalars.empty() || !d.cell_vectors.empty()) {
    os << "CELL_DATA " << T << "\n";
    for (const auto& [name, v] : d.cell_scalars) {
      check(v, T, name);
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (int t = 0; t < T; ++t) os << format_double(v[t]) << "\n";
    }
    for (const auto& [name, v] : d.cell_vectors) {
      check(v.first, T, name);
      check(v.second, T, name);
      os << "VECTORS " << name << " double\n";
      for (int t = 0; t < T; ++t) os << format_double(v.first[t]) << " " << format_double(v.second[t]) << " 0\n";
    }
  }
  if (!d.corner_scalars.empty()) {
    os << "POINT_DATA " << 3 * T << "\n";
    for (const auto& [name, v] : d.corner_scalars) {
      check(v, 3L * T, name);
      os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
      for (int i = 0; i < 3 * T; ++i) os << format_double(v[i]) << "\n";
    }
  }
}

inline void write_vtk(const Mesh& m, const VtkData& d, const std::string& path) {
  std::ofstream os = detail::open_out(path);
  write_vtk(m, d, os);
  if (!os) throw std::runtime_error("write failed for '" + path + "'");
}

/// U at the centroids (the mean of the three face values), P_T, M,
/// Pi_0 P_F per cell and P_F per corner.
inline VtkData solution_vtk(const Mesh& m, const BiotSolution& s) {
  const int T = m.num_triangles(), n = m.num_interior_faces();
  Vec ux(T), uy(T), pf0(T);
  const std::array<double, 3> c{1.0 / 3, 1.0 / 3, 1.0 / 3};
  for (int t = 0; t < T; ++t) {
    ux[t] = eval_cr(m, s.U.coeffs, 0, t, c);
    uy[t] = eval_cr(m, s.U.coeffs, n, t, c);
    pf0[t] = eval_dg(s.P_F.coeffs, t, c);
  }
  VtkData d;
  d.cell_scalars = {{"P_T", s.P_T.coeffs}, {"M", s.M.coeffs}, {"P_F_mean", pf0}};
  d.cell_vectors = {{"U", {ux, uy}}};
  d.corner_scalars = {{"P_F", s.P_F.coeffs}};
  return d;
}

}  // namespace biotcr
