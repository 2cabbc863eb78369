#pragma once

// Experiment drivers behind the command line tool: single solve,
// convergence study, parameter sweep, inf-sup tables and checkerboard modes.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <thread>

#include "biotcr/analysis.hpp"
#include "biotcr/config.hpp"
#include "biotcr/io.hpp"
#include "biotcr/manufactured.hpp"

namespace biotcr {

inline int level_to_n(int level) { return 1 << level; }

inline Mesh experiment_mesh(const ExperimentConfig& c, int level) {
  if (!c.mesh_file.empty()) {
    Mesh m = read_mesh(c.mesh_file);
    for (int l = 0; l < level; ++l) m = refine_uniform(m);
    return m;
  }
  return build_structured(c.mesh_kind, level_to_n(level));
}

inline std::string output_path(const ExperimentConfig& c, const std::string& name) {
  return (std::filesystem::path(c.out_dir) / (c.prefix + name)).string();
}

/// Solve the manufactured problem; a residual above `tol` is an error.
inline BiotSolution solve_case(const Discretization& d, const ManufacturedCase& mc, const MaterialParams& p,
                               RhsKind kind = RhsKind::smoothed, double tol = kResidualTolerance) {
  p.validate();
  BiotSolution s = solve_biot(make_system(d, p, mc.force(p), mc.source(p), kind), d.ops, p);
  if (!(s.residual <= tol))
    throw std::runtime_error("residual " + format_double(s.residual) + " exceeds the configured tolerance " +
                             format_double(tol));
  return s;
}

inline double rate(double coarse, double fine) {
  if (!(coarse > 0.0) || !(fine > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return std::log2(coarse / fine);
}

/// Weighted (not squared) best-approximation terms in ERR units.
struct WeightedBest {
  double u, pT, m, pF, div;
};
inline WeightedBest weighted_best(const BestApproximation& b, const MaterialParams& p) {
  const double k = p.kappa();
  return {std::sqrt(p.mu * p.mu * k * b.u), std::sqrt(k * b.pT), std::sqrt(p.mu * b.m),
          std::sqrt(p.mu * k * k * b.pF), std::sqrt(p.mu * p.alpha * p.alpha * b.div)};
}

// ------------------------------------------------------------------ solve

struct SolveOutcome {
  BiotSolution solution;
  ErrorReport report;
  Table summary;
  std::vector<std::string> files;
};

inline SolveOutcome run_solve(const ExperimentConfig& cfg, bool write_files = true) {
  cfg.validate();
  const int level = cfg.levels.back();
  const ManufacturedCase mc = manufactured_case(cfg.case_id);
  Discretization d(experiment_mesh(cfg, level), cfg.dg);
  SolveOutcome out;
  out.solution = solve_case(d, mc, cfg.params, cfg.rhs, cfg.tolerance);
  AnalysisContext c(d);
  out.report = error_report(c, mc.exact, out.solution, level);
  const ErrComponents& e = out.report.err;
  out.summary.header = {"case", "level", "triangles", "dofs", "residual", "err_total", "err_u", "err_pT",
                        "err_m", "err_pF", "lower_bound", "quasi_ratio", "lower_ratio", "note"};
  out.summary.add_row({mc.name, level, d.mesh.num_triangles(), d.ops.n_u + d.ops.n_p, out.solution.residual,
                       e.total, std::sqrt(e.w_u), std::sqrt(e.w_pT), std::sqrt(e.w_m), std::sqrt(e.w_pF),
                       out.report.best.lower_bound, out.report.quasi_ratio, out.report.lower_ratio,
                       out.report.hminus1_note});
  if (!write_files) return out;

  const Mesh& m = d.mesh;
  const BiotSolution& s = out.solution;
  const VtkData vd = solution_vtk(m, s);
  Table cells;
  cells.header = {"triangle", "cx", "cy", "U_x", "U_y", "P_F_mean", "P_T", "M"};
  for (int t = 0; t < m.num_triangles(); ++t) {
    const Point ct = m.centroid(t);
    cells.add_row({t, ct.x, ct.y, vd.cell_vectors[0].second.first[t], vd.cell_vectors[0].second.second[t],
                   vd.cell_scalars[2].second[t], s.P_T.coeffs[t], s.M.coeffs[t]});
  }
  out.files.push_back(output_path(cfg, "solve_summary.csv"));
  write_csv(out.summary, out.files.back());
  out.files.push_back(output_path(cfg, "solve_cells.csv"));
  write_csv(cells, out.files.back());
  out.files.push_back(output_path(cfg, "mesh.txt"));
  write_mesh(m, out.files.back());
  if (cfg.vtk) {
    out.files.push_back(output_path(cfg, "solution.vtk"));
    write_vtk(m, vd, out.files.back());
  }
  return out;
}

// ------------------------------------------------------------ convergence

struct ConvergenceOutcome {
  Table table;
  std::vector<ErrorReport> reports;
  std::vector<std::string> files;
};

/// One row per level. With compare_plain, the plain right-hand side is solved
/// too and the trial-norm gap between the two discrete solutions reported.
inline ConvergenceOutcome run_convergence(const ExperimentConfig& cfg, bool write_files = true) {
  cfg.validate();
  const ManufacturedCase mc = manufactured_case(cfg.case_id);
  const MaterialParams& p = cfg.params;
  ConvergenceOutcome out;
  Table& t = out.table;
  t.header = {"level", "n", "h", "dofs", "residual", "err_total", "err_u", "err_pT", "err_m", "err_pF",
              "rate_total", "best_lower", "best_u", "best_pT", "best_m", "best_pF", "best_div", "rate_best_u",
              "rate_best_pT", "rate_best_m", "rate_best_pF", "quasi_ratio", "lower_ratio"};
  if (cfg.compare_plain)
    for (const char* h : {"plain_err_total", "plain_rate", "plain_residual", "gap", "gap_rate"}) t.header.push_back(h);

  double prev_err = 0, prev_plain = 0, prev_gap = 0;
  WeightedBest prev_best{};
  for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
    const int level = cfg.levels[i];
    try {
      Discretization d(experiment_mesh(cfg, level), cfg.dg);
      AnalysisContext c(d);
      const BiotSolution s = solve_case(d, mc, p, cfg.rhs, cfg.tolerance);
      const ErrorReport rep = error_report(c, mc.exact, s, level);
      const WeightedBest wb = weighted_best(rep.best, p);
      const ErrComponents& e = rep.err;
      auto r = [&](double a, double b) { return i == 0 ? std::numeric_limits<double>::quiet_NaN() : rate(a, b); };
      std::vector<Table::Cell> row{level,
                                   level_to_n(level),
                                   d.mesh.max_h(),
                                   d.ops.n_u + d.ops.n_p,
                                   s.residual,
                                   e.total,
                                   std::sqrt(e.w_u),
                                   std::sqrt(e.w_pT),
                                   std::sqrt(e.w_m),
                                   std::sqrt(e.w_pF),
                                   r(prev_err, e.total),
                                   rep.best.lower_bound,
                                   wb.u,
                                   wb.pT,
                                   wb.m,
                                   wb.pF,
                                   wb.div,
                                   r(prev_best.u, wb.u),
                                   r(prev_best.pT, wb.pT),
                                   r(prev_best.m, wb.m),
                                   r(prev_best.pF, wb.pF),
                                   rep.quasi_ratio,
                                   rep.lower_ratio};
      if (cfg.compare_plain) {
        const RhsKind other = cfg.rhs == RhsKind::plain ? RhsKind::smoothed : RhsKind::plain;
        const BiotSolution q = solve_case(d, mc, p, other, cfg.tolerance);
        const double plain_err = compute_err(c, mc.exact, q).total;
        const double gap = compute_norms(c, p, s.U.coeffs - q.U.coeffs, s.P_F.coeffs - q.P_F.coeffs).trial;
        row.insert(row.end(), {plain_err, r(prev_plain, plain_err), q.residual, gap, r(prev_gap, gap)});
        prev_plain = plain_err;
        prev_gap = gap;
      }
      t.add_row(row);
      out.reports.push_back(rep);
      prev_err = e.total;
      prev_best = wb;
    } catch (const std::exception& ex) {
      throw std::runtime_error("convergence: level " + std::to_string(level) + ": " + ex.what());
    }
  }
  if (write_files) {
    out.files.push_back(output_path(cfg, "convergence.csv"));
    write_csv(t, out.files.back());
  }
  return out;
}

// ------------------------------------------------------------------ sweep

struct SweepOutcome {
  Table table;
  int failures = 0;
  std::vector<std::string> files;
};

/// Every grid point on the finest configured level. Points are independent;
/// workers take them round-robin, each with its own analysis context. A
/// failing point is recorded and the sweep continues.
inline SweepOutcome run_sweep(const ExperimentConfig& cfg, bool write_files = true) {
  cfg.validate();
  const int level = cfg.levels.back();
  const ManufacturedCase mc = manufactured_case(cfg.case_id);
  const Discretization d(experiment_mesh(cfg, level), cfg.dg);
  const bool crisscross = cfg.mesh_file.empty() && cfg.mesh_kind == StructuredKind::crisscross;
  const std::vector<MaterialParams> pts = cfg.grid_points();
  static constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  struct Row {
    bool ok = false;
    std::string message;
    double residual = nan, total = nan, u = nan, pT = nan, m = nan, pF = nan, quasi = nan, lower = nan;
    double beta = nan, checker = nan;
  };
  std::vector<Row> rows(pts.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    std::unique_ptr<AnalysisContext> c;
    std::unique_ptr<GlobalInfSup> g;
    for (std::size_t i; (i = next++) < pts.size();) {
      Row& r = rows[i];
      try {
        if (!c) c = std::make_unique<AnalysisContext>(d);
        const BiotSolution s = solve_case(d, mc, pts[i], cfg.rhs, cfg.tolerance);
        const ErrorReport rep = error_report(*c, mc.exact, s, level);
        r.residual = s.residual;
        r.total = rep.err.total;
        r.u = std::sqrt(rep.err.w_u);
        r.pT = std::sqrt(rep.err.w_pT);
        r.m = std::sqrt(rep.err.w_m);
        r.pF = std::sqrt(rep.err.w_pF);
        r.quasi = rep.quasi_ratio;
        r.lower = rep.lower_ratio;
        if (crisscross) r.checker = checkerboard_content(d.mesh, c->dg_to_p0 * s.P_F.coeffs);
        r.ok = true;
      } catch (const std::exception& ex) {
        r.message = ex.what();
        continue;
      }
      if (!cfg.sweep_infsup) continue;
      try {
        if (!g) g = std::make_unique<GlobalInfSup>(d);
        r.beta = g->beta(pts[i]);
      } catch (const std::exception& ex) {
        r.message = std::string("inf-sup: ") + ex.what();
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t nthreads = std::min<std::size_t>(cfg.threads > 0 ? cfg.threads : hw, pts.size());
  if (nthreads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < nthreads; ++k) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  SweepOutcome out;
  out.table.header = {"lambda", "kappa_bar", "sigma", "alpha", "status", "residual", "err_total", "err_u",
                      "err_pT", "err_m", "err_pF", "quasi_ratio", "lower_ratio", "beta", "checkerboard", "message"};
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Row& r = rows[i];
    if (!r.ok) ++out.failures;
    out.table.add_row({pts[i].lambda, pts[i].kappa_bar, pts[i].sigma, pts[i].alpha, r.ok ? "ok" : "failed",
                       r.residual, r.total, r.u, r.pT, r.m, r.pF, r.quasi, r.lower, r.beta, r.checker, r.message});
  }
  if (write_files) {
    out.files.push_back(output_path(cfg, "sweep.csv"));
    write_csv(out.table, out.files.back());
  }
  return out;
}

// ---------------------------------------------------------------- inf-sup

/// beta of `pair` on levels 1..levels (n = 2^l); drift is relative to the
/// previous level.
inline Table run_infsup(InfSupPair pair, StructuredKind kind, int levels, const MaterialParams& p = {},
                        const DGConfig& dg = {}) {
  if (levels < 1) throw ConfigError("infsup: --levels must be >= 1");
  Table t;
  t.header = {"pair", "mesh", "level", "n", "dim_trial", "dim_test", "beta", "spurious", "drift"};
  double prev = 0;
  for (int l = 1; l <= levels; ++l) {
    const InfSupResult r = infsup_constant(pair, build_structured(kind, level_to_n(l)), p, dg);
    const double drift = l == 1 ? std::numeric_limits<double>::quiet_NaN() : std::abs(r.beta / prev - 1.0);
    t.add_row({to_string(pair), to_string(kind), l, level_to_n(l), r.dim_trial, r.dim_test, r.beta,
               r.spurious ? "yes" : "no", drift});
    prev = r.beta;
  }
  return t;
}

// ------------------------------------------------------------------ modes

struct ModesOutcome {
  Vec mode;
  Table diagnostics;
  std::vector<std::string> files;
};

/// The checkerboard field on crisscross(n) with its pairings against
/// conforming P1, CR and the dG-P1 element indicators.
inline ModesOutcome run_modes(int n, const std::string& out_dir = "") {
  if (n < 1) throw ConfigError("modes: --n must be >= 1");
  const Mesh m = build_structured(StructuredKind::crisscross, n);
  ModesOutcome out;
  out.mode = checkerboard_mode(m).coeffs;
  const SpMat massT = SpMat(assemble_pair_mass(m).transpose());  // dG x P0
  const Vec dg_pair = massT * out.mode;
  const double hats = m.num_interior_vertices() ? (SpMat(contP1_to_dg_matrix(m).transpose()) * dg_pair).cwiseAbs().maxCoeff() : 0.0;
  const double cr = m.num_interior_faces() ? (SpMat(cr_to_dg_matrix(m).transpose()) * dg_pair).cwiseAbs().maxCoeff() : 0.0;
  double indicator = 0.0;  // max |int_T Q| / |T| over element indicators
  for (int t = 0; t < m.num_triangles(); ++t)
    indicator = std::max(indicator, std::abs(dg_pair.segment<3>(3 * t).sum()) / m.area(t));
  const InfSupResult p1 = infsup_constant(InfSupPair::div_contP1_P0, m);
  const InfSupResult crb = infsup_constant(InfSupPair::div_CR_P0, m);
  out.diagnostics.header = {"n", "triangles", "max_pair_contP1", "max_pair_CR", "max_pair_dG_indicator_over_area",
                            "beta_div_contP1_P0", "beta_div_CR_P0"};
  out.diagnostics.add_row({n, m.num_triangles(), hats, cr, indicator, p1.beta, crb.beta});
  if (!out_dir.empty()) {
    Table vals;
    vals.header = {"triangle", "cx", "cy", "value"};
    for (int t = 0; t < m.num_triangles(); ++t) vals.add_row({t, m.centroid(t).x, m.centroid(t).y, out.mode[t]});
    const std::filesystem::path dir(out_dir);
    out.files = {(dir / "checkerboard.csv").string(), (dir / "checkerboard_diagnostics.csv").string(),
                 (dir / "checkerboard.vtk").string()};
    write_csv(vals, out.files[0]);
    write_csv(out.diagnostics, out.files[1]);
    VtkData vd;
    vd.cell_scalars = {{"checkerboard", out.mode}};
    write_vtk(m, vd, out.files[2]);
  }
  return out;
}

}  // namespace biotcr
