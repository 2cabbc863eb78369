#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "biotcr/app.hpp"
#include "oracles.hpp"

using namespace biotcr;

namespace {

constexpr double pi = std::numbers::pi;

MaterialParams odd_params() {
  MaterialParams p;
  p.mu = 1.7;
  p.lambda = 12.0;
  p.alpha = 0.6;
  p.sigma = 0.4;
  p.kappa_bar = 0.3;
  p.tau = 0.5;
  return p;
}

std::filesystem::path scratch(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("biotcr_test_app_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

ExperimentConfig cfg_from(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is, "test.ini");
}

}  // namespace

// ------------------------------------------------------ manufactured case

TEST(Manufactured, TrigSourceAtCenter) {
  const ManufacturedCase mc = trig_case();
  const MaterialParams p = odd_params();
  EXPECT_NEAR(mc.exact.div_u(0.5, 0.5), 0.0, 1e-15);
  EXPECT_NEAR(mc.source(p)(0.5, 0.5), p.sigma + 2 * pi * pi * p.kappa(), 1e-13);
}

TEST(Manufactured, FieldsVanishOnBoundary) {
  const ManufacturedCase mc = trig_case();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const double s = k / 25.0;  // walk the perimeter
    const int side = k / 25;
    const double r = s - side;
    const double x = side == 0 ? r : side == 1 ? 1.0 : side == 2 ? 1.0 - r : 0.0;
    const double y = side == 0 ? 0.0 : side == 1 ? r : side == 2 ? 1.0 : 1.0 - r;
    worst = std::max({worst, norm(mc.exact.u(x, y)), std::abs(mc.exact.p(x, y))});
  }
  EXPECT_LE(worst, 1e-14);
}

class LoadsOracle : public ::testing::TestWithParam<const char*> {};

TEST_P(LoadsOracle, MatchFiniteDifferences) {
  // f = -div(2 mu eps(u) + lambda div u I - alpha p I), g = alpha div u + sigma p - kappa lap p,
  // all derivatives by central differences of u and p alone
  const ManufacturedCase mc = manufactured_case(GetParam());
  const MaterialParams q = odd_params();
  const double h = 1e-3;
  auto U = [&](int c, double x, double y) { return c == 0 ? mc.exact.u(x, y).x : mc.exact.u(x, y).y; };
  // fourth-order central differences
  auto d = [&](auto&& f, int dir, double x, double y) {
    const double dx = dir == 0 ? h : 0.0, dy = dir == 0 ? 0.0 : h;
    return (-f(x + 2 * dx, y + 2 * dy) + 8 * f(x + dx, y + dy) - 8 * f(x - dx, y - dy) + f(x - 2 * dx, y - 2 * dy)) /
           (12 * h);
  };
  for (int k = 0; k < 10; ++k) {
    const double x = oracle::uniform(0.1, 0.9), y = oracle::uniform(0.1, 0.9);
    auto grad = [&](int c, int dir, double a, double b) {
      return d([&](double s, double t) { return U(c, s, t); }, dir, a, b);
    };
    auto div = [&](double a, double b) { return grad(0, 0, a, b) + grad(1, 1, a, b); };
    // stress sigma_ij as a function of position
    auto stress = [&](int i, int j, double a, double b) {
      const double e = 0.5 * (grad(i, j, a, b) + grad(j, i, a, b));
      return 2 * q.mu * e + (i == j ? q.lambda * div(a, b) - q.alpha * mc.exact.p(a, b) : 0.0);
    };
    for (int i = 0; i < 2; ++i) {
      double f = 0.0;
      for (int j = 0; j < 2; ++j) f -= d([&](double s, double t) { return stress(i, j, s, t); }, j, x, y);
      const double lib = i == 0 ? mc.force(q)(x, y).x : mc.force(q)(x, y).y;
      EXPECT_NEAR(lib, f, 1e-6 * (1 + std::abs(f))) << "component " << i;
    }
    auto p2 = [&](double dx, double dy) { return mc.exact.p(x + dx, y + dy) + mc.exact.p(x - dx, y - dy); };
    const double lap = (-p2(2 * h, 0) + 16 * p2(h, 0) - p2(0, 2 * h) + 16 * p2(0, h) - 60 * mc.exact.p(x, y)) /
                       (12 * h * h);
    const double g = q.alpha * div(x, y) + q.sigma * mc.exact.p(x, y) - q.kappa() * lap;
    EXPECT_NEAR(mc.source(q)(x, y), g, 1e-6 * (1 + std::abs(g)));
    // gradients supplied with the case
    for (int c = 0; c < 2; ++c)
      for (int dir = 0; dir < 2; ++dir) {
        const Point gu = mc.exact.grad_u(x, y)[c];
        EXPECT_NEAR(dir == 0 ? gu.x : gu.y, grad(c, dir, x, y), 1e-9);
      }
    EXPECT_NEAR(mc.exact.grad_p(x, y).x, d(mc.exact.p, 0, x, y), 1e-9);
    EXPECT_NEAR(mc.exact.grad_p(x, y).y, d(mc.exact.p, 1, x, y), 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(Manufactured, LoadsOracle, ::testing::Values("trig", "divfree", "zero"));

TEST(Manufactured, DivergenceFreeCase) {
  const ManufacturedCase mc = divfree_case();
  double worst = 0.0, bnd = 0.0;
  for (int k = 0; k < 50; ++k) {
    const double x = oracle::uniform(0, 1), y = oracle::uniform(0, 1);
    worst = std::max(worst, std::abs(mc.exact.div_u(x, y)));
    bnd = std::max({bnd, norm(mc.exact.u(x, 0.0)), norm(mc.exact.u(1.0, y)), std::abs(mc.exact.p(0.0, y))});
  }
  EXPECT_LE(worst, 1e-14);
  EXPECT_LE(bnd, 1e-14);
}

TEST(Manufactured, MeanOfPressure) {
  const ManufacturedCase mc = trig_case();
  double s = 0.0;
  const Mesh m = build_structured(StructuredKind::right_split, 4);
  for (int t = 0; t < m.num_triangles(); ++t) {
    const auto& tr = m.triangle(t);
    s += oracle::integrate_triangle(m.vertex(tr[0]), m.vertex(tr[1]), m.vertex(tr[2]),
                                    [&](double x, double y, std::array<double, 3>) { return mc.exact.p(x, y); });
  }
  EXPECT_NEAR(mc.exact.p_mean, s, 1e-6);
}

TEST(Manufactured, ZeroCaseSolvesToZero) {
  const ManufacturedCase mc = manufactured_case("zero");
  Discretization d(build_structured(StructuredKind::crisscross, 2));
  const BiotSolution s = solve_case(d, mc, odd_params());
  EXPECT_EQ(s.U.coeffs.norm() + s.P_F.coeffs.norm() + s.P_T.coeffs.norm() + s.M.coeffs.norm(), 0.0);
}

TEST(Manufactured, UnknownCase) { EXPECT_THROW(manufactured_case("poly"), ConfigError); }

// ----------------------------------------------------------------- config

TEST(Config, ParsesAllSections) {
  const ExperimentConfig c = cfg_from(R"(
# comment
[case]
name = zero
[mesh]
kind = crisscross
levels = 2..4
[params]
mu = 2 ; inline comment
lambda = 1e4
alpha = 0.5
sigma = 0
kappa_bar = 1e-8
tau = 0.25
[grid]
lambda = 1, 1e4 1e8
sigma = 0,1
[dg]
eta = 12
min_stability = 0.05
[solver]
rhs = plain
compare_plain = yes
tolerance = 1e-11
[sweep]
infsup = false
threads = 2
[output]
dir = somewhere
prefix = run1_
vtk = off
)");
  EXPECT_EQ(c.case_id, "zero");
  EXPECT_EQ(c.mesh_kind, StructuredKind::crisscross);
  EXPECT_EQ(c.levels, (std::vector<int>{2, 3, 4}));
  EXPECT_EQ(c.params.mu, 2.0);
  EXPECT_EQ(c.params.kappa_bar, 1e-8);
  EXPECT_EQ(c.params.tau, 0.25);
  EXPECT_EQ(c.grid.lambda, (std::vector<double>{1, 1e4, 1e8}));
  EXPECT_EQ(c.dg.eta, 12.0);
  EXPECT_EQ(c.dg.min_stability, 0.05);
  EXPECT_EQ(c.rhs, RhsKind::plain);
  EXPECT_TRUE(c.compare_plain);
  EXPECT_EQ(c.tolerance, 1e-11);
  EXPECT_FALSE(c.sweep_infsup);
  EXPECT_EQ(c.threads, 2);
  EXPECT_EQ(c.out_dir, "somewhere");
  EXPECT_EQ(c.prefix, "run1_");
  EXPECT_FALSE(c.vtk);
  // 3 lambdas x 2 sigmas, the rest from [params]
  const auto pts = c.grid_points();
  ASSERT_EQ(pts.size(), 6u);
  EXPECT_EQ(pts.back().lambda, 1e8);
  EXPECT_EQ(pts.back().sigma, 1.0);
  EXPECT_EQ(pts.back().kappa_bar, 1e-8);
  EXPECT_EQ(pts.back().alpha, 0.5);
}

TEST(Config, EveryUnknownKeyOrSectionIsAnError) {
  EXPECT_THROW(cfg_from("[params]\nlamda = 3\n"), ConfigError);
  EXPECT_THROW(cfg_from("[mesh]\nlevel = 3\n"), ConfigError);
  EXPECT_THROW(cfg_from("[parameters]\nmu = 3\n"), ConfigError);
  EXPECT_THROW(cfg_from("[output]\nformat = csv\n"), ConfigError);
}

TEST(Config, MalformedInputIsAnError) {
  EXPECT_THROW(cfg_from("mu = 1\n"), ConfigError);                       // no section
  EXPECT_THROW(cfg_from("[params]\nmu 1\n"), ConfigError);               // no '='
  EXPECT_THROW(cfg_from("[params]\nmu = \n"), ConfigError);              // empty value
  EXPECT_THROW(cfg_from("[params]\nmu = 1\nmu = 2\n"), ConfigError);     // duplicate key
  EXPECT_THROW(cfg_from("[params]\n[params]\n"), ConfigError);           // duplicate section
  EXPECT_THROW(cfg_from("[params\nmu = 1\n"), ConfigError);              // bad header
  EXPECT_THROW(cfg_from("[params]\nmu = 1.5x\n"), ConfigError);          // trailing junk
  EXPECT_THROW(cfg_from("[mesh]\nkind = hexagonal\n"), ConfigError);
  EXPECT_THROW(cfg_from("[solver]\nrhs = fancy\n"), ConfigError);
  EXPECT_THROW(cfg_from("[solver]\ncompare_plain = maybe\n"), ConfigError);
}

TEST(Config, InvalidValuesAreRejected) {
  EXPECT_THROW(cfg_from("[params]\nmu = -1\n"), ConfigError);
  EXPECT_THROW(cfg_from("[params]\nalpha = -0.1\n"), ConfigError);
  EXPECT_THROW(cfg_from("[mesh]\nlevels = 0\n"), ConfigError);
  EXPECT_THROW(cfg_from("[mesh]\nlevels = 4, 3\n"), ConfigError);
  EXPECT_THROW(cfg_from("[mesh]\nlevels = 5..2\n"), ConfigError);
  EXPECT_THROW(cfg_from("[dg]\neta = 0\n"), ConfigError);
  EXPECT_THROW(cfg_from("[solver]\ntolerance = 0\n"), ConfigError);
  EXPECT_THROW(cfg_from("[grid]\nsigma = \n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/x.ini"), ConfigError);
}

TEST(Config, BundledConfigsLoad) {
  for (const char* f : {"configs/solve.ini", "configs/convergence.ini", "configs/sweep.ini"})
    EXPECT_NO_THROW(load_config(f)) << f;
  EXPECT_THROW(load_config("tests/data/bad_key.ini"), ConfigError);
}

// -------------------------------------------------------------------- CSV

TEST(Csv, RoundTripIsLossless) {
  Table t;
  t.header = {"name", "value", "count"};
  std::vector<double> vals{0.1, 1.0 / 3.0, -2.718281828459045, 1e-300, 4.9e-324, 1.7976931348623157e308,
                           std::nextafter(1.0, 2.0), -0.0};
  for (int k = 0; k < 50; ++k) vals.push_back(std::ldexp(oracle::uniform(), static_cast<int>(oracle::uniform(-60, 60))));
  for (std::size_t i = 0; i < vals.size(); ++i) t.add_row({i % 3 ? "plain" : "with, comma \"q\"", vals[i], static_cast<int>(i)});
  std::stringstream ss;
  write_csv(t, ss);
  const Table r = read_csv(ss);
  ASSERT_EQ(r.header, t.header);
  ASSERT_EQ(r.rows.size(), vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double back = r.num(i, "value");
    EXPECT_EQ(std::memcmp(&back, &vals[i], sizeof(double)), 0) << vals[i];
    EXPECT_EQ(r.str(i, "name"), t.rows[i][0]);
  }
}

TEST(Csv, NonFiniteAndErrors) {
  EXPECT_TRUE(std::isnan(parse_cell_double(format_double(std::numeric_limits<double>::quiet_NaN()))));
  EXPECT_EQ(parse_cell_double(format_double(-std::numeric_limits<double>::infinity())),
            -std::numeric_limits<double>::infinity());
  Table t;
  t.header = {"a", "b"};
  EXPECT_THROW(t.add_row({1.0}), std::logic_error);
  std::istringstream bad("a,b\n1,2,3\n");
  EXPECT_THROW(read_csv(bad), std::invalid_argument);
  EXPECT_THROW(write_csv(t, std::string("/proc/definitely/not/here.csv")), std::runtime_error);
}

// -------------------------------------------------------------------- VTK

TEST(Vtk, CrisscrossOneHasFourCellsAndExactCheckerboard) {
  const Mesh m = build_structured(StructuredKind::crisscross, 1);
  VtkData d;
  d.cell_scalars = {{"checkerboard", checkerboard_mode(m).coeffs}};
  std::stringstream ss;
  write_vtk(m, d, ss);
  std::string line;
  int cells = -1;
  std::vector<std::string> values;
  while (std::getline(ss, line)) {
    if (line.rfind("CELLS ", 0) == 0) cells = std::stoi(line.substr(6));
    if (line == "LOOKUP_TABLE default")
      for (int k = 0; k < 4 && std::getline(ss, line); ++k) values.push_back(line);
  }
  EXPECT_EQ(cells, 4);
  ASSERT_EQ(values.size(), 4u);
  for (const auto& v : values) EXPECT_TRUE(std::stod(v) == 1.0 || std::stod(v) == -1.0) << v;
}

TEST(Vtk, WrongFieldSizeRejected) {
  const Mesh m = build_structured(StructuredKind::crisscross, 1);
  VtkData d;
  d.corner_scalars = {{"p", Vec::Zero(5)}};
  std::stringstream ss;
  EXPECT_THROW(write_vtk(m, d, ss), std::invalid_argument);
}

// ----------------------------------------------------------------- drivers

TEST(Drivers, SolveWritesAllOutputs) {
  ExperimentConfig c = cfg_from("[mesh]\nlevels = 2\n[params]\nlambda = 5\nsigma = 1\n");
  c.out_dir = scratch("solve").string();
  const SolveOutcome r = run_solve(c);
  ASSERT_EQ(r.files.size(), 4u);
  for (const auto& f : r.files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  const Table s = read_csv(r.files[0]);
  EXPECT_LE(s.num(0, "residual"), 1e-10);
  EXPECT_GT(s.num(0, "err_total"), 0.0);
  // mesh file round trip feeds back into the driver
  ExperimentConfig c2 = c;
  c2.mesh_file = r.files[2];
  c2.levels = {1};
  EXPECT_EQ(experiment_mesh(c2, 1).num_triangles(), 4 * read_mesh(r.files[2]).num_triangles());
}

TEST(Drivers, ConvergenceZeroCaseIsExactlyZero) {
  ExperimentConfig c = cfg_from("[case]\nname = zero\n[mesh]\nlevels = 1..2\n");
  const ConvergenceOutcome r = run_convergence(c, false);
  for (std::size_t i = 0; i < r.table.rows.size(); ++i)
    for (const char* col : {"err_total", "err_u", "err_pT", "err_m", "err_pF", "best_lower"})
      EXPECT_EQ(r.table.num(i, col), 0.0) << col;
}

TEST(Drivers, ConvergenceTrigRatesAndPlainGap) {
  ExperimentConfig c = cfg_from("[mesh]\nlevels = 2..4\n[solver]\ncompare_plain = true\n");
  const ConvergenceOutcome r = run_convergence(c, false);
  ASSERT_EQ(r.table.rows.size(), 3u);
  EXPECT_TRUE(std::isnan(r.table.num(0, "rate_total")));
  EXPECT_GE(r.table.num(2, "rate_total"), 0.9);
  EXPECT_GE(r.table.num(2, "plain_rate"), 0.9);
  EXPECT_GE(r.table.num(2, "gap_rate"), 0.9);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LE(r.table.num(i, "quasi_ratio"), 10.0);
}

TEST(Drivers, ConvergenceFailureNamesTheLevel) {
  ExperimentConfig c = cfg_from("[mesh]\nlevels = 1..2\n[solver]\ntolerance = 1e-300\n");
  try {
    run_convergence(c, false);
    FAIL() << "expected a failure";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("level 1"), std::string::npos) << e.what();
  }
}

TEST(Drivers, SweepRecordsFailuresAndContinues) {
  // alpha = -1 is invalid for that point only
  ExperimentConfig c = cfg_from("[mesh]\nlevels = 1\n[grid]\nalpha = 1, -1, 0.5\n");
  const SweepOutcome r = run_sweep(c, false);
  ASSERT_EQ(r.table.rows.size(), 3u);
  EXPECT_EQ(r.failures, 1);
  EXPECT_EQ(r.table.str(0, "status"), "ok");
  EXPECT_EQ(r.table.str(1, "status"), "failed");
  EXPECT_NE(r.table.str(1, "message").find("alpha"), std::string::npos);
  EXPECT_EQ(r.table.str(2, "status"), "ok");
  EXPECT_GT(r.table.num(2, "beta"), 0.0);
}

TEST(Drivers, SweepRobustnessDiagnostics) {
  ExperimentConfig c = cfg_from(
      "[mesh]\nkind = crisscross\nlevels = 2\n[grid]\nlambda = 1, 1e4, 1e8\nkappa_bar = 1, 1e-8\nsigma = 0, 1\n"
      "[sweep]\ninfsup = false\n");
  const SweepOutcome r = run_sweep(c, false);
  ASSERT_EQ(r.failures, 0);
  const Table& t = r.table;
  auto find = [&](double l, double k, double s) {
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      if (t.num(i, "lambda") == l && t.num(i, "kappa_bar") == k && t.num(i, "sigma") == s) return i;
    throw std::logic_error("missing grid point");
  };
  for (double k : {1.0, 1e-8})
    for (double s : {0.0, 1.0}) {
      double lo = 1e300, hi = 0;
      for (double l : {1.0, 1e4, 1e8}) {
        const double q = t.num(find(l, k, s), "quasi_ratio");
        lo = std::min(lo, q);
        hi = std::max(hi, q);
      }
      EXPECT_LE(hi / lo, 3.0) << "kappa " << k << " sigma " << s;
    }
  for (double l : {1.0, 1e4, 1e8})
    for (double k : {1.0, 1e-8}) {
      const double a = t.num(find(l, k, 0), "err_total"), b = t.num(find(l, k, 1), "err_total");
      EXPECT_LE(std::max(a / b, b / a), 3.0);
    }
  for (double l : {1.0, 1e4, 1e8}) EXPECT_LE(t.num(find(l, 1e-8, 0), "checkerboard"), 0.1);
}

TEST(Drivers, InfSupTable) {
  const Table t = run_infsup(InfSupPair::div_contP1_P0, StructuredKind::crisscross, 2);
  ASSERT_EQ(t.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_LE(t.num(i, "beta"), 1e-10);
    EXPECT_EQ(t.str(i, "spurious"), "yes");
  }
  EXPECT_THROW(run_infsup(InfSupPair::div_CR_P0, StructuredKind::crisscross, 0), ConfigError);
}

TEST(Drivers, ModesDiagnosticsAndFiles) {
  const auto dir = scratch("modes");
  const ModesOutcome r = run_modes(3, dir.string());
  EXPECT_LE(r.diagnostics.num(0, "max_pair_contP1"), 1e-12);
  EXPECT_LE(r.diagnostics.num(0, "max_pair_CR"), 1e-12);
  EXPECT_GE(r.diagnostics.num(0, "max_pair_dG_indicator_over_area"), 0.5);
  EXPECT_LE(r.diagnostics.num(0, "beta_div_contP1_P0"), 1e-10);
  EXPECT_GT(r.diagnostics.num(0, "beta_div_CR_P0"), 0.1);
  for (const auto& f : r.files) EXPECT_TRUE(std::filesystem::exists(f)) << f;
  const Table vals = read_csv(r.files[0]);
  for (std::size_t i = 0; i < vals.rows.size(); ++i) EXPECT_EQ(std::abs(vals.num(i, "value")), 1.0);
}
