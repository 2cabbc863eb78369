#pragma once

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "biotcr/assembly.hpp"

namespace biotcr {

inline constexpr double kResidualTolerance = 1e-10;

/// Everything on one mesh that does not depend on material parameters.
struct Discretization {
  Mesh mesh;
  BiotOperators ops;
  SmootherAssembly smoothers;

  explicit Discretization(Mesh m, const DGConfig& cfg = {})
      : mesh(std::move(m)), ops(assemble_operators(mesh, cfg)), smoothers(assemble_smoothers(mesh)) {}
};

struct BiotSolution {
  Field U{SpaceKind::CR2, {}};
  Field P_F{SpaceKind::dGP1, {}};
  Field P_T{SpaceKind::P0mean0, {}};
  Field M{SpaceKind::P0, {}};
  double residual = 0.0;
  MaterialParams params;
};

enum class RhsKind { smoothed, plain };

inline LinearSystem make_system(const Discretization& d, const MaterialParams& p, const VectorFn& f, const ScalarFn& g,
                                RhsKind kind = RhsKind::smoothed) {
  LinearSystem sys;
  sys.matrix = assemble_B(d.ops, p);
  sys.rhs = kind == RhsKind::smoothed ? assemble_rhs_smoothed(d.mesh, d.smoothers, f, g)
                                      : assemble_rhs_plain(d.mesh, f, g);
  sys.n_u = d.ops.n_u;
  sys.n_p = d.ops.n_p;
  return sys;
}

/// div_T U per triangle.
inline Vec broken_divergence(const BiotOperators& ops, const Vec& U) { return (ops.D * U).cwiseQuotient(ops.areas); }

/// P_T and M from U and P_F.
inline void derive_fields(const BiotOperators& ops, const MaterialParams& p, BiotSolution& s) {
  const Vec div = broken_divergence(ops, s.U.coeffs);
  Vec pf0(ops.n_t);
  for (int t = 0; t < ops.n_t; ++t)
    pf0[t] = (s.P_F.coeffs[3 * t] + s.P_F.coeffs[3 * t + 1] + s.P_F.coeffs[3 * t + 2]) / 3.0;
  const double mean = ops.areas.dot(pf0) / ops.areas.sum();
  s.P_T = {SpaceKind::P0mean0, p.lambda * div - p.alpha * (pf0.array() - mean).matrix()};
  s.M = {SpaceKind::P0, p.alpha * div + p.sigma * pf0};
}

/// Sparse LU with symmetric diagonal equilibration and a few refinement
/// sweeps. Keeps the factorization for repeated right-hand sides.
class FactorizedSystem {
 public:
  FactorizedSystem(const SpMat& K, std::string context) : K_(K), context_(std::move(context)) {
    const int n = static_cast<int>(K.rows());
    Vec rowsum = Vec::Zero(n);
    for (int k = 0; k < K.outerSize(); ++k)
      for (SpMat::InnerIterator it(K, k); it; ++it) rowsum[it.row()] += std::abs(it.value());
    norm_inf_ = rowsum.maxCoeff();
    scale_.resize(n);
    for (int i = 0; i < n; ++i) {
      const double d = std::abs(K.coeff(i, i));
      scale_[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 1.0;
    }
    SpMat Ks = scale_.asDiagonal() * K * scale_.asDiagonal();
    Ks.makeCompressed();
    lu_.analyzePattern(Ks);
    lu_.factorize(Ks);
    if (lu_.info() != Eigen::Success)
      throw std::runtime_error("sparse LU failed (" + context_ + "): " + lu_.lastErrorMessage());
  }

  /// Returns x; the normwise backward error |b - Kx| / (|K| |x| + |b|) in
  /// the max norm is written to *residual. Residuals for the refinement
  /// sweeps are accumulated in long double.
  Vec solve(const Vec& b, double* residual = nullptr) const {
    if (b.lpNorm<Eigen::Infinity>() == 0.0) {
      if (residual) *residual = 0.0;
      return Vec::Zero(b.size());
    }
    Vec x = Vec::Zero(b.size());
    Vec r = b;
    double rel = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < 6; ++sweep) {
      const Vec y = lu_.solve(scale_.cwiseProduct(r));
      const Vec trial = x + scale_.cwiseProduct(y);
      const Vec rt = residual_ext(b, trial);
      const double next = backward_error(b, trial, rt);
      if (!(next < rel)) break;
      x = trial;
      r = rt;
      rel = next;
      if (rel < 1e-15) break;
    }
    if (!std::isfinite(rel) || rel > kResidualTolerance) {
      std::ostringstream os;
      os << "relative residual " << rel << " exceeds " << kResidualTolerance << " (" << context_ << ")";
      throw std::runtime_error(os.str());
    }
    if (residual) *residual = rel;
    return x;
  }

  double backward_error(const Vec& b, const Vec& x, const Vec& r) const {
    return r.lpNorm<Eigen::Infinity>() / (norm_inf_ * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>());
  }

  Vec residual_ext(const Vec& b, const Vec& x) const {
    std::vector<long double> acc(b.data(), b.data() + b.size());
    for (int k = 0; k < K_.outerSize(); ++k)
      for (SpMat::InnerIterator it(K_, k); it; ++it)
        acc[it.row()] -= static_cast<long double>(it.value()) * static_cast<long double>(x[it.col()]);
    Vec r(b.size());
    for (int i = 0; i < b.size(); ++i) r[i] = static_cast<double>(acc[i]);
    return r;
  }

 private:
  SpMat K_;
  Vec scale_;
  double norm_inf_ = 0.0;
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
  std::string context_;
};

inline BiotSolution unpack_solution(const BiotOperators& ops, const MaterialParams& p, const Vec& x, double res) {
  BiotSolution s;
  s.U.coeffs = x.head(ops.n_u);
  s.P_F.coeffs = x.tail(ops.n_p);
  s.residual = res;
  s.params = p;
  derive_fields(ops, p, s);
  return s;
}

inline BiotSolution solve_biot(const LinearSystem& sys, const BiotOperators& ops, const MaterialParams& p) {
  if (sys.n_u != ops.n_u || sys.n_p != ops.n_p || sys.rhs.size() != ops.n_u + ops.n_p)
    throw std::invalid_argument("solve_biot: system does not match the operators");
  FactorizedSystem F(sys.matrix, "solve_biot " + p.describe());
  double res = 0.0;
  const Vec x = F.solve(sys.rhs, &res);
  return unpack_solution(ops, p, x, res);
}

inline BiotSolution solve_biot(const LinearSystem& sys, const Mesh& m, const MaterialParams& p,
                               const DGConfig& cfg = {}) {
  return solve_biot(sys, assemble_operators(m, cfg), p);
}

/// Discrete Riesz lifts through A_CR and A_dG, both SPD.
class RieszLifts {
 public:
  explicit RieszLifts(const BiotOperators& ops) : ops_(&ops) {
    acr_.compute(ops.A_CR);
    adg_.compute(ops.A_dG);
    if (acr_.info() != Eigen::Success || adg_.info() != Eigen::Success)
      throw std::runtime_error("RieszLifts: Cholesky factorization failed");
  }

  /// A_CR(L, V) = int Q0 div_T V.
  Field lift_CR(const Field& Q0) const {
    return {SpaceKind::CR2, acr_.solve(SpMat(ops_->D.transpose()) * Q0.coeffs)};
  }
  /// A_dG(L, Q_F) = int Q Q_F for Q in P0.
  Field lift_dG(const Field& Q) const {
    return {SpaceKind::dGP1, adg_.solve(SpMat(ops_->Mass.transpose()) * Q.coeffs)};
  }
  /// Lift of an arbitrary dG-P1 load vector (moments against lambda_i).
  Vec lift_dG_load(const Vec& load) const { return adg_.solve(load); }

  double norm_CR(const Vec& v) const { return std::sqrt(std::max(0.0, v.dot(ops_->A_CR * v))); }
  double norm_dG(const Vec& q) const { return std::sqrt(std::max(0.0, q.dot(ops_->G_dG * q))); }

  /// ||Q||_{-1,h} = ||L_dG Q||_dG.
  double h_minus1_norm(const Field& Q) const { return norm_dG(lift_dG(Q).coeffs); }
  double h_minus1_norm_load(const Vec& load) const { return norm_dG(lift_dG_load(load)); }

 private:
  const BiotOperators* ops_;
  Eigen::SimplicialLDLT<SpMat> acr_, adg_;
};

inline Field riesz_lift_CR(const BiotOperators& ops, const Field& Q0) { return RieszLifts(ops).lift_CR(Q0); }
inline Field riesz_lift_dG(const BiotOperators& ops, const Field& Q) { return RieszLifts(ops).lift_dG(Q); }

/// Loads for one backward Euler step; g_bar is the source rate.
struct StepLoads {
  VectorFn f;
  ScalarFn g_bar;
};

using LoadSchedule = std::function<StepLoads(int step, double time)>;

struct TimeMarchOptions {
  int n_steps = 1;
  bool steady = false;  // assemble the load vectors once
  RhsKind rhs = RhsKind::smoothed;
};

/// Backward Euler: step k solves B(kappa = tau kappa_bar) with right-hand
/// side [<f, E_CR V>; tau <g_bar, E_dG Q_F> + int M_prev Q_F].
inline std::vector<BiotSolution> time_march(const Discretization& d, const MaterialParams& p,
                                            const LoadSchedule& loads, const TimeMarchOptions& opt,
                                            const Field& M0) {
  if (!(p.tau > 0.0)) throw ConfigError("time_march: tau must be > 0");
  if (opt.n_steps < 1) throw ConfigError("time_march: n_steps must be >= 1");
  if (M0.coeffs.size() != d.ops.n_t) throw std::invalid_argument("time_march: initial M has wrong size");
  const SpMat B = assemble_B(d.ops, p);
  FactorizedSystem F(B, "time_march " + p.describe());
  const SpMat MassT = d.ops.Mass.transpose();
  std::vector<BiotSolution> out;
  out.reserve(opt.n_steps);
  Vec M_prev = M0.coeffs;
  Vec load;
  for (int k = 0; k < opt.n_steps; ++k) {
    if (k == 0 || !opt.steady) {
      const StepLoads L = loads(k + 1, (k + 1) * p.tau);
      load = opt.rhs == RhsKind::smoothed ? assemble_rhs_smoothed(d.mesh, d.smoothers, L.f, L.g_bar)
                                          : assemble_rhs_plain(d.mesh, L.f, L.g_bar);
    }
    Vec rhs = load;
    rhs.tail(d.ops.n_p) *= p.tau;
    rhs.tail(d.ops.n_p) += MassT * M_prev;
    double res = 0.0;
    Vec x;
    try {
      x = F.solve(rhs, &res);
    } catch (const std::exception& e) {
      throw std::runtime_error("time_march step " + std::to_string(k + 1) + ": " + e.what());
    }
    out.push_back(unpack_solution(d.ops, p, x, res));
    M_prev = out.back().M.coeffs;
  }
  return out;
}

/// Fixed point of the stepper for steady loads: kappa_bar A_dG P = <g_bar, E_dG .>
/// and the elasticity block with that pressure.
inline BiotSolution stationary_state(const Discretization& d, const MaterialParams& p, const VectorFn& f,
                                     const ScalarFn& g_bar, RhsKind kind = RhsKind::smoothed) {
  const Vec load = kind == RhsKind::smoothed ? assemble_rhs_smoothed(d.mesh, d.smoothers, f, g_bar)
                                             : assemble_rhs_plain(d.mesh, f, g_bar);
  Eigen::SimplicialLDLT<SpMat> adg(SpMat(p.kappa_bar * d.ops.A_dG));
  const Vec P = adg.solve(load.tail(d.ops.n_p));
  const SpMat uu = 2.0 * p.mu * d.ops.A_CR + p.lambda * d.ops.Kdiv;
  Eigen::SimplicialLDLT<SpMat> el(uu);
  const Vec U = el.solve(Vec(load.head(d.ops.n_u) + p.alpha * (d.ops.C * P)));
  Vec x(d.ops.n_u + d.ops.n_p);
  x << U, P;
  return unpack_solution(d.ops, p, x, 0.0);
}

}  // namespace biotcr
