#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "homog/error.hpp"
#include "homog/types.hpp"

namespace homog {

/// First-order symbol b(xi) = sum_l b_l xi_l with constant m x n blocks.
///
/// Convention: the operator is b(D) with D = -i grad. The solvers work with
/// the real-derivative form B = sum_l b_l d_l, so b(D) = -i B and every
/// periodic corrector is stored as Phi = -i Lambda. All norms and products
/// used downstream are unchanged by that phase.
struct DifferentialSymbol {
  std::string name;
  int d = 0;
  int m = 0;
  int n = 0;
  std::vector<MatrixXc> b;
  /// Gaarding constants (k1, k2); supplied per symbol, reported only.
  std::pair<double, double> garding{1.0, 0.0};
  /// True when b_l = e_l (x) 1_n, i.e. b(D)u is the plain gradient of u.
  bool gradient_type = false;
};

inline DifferentialSymbol make_symbol(std::string name, std::vector<MatrixXc> blocks,
                                      std::pair<double, double> garding = {1.0, 0.0}) {
  require(!blocks.empty() && blocks.size() <= 2, ErrorCode::InvalidArgument,
          "symbol needs 1 or 2 coefficient blocks");
  DifferentialSymbol s;
  s.name = std::move(name);
  s.d = static_cast<int>(blocks.size());
  s.m = static_cast<int>(blocks[0].rows());
  s.n = static_cast<int>(blocks[0].cols());
  for (const auto& blk : blocks)
    require(blk.rows() == s.m && blk.cols() == s.n, ErrorCode::InvalidArgument,
            "symbol blocks must share one shape");
  require(s.m >= s.n, ErrorCode::InvalidArgument, "symbol requires m >= n");
  require(s.m <= 4 && s.n <= 2, ErrorCode::InvalidArgument, "symbol blocks are limited to 4 x 2");
  s.b = std::move(blocks);
  s.garding = garding;
  return s;
}

/// Gradient of an n-component field in d dimensions (m = d n).
inline DifferentialSymbol gradient_symbol(int d, int n = 1) {
  std::vector<MatrixXc> blocks;
  for (int l = 0; l < d; ++l) {
    MatrixXc bl = MatrixXc::Zero(d * n, n);
    for (int k = 0; k < n; ++k) bl(l * n + k, k) = 1.0;
    blocks.push_back(bl);
  }
  auto s = make_symbol(n == 1 ? "gradient" : "gradient-system", std::move(blocks), {1.0, 0.0});
  s.gradient_type = true;
  return s;
}

/// Plane elasticity in symmetric (Mandel) Voigt form: b(D)u lists
/// (e11, e22, sqrt(2) e12) of the strain of u, so b(xi)^* b(xi) has
/// eigenvalues 1/2 and 1 on the unit circle. The Gaarding pair is a nominal
/// value that is only echoed into reports.
inline DifferentialSymbol elasticity2d_symbol() {
  const double r = 1.0 / std::sqrt(2.0);
  MatrixXc b1 = MatrixXc::Zero(3, 2);
  MatrixXc b2 = MatrixXc::Zero(3, 2);
  b1(0, 0) = 1.0;
  b1(2, 1) = r;
  b2(1, 1) = 1.0;
  b2(2, 0) = r;
  return make_symbol("elasticity2d", {b1, b2}, {0.25, 1.0});
}

inline DifferentialSymbol symbol_registry(const std::string& name, int d) {
  if (name == "gradient") return gradient_symbol(d, 1);
  if (name == "gradient-system") return gradient_symbol(d, 2);
  if (name == "elasticity2d") {
    require(d == 2, ErrorCode::InvalidArgument, "elasticity2d needs a 2D lattice");
    return elasticity2d_symbol();
  }
  fail(ErrorCode::UnknownModel, "unknown symbol '" + name + "'");
}

inline std::vector<std::string> symbol_names() { return {"gradient", "gradient-system", "elasticity2d"}; }

inline SmallMat symbol_at(const DifferentialSymbol& sym, std::span<const cplx> xi) {
  require(static_cast<int>(xi.size()) == sym.d, ErrorCode::InvalidArgument, "xi has wrong dimension");
  SmallMat out = SmallMat::Zero(sym.m, sym.n);
  for (int l = 0; l < sym.d; ++l) out += sym.b[l] * xi[l];
  return out;
}

inline SmallMat symbol_at(const DifferentialSymbol& sym, std::span<const double> xi) {
  std::vector<cplx> z(xi.begin(), xi.end());
  return symbol_at(sym, std::span<const cplx>(z));
}

struct EllipticityReport {
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  double c0 = std::numeric_limits<double>::quiet_NaN();
  double c1 = std::numeric_limits<double>::quiet_NaN();
  bool complex_rank_ok = false;
  double min_real_singular_ratio = 0.0;
  double min_complex_singular_ratio = 0.0;
  std::pair<double, double> garding{1.0, 0.0};

  /// Fills c0 = alpha0 / |g^{-1}|_inf and c1 = alpha1 |g|_inf.
  void attach_bounds(double g_sup, double ginv_sup) {
    c0 = alpha0 / ginv_sup;
    c1 = alpha1 * g_sup;
  }
};

namespace detail {

inline Eigen::VectorXd singular_values(const SmallMat& m) {
  Eigen::JacobiSVD<MatrixXc> svd{MatrixXc(m)};
  return svd.singularValues();
}

// sigma_min(b(theta)) / scale on the real unit circle, theta = (cos t, sin t).
inline double real_ratio(const DifferentialSymbol& sym, double t, double scale) {
  const double xi[2] = {std::cos(t), std::sin(t)};
  auto sv = singular_values(symbol_at(sym, std::span<const double>(xi, 2)));
  return sv(sv.size() - 1) / scale;
}

}  // namespace detail

/// Estimates alpha0/alpha1 of b(theta)^* b(theta) over `samples` unit
/// directions (rotated by `rotation` radians in 2D) and checks the real and
/// complex rank conditions. Throws RankDeficient when the real rank fails.
inline EllipticityReport validate_symbol(const DifferentialSymbol& sym, int samples, double rotation = 0.0,
                                         std::uint64_t seed = 7) {
  require(samples >= 100, ErrorCode::InvalidArgument, "validate_symbol needs at least 100 samples");
  EllipticityReport rep;
  rep.garding = sym.garding;
  rep.alpha0 = std::numeric_limits<double>::infinity();
  rep.alpha1 = 0.0;

  double scale = 0.0;
  for (const auto& bl : sym.b) scale = std::max(scale, detail::singular_values(bl)(0));
  require(scale > 0.0, ErrorCode::RankDeficient, "symbol is identically zero");

  auto visit = [&](std::span<const double> theta) {
    SmallMat bt = symbol_at(sym, theta);
    Eigen::SelfAdjointEigenSolver<MatrixXc> es(MatrixXc(bt.adjoint() * bt));
    rep.alpha0 = std::min(rep.alpha0, es.eigenvalues()(0));
    rep.alpha1 = std::max(rep.alpha1, es.eigenvalues()(sym.n - 1));
  };

  double worst_real = std::numeric_limits<double>::infinity();
  if (sym.d == 1) {
    const double th[1] = {1.0};
    visit(std::span<const double>(th, 1));
    worst_real = detail::singular_values(sym.b[0]).minCoeff() / scale;
  } else {
    double worst_t = rotation;
    const double dt = kPi / samples;
    for (int k = 0; k < samples; ++k) {
      const double t = rotation + k * dt;
      const double th[2] = {std::cos(t), std::sin(t)};
      visit(std::span<const double>(th, 2));
      const double r = detail::real_ratio(sym, t, scale);
      if (r < worst_real) {
        worst_real = r;
        worst_t = t;
      }
    }
    // Golden-section refinement around the worst sample.
    double lo = worst_t - dt, hi = worst_t + dt;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = detail::real_ratio(sym, x1, scale), f2 = detail::real_ratio(sym, x2, scale);
    for (int it = 0; it < 200; ++it) {
      if (f1 < f2) {
        hi = x2; x2 = x1; f2 = f1; x1 = hi - gr * (hi - lo); f1 = detail::real_ratio(sym, x1, scale);
      } else {
        lo = x1; x1 = x2; f1 = f2; x2 = lo + gr * (hi - lo); f2 = detail::real_ratio(sym, x2, scale);
      }
    }
    worst_real = std::min({worst_real, f1, f2});
    const double th[2] = {std::cos(x1), std::sin(x1)};
    visit(std::span<const double>(th, 2));
  }
  rep.min_real_singular_ratio = worst_real;
  if (!(worst_real > 1e-10))
    fail(ErrorCode::RankDeficient, "rank b(theta) < n for some real unit theta");

  // Complex rank: random unit xi in C^d, each refined by alternating
  // minimisation of |b(xi) v| over unit xi and unit v.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double worst_c = std::numeric_limits<double>::infinity();
  const int starts = std::max(32, samples / 8);
  for (int s = 0; s < starts; ++s) {
    VectorXc xi(sym.d);
    for (int l = 0; l < sym.d; ++l) xi(l) = cplx(normal(rng), normal(rng));
    xi.normalize();
    for (int it = 0; it < 30; ++it) {
      std::vector<cplx> z(xi.data(), xi.data() + sym.d);
      SmallMat bx = symbol_at(sym, std::span<const cplx>(z));
      Eigen::JacobiSVD<MatrixXc> svd(MatrixXc(bx), Eigen::ComputeFullV);
      const double sigma = svd.singularValues()(sym.n - 1);
      worst_c = std::min(worst_c, sigma / scale);
      VectorXc v = svd.matrixV().col(sym.n - 1);
      // |b(xi) v|^2 = xi^* G xi with G_{lk} = (b_l v)^* (b_k v).
      MatrixXc g(sym.d, sym.d);
      for (int l = 0; l < sym.d; ++l)
        for (int k = 0; k < sym.d; ++k) g(l, k) = (sym.b[l] * v).dot(sym.b[k] * v);
      Eigen::SelfAdjointEigenSolver<MatrixXc> es(g);
      // dot() conjugates its first argument, so g(l,k) = (b_l v)^H (b_k v)
      // and the minimiser over the conjugated unit vector is conj(eigvec).
      xi = es.eigenvectors().col(0).conjugate();
      worst_c = std::min(worst_c, std::sqrt(std::max(0.0, es.eigenvalues()(0))) / scale);
    }
  }
  // Unit directions of the form (1, +-i)/sqrt(2) are checked explicitly.
  if (sym.d == 2) {
    for (double sgn : {1.0, -1.0}) {
      const cplx z[2] = {cplx(1.0 / std::sqrt(2.0), 0.0), cplx(0.0, sgn / std::sqrt(2.0))};
      auto sv = detail::singular_values(symbol_at(sym, std::span<const cplx>(z, 2)));
      worst_c = std::min(worst_c, sv(sv.size() - 1) / scale);
    }
  }
  rep.min_complex_singular_ratio = worst_c;
  rep.complex_rank_ok = worst_c > 1e-10;
  return rep;
}

}  // namespace homog
