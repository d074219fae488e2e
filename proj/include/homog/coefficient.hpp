#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "homog/error.hpp"
#include "homog/lattice.hpp"
#include "homog/types.hpp"

namespace homog {

/// Sampler signature: fractional cell coordinates t (x = sum t_j a_j) to a
/// Hermitian m x m matrix. Must be 1-periodic in every t_j and thread safe.
using CoefficientSampler = std::function<SmallMat(const Point& t)>;

struct CoefficientBounds {
  double g_sup = 0.0;     // |g|_inf
  double ginv_sup = 0.0;  // |g^{-1}|_inf
  double min_eig = 0.0;
  double max_eig = 0.0;
  double hermitian_defect = 0.0;
};

/// A Gamma-periodic Hermitian positive definite matrix field given through
/// an analytic sampler in fractional coordinates.
class PeriodicCoefficient {
 public:
  PeriodicCoefficient(std::string name, int m, CoefficientSampler sampler, Lattice lattice,
                      int bounds_grid = 64, bool scalar_real = false)
      : name_(std::move(name)), m_(m), sampler_(std::move(sampler)), lattice_(std::move(lattice)),
        scalar_real_(scalar_real) {
    bounds_ = compute_bounds(bounds_grid);
  }

  const std::string& name() const { return name_; }
  int m() const { return m_; }
  const Lattice& lattice() const { return lattice_; }
  const CoefficientBounds& bounds() const { return bounds_; }
  /// True when g is a real multiple of the identity at every point.
  bool scalar_real() const { return scalar_real_; }

  SmallMat at_fractional(const Point& t) const { return sampler_(t); }

  /// g(y) at a physical cell point y.
  SmallMat at(const Point& y) const { return sampler_(lattice_.to_fractional(y)); }

  /// g(x / eps).
  SmallMat at_scaled(const Point& x, double eps) const {
    return at(Point{x[0] / eps, x[1] / eps});
  }

  PeriodicCoefficient scaled_by(double s) const {
    auto inner = sampler_;
    return PeriodicCoefficient(name_ + "*" + std::to_string(s), m_,
                               [inner, s](const Point& t) -> SmallMat { return SmallMat(s * inner(t)); },
                               lattice_, 64, scalar_real_);
  }

  /// Uniform N^d grid of fractional sample points (cell-centred).
  std::vector<Point> cell_grid(int n) const {
    std::vector<Point> pts;
    const int d = lattice_.dim();
    const int ny = d == 2 ? n : 1;
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < n; ++i)
        pts.push_back(Point{(i + 0.5) / n, d == 2 ? (j + 0.5) / n : 0.0});
    return pts;
  }

 private:
  CoefficientBounds compute_bounds(int n) const {
    CoefficientBounds b;
    b.min_eig = std::numeric_limits<double>::infinity();
    // Cell-centred and vertex-aligned samples; the latter hit layer values
    // exactly at phase boundaries.
    std::vector<Point> pts = cell_grid(n);
    const int d = lattice_.dim();
    for (int j = 0; j < (d == 2 ? n : 1); ++j)
      for (int i = 0; i < n; ++i) pts.push_back(Point{double(i) / n, d == 2 ? double(j) / n : 0.0});
    for (const auto& t : pts) {
      SmallMat g = sampler_(t);
      require(g.rows() == m_ && g.cols() == m_, ErrorCode::InvalidArgument,
              "coefficient sampler returned a matrix of the wrong size");
      b.hermitian_defect = std::max(b.hermitian_defect, (g - g.adjoint()).cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<MatrixXc> es(MatrixXc(0.5 * (g + g.adjoint())));
      b.min_eig = std::min(b.min_eig, es.eigenvalues()(0));
      b.max_eig = std::max(b.max_eig, es.eigenvalues()(m_ - 1));
    }
    require(b.min_eig > 0.0, ErrorCode::NonPositivePhase, "coefficient is not positive definite");
    b.g_sup = b.max_eig;
    b.ginv_sup = 1.0 / b.min_eig;
    return b;
  }

  std::string name_;
  int m_;
  CoefficientSampler sampler_;
  Lattice lattice_;
  bool scalar_real_;
  CoefficientBounds bounds_;
};

/// Parameters for registry coefficients; unknown names are rejected by the
/// registry itself.
using CoefficientParams = std::map<std::string, double>;

namespace detail {

inline double param(const CoefficientParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline double frac(double t) { return t - std::floor(t); }

inline SmallMat scalar_identity(double s, int m) {
  SmallMat g = SmallMat::Identity(m, m);
  return SmallMat(g * s);
}

inline void require_phase(double v, const std::string& what) {
  require(std::isfinite(v) && v > 0.0, ErrorCode::NonPositivePhase, what + " must be > 0");
}

inline void require_fraction(double f) {
  require(std::isfinite(f) && f > 0.0 && f < 1.0, ErrorCode::InvalidFraction,
          "phase fraction must lie in (0, 1)");
}

}  // namespace detail

inline std::vector<std::string> coefficient_names() {
  return {"constant", "layered1d", "layered2d", "trig2d", "checkerboard2d", "crossdiag2d"};
}

/// Builds a registry coefficient of size m x m on the given lattice.
///
///   constant        value                          g = value * I
///   layered1d       g_minus, g_plus, fraction      g_minus where frac(t1) < fraction
///   layered2d       g_minus, g_plus, fraction      same profile in t1, constant in t2
///   trig2d          mean, amplitude, amplitude2    mean + amplitude sin(2 pi t1) + amplitude2 sin(2 pi t2)
///   checkerboard2d  g_low, g_high, sharpness       tanh-smoothed checkerboard
///   crossdiag2d     mean, amplitude                diag(a(t2), a(t1)), m = 2
inline PeriodicCoefficient coefficient_registry(const std::string& name, const CoefficientParams& params,
                                                const Lattice& lat, int m) {
  using detail::param;
  const int d = lat.dim();
  if (name == "constant") {
    const double v = param(params, "value", 1.0);
    detail::require_phase(v, "value");
    return PeriodicCoefficient(name, m, [v, m](const Point&) { return detail::scalar_identity(v, m); }, lat, 8,
                               true);
  }
  if (name == "layered1d" || name == "layered2d") {
    require(name == "layered1d" ? d == 1 : d == 2, ErrorCode::InvalidArgument,
            name + " does not match the lattice dimension");
    const double gm = param(params, "g_minus", 1.0), gp = param(params, "g_plus", 4.0);
    const double f = param(params, "fraction", 0.5);
    detail::require_phase(gm, "g_minus");
    detail::require_phase(gp, "g_plus");
    detail::require_fraction(f);
    return PeriodicCoefficient(
        name, m,
        [gm, gp, f, m](const Point& t) { return detail::scalar_identity(detail::frac(t[0]) < f ? gm : gp, m); },
        lat, 64, true);
  }
  if (name == "trig2d") {
    require(d == 2, ErrorCode::InvalidArgument, "trig2d needs a 2D lattice");
    const double mean = param(params, "mean", 2.0), a1 = param(params, "amplitude", 1.0);
    const double a2 = param(params, "amplitude2", 0.0);
    require(mean - std::abs(a1) - std::abs(a2) > 0.0, ErrorCode::NonPositivePhase,
            "trig2d needs mean > |amplitude| + |amplitude2|");
    return PeriodicCoefficient(
        name, m,
        [mean, a1, a2, m](const Point& t) {
          return detail::scalar_identity(
              mean + a1 * std::sin(2.0 * kPi * t[0]) + a2 * std::sin(2.0 * kPi * t[1]), m);
        },
        lat, 64, true);
  }
  if (name == "checkerboard2d") {
    require(d == 2, ErrorCode::InvalidArgument, "checkerboard2d needs a 2D lattice");
    const double lo = param(params, "g_low", 1.0), hi = param(params, "g_high", 4.0);
    const double sharp = param(params, "sharpness", 8.0);
    detail::require_phase(lo, "g_low");
    detail::require_phase(hi, "g_high");
    require(sharp > 0.0, ErrorCode::InvalidArgument, "sharpness must be > 0");
    return PeriodicCoefficient(
        name, m,
        [lo, hi, sharp, m](const Point& t) {
          const double s = std::tanh(sharp * std::sin(2.0 * kPi * t[0]) * std::sin(2.0 * kPi * t[1]));
          return detail::scalar_identity(0.5 * (lo + hi) + 0.5 * (hi - lo) * s, m);
        },
        lat, 64, true);
  }
  if (name == "crossdiag2d") {
    require(d == 2 && m == 2, ErrorCode::InvalidArgument, "crossdiag2d needs d = 2 and m = 2");
    const double mean = param(params, "mean", 2.0), a = param(params, "amplitude", 1.0);
    require(mean - std::abs(a) > 0.0, ErrorCode::NonPositivePhase, "crossdiag2d needs mean > |amplitude|");
    return PeriodicCoefficient(
        name, m,
        [mean, a](const Point& t) {
          SmallMat g = SmallMat::Zero(2, 2);
          g(0, 0) = mean + a * std::sin(2.0 * kPi * t[1]);
          g(1, 1) = mean + a * std::cos(2.0 * kPi * t[0]);
          return g;
        },
        lat, 64, false);
  }
  fail(ErrorCode::UnknownModel, "unknown coefficient '" + name + "'");
}

}  // namespace homog
