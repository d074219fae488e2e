#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "homog/corrector.hpp"

namespace homog {

// ---------------------------------------------------------------------------
// Spectral-parameter factors

enum class Regime { Sector, BelowCStar, BelowCFlat, RhoZero };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::Sector: return "sector";
    case Regime::BelowCStar: return "below_c_star";
    case Regime::BelowCFlat: return "below_c_flat";
    case Regime::RhoZero: return "rho_zero";
  }
  return "?";
}

struct ZetaFactors {
  double c_phi = 1.0;  // c(phi) of zeta itself
  double rho = 1.0;
  double angle = 0.0;  // phi, or the argument of zeta - c_ref in the shifted regimes
};

namespace detail {

inline double arg_2pi(cplx z) {
  double a = std::atan2(z.imag(), z.real());
  if (a < 0.0) a += 2.0 * kPi;
  return a;
}

// c(angle)^2 max(1, |w|^{-2}).
inline double rho_of(cplx w) {
  const double c = sector_factor(arg_2pi(w));
  const double r = std::abs(w);
  return r < 1.0 ? c * c / (r * r) : c * c;
}

}  // namespace detail

/// c(phi) for zeta and the regime factor rho:
///   sector        rho = c(phi)^2
///   rho_zero      rho = rho_0(zeta)
///   below_c_star  rho = rho_*(zeta), angle of zeta - c_ref
///   below_c_flat  rho = rho_flat(zeta), angle of zeta - c_ref
inline ZetaFactors zeta_factors(cplx zeta, Regime regime, double c_ref = 0.0) {
  ZetaFactors out;
  const bool real_axis = zeta.imag() == 0.0;
  switch (regime) {
    case Regime::Sector:
    case Regime::RhoZero:
      require(!(real_axis && zeta.real() >= 0.0), ErrorCode::ForbiddenZeta,
              "zeta must lie off the closed positive half-axis");
      break;
    case Regime::BelowCStar:
    case Regime::BelowCFlat:
      require(std::isfinite(c_ref) && c_ref > 0.0, ErrorCode::InvalidArgument, "shifted regimes need c_ref > 0");
      require(!(real_axis && zeta.real() >= c_ref), ErrorCode::ForbiddenZeta,
              "zeta must lie off the half-line [c_ref, inf)");
      break;
  }
  out.angle = detail::arg_2pi(zeta);
  out.c_phi = sector_factor(out.angle);
  switch (regime) {
    case Regime::Sector: out.rho = out.c_phi * out.c_phi; break;
    case Regime::RhoZero: out.rho = detail::rho_of(zeta); break;
    case Regime::BelowCStar:
    case Regime::BelowCFlat:
      out.angle = detail::arg_2pi(zeta - c_ref);
      out.rho = detail::rho_of(zeta - c_ref);
      break;
  }
  return out;
}

/// Envelope shapes the measured errors are compared against.
struct BoundShapes {
  double L2 = 0.0;
  double H1 = 0.0;
  double interior = 0.0;
};

inline BoundShapes bound_shapes(Regime regime, double eps, const SpectralPoint& z, const ZetaFactors& f,
                                double delta = 0.0) {
  BoundShapes s;
  const double c = f.c_phi;
  const double idelta = delta > 0.0 ? 1.0 / delta + 1.0 : 1.0;
  if (regime == Regime::Sector) {
    s.L2 = std::pow(c, 5) * (eps / std::sqrt(z.abs) + eps * eps);
    s.H1 = c * c * std::sqrt(eps) / std::pow(z.abs, 0.25) + std::pow(c, 4) * eps;
    s.interior = std::pow(c, 6) * idelta * eps;
  } else {
    s.L2 = f.rho * eps;
    s.H1 = f.rho * std::sqrt(eps);
    s.interior = f.rho * idelta * eps;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Error metrics

/// Distance from x to the boundary of a bounded mesh domain (infinite on a
/// torus).
inline double boundary_distance(const Mesh& mesh, const Point& x) {
  if (mesh.kind() == MeshKind::Torus) return std::numeric_limits<double>::infinity();
  if (mesh.kind() == MeshKind::Disk) return mesh.radius() - std::hypot(x[0], x[1]);
  const auto& g = mesh.grid();
  const Point gc = mesh.grid_coords(x);
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < mesh.dim(); ++k) {
    const double frac = g.h * std::min(gc[k], g.cells[k] - gc[k]);
    const double scale = mesh.dim() == 1 ? std::abs(g.A(0, 0)) : 1.0 / g.Ainv.row(k).norm();
    best = std::min(best, frac * scale);
  }
  return best;
}

struct ErrorMetrics {
  double L2 = 0.0;        // |u_ref - u_approx|_L2
  double H1 = 0.0;        // |u_ref - (u_approx + corrector)|_H1
  double H1_plain = 0.0;  // |u_ref - u_approx|_H1
  double flux_L2 = 0.0;
  double interior_H1 = 0.0;
};

inline double l2_norm(const Mesh& mesh, const GridField& nodal) {
  const GridField v = quad_values(mesh, nodal);
  const Eigen::VectorXd w = quad_weights(mesh);
  return std::sqrt((w.array() * v.values.rowwise().squaredNorm().array()).sum());
}

/// Quadrature norms of the differences between a reference solution and an
/// approximation (nodal u_approx plus an optional corrector laid out as
/// value | derivatives at quadrature points). The interior norm covers
/// the elements whose nodes all lie at distance >= interior_delta from the
/// boundary.
inline ErrorMetrics error_metrics(const Mesh& mesh, const GridField& u_ref, const GridField& u_approx,
                                  const GridField* corrector = nullptr, const GridField* flux_ref = nullptr,
                                  const GridField* flux_approx = nullptr, double interior_delta = 0.0) {
  u_ref.require_compatible(u_approx);
  require(u_ref.mesh_id == mesh.id(), ErrorCode::MeshMismatch, "fields do not live on this mesh");
  const int n = u_ref.rows, d = mesh.dim(), nq = mesh.quad_per_element();
  if (corrector)
    require(corrector->mesh_id == mesh.id() && corrector->location == FieldLocation::QuadraturePoints &&
                corrector->rows == n && corrector->cols == 1 + d,
            ErrorCode::MeshMismatch, "corrector does not match the mesh");
  if (flux_ref || flux_approx) {
    require(flux_ref && flux_approx, ErrorCode::InvalidArgument, "flux metrics need both fluxes");
    flux_ref->require_compatible(*flux_approx);
    require(flux_ref->mesh_id == mesh.id(), ErrorCode::MeshMismatch, "fluxes do not live on this mesh");
  }
  if (interior_delta > 0.0)
    require(interior_delta > 2.0 * mesh.h_max(), ErrorCode::InvalidArgument, "interior margin must exceed 2h");

  GridField diff = u_ref;
  diff.values -= u_approx.values;
  const GridField v = quad_values(mesh, diff), g = quad_gradients(mesh, diff);
  const Eigen::VectorXd w = quad_weights(mesh);
  ErrorMetrics out;
  double l2 = 0.0, h1 = 0.0, h1p = 0.0, fl = 0.0, in = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    bool inside = interior_delta > 0.0;
    if (inside) {
      const int* en = mesh.element_nodes(e);
      for (int a = 0; a < mesh.nodes_per_element() && inside; ++a)
        inside = boundary_distance(mesh, mesh.node(en[a])) >= interior_delta - 1e-12;
    }
    for (int q = 0; q < nq; ++q) {
      const Eigen::Index p = static_cast<Eigen::Index>(e) * nq + q;
      double val = 0.0, grad = 0.0, valc = 0.0, gradc = 0.0;
      for (int r = 0; r < n; ++r) {
        const cplx dv = v.values(p, r);
        val += std::norm(dv);
        valc += std::norm(corrector ? dv - corrector->at(p, r, 0) : dv);
        for (int l = 0; l < d; ++l) {
          const cplx dg = g.at(p, r, l);
          grad += std::norm(dg);
          gradc += std::norm(corrector ? dg - corrector->at(p, r, 1 + l) : dg);
        }
      }
      l2 += w(p) * val;
      h1p += w(p) * (val + grad);
      h1 += w(p) * (valc + gradc);
      if (inside) in += w(p) * (valc + gradc);
      if (flux_ref) fl += w(p) * (flux_ref->values.row(p) - flux_approx->values.row(p)).squaredNorm();
    }
  }
  out.L2 = std::sqrt(l2);
  out.H1 = std::sqrt(h1);
  out.H1_plain = std::sqrt(h1p);
  out.flux_L2 = std::sqrt(fl);
  out.interior_H1 = std::sqrt(in);
  return out;
}

// ---------------------------------------------------------------------------
// Random probe ensembles

struct EnsembleSpec {
  int size = 16;
  std::uint64_t seed = 20240611;
  int cutoff = 4;  // Fourier modes |k|_inf <= cutoff over the domain extent
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of ensemble member `index`; independent of every other member.
inline std::uint64_t member_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(root ^ splitmix64(index + 1));
}

/// Position of x rescaled to [0, 1]^d over the domain extent. On a torus
/// this is one full period, so the Fourier modes below are periodic.
inline Point unit_coords(const Mesh& mesh, const std::pair<Point, Point>& box, const Point& x) {
  if (mesh.structured()) {
    const Point gc = mesh.grid_coords(x);
    const auto& g = mesh.grid();
    return Point{gc[0] / g.cells[0], mesh.dim() == 2 ? gc[1] / g.cells[1] : 0.0};
  }
  const auto& [lo, hi] = box;
  return Point{(x[0] - lo[0]) / (hi[0] - lo[0]), (x[1] - lo[1]) / (hi[1] - lo[1])};
}

/// Band-limited complex Gaussian field: independent standard complex
/// normal amplitudes on every mode |k|_inf <= cutoff, normalized to unit L2
/// norm. The field does not depend on the mesh resolution.
inline GridField random_smooth_field(const Mesh& mesh, int n, std::uint64_t seed, int cutoff) {
  require(cutoff >= 1 && n >= 1, ErrorCode::InvalidArgument, "invalid ensemble parameters");
  const int d = mesh.dim();
  const int K = 2 * cutoff + 1;
  const int modes = d == 2 ? K * K : K;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXc amp(modes, n);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < modes; ++k) {
      const double re = nd(rng), im = nd(rng);
      amp(k, r) = cplx(re, im);
    }
  GridField out(mesh.id(), FieldLocation::Nodes, n, 1, mesh.num_nodes());
  std::vector<cplx> e1(K), e2(K);
  const auto box = mesh.bounding_box();
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    const Point s = unit_coords(mesh, box, mesh.node(i));
    for (int k = 0; k < K; ++k) {
      e1[k] = std::polar(1.0, 2.0 * kPi * (k - cutoff) * s[0]);
      e2[k] = std::polar(1.0, 2.0 * kPi * (k - cutoff) * s[1]);
    }
    for (int r = 0; r < n; ++r) {
      cplx acc = 0.0;
      if (d == 1) {
        for (int k = 0; k < K; ++k) acc += amp(k, r) * e1[k];
      } else {
        for (int k2 = 0; k2 < K; ++k2) {
          cplx row = 0.0;
          for (int k1 = 0; k1 < K; ++k1) row += amp(k2 * K + k1, r) * e1[k1];
          acc += row * e2[k2];
        }
      }
      out.values(i, r) = acc;
    }
  }
  out.values /= l2_norm(mesh, out);
  return out;
}

/// Members 0 .. size-1 of the ensemble; with a projector the members are
/// projected off the kernel and renormalized.
inline std::vector<GridField> make_ensemble(const Mesh& mesh, int n, const EnsembleSpec& spec,
                                            const KernelProjector* kp = nullptr) {
  require(spec.size >= 1, ErrorCode::InvalidArgument, "ensemble size must be positive");
  std::vector<GridField> out;
  out.reserve(spec.size);
  for (int k = 0; k < spec.size; ++k) {
    GridField f = random_smooth_field(mesh, n, member_seed(spec.seed, static_cast<std::uint64_t>(k)), spec.cutoff);
    if (kp) {
      f = kp->project_perp(f);
      f.values /= l2_norm(mesh, f);
    }
    out.push_back(std::move(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rate fits and envelopes

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  double ci95 = 0.0;  // half-width of the 95% interval of the slope
  int points = 0;
};

/// Least-squares line through (x, y), in log-log coordinates by default.
/// x must be positive, strictly monotone and geometric.
inline RateFit rate_fit(const std::vector<std::pair<double, double>>& pts, bool log_log = true, int min_points = 4) {
  require(static_cast<int>(pts.size()) >= std::max(min_points, 3), ErrorCode::TooFewPoints,
          "rate fit needs at least " + std::to_string(std::max(min_points, 3)) + " points");
  const std::size_t N = pts.size();
  std::vector<double> X(N), Y(N);
  for (std::size_t i = 0; i < N; ++i) {
    if (log_log)
      require(pts[i].first > 0.0 && pts[i].second > 0.0, ErrorCode::InvalidArgument,
              "log-log fit needs positive data");
    X[i] = log_log ? std::log(pts[i].first) : pts[i].first;
    Y[i] = log_log ? std::log(pts[i].second) : pts[i].second;
  }
  const double step = X[1] - X[0];
  require(step != 0.0, ErrorCode::InvalidArgument, "abscissae must be strictly monotone");
  for (std::size_t i = 1; i < N; ++i) {
    require((X[i] - X[i - 1]) * step > 0.0, ErrorCode::InvalidArgument, "abscissae must be strictly monotone");
    if (log_log)
      require(std::abs(X[i] - X[i - 1] - step) <= 1e-6 * std::abs(step), ErrorCode::InvalidArgument,
              "abscissae must form a geometric sequence");
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    mx += X[i];
    my += Y[i];
  }
  mx /= N;
  my /= N;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    sxx += (X[i] - mx) * (X[i] - mx);
    sxy += (X[i] - mx) * (Y[i] - my);
    syy += (Y[i] - my) * (Y[i] - my);
  }
  RateFit f;
  f.points = static_cast<int>(N);
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    const double r = Y[i] - f.intercept - f.slope * X[i];
    sse += r * r;
  }
  f.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  const double dof = static_cast<double>(N) - 2.0;
  const double t = boost::math::quantile(boost::math::complement(boost::math::students_t(dof), 0.025));
  f.ci95 = t * std::sqrt(sse / dof / sxx);
  return f;
}

struct EnvelopeRow {
  double eps = 0.0;
  SpectralPoint z;
  double err = 0.0;
};

/// Named two-parameter envelope shape(eps, zeta).
struct EnvelopeShape {
  std::string name;
  std::function<double(double, const SpectralPoint&)> value;

  /// c(phi)^5 (|zeta|^{-1/2} eps + eps^2)
  static EnvelopeShape sector_L2() {
    return {"c^5(|z|^-1/2 eps + eps^2)", [](double eps, const SpectralPoint& z) {
              return std::pow(z.c_phi, 5) * (eps / std::sqrt(z.abs) + eps * eps);
            }};
  }
  /// c(phi)^2 |zeta|^{-1/4} eps^{1/2} + c(phi)^4 eps
  static EnvelopeShape sector_H1() {
    return {"c^2|z|^-1/4 eps^1/2 + c^4 eps", [](double eps, const SpectralPoint& z) {
              return z.c_phi * z.c_phi * std::sqrt(eps) / std::pow(z.abs, 0.25) + std::pow(z.c_phi, 4) * eps;
            }};
  }
  static EnvelopeShape power(double a) {
    return {"eps^" + std::to_string(a), [a](double eps, const SpectralPoint&) { return std::pow(eps, a); }};
  }
};

struct EnvelopeResult {
  std::string shape;
  double fitted_C = 0.0;
  double spread = 0.0;  // (max - min) / median of err / shape
  double min_ratio = 0.0;
  double median_ratio = 0.0;
  int rows = 0;
};

inline EnvelopeResult envelope_check(const std::vector<EnvelopeRow>& rows, const EnvelopeShape& shape) {
  std::vector<double> eps, mods;
  auto add = [](std::vector<double>& v, double x) {
    for (double y : v)
      if (std::abs(x - y) <= 1e-12 * std::max(std::abs(x), std::abs(y))) return;
    v.push_back(x);
  };
  for (const auto& r : rows) {
    add(eps, r.eps);
    add(mods, r.z.abs);
    require(!rows.empty() && std::abs(r.z.phi - rows.front().z.phi) <= 1e-12, ErrorCode::InsufficientGrid,
            "envelope rows must share one ray");
  }
  require(eps.size() >= 3 && mods.size() >= 3, ErrorCode::InsufficientGrid,
          "envelope needs at least 3 eps values and 3 |zeta| values");
  std::vector<double> ratio;
  ratio.reserve(rows.size());
  for (const auto& r : rows) ratio.push_back(r.err / shape.value(r.eps, r.z));
  std::vector<double> sorted = ratio;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t N = sorted.size();
  const double median = N % 2 ? sorted[N / 2] : 0.5 * (sorted[N / 2 - 1] + sorted[N / 2]);
  EnvelopeResult out;
  out.shape = shape.name;
  out.fitted_C = sorted.back();
  out.min_ratio = sorted.front();
  out.median_ratio = median;
  out.spread = (sorted.back() - sorted.front()) / median;
  out.rows = static_cast<int>(N);
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class DomainKind { Interval, Square, Disk, Torus };

inline const char* to_string(DomainKind k) {
  switch (k) {
    case DomainKind::Interval: return "interval";
    case DomainKind::Square: return "square";
    case DomainKind::Disk: return "disk";
    case DomainKind::Torus: return "torus";
  }
  return "?";
}

struct DomainSpec {
  DomainKind kind = DomainKind::Interval;
  double a = 0.0, b = 1.0;  // interval (physical)
  double size = 1.0;        // square side, fractional units
  double radius = 1.0;      // disk
  double periods = 1.0;     // torus side, fractional units
};

/// zeta given directly, as c_ref + value, or as c_ref * value.
struct ZetaSpec {
  enum class Mode { Absolute, ShiftFromRef, ScaleOfRef };
  Mode mode = Mode::Absolute;
  cplx value = -1.0;

  cplx resolve(double c_ref) const {
    switch (mode) {
      case Mode::Absolute: return value;
      case Mode::ShiftFromRef: return c_ref + value;
      case Mode::ScaleOfRef: return c_ref * value;
    }
    return value;
  }
};

struct SweepSpec {
  std::string name = "sweep";
  std::shared_ptr<const CellSolution> cell;
  DomainSpec domain;
  BoundaryCondition bc = BoundaryCondition::Dirichlet;
  Regime regime = Regime::Sector;
  std::vector<double> eps;
  std::vector<ZetaSpec> zetas;
  EnsembleSpec ensemble;
  double ratio = 16.0;  // eps / h_max
  Smoothing smoothing = Smoothing::Steklov;
  double interior_delta = 0.0;
  bool constant_flux = false;
  bool halving_check = true;
  SolverLimits limits;
  int threads = 1;
};

struct ProbeResult {
  double max_ratio_L2 = 0.0;
  double max_ratio_H1 = 0.0;
  double max_ratio_H1_plain = 0.0;
  double max_ratio_flux = 0.0;
  double max_ratio_interior = 0.0;
  int argmax_F_id = -1;
  int size = 0;
  double max_residual = 0.0;
};

struct SweepRow {
  int id = 0;
  BoundaryCondition bc = BoundaryCondition::Dirichlet;
  double eps = 0.0;
  SpectralPoint z;
  ZetaFactors factors;
  int ensemble_size = 0;
  std::uint64_t seed = 0;
  double h = 0.0;
  long ndof = 0;
  ProbeResult probe;
  BoundShapes shape;
  double C_L2 = 0.0;
  double C_H1 = 0.0;
  std::string status = "ok";
  double seconds = 0.0;

  bool ok() const { return status == "ok"; }
};

struct RateFitEntry {
  std::string metric;
  std::string axis;  // "eps" or "zeta"
  double fixed = 0.0;
  RateFit fit;
};

struct HalvingCheck {
  bool performed = false;
  double eps = 0.0;
  double change_L2 = 0.0;
  double change_H1 = 0.0;
  bool ok = false;
  std::string status;
};

struct SweepReport {
  std::string name;
  std::vector<SweepRow> rows;
  std::vector<RateFitEntry> fits;
  std::map<std::string, EnvelopeResult> envelopes;
  std::string envelope_status;
  HalvingCheck halving;
  double c_ref = std::numeric_limits<double>::quiet_NaN();
  int kernel_dim = 0;
  double failed_fraction = 0.0;
  double seconds = 0.0;
};

/// Everything needed for all zeta at one eps: the mesh, both systems, the
/// kernel projector (Neumann kernel regime), the extension and the probes.
struct Stage {
  double eps = 0.0;
  double ratio = 0.0;
  std::shared_ptr<const Mesh> mesh;
  EllipticSystem sys_eps;
  EllipticSystem sys_eff;
  std::optional<KernelProjector> kp;
  std::optional<ExtensionOperator> ext;
  std::vector<GridField> ensemble;
};

inline double lattice_max_edge(const Lattice& lat) {
  double a = 0.0;
  for (int j = 0; j < lat.dim(); ++j) a = std::max(a, lat.basis().col(j).norm());
  return a;
}

/// Domain mesh with h_max <= eps / ratio. Structured grids use a fractional
/// spacing eps / s with integer s so that the eps-cells are unions of
/// elements.
inline std::shared_ptr<const Mesh> domain_mesh(const SweepSpec& spec, double eps, double ratio) {
  const Lattice& lat = spec.cell->coef->lattice();
  const double amax = lattice_max_edge(lat);
  const int s = static_cast<int>(std::ceil(ratio * amax - 1e-9));
  const double hf = eps / s;
  auto cells_for = [&](double extent) {
    const double c = extent / hf;
    const int ci = static_cast<int>(std::lround(c));
    require(ci >= 2 && std::abs(c - ci) <= 1e-8 * c, ErrorCode::IncommensurateEps,
            "domain extent is not a multiple of eps / " + std::to_string(s));
    return ci;
  };
  const DomainSpec& D = spec.domain;
  switch (D.kind) {
    case DomainKind::Interval: {
      require(lat.dim() == 1, ErrorCode::InvalidArgument, "interval domains need d = 1");
      const int cells = cells_for((D.b - D.a) / std::abs(lat.basis()(0, 0)));
      return std::make_shared<Mesh>(Mesh::interval(lat, D.a, D.b, cells, "domain"));
    }
    case DomainKind::Square: {
      require(lat.dim() == 2, ErrorCode::InvalidArgument, "square domains need d = 2");
      const int cells = cells_for(D.size);
      return std::make_shared<Mesh>(Mesh::box(lat, Point{0.0, 0.0}, hf, {cells, cells}, "domain"));
    }
    case DomainKind::Torus: {
      const int cells = cells_for(D.periods);
      return std::make_shared<Mesh>(Mesh::torus(lat, D.periods, cells, "domain"));
    }
    case DomainKind::Disk:
      require(lat.dim() == 2, ErrorCode::InvalidArgument, "disk domains need d = 2");
      return std::make_shared<Mesh>(Mesh::disk(D.radius, eps / ratio, "domain"));
  }
  fail(ErrorCode::InvalidArgument, "unknown domain kind");
}

inline bool uses_kernel(const SweepSpec& spec) { return spec.regime == Regime::BelowCFlat; }

inline Stage build_stage(const SweepSpec& spec, double eps, double ratio) {
  require(spec.cell != nullptr, ErrorCode::InvalidArgument, "sweep needs a cell solution");
  const CellSolution& cs = *spec.cell;
  Stage st;
  st.eps = eps;
  st.ratio = ratio;
  st.mesh = domain_mesh(spec, eps, ratio);
  SolverLimits lim = spec.limits;
  lim.min_scale_ratio = std::min(lim.min_scale_ratio, ratio);
  st.sys_eps = assemble_system(*cs.coef, cs.sym, st.mesh, eps, spec.bc, lim);
  st.sys_eff = assemble_effective(cs.g0, cs.sym, st.mesh, spec.bc);
  if (uses_kernel(spec)) {
    require(spec.bc == BoundaryCondition::Neumann, ErrorCode::InvalidArgument,
            "the below_c_flat regime needs Neumann conditions");
    st.kp = kernel_projector(cs.sym, st.mesh);
  }
  if (spec.smoothing == Smoothing::Steklov && st.mesh->kind() != MeshKind::Torus) {
    const Lattice& lat = cs.coef->lattice();
    double span = 0.0;
    for (int j = 0; j < lat.dim(); ++j) span += lat.basis().col(j).norm();
    const double margin = eps * span + 2.0 * st.mesh->h_max();
    const int s = static_cast<int>(std::ceil(ratio * lattice_max_edge(lat) - 1e-9));
    st.ext = make_extension(st.mesh, margin, &lat, eps / s);
  }
  st.ensemble = make_ensemble(*st.mesh, cs.n(), spec.ensemble, st.kp ? &*st.kp : nullptr);
  return st;
}

/// Empirical operator-norm lower bounds at one (eps, zeta): the maximum over
/// the ensemble of |error| / |F| for every metric.
inline ProbeResult operator_norm_probe(const SweepSpec& spec, const Stage& st, const SpectralPoint& z) {
  const CellSolution& cs = *spec.cell;
  std::vector<SolveResult> ue, u0;
  if (st.kp) {
    ue = KernelReducedResolvent(st.sys_eps, *st.kp, z).solve(st.ensemble);
    u0 = KernelReducedResolvent(st.sys_eff, *st.kp, z, false).solve(st.ensemble);
  } else {
    ue = Resolvent(st.sys_eps, z).solve(st.ensemble);
    u0 = Resolvent(st.sys_eff, z, false).solve(st.ensemble);
  }
  check_smoothing(cs, spec.smoothing);
  const ExtensionOperator* ext = st.ext ? &*st.ext : nullptr;
  const Mesh& mesh = *st.mesh;
  ProbeResult pr;
  pr.size = static_cast<int>(st.ensemble.size());
  for (std::size_t k = 0; k < st.ensemble.size(); ++k) {
    const SymbolField sf = smoothed_symbol_field(cs.sym, st.mesh, u0[k].u, st.eps, spec.smoothing, ext);
    const GridField corr = corrector_from_symbol_field(cs, mesh, st.eps, sf);
    const GridField flux = flux_from_symbol_field(cs, mesh, st.eps, sf, spec.constant_flux);
    const ErrorMetrics em = error_metrics(mesh, ue[k].u, u0[k].u, &corr, &ue[k].flux, &flux, spec.interior_delta);
    const double fn = l2_norm(mesh, st.ensemble[k]);
    if (em.L2 / fn > pr.max_ratio_L2 || pr.argmax_F_id < 0) {
      pr.max_ratio_L2 = em.L2 / fn;
      pr.argmax_F_id = static_cast<int>(k);
    }
    pr.max_ratio_H1 = std::max(pr.max_ratio_H1, em.H1 / fn);
    pr.max_ratio_H1_plain = std::max(pr.max_ratio_H1_plain, em.H1_plain / fn);
    pr.max_ratio_flux = std::max(pr.max_ratio_flux, em.flux_L2 / fn);
    pr.max_ratio_interior = std::max(pr.max_ratio_interior, em.interior_H1 / fn);
    pr.max_residual = std::max({pr.max_residual, ue[k].residual, u0[k].residual});
  }
  return pr;
}

namespace detail {

inline void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::clamp(threads, 1, std::max(count, 1));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline std::string error_status(const std::exception& e) {
  if (const auto* he = dynamic_cast<const Error*>(&e)) return std::string(to_string(he->code()));
  return "Exception";
}

}  // namespace detail

/// Common lower bound of the eps and effective operators over all sweep eps
/// (c_* for Dirichlet, c_flat for Neumann).
inline double sweep_lower_bound(const SweepSpec& spec) {
  double c = std::numeric_limits<double>::infinity();
  for (double eps : spec.eps) {
    const Stage st = build_stage(spec, eps, spec.ratio);
    const LowerBounds lb = lower_bounds(st.sys_eps, st.sys_eff, 0.0, st.kp ? &*st.kp : nullptr);
    c = std::min(c, spec.bc == BoundaryCondition::Dirichlet ? lb.c_star : lb.c_flat);
  }
  require(std::isfinite(c) && c > 0.0, ErrorCode::InvalidArgument, "no positive lower bound for this sweep");
  return c;
}

inline void validate_sweep(const SweepSpec& spec, bool need_cell = true) {
  if (need_cell) require(spec.cell != nullptr, ErrorCode::ConfigError, "sweep needs a cell solution");
  require(!spec.eps.empty(), ErrorCode::ConfigError, "eps grid is empty");
  require(!spec.zetas.empty(), ErrorCode::ConfigError, "zeta grid is empty");
  for (std::size_t i = 0; i < spec.eps.size(); ++i) {
    require(spec.eps[i] > 0.0 && spec.eps[i] <= spec.limits.eps_max, ErrorCode::ConfigError,
            "eps must lie in (0, eps_max]");
    if (i > 0) require(spec.eps[i] < spec.eps[i - 1], ErrorCode::ConfigError, "eps grid must be strictly decreasing");
  }
  require(spec.ensemble.size >= 1, ErrorCode::ConfigError, "ensemble size must be positive");
  require(spec.ratio >= spec.limits.min_scale_ratio, ErrorCode::ConfigError, "mesh ratio below the scale-separation limit");
  const bool torus = spec.domain.kind == DomainKind::Torus;
  require(torus == (spec.bc == BoundaryCondition::Torus), ErrorCode::ConfigError,
          "torus domains go with torus conditions only");
  if (spec.regime == Regime::BelowCStar)
    require(spec.bc == BoundaryCondition::Dirichlet, ErrorCode::ConfigError, "below_c_star needs Dirichlet conditions");
  if (spec.regime == Regime::BelowCFlat)
    require(spec.bc == BoundaryCondition::Neumann, ErrorCode::ConfigError, "below_c_flat needs Neumann conditions");
}

inline SweepRow make_row(const SweepSpec& spec, const Stage* st, int id, double eps, const ZetaSpec& zs,
                         double c_ref) {
  SweepRow row;
  row.id = id;
  row.bc = spec.bc;
  row.eps = eps;
  row.ensemble_size = spec.ensemble.size;
  row.seed = spec.ensemble.seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const cplx zeta = zs.resolve(c_ref);
    row.z = SpectralPoint::make(zeta);
    row.factors = zeta_factors(zeta, spec.regime, c_ref);
    row.shape = bound_shapes(spec.regime, eps, row.z, row.factors, spec.interior_delta);
    require(st != nullptr, ErrorCode::InvalidArgument, "stage unavailable");
    row.h = st->mesh->h_max();
    row.ndof = static_cast<long>(st->sys_eps.nfree());
    row.probe = operator_norm_probe(spec, *st, row.z);
    row.C_L2 = row.probe.max_ratio_L2 / row.shape.L2;
    row.C_H1 = row.probe.max_ratio_H1 / row.shape.H1;
    if (!(std::isfinite(row.probe.max_ratio_L2) && std::isfinite(row.probe.max_ratio_H1)))
      row.status = "NonFinite";
  } catch (const std::exception& e) {
    row.status = detail::error_status(e);
  }
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

inline double row_metric(const SweepRow& r, const std::string& metric) {
  if (metric == "L2") return r.probe.max_ratio_L2;
  if (metric == "H1") return r.probe.max_ratio_H1;
  if (metric == "H1_plain") return r.probe.max_ratio_H1_plain;
  if (metric == "flux") return r.probe.max_ratio_flux;
  if (metric == "interior_H1") return r.probe.max_ratio_interior;
  fail(ErrorCode::InvalidArgument, "unknown metric " + metric);
}

inline std::vector<std::string> sweep_metrics(const SweepSpec& spec) {
  std::vector<std::string> m{"L2", "H1", "H1_plain", "flux"};
  if (spec.interior_delta > 0.0) m.push_back("interior_H1");
  return m;
}

/// Fits along eps for every zeta, and along |zeta| for every eps.
inline void fill_fits(const SweepSpec& spec, SweepReport& rep) {
  const std::size_t nz = spec.zetas.size(), ne = spec.eps.size();
  for (const auto& metric : sweep_metrics(spec)) {
    for (std::size_t iz = 0; iz < nz && ne >= 3; ++iz) {
      std::vector<std::pair<double, double>> pts;
      for (std::size_t ie = 0; ie < ne; ++ie) {
        const SweepRow& r = rep.rows[ie * nz + iz];
        if (r.ok() && row_metric(r, metric) > 0.0) pts.emplace_back(r.eps, row_metric(r, metric));
      }
      try {
        rep.fits.push_back({metric, "eps", rep.rows[iz].z.abs, rate_fit(pts, true, 3)});
      } catch (const Error&) {
      }
    }
    for (std::size_t ie = 0; ie < ne && nz >= 4; ++ie) {
      std::vector<std::pair<double, double>> pts;
      for (std::size_t iz = 0; iz < nz; ++iz) {
        const SweepRow& r = rep.rows[ie * nz + iz];
        if (r.ok() && row_metric(r, metric) > 0.0) pts.emplace_back(r.z.abs, row_metric(r, metric));
      }
      try {
        rep.fits.push_back({metric, "zeta", spec.eps[ie], rate_fit(pts, true, 4)});
      } catch (const Error&) {
      }
    }
  }
}

inline void fill_envelopes(const SweepSpec& spec, SweepReport& rep) {
  if (spec.regime != Regime::Sector) {
    rep.envelope_status = "not applicable";
    return;
  }
  std::vector<EnvelopeRow> l2, h1;
  for (const auto& r : rep.rows)
    if (r.ok()) {
      l2.push_back({r.eps, r.z, r.probe.max_ratio_L2});
      h1.push_back({r.eps, r.z, r.probe.max_ratio_H1});
    }
  try {
    rep.envelopes["L2"] = envelope_check(l2, EnvelopeShape::sector_L2());
    rep.envelopes["H1"] = envelope_check(h1, EnvelopeShape::sector_H1());
    rep.envelope_status = "ok";
  } catch (const Error& e) {
    rep.envelope_status = std::string(to_string(e.code()));
  }
}

/// Runs every (eps, zeta) point. Points that fail record their error code
/// and the sweep continues.
inline SweepReport run_sweep(const SweepSpec& spec) {
  validate_sweep(spec);
  const auto t0 = std::chrono::steady_clock::now();
  SweepReport rep;
  rep.name = spec.name;
  double c_ref = std::numeric_limits<double>::quiet_NaN();
  if (spec.regime == Regime::BelowCStar || spec.regime == Regime::BelowCFlat) c_ref = sweep_lower_bound(spec);
  rep.c_ref = c_ref;
  for (const auto& zs : spec.zetas) zeta_factors(zs.resolve(c_ref), spec.regime, c_ref);

  const std::size_t nz = spec.zetas.size(), ne = spec.eps.size();
  rep.rows.resize(ne * nz);
  std::vector<int> kdim(ne, 0);
  detail::parallel_for(static_cast<int>(ne), spec.threads, [&](int ie) {
    std::optional<Stage> st;
    std::string status;
    try {
      st.emplace(build_stage(spec, spec.eps[ie], spec.ratio));
      if (st->kp) kdim[ie] = st->kp->p;
    } catch (const std::exception& e) {
      status = detail::error_status(e);
    }
    for (std::size_t iz = 0; iz < nz; ++iz) {
      const int id = static_cast<int>(ie * nz + iz);
      SweepRow row = make_row(spec, st ? &*st : nullptr, id, spec.eps[ie], spec.zetas[iz], c_ref);
      if (!st) row.status = status;
      rep.rows[id] = std::move(row);
    }
  });
  rep.kernel_dim = *std::max_element(kdim.begin(), kdim.end());
  int failed = 0;
  for (const auto& r : rep.rows) failed += r.ok() ? 0 : 1;
  rep.failed_fraction = static_cast<double>(failed) / rep.rows.size();

  fill_fits(spec, rep);
  fill_envelopes(spec, rep);

  if (spec.halving_check && rep.rows.front().ok()) {
    HalvingCheck& hc = rep.halving;
    hc.performed = true;
    hc.eps = spec.eps.front();
    try {
      const Stage fine = build_stage(spec, hc.eps, 2.0 * spec.ratio);
      const ProbeResult p = operator_norm_probe(spec, fine, rep.rows.front().z);
      const ProbeResult& c = rep.rows.front().probe;
      hc.change_L2 = std::abs(p.max_ratio_L2 - c.max_ratio_L2) / p.max_ratio_L2;
      hc.change_H1 = std::abs(p.max_ratio_H1 - c.max_ratio_H1) / p.max_ratio_H1;
      hc.ok = hc.change_L2 < 0.1 && hc.change_H1 < 0.1;
      hc.status = "ok";
    } catch (const std::exception& e) {
      hc.status = detail::error_status(e);
    }
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Recomputes one row of a sweep by id.
inline SweepRow rerun_row(const SweepSpec& spec, int id, double c_ref = std::numeric_limits<double>::quiet_NaN()) {
  validate_sweep(spec);
  const int nz = static_cast<int>(spec.zetas.size());
  require(id >= 0 && id < nz * static_cast<int>(spec.eps.size()), ErrorCode::InvalidArgument, "row id out of range");
  if ((spec.regime == Regime::BelowCStar || spec.regime == Regime::BelowCFlat) && !std::isfinite(c_ref))
    c_ref = sweep_lower_bound(spec);
  const double eps = spec.eps[id / nz];
  const Stage st = build_stage(spec, eps, spec.ratio);
  return make_row(spec, &st, id, eps, spec.zetas[id % nz], c_ref);
}

/// Fit of one metric along eps at the zeta with the given modulus.
inline std::optional<RateFit> find_fit(const SweepReport& rep, const std::string& metric, const std::string& axis,
                                       double fixed) {
  for (const auto& f : rep.fits)
    if (f.metric == metric && f.axis == axis && std::abs(f.fixed - fixed) <= 1e-12 * std::max(1.0, std::abs(fixed)))
      return f.fit;
  return std::nullopt;
}

}  // namespace homog
