#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "homog/cell_solver.hpp"
#include "homog/elliptic_solver.hpp"
#include "homog/smoothing.hpp"

namespace homog {

enum class Smoothing { Steklov, None };

inline const char* to_string(Smoothing s) { return s == Smoothing::Steklov ? "steklov" : "none"; }

namespace detail {

// C^2 step: 1 for s <= 0, 0 for s >= 1.
inline double blend(double s) {
  if (s <= 0.0) return 1.0;
  if (s >= 1.0) return 0.0;
  const double t = 1.0 - s;
  return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

/// Bucket search over the triangles of an unstructured mesh.
class TriangleLocator {
 public:
  explicit TriangleLocator(const Mesh& mesh) : mesh_(&mesh) {
    auto [lo, hi] = mesh.bounding_box();
    lo_ = lo;
    const int ne = mesh.num_elements();
    nb_ = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(ne) / 2.0)));
    cell_[0] = (hi[0] - lo[0]) / nb_ * (1.0 + 1e-12) + 1e-300;
    cell_[1] = (hi[1] - lo[1]) / nb_ * (1.0 + 1e-12) + 1e-300;
    buckets_.assign(static_cast<std::size_t>(nb_) * nb_, {});
    for (int e = 0; e < ne; ++e) {
      const int* en = mesh.element_nodes(e);
      double bl[2] = {1e300, 1e300}, bh[2] = {-1e300, -1e300};
      for (int a = 0; a < 3; ++a)
        for (int k = 0; k < 2; ++k) {
          bl[k] = std::min(bl[k], mesh.node(en[a])[k]);
          bh[k] = std::max(bh[k], mesh.node(en[a])[k]);
        }
      const int i0 = clampi((bl[0] - lo_[0]) / cell_[0]), i1 = clampi((bh[0] - lo_[0]) / cell_[0]);
      const int j0 = clampi((bl[1] - lo_[1]) / cell_[1]), j1 = clampi((bh[1] - lo_[1]) / cell_[1]);
      for (int j = j0; j <= j1; ++j)
        for (int i = i0; i <= i1; ++i) buckets_[static_cast<std::size_t>(j) * nb_ + i].push_back(e);
    }
  }

  /// Element and barycentric coordinates of x. Points just outside the
  /// polygonal boundary get the nearest candidate (mild extrapolation).
  int locate(const Point& x, double bary[3]) const {
    const int bi = clampi((x[0] - lo_[0]) / cell_[0]), bj = clampi((x[1] - lo_[1]) / cell_[1]);
    int best = -1;
    double best_score = -1e300;
    double b[3];
    for (int ring = 0; ring <= nb_; ++ring) {
      for (int j = std::max(0, bj - ring); j <= std::min(nb_ - 1, bj + ring); ++j)
        for (int i = std::max(0, bi - ring); i <= std::min(nb_ - 1, bi + ring); ++i) {
          if (std::max(std::abs(i - bi), std::abs(j - bj)) != ring) continue;
          for (int e : buckets_[static_cast<std::size_t>(j) * nb_ + i]) {
            barycentric(e, x, b);
            const double score = std::min({b[0], b[1], b[2]});
            if (score > best_score) {
              best_score = score;
              best = e;
              std::copy(b, b + 3, bary);
            }
          }
        }
      if (best >= 0 && (best_score >= -1e-12 || ring >= 1)) break;
    }
    require(best >= 0, ErrorCode::MarginTooSmall, "point is not covered by the mesh");
    return best;
  }

  /// Interpolated row of a nodal field at x.
  Eigen::Matrix<cplx, 1, Eigen::Dynamic> interpolate(const MatrixXc& f, const Point& x) const {
    double b[3];
    const int e = locate(x, b);
    const int* en = mesh_->element_nodes(e);
    return b[0] * f.row(en[0]) + b[1] * f.row(en[1]) + b[2] * f.row(en[2]);
  }

 private:
  int clampi(double v) const { return std::clamp(static_cast<int>(std::floor(v)), 0, nb_ - 1); }

  void barycentric(int e, const Point& x, double b[3]) const {
    const int* en = mesh_->element_nodes(e);
    const Point& p0 = mesh_->node(en[0]);
    const Point& p1 = mesh_->node(en[1]);
    const Point& p2 = mesh_->node(en[2]);
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    b[1] = ((x[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (x[1] - p0[1])) / det;
    b[2] = ((p1[0] - p0[0]) * (x[1] - p0[1]) - (x[0] - p0[0]) * (p1[1] - p0[1])) / det;
    b[0] = 1.0 - b[1] - b[2];
  }

  const Mesh* mesh_;
  Point lo_;
  double cell_[2];
  int nb_;
  std::vector<std::vector<int>> buckets_;
};

}  // namespace detail

/// Extension from a bounded domain O (structured box or disk) onto a
/// lattice-aligned box grid containing O with a margin. Values are
/// continued by point reflection across the boundary,
///   u~(a - y) = 2 u(a) - u(a + y)   (per axis, or radially on a disk),
/// and blended to zero over the outer half of the margin.
struct ExtensionOperator {
  std::shared_ptr<const Mesh> domain;
  std::shared_ptr<const Mesh> extension;
  double margin = 0.0;
  int offset = 0;  // structured domains: node (0, 0) of O is node (offset, offset) of the extension
  std::shared_ptr<const detail::TriangleLocator> locator;
};

/// Structured box domain: the extension grid shares the domain spacing.
/// Disk domain: a box grid on `lat` with fractional spacing h.
inline ExtensionOperator make_extension(const std::shared_ptr<const Mesh>& domain, double margin,
                                        const Lattice* lat = nullptr, double h = 0.0) {
  require(domain->kind() != MeshKind::Torus, ErrorCode::InvalidArgument, "a torus needs no extension");
  require(margin > 0.0, ErrorCode::MarginTooSmall, "extension margin must be positive");
  ExtensionOperator ext;
  ext.domain = domain;
  ext.margin = margin;
  const int d = domain->dim();
  if (domain->structured()) {
    const auto& g = domain->grid();
    double amin = g.A.col(0).head(d).norm();
    if (d == 2) amin = std::min(amin, g.A.col(1).norm());
    ext.offset = static_cast<int>(std::ceil(margin / (g.h * amin) - 1e-9));
    for (int k = 0; k < d; ++k)
      require(ext.offset <= g.cells[k], ErrorCode::MarginTooSmall, "margin exceeds the domain width");
    Lattice l(g.A.topLeftCorner(d, d));
    Point t0 = l.to_fractional(domain->grid_point(-ext.offset, -ext.offset));
    ext.extension = std::make_shared<Mesh>(Mesh::box(
        l, t0, g.h, {g.cells[0] + 2 * ext.offset, d == 2 ? g.cells[1] + 2 * ext.offset : 1}, domain->id() + "/ext"));
    return ext;
  }
  require(lat != nullptr && lat->dim() == 2 && h > 0.0, ErrorCode::InvalidArgument,
          "disk extension needs a lattice and a grid spacing");
  const double R = domain->radius() + margin;
  double tlo[2] = {1e300, 1e300}, thi[2] = {-1e300, -1e300};
  for (int k = 0; k < 64; ++k) {
    const double a = 2.0 * kPi * k / 64;
    // Circumscribe the circle by a slightly larger polygon.
    const Point x{R / std::cos(kPi / 64) * std::cos(a), R / std::cos(kPi / 64) * std::sin(a)};
    const Point t = lat->to_fractional(x);
    for (int j = 0; j < 2; ++j) {
      tlo[j] = std::min(tlo[j], t[j]);
      thi[j] = std::max(thi[j], t[j]);
    }
  }
  std::array<int, 2> cells;
  Point t0;
  for (int j = 0; j < 2; ++j) {
    const int lo = static_cast<int>(std::floor(tlo[j] / h)), hi = static_cast<int>(std::ceil(thi[j] / h));
    t0[j] = lo * h;
    cells[j] = hi - lo;
  }
  ext.extension = std::make_shared<Mesh>(Mesh::box(*lat, t0, h, cells, domain->id() + "/ext"));
  ext.locator = std::make_shared<detail::TriangleLocator>(*domain);
  return ext;
}

/// Extends a nodal field on O to the extension grid.
inline GridField extend(const GridField& u, const ExtensionOperator& ext) {
  const Mesh& dom = *ext.domain;
  const Mesh& em = *ext.extension;
  require(u.mesh_id == dom.id() && u.location == FieldLocation::Nodes, ErrorCode::MeshMismatch,
          "extend needs a nodal field on the domain");
  GridField out(em.id(), FieldLocation::Nodes, u.rows, u.cols, em.num_nodes());
  const double half = 0.5 * ext.margin;
  if (dom.structured()) {
    const int d = dom.dim(), off = ext.offset;
    const auto dn = dom.grid_nodes();
    const auto en = em.grid_nodes();
    const auto& g = dom.grid();
    // Reflected index and the anchor index on the boundary.
    auto reflect = [](int i, int n, int& anchor) {
      if (i < 0) {
        anchor = 0;
        return -i;
      }
      if (i > n) {
        anchor = n;
        return 2 * n - i;
      }
      anchor = -1;
      return i;
    };
    // Axis 0 on the domain rows.
    const int rows_lo = d == 2 ? off : 0, rows_hi = d == 2 ? off + dn[1] - 1 : 0;
    for (int j = rows_lo; j <= rows_hi; ++j)
      for (int i = 0; i < en[0]; ++i) {
        int anchor;
        const int src = reflect(i - off, dn[0] - 1, anchor);
        const int dj = j - rows_lo;
        auto row = u.values.row(dom.grid_node(src, dj));
        if (anchor < 0)
          out.values.row(em.grid_node(i, j)) = row;
        else
          out.values.row(em.grid_node(i, j)) = 2.0 * u.values.row(dom.grid_node(anchor, dj)) - row;
      }
    if (d == 2)
      for (int j = 0; j < en[1]; ++j) {
        if (j >= rows_lo && j <= rows_hi) continue;
        int anchor;
        const int src = reflect(j - off, dn[1] - 1, anchor) + off;
        for (int i = 0; i < en[0]; ++i)
          out.values.row(em.grid_node(i, j)) =
              2.0 * out.values.row(em.grid_node(i, anchor + off)) - out.values.row(em.grid_node(i, src));
      }
    // Blend by the distance outside O along each axis.
    for (int j = 0; j < en[1]; ++j)
      for (int i = 0; i < en[0]; ++i) {
        double chi = 1.0;
        const int idx[2] = {i - off, j - off};
        for (int k = 0; k < d; ++k) {
          const int n = dn[k] - 1;
          const int outside = std::max({0, -idx[k], idx[k] - n});
          const double dist = outside * g.h * g.A.col(k).head(d).norm();
          chi *= detail::blend((dist - half) / half);
        }
        if (chi != 1.0) out.values.row(em.grid_node(i, j)) *= chi;
      }
    return out;
  }
  // Disk: radial point reflection r -> 2R - r.
  const double R = dom.radius();
  for (int p = 0; p < em.num_nodes(); ++p) {
    const Point& x = em.node(p);
    const double r = std::hypot(x[0], x[1]);
    if (r <= R) {
      out.values.row(p) = ext.locator->interpolate(u.values, x);
      continue;
    }
    const double dist = r - R;
    const double chi = detail::blend((dist - half) / half);
    if (chi == 0.0) continue;
    require(dist <= R, ErrorCode::MarginTooSmall, "margin exceeds the disk radius");
    const Point xb{x[0] * R / r, x[1] * R / r};
    const Point xm{x[0] * (2.0 * R - r) / r, x[1] * (2.0 * R - r) / r};
    out.values.row(p) = chi * (2.0 * ext.locator->interpolate(u.values, xb) - ext.locator->interpolate(u.values, xm));
  }
  return out;
}

/// Restriction of an extension-grid field back to the nodes of O.
inline GridField restrict_to_domain(const GridField& v, const ExtensionOperator& ext) {
  const Mesh& dom = *ext.domain;
  const Mesh& em = *ext.extension;
  require(v.mesh_id == em.id(), ErrorCode::MeshMismatch, "field is not on the extension grid");
  GridField out(dom.id(), FieldLocation::Nodes, v.rows, v.cols, dom.num_nodes());
  if (dom.structured()) {
    const auto dn = dom.grid_nodes();
    const int off = ext.offset, d = dom.dim();
    for (int j = 0; j < dn[1]; ++j)
      for (int i = 0; i < dn[0]; ++i)
        out.values.row(dom.grid_node(i, j)) = v.values.row(em.grid_node(i + off, d == 2 ? j + off : 0));
    return out;
  }
  for (int p = 0; p < dom.num_nodes(); ++p) out.values.row(p) = em.interpolate(v.values, dom.node(p));
  return out;
}

namespace detail {

// Element averages of B u (m x 1 per element) on a mesh.
inline GridField cell_symbol_average(const DifferentialSymbol& sym, const Mesh& mesh, const GridField& u) {
  GridField out(mesh.id(), FieldLocation::Cells, sym.m, 1, mesh.num_elements());
  ElementSymbol es;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    element_symbol(sym, ed, es);
    SmallVec acc = SmallVec::Zero(sym.m);
    double wsum = 0.0;
    for (int q = 0; q < ed.nq; ++q) {
      for (int a = 0; a < ed.nv; ++a) {
        SmallVec ua(sym.n);
        for (int j = 0; j < sym.n; ++j) ua(j) = u.values(ed.nodes[a], j);
        acc += ed.w[q] * (es.B[q][a] * ua);
      }
      wsum += ed.w[q];
    }
    acc /= wsum;
    for (int r = 0; r < sym.m; ++r) out.values(e, r) = acc(r);
  }
  return out;
}

// Nodal recovery of a cell field by measure-weighted averaging.
inline GridField recover_nodal(const Mesh& mesh, const GridField& c) {
  GridField out(mesh.id(), FieldLocation::Nodes, c.rows, c.cols, mesh.num_nodes());
  Eigen::VectorXd w = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    for (int a = 0; a < ed.nv; ++a) {
      out.values.row(ed.nodes[a]) += ed.measure * c.values.row(e);
      w(ed.nodes[a]) += ed.measure;
    }
  }
  for (int a = 0; a < mesh.num_nodes(); ++a) out.values.row(a) /= w(a);
  return out;
}

}  // namespace detail

/// W = (S_eps or identity) B u~0 with its partial derivatives, sampled at
/// the quadrature points (e * nq + q) of the domain mesh.
struct SymbolField {
  GridField W;   // m x 1
  GridField dW;  // m x d
};

inline SymbolField smoothed_symbol_field(const DifferentialSymbol& sym, const std::shared_ptr<const Mesh>& domain,
                                         const GridField& u0, double eps, Smoothing smoothing,
                                         const ExtensionOperator* ext) {
  require(u0.mesh_id == domain->id(), ErrorCode::MeshMismatch, "u0 does not live on the domain mesh");
  const Mesh& dom = *domain;
  const int d = dom.dim(), m = sym.m;
  if (smoothing == Smoothing::None) {
    GridField cell = detail::cell_symbol_average(sym, dom, u0);
    GridField w = detail::recover_nodal(dom, cell);
    return {quad_values(dom, w), quad_gradients(dom, w)};
  }
  std::shared_ptr<const Mesh> grid = domain;
  GridField base = u0;
  if (dom.kind() != MeshKind::Torus) {
    require(ext != nullptr, ErrorCode::InvalidArgument, "bounded domains need an extension operator");
    require(ext->domain->id() == dom.id(), ErrorCode::MeshMismatch, "extension built for another domain");
    grid = ext->extension;
    base = extend(u0, *ext);
  }
  GridField cell = detail::cell_symbol_average(sym, *grid, base);
  SmoothedField sm = steklov_smooth(cell, grid, eps);
  const Mesh& sg = *sm.mesh;
  const int nq = dom.quad_per_element();
  SymbolField out{GridField(dom.id(), FieldLocation::QuadraturePoints, m, 1,
                            static_cast<Eigen::Index>(dom.num_elements()) * nq),
                  GridField(dom.id(), FieldLocation::QuadraturePoints, m, d,
                            static_cast<Eigen::Index>(dom.num_elements()) * nq)};
  double N[4], dN[4][2];
  for (int e = 0; e < dom.num_elements(); ++e) {
    const ElementData ed = dom.element(e);
    for (int q = 0; q < ed.nq; ++q) {
      Point local{0.0, 0.0};
      const int se = sg.locate_element(ed.xq[q], local);
      sg.structured_basis(local, N, dN);
      const int* sn = sg.element_nodes(se);
      const Eigen::Index p = static_cast<Eigen::Index>(e) * nq + q;
      for (int a = 0; a < sg.nodes_per_element(); ++a)
        for (int r = 0; r < m; ++r) {
          const cplx v = sm.field.values(sn[a], r);
          out.W.values(p, r) += N[a] * v;
          for (int l = 0; l < d; ++l) out.dW.at(p, r, l) += dN[a][l] * v;
        }
    }
  }
  return out;
}

namespace detail {

// Lambda (n x m) and its partial derivatives at a cell point y.
inline void cell_lambda(const CellSolution& cs, const Point& y, SmallMat& lam, SmallMat dlam[2]) {
  const Mesh& cm = *cs.mesh;
  Point local{0.0, 0.0};
  const int e = cm.locate_element(y, local);
  double N[4], dN[4][2];
  cm.structured_basis(local, N, dN);
  const int* en = cm.element_nodes(e);
  lam = SmallMat::Zero(cs.n(), cs.m());
  dlam[0] = dlam[1] = SmallMat::Zero(cs.n(), cs.m());
  for (int a = 0; a < cm.nodes_per_element(); ++a) {
    const SmallMat L = cs.nodal_matrix(en[a]);
    lam += N[a] * L;
    for (int l = 0; l < cm.dim(); ++l) dlam[l] += dN[a][l] * L;
  }
}

}  // namespace detail

/// Corrector eps Lambda(x / eps) W(x) at the quadrature points of the domain
/// mesh; column 0 holds the value and column 1 + l the partial derivative
/// d_l = (d_l Lambda)(x / eps) W + eps Lambda d_l W.
inline GridField corrector_from_symbol_field(const CellSolution& cs, const Mesh& dom, double eps,
                                             const SymbolField& sf) {
  const int n = cs.n(), d = dom.dim(), nq = dom.quad_per_element();
  GridField out(dom.id(), FieldLocation::QuadraturePoints, n, 1 + d, static_cast<Eigen::Index>(dom.num_elements()) * nq);
  SmallMat lam, dlam[2];
  for (int e = 0; e < dom.num_elements(); ++e) {
    const ElementData ed = dom.element(e);
    for (int q = 0; q < ed.nq; ++q) {
      const Eigen::Index p = static_cast<Eigen::Index>(e) * nq + q;
      detail::cell_lambda(cs, Point{ed.xq[q][0] / eps, ed.xq[q][1] / eps}, lam, dlam);
      const SmallVec W = sf.W.matrix(p);
      const SmallMat dW = sf.dW.matrix(p);
      const SmallVec v = eps * (lam * W);
      for (int r = 0; r < n; ++r) out.at(p, r, 0) = v(r);
      for (int l = 0; l < d; ++l) {
        const SmallVec g = dlam[l] * W + eps * (lam * dW.col(l));
        for (int r = 0; r < n; ++r) out.at(p, r, 1 + l) = g(r);
      }
    }
  }
  return out;
}

/// Requires Condition-2.8-type boundedness of Lambda for the smoothing-free
/// variant.
inline void check_smoothing(const CellSolution& cs, Smoothing smoothing) {
  if (smoothing == Smoothing::None && !cs.diagnostics.condition_2_8)
    fail(ErrorCode::SmoothingRequired, "Lambda is not known to be bounded; Steklov smoothing is required");
}

/// eps Lambda^eps (S_eps or I) B u~0 with its derivatives at the domain
/// quadrature points (see corrector_from_symbol_field for the layout).
inline GridField corrector_apply(const CellSolution& cs, double eps, Smoothing smoothing, const GridField& u0,
                                 const std::shared_ptr<const Mesh>& domain, const ExtensionOperator* ext = nullptr) {
  check_smoothing(cs, smoothing);
  SymbolField sf = smoothed_symbol_field(cs.sym, domain, u0, eps, smoothing, ext);
  return corrector_from_symbol_field(cs, *domain, eps, sf);
}

/// tilde g(x / eps) W(x) at the domain quadrature points (m x 1). With
/// `constant_flux` the effective matrix g0 replaces tilde g.
inline GridField flux_from_symbol_field(const CellSolution& cs, const Mesh& dom, double eps, const SymbolField& sf,
                                        bool constant_flux = false) {
  const int m = cs.m(), nq = dom.quad_per_element();
  GridField out(dom.id(), FieldLocation::QuadraturePoints, m, 1, static_cast<Eigen::Index>(dom.num_elements()) * nq);
  const SmallMat g0 = cs.g0;
  for (int e = 0; e < dom.num_elements(); ++e) {
    const ElementData ed = dom.element(e);
    for (int q = 0; q < ed.nq; ++q) {
      const Eigen::Index p = static_cast<Eigen::Index>(e) * nq + q;
      const SmallMat G = constant_flux ? g0 : cs.tilde_g_at(Point{ed.xq[q][0] / eps, ed.xq[q][1] / eps});
      const SmallVec v = G * sf.W.matrix(p);
      for (int r = 0; r < m; ++r) out.values(p, r) = v(r);
    }
  }
  return out;
}

inline GridField flux_approx(const CellSolution& cs, double eps, Smoothing smoothing, const GridField& u0,
                             const std::shared_ptr<const Mesh>& domain, const ExtensionOperator* ext = nullptr,
                             bool constant_flux = false) {
  check_smoothing(cs, smoothing);
  SymbolField sf = smoothed_symbol_field(cs.sym, domain, u0, eps, smoothing, ext);
  return flux_from_symbol_field(cs, *domain, eps, sf, constant_flux);
}

}  // namespace homog
