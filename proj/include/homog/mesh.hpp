#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "homog/error.hpp"
#include "homog/lattice.hpp"
#include "homog/types.hpp"

namespace homog {

enum class ElementType { Seg2, Quad4, Tri3 };
enum class MeshKind { Torus, Box, Disk };

inline const char* to_string(MeshKind k) {
  switch (k) {
    case MeshKind::Torus: return "torus";
    case MeshKind::Box: return "box";
    case MeshKind::Disk: return "disk";
  }
  return "?";
}

/// Geometry of one element evaluated at its quadrature points. Gradients
/// are physical; `w` already includes the Jacobian determinant.
struct ElementData {
  int nv = 0;
  int nq = 0;
  std::array<int, 4> nodes{};
  std::array<Point, 4> xq{};
  std::array<double, 4> w{};
  double N[4][4]{};      // N[q][a]
  double dN[4][4][2]{};  // dN[q][a][dir]
  double measure = 0.0;
};

/// Lattice-aligned structured grid: nodes at origin + A (h i, h j) where A
/// holds the lattice basis as columns and h is the fractional spacing.
struct StructuredInfo {
  Eigen::Matrix2d A = Eigen::Matrix2d::Identity();
  Eigen::Matrix2d Ainv = Eigen::Matrix2d::Identity();
  Point origin{0.0, 0.0};
  double h = 0.0;
  std::array<int, 2> cells{1, 1};
  bool periodic = false;
};

class Mesh {
 public:
  /// Periodic grid over fractional [0, periods)^d with `cells_per_axis`
  /// elements per axis.
  static Mesh torus(const Lattice& lat, double periods, int cells_per_axis, const std::string& id = "torus") {
    Mesh mesh;
    mesh.init_structured(lat, Point{0.0, 0.0}, periods / cells_per_axis, {cells_per_axis, cells_per_axis}, true);
    mesh.kind_ = MeshKind::Torus;
    mesh.id_ = id;
    return mesh;
  }

  /// Box grid in fractional coordinates [t0, t0 + cells * h] per axis
  /// (an interval when d = 1).
  static Mesh box(const Lattice& lat, const Point& t0, double h, std::array<int, 2> cells,
                  const std::string& id = "box") {
    Mesh mesh;
    Point origin = lat.from_fractional(t0);
    mesh.init_structured(lat, origin, h, cells, false);
    mesh.kind_ = MeshKind::Box;
    mesh.id_ = id;
    return mesh;
  }

  /// Box sub-grid of a structured grid starting at node index `lo` with
  /// `cells` elements per axis.
  Mesh sub_box(std::array<int, 2> lo, std::array<int, 2> cells, const std::string& id) const {
    require(structured(), ErrorCode::InvalidArgument, "sub_box needs a structured grid");
    Lattice lat(grid_.A.topLeftCorner(dim_, dim_));
    Mesh mesh;
    mesh.init_structured(lat, grid_point(lo[0], lo[1]), grid_.h, cells, false);
    mesh.kind_ = MeshKind::Box;
    mesh.id_ = id;
    return mesh;
  }

  /// Interval (a, b) with `cells` elements on the 1D lattice `lat`.
  static Mesh interval(const Lattice& lat, double a, double b, int cells, const std::string& id = "interval") {
    require(lat.dim() == 1, ErrorCode::InvalidArgument, "interval mesh needs a 1D lattice");
    require(b > a && cells >= 2, ErrorCode::InvalidArgument, "invalid interval mesh");
    const double period = lat.basis()(0, 0);
    return box(lat, Point{a / period, 0.0}, (b - a) / period / cells, {cells, 1}, id);
  }

  /// Disk of radius R centred at the origin: concentric rings, ring k holds
  /// 6k nodes, triangulated by angular merging. Ring count is the smallest
  /// one with h_max <= h_target.
  static Mesh disk(double radius, double h_target, const std::string& id = "disk") {
    require(radius > 0 && h_target > 0 && h_target < radius, ErrorCode::InvalidArgument, "invalid disk mesh");
    int rings = std::max(2, static_cast<int>(std::ceil(radius / h_target)));
    for (;;) {
      Mesh mesh = build_disk(radius, rings);
      if (mesh.h_max_ <= h_target) {
        mesh.id_ = id;
        return mesh;
      }
      rings = static_cast<int>(std::ceil(rings * std::max(1.02, mesh.h_max_ / h_target)));
    }
  }

  MeshKind kind() const { return kind_; }
  ElementType element_type() const { return etype_; }
  int dim() const { return dim_; }
  const std::string& id() const { return id_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_elements() const { return static_cast<int>(conn_.size()) / nv_; }
  int nodes_per_element() const { return nv_; }
  int quad_per_element() const { return nq_; }
  const Point& node(int i) const { return nodes_[i]; }
  const std::vector<Point>& nodes() const { return nodes_; }
  bool on_boundary(int i) const { return boundary_[i] != 0; }
  const std::vector<char>& boundary() const { return boundary_; }
  double h_max() const { return h_max_; }
  double measure() const { return measure_; }
  bool structured() const { return kind_ != MeshKind::Disk; }
  const StructuredInfo& grid() const { return grid_; }
  double radius() const { return radius_; }
  int rings() const { return rings_; }

  const int* element_nodes(int e) const { return conn_.data() + static_cast<std::size_t>(e) * nv_; }

  /// Bounding box (min, max) of the nodes.
  std::pair<Point, Point> bounding_box() const {
    Point lo{1e300, 1e300}, hi{-1e300, -1e300};
    for (const auto& p : nodes_)
      for (int k = 0; k < 2; ++k) {
        lo[k] = std::min(lo[k], p[k]);
        hi[k] = std::max(hi[k], p[k]);
      }
    if (dim_ == 1) lo[1] = hi[1] = 0.0;
    if (kind_ == MeshKind::Torus) {
      // The periodic image of the first node closes the box.
      for (int k = 0; k < dim_; ++k) {
        Point far = grid_point(grid_.cells[0], dim_ == 2 ? grid_.cells[1] : 0);
        hi[k] = std::max(hi[k], far[k]);
      }
    }
    return {lo, hi};
  }

  /// Physical position of structured grid index (i, j), unwrapped.
  Point grid_point(double i, double j) const {
    const double ti = grid_.h * i, tj = dim_ == 2 ? grid_.h * j : 0.0;
    Point x = grid_.origin;
    x[0] += grid_.A(0, 0) * ti + (dim_ == 2 ? grid_.A(0, 1) * tj : 0.0);
    if (dim_ == 2) x[1] += grid_.A(1, 0) * ti + grid_.A(1, 1) * tj;
    return x;
  }

  /// Structured node id of index (i, j); wraps on periodic grids.
  int grid_node(int i, int j) const {
    if (grid_.periodic) {
      const int n0 = grid_.cells[0], n1 = grid_.cells[1];
      i = ((i % n0) + n0) % n0;
      if (dim_ == 2) j = ((j % n1) + n1) % n1;
      return dim_ == 2 ? i + n0 * j : i;
    }
    return dim_ == 2 ? i + (grid_.cells[0] + 1) * j : i;
  }

  /// Node counts per axis of a structured grid.
  std::array<int, 2> grid_nodes() const {
    if (grid_.periodic) return {grid_.cells[0], dim_ == 2 ? grid_.cells[1] : 1};
    return {grid_.cells[0] + 1, dim_ == 2 ? grid_.cells[1] + 1 : 1};
  }

  /// Continuous grid coordinates (in units of h) of a physical point.
  Point grid_coords(const Point& x) const {
    Point r{x[0] - grid_.origin[0], x[1] - grid_.origin[1]};
    if (dim_ == 1) return Point{r[0] / (grid_.A(0, 0) * grid_.h), 0.0};
    return Point{(grid_.Ainv(0, 0) * r[0] + grid_.Ainv(0, 1) * r[1]) / grid_.h,
                 (grid_.Ainv(1, 0) * r[0] + grid_.Ainv(1, 1) * r[1]) / grid_.h};
  }

  /// Interpolates a nodal field (rows = nodes) at physical point x on a
  /// structured grid using the (multi)linear element basis.
  template <class Derived>
  Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> interpolate(const Eigen::MatrixBase<Derived>& f,
                                                                           const Point& x) const {
    require(structured(), ErrorCode::InvalidArgument, "interpolate needs a structured grid");
    Point g = grid_coords(x);
    auto locate = [&](double c, int n, int& i, double& s) {
      i = static_cast<int>(std::floor(c));
      if (!grid_.periodic) {
        if (c < -1e-9 || c > n + 1e-9) fail(ErrorCode::MarginTooSmall, "interpolation point outside grid");
        i = std::clamp(i, 0, n - 1);
      }
      s = c - i;
    };
    int i, j = 0;
    double s, t = 0.0;
    locate(g[0], grid_.cells[0], i, s);
    if (dim_ == 1) return (1.0 - s) * f.row(grid_node(i, 0)) + s * f.row(grid_node(i + 1, 0));
    locate(g[1], grid_.cells[1], j, t);
    return (1.0 - s) * (1.0 - t) * f.row(grid_node(i, j)) + s * (1.0 - t) * f.row(grid_node(i + 1, j)) +
           s * t * f.row(grid_node(i + 1, j + 1)) + (1.0 - s) * t * f.row(grid_node(i, j + 1));
  }

  /// Structured element containing x (wrapping on periodic grids) and the
  /// local reference coordinates in [0, 1]^d.
  int locate_element(const Point& x, Point& local) const {
    require(structured(), ErrorCode::InvalidArgument, "locate_element needs a structured grid");
    Point g = grid_coords(x);
    int idx[2] = {0, 0};
    for (int k = 0; k < dim_; ++k) {
      const int n = grid_.cells[k];
      int i = static_cast<int>(std::floor(g[k]));
      double s = g[k] - i;
      if (grid_.periodic) {
        i = ((i % n) + n) % n;
      } else {
        if (g[k] < -1e-9 || g[k] > n + 1e-9) fail(ErrorCode::MarginTooSmall, "point outside grid");
        if (i < 0) { i = 0; s = g[k]; }
        if (i >= n) { i = n - 1; s = g[k] - i; }
      }
      idx[k] = i;
      local[k] = s;
    }
    if (dim_ == 1) local[1] = 0.0;
    return idx[0] + grid_.cells[0] * idx[1];
  }

  /// Shape values and physical gradients at reference coordinates of a
  /// structured element.
  void structured_basis(const Point& local, double N[4], double dN[4][2]) const {
    if (dim_ == 1) {
      const double inv = 1.0 / (grid_.A(0, 0) * grid_.h);
      N[0] = 1.0 - local[0];
      N[1] = local[0];
      dN[0][0] = -inv;
      dN[1][0] = inv;
      dN[0][1] = dN[1][1] = 0.0;
      return;
    }
    const double s = local[0], t = local[1];
    N[0] = (1 - s) * (1 - t);
    N[1] = s * (1 - t);
    N[2] = s * t;
    N[3] = (1 - s) * t;
    const double dref[4][2] = {{-(1 - t), -(1 - s)}, {(1 - t), -s}, {t, s}, {-t, (1 - s)}};
    // grad_x = J^{-T} grad_ref, J = A h.
    for (int a = 0; a < 4; ++a)
      for (int k = 0; k < 2; ++k)
        dN[a][k] = (grid_.Ainv(0, k) * dref[a][0] + grid_.Ainv(1, k) * dref[a][1]) / grid_.h;
  }

  ElementData element(int e) const {
    ElementData ed;
    ed.nv = nv_;
    ed.nq = nq_;
    const int* en = element_nodes(e);
    for (int a = 0; a < nv_; ++a) ed.nodes[a] = en[a];
    if (structured()) {
      const int i = dim_ == 2 ? e % grid_.cells[0] : e;
      const int j = dim_ == 2 ? e / grid_.cells[0] : 0;
      const Point anchor = grid_point(i, j);
      ed.measure = ref_measure_;
      for (int q = 0; q < nq_; ++q) {
        ed.xq[q] = anchor;
        for (int k = 0; k < 2; ++k) ed.xq[q][k] += ref_offset_[q][k];
        ed.w[q] = ref_w_[q];
        for (int a = 0; a < nv_; ++a) {
          ed.N[q][a] = ref_N_[q][a];
          ed.dN[q][a][0] = ref_dN_[q][a][0];
          ed.dN[q][a][1] = ref_dN_[q][a][1];
        }
      }
      return ed;
    }
    // P1 triangle.
    const Point& p0 = nodes_[en[0]];
    const Point& p1 = nodes_[en[1]];
    const Point& p2 = nodes_[en[2]];
    const double j00 = p1[0] - p0[0], j01 = p2[0] - p0[0];
    const double j10 = p1[1] - p0[1], j11 = p2[1] - p0[1];
    const double det = j00 * j11 - j01 * j10;
    const double area = 0.5 * std::abs(det);
    ed.measure = area;
    // Gradients of barycentric coordinates.
    const double g[3][2] = {{(j10 - j11) / det, (j01 - j00) / det}, {j11 / det, -j01 / det}, {-j10 / det, j00 / det}};
    static constexpr double bary[3][3] = {
        {2.0 / 3, 1.0 / 6, 1.0 / 6}, {1.0 / 6, 2.0 / 3, 1.0 / 6}, {1.0 / 6, 1.0 / 6, 2.0 / 3}};
    for (int q = 0; q < 3; ++q) {
      ed.w[q] = area / 3.0;
      ed.xq[q] = Point{0.0, 0.0};
      for (int a = 0; a < 3; ++a) {
        const Point& pa = nodes_[en[a]];
        ed.xq[q][0] += bary[q][a] * pa[0];
        ed.xq[q][1] += bary[q][a] * pa[1];
        ed.N[q][a] = bary[q][a];
        ed.dN[q][a][0] = g[a][0];
        ed.dN[q][a][1] = g[a][1];
      }
    }
    return ed;
  }

  /// Line-based dump: header, "v x y" per node, "e n0 n1 ..." per element.
  void write(std::ostream& os) const {
    os << "mesh " << id_ << " " << to_string(kind_) << " dim " << dim_ << " nodes " << num_nodes() << " elements "
       << num_elements() << "\n";
    char buf[96];
    for (const auto& p : nodes_) {
      std::snprintf(buf, sizeof buf, "v %.17g %.17g\n", p[0], p[1]);
      os << buf;
    }
    for (int e = 0; e < num_elements(); ++e) {
      os << "e";
      for (int a = 0; a < nv_; ++a) os << " " << element_nodes(e)[a];
      os << "\n";
    }
  }

 private:
  void init_structured(const Lattice& lat, const Point& origin, double h, std::array<int, 2> cells,
                       bool periodic) {
    dim_ = lat.dim();
    require(h > 0.0 && cells[0] >= 1 && (dim_ == 1 || cells[1] >= 1), ErrorCode::InvalidArgument,
            "invalid structured grid");
    if (dim_ == 1) cells[1] = 1;
    grid_.A = Eigen::Matrix2d::Identity();
    grid_.A.topLeftCorner(dim_, dim_) = lat.basis();
    grid_.Ainv = grid_.A.inverse();
    grid_.origin = origin;
    grid_.h = h;
    grid_.cells = cells;
    grid_.periodic = periodic;
    etype_ = dim_ == 1 ? ElementType::Seg2 : ElementType::Quad4;
    nv_ = dim_ == 1 ? 2 : 4;
    nq_ = dim_ == 1 ? 2 : 4;

    auto nn = grid_nodes();
    nodes_.resize(static_cast<std::size_t>(nn[0]) * nn[1]);
    boundary_.assign(nodes_.size(), 0);
    for (int j = 0; j < nn[1]; ++j)
      for (int i = 0; i < nn[0]; ++i) {
        const int id = grid_node(i, j);
        nodes_[id] = grid_point(i, j);
        if (!periodic) {
          bool b = i == 0 || i == nn[0] - 1;
          if (dim_ == 2) b = b || j == 0 || j == nn[1] - 1;
          boundary_[id] = b;
        }
      }
    conn_.reserve(static_cast<std::size_t>(cells[0]) * cells[1] * nv_);
    for (int j = 0; j < cells[1]; ++j)
      for (int i = 0; i < cells[0]; ++i) {
        if (dim_ == 1) {
          conn_.push_back(grid_node(i, 0));
          conn_.push_back(grid_node(i + 1, 0));
        } else {
          conn_.push_back(grid_node(i, j));
          conn_.push_back(grid_node(i + 1, j));
          conn_.push_back(grid_node(i + 1, j + 1));
          conn_.push_back(grid_node(i, j + 1));
        }
      }

    // Reference element data, identical for every element.
    const double gp = 0.5 / std::sqrt(3.0);
    const double gauss[2] = {0.5 - gp, 0.5 + gp};
    Eigen::Matrix2d J = grid_.A * h;
    const double detJ = dim_ == 1 ? std::abs(J(0, 0)) : std::abs(J.determinant());
    ref_measure_ = detJ;
    h_max_ = 0.0;
    if (dim_ == 1) {
      h_max_ = detJ;
      for (int q = 0; q < 2; ++q) {
        ref_xq_[q] = Point{gauss[q], 0.0};
        ref_w_[q] = 0.5 * detJ;
      }
    } else {
      // Longest element edge.
      h_max_ = std::max(J.col(0).norm(), J.col(1).norm());
      int q = 0;
      for (int b = 0; b < 2; ++b)
        for (int a = 0; a < 2; ++a) {
          ref_xq_[q] = Point{gauss[a], gauss[b]};
          ref_w_[q] = 0.25 * detJ;
          ++q;
        }
    }
    for (int q = 0; q < nq_; ++q) {
      double N[4], dN[4][2];
      structured_basis(ref_xq_[q], N, dN);
      for (int a = 0; a < nv_; ++a) {
        ref_N_[q][a] = N[a];
        ref_dN_[q][a][0] = dN[a][0];
        ref_dN_[q][a][1] = dN[a][1];
      }
      ref_offset_[q] = Point{J(0, 0) * ref_xq_[q][0] + (dim_ == 2 ? J(0, 1) * ref_xq_[q][1] : 0.0),
                             dim_ == 2 ? J(1, 0) * ref_xq_[q][0] + J(1, 1) * ref_xq_[q][1] : 0.0};
    }
    measure_ = detJ * cells[0] * cells[1];
  }

  static Mesh build_disk(double R, int K) {
    Mesh mesh;
    mesh.kind_ = MeshKind::Disk;
    mesh.dim_ = 2;
    mesh.etype_ = ElementType::Tri3;
    mesh.nv_ = 3;
    mesh.nq_ = 3;
    mesh.radius_ = R;
    mesh.rings_ = K;
    std::vector<int> ring_start(K + 2, 0);
    mesh.nodes_.push_back(Point{0.0, 0.0});
    ring_start[1] = 1;
    for (int k = 1; k <= K; ++k) {
      const int nk = 6 * k;
      const double r = (k == K) ? R : R * k / K;
      for (int j = 0; j < nk; ++j) {
        const double a = 2.0 * kPi * j / nk;
        mesh.nodes_.push_back(Point{r * std::cos(a), r * std::sin(a)});
      }
      ring_start[k + 1] = ring_start[k] + nk;
    }
    mesh.boundary_.assign(mesh.nodes_.size(), 0);
    for (int j = ring_start[K]; j < ring_start[K + 1]; ++j) mesh.boundary_[j] = 1;

    for (int k = 1; k <= K; ++k) {
      const int n1 = k == 1 ? 1 : 6 * (k - 1), n2 = 6 * k;
      const int s1 = k == 1 ? 0 : ring_start[k - 1], s2 = ring_start[k];
      int i = 0, j = 0;
      while (i < n1 || j < n2) {
        const double next_outer = double(j + 1) / n2;
        const double next_inner = n1 == 1 ? 2.0 : double(i + 1) / n1;
        if (j < n2 && (i >= n1 || next_outer <= next_inner)) {
          mesh.conn_.insert(mesh.conn_.end(), {s1 + (i % n1), s2 + (j % n2), s2 + ((j + 1) % n2)});
          ++j;
        } else {
          if (n1 == 1) break;
          mesh.conn_.insert(mesh.conn_.end(), {s1 + (i % n1), s2 + (j % n2), s1 + ((i + 1) % n1)});
          ++i;
        }
      }
    }
    mesh.h_max_ = 0.0;
    mesh.measure_ = 0.0;
    for (int e = 0; e < mesh.num_elements(); ++e) {
      const int* en = mesh.element_nodes(e);
      for (int a = 0; a < 3; ++a) {
        const Point& p = mesh.nodes_[en[a]];
        const Point& q = mesh.nodes_[en[(a + 1) % 3]];
        mesh.h_max_ = std::max(mesh.h_max_, std::hypot(p[0] - q[0], p[1] - q[1]));
      }
      const Point& p0 = mesh.nodes_[en[0]];
      const Point& p1 = mesh.nodes_[en[1]];
      const Point& p2 = mesh.nodes_[en[2]];
      mesh.measure_ += 0.5 * std::abs((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]));
    }
    return mesh;
  }

  MeshKind kind_ = MeshKind::Box;
  ElementType etype_ = ElementType::Seg2;
  int dim_ = 1;
  int nv_ = 2;
  int nq_ = 2;
  std::string id_;
  std::vector<Point> nodes_;
  std::vector<int> conn_;
  std::vector<char> boundary_;
  double h_max_ = 0.0;
  double measure_ = 0.0;
  double radius_ = 0.0;
  int rings_ = 0;
  StructuredInfo grid_;
  double ref_measure_ = 0.0;
  std::array<Point, 4> ref_xq_{};
  std::array<Point, 4> ref_offset_{};
  std::array<double, 4> ref_w_{};
  double ref_N_[4][4]{};
  double ref_dN_[4][4][2]{};
};

}  // namespace homog
