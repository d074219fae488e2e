#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "homog/error.hpp"
#include "homog/grid_field.hpp"
#include "homog/mesh.hpp"

namespace homog {

namespace detail {

// int_a^b max(0, 1 - |y|) dy.
inline double hat_integral(double a, double b) {
  auto F = [](double y) {
    y = std::clamp(y, -1.0, 1.0);
    return y >= 0 ? y - 0.5 * y * y + 0.5 : 0.5 * (1.0 + y) * (1.0 + y);
  };
  return b > a ? F(b) - F(a) : 0.0;
}

// Averaging weights over the window [-s/2, s/2] (grid units), for nodal
// (piecewise-linear) or cellwise (piecewise-constant) data. Offsets run
// from `first` upward; for cell data offset c is the cell [c, c + 1].
struct Window {
  int first = 0;
  std::vector<double> w;
  int last() const { return first + static_cast<int>(w.size()) - 1; }
};

inline Window window_weights(int s, bool cells) {
  Window win;
  const double half = 0.5 * s;
  const int reach = s / 2 + 2;
  std::vector<std::pair<int, double>> all;
  for (int o = -reach; o <= reach; ++o) {
    double v;
    if (cells) {
      v = std::max(0.0, std::min<double>(o + 1, half) - std::max<double>(o, -half));
    } else {
      v = hat_integral(-half - o, half - o);
    }
    if (v > 1e-15) all.emplace_back(o, v / s);
  }
  win.first = all.front().first;
  for (const auto& [o, v] : all) win.w.push_back(v);
  return win;
}

// out[i] = sum_k w[k] in[i + first + k + shift], for i in [0, count).
// The dominant equal-weight run is applied with prefix sums.
inline void window_apply(const cplx* in, std::ptrdiff_t stride_in, std::ptrdiff_t len_in, bool periodic,
                         const Window& win, std::ptrdiff_t shift, cplx* out, std::ptrdiff_t stride_out,
                         std::ptrdiff_t count) {
  const int K = static_cast<int>(win.w.size());
  int a = 0, b = -1;
  {
    // Longest run of equal weights.
    int best = 0;
    for (int i = 0; i < K;) {
      int j = i;
      while (j + 1 < K && std::abs(win.w[j + 1] - win.w[i]) <= 1e-15 * win.w[i]) ++j;
      if (j - i + 1 > best) {
        best = j - i + 1;
        a = i;
        b = j;
      }
      i = j + 1;
    }
  }
  const std::ptrdiff_t lo = shift + win.first, hi = shift + win.last();
  const std::ptrdiff_t ext_lo = lo, ext_len = count + (hi - lo);
  std::vector<cplx> ext(static_cast<std::size_t>(ext_len));
  for (std::ptrdiff_t i = 0; i < ext_len; ++i) {
    std::ptrdiff_t src = ext_lo + i;
    if (periodic) {
      src %= len_in;
      if (src < 0) src += len_in;
    } else if (src < 0 || src >= len_in) {
      fail(ErrorCode::MarginTooSmall, "smoothing window leaves the grid");
    }
    ext[i] = in[src * stride_in];
  }
  std::vector<cplx> prefix(static_cast<std::size_t>(ext_len) + 1, 0.0);
  for (std::ptrdiff_t i = 0; i < ext_len; ++i) prefix[i + 1] = prefix[i] + ext[i];
  const double c = win.w[a];
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    // ext index of offset k for output i: i + k.
    cplx acc = c * (prefix[i + b + 1] - prefix[i + a]);
    for (int k = 0; k < a; ++k) acc += win.w[k] * ext[i + k];
    for (int k = b + 1; k < K; ++k) acc += win.w[k] * ext[i + k];
    out[i * stride_out] = acc;
  }
}

}  // namespace detail

struct SmoothedField {
  std::shared_ptr<const Mesh> mesh;  // the input mesh (torus) or the cropped box
  GridField field;                   // nodal values on `mesh`
};

/// Steklov average (S_eps u)(x) = |Omega|^{-1} int_Omega u(x - eps z) dz,
/// with Omega the centred cell {sum t_j a_j : t in [-1/2, 1/2)^d}. The input
/// is either a nodal field (interpreted as its (multi)linear interpolant) or
/// a cell field (constant per element); the integral is exact for both.
/// Periodic grids return a field on the same grid; box grids return the
/// sub-grid of nodes whose window stays inside the data.
inline SmoothedField steklov_smooth(const GridField& u, const std::shared_ptr<const Mesh>& mesh_ptr, double eps) {
  const Mesh& mesh = *mesh_ptr;
  require(mesh.structured(), ErrorCode::InvalidArgument, "Steklov smoothing needs a structured grid");
  require(eps > 0.0, ErrorCode::InvalidArgument, "eps must be positive");
  require(u.mesh_id == mesh.id(), ErrorCode::MeshMismatch, "field does not live on this mesh");
  const bool cells = u.location == FieldLocation::Cells;
  require(cells || u.location == FieldLocation::Nodes, ErrorCode::InvalidArgument,
          "Steklov smoothing needs nodal or cell data");
  const auto& g = mesh.grid();
  const double ratio = eps / g.h;
  const int s = static_cast<int>(std::lround(ratio));
  if (s < 1 || std::abs(ratio - s) > 1e-9 * ratio)
    fail(ErrorCode::IncommensurateEps, "eps / h = " + std::to_string(ratio) + " is not an integer");
  const detail::Window win = detail::window_weights(s, cells);
  const int d = mesh.dim();
  const auto nn = mesh.grid_nodes();
  const int ncell[2] = {g.cells[0], d == 2 ? g.cells[1] : 1};
  const int len_in[2] = {cells ? ncell[0] : nn[0], cells ? ncell[1] : nn[1]};

  // Output node ranges.
  int crop[2] = {0, 0}, count[2] = {nn[0], nn[1]};
  if (!g.periodic) {
    for (int k = 0; k < d; ++k) {
      // Output node i reads data indices i + first .. i + last.
      crop[k] = std::max(0, -win.first);
      const int max_i = len_in[k] - 1 - win.last();
      count[k] = max_i - crop[k] + 1;
      if (count[k] < 2) fail(ErrorCode::MarginTooSmall, "grid too small for the smoothing window");
    }
  }
  const Eigen::Index ncomp = u.values.cols();
  std::shared_ptr<const Mesh> out_mesh = mesh_ptr;
  if (!g.periodic)
    out_mesh = std::make_shared<Mesh>(
        mesh.sub_box({crop[0], crop[1]}, {count[0] - 1, d == 2 ? count[1] - 1 : 1}, mesh.id() + "/smoothed"));

  // Pass along axis 0: data (len_in[0] x len_in[1]) -> (count[0] x len_in[1]).
  MatrixXc tmp(static_cast<Eigen::Index>(count[0]) * len_in[1], ncomp);
  for (Eigen::Index c = 0; c < ncomp; ++c)
    for (int j = 0; j < len_in[1]; ++j)
      detail::window_apply(u.values.col(c).data() + static_cast<std::ptrdiff_t>(j) * len_in[0], 1, len_in[0],
                           g.periodic, win, crop[0], tmp.col(c).data() + static_cast<std::ptrdiff_t>(j) * count[0],
                           1, count[0]);
  GridField out(out_mesh->id(), FieldLocation::Nodes, u.rows, u.cols,
                static_cast<Eigen::Index>(count[0]) * (d == 2 ? count[1] : 1));
  if (d == 1) {
    out.values = tmp;
    return {out_mesh, out};
  }
  for (Eigen::Index c = 0; c < ncomp; ++c)
    for (int i = 0; i < count[0]; ++i)
      detail::window_apply(tmp.col(c).data() + i, count[0], len_in[1], g.periodic, win, crop[1],
                           out.values.col(c).data() + i, count[0], count[1]);
  return {out_mesh, out};
}

}  // namespace homog
