#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "homog/error.hpp"
#include "homog/types.hpp"

namespace homog {

/// Periodicity lattice generated by d <= 2 basis vectors, together with its
/// elementary cell, the dual lattice (<b_i, a_j> = 2 pi delta_ij) and the two
/// geometric radii r0 (half the shortest dual vector) and r1 (half the cell
/// diameter). Immutable after construction.
class Lattice {
 public:
  /// Throws DegenerateBasis when the vectors are (numerically) dependent.
  static Lattice build(const std::vector<std::vector<double>>& basis) {
    const int d = static_cast<int>(basis.size());
    require(d == 1 || d == 2, ErrorCode::InvalidArgument, "lattice dimension must be 1 or 2");
    Eigen::MatrixXd a(d, d);
    for (int j = 0; j < d; ++j) {
      require(static_cast<int>(basis[j].size()) == d, ErrorCode::InvalidArgument,
              "basis vector " + std::to_string(j) + " has wrong length");
      for (int i = 0; i < d; ++i) a(i, j) = basis[j][i];
    }
    return Lattice(a);
  }

  static Lattice unit(int d) { return Lattice(Eigen::MatrixXd::Identity(d, d)); }

  /// Reconstructs the lattice whose dual basis is given (columns of `dual`).
  static Lattice from_dual(const Eigen::MatrixXd& dual) {
    Eigen::MatrixXd a = 2.0 * kPi * dual.transpose().inverse();
    return Lattice(a);
  }

  explicit Lattice(const Eigen::MatrixXd& basis) : basis_(basis) {
    const int d = static_cast<int>(basis.rows());
    require(d == 1 || d == 2, ErrorCode::InvalidArgument, "lattice dimension must be 1 or 2");
    require(basis.cols() == d, ErrorCode::InvalidArgument, "basis matrix must be square");
    const double det = basis.determinant();
    double norms = 1.0;
    for (int j = 0; j < d; ++j) norms *= basis.col(j).norm();
    if (!(std::abs(det) > 1e-12 * norms) || !std::isfinite(det))
      fail(ErrorCode::DegenerateBasis, "basis vectors are linearly dependent");
    cell_measure_ = std::abs(det);
    inverse_ = basis.inverse();
    dual_ = 2.0 * kPi * inverse_.transpose();
    r0_ = 0.5 * shortest_dual_vector();
    r1_ = 0.5 * cell_diameter();
  }

  int dim() const { return static_cast<int>(basis_.rows()); }
  const Eigen::MatrixXd& basis() const { return basis_; }
  const Eigen::MatrixXd& dual_basis() const { return dual_; }
  double cell_measure() const { return cell_measure_; }
  double r0() const { return r0_; }
  double r1() const { return r1_; }

  Eigen::VectorXd basis_vector(int j) const { return basis_.col(j); }

  /// Fractional coordinates t with x = sum_j t_j a_j.
  Point to_fractional(const Point& x) const {
    Point t{0.0, 0.0};
    for (int i = 0; i < dim(); ++i)
      for (int j = 0; j < dim(); ++j) t[i] += inverse_(i, j) * x[j];
    return t;
  }

  Point from_fractional(const Point& t) const {
    Point x{0.0, 0.0};
    for (int i = 0; i < dim(); ++i)
      for (int j = 0; j < dim(); ++j) x[i] += basis_(i, j) * t[j];
    return x;
  }

  Lattice scaled(double s) const { return Lattice(s * basis_); }

  /// Largest deviation of <b_i, a_j> from 2 pi delta_ij, relative to 2 pi.
  double biorthogonality_defect() const {
    Eigen::MatrixXd g = dual_.transpose() * basis_;
    Eigen::MatrixXd target = 2.0 * kPi * Eigen::MatrixXd::Identity(dim(), dim());
    return (g - target).cwiseAbs().maxCoeff() / (2.0 * kPi);
  }

 private:
  // Integer combinations with coefficients in [-3, 3].
  double shortest_dual_vector() const {
    const int d = dim();
    double best = std::numeric_limits<double>::infinity();
    if (d == 1) return std::abs(dual_(0, 0));
    for (int k1 = -3; k1 <= 3; ++k1)
      for (int k2 = -3; k2 <= 3; ++k2) {
        if (k1 == 0 && k2 == 0) continue;
        Eigen::VectorXd v = k1 * dual_.col(0) + k2 * dual_.col(1);
        best = std::min(best, v.norm());
      }
    return best;
  }

  double cell_diameter() const {
    const int d = dim();
    std::vector<Eigen::VectorXd> vertices;
    for (int mask = 0; mask < (1 << d); ++mask) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
      for (int j = 0; j < d; ++j)
        if (mask & (1 << j)) v += basis_.col(j);
      vertices.push_back(v);
    }
    double diam = 0.0;
    for (const auto& p : vertices)
      for (const auto& q : vertices) diam = std::max(diam, (p - q).norm());
    return diam;
  }

  Eigen::MatrixXd basis_;
  Eigen::MatrixXd inverse_;
  Eigen::MatrixXd dual_;
  double cell_measure_ = 0.0;
  double r0_ = 0.0;
  double r1_ = 0.0;
};

}  // namespace homog
