#pragma once

#include <array>
#include <complex>
#include <numbers>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace homog {

using cplx = std::complex<double>;
using VectorXc = Eigen::VectorXcd;
using MatrixXc = Eigen::MatrixXcd;
using SparseC = Eigen::SparseMatrix<cplx>;
using SparseR = Eigen::SparseMatrix<double>;

/// Coefficient and symbol blocks never exceed 4x4 (m <= 4), so they live on
/// the stack.
using SmallMat = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;
using SmallVec = Eigen::Matrix<cplx, Eigen::Dynamic, 1, 0, 4, 1>;

/// A point in R^d for d <= 2; unused trailing coordinates stay zero.
using Point = std::array<double, 2>;

inline constexpr double kPi = std::numbers::pi;

}  // namespace homog
