#pragma once

#include <chrono>
#include <cstdio>
#include <cmath>
#include <memory>
#include <random>
#include <string>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>
#include <Eigen/UmfPackSupport>

#include "homog/error.hpp"
#include "homog/types.hpp"

namespace homog {

struct FactorStats {
  std::string method;
  double seconds = 0.0;
  Eigen::Index size = 0;
  Eigen::Index nonzeros = 0;
};

/// Direct factorization of a square sparse matrix A (real or complex),
/// with a backward-error check and up to two refinement steps per solve.
class SparseFactor {
 public:
  SparseFactor() = default;

  /// `real_ok` selects the real path (A must then have zero imaginary part);
  /// `spd_hint` tries LDL^T first.
  SparseFactor(const SparseC& A, bool real_ok, bool spd_hint) { factor(A, real_ok, spd_hint); }

  void factor(const SparseC& A, bool real_ok, bool spd_hint) {
    const auto t0 = std::chrono::steady_clock::now();
    A_ = A;
    Eigen::VectorXd rows = Eigen::VectorXd::Zero(A.rows());
    for (int k = 0; k < A.outerSize(); ++k)
      for (SparseC::InnerIterator it(A, k); it; ++it) rows(it.row()) += std::abs(it.value());
    norm_inf_ = rows.size() ? rows.maxCoeff() : 0.0;
    stats_.size = A.rows();
    stats_.nonzeros = A.nonZeros();
    real_ = real_ok;
    if (real_) {
      Ar_ = A.real();
      bool done = false;
      if (spd_hint) {
        ldlt_ = std::make_unique<Eigen::SimplicialLDLT<SparseR>>();
        ldlt_->compute(Ar_);
        if (ldlt_->info() == Eigen::Success && ldlt_->vectorD().allFinite() &&
            ldlt_->vectorD().cwiseAbs().minCoeff() > 1e-300) {
          done = true;
          stats_.method = "ldlt";
        } else {
          ldlt_.reset();
        }
      }
      if (!done) {
        lur_ = std::make_unique<Eigen::SparseLU<SparseR>>();
        lur_->analyzePattern(Ar_);
        lur_->factorize(Ar_);
        if (lur_->info() != Eigen::Success)
          fail(ErrorCode::ShiftOnSpectrum, "real factorization failed: " + lur_->lastErrorMessage());
        stats_.method = "lu-real";
      }
    } else {
      luc_ = std::make_unique<Eigen::UmfPackLU<SparseC>>();
      luc_->umfpackControl()(UMFPACK_IRSTEP) = 0;
      luc_->compute(A);
      if (luc_->info() != Eigen::Success) fail(ErrorCode::ShiftOnSpectrum, "complex factorization failed");
      stats_.method = "umfpack";
    }
    stats_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  const FactorStats& stats() const { return stats_; }

  MatrixXc solve(const MatrixXc& b) const {
    MatrixXc x = raw_solve(b);
    for (int step = 0; step < 3; ++step) {
      MatrixXc r = b - A_ * x;
      // Normwise backward error |r| / (|A| |x| + |b|) in the max norm.
      double worst = 0.0;
      for (Eigen::Index c = 0; c < b.cols(); ++c) {
        const double scale = norm_inf_ * x.col(c).cwiseAbs().maxCoeff() + b.col(c).cwiseAbs().maxCoeff();
        const double rn = r.col(c).cwiseAbs().maxCoeff();
        worst = std::max(worst, scale > 0 ? rn / scale : rn);
      }
      last_residual_ = worst;
      if (!x.allFinite()) fail(ErrorCode::ShiftOnSpectrum, "solution is not finite");
      if (worst <= 1e-12) return x;
      if (step == 2) break;
      x += raw_solve(r);
    }
    if (last_residual_ > 1e-10)
    {
      char buf[64];
      std::snprintf(buf, sizeof buf, "relative residual %.3e", last_residual_);
      fail(ErrorCode::ResidualTooLarge, buf);
    }
    return x;
  }

  VectorXc solve(const VectorXc& b) const { return solve(MatrixXc(b)).col(0); }

  double last_residual() const { return last_residual_; }

 private:
  MatrixXc raw_solve(const MatrixXc& b) const {
    if (real_) {
      Eigen::MatrixXd re = b.real(), im = b.imag();
      Eigen::MatrixXd xr, xi;
      if (ldlt_) {
        xr = ldlt_->solve(re);
        xi = ldlt_->solve(im);
      } else {
        xr = lur_->solve(re);
        xi = lur_->solve(im);
      }
      MatrixXc x(b.rows(), b.cols());
      x.real() = xr;
      x.imag() = xi;
      return x;
    }
    MatrixXc x(b.rows(), b.cols());
    for (Eigen::Index c = 0; c < b.cols(); ++c) x.col(c) = luc_->solve(b.col(c));
    return x;
  }

  SparseC A_;
  double norm_inf_ = 0.0;
  SparseR Ar_;
  bool real_ = false;
  std::unique_ptr<Eigen::SimplicialLDLT<SparseR>> ldlt_;
  std::unique_ptr<Eigen::SparseLU<SparseR>> lur_;
  std::unique_ptr<Eigen::UmfPackLU<SparseC>> luc_;
  FactorStats stats_;
  mutable double last_residual_ = 0.0;
};

struct EigenPairs {
  Eigen::VectorXd values;
  MatrixXc vectors;  // M-orthonormal columns
  int iterations = 0;
};

/// Lowest `count` eigenpairs of K x = lambda M x (K Hermitian PSD, M HPD)
/// by block shift-invert subspace iteration around -shift with a
/// Rayleigh-Ritz step per sweep.
inline EigenPairs lowest_eigenpairs(const SparseC& K, const SparseC& M, int count, double shift, bool real,
                                    std::uint64_t seed = 11, int max_iter = 300, double tol = 1e-11) {
  const Eigen::Index n = K.rows();
  require(count >= 1 && count < n, ErrorCode::InvalidArgument, "invalid eigenpair count");
  const int block = static_cast<int>(std::min<Eigen::Index>(n, count + std::max(4, count)));
  SparseC A = K + shift * M;
  SparseFactor fac(A, real, true);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  MatrixXc X(n, block);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < block; ++j) X(i, j) = real ? cplx(nd(rng), 0.0) : cplx(nd(rng), nd(rng));
  EigenPairs out;
  Eigen::VectorXd prev = Eigen::VectorXd::Constant(count, std::numeric_limits<double>::infinity());
  for (int it = 1; it <= max_iter; ++it) {
    MatrixXc Y = fac.solve(MatrixXc(M * X));
    MatrixXc Kr = Y.adjoint() * (K * Y);
    MatrixXc Mr = Y.adjoint() * (M * Y);
    Kr = 0.5 * (Kr + Kr.adjoint()).eval();
    Mr = 0.5 * (Mr + Mr.adjoint()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXc> ges(Kr, Mr);
    if (ges.info() != Eigen::Success) fail(ErrorCode::EigensolveFailed, "Rayleigh-Ritz step failed");
    X = Y * ges.eigenvectors();
    Eigen::VectorXd vals = ges.eigenvalues().head(count);
    const double scale = std::max(std::abs(vals(count - 1)), 1e-300);
    const double change = (vals - prev).cwiseAbs().maxCoeff() / scale;
    prev = vals;
    out.iterations = it;
    if (change < tol && it > 2) {
      out.values = vals;
      out.vectors = X.leftCols(count);
      return out;
    }
  }
  fail(ErrorCode::EigensolveFailed, "subspace iteration did not converge");
}

}  // namespace homog
