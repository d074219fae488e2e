#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "homog/coefficient.hpp"
#include "homog/symbol.hpp"

using namespace homog;

TEST(Symbol, GradientAtXi) {
  auto sym = gradient_symbol(2);
  const double xi[2] = {3.0, 4.0};
  SmallMat v = symbol_at(sym, std::span<const double>(xi, 2));
  ASSERT_EQ(v.rows(), 2);
  ASSERT_EQ(v.cols(), 1);
  EXPECT_EQ(v(0, 0), cplx(3.0));
  EXPECT_EQ(v(1, 0), cplx(4.0));
}

TEST(Symbol, ZeroXiGivesZero) {
  for (const auto& sym : {gradient_symbol(2), gradient_symbol(2, 2), elasticity2d_symbol(), gradient_symbol(1)}) {
    std::vector<double> xi(sym.d, 0.0);
    EXPECT_EQ(symbol_at(sym, std::span<const double>(xi)).norm(), 0.0);
  }
}

TEST(Symbol, ElasticityMatchesDirectSum) {
  auto sym = elasticity2d_symbol();
  const double xi[2] = {1.0, 0.0};
  SmallMat v = symbol_at(sym, std::span<const double>(xi, 2));
  // Direct sum: 1 * b1 + 0 * b2, b1 maps u to (u1, 0, u2 / sqrt 2).
  MatrixXc expect = MatrixXc::Zero(3, 2);
  expect(0, 0) = 1.0;
  expect(2, 1) = 1.0 / std::sqrt(2.0);
  EXPECT_LT((MatrixXc(v) - expect).norm(), 1e-15);
  // Symmetric gradient check at a generic xi: rows are xi1 u1, xi2 u2, (xi2 u1 + xi1 u2)/sqrt 2.
  const double z[2] = {0.3, -1.7};
  SmallMat w = symbol_at(sym, std::span<const double>(z, 2));
  EXPECT_NEAR(w(0, 0).real(), 0.3, 1e-15);
  EXPECT_NEAR(w(1, 1).real(), -1.7, 1e-15);
  EXPECT_NEAR(w(2, 0).real(), -1.7 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(w(2, 1).real(), 0.3 / std::sqrt(2.0), 1e-15);
}

TEST(Symbol, GradientEllipticityConstants) {
  auto rep = validate_symbol(gradient_symbol(2), 1000);
  EXPECT_NEAR(rep.alpha0, 1.0, 1e-12);
  EXPECT_NEAR(rep.alpha1, 1.0, 1e-12);
  EXPECT_TRUE(rep.complex_rank_ok);
  EXPECT_EQ(rep.garding.first, 1.0);
  EXPECT_EQ(rep.garding.second, 0.0);
}

TEST(Symbol, RankDeficientRejected) {
  MatrixXc b1 = MatrixXc::Zero(2, 1), b2 = MatrixXc::Zero(2, 1);
  b1(0, 0) = 1.0;
  auto sym = make_symbol("broken", {b1, b2});
  try {
    validate_symbol(sym, 200);
    FAIL() << "expected RankDeficient";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RankDeficient);
  }
}

TEST(Symbol, GradientComplexXiSingularValue) {
  auto sym = gradient_symbol(2);
  const cplx xi[2] = {1.0, cplx(0.0, 1.0)};
  SmallMat v = symbol_at(sym, std::span<const cplx>(xi, 2));
  Eigen::JacobiSVD<MatrixXc> svd{MatrixXc(v)};
  EXPECT_NEAR(svd.singularValues()(0), std::sqrt(2.0), 1e-14);
  EXPECT_TRUE(validate_symbol(sym, 200).complex_rank_ok);
}

TEST(Symbol, ComplexRankFailureDetected) {
  // b(xi) = xi1 + i xi2 vanishes at xi = (1, i) but never on real directions.
  MatrixXc b1 = MatrixXc::Constant(1, 1, 1.0), b2 = MatrixXc::Constant(1, 1, cplx(0.0, 1.0));
  auto rep = validate_symbol(make_symbol("cr", {b1, b2}), 500);
  EXPECT_NEAR(rep.alpha0, 1.0, 1e-12);
  EXPECT_FALSE(rep.complex_rank_ok);
}

TEST(Symbol, ElasticityConstantsAndComplexRank) {
  auto rep = validate_symbol(elasticity2d_symbol(), 2000);
  // b(theta)^* b(theta) = [[c^2 + s^2/2, cs/2], [cs/2, s^2 + c^2/2]] has eigenvalues 1/2 and 1.
  EXPECT_NEAR(rep.alpha0, 0.5, 1e-10);
  EXPECT_NEAR(rep.alpha1, 1.0, 1e-10);
  EXPECT_TRUE(rep.complex_rank_ok);
  for (const auto& b : elasticity2d_symbol().b) {
    Eigen::JacobiSVD<MatrixXc> svd(b);
    EXPECT_LE(svd.singularValues()(0), std::sqrt(rep.alpha1) + 1e-12);
  }
}

TEST(Symbol, RotationInvariance) {
  for (const auto& sym : {elasticity2d_symbol(), gradient_symbol(2, 2)}) {
    auto a = validate_symbol(sym, 10000, 0.0);
    auto b = validate_symbol(sym, 10000, 0.6180339887);
    EXPECT_NEAR(a.alpha0, b.alpha0, 0.02 * a.alpha0);
    EXPECT_NEAR(a.alpha1, b.alpha1, 0.02 * a.alpha1);
  }
}

TEST(Symbol, TooFewSamples) { EXPECT_THROW(validate_symbol(gradient_symbol(2), 50), Error); }

TEST(Coefficient, ConstantBounds) {
  auto c = coefficient_registry("constant", {{"value", 1.0}}, Lattice::unit(2), 2);
  EXPECT_DOUBLE_EQ(c.bounds().g_sup, 1.0);
  EXPECT_DOUBLE_EQ(c.bounds().ginv_sup, 1.0);
}

TEST(Coefficient, LayeredBounds) {
  auto c = coefficient_registry("layered1d", {{"g_minus", 1}, {"g_plus", 4}, {"fraction", 0.5}}, Lattice::unit(1), 1);
  EXPECT_DOUBLE_EQ(c.bounds().g_sup, 4.0);
  EXPECT_DOUBLE_EQ(c.bounds().ginv_sup, 1.0);
}

TEST(Coefficient, TrigBoundsAgainstDenseGrid) {
  auto c = coefficient_registry("trig2d", {{"mean", 2}, {"amplitude", 1}}, Lattice::unit(2), 2);
  // Dense extremum oracle of 2 + sin(2 pi t).
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i <= 100000; ++i) {
    const double v = 2.0 + std::sin(2.0 * kPi * i / 100000.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_NEAR(c.bounds().g_sup, hi, 2e-3);
  EXPECT_NEAR(1.0 / c.bounds().ginv_sup, lo, 2e-3);
}

TEST(Coefficient, RegistryErrors) {
  auto lat = Lattice::unit(1);
  try {
    coefficient_registry("nope", {}, lat, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownModel);
  }
  try {
    coefficient_registry("layered1d", {{"g_minus", -1.0}}, lat, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonPositivePhase);
  }
  try {
    coefficient_registry("layered1d", {{"fraction", 1.5}}, lat, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidFraction);
  }
}

TEST(Coefficient, RegistryInvariants) {
  auto lat = Lattice::build({{1.0, 0.0}, {0.5, 0.8660254037844386}});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (const auto& name : {"constant", "layered2d", "trig2d", "checkerboard2d", "crossdiag2d"}) {
    auto c = coefficient_registry(name, {}, lat, 2);
    const double lo = 1.0 / c.bounds().ginv_sup, hi = c.bounds().g_sup;
    for (const auto& t : c.cell_grid(64)) {
      MatrixXc g = c.at_fractional(t);
      EXPECT_LT((g - g.adjoint()).norm(), 1e-12) << name;
      Eigen::SelfAdjointEigenSolver<MatrixXc> es(g);
      EXPECT_GE(es.eigenvalues().minCoeff(), lo - 1e-10) << name;
      EXPECT_LE(es.eigenvalues().maxCoeff(), hi + 1e-10) << name;
    }
    for (int k = 0; k < 20; ++k) {
      Point x{u(rng), u(rng)};
      for (int j = 0; j < 2; ++j) {
        Point y{x[0] + lat.basis()(0, j), x[1] + lat.basis()(1, j)};
        EXPECT_LT(MatrixXc(c.at(x) - c.at(y)).norm(), 1e-12) << name;
      }
    }
  }
}
