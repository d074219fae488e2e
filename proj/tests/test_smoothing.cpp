#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "homog/assembly.hpp"
#include "homog/cell_solver.hpp"
#include "homog/smoothing.hpp"

using namespace homog;

namespace {

std::shared_ptr<const Mesh> torus(const Lattice& lat, double periods, int n, const std::string& id = "t") {
  return std::make_shared<Mesh>(Mesh::torus(lat, periods, n, id));
}

GridField nodal(const Mesh& mesh, const std::function<cplx(const Point&)>& f) {
  GridField out(mesh.id(), FieldLocation::Nodes, 1, 1, mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i) out.values(i, 0) = f(mesh.node(i));
  return out;
}

// L2 norm of the nodal interpolant through the consistent mass matrix.
double l2(const Mesh&, const SparseC& M, const GridField& f) {
  VectorXc v = f.values.col(0);
  return std::sqrt(std::abs(v.dot(M * v)));
}

double grad_l2(const Mesh& mesh, const GridField& f) {
  double acc = 0.0;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    for (int q = 0; q < ed.nq; ++q) {
      cplx g[2] = {0.0, 0.0};
      for (int a = 0; a < ed.nv; ++a)
        for (int l = 0; l < mesh.dim(); ++l) g[l] += ed.dN[q][a][l] * f.values(ed.nodes[a], 0);
      acc += ed.w[q] * (std::norm(g[0]) + std::norm(g[1]));
    }
  }
  return std::sqrt(acc);
}

SparseC mass(const Mesh& mesh) {
  auto sym = gradient_symbol(mesh.dim());
  return assemble_forms(mesh, sym, [&](const Point&) { return SmallMat(SmallMat::Identity(sym.m, sym.m)); }).M;
}

}  // namespace

TEST(Steklov, WindowWeightsSumToOne) {
  for (int s = 1; s <= 9; ++s)
    for (bool cells : {false, true}) {
      auto w = detail::window_weights(s, cells);
      double sum = 0.0;
      for (double v : w.w) {
        sum += v;
        EXPECT_GE(v, 0.0);
      }
      EXPECT_NEAR(sum, 1.0, 1e-14) << s << " " << cells;
    }
}

TEST(Steklov, ConstantsPreserved) {
  auto lat = Lattice::unit(2);
  auto m = torus(lat, 1.0, 32);
  auto u = nodal(*m, [](const Point&) { return cplx(2.0, -1.0); });
  auto r = steklov_smooth(u, m, 0.25);
  EXPECT_LT((r.field.values.array() - cplx(2.0, -1.0)).abs().maxCoeff(), 1e-14);
}

TEST(Steklov, LinearFunctionPreservedOnInterval) {
  auto lat = Lattice::unit(1);
  auto m = std::make_shared<Mesh>(Mesh::interval(lat, -1.0, 1.0, 200, "iv"));
  auto u = nodal(*m, [](const Point& x) { return cplx(x[0]); });
  for (double eps : {0.05, 0.1, 0.15}) {
    auto r = steklov_smooth(u, m, eps);
    for (int i = 0; i < r.mesh->num_nodes(); ++i) EXPECT_NEAR(r.field.values(i, 0).real(), r.mesh->node(i)[0], 1e-14);
    EXPECT_LT(r.mesh->num_nodes(), m->num_nodes());
  }
}

TEST(Steklov, SincFactor) {
  // Exact average of e^{ikx} over (x - eps/2, x + eps/2) is sinc(k eps / 2) e^{ikx}.
  auto lat = Lattice::unit(1);
  auto m = torus(lat, 1.0, 65536, "fine");
  const double eps = 0.25;
  for (int mode : {1, 2}) {
    const double k = 2.0 * kPi * mode;
    auto u = nodal(*m, [k](const Point& x) { return std::exp(cplx(0.0, k * x[0])); });
    auto r = steklov_smooth(u, m, eps);
    const double t = 0.5 * k * eps, sinc = std::sin(t) / t;
    double err = 0.0;
    for (int i = 0; i < m->num_nodes(); i += 97) err = std::max(err, std::abs(r.field.values(i, 0) - sinc * u.values(i, 0)));
    EXPECT_LT(err, 1e-8) << mode;
  }
}

TEST(Steklov, IncommensurateRejected) {
  auto m = torus(Lattice::unit(1), 1.0, 64);
  auto u = nodal(*m, [](const Point&) { return cplx(1.0); });
  try {
    steklov_smooth(u, m, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncommensurateEps);
  }
}

TEST(Steklov, MarginTooSmall) {
  auto m = std::make_shared<Mesh>(Mesh::interval(Lattice::unit(1), 0.0, 1.0, 16, "iv"));
  auto u = nodal(*m, [](const Point&) { return cplx(1.0); });
  try {
    steklov_smooth(u, m, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MarginTooSmall);
  }
}

TEST(Steklov, ContractionOnRandomFields) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  auto hex = Lattice::build({{1.0, 0.0}, {0.5, 0.8660254037844386}});
  auto m2 = torus(hex, 1.0, 48, "hex");
  auto m1 = torus(Lattice::unit(1), 2.0, 256, "line");
  const SparseC M2 = mass(*m2), M1 = mass(*m1);
  for (int trial = 0; trial < 100; ++trial) {
    const bool two = trial % 2 == 0;
    auto& m = two ? m2 : m1;
    GridField u(m->id(), FieldLocation::Nodes, 1, 1, m->num_nodes());
    for (int i = 0; i < m->num_nodes(); ++i) u.values(i, 0) = cplx(nd(rng), nd(rng));
    const double eps = two ? (trial % 4 == 0 ? 1.0 / 8 : 1.0 / 16) : 0.125 * (1 + trial % 3);
    auto r = steklov_smooth(u, m, eps);
    const SparseC& M = two ? M2 : M1;
    EXPECT_LE(l2(*m, M, r.field), l2(*m, M, u) * (1.0 + 1e-12));
    const double a = r.field.values.col(0).norm(), b = u.values.col(0).norm();
    EXPECT_LE(a, b * (1.0 + 1e-12));
  }
}

TEST(Steklov, ApproximationBound) {
  // |S_eps u - u| <= eps r1 |Du| for smooth periodic u.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
  std::uniform_int_distribution<int> kk(-3, 3);
  auto lat = Lattice::build({{1.0, 0.0}, {0.3, 0.9}});
  auto m = torus(lat, 1.0, 96, "skew");
  const SparseC M = mass(*m);
  for (int trial = 0; trial < 20; ++trial) {
    const int k1 = kk(rng), k2 = kk(rng) == 0 ? 1 : kk(rng);
    const double p = ph(rng);
    auto u = nodal(*m, [&](const Point& x) {
      Point t = lat.to_fractional(x);
      return std::exp(cplx(0.0, 2.0 * kPi * (k1 * t[0] + k2 * t[1]) + p)) + 0.5 * std::cos(2.0 * kPi * t[0]);
    });
    for (double eps : {1.0 / 16, 1.0 / 8}) {
      auto r = steklov_smooth(u, m, eps);
      GridField diff = r.field;
      diff.values -= u.values;
      EXPECT_LE(l2(*m, M, diff), 1.05 * eps * lat.r1() * grad_l2(*m, u));
    }
  }
}

TEST(Steklov, CommutesWithDifferences) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> nd;
  auto m = torus(Lattice::unit(2), 1.0, 40, "sq");
  GridField u(m->id(), FieldLocation::Nodes, 1, 1, m->num_nodes());
  for (int i = 0; i < m->num_nodes(); ++i) u.values(i, 0) = cplx(nd(rng), nd(rng));
  auto diff = [&](const GridField& f) {
    GridField out = f;
    for (int j = 0; j < 40; ++j)
      for (int i = 0; i < 40; ++i) out.values(m->grid_node(i, j), 0) = f.values(m->grid_node(i + 1, j), 0) - f.values(m->grid_node(i, j), 0);
    return out;
  };
  auto a = steklov_smooth(diff(u), m, 0.125).field;
  auto b = diff(steklov_smooth(u, m, 0.125).field);
  EXPECT_LT((a.values - b.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Steklov, CellFieldAverage) {
  // Cell data constant 1 on the left half of [0, 1], 0 on the right: the
  // average at x = 1/2 over a window of width eps is 1/2.
  auto m = std::make_shared<Mesh>(Mesh::interval(Lattice::unit(1), 0.0, 1.0, 64, "iv"));
  GridField c(m->id(), FieldLocation::Cells, 1, 1, 64);
  for (int e = 0; e < 64; ++e) c.values(e, 0) = e < 32 ? 1.0 : 0.0;
  for (double eps : {4.0 / 64, 5.0 / 64}) {
    auto r = steklov_smooth(c, m, eps);
    Eigen::Matrix<cplx, 1, Eigen::Dynamic> mid = r.mesh->interpolate(r.field.values, Point{0.5, 0.0});
    EXPECT_NEAR(mid(0).real(), 0.5, 1e-14);
    Eigen::Matrix<cplx, 1, Eigen::Dynamic> left = r.mesh->interpolate(r.field.values, Point{0.25, 0.0});
    EXPECT_NEAR(left(0).real(), 1.0, 1e-14);
  }
}

TEST(Steklov, OscillatoryProductBound) {
  // |f^eps S_eps u| <= |Omega|^{-1/2} |f|_{L2(Omega)} |u| for f = Lambda and D Lambda.
  auto lat = Lattice::unit(2);
  auto coef = coefficient_registry("checkerboard2d", {}, lat, 2);
  auto cs = solve_cell_problem(coef, gradient_symbol(2), lat, 16);
  const double eps = 1.0 / 8;
  auto m = torus(lat, 1.0, 128, "dom");
  const SparseC M = mass(*m);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    GridField u(m->id(), FieldLocation::Nodes, 1, 1, m->num_nodes());
    for (int i = 0; i < m->num_nodes(); ++i) u.values(i, 0) = cplx(nd(rng), nd(rng));
    auto su = steklov_smooth(u, m, eps);
    double lam = 0.0, dlam = 0.0;
    for (int e = 0; e < m->num_elements(); ++e) {
      const ElementData ed = m->element(e);
      for (int q = 0; q < ed.nq; ++q) {
        cplx s = 0.0;
        for (int a = 0; a < ed.nv; ++a) s += ed.N[q][a] * su.field.values(ed.nodes[a], 0);
        const Point y{ed.xq[q][0] / eps, ed.xq[q][1] / eps};
        lam += ed.w[q] * MatrixXc(cs.lambda_at(y)).squaredNorm() * std::norm(s);
        dlam += ed.w[q] * MatrixXc(cs.b_lambda_at(y)).squaredNorm() * std::norm(s);
      }
    }
    const double un = l2(*m, M, u);
    EXPECT_LE(std::sqrt(lam), 1.05 * cs.diagnostics.lambda_L2 * un);
    EXPECT_LE(std::sqrt(dlam), 1.05 * cs.diagnostics.grad_lambda_L2 * un);
  }
}
