#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "homog/corrector.hpp"

using namespace homog;

namespace {

std::shared_ptr<const Mesh> share(Mesh m) { return std::make_shared<Mesh>(std::move(m)); }

GridField nodal(const Mesh& mesh, int n, const std::function<cplx(const Point&, int)>& f) {
  GridField out(mesh.id(), FieldLocation::Nodes, n, 1, mesh.num_nodes());
  for (int i = 0; i < mesh.num_nodes(); ++i)
    for (int j = 0; j < n; ++j) out.values(i, j) = f(mesh.node(i), j);
  return out;
}

// Broken H1 norm of a quadrature field laid out as [value | d_1 .. d_d].
double h1_norm(const Mesh& mesh, const GridField& f) {
  const Eigen::VectorXd w = quad_weights(mesh);
  double acc = 0.0;
  for (Eigen::Index p = 0; p < f.points(); ++p) acc += w(p) * f.values.row(p).squaredNorm();
  return std::sqrt(acc);
}

double nodal_h1(const Mesh& mesh, const GridField& u) {
  GridField v = quad_values(mesh, u), g = quad_gradients(mesh, u);
  const Eigen::VectorXd w = quad_weights(mesh);
  double acc = 0.0;
  for (Eigen::Index p = 0; p < v.points(); ++p) acc += w(p) * (v.values.row(p).squaredNorm() + g.values.row(p).squaredNorm());
  return std::sqrt(acc);
}

// Closed-form corrector of the (1, 4, 1/2) layered medium in the
// real-derivative convention: the zero-mean tent with slopes +-0.6.
double layered_lambda(double y) {
  y -= std::floor(y);
  return y <= 0.5 ? 0.6 * y - 0.15 : 0.3 - 0.6 * (y - 0.5) - 0.15;
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST(Extension, IntervalConstantsAndIdentity) {
  auto dom = share(Mesh::interval(Lattice::unit(1), 0.0, 1.0, 128, "iv"));
  auto ext = make_extension(dom, 0.25);
  auto one = nodal(*dom, 1, [](const Point&, int) { return cplx(1.0); });
  auto e = extend(one, ext);
  const Mesh& em = *ext.extension;
  for (int i = 0; i < em.num_nodes(); ++i) {
    const double x = em.node(i)[0];
    const double dist = std::max({0.0, -x, x - 1.0});
    if (dist <= 0.125 + 1e-12) {
      EXPECT_NEAR(std::abs(e.values(i, 0) - 1.0), 0.0, 1e-14) << x;
    }
    if (dist >= 0.25 - 1e-12) {
      EXPECT_EQ(e.values(i, 0), 0.0) << x;
    }
  }
  auto u = nodal(*dom, 1, [](const Point& x, int) { return std::exp(cplx(0.0, 3.0 * x[0])) + x[0] * x[0]; });
  auto back = restrict_to_domain(extend(u, ext), ext);
  EXPECT_LT((back.values - u.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Extension, ReflectionIsC1AtEndpoints) {
  auto dom = share(Mesh::interval(Lattice::unit(1), 0.0, 1.0, 256, "iv"));
  auto ext = make_extension(dom, 0.25);
  auto u = nodal(*dom, 1, [](const Point& x, int) { return cplx(x[0] * (1.0 - x[0])); });
  auto e = extend(u, ext);
  const Mesh& em = *ext.extension;
  const double h = 1.0 / 256;
  for (int node : {ext.offset, ext.offset + 256}) {
    const double left = (e.values(em.grid_node(node, 0), 0) - e.values(em.grid_node(node - 1, 0), 0)).real() / h;
    const double right = (e.values(em.grid_node(node + 1, 0), 0) - e.values(em.grid_node(node, 0), 0)).real() / h;
    EXPECT_LT(std::abs(left - right), 1e-10);
  }
}

TEST(Extension, SquareAndDisk) {
  // Square domain: tensor-product reflection keeps constants and the identity.
  auto sq = share(Mesh::box(Lattice::unit(2), Point{0.0, 0.0}, 1.0 / 32, {32, 32}, "sq"));
  auto ext = make_extension(sq, 0.25);
  auto u = nodal(*sq, 2, [](const Point& x, int j) { return cplx(std::sin(x[0] + j), x[1] * x[1]); });
  auto back = restrict_to_domain(extend(u, ext), ext);
  EXPECT_LT((back.values - u.values).cwiseAbs().maxCoeff(), 1e-12);
  auto lin = nodal(*sq, 1, [](const Point& x, int) { return cplx(1.0 + 2.0 * x[0] - x[1]); });
  auto el = extend(lin, ext);
  const Mesh& em = *ext.extension;
  for (int i = 0; i < em.num_nodes(); ++i) {
    const Point& x = em.node(i);
    const double dist = std::max({0.0, -x[0], x[0] - 1.0, -x[1], x[1] - 1.0});
    if (dist <= 0.125 - 1e-9) {
      EXPECT_NEAR(el.values(i, 0).real(), 1.0 + 2.0 * x[0] - x[1], 1e-12);
    }
  }
  // H1 norm of the extension of a smooth polynomial stays within a fixed factor.
  auto p = nodal(*sq, 1, [](const Point& x, int) { return cplx(x[0] * x[0] - x[0] * x[1] + 0.5); });
  EXPECT_LE(nodal_h1(em, extend(p, ext)), 10.0 * nodal_h1(*sq, p));

  // Disk: radial reflection reproduces linear functions exactly in the core.
  auto disk = share(Mesh::disk(0.5, 0.05, "disk"));
  const Lattice lat = Lattice::unit(2);
  auto dext = make_extension(disk, 0.2, &lat, 1.0 / 64);
  auto dl = nodal(*disk, 1, [](const Point& x, int) { return cplx(0.3 - x[0] + 2.0 * x[1]); });
  auto de = extend(dl, dext);
  const Mesh& dm = *dext.extension;
  for (int i = 0; i < dm.num_nodes(); ++i) {
    const Point& x = dm.node(i);
    if (std::hypot(x[0], x[1]) <= 0.5 + 0.1 - 1e-9) {
      EXPECT_NEAR(de.values(i, 0).real(), 0.3 - x[0] + 2.0 * x[1], 1e-12);
    }
  }
  auto dback = restrict_to_domain(de, dext);
  EXPECT_LT((dback.values - dl.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Corrector, ConstantCoefficientGivesZero) {
  const Lattice lat = Lattice::unit(1);
  auto cs = solve_cell_problem(coefficient_registry("constant", {{"value", 2.0}}, lat, 1), gradient_symbol(1), lat, 8);
  auto dom = share(Mesh::interval(lat, 0.0, 1.0, 256, "iv"));
  auto ext = make_extension(dom, 0.25);
  auto u0 = nodal(*dom, 1, [](const Point& x, int) { return cplx(std::sin(kPi * x[0])); });
  for (auto s : {Smoothing::Steklov, Smoothing::None}) {
    auto c = corrector_apply(cs, 1.0 / 32, s, u0, dom, &ext);
    EXPECT_LT(c.values.cwiseAbs().maxCoeff(), 1e-14);
    auto fa = flux_approx(cs, 1.0 / 32, s, u0, dom, &ext);
    auto sf = smoothed_symbol_field(cs.sym, dom, u0, 1.0 / 32, s, &ext);
    EXPECT_LT((fa.values - 2.0 * sf.W.values).cwiseAbs().maxCoeff(), 1e-13);
  }
}

TEST(Corrector, LayeredPointwiseOracle) {
  // eps Lambda(x / eps) (S_eps u~0')(x) with Lambda in closed form and the
  // window average of the piecewise-constant derivative integrated by hand.
  const Lattice lat = Lattice::unit(1);
  auto coef = coefficient_registry("layered1d", {}, lat, 1);
  const double eps = 1.0 / 16;
  const int s = 32, cells = 16 * s;
  auto cs = solve_cell_problem(coef, gradient_symbol(1), lat, s);
  auto dom = share(Mesh::interval(lat, 0.0, 1.0, cells, "iv"));
  auto ext = make_extension(dom, 0.25);
  auto u0 = nodal(*dom, 1, [](const Point& x, int) { return cplx(std::sin(kPi * x[0]), x[0] * x[0]); });
  auto c = corrector_apply(cs, eps, Smoothing::Steklov, u0, dom, &ext);
  auto ue = extend(u0, ext);
  const Mesh& em = *ext.extension;
  const double h = 1.0 / cells;
  auto deriv = [&](double x) {  // derivative of the extended interpolant on its element
    const int i = static_cast<int>(std::floor((x - em.node(0)[0]) / h));
    return (ue.values(i + 1, 0) - ue.values(i, 0)) / h;
  };
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(c.points()) - 1);
  for (int t = 0; t < 10; ++t) {
    const int p = pick(rng);
    const int e = p / 2, q = p % 2;
    const double x = dom->element(e).xq[q][0];
    // Exact window integral over (x - eps/2, x + eps/2).
    const double a = x - 0.5 * eps, b = x + 0.5 * eps;
    cplx integral = 0.0;
    for (double left = std::floor(a / h) * h; left < b - 1e-15; left += h) {
      const double lo = std::max(left, a), hi = std::min(left + h, b);
      if (hi > lo) integral += (hi - lo) * deriv(left + 0.5 * h);
    }
    const cplx expect = eps * layered_lambda(x / eps) * integral / eps;
    EXPECT_LT(std::abs(c.values(p, 0) - expect), 1e-11) << x;
  }
}

TEST(Corrector, SmoothingVariantsDifferByOrderEps) {
  const Lattice lat = Lattice::unit(1);
  auto coef = coefficient_registry("layered1d", {}, lat, 1);
  std::vector<double> eps_list, diff;
  for (int k = 3; k <= 7; ++k) {
    const double eps = std::ldexp(1.0, -k);
    auto cs = solve_cell_problem(coef, gradient_symbol(1), lat, 32);
    auto dom = share(Mesh::interval(lat, 0.0, 1.0, 32 << k, "iv"));
    auto ext = make_extension(dom, 0.25);
    auto u0 = nodal(*dom, 1, [](const Point& x, int) { return cplx(std::sin(kPi * x[0]) + x[0]); });
    auto a = corrector_apply(cs, eps, Smoothing::Steklov, u0, dom, &ext);
    auto b = corrector_apply(cs, eps, Smoothing::None, u0, dom, &ext);
    a.values -= b.values;
    eps_list.push_back(eps);
    diff.push_back(h1_norm(*dom, a));
  }
  EXPECT_GE(fit_slope(eps_list, diff), 0.9);
}

TEST(Corrector, FluxApproximation) {
  // d = 1 layered: tilde g is the constant 1.6 and the two flux forms agree.
  const Lattice lat = Lattice::unit(1);
  auto coef = coefficient_registry("layered1d", {}, lat, 1);
  auto cs = solve_cell_problem(coef, gradient_symbol(1), lat, 32);
  ASSERT_TRUE(detect_special_cases(cs).g0_equals_under);
  auto dom = share(Mesh::interval(lat, 0.0, 1.0, 512, "iv"));
  auto u0 = nodal(*dom, 1, [](const Point& x, int) { return cplx(std::cos(2.0 * x[0])); });
  auto a = flux_approx(cs, 1.0 / 16, Smoothing::None, u0, dom, nullptr, false);
  auto b = flux_approx(cs, 1.0 / 16, Smoothing::None, u0, dom, nullptr, true);
  EXPECT_LT((a.values - b.values).cwiseAbs().maxCoeff(), 1e-10);

  // d = 2 trig2d on a torus: tilde g(x / eps) times a brute-force window
  // average of the elementwise gradient.
  const Lattice l2 = Lattice::unit(2);
  auto c2 = coefficient_registry("trig2d", {}, l2, 2);
  const double eps = 1.0 / 4;
  const int s = 16, N = 2 * 4 * s;
  auto cs2 = solve_cell_problem(c2, gradient_symbol(2), l2, s);
  auto tor = share(Mesh::torus(l2, 2.0, N, "tor"));
  auto u = nodal(*tor, 1, [](const Point& x, int) {
    return std::exp(cplx(0.0, kPi * (x[0] + 2.0 * x[1]))) + std::cos(kPi * x[0]);
  });
  auto fa = flux_approx(cs2, eps, Smoothing::Steklov, u, tor);
  const double h = 2.0 / N;
  auto cellgrad = [&](int i, int j, int l) {
    double Nn[4], dN[4][2];
    tor->structured_basis(Point{0.5, 0.5}, Nn, dN);
    const int nodes[4] = {tor->grid_node(i, j), tor->grid_node(i + 1, j), tor->grid_node(i + 1, j + 1),
                          tor->grid_node(i, j + 1)};
    cplx g = 0.0;
    for (int a = 0; a < 4; ++a) g += dN[a][l] * u.values(nodes[a], 0);
    return g;
  };
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(fa.points()) - 1);
  for (int t = 0; t < 10; ++t) {
    const int p = pick(rng);
    const int e = p / 4, q = p % 4;
    const Point x = tor->element(e).xq[q];
    cplx w[2] = {0.0, 0.0};
    const double lo0 = x[0] - 0.5 * eps, hi0 = x[0] + 0.5 * eps, lo1 = x[1] - 0.5 * eps, hi1 = x[1] + 0.5 * eps;
    for (int j = static_cast<int>(std::floor(lo1 / h)); j * h < hi1; ++j)
      for (int i = static_cast<int>(std::floor(lo0 / h)); i * h < hi0; ++i) {
        const double ov = std::max(0.0, std::min((i + 1) * h, hi0) - std::max(i * h, lo0)) *
                          std::max(0.0, std::min((j + 1) * h, hi1) - std::max(j * h, lo1));
        for (int l = 0; l < 2; ++l) w[l] += ov * cellgrad(i, j, l);
      }
    const MatrixXc G = cs2.tilde_g_at(Point{x[0] / eps, x[1] / eps});
    for (int r = 0; r < 2; ++r) {
      const cplx expect = (G(r, 0) * w[0] + G(r, 1) * w[1]) / (eps * eps);
      EXPECT_LT(std::abs(fa.values(p, r) - expect), 1e-10);
    }
  }
}

TEST(Corrector, LinearityAndResolventIdentity) {
  const Lattice lat = Lattice::unit(2);
  auto coef = coefficient_registry("checkerboard2d", {}, lat, 2);
  auto sym = gradient_symbol(2);
  const double eps = 1.0 / 8;
  auto cs = solve_cell_problem(coef, sym, lat, 16);
  auto tor = share(Mesh::torus(lat, 1.0, 128, "tor"));
  auto F1 = nodal(*tor, 1, [](const Point& x, int) { return std::exp(cplx(0.0, 2.0 * kPi * (x[0] - x[1]))); });
  auto F2 = nodal(*tor, 1, [](const Point& x, int) { return cplx(std::sin(2.0 * kPi * x[1]), 0.5); });
  auto a1 = corrector_apply(cs, eps, Smoothing::Steklov, F1, tor);
  auto a2 = corrector_apply(cs, eps, Smoothing::Steklov, F2, tor);
  GridField F3 = F1;
  F3.values += cplx(2.0, -1.0) * F2.values;
  auto a3 = corrector_apply(cs, eps, Smoothing::Steklov, F3, tor);
  EXPECT_LT((a3.values - a1.values - cplx(2.0, -1.0) * a2.values).cwiseAbs().maxCoeff(), 1e-10);

  // K(eps; zeta) F = K(eps; -1) (A0 + I)(A0 - zeta)^{-1} F.
  auto sys0 = assemble_effective(cs.g0, sym, tor, BoundaryCondition::Torus);
  auto z = SpectralPoint::polar(5.0, kPi / 3);
  auto u0 = solve_resolvent(sys0, z, F1).u;
  auto direct = corrector_apply(cs, eps, Smoothing::Steklov, u0, tor);
  // (A0 + I) u0 as a nodal field: M^{-1} (K + M) u0.
  SparseFactor mass(sys0.M, true, true);
  VectorXc g = mass.solve(VectorXc((sys0.K + sys0.M) * field_to_dofs(u0)));
  auto v = solve_resolvent(sys0, SpectralPoint::make(-1.0), dofs_to_field(g, tor->id(), 1)).u;
  auto via = corrector_apply(cs, eps, Smoothing::Steklov, v, tor);
  EXPECT_LT((direct.values - via.values).cwiseAbs().maxCoeff(), 1e-9 * direct.values.cwiseAbs().maxCoeff());
}

TEST(Corrector, SmoothingRequiredWithoutCondition) {
  const Lattice lat = Lattice::unit(1);
  auto cs = solve_cell_problem(coefficient_registry("layered1d", {}, lat, 1), gradient_symbol(1), lat, 16);
  cs.diagnostics.condition_2_8 = false;
  auto dom = share(Mesh::interval(lat, 0.0, 1.0, 256, "iv"));
  auto u0 = nodal(*dom, 1, [](const Point& x, int) { return cplx(x[0]); });
  try {
    corrector_apply(cs, 1.0 / 16, Smoothing::None, u0, dom);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SmoothingRequired);
  }
}

TEST(Corrector, BoundedLambdaProductBound) {
  // int |(D Lambda)^eps|^2 |u|^2 <= beta1 |u|^2 + beta2 |Lambda|_inf^2 eps^2 |Du|^2.
  const Lattice lat = Lattice::unit(2);
  auto coef = coefficient_registry("checkerboard2d", {}, lat, 2);
  auto sym = gradient_symbol(2);
  auto rep = validate_symbol(sym, 200);
  auto cs = solve_cell_problem(coef, sym, lat, 32);
  auto diag = lambda_diagnostics(cs, rep.alpha0, lat);
  const double gg = coef.bounds().g_sup * coef.bounds().ginv_sup;
  const double beta1 = 16.0 * sym.m / rep.alpha0 * gg;
  const double beta2 = 2.0 * (1.0 + 4.0 * rep.alpha1 / rep.alpha0 + 40.0 * rep.alpha1 / rep.alpha0 * gg);
  auto tor = share(Mesh::torus(lat, 1.0, 256, "tor"));
  for (double eps : {1.0 / 8, 1.0 / 4}) {
    auto u = nodal(*tor, 1, [](const Point& x, int) { return cplx(std::cos(2.0 * kPi * x[0]) + 0.3, std::sin(2.0 * kPi * x[1])); });
    GridField v = quad_values(*tor, u), g = quad_gradients(*tor, u);
    const Eigen::VectorXd w = quad_weights(*tor);
    double lhs = 0.0, u2 = 0.0, du2 = 0.0;
    SmallMat lam, dlam[2];
    for (int e = 0; e < tor->num_elements(); ++e) {
      const ElementData ed = tor->element(e);
      for (int q = 0; q < ed.nq; ++q) {
        const Eigen::Index p = static_cast<Eigen::Index>(e) * ed.nq + q;
        detail::cell_lambda(cs, Point{ed.xq[q][0] / eps, ed.xq[q][1] / eps}, lam, dlam);
        const double dl = dlam[0].squaredNorm() + dlam[1].squaredNorm();
        lhs += w(p) * dl * std::norm(v.values(p, 0));
        u2 += w(p) * std::norm(v.values(p, 0));
        du2 += w(p) * g.values.row(p).squaredNorm();
      }
    }
    EXPECT_LE(lhs, 1.1 * (beta1 * u2 + beta2 * diag.lambda_sup * diag.lambda_sup * eps * eps * du2));
  }
}
