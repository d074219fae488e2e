#pragma once

#include <cmath>
#include <memory>

#include "homog/assembly.hpp"
#include "homog/coefficient.hpp"
#include "homog/grid_field.hpp"
#include "homog/lattice.hpp"
#include "homog/linalg.hpp"
#include "homog/mesh.hpp"
#include "homog/symbol.hpp"

namespace homog {

struct LambdaDiagnostics {
  double lambda_L2 = 0.0;       // |Lambda|_{L2(cell)}, Frobenius over columns
  double grad_lambda_L2 = 0.0;  // |D Lambda|_{L2(cell)}
  double bound_grad = 0.0;      // |cell|^{1/2} m^{1/2} alpha0^{-1/2} |g|^{1/2} |g^{-1}|^{1/2}
  double bound_value = 0.0;     // bound_grad / (2 r0)
  double M1 = 0.0;
  double M2 = 0.0;
  bool grad_bound_ok = false;
  bool value_bound_ok = false;
  double lambda_sup = 0.0;
  bool condition_2_8 = false;
};

struct SpecialCases {
  bool g0_equals_bar = false;
  bool g0_equals_under = false;
  bool lambda_zero = false;
  double tolerance = 0.0;
};

/// Periodic corrector and effective data. `lambda` is stored in the
/// real-derivative convention: column k solves
///   int < g (B lambda_k + e_k), B eta > = 0,  B = sum_l b_l d_l,
/// so B lambda = b(D) Lambda for the corrector Lambda of the first-order
/// operator with D = -i grad (the two differ by a unimodular factor).
struct CellSolution {
  std::shared_ptr<const Mesh> mesh;
  std::shared_ptr<const PeriodicCoefficient> coef;
  DifferentialSymbol sym;
  int grid_n = 0;
  GridField lambda;   // nodes, n x m
  MatrixXc lambda_mean;
  double residual = 0.0;
  GridField tilde_g;  // quadrature points, m x m
  MatrixXc g0;
  MatrixXc g_bar;
  MatrixXc g_under;
  double g0_asymmetry = 0.0;
  LambdaDiagnostics diagnostics;

  int m() const { return sym.m; }
  int n() const { return sym.n; }

  /// lambda(y) at a physical point y (periodic, multilinear interpolation).
  SmallMat lambda_at(const Point& y) const {
    Eigen::Matrix<cplx, 1, Eigen::Dynamic> row = mesh->interpolate(lambda.values, y);
    SmallMat out(sym.n, sym.m);
    for (int r = 0; r < sym.n; ++r)
      for (int c = 0; c < sym.m; ++c) out(r, c) = row(r * sym.m + c);
    return out;
  }

  /// B lambda(y) (m x m) from the element containing y.
  SmallMat b_lambda_at(const Point& y) const {
    Point local{0.0, 0.0};
    const int e = mesh->locate_element(y, local);
    double N[4], dN[4][2];
    mesh->structured_basis(local, N, dN);
    const int* en = mesh->element_nodes(e);
    SmallMat out = SmallMat::Zero(sym.m, sym.m);
    for (int a = 0; a < mesh->nodes_per_element(); ++a) {
      SmallMat bm = SmallMat::Zero(sym.m, sym.n);
      for (int l = 0; l < sym.d; ++l) bm += sym.b[l] * dN[a][l];
      out += bm * nodal_matrix(en[a]);
    }
    return out;
  }

  /// tilde g(y) = g(y) (B lambda(y) + 1).
  SmallMat tilde_g_at(const Point& y) const {
    SmallMat bl = b_lambda_at(y);
    bl += SmallMat::Identity(sym.m, sym.m);
    return SmallMat(coef->at(y) * bl);
  }

  SmallMat nodal_matrix(int node) const { return lambda.matrix(node); }
};

/// Solves the periodic cell problem on a grid_n^d grid of Q1 (P1 in 1D)
/// elements aligned with the lattice, one column per canonical vector e_k,
/// with the zero-mean constraint imposed through a Lagrange multiplier.
inline CellSolution solve_cell_problem(const PeriodicCoefficient& coef, const DifferentialSymbol& sym,
                                       const Lattice& lat, int grid_n) {
  require(grid_n >= 8, ErrorCode::InvalidArgument, "cell grid needs grid_n >= 8");
  require(coef.m() == sym.m, ErrorCode::InvalidArgument, "coefficient size differs from symbol row count");
  require(lat.dim() == sym.d, ErrorCode::InvalidArgument, "lattice and symbol dimensions differ");
  CellSolution cs;
  cs.sym = sym;
  cs.grid_n = grid_n;
  cs.coef = std::make_shared<const PeriodicCoefficient>(coef);
  auto mesh = std::make_shared<Mesh>(Mesh::torus(lat, 1.0, grid_n, "cell"));
  cs.mesh = mesh;
  const int n = sym.n, m = sym.m;
  const int N = mesh->num_nodes();
  const Eigen::Index ndof = static_cast<Eigen::Index>(N) * n;

  auto gfun = [&coef](const Point& x) { return coef.at(x); };
  AssembledForms forms = assemble_forms(*mesh, sym, gfun, false);

  // Right-hand sides f_k[(b,j)] = int (B_b e_j)^H g e_k.
  MatrixXc F = MatrixXc::Zero(ndof, m);
  ElementSymbol es;
  for (int e = 0; e < mesh->num_elements(); ++e) {
    const ElementData ed = mesh->element(e);
    element_symbol(sym, ed, es);
    for (int q = 0; q < ed.nq; ++q) {
      const SmallMat G = coef.at(ed.xq[q]);
      for (int b = 0; b < ed.nv; ++b) {
        const SmallMat blk = es.B[q][b].adjoint() * G;  // n x m
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < m; ++k) F(ed.nodes[b] * n + j, k) += ed.w[q] * blk(j, k);
      }
    }
  }

  // Bordered system [K C; C^T 0].
  const Eigen::VectorXd wn = nodal_weights(*mesh);
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(forms.K.nonZeros() + 2 * ndof);
  for (int k = 0; k < forms.K.outerSize(); ++k)
    for (SparseC::InnerIterator it(forms.K, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int a = 0; a < N; ++a)
    for (int j = 0; j < n; ++j) {
      t.emplace_back(a * n + j, ndof + j, wn(a));
      t.emplace_back(ndof + j, a * n + j, wn(a));
    }
  SparseC A(ndof + n, ndof + n);
  A.setFromTriplets(t.begin(), t.end());
  const bool real = forms.real && F.imag().cwiseAbs().maxCoeff() == 0.0;

  MatrixXc rhs = MatrixXc::Zero(ndof + n, m);
  rhs.topRows(ndof) = -F;
  MatrixXc sol;
  try {
    SparseFactor fac(A, real, false);
    sol = fac.solve(rhs);
  } catch (const Error& err) {
    if (err.code() == ErrorCode::ShiftOnSpectrum) fail(ErrorCode::SingularCellSystem, err.what());
    if (err.code() == ErrorCode::ResidualTooLarge) fail(ErrorCode::NonConvergedSolve, err.what());
    throw;
  }
  MatrixXc phi = sol.topRows(ndof);

  cs.residual = 0.0;
  MatrixXc r = forms.K * phi + F;
  for (int k = 0; k < m; ++k)
    cs.residual = std::max(cs.residual, r.col(k).norm() / std::max(1.0, F.col(k).norm()));

  cs.lambda = GridField("cell", FieldLocation::Nodes, n, m, N);
  for (int a = 0; a < N; ++a)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < m; ++k) cs.lambda.at(a, j, k) = phi(a * n + j, k);

  const double cell = lat.cell_measure();
  cs.lambda_mean = MatrixXc::Zero(n, m);
  for (int a = 0; a < N; ++a) cs.lambda_mean += wn(a) * cs.lambda.matrix(a);
  cs.lambda_mean /= cell;

  // Flux field, effective matrix, Voigt / Reuss averages.
  const int nq = mesh->quad_per_element();
  cs.tilde_g = GridField("cell", FieldLocation::QuadraturePoints, m, m,
                         static_cast<Eigen::Index>(mesh->num_elements()) * nq);
  MatrixXc g0 = MatrixXc::Zero(m, m), gbar = MatrixXc::Zero(m, m), ginv = MatrixXc::Zero(m, m);
  double l2 = 0.0, dl2 = 0.0;
  for (int e = 0; e < mesh->num_elements(); ++e) {
    const ElementData ed = mesh->element(e);
    element_symbol(sym, ed, es);
    for (int q = 0; q < ed.nq; ++q) {
      SmallMat bl = SmallMat::Identity(m, m);
      MatrixXc val = MatrixXc::Zero(n, m);
      MatrixXc grad[2] = {MatrixXc::Zero(n, m), MatrixXc::Zero(n, m)};
      for (int a = 0; a < ed.nv; ++a) {
        const SmallMat la = cs.lambda.matrix(ed.nodes[a]);
        bl += es.B[q][a] * la;
        val += ed.N[q][a] * la;
        for (int l = 0; l < sym.d; ++l) grad[l] += ed.dN[q][a][l] * la;
      }
      const SmallMat G = coef.at(ed.xq[q]);
      const SmallMat tg = G * bl;
      const Eigen::Index p = static_cast<Eigen::Index>(e) * nq + q;
      for (int i = 0; i < m; ++i)
        for (int k = 0; k < m; ++k) cs.tilde_g.at(p, i, k) = tg(i, k);
      g0 += ed.w[q] * tg;
      gbar += ed.w[q] * G;
      ginv += ed.w[q] * MatrixXc(G).inverse();
      l2 += ed.w[q] * val.squaredNorm();
      for (int l = 0; l < sym.d; ++l) dl2 += ed.w[q] * grad[l].squaredNorm();
    }
  }
  g0 /= cell;
  gbar /= cell;
  ginv /= cell;
  cs.g0_asymmetry = (g0 - g0.adjoint()).norm() / std::max(g0.norm(), 1e-300);
  cs.g0 = 0.5 * (g0 + g0.adjoint());
  cs.g_bar = 0.5 * (gbar + gbar.adjoint());
  MatrixXc gu = ginv.inverse();
  cs.g_under = 0.5 * (gu + gu.adjoint());
  cs.diagnostics.lambda_L2 = std::sqrt(l2);
  cs.diagnostics.grad_lambda_L2 = std::sqrt(dl2);
  double sup = 0.0;
  for (int a = 0; a < N; ++a) sup = std::max(sup, MatrixXc(cs.lambda.matrix(a)).norm());
  cs.diagnostics.lambda_sup = sup;
  // Lambda is bounded for d <= 2.
  cs.diagnostics.condition_2_8 = lat.dim() <= 2 && std::isfinite(sup);
  return cs;
}

/// Cell average of tilde g.
inline MatrixXc effective_matrix(const CellSolution& cs) { return cs.g0; }

/// Arithmetic mean of g and inverse of the mean of g^{-1} with the cell
/// quadrature of a grid_n^d grid.
inline std::pair<MatrixXc, MatrixXc> voigt_reuss(const PeriodicCoefficient& coef, const Lattice& lat, int grid_n) {
  Mesh mesh = Mesh::torus(lat, 1.0, grid_n, "cell");
  const int m = coef.m();
  MatrixXc gbar = MatrixXc::Zero(m, m), ginv = MatrixXc::Zero(m, m);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    for (int q = 0; q < ed.nq; ++q) {
      const MatrixXc G = coef.at(ed.xq[q]);
      gbar += ed.w[q] * G;
      ginv += ed.w[q] * G.inverse();
    }
  }
  gbar /= lat.cell_measure();
  ginv /= lat.cell_measure();
  MatrixXc gu = ginv.inverse();
  return {0.5 * (gbar + gbar.adjoint()), 0.5 * (gu + gu.adjoint())};
}

inline SpecialCases detect_special_cases(const CellSolution& cs) {
  SpecialCases sc;
  const double h = 1.0 / cs.grid_n;
  sc.tolerance = std::max(1e-8, 10.0 * h * h);
  auto rel = [](const MatrixXc& a, const MatrixXc& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); };
  sc.g0_equals_bar = rel(cs.g0, cs.g_bar) <= sc.tolerance;
  sc.g0_equals_under = rel(cs.g0, cs.g_under) <= sc.tolerance;
  sc.lambda_zero = cs.diagnostics.lambda_L2 <= sc.tolerance;
  return sc;
}

/// Fills the corrector bounds and Condition-2.8 flag. `alpha0` comes from
/// validate_symbol.
inline LambdaDiagnostics lambda_diagnostics(CellSolution& cs, double alpha0, const Lattice& lat) {
  LambdaDiagnostics& d = cs.diagnostics;
  const auto& b = cs.coef->bounds();
  const double core = std::sqrt(cs.m() / alpha0 * b.g_sup * b.ginv_sup);
  d.M2 = core;
  d.M1 = core / (2.0 * lat.r0());
  d.bound_grad = std::sqrt(lat.cell_measure()) * d.M2;
  d.bound_value = std::sqrt(lat.cell_measure()) * d.M1;
  d.grad_bound_ok = d.grad_lambda_L2 <= d.bound_grad;
  d.value_bound_ok = d.lambda_L2 <= d.bound_value;
  // Automatic for d <= 2.
  d.condition_2_8 = lat.dim() <= 2 && std::isfinite(d.lambda_sup);
  return d;
}

}  // namespace homog
