#pragma once

#include <functional>
#include <vector>

#include "homog/grid_field.hpp"
#include "homog/mesh.hpp"
#include "homog/symbol.hpp"

namespace homog {

/// Coefficient evaluated at a physical quadrature point.
using PointCoefficient = std::function<SmallMat(const Point& x)>;

/// Per-element B-matrices: Bmat[q][a] = sum_l b_l dN[q][a][l] (m x n).
struct ElementSymbol {
  SmallMat B[4][4];
};

inline void element_symbol(const DifferentialSymbol& sym, const ElementData& ed, ElementSymbol& out) {
  for (int q = 0; q < ed.nq; ++q)
    for (int a = 0; a < ed.nv; ++a) {
      SmallMat bm = SmallMat::Zero(sym.m, sym.n);
      for (int l = 0; l < sym.d; ++l) bm += sym.b[l] * ed.dN[q][a][l];
      out.B[q][a] = bm;
    }
}

/// DOF ordering is node-major: dof = node * n + component.
inline VectorXc field_to_dofs(const GridField& f) {
  VectorXc v(f.points() * f.rows * f.cols);
  for (Eigen::Index p = 0; p < f.points(); ++p)
    for (Eigen::Index k = 0; k < f.values.cols(); ++k) v(p * f.values.cols() + k) = f.values(p, k);
  return v;
}

inline GridField dofs_to_field(const VectorXc& v, const std::string& mesh_id, int n) {
  const Eigen::Index points = v.size() / n;
  GridField f(mesh_id, FieldLocation::Nodes, n, 1, points);
  for (Eigen::Index p = 0; p < points; ++p)
    for (int k = 0; k < n; ++k) f.values(p, k) = v(p * n + k);
  return f;
}

/// Stiffness K[(b,j),(a,k)] = sum_q w (B_b e_j)^H g(x_q) (B_a e_k) and the
/// consistent mass matrix over all nodal DOFs.
struct AssembledForms {
  SparseC K;
  SparseC M;
  bool real = false;
};

inline bool is_real(const SparseC& A) {
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseC::InnerIterator it(A, k); it; ++it)
      if (it.value().imag() != 0.0) return false;
  return true;
}

inline bool symbol_is_real(const DifferentialSymbol& sym) {
  for (const auto& b : sym.b)
    if (b.imag().cwiseAbs().maxCoeff() != 0.0) return false;
  return true;
}

inline AssembledForms assemble_forms(const Mesh& mesh, const DifferentialSymbol& sym, const PointCoefficient& g,
                                     bool with_mass = true) {
  require(mesh.dim() == sym.d, ErrorCode::InvalidArgument, "mesh and symbol dimensions differ");
  const int n = sym.n;
  const Eigen::Index ndof = static_cast<Eigen::Index>(mesh.num_nodes()) * n;
  const int nv = mesh.nodes_per_element();
  std::vector<Eigen::Triplet<cplx>> tk, tm;
  tk.reserve(static_cast<std::size_t>(mesh.num_elements()) * nv * nv * n * n);
  if (with_mass) tm.reserve(static_cast<std::size_t>(mesh.num_elements()) * nv * nv * n);
  ElementSymbol es;
  cplx kloc[4][4][2][2];
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    element_symbol(sym, ed, es);
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b)
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k) kloc[b][a][j][k] = 0.0;
    for (int q = 0; q < ed.nq; ++q) {
      const SmallMat G = g(ed.xq[q]);
      for (int a = 0; a < nv; ++a) {
        const SmallMat GBa = G * es.B[q][a];
        for (int b = 0; b < nv; ++b) {
          const SmallMat blk = es.B[q][b].adjoint() * GBa;
          for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) kloc[b][a][j][k] += ed.w[q] * blk(j, k);
        }
      }
    }
    for (int a = 0; a < nv; ++a)
      for (int b = 0; b < nv; ++b) {
        for (int j = 0; j < n; ++j)
          for (int k = 0; k < n; ++k)
            tk.emplace_back(ed.nodes[b] * n + j, ed.nodes[a] * n + k, kloc[b][a][j][k]);
        if (with_mass) {
          double mab = 0.0;
          for (int q = 0; q < ed.nq; ++q) mab += ed.w[q] * ed.N[q][a] * ed.N[q][b];
          for (int j = 0; j < n; ++j) tm.emplace_back(ed.nodes[b] * n + j, ed.nodes[a] * n + j, mab);
        }
      }
  }
  AssembledForms out;
  out.K.resize(ndof, ndof);
  out.K.setFromTriplets(tk.begin(), tk.end());
  if (with_mass) {
    out.M.resize(ndof, ndof);
    out.M.setFromTriplets(tm.begin(), tm.end());
  }
  out.real = is_real(out.K);
  return out;
}

/// Lumped integrals of the nodal basis functions, int phi_a.
inline Eigen::VectorXd nodal_weights(const Mesh& mesh) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(mesh.num_nodes());
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    for (int q = 0; q < ed.nq; ++q)
      for (int a = 0; a < ed.nv; ++a) w(ed.nodes[a]) += ed.w[q] * ed.N[q][a];
  }
  return w;
}

/// Keeps rows and columns with dof_to_free >= 0, renumbered.
inline SparseC restrict_matrix(const SparseC& A, const std::vector<int>& dof_to_free, Eigen::Index nfree) {
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(A.nonZeros());
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseC::InnerIterator it(A, k); it; ++it) {
      const int r = dof_to_free[it.row()], c = dof_to_free[it.col()];
      if (r >= 0 && c >= 0) t.emplace_back(r, c, it.value());
    }
  SparseC out(nfree, nfree);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

inline SparseR real_part(const SparseC& A) {
  SparseR out = A.real();
  return out;
}

/// Values (n x 1) of a nodal field at every quadrature point, indexed
/// e * nq + q.
inline GridField quad_values(const Mesh& mesh, const GridField& f) {
  require(f.mesh_id == mesh.id() && f.location == FieldLocation::Nodes, ErrorCode::MeshMismatch,
          "quad_values needs a nodal field on this mesh");
  const int nq = mesh.quad_per_element();
  const Eigen::Index nc = f.values.cols();
  GridField out(mesh.id(), FieldLocation::QuadraturePoints, static_cast<int>(nc), 1,
                static_cast<Eigen::Index>(mesh.num_elements()) * nq);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    for (int q = 0; q < ed.nq; ++q)
      for (int a = 0; a < ed.nv; ++a) out.values.row(e * nq + q) += ed.N[q][a] * f.values.row(ed.nodes[a]);
  }
  return out;
}

/// Partial derivatives (n x d) of a nodal field at every quadrature point.
inline GridField quad_gradients(const Mesh& mesh, const GridField& f) {
  require(f.mesh_id == mesh.id() && f.location == FieldLocation::Nodes, ErrorCode::MeshMismatch,
          "quad_gradients needs a nodal field on this mesh");
  const int nq = mesh.quad_per_element(), d = mesh.dim();
  const int nc = static_cast<int>(f.values.cols());
  GridField out(mesh.id(), FieldLocation::QuadraturePoints, nc, d, static_cast<Eigen::Index>(mesh.num_elements()) * nq);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    for (int q = 0; q < ed.nq; ++q)
      for (int a = 0; a < ed.nv; ++a)
        for (int c = 0; c < nc; ++c)
          for (int l = 0; l < d; ++l) out.at(e * nq + q, c, l) += ed.dN[q][a][l] * f.values(ed.nodes[a], c);
  }
  return out;
}

/// Quadrature weights in the e * nq + q order.
inline Eigen::VectorXd quad_weights(const Mesh& mesh) {
  const int nq = mesh.quad_per_element();
  Eigen::VectorXd w(static_cast<Eigen::Index>(mesh.num_elements()) * nq);
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    for (int q = 0; q < nq; ++q) w(e * nq + q) = ed.w[q];
  }
  return w;
}

}  // namespace homog
