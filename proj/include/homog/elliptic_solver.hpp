#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "homog/assembly.hpp"
#include "homog/coefficient.hpp"
#include "homog/linalg.hpp"

namespace homog {

enum class BoundaryCondition { Torus, Dirichlet, Neumann };

inline const char* to_string(BoundaryCondition bc) {
  switch (bc) {
    case BoundaryCondition::Torus: return "torus";
    case BoundaryCondition::Dirichlet: return "dirichlet";
    case BoundaryCondition::Neumann: return "neumann";
  }
  return "?";
}

/// c(phi) = 1 / |sin phi| for phi in (0, pi/2) or (3pi/2, 2pi), else 1.
inline double sector_factor(double phi) {
  const double s = std::abs(std::sin(phi));
  if ((phi > 0.0 && phi < 0.5 * kPi) || (phi > 1.5 * kPi && phi < 2.0 * kPi)) return s > 0.0 ? 1.0 / s : INFINITY;
  return 1.0;
}

struct SpectralPoint {
  cplx zeta;
  double phi = 0.0;  // argument in [0, 2pi)
  double abs = 0.0;
  double c_phi = 1.0;

  static SpectralPoint make(cplx z) {
    SpectralPoint p;
    p.zeta = z;
    p.abs = std::abs(z);
    p.phi = std::atan2(z.imag(), z.real());
    if (p.phi < 0.0) p.phi += 2.0 * kPi;
    p.c_phi = sector_factor(p.phi);
    return p;
  }

  static SpectralPoint polar(double modulus, double phi) { return make(std::polar(modulus, phi)); }
};

struct SolverLimits {
  double eps_max = 0.125;
  double min_scale_ratio = 16.0;  // eps / h
};

/// Stiffness and mass of b(D)* g b(D) on one mesh with the requested
/// boundary treatment. Dirichlet nodes are removed from the free system.
struct EllipticSystem {
  std::shared_ptr<const Mesh> mesh;
  DifferentialSymbol sym;
  BoundaryCondition bc = BoundaryCondition::Dirichlet;
  double eps = 0.0;  // 0 for the effective operator
  PointCoefficient g;
  SparseC K, M;    // all nodal DOFs
  SparseC Kf, Mf;  // free DOFs
  std::vector<int> dof_to_free;
  std::vector<int> free_to_dof;
  bool real = false;

  int n() const { return sym.n; }
  bool effective() const { return eps == 0.0; }
  Eigen::Index ndof() const { return K.rows(); }
  Eigen::Index nfree() const { return Kf.rows(); }

  VectorXc to_free(const VectorXc& full) const {
    VectorXc v(nfree());
    for (Eigen::Index i = 0; i < nfree(); ++i) v(i) = full(free_to_dof[i]);
    return v;
  }
  VectorXc to_full(const VectorXc& free) const {
    VectorXc v = VectorXc::Zero(ndof());
    for (Eigen::Index i = 0; i < nfree(); ++i) v(free_to_dof[i]) = free(i);
    return v;
  }
};

namespace detail {

inline EllipticSystem finish_system(EllipticSystem sys) {
  AssembledForms forms = assemble_forms(*sys.mesh, sys.sym, sys.g, true);
  sys.K = std::move(forms.K);
  sys.M = std::move(forms.M);
  sys.real = forms.real;
  const int n = sys.n();
  sys.dof_to_free.assign(static_cast<std::size_t>(sys.ndof()), -1);
  sys.free_to_dof.clear();
  for (int a = 0; a < sys.mesh->num_nodes(); ++a) {
    const bool fixed = sys.bc == BoundaryCondition::Dirichlet && sys.mesh->on_boundary(a);
    for (int j = 0; j < n; ++j) {
      if (fixed) continue;
      sys.dof_to_free[a * n + j] = static_cast<int>(sys.free_to_dof.size());
      sys.free_to_dof.push_back(a * n + j);
    }
  }
  if (sys.bc == BoundaryCondition::Dirichlet) {
    sys.Kf = restrict_matrix(sys.K, sys.dof_to_free, static_cast<Eigen::Index>(sys.free_to_dof.size()));
    sys.Mf = restrict_matrix(sys.M, sys.dof_to_free, static_cast<Eigen::Index>(sys.free_to_dof.size()));
  } else {
    sys.Kf = sys.K;
    sys.Mf = sys.M;
  }
  return sys;
}

inline void check_bc(const Mesh& mesh, BoundaryCondition bc) {
  const bool periodic = mesh.kind() == MeshKind::Torus;
  require(periodic == (bc == BoundaryCondition::Torus), ErrorCode::InvalidArgument,
          std::string("boundary condition '") + to_string(bc) + "' does not fit a " + to_string(mesh.kind()) + " mesh");
}

}  // namespace detail

/// Operator with oscillating coefficient g(x / eps).
inline EllipticSystem assemble_system(const PeriodicCoefficient& coef, const DifferentialSymbol& sym,
                                      std::shared_ptr<const Mesh> mesh, double eps, BoundaryCondition bc,
                                      const SolverLimits& limits = {}) {
  require(mesh != nullptr, ErrorCode::InvalidArgument, "no mesh");
  require(eps > 0.0, ErrorCode::InvalidArgument, "eps must be positive");
  require(coef.m() == sym.m && mesh->dim() == sym.d, ErrorCode::InvalidArgument,
          "coefficient, symbol and mesh sizes differ");
  detail::check_bc(*mesh, bc);
  require(eps <= limits.eps_max * (1.0 + 1e-12), ErrorCode::InvalidArgument,
          "eps = " + std::to_string(eps) + " exceeds eps_max = " + std::to_string(limits.eps_max));
  if (eps / mesh->h_max() < limits.min_scale_ratio * (1.0 - 1e-9))
    fail(ErrorCode::ScaleSeparationViolated, "eps / h = " + std::to_string(eps / mesh->h_max()) + " is below " +
                                                 std::to_string(limits.min_scale_ratio));
  if (mesh->kind() == MeshKind::Torus) {
    const Lattice& lat = coef.lattice();
    const auto& g = mesh->grid();
    const double defect = (g.A.topLeftCorner(lat.dim(), lat.dim()) - lat.basis()).norm();
    require(defect <= 1e-12 * lat.basis().norm(), ErrorCode::IncommensurateTorus,
            "torus is not built on the coefficient lattice");
    const double periods = g.h * g.cells[0] / eps;
    if (std::abs(periods - std::round(periods)) > 1e-9 * periods || std::round(periods) < 1)
      fail(ErrorCode::IncommensurateTorus, "torus side is not a multiple of eps periods");
  }
  EllipticSystem sys;
  sys.mesh = std::move(mesh);
  sys.sym = sym;
  sys.bc = bc;
  sys.eps = eps;
  auto shared = std::make_shared<const PeriodicCoefficient>(coef);
  sys.g = [shared, eps](const Point& x) { return shared->at_scaled(x, eps); };
  return detail::finish_system(std::move(sys));
}

/// Operator with constant (effective) coefficient g0.
inline EllipticSystem assemble_effective(const MatrixXc& g0, const DifferentialSymbol& sym,
                                         std::shared_ptr<const Mesh> mesh, BoundaryCondition bc) {
  require(mesh != nullptr, ErrorCode::InvalidArgument, "no mesh");
  require(g0.rows() == sym.m && g0.cols() == sym.m && mesh->dim() == sym.d, ErrorCode::InvalidArgument,
          "effective matrix, symbol and mesh sizes differ");
  detail::check_bc(*mesh, bc);
  EllipticSystem sys;
  sys.mesh = std::move(mesh);
  sys.sym = sym;
  sys.bc = bc;
  sys.eps = 0.0;
  const SmallMat G = g0;
  sys.g = [G](const Point&) { return G; };
  return detail::finish_system(std::move(sys));
}

/// g(x_q) B u at every quadrature point (m x 1).
inline GridField compute_flux(const EllipticSystem& sys, const GridField& u) {
  const Mesh& mesh = *sys.mesh;
  const int nq = mesh.quad_per_element(), m = sys.sym.m, n = sys.n();
  GridField out(mesh.id(), FieldLocation::QuadraturePoints, m, 1, static_cast<Eigen::Index>(mesh.num_elements()) * nq);
  ElementSymbol es;
  for (int e = 0; e < mesh.num_elements(); ++e) {
    const ElementData ed = mesh.element(e);
    element_symbol(sys.sym, ed, es);
    for (int q = 0; q < ed.nq; ++q) {
      SmallVec bu = SmallVec::Zero(m);
      for (int a = 0; a < ed.nv; ++a) {
        SmallVec ua(n);
        for (int j = 0; j < n; ++j) ua(j) = u.values(ed.nodes[a], j);
        bu += es.B[q][a] * ua;
      }
      const SmallVec p = sys.g(ed.xq[q]) * bu;
      for (int r = 0; r < m; ++r) out.values(e * nq + q, r) = p(r);
    }
  }
  return out;
}

struct SolveResult {
  GridField u;     // nodal, n x 1
  GridField flux;  // quadrature points, m x 1
  double residual = 0.0;
  FactorStats stats;
};

/// Factorization of (A - zeta) on the free DOFs, reusable across right-hand
/// sides. Solves are read-only.
class Resolvent {
 public:
  Resolvent(const EllipticSystem& sys, const SpectralPoint& z, bool with_flux = true)
      : sys_(&sys), z_(z), with_flux_(with_flux) {
    SparseC A = sys.Kf - z.zeta * sys.Mf;
    const bool real = sys.real && z.zeta.imag() == 0.0;
    fac_.factor(A, real, real && z.zeta.real() <= 0.0);
  }

  const SpectralPoint& point() const { return z_; }
  const FactorStats& stats() const { return fac_.stats(); }

  /// Solves for several right-hand sides at once.
  std::vector<SolveResult> solve(const std::vector<GridField>& F) const {
    const Mesh& mesh = *sys_->mesh;
    MatrixXc rhs(sys_->nfree(), static_cast<Eigen::Index>(F.size()));
    for (std::size_t k = 0; k < F.size(); ++k) {
      require(F[k].mesh_id == mesh.id() && F[k].location == FieldLocation::Nodes && F[k].values.cols() == sys_->n(),
              ErrorCode::MeshMismatch, "right-hand side does not live on the system mesh");
      rhs.col(static_cast<Eigen::Index>(k)) = sys_->to_free(sys_->M * field_to_dofs(F[k]));
    }
    std::vector<SolveResult> out(F.size());
    if (F.empty()) return out;
    MatrixXc x = fac_.solve(rhs);
    for (std::size_t k = 0; k < F.size(); ++k) {
      out[k].u = dofs_to_field(sys_->to_full(x.col(static_cast<Eigen::Index>(k))), mesh.id(), sys_->n());
      if (with_flux_) out[k].flux = compute_flux(*sys_, out[k].u);
      out[k].residual = fac_.last_residual();
      out[k].stats = fac_.stats();
    }
    return out;
  }

  SolveResult solve(const GridField& F) const { return std::move(solve(std::vector<GridField>{F})[0]); }

 private:
  const EllipticSystem* sys_;
  SpectralPoint z_;
  bool with_flux_;
  SparseFactor fac_;
};

inline SolveResult solve_resolvent(const EllipticSystem& sys, const SpectralPoint& z, const GridField& F) {
  return Resolvent(sys, z).solve(F);
}

/// M-orthonormal basis of the kernel Z of the b(D)-Gram form on a Neumann mesh.
struct KernelProjector {
  std::string mesh_id;
  MatrixXc basis;  // ndof x p
  int p = 0;
  Eigen::VectorXd eigenvalues;  // lowest Gram eigenvalues (gradient type: empty)
  SparseC M;

  /// Coefficients Z^H M f.
  VectorXc coefficients(const VectorXc& f) const { return basis.adjoint() * (M * f); }
  VectorXc project_kernel(const VectorXc& f) const { return basis * coefficients(f); }
  VectorXc project_perp(const VectorXc& f) const { return f - project_kernel(f); }

  GridField project_perp(const GridField& f) const {
    return dofs_to_field(project_perp(field_to_dofs(f)), f.mesh_id, f.rows);
  }
  GridField project_kernel(const GridField& f) const {
    return dofs_to_field(project_kernel(field_to_dofs(f)), f.mesh_id, f.rows);
  }

  MatrixXc gram() const { return basis.adjoint() * (M * basis); }
};

inline KernelProjector kernel_projector(const DifferentialSymbol& sym, const std::shared_ptr<const Mesh>& mesh,
                                        int max_kernel = 6) {
  require(mesh->kind() != MeshKind::Torus, ErrorCode::InvalidArgument, "kernel projector needs a bounded mesh");
  const int n = sym.n;
  const SmallMat I = SmallMat::Identity(sym.m, sym.m);
  AssembledForms forms = assemble_forms(*mesh, sym, [&I](const Point&) { return I; }, true);
  KernelProjector kp;
  kp.mesh_id = mesh->id();
  kp.M = forms.M;
  const Eigen::Index ndof = forms.K.rows();
  if (sym.gradient_type) {
    const double vol = nodal_weights(*mesh).sum();
    kp.p = n;
    kp.basis = MatrixXc::Zero(ndof, n);
    for (int a = 0; a < mesh->num_nodes(); ++a)
      for (int j = 0; j < n; ++j) kp.basis(a * n + j, j) = 1.0 / std::sqrt(vol);
    return kp;
  }
  const int count = max_kernel + 2;
  EigenPairs ep = lowest_eigenpairs(forms.K, forms.M, count, 1.0, forms.real);
  const double top = ep.values(count - 1);
  int p = 0;
  while (p < count && ep.values(p) <= 1e-8 * top) ++p;
  if (p == 0 || p > max_kernel)
    fail(ErrorCode::KernelGapTooSmall, "no separated zero cluster among the lowest Gram eigenvalues");
  const double zero_sup = ep.values.head(p).cwiseAbs().maxCoeff();
  if (ep.values(p) < 1e-6 * top || ep.values(p) <= 1e8 * zero_sup)
    fail(ErrorCode::KernelGapTooSmall, "kernel cluster is not separated from the next eigenvalue");
  kp.p = p;
  kp.eigenvalues = ep.values;
  kp.basis = ep.vectors.leftCols(p);
  // A few shift-invert sweeps with a small shift damp the components
  // outside Z by ~1e-3 each.
  const double sigma = 1e-3 * ep.values(p);
  SparseFactor fac(SparseC(forms.K + sigma * forms.M), forms.real, true);
  for (int it = 0; it < 4; ++it) kp.basis = sigma * fac.solve(MatrixXc(forms.M * kp.basis));
  MatrixXc G = kp.gram();
  Eigen::LLT<MatrixXc> llt(0.5 * (G + G.adjoint()));
  kp.basis = kp.basis * MatrixXc(llt.matrixU().solve(MatrixXc::Identity(p, p)));
  return kp;
}

/// (B_N - zeta)^{-1} on Z-orthogonal data: the saddle system
///   [K - zeta M, M Z; (M Z)^H, 0] [u; mu] = [M F_perp; 0].
class KernelReducedResolvent {
 public:
  KernelReducedResolvent(const EllipticSystem& sys, const KernelProjector& kp, const SpectralPoint& z,
                         bool with_flux = true)
      : sys_(&sys), kp_(&kp), z_(z), with_flux_(with_flux) {
    require(sys.bc == BoundaryCondition::Neumann, ErrorCode::InvalidArgument, "kernel reduction needs a Neumann system");
    require(kp.mesh_id == sys.mesh->id(), ErrorCode::MeshMismatch, "projector built on another mesh");
    const Eigen::Index N = sys.ndof();
    const int p = kp.p;
    MZ_ = sys.M * kp.basis;
    SparseC A = sys.K - z.zeta * sys.M;
    std::vector<Eigen::Triplet<cplx>> t;
    t.reserve(A.nonZeros() + 2 * N * p);
    for (int k = 0; k < A.outerSize(); ++k)
      for (SparseC::InnerIterator it(A, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int c = 0; c < p; ++c)
      for (Eigen::Index i = 0; i < N; ++i)
        if (MZ_(i, c) != 0.0) {
          t.emplace_back(i, N + c, MZ_(i, c));
          t.emplace_back(N + c, i, std::conj(MZ_(i, c)));
        }
    SparseC S(N + p, N + p);
    S.setFromTriplets(t.begin(), t.end());
    const bool real = sys.real && z.zeta.imag() == 0.0 && kp.basis.imag().cwiseAbs().maxCoeff() == 0.0;
    fac_.factor(S, real, false);
  }

  const FactorStats& stats() const { return fac_.stats(); }

  /// Projects F off Z, solves, and reports the projection deviation
  /// |Z^H M F| of the input.
  std::vector<SolveResult> solve(const std::vector<GridField>& F, std::vector<double>* deviation = nullptr) const {
    const Eigen::Index N = sys_->ndof();
    const int p = kp_->p;
    MatrixXc rhs = MatrixXc::Zero(N + p, static_cast<Eigen::Index>(F.size()));
    if (deviation) deviation->clear();
    for (std::size_t k = 0; k < F.size(); ++k) {
      require(F[k].mesh_id == sys_->mesh->id(), ErrorCode::MeshMismatch, "right-hand side on another mesh");
      VectorXc f = field_to_dofs(F[k]);
      VectorXc c = kp_->coefficients(f);
      if (deviation) deviation->push_back(c.norm());
      f -= kp_->basis * c;
      rhs.col(static_cast<Eigen::Index>(k)).head(N) = sys_->M * f;
    }
    std::vector<SolveResult> out(F.size());
    if (F.empty()) return out;
    MatrixXc x = fac_.solve(rhs);
    for (std::size_t k = 0; k < F.size(); ++k) {
      VectorXc u = x.col(static_cast<Eigen::Index>(k)).head(N);
      const double unorm = std::sqrt(std::abs(u.dot(sys_->M * u)));
      const double orth = (MZ_.adjoint() * u).norm();
      if (orth > 1e-10 * std::max(unorm, 1e-300) && unorm > 0.0)
        fail(ErrorCode::ResidualTooLarge, "solution is not orthogonal to the kernel: " + std::to_string(orth / unorm));
      out[k].u = dofs_to_field(u, sys_->mesh->id(), sys_->n());
      if (with_flux_) out[k].flux = compute_flux(*sys_, out[k].u);
      out[k].residual = fac_.last_residual();
      out[k].stats = fac_.stats();
    }
    return out;
  }

  SolveResult solve(const GridField& F, double* deviation = nullptr) const {
    std::vector<double> dev;
    auto r = solve(std::vector<GridField>{F}, &dev);
    if (deviation) *deviation = dev[0];
    return std::move(r[0]);
  }

 private:
  const EllipticSystem* sys_;
  const KernelProjector* kp_;
  SpectralPoint z_;
  bool with_flux_;
  MatrixXc MZ_;
  SparseFactor fac_;
};

inline SolveResult solve_kernel_reduced(const EllipticSystem& sys, const KernelProjector& kp, const SpectralPoint& z,
                                        const GridField& F) {
  return KernelReducedResolvent(sys, kp, z).solve(F);
}

struct LowerBounds {
  double c2 = std::numeric_limits<double>::quiet_NaN();
  double c_star = std::numeric_limits<double>::quiet_NaN();
  double c_flat = std::numeric_limits<double>::quiet_NaN();
  double lambda_eps = std::numeric_limits<double>::quiet_NaN();  // raw eigenvalue, eps operator
  double lambda_eff = std::numeric_limits<double>::quiet_NaN();  // raw eigenvalue, effective operator
};

inline double domain_diameter(const Mesh& mesh) {
  if (mesh.kind() == MeshKind::Disk) return 2.0 * mesh.radius();
  // Structured boxes attain the diameter at corners.
  double best = 0.0;
  const auto nn = mesh.grid_nodes();
  std::vector<Point> corners;
  for (int i : {0, nn[0] - 1})
    for (int j : {0, nn[1] - 1}) corners.push_back(mesh.node(mesh.grid_node(i, j)));
  for (const auto& a : corners)
    for (const auto& b : corners) best = std::max(best, std::hypot(a[0] - b[0], a[1] - b[1]));
  return best;
}

/// Lowest eigenvalue of a Dirichlet system, or the first one above the
/// p-fold zero cluster of a Neumann system.
inline double spectral_floor(const EllipticSystem& sys, int p) {
  if (sys.bc == BoundaryCondition::Dirichlet) {
    EigenPairs ep = lowest_eigenpairs(sys.Kf, sys.Mf, 1, 0.0, sys.real);
    return ep.values(0);
  }
  EigenPairs ep = lowest_eigenpairs(sys.Kf, sys.Mf, p + 1, 1.0, sys.real);
  return ep.values(p);
}

/// c2 = c0 diam^{-2}; c_star and c_flat are 0.95 times the smaller of the
/// eps and effective spectral floors for Dirichlet and Neumann systems.
inline LowerBounds lower_bounds(const EllipticSystem& sys_eps, const EllipticSystem& sys_eff, double c0,
                                const KernelProjector* kp = nullptr) {
  require(sys_eps.bc == sys_eff.bc, ErrorCode::InvalidArgument, "systems have different boundary conditions");
  LowerBounds lb;
  lb.c2 = c0 / std::pow(domain_diameter(*sys_eps.mesh), 2);
  if (sys_eps.bc == BoundaryCondition::Dirichlet) {
    lb.lambda_eps = spectral_floor(sys_eps, 0);
    lb.lambda_eff = spectral_floor(sys_eff, 0);
    lb.c_star = 0.95 * std::min(lb.lambda_eps, lb.lambda_eff);
  } else if (sys_eps.bc == BoundaryCondition::Neumann) {
    require(kp != nullptr, ErrorCode::InvalidArgument, "Neumann lower bounds need the kernel projector");
    lb.lambda_eps = spectral_floor(sys_eps, kp->p);
    lb.lambda_eff = spectral_floor(sys_eff, kp->p);
    lb.c_flat = 0.95 * std::min(lb.lambda_eps, lb.lambda_eff);
  }
  return lb;
}

}  // namespace homog
