#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "homog/report.hpp"

namespace homog {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct VerifyOptions {
  int threads = 1;
  std::set<int> only;  // empty: all criteria
  std::function<void(const CriterionResult&)> on_result;
};

struct PresetRun {
  RunConfig config;
  SweepSpec spec;
  SweepReport report;
};

struct VerifyOutcome {
  std::vector<CriterionResult> criteria;
  std::vector<PresetRun> sweeps;

  bool pass() const {
    for (const auto& c : criteria)
      if (!c.pass) return false;
    return true;
  }
};

inline std::string verify_csv(const std::vector<PresetRun>& sweeps) {
  std::string s = "sweep," + csv_header() + "\n";
  for (const auto& run : sweeps)
    for (const auto& r : run.report.rows) s += run.report.name + "," + csv_row(r) + "\n";
  return s;
}

inline PresetRun run_preset(const std::string& name, int threads) {
  PresetRun pr;
  pr.config = preset_config(name);
  auto cell = std::make_shared<const CellSolution>(solve_cell_for(pr.config));
  pr.spec = sweep_spec_for(pr.config, cell, threads);
  pr.report = run_sweep(pr.spec);
  return pr;
}

namespace detail {

inline std::string num(double v, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << v;
  return o.str();
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline double min_eig(const MatrixXc& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXc> es(0.5 * (a + a.adjoint()));
  return es.eigenvalues().minCoeff();
}

inline double mnorm(const SparseC& M, const VectorXc& v) { return std::sqrt(std::abs(v.dot(M * v))); }

inline SparseC identity_stiffness(const Mesh& mesh, int n, SparseC* mass = nullptr) {
  const auto sym = gradient_symbol(mesh.dim(), n);
  const SmallMat I = SmallMat::Identity(sym.m, sym.m);
  AssembledForms f = assemble_forms(mesh, sym, [&I](const Point&) { return I; }, true);
  if (mass) *mass = f.M;
  return f.K;
}

struct Cell {
  std::string name;
  Lattice lat;
  DifferentialSymbol sym;
};

inline std::vector<Cell> registry_cells() {
  const Lattice l1 = Lattice::unit(1), l2 = Lattice::unit(2);
  const Lattice hex = Lattice::build({{1.0, 0.0}, {0.5, 0.8660254037844386}});
  return {{"constant", l2, gradient_symbol(2)},    {"layered1d", l1, gradient_symbol(1)},
          {"layered2d", l2, gradient_symbol(2)},   {"trig2d", l2, gradient_symbol(2)},
          {"trig2d", hex, gradient_symbol(2)},     {"checkerboard2d", l2, gradient_symbol(2)},
          {"crossdiag2d", l2, gradient_symbol(2)}, {"checkerboard2d", l2, elasticity2d_symbol()}};
}

inline std::string fit_text(const std::optional<RateFit>& f) {
  if (!f) return "no fit";
  return num(f->slope) + " (ci95 " + num(f->ci95, 2) + ", " + std::to_string(f->points) + " pts)";
}

}  // namespace detail

/// Runs the verification criteria. Sweeps are shared between criteria and
/// kept in the outcome for the CSV.
class Verifier {
 public:
  explicit Verifier(VerifyOptions opt = {}) : opt_(std::move(opt)) {}

  VerifyOutcome run() {
    VerifyOutcome out;
    using Fn = CriterionResult (Verifier::*)();
    const std::vector<std::pair<int, Fn>> all = {
        {1, &Verifier::c1},  {2, &Verifier::c2},   {3, &Verifier::c3},   {4, &Verifier::c4},   {5, &Verifier::c5},
        {6, &Verifier::c6},  {7, &Verifier::c7},   {8, &Verifier::c8},   {9, &Verifier::c9},   {10, &Verifier::c10},
        {11, &Verifier::c11}, {12, &Verifier::c12}, {13, &Verifier::c13}};
    for (const auto& [id, fn] : all) {
      if (!opt_.only.empty() && !opt_.only.count(id)) continue;
      const auto t0 = std::chrono::steady_clock::now();
      CriterionResult r;
      try {
        r = (this->*fn)();
      } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("error: ") + detail::error_status(e) + ": " + e.what();
      }
      r.id = id;
      if (r.name.empty()) r.name = names().at(id);
      r.seconds = detail::seconds_since(t0);
      if (id == 1 && r.seconds >= 10.0) fail_runtime(r, 10.0);
      if ((id == 5 || id == 6) && r.seconds >= 120.0) fail_runtime(r, 120.0);
      if (id == 12 && r.seconds >= 900.0) fail_runtime(r, 900.0);
      if (opt_.on_result) opt_.on_result(r);
      out.criteria.push_back(r);
    }
    for (const auto& name : order_) out.sweeps.push_back(cache_.at(name));
    return out;
  }

  static const std::map<int, std::string>& names() {
    static const std::map<int, std::string> n = {
        {1, "effective matrix oracles"},     {2, "Voigt-Reuss sandwich"},
        {3, "cell problem invariants"},      {4, "Steklov smoothing suite"},
        {5, "resolvent a priori bounds"},    {6, "Dirichlet L2 rate"},
        {7, "Dirichlet H1 corrector rate"},  {8, "zeta improvement"},
        {9, "interior subdomain rate"},      {10, "Neumann suite"},
        {11, "shifted regimes"},             {12, "disk smoke rate"},
        {13, "determinism"}};
    return n;
  }

 private:
  VerifyOptions opt_;
  std::map<std::string, PresetRun> cache_;
  std::vector<std::string> order_;

  static void fail_runtime(CriterionResult& r, double limit) {
    r.pass = false;
    r.detail += "; runtime " + detail::num(r.seconds, 3) + " s exceeds " + detail::num(limit, 3) + " s";
  }

  const PresetRun& sweep(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    order_.push_back(name);
    return cache_.emplace(name, run_preset(name, opt_.threads)).first->second;
  }

  static std::optional<RateFit> eps_fit(const SweepReport& rep, const std::string& metric, std::size_t zeta_index = 0) {
    return find_fit(rep, metric, "eps", rep.rows.at(zeta_index).z.abs);
  }

  static bool in(const std::optional<RateFit>& f, double lo, double hi) {
    return f && f->slope >= lo && f->slope <= hi;
  }

  static std::string sweep_health(const SweepReport& rep) {
    std::string s = "failed rows " + detail::num(100.0 * rep.failed_fraction, 3) + "%";
    if (rep.halving.performed)
      s += ", halving change L2 " + detail::num(100.0 * rep.halving.change_L2, 2) + "% H1 " +
           detail::num(100.0 * rep.halving.change_H1, 2) + "%";
    return s;
  }

  // -------------------------------------------------------------------------

  CriterionResult c1() {
    CriterionResult r;
    const CoefficientParams tp{{"g_minus", 1.0}, {"g_plus", 4.0}, {"fraction", 0.5}};
    const Lattice l1 = Lattice::unit(1), l2 = Lattice::unit(2);
    const CellSolution a = solve_cell_problem(coefficient_registry("layered1d", tp, l1, 1), gradient_symbol(1), l1, 64);
    const CellSolution b =
        solve_cell_problem(coefficient_registry("layered2d", tp, l2, 2), gradient_symbol(2), l2, 128);
    const double e1 = std::abs(a.g0(0, 0) - 1.6);
    MatrixXc expect = MatrixXc::Zero(2, 2);
    expect(0, 0) = 1.6;
    expect(1, 1) = 2.5;
    const double e2 = (b.g0 - expect).cwiseAbs().maxCoeff();
    r.pass = e1 <= 1e-8 && e2 <= 1e-6;
    r.detail = "|g0 - 1.6| = " + detail::num(e1, 3) + " (d=1), max|g0 - diag(1.6, 2.5)| = " + detail::num(e2, 3) +
               " (d=2, grid 128)";
    return r;
  }

  CriterionResult c2() {
    CriterionResult r;
    double worst = INFINITY;
    int cases = 0;
    for (const auto& c : detail::registry_cells())
      for (int n : {32, 64}) {
        const CellSolution cs = solve_cell_problem(coefficient_registry(c.name, {}, c.lat, c.sym.m), c.sym, c.lat, n);
        worst = std::min({worst, detail::min_eig(cs.g0 - cs.g_under), detail::min_eig(cs.g_bar - cs.g0)});
        ++cases;
      }
    r.pass = worst >= -1e-6;
    r.detail = std::to_string(cases) + " cells, min eigenvalue of g0 - g_under and g_bar - g0: " + detail::num(worst, 3);
    return r;
  }

  CriterionResult c3() {
    CriterionResult r;
    double mean = 0.0, resid = 0.0, scale = 0.0;
    bool bounds = true;
    std::string bad;
    for (const auto& c : detail::registry_cells()) {
      const PeriodicCoefficient coef = coefficient_registry(c.name, {}, c.lat, c.sym.m);
      CellSolution cs = solve_cell_problem(coef, c.sym, c.lat, 64);
      const EllipticityReport er = validate_symbol(c.sym, 400);
      const LambdaDiagnostics dg = lambda_diagnostics(cs, er.alpha0, c.lat);
      mean = std::max(mean, cs.lambda_mean.norm());
      resid = std::max(resid, cs.residual);
      if (!(dg.grad_bound_ok && dg.value_bound_ok)) {
        bounds = false;
        bad += " " + c.name;
      }
      const CellSolution cs2 = solve_cell_problem(coef.scaled_by(2.0), c.sym, c.lat, 64);
      scale = std::max(scale, (cs2.g0 - 2.0 * cs.g0).cwiseAbs().maxCoeff());
    }
    r.pass = mean <= 1e-10 && resid <= 1e-10 && bounds && scale <= 1e-10;
    r.detail = "max |mean Lambda| " + detail::num(mean, 3) + ", max residual " + detail::num(resid, 3) +
               ", corrector bounds " + (bounds ? "hold" : "violated for" + bad) + ", max |g0(2g) - 2 g0| " +
               detail::num(scale, 3);
    return r;
  }

  CriterionResult c4() {
    CriterionResult r;
    std::mt19937_64 rng(20240611);
    std::normal_distribution<double> nd;
    // Contraction on random nodal fields.
    const Lattice hex = Lattice::build({{1.0, 0.0}, {0.5, 0.8660254037844386}});
    auto m2 = std::make_shared<const Mesh>(Mesh::torus(hex, 1.0, 48, "hex"));
    auto m1 = std::make_shared<const Mesh>(Mesh::torus(Lattice::unit(1), 2.0, 256, "line"));
    SparseC M1, M2;
    detail::identity_stiffness(*m1, 1, &M1);
    detail::identity_stiffness(*m2, 1, &M2);
    double worst_contraction = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const bool two = trial % 2 == 0;
      const auto& m = two ? m2 : m1;
      GridField u(m->id(), FieldLocation::Nodes, 1, 1, m->num_nodes());
      for (int i = 0; i < m->num_nodes(); ++i) u.values(i, 0) = cplx(nd(rng), nd(rng));
      const double eps = two ? (trial % 4 == 0 ? 1.0 / 8 : 1.0 / 16) : 0.125 * (1 + trial % 3);
      const SmoothedField s = steklov_smooth(u, m, eps);
      const SparseC& M = two ? M2 : M1;
      worst_contraction = std::max(worst_contraction, detail::mnorm(M, s.field.values.col(0)) /
                                                          detail::mnorm(M, u.values.col(0)) - 1.0);
    }
    // |S_eps u - u| <= eps r1 |Du| on smooth periodic fields.
    const Lattice skew = Lattice::build({{1.0, 0.0}, {0.3, 0.9}});
    auto ms = std::make_shared<const Mesh>(Mesh::torus(skew, 1.0, 96, "skew"));
    SparseC Ms;
    const SparseC Ks = detail::identity_stiffness(*ms, 1, &Ms);
    std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
    std::uniform_int_distribution<int> kk(-3, 3);
    double worst_approx = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int k1 = kk(rng), k2 = kk(rng) == 0 ? 1 : kk(rng);
      const double p = ph(rng);
      GridField u(ms->id(), FieldLocation::Nodes, 1, 1, ms->num_nodes());
      for (int i = 0; i < ms->num_nodes(); ++i) {
        const Point t = skew.to_fractional(ms->node(i));
        u.values(i, 0) = std::exp(cplx(0.0, 2.0 * kPi * (k1 * t[0] + k2 * t[1]) + p)) +
                         0.5 * std::cos(2.0 * kPi * t[0]);
      }
      const double du = detail::mnorm(Ks, u.values.col(0));
      for (double eps : {1.0 / 16, 1.0 / 8}) {
        const SmoothedField s = steklov_smooth(u, ms, eps);
        worst_approx = std::max(worst_approx,
                                detail::mnorm(Ms, s.field.values.col(0) - u.values.col(0)) / (eps * skew.r1() * du));
      }
    }
    // Fourier modes: S_eps e^{ikx} = sinc(k eps / 2) e^{ikx}.
    auto mf = std::make_shared<const Mesh>(Mesh::torus(Lattice::unit(1), 1.0, 65536, "fine"));
    double worst_sinc = 0.0;
    const double eps = 0.25;
    for (int mode : {1, 2, 3}) {
      const double k = 2.0 * kPi * mode;
      GridField u(mf->id(), FieldLocation::Nodes, 1, 1, mf->num_nodes());
      for (int i = 0; i < mf->num_nodes(); ++i) u.values(i, 0) = std::exp(cplx(0.0, k * mf->node(i)[0]));
      const SmoothedField s = steklov_smooth(u, mf, eps);
      const double t = 0.5 * k * eps, sinc = std::sin(t) / t;
      worst_sinc = std::max(worst_sinc, (s.field.values.col(0) - sinc * u.values.col(0)).cwiseAbs().maxCoeff());
    }
    r.pass = worst_contraction <= 1e-12 && worst_approx <= 1.05 && worst_sinc <= 1e-8;
    r.detail = "max |S u|/|u| - 1 = " + detail::num(worst_contraction, 3) +
               " (100 fields), max |S u - u| / (eps r1 |Du|) = " + detail::num(worst_approx, 4) +
               " (20 fields), sinc error " + detail::num(worst_sinc, 3);
    return r;
  }

  CriterionResult c5() {
    CriterionResult r;
    struct Case {
      std::string label;
      std::string coef;
      Lattice lat;
      BoundaryCondition bc;
      std::shared_ptr<const Mesh> mesh;
    };
    const double eps = 1.0 / 16;
    const Lattice l1 = Lattice::unit(1), l2 = Lattice::unit(2);
    std::vector<Case> cases = {
        {"d1 torus", "layered1d", l1, BoundaryCondition::Torus,
         std::make_shared<const Mesh>(Mesh::torus(l1, 1.0, 256, "t1"))},
        {"d1 dirichlet", "layered1d", l1, BoundaryCondition::Dirichlet,
         std::make_shared<const Mesh>(Mesh::interval(l1, 0.0, 1.0, 256, "i1"))},
        {"d1 neumann", "layered1d", l1, BoundaryCondition::Neumann,
         std::make_shared<const Mesh>(Mesh::interval(l1, 0.0, 1.0, 256, "i1"))},
        {"d2 torus", "trig2d", l2, BoundaryCondition::Torus,
         std::make_shared<const Mesh>(Mesh::torus(l2, 1.0, 256, "t2"))},
        {"d2 dirichlet disk", "trig2d", l2, BoundaryCondition::Dirichlet,
         std::make_shared<const Mesh>(Mesh::disk(0.5, eps / 16, "disk"))},
        {"d2 neumann disk", "trig2d", l2, BoundaryCondition::Neumann,
         std::make_shared<const Mesh>(Mesh::disk(0.5, eps / 16, "disk"))}};
    const EnsembleSpec ens{16, 20240611, 4};
    double worst_l2 = 0.0, worst_h1 = 0.0;
    int checks = 0;
    for (const auto& c : cases) {
      const DifferentialSymbol sym = gradient_symbol(c.lat.dim());
      const PeriodicCoefficient coef = coefficient_registry(c.coef, {}, c.lat, sym.m);
      EllipticityReport er = validate_symbol(sym, 400);
      er.attach_bounds(coef.bounds().g_sup, coef.bounds().ginv_sup);
      // Dirichlet and torus: sqrt(2 / c0); Neumann: ((2 |g^-1| + k2) / k1)^{1/2}.
      const double C0 = c.bc == BoundaryCondition::Neumann
                            ? std::sqrt((2.0 * coef.bounds().ginv_sup + sym.garding.second) / sym.garding.first)
                            : std::sqrt(2.0 / er.c0);
      SolverLimits lim;
      lim.eps_max = eps;
      const EllipticSystem sys = assemble_system(coef, sym, c.mesh, eps, c.bc, lim);
      SparseC M;
      const SparseC K = detail::identity_stiffness(*c.mesh, sym.n, &M);
      const std::vector<GridField> F = make_ensemble(*c.mesh, sym.n, ens);
      for (double phi : {kPi / 6, kPi / 2, kPi})
        for (double mod : {1.0, 10.0, 100.0, 1000.0}) {
          const SpectralPoint z = SpectralPoint::polar(mod, phi);
          const auto sol = Resolvent(sys, z, false).solve(F);
          for (std::size_t k = 0; k < F.size(); ++k) {
            const VectorXc u = field_to_dofs(sol[k].u);
            const double nf = detail::mnorm(M, field_to_dofs(F[k]));
            worst_l2 = std::max(worst_l2, detail::mnorm(M, u) / (z.c_phi / mod * nf));
            worst_h1 = std::max(worst_h1, detail::mnorm(K, u) / (C0 * z.c_phi / std::sqrt(mod) * nf));
            ++checks;
          }
        }
    }
    r.pass = worst_l2 <= 1.05 && worst_h1 <= 1.05;
    r.detail = std::to_string(checks) + " solves over 6 operators x 3 rays x 4 moduli; max |u| / bound = " +
               detail::num(worst_l2) + ", max |Du| / bound = " + detail::num(worst_h1);
    return r;
  }

  CriterionResult c6() {
    CriterionResult r;
    const PresetRun& run = sweep("dirichlet-L2");
    const auto f = eps_fit(run.report, "L2");
    r.pass = in(f, 0.9, 1.1) && run.report.failed_fraction == 0.0;
    r.detail = "L2 slope " + detail::fit_text(f) + ", " + sweep_health(run.report);
    return r;
  }

  CriterionResult c7() {
    CriterionResult r;
    const PresetRun& st = sweep("dirichlet-L2");
    const PresetRun& none = sweep("dirichlet-H1-none");
    const auto fs = eps_fit(st.report, "H1"), fn = eps_fit(none.report, "H1");
    const RateFit gap = variant_gap(st.spec);
    r.pass = fs && fn && fs->slope >= 0.45 && fn->slope >= 0.45 && gap.slope >= 0.9;
    r.detail = "H1 slope steklov " + detail::fit_text(fs) + ", none " + detail::fit_text(fn) +
               ", slope of the H1 gap between the two " + detail::fit_text(gap);
    return r;
  }

  /// max over the ensemble of |v_steklov - v_none|_H1 / |F| against eps.
  static RateFit variant_gap(const SweepSpec& spec) {
    std::vector<std::pair<double, double>> pts;
    const CellSolution& cs = *spec.cell;
    const SpectralPoint z = SpectralPoint::make(spec.zetas.front().value);
    for (double eps : spec.eps) {
      const Stage st = build_stage(spec, eps, spec.ratio);
      const auto u0 = Resolvent(st.sys_eff, z, false).solve(st.ensemble);
      const GridField zero(st.mesh->id(), FieldLocation::Nodes, cs.n(), 1, st.mesh->num_nodes());
      double worst = 0.0;
      for (std::size_t k = 0; k < u0.size(); ++k) {
        GridField a = corrector_apply(cs, eps, Smoothing::Steklov, u0[k].u, st.mesh, &*st.ext);
        const GridField b = corrector_apply(cs, eps, Smoothing::None, u0[k].u, st.mesh);
        a.values -= b.values;
        const ErrorMetrics em = error_metrics(*st.mesh, zero, zero, &a);
        worst = std::max(worst, em.H1 / l2_norm(*st.mesh, st.ensemble[k]));
      }
      pts.emplace_back(eps, worst);
    }
    return rate_fit(pts);
  }

  CriterionResult c8() {
    CriterionResult r;
    const PresetRun& run = sweep("dirichlet-zeta");
    const SweepReport& rep = run.report;
    const double eps = run.spec.eps.back();
    const auto f = find_fit(rep, "L2", "zeta", eps);
    auto env = rep.envelopes.find("L2");
    const bool env_ok = env != rep.envelopes.end() && env->second.spread <= 10.0;
    r.pass = f && f->slope <= -0.4 && env_ok;
    r.detail = "slope in |zeta| at eps " + detail::num(eps) + ": " + detail::fit_text(f) + "; envelope ";
    if (env == rep.envelopes.end()) r.detail += rep.envelope_status;
    else
      r.detail += "spread " + detail::num(env->second.spread) + ", C " + detail::num(env->second.fitted_C) + " over " +
                  std::to_string(env->second.rows) + " rows";
    // Slope over the moduli above the first Dirichlet eigenvalue, as context.
    std::vector<std::pair<double, double>> upper;
    for (const auto& row : rep.rows)
      if (row.ok() && std::abs(row.eps - eps) <= 1e-12 && row.z.abs >= 10.0)
        upper.emplace_back(row.z.abs, row.probe.max_ratio_L2);
    if (upper.size() >= 3) r.detail += "; slope over |zeta| >= 10: " + detail::num(rate_fit(upper, true, 3).slope);
    return r;
  }

  CriterionResult c9() {
    CriterionResult r;
    const PresetRun& run = sweep("dirichlet-L2");
    const auto fi = eps_fit(run.report, "interior_H1"), fg = eps_fit(run.report, "H1");
    r.pass = fi && fi->slope >= 0.9;
    r.detail = "interior H1 slope on (1/4, 3/4) " + detail::fit_text(fi) + " vs global " + detail::fit_text(fg);
    return r;
  }

  CriterionResult c10() {
    CriterionResult r;
    const PresetRun& nm = sweep("neumann");
    const auto fl = eps_fit(nm.report, "L2"), fh = eps_fit(nm.report, "H1");
    // Full resolvent against the kernel decomposition.
    const Lattice lat = Lattice::unit(1);
    const PeriodicCoefficient coef = coefficient_registry("layered1d", {}, lat, 1);
    auto mesh = std::make_shared<const Mesh>(Mesh::interval(lat, 0.0, 1.0, 512, "iv"));
    const EllipticSystem sys = assemble_system(coef, gradient_symbol(1), mesh, 1.0 / 16, BoundaryCondition::Neumann);
    const KernelProjector kp = kernel_projector(gradient_symbol(1), mesh);
    const std::vector<GridField> F = make_ensemble(*mesh, 1, EnsembleSpec{16, 7, 4});
    double worst = 0.0;
    for (cplx zeta : {cplx(-1.0), cplx(0.5, 2.0), cplx(-3.0, -0.5)}) {
      const SpectralPoint z = SpectralPoint::make(zeta);
      const auto full = Resolvent(sys, z, false).solve(F);
      const auto red = KernelReducedResolvent(sys, kp, z, false).solve(F);
      for (std::size_t k = 0; k < F.size(); ++k) {
        const VectorXc a = field_to_dofs(full[k].u);
        const VectorXc b = field_to_dofs(red[k].u) - kp.project_kernel(field_to_dofs(F[k])) / zeta;
        worst = std::max(worst, (a - b).norm() / a.norm());
      }
    }
    const PresetRun& kr = sweep("neumann-kernel");
    const auto fk = eps_fit(kr.report, "L2");
    r.pass = in(fl, 0.9, 1.1) && fh && fh->slope >= 0.45 && worst <= 1e-9 && in(fk, 0.9, 1.1);
    r.detail = "Neumann L2 slope " + detail::fit_text(fl) + ", H1 " + detail::fit_text(fh) +
               "; decomposition error " + detail::num(worst, 3) + "; kernel dim " +
               std::to_string(kr.report.kernel_dim) + ", zeta = " + detail::num(kr.report.rows.front().z.zeta.real()) +
               " (c_flat " + detail::num(kr.report.c_ref) + "), L2 slope " + detail::fit_text(fk);
    return r;
  }

  CriterionResult c11() {
    CriterionResult r;
    struct Row {
      cplx zeta;
      Regime regime;
      double c_ref, c_phi, rho;
    };
    const std::vector<Row> table = {
        {std::polar(2.0, kPi), Regime::Sector, 0.0, 1.0, 1.0},
        {std::polar(2.0, kPi / 6), Regime::Sector, 0.0, 2.0, 4.0},
        {std::polar(0.5, 3 * kPi / 4), Regime::RhoZero, 0.0, 1.0, 4.0},
        {std::polar(3.0, kPi / 4), Regime::RhoZero, 0.0, std::sqrt(2.0), 2.0},
        {cplx(1.0 - 2.0), Regime::BelowCStar, 1.0, 1.0, 1.0},
        {cplx(1.0 - 0.5), Regime::BelowCStar, 1.0, 1.0, 4.0},
        {cplx(3.0 - 0.25), Regime::BelowCFlat, 3.0, 1.0, 16.0},
        {cplx(3.0, 0.5), Regime::BelowCFlat, 3.0, std::sqrt(37.0), 4.0},
    };
    double worst = 0.0;
    for (const auto& t : table) {
      const ZetaFactors f = zeta_factors(t.zeta, t.regime, t.c_ref);
      worst = std::max({worst, std::abs(f.c_phi - t.c_phi), std::abs(f.rho - t.rho)});
    }
    int forbidden = 0;
    for (auto [z, reg, c] : std::vector<std::tuple<cplx, Regime, double>>{
             {2.0, Regime::Sector, 0.0}, {0.0, Regime::RhoZero, 0.0}, {1.5, Regime::BelowCStar, 1.0},
             {1.0, Regime::BelowCFlat, 1.0}}) {
      try {
        zeta_factors(z, reg, c);
      } catch (const Error& e) {
        forbidden += e.code() == ErrorCode::ForbiddenZeta;
      }
    }
    const PresetRun& run = sweep("dirichlet-shifted");
    const auto fl = eps_fit(run.report, "L2"), fh = eps_fit(run.report, "H1");
    r.pass = worst <= 1e-12 && forbidden == 4 && in(fl, 0.9, 1.1) && fh && fh->slope >= 0.45;
    r.detail = "table error " + detail::num(worst, 3) + ", forbidden points rejected " + std::to_string(forbidden) +
               "/4; zeta = c_* - 1/4 = " + detail::num(run.report.rows.front().z.zeta.real()) + ", L2 slope " +
               detail::fit_text(fl) + ", H1 " + detail::fit_text(fh);
    return r;
  }

  CriterionResult c12() {
    CriterionResult r;
    const PresetRun& run = sweep("disk-trig2d");
    const auto f = eps_fit(run.report, "L2");
    r.pass = f && f->slope >= 0.8 && run.report.failed_fraction == 0.0;
    r.detail = "L2 slope " + detail::fit_text(f) + ", h at the finest eps " +
               detail::num(run.report.rows.back().h, 3) + ", " + sweep_health(run.report);
    return r;
  }

  CriterionResult c13() {
    CriterionResult r;
    if (order_.empty()) sweep("dirichlet-L2");
    int compared = 0, differ = 0;
    for (const auto& name : order_) {
      // Second pass with a different thread count.
      const PresetRun again = run_preset(name, opt_.threads == 1 ? 2 : 1);
      const auto& a = cache_.at(name).report.rows;
      const auto& b = again.report.rows;
      if (a.size() != b.size()) {
        differ += 1;
        continue;
      }
      for (std::size_t i = 0; i < a.size(); ++i) {
        ++compared;
        differ += strip_timing(csv_row(a[i])) != strip_timing(csv_row(b[i]));
      }
    }
    r.pass = compared > 0 && differ == 0;
    r.detail = std::to_string(compared) + " rows from " + std::to_string(order_.size()) + " sweeps compared, " +
               std::to_string(differ) + " differ";
    return r;
  }
};

inline VerifyOutcome run_verification(const VerifyOptions& opt = {}) { return Verifier(opt).run(); }

inline std::string criterion_line(const CriterionResult& c) {
  char head[96];
  std::snprintf(head, sizeof head, "[%s] %2d %-28s (%.1f s) ", c.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                c.seconds);
  return head + c.detail;
}

}  // namespace homog
