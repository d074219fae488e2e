#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "homog/config.hpp"

namespace homog {

using json = nlohmann::json;

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "id",      "bc",        "eps",       "zeta_re",     "zeta_im",         "phi",         "abs",
      "ensemble_size", "seed", "h",        "ndof",        "err_L2",          "err_H1_corr", "err_H1_plain",
      "err_flux", "err_H1_interior", "argmax_F_id", "shape_L2", "shape_H1",     "C_L2",        "C_H1",
      "rho",     "c_phi",     "status",    "seconds"};
  return cols;
}

inline std::string csv_header() {
  std::string s;
  for (const auto& c : csv_columns()) s += (s.empty() ? "" : ",") + c;
  return s;
}

/// One CSV line; timing is the last column so that it can be cut off for
/// determinism comparisons.
inline std::string csv_row(const SweepRow& r) {
  std::ostringstream o;
  o << r.id << ',' << to_string(r.bc) << ',' << fmt_g17(r.eps) << ',' << fmt_g17(r.z.zeta.real()) << ','
    << fmt_g17(r.z.zeta.imag()) << ',' << fmt_g17(r.z.phi) << ',' << fmt_g17(r.z.abs) << ',' << r.ensemble_size
    << ',' << r.seed << ',' << fmt_g17(r.h) << ',' << r.ndof << ',' << fmt_g17(r.probe.max_ratio_L2) << ','
    << fmt_g17(r.probe.max_ratio_H1) << ',' << fmt_g17(r.probe.max_ratio_H1_plain) << ','
    << fmt_g17(r.probe.max_ratio_flux) << ',' << fmt_g17(r.probe.max_ratio_interior) << ',' << r.probe.argmax_F_id
    << ',' << fmt_g17(r.shape.L2) << ',' << fmt_g17(r.shape.H1) << ',' << fmt_g17(r.C_L2) << ','
    << fmt_g17(r.C_H1) << ',' << fmt_g17(r.factors.rho) << ',' << fmt_g17(r.factors.c_phi) << ',' << r.status << ','
    << fmt_g17(r.seconds);
  return o.str();
}

inline std::string strip_timing(const std::string& line) {
  const auto k = line.rfind(',');
  return k == std::string::npos ? line : line.substr(0, k);
}

inline std::string sweep_csv(const SweepReport& rep) {
  std::string s = csv_header() + "\n";
  for (const auto& r : rep.rows) s += csv_row(r) + "\n";
  return s;
}

inline json to_json(const SweepRow& r) {
  return {{"type", "row"},
          {"id", r.id},
          {"bc", to_string(r.bc)},
          {"eps", r.eps},
          {"zeta", {r.z.zeta.real(), r.z.zeta.imag()}},
          {"phi", r.z.phi},
          {"abs", r.z.abs},
          {"ensemble_size", r.ensemble_size},
          {"seed", r.seed},
          {"h", r.h},
          {"ndof", r.ndof},
          {"err_L2", r.probe.max_ratio_L2},
          {"err_H1_corr", r.probe.max_ratio_H1},
          {"err_H1_plain", r.probe.max_ratio_H1_plain},
          {"err_flux", r.probe.max_ratio_flux},
          {"err_H1_interior", r.probe.max_ratio_interior},
          {"argmax_F_id", r.probe.argmax_F_id},
          {"max_residual", r.probe.max_residual},
          {"bound_shape", {{"L2", r.shape.L2}, {"H1", r.shape.H1}, {"interior", r.shape.interior}}},
          {"fitted_constants", {{"L2", r.C_L2}, {"H1", r.C_H1}}},
          {"rho", r.factors.rho},
          {"c_phi", r.factors.c_phi},
          {"status", r.status},
          {"seconds", r.seconds}};
}

inline json to_json(const RateFitEntry& f) {
  return {{"type", "fit"},   {"metric", f.metric},         {"axis", f.axis},       {"fixed", f.fixed},
          {"slope", f.fit.slope}, {"intercept", f.fit.intercept}, {"r2", f.fit.r2}, {"ci95", f.fit.ci95},
          {"points", f.fit.points}};
}

inline json to_json(const EnvelopeResult& e) {
  return {{"shape", e.shape},           {"fitted_C", e.fitted_C}, {"spread", e.spread},
          {"min_ratio", e.min_ratio},   {"median_ratio", e.median_ratio}, {"rows", e.rows}};
}

inline json to_json(const HalvingCheck& h) {
  return {{"performed", h.performed}, {"eps", h.eps},   {"change_L2", h.change_L2},
          {"change_H1", h.change_H1}, {"ok", h.ok},     {"status", h.status}};
}

inline json sweep_metadata(const RunConfig& rc, const SweepReport& rep) {
  json mesh = json::array();
  std::map<double, std::pair<double, long>> by_eps;
  for (const auto& r : rep.rows)
    if (r.ok()) by_eps[r.eps] = {r.h, r.ndof};
  for (auto it = by_eps.rbegin(); it != by_eps.rend(); ++it)
    mesh.push_back({{"eps", it->first}, {"h", it->second.first}, {"ndof", it->second.second}});
  json cfg = json::object();
  for (const auto& [k, v] : rc.echo) cfg[k] = v;
  return {{"type", "metadata"},
          {"name", rep.name},
          {"config", cfg},
          {"regime", to_string(rc.regime)},
          {"smoothing", to_string(rc.smoothing)},
          {"ensemble", {{"size", rc.ensemble.size}, {"seed", rc.ensemble.seed}, {"cutoff", rc.ensemble.cutoff}}},
          {"mesh", mesh},
          {"c_ref", std::isfinite(rep.c_ref) ? json(rep.c_ref) : json(nullptr)},
          {"kernel_dim", rep.kernel_dim},
          {"failed_fraction", rep.failed_fraction},
          {"seconds", rep.seconds}};
}

inline json sweep_summary(const RunConfig& rc, const SweepReport& rep) {
  json j = sweep_metadata(rc, rep);
  j["type"] = "summary";
  j["fits"] = json::array();
  for (const auto& f : rep.fits) j["fits"].push_back(to_json(f));
  j["envelope_status"] = rep.envelope_status;
  j["envelopes"] = json::object();
  for (const auto& [k, e] : rep.envelopes) j["envelopes"][k] = to_json(e);
  j["halving"] = to_json(rep.halving);
  // Headline slopes: L2 and H1 along eps at the first zeta.
  if (!rep.rows.empty()) {
    const double z0 = rep.rows.front().z.abs;
    for (const char* m : {"L2", "H1", "H1_plain", "interior_H1"})
      if (auto f = find_fit(rep, m, "eps", z0)) j["slope_" + std::string(m)] = f->slope;
  }
  return j;
}

inline std::string sweep_jsonl(const RunConfig& rc, const SweepReport& rep) {
  std::string s = sweep_metadata(rc, rep).dump() + "\n";
  for (const auto& r : rep.rows) s += to_json(r).dump() + "\n";
  for (const auto& f : rep.fits) s += to_json(f).dump() + "\n";
  for (const auto& [k, e] : rep.envelopes) {
    json je = to_json(e);
    je["type"] = "envelope";
    je["metric"] = k;
    s += je.dump() + "\n";
  }
  json jh = to_json(rep.halving);
  jh["type"] = "halving";
  s += jh.dump() + "\n";
  return s;
}

// ---------------------------------------------------------------------------
// SVG

struct PlotSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// Log-log line plot with decade ticks.
inline std::string svg_loglog(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                              const std::vector<PlotSeries>& series) {
  const double W = 640, H = 440, L = 80, R = 150, T = 40, B = 60;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (auto [x, y] : s.points)
      if (x > 0 && y > 0) {
        x0 = std::min(x0, std::log10(x));
        x1 = std::max(x1, std::log10(x));
        y0 = std::min(y0, std::log10(y));
        y1 = std::max(y1, std::log10(y));
      }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  x0 = std::floor(x0), x1 = std::max(std::ceil(x1), x0 + 1);
  y0 = std::floor(y0), y1 = std::max(std::ceil(y1), y0 + 1);
  auto px = [&](double lx) { return L + (lx - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double ly) { return H - B - (ly - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(x0); e <= static_cast<int>(x1); ++e)
    o << "<line x1=\"" << px(e) << "\" y1=\"" << H - B << "\" x2=\"" << px(e) << "\" y2=\"" << H - B + 5
      << "\" stroke=\"black\"/><text x=\"" << px(e) << "\" y=\"" << H - B + 18
      << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
  for (int e = static_cast<int>(y0); e <= static_cast<int>(y1); ++e)
    o << "<line x1=\"" << L - 5 << "\" y1=\"" << py(e) << "\" x2=\"" << L << "\" y2=\"" << py(e)
      << "\" stroke=\"black\"/><text x=\"" << L - 8 << "\" y=\"" << py(e) + 4 << "\" text-anchor=\"end\">1e" << e
      << "</text>\n";
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">" << xlabel
    << "</text>\n";
  o << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* c = colors[k % 7];
    std::ostringstream pts;
    for (auto [x, y] : series[k].points)
      if (x > 0 && y > 0) pts << px(std::log10(x)) << ',' << py(std::log10(y)) << ' ';
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"" << pts.str() << "\"/>\n";
    for (auto [x, y] : series[k].points)
      if (x > 0 && y > 0)
        o << "<circle cx=\"" << px(std::log10(x)) << "\" cy=\"" << py(std::log10(y)) << "\" r=\"3\" fill=\"" << c
          << "\"/>\n";
    const double ly = T + 16 + 18 * k;
    o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/><text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">"
      << series[k].label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Error vs eps for each zeta, and error vs |zeta| for each eps.
inline std::pair<std::string, std::string> sweep_svgs(const SweepReport& rep, std::size_t neps, std::size_t nzeta,
                                                      const std::string& metric = "L2") {
  std::vector<PlotSeries> by_zeta, by_eps;
  for (std::size_t iz = 0; iz < nzeta; ++iz) {
    PlotSeries s;
    const auto& z = rep.rows[iz].z.zeta;
    s.label = "zeta=" + fmt_g17(z.real()).substr(0, 8) + (z.imag() >= 0 ? "+" : "") + fmt_g17(z.imag()).substr(0, 8) + "i";
    for (std::size_t ie = 0; ie < neps; ++ie) {
      const auto& r = rep.rows[ie * nzeta + iz];
      if (r.ok()) s.points.emplace_back(r.eps, row_metric(r, metric));
    }
    by_zeta.push_back(s);
  }
  for (std::size_t ie = 0; ie < neps; ++ie) {
    PlotSeries s;
    s.label = "eps=" + fmt_g17(rep.rows[ie * nzeta].eps).substr(0, 8);
    for (std::size_t iz = 0; iz < nzeta; ++iz) {
      const auto& r = rep.rows[ie * nzeta + iz];
      if (r.ok()) s.points.emplace_back(r.z.abs, row_metric(r, metric));
    }
    by_eps.push_back(s);
  }
  return {svg_loglog(rep.name + ": " + metric + " error vs eps", "eps", metric + " error / |F|", by_zeta),
          svg_loglog(rep.name + ": " + metric + " error vs |zeta|", "|zeta|", metric + " error / |F|", by_eps)};
}

// ---------------------------------------------------------------------------
// Cell report

inline json matrix_json(const MatrixXc& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      row.push_back(m(i, j).imag() == 0.0 ? json(m(i, j).real()) : json({m(i, j).real(), m(i, j).imag()}));
    rows.push_back(row);
  }
  return rows;
}

inline json cell_json(const RunConfig& rc, const CellSolution& cs) {
  const SpecialCases sc = detect_special_cases(cs);
  const LambdaDiagnostics& dg = cs.diagnostics;
  json cfg = json::object();
  for (const auto& [k, v] : rc.echo) cfg[k] = v;
  return {{"type", "cell"},
          {"name", rc.name},
          {"config", cfg},
          {"coefficient", rc.coefficient},
          {"symbol", rc.symbol},
          {"grid_n", cs.grid_n},
          {"g0", matrix_json(cs.g0)},
          {"g_bar", matrix_json(cs.g_bar)},
          {"g_under", matrix_json(cs.g_under)},
          {"g0_asymmetry", cs.g0_asymmetry},
          {"residual", cs.residual},
          {"flags",
           {{"g0_equals_bar", sc.g0_equals_bar},
            {"g0_equals_under", sc.g0_equals_under},
            {"lambda_zero", sc.lambda_zero},
            {"condition_2_8", dg.condition_2_8},
            {"tolerance", sc.tolerance}}},
          {"diagnostics",
           {{"lambda_L2", dg.lambda_L2},
            {"grad_lambda_L2", dg.grad_lambda_L2},
            {"bound_grad", dg.bound_grad},
            {"bound_value", dg.bound_value},
            {"grad_bound_ok", dg.grad_bound_ok},
            {"value_bound_ok", dg.value_bound_ok},
            {"lambda_sup", dg.lambda_sup},
            {"M1", dg.M1},
            {"M2", dg.M2}}}};
}

inline std::string cell_csv(const CellSolution& cs) {
  std::string s = "quantity,i,j,re,im\n";
  auto emit = [&](const char* name, const MatrixXc& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        s += std::string(name) + "," + std::to_string(i) + "," + std::to_string(j) + "," + fmt_g17(m(i, j).real()) +
             "," + fmt_g17(m(i, j).imag()) + "\n";
  };
  emit("g0", cs.g0);
  emit("g_bar", cs.g_bar);
  emit("g_under", cs.g_under);
  return s;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::InvalidArgument, "cannot write " + p.string());
  out << text;
}

}  // namespace homog
