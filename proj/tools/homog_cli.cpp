// homog_cli: cell problems, (eps, zeta) sweeps and the verification suite.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "homog/verify.hpp"

namespace fs = std::filesystem;
using namespace homog;

namespace {

enum Exit { kOk = 0, kThreshold = 1, kConfig = 2, kSolver = 3 };

int report_error(const std::exception& e, int code) {
  json j;
  j["error"] = detail::error_status(e);
  j["message"] = e.what();
  j["exit_code"] = code;
  std::cerr << j.dump() << std::endl;
  return code;
}

struct Common {
  std::string config;
  std::string preset;
  std::string out;
  int threads = 1;
  bool svg = false;
};

RunConfig load(const Common& c) {
  ConfigFile cf;
  if (!c.config.empty()) cf = load_config_file(c.config);
  else if (!c.preset.empty()) {
    cf.source = "preset";
    cf.values["preset"] = c.preset;
  } else {
    fail(ErrorCode::ConfigError, "give --config PATH or --preset NAME");
  }
  if (!c.config.empty() && !c.preset.empty()) {
    require(!cf.has("preset"), ErrorCode::ConfigError, "--preset conflicts with 'preset' in the config file");
    cf.values["preset"] = c.preset;
  }
  RunConfig rc = resolve_config(cf);
  if (!c.out.empty()) rc.out_dir = c.out;
  require(c.threads >= 1, ErrorCode::ConfigError, "--threads must be positive");
  return rc;
}

int run_cell(const Common& c) {
  RunConfig rc;
  std::optional<Lattice> lat;
  std::optional<PeriodicCoefficient> coef;
  DifferentialSymbol sym;
  try {
    rc = load(c);
    lat.emplace(rc.make_lattice());
    sym = symbol_registry(rc.symbol, lat->dim());
    coef.emplace(coefficient_registry(rc.coefficient, rc.coefficient_params, *lat, sym.m));
  } catch (const std::exception& e) {
    return report_error(e, kConfig);
  }
  try {
    CellSolution cs = solve_cell_problem(*coef, sym, *lat, rc.cell_grid);
    lambda_diagnostics(cs, validate_symbol(sym, 400).alpha0, *lat);
    const json j = cell_json(rc, cs);
    const fs::path dir(rc.out_dir);
    write_text(dir / (rc.prefix + "_cell.json"), j.dump(2) + "\n");
    write_text(dir / (rc.prefix + "_cell.csv"), cell_csv(cs));
    std::cout << j.dump(2) << std::endl;
  } catch (const std::exception& e) {
    return report_error(e, kSolver);
  }
  return kOk;
}

int run_sweep_cmd(const Common& c, int row) {
  RunConfig rc;
  try {
    rc = load(c);
    // Cheap checks before the cell solve.
    const Lattice lat = rc.make_lattice();
    const DifferentialSymbol sym = symbol_registry(rc.symbol, lat.dim());
    coefficient_registry(rc.coefficient, rc.coefficient_params, lat, sym.m);
    sweep_spec_for(rc, nullptr, c.threads);
  } catch (const std::exception& e) {
    return report_error(e, kConfig);
  }
  try {
    auto cell = std::make_shared<const CellSolution>(solve_cell_for(rc));
    const SweepSpec spec = sweep_spec_for(rc, cell, c.threads);
    if (row >= 0) {
      const SweepRow r = rerun_row(spec, row);
      std::cout << csv_header() << "\n" << csv_row(r) << std::endl;
      return r.ok() ? kOk : kSolver;
    }
    const SweepReport rep = run_sweep(spec);
    const fs::path dir(rc.out_dir);
    write_text(dir / (rc.prefix + ".csv"), sweep_csv(rep));
    write_text(dir / (rc.prefix + ".jsonl"), sweep_jsonl(rc, rep));
    const json summary = sweep_summary(rc, rep);
    write_text(dir / (rc.prefix + "_summary.json"), summary.dump(2) + "\n");
    if (c.svg)
      for (const char* metric : {"L2", "H1"}) {
        auto [by_eps, by_zeta] = sweep_svgs(rep, spec.eps.size(), spec.zetas.size(), metric);
        write_text(dir / (rc.prefix + "_" + metric + "_vs_eps.svg"), by_eps);
        write_text(dir / (rc.prefix + "_" + metric + "_vs_zeta.svg"), by_zeta);
      }
    std::cout << summary.dump(2) << std::endl;
    if (rep.failed_fraction >= 0.2) {
      std::cerr << json{{"error", "FailureBudgetExceeded"}, {"failed_fraction", rep.failed_fraction},
                        {"exit_code", kSolver}}
                       .dump()
                << std::endl;
      return kSolver;
    }
  } catch (const Error& e) {
    const bool config = e.code() == ErrorCode::ConfigError || e.code() == ErrorCode::ForbiddenZeta;
    return report_error(e, config ? kConfig : kSolver);
  } catch (const std::exception& e) {
    return report_error(e, kSolver);
  }
  return kOk;
}

int run_verify(const Common& c, const std::vector<int>& only) {
  VerifyOptions opt;
  opt.threads = std::max(1, c.threads);
  opt.only.insert(only.begin(), only.end());
  opt.on_result = [](const CriterionResult& r) { std::cout << criterion_line(r) << std::endl; };
  VerifyOutcome out;
  try {
    out = run_verification(opt);
  } catch (const std::exception& e) {
    return report_error(e, kSolver);
  }
  const fs::path dir(c.out.empty() ? "." : c.out);
  write_text(dir / "verify.csv", verify_csv(out.sweeps));
  json j = json::array();
  for (const auto& r : out.criteria)
    j.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}, {"seconds", r.seconds}});
  write_text(dir / "verify.json", j.dump(2) + "\n");
  int passed = 0;
  for (const auto& r : out.criteria) passed += r.pass;
  std::cout << passed << "/" << out.criteria.size() << " criteria passed" << std::endl;
  return out.pass() ? kOk : kThreshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic homogenization: effective matrices, corrector error sweeps and rate checks"};
  app.require_subcommand(1);
  Common c;
  auto add_common = [&c](CLI::App* sub, bool config) {
    if (config) {
      sub->add_option("--config", c.config, "run configuration (key = value)");
      sub->add_option("--preset", c.preset, "start from a named preset");
    }
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--threads", c.threads, "worker threads");
  };
  auto* cell = app.add_subcommand("cell", "solve the cell problem and report the effective matrix");
  add_common(cell, true);
  auto* sweep = app.add_subcommand("sweep", "run an (eps, zeta) error sweep");
  add_common(sweep, true);
  sweep->add_flag("--svg", c.svg, "write log-log plots");
  int row = -1;
  sweep->add_option("--row", row, "recompute a single row id and print it");
  auto* verify = app.add_subcommand("verify", "run the acceptance checks");
  add_common(verify, false);
  std::vector<int> only;
  verify->add_option("--only", only, "criterion ids to run")->delimiter(',');
  auto* list = app.add_subcommand("list-presets", "list the built-in presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return kConfig;
  }
  if (*list) {
    for (const auto& p : presets()) std::cout << p.name << "\t" << p.description << "\n";
    return kOk;
  }
  if (*cell) return run_cell(c);
  if (*sweep) return run_sweep_cmd(c, row);
  if (*verify) return run_verify(c, only);
  return kConfig;
}
