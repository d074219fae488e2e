#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "homog/config.hpp"
#include "homog/report.hpp"

namespace fs = std::filesystem;
using namespace homog;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("homog_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CliRun cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string(HOMOG_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() + " 2> " +
                          (dir / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  CliRun r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(dir / "stdout.txt");
  r.err = slurp(dir / "stderr.txt");
  return r;
}

fs::path write_conf(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.conf";
  std::ofstream(p) << text;
  return p;
}

std::vector<std::string> lines_without_timing(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string line;
  while (std::getline(ss, line)) out.push_back(strip_timing(line));
  return out;
}

}  // namespace

TEST(Config, NumberAndComplexExpressions) {
  EXPECT_DOUBLE_EQ(parse_real("1/8"), 0.125);
  EXPECT_DOUBLE_EQ(parse_real("-pi/2"), -kPi / 2);
  EXPECT_DOUBLE_EQ(parse_real("3*pi/4"), 3 * kPi / 4);
  EXPECT_DOUBLE_EQ(parse_real("1e-3"), 1e-3);
  EXPECT_EQ(parse_complex("-1"), cplx(-1.0));
  EXPECT_EQ(parse_complex("10i"), cplx(0.0, 10.0));
  EXPECT_EQ(parse_complex("3-4i"), cplx(3.0, -4.0));
  EXPECT_EQ(parse_complex("-i"), cplx(0.0, -1.0));
  EXPECT_EQ(parse_complex("1e-2+1/2i"), cplx(0.01, 0.5));
  for (const char* bad : {"", "abc", "1/0", "2*", "pi pi"}) EXPECT_THROW(parse_real(bad), Error) << bad;
}

TEST(Config, StrictParsing) {
  EXPECT_THROW(parse_config_text("a = 1\na = 2\n"), Error);
  EXPECT_THROW(parse_config_text("no equals sign\n"), Error);
  EXPECT_THROW(parse_config_text("key =\n"), Error);
  const ConfigFile cf = parse_config_text("# comment\n  Bc = dirichlet  # trailing\n\n");
  EXPECT_EQ(cf.values.at("bc"), "dirichlet");
  EXPECT_THROW(resolve_config(parse_config_text("unknown.key = 1\n")), Error);
  EXPECT_THROW(resolve_config(parse_config_text("coefficient.bogus = 1\n")), Error);
  EXPECT_THROW(resolve_config(parse_config_text("zeta.points = -1\nzeta.shift = -1\n")), Error);
  EXPECT_THROW(resolve_config(parse_config_text("zeta.shift = -1\n")), Error);
  EXPECT_THROW(resolve_config(parse_config_text("preset = nope\n")), Error);
}

TEST(Config, PresetOverridesAndZetaGrid) {
  const RunConfig rc =
      resolve_config(parse_config_text("preset = dirichlet-zeta\nzeta.moduli = 1 100\nzeta.rays = pi/2, pi\n"));
  ASSERT_EQ(rc.zetas.size(), 4u);
  EXPECT_NEAR(rc.zetas[1].value.imag(), 100.0, 1e-12);
  EXPECT_NEAR(rc.zetas[2].value.real(), -1.0, 1e-12);
  EXPECT_EQ(rc.eps.size(), 4u);
  EXPECT_EQ(rc.name, "dirichlet-zeta");
  EXPECT_EQ(rc.ratio, 32.0);
}

TEST(Config, EveryShippedConfigResolves) {
  int count = 0;
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(HOMOG_CONFIG_DIR)) {
    if (e.path().extension() != ".conf") continue;
    EXPECT_NO_THROW(load_run_config(e.path().string())) << e.path();
    names.insert(e.path().stem().string());
    ++count;
  }
  EXPECT_GE(count, static_cast<int>(presets().size()));
  for (const auto& p : presets()) {
    EXPECT_TRUE(names.count(p.name)) << p.name;
    RunConfig a = preset_config(p.name);
    a.echo.erase("preset");
    const RunConfig b = load_run_config(std::string(HOMOG_CONFIG_DIR) + "/" + p.name + ".conf");
    EXPECT_EQ(a.echo, b.echo) << p.name;
  }
}

TEST(Cli, ConstantCellReportsG) {
  const fs::path dir = scratch("constant");
  const fs::path conf = write_conf(dir, "lattice.basis = 1 0; 0 1\ncoefficient.name = constant\ncoefficient.value = 3\n"
                                        "cell.grid_n = 16\noutput.prefix = c\n");
  const CliRun r = cli("cell --config " + conf.string() + " --out " + dir.string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(slurp(dir / "c_cell.json"));
  EXPECT_NEAR(j["g0"][0][0].get<double>(), 3.0, 1e-12);
  EXPECT_NEAR(j["g0"][1][1].get<double>(), 3.0, 1e-12);
  EXPECT_NEAR(j["g0"][0][1].get<double>(), 0.0, 1e-12);
  for (const char* flag : {"g0_equals_bar", "g0_equals_under", "lambda_zero", "condition_2_8"})
    EXPECT_TRUE(j["flags"][flag].get<bool>()) << flag;
  EXPECT_TRUE(fs::exists(dir / "c_cell.csv"));
}

TEST(Cli, LayeredCellHarmonicMean) {
  const fs::path dir = scratch("layered");
  const CliRun r = cli("cell --config " + std::string(HOMOG_CONFIG_DIR) + "/cell-layered1d.conf --out " + dir.string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j["g0"][0][0].get<double>(), 1.6, 1e-10);
  EXPECT_NEAR(j["g_bar"][0][0].get<double>(), 2.5, 1e-12);
  EXPECT_NEAR(j["g_under"][0][0].get<double>(), 1.6, 1e-12);
}

TEST(Cli, InvalidFractionIsConfigError) {
  const fs::path dir = scratch("fraction");
  const fs::path conf = write_conf(dir, "lattice.basis = 1\ncoefficient.name = layered1d\ncoefficient.fraction = 1.5\n");
  const CliRun r = cli("cell --config " + conf.string() + " --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 2);
  const json j = json::parse(r.err);
  EXPECT_EQ(j["error"], "InvalidFraction");
  EXPECT_EQ(j["exit_code"], 2);
}

TEST(Cli, SweepValidationErrors) {
  const fs::path dir = scratch("validation");
  struct Case {
    std::string text, error;
  };
  const std::vector<Case> cases = {
      {"preset = dirichlet-L2\neps_grid = ,\n", "ConfigError"},
      {"preset = dirichlet-L2\neps_grid = 1/16 1/8\n", "ConfigError"},
      {"preset = dirichlet-L2\neps_grid = 1/2 1/4 1/8\n", "ConfigError"},
      {"preset = dirichlet-L2\nzeta.points = 2\n", "ForbiddenZeta"},
      {"preset = dirichlet-L2\nbc = torus\n", "ConfigError"},
      {"preset = dirichlet-L2\nregime = below_c_flat\nzeta.points =\n", "ConfigError"},
  };
  for (const auto& c : cases) {
    const fs::path conf = write_conf(dir, c.text);
    const CliRun r = cli("sweep --config " + conf.string() + " --out " + dir.string(), dir);
    EXPECT_EQ(r.code, 2) << c.text;
    EXPECT_EQ(json::parse(r.err)["error"], c.error) << c.text;
  }
  EXPECT_EQ(cli("sweep", dir).code, 2);
  EXPECT_EQ(cli("frobnicate", dir).code, 2);
}

TEST(Cli, FailureBudget) {
  // Interval length 0.95 is not a multiple of any eps / 32: every point fails.
  const fs::path dir = scratch("budget");
  const fs::path conf = write_conf(dir, "preset = dirichlet-L2\ndomain.b = 0.95\nhalving = false\n");
  const CliRun r = cli("sweep --config " + conf.string() + " --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(json::parse(r.err)["error"], "FailureBudgetExceeded");
  const std::string csv = slurp(dir / "dirichlet-L2.csv");
  EXPECT_NE(csv.find("IncommensurateEps"), std::string::npos);
}

TEST(Cli, DirichletL2PresetSlope) {
  const fs::path dir = scratch("dirichlet");
  const CliRun r = cli("sweep --preset dirichlet-L2 --svg --out " + dir.string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = json::parse(slurp(dir / "dirichlet-L2_summary.json"));
  EXPECT_GE(s["slope_L2"].get<double>(), 0.9);
  EXPECT_LE(s["slope_L2"].get<double>(), 1.1);
  EXPECT_TRUE(s["halving"]["ok"].get<bool>());
  EXPECT_EQ(s["ensemble"]["seed"], 20240611);
  EXPECT_EQ(s["config"]["preset"], "dirichlet-L2");
  for (const char* f : {"dirichlet-L2_L2_vs_eps.svg", "dirichlet-L2_H1_vs_zeta.svg"})
    EXPECT_EQ(slurp(dir / f).rfind("<svg", 0), 0u) << f;

  // JSON-lines stream: metadata first, then one record per row.
  std::stringstream jl(slurp(dir / "dirichlet-L2.jsonl"));
  std::string line;
  std::getline(jl, line);
  EXPECT_EQ(json::parse(line)["type"], "metadata");
  int rows = 0;
  while (std::getline(jl, line)) rows += json::parse(line)["type"] == "row";
  EXPECT_EQ(rows, 6);

  // A single row id reproduces its errors.
  const CliRun one = cli("sweep --preset dirichlet-L2 --row 3", dir);
  ASSERT_EQ(one.code, 0) << one.err;
  const auto full = lines_without_timing(slurp(dir / "dirichlet-L2.csv"));
  const auto single = lines_without_timing(one.out);
  ASSERT_EQ(single.size(), 2u);
  EXPECT_EQ(single[1], full[4]);
}

TEST(Cli, NeumannKernelRecordsKernelDimension) {
  const fs::path dir = scratch("kernel");
  const CliRun r = cli("sweep --preset neumann-kernel --out " + dir.string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const json s = json::parse(slurp(dir / "neumann-kernel_summary.json"));
  EXPECT_EQ(s["kernel_dim"], 1);
  EXPECT_GT(s["c_ref"].get<double>(), 0.0);
}

TEST(Cli, DeterministicRows) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  const fs::path conf = write_conf(a, "preset = dirichlet-L2\nzeta.points = -1 10i\nhalving = false\n");
  ASSERT_EQ(cli("sweep --config " + conf.string() + " --threads 1 --out " + a.string(), a).code, 0);
  ASSERT_EQ(cli("sweep --config " + conf.string() + " --threads 3 --out " + b.string(), b).code, 0);
  const auto x = lines_without_timing(slurp(a / "dirichlet-L2.csv"));
  const auto y = lines_without_timing(slurp(b / "dirichlet-L2.csv"));
  ASSERT_EQ(x.size(), 13u);
  EXPECT_EQ(x, y);
}

TEST(Cli, VerifySubsetAndPresetList) {
  const fs::path dir = scratch("verify");
  const CliRun r = cli("verify --only 1 --out " + dir.string(), dir);
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("[PASS]  1"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "verify.csv"));
  const json j = json::parse(slurp(dir / "verify.json"));
  ASSERT_EQ(j.size(), 1u);
  EXPECT_TRUE(j[0]["pass"].get<bool>());

  const CliRun l = cli("list-presets", dir);
  EXPECT_EQ(l.code, 0);
  for (const auto& p : presets()) EXPECT_NE(l.out.find(p.name), std::string::npos);
}
