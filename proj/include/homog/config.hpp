#pragma once

#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "homog/harness.hpp"

namespace homog {

/// Flat `key = value` text with dotted keys; `#` starts a comment.
struct ConfigFile {
  std::string source;
  std::map<std::string, std::string> values;
  std::map<std::string, int> lines;

  bool has(const std::string& key) const { return values.count(key) != 0; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Splits on whitespace and commas.
inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

inline void merge_config_text(ConfigFile& cf, const std::string& text, bool allow_override) {
  std::istringstream in(text);
  std::string line;
  int no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::ConfigError,
            cf.source + ":" + std::to_string(no) + ": expected 'key = value'");
    const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
    const std::string value = detail::trim(line.substr(eq + 1));
    require(!key.empty(), ErrorCode::ConfigError, cf.source + ":" + std::to_string(no) + ": empty key");
    for (char c : key)
      require(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-', ErrorCode::ConfigError,
              cf.source + ":" + std::to_string(no) + ": invalid key '" + key + "'");
    require(!value.empty(), ErrorCode::ConfigError, cf.source + ":" + std::to_string(no) + ": empty value for " + key);
    require(seen.insert(key).second, ErrorCode::ConfigError,
            cf.source + ":" + std::to_string(no) + ": duplicate key '" + key + "'");
    require(allow_override || !cf.has(key), ErrorCode::ConfigError, "duplicate key '" + key + "'");
    cf.values[key] = value;
    cf.lines[key] = no;
  }
}

inline ConfigFile parse_config_text(const std::string& text, const std::string& source = "<text>") {
  ConfigFile cf;
  cf.source = source;
  merge_config_text(cf, text, false);
  return cf;
}

/// Real expression: products and quotients of numbers and `pi`, with an
/// optional leading sign ("1/8", "-pi/2", "3*pi/4", "1e-3").
inline double parse_real(const std::string& text) {
  std::string s = detail::trim(text);
  require(!s.empty(), ErrorCode::ConfigError, "empty number");
  double sign = 1.0;
  if (s[0] == '-' || s[0] == '+') {
    if (s[0] == '-') sign = -1.0;
    s = s.substr(1);
  }
  double acc = 1.0;
  char op = '*';
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t next = s.find_first_of("*/", pos);
    // Do not split exponents like 1e-3 (no '*' or '/' there anyway).
    const std::string tok = detail::trim(s.substr(pos, next == std::string::npos ? std::string::npos : next - pos));
    double v = 0.0;
    if (detail::lower(tok) == "pi") {
      v = kPi;
    } else {
      std::size_t used = 0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      require(used == tok.size() && !tok.empty(), ErrorCode::ConfigError, "invalid number '" + text + "'");
    }
    if (op == '*') acc *= v;
    else {
      require(v != 0.0, ErrorCode::ConfigError, "division by zero in '" + text + "'");
      acc /= v;
    }
    if (next == std::string::npos) break;
    op = s[next];
    pos = next + 1;
  }
  require(std::isfinite(acc), ErrorCode::ConfigError, "non-finite number '" + text + "'");
  return sign * acc;
}

/// Complex literal "a", "bi", "a+bi", "a-bi" (parts are real expressions).
inline cplx parse_complex(const std::string& text) {
  const std::string s = detail::trim(text);
  require(!s.empty(), ErrorCode::ConfigError, "empty complex number");
  if (s.back() != 'i') return parse_real(s);
  const std::string body = s.substr(0, s.size() - 1);
  std::size_t split = std::string::npos;
  for (std::size_t k = body.size(); k-- > 1;)
    if ((body[k] == '+' || body[k] == '-') && body[k - 1] != 'e' && body[k - 1] != 'E' && body[k - 1] != '*' &&
        body[k - 1] != '/') {
      split = k;
      break;
    }
  auto imag_of = [&](const std::string& t) {
    const std::string u = detail::trim(t);
    if (u.empty() || u == "+") return 1.0;
    if (u == "-") return -1.0;
    return parse_real(u);
  };
  if (split == std::string::npos) return cplx(0.0, imag_of(body));
  return cplx(parse_real(body.substr(0, split)), imag_of(body.substr(split)));
}

inline bool parse_bool(const std::string& text) {
  const std::string s = detail::lower(detail::trim(text));
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  fail(ErrorCode::ConfigError, "invalid boolean '" + text + "'");
}

inline int parse_int(const std::string& text) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(detail::trim(text), &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == detail::trim(text).size() && used > 0, ErrorCode::ConfigError, "invalid integer '" + text + "'");
  return static_cast<int>(v);
}

/// Everything a `cell` or `sweep` run needs.
struct RunConfig {
  std::string name = "run";
  std::vector<std::vector<double>> lattice{{1.0}};
  std::string coefficient = "layered1d";
  CoefficientParams coefficient_params;
  std::string symbol = "gradient";
  int cell_grid = 64;
  DomainSpec domain;
  BoundaryCondition bc = BoundaryCondition::Dirichlet;
  Regime regime = Regime::Sector;
  std::vector<double> eps;
  std::vector<ZetaSpec> zetas;
  EnsembleSpec ensemble;
  double ratio = 16.0;
  Smoothing smoothing = Smoothing::Steklov;
  double interior_delta = 0.0;
  bool constant_flux = false;
  bool halving = true;
  SolverLimits limits;
  std::string out_dir = ".";
  std::string prefix;
  std::map<std::string, std::string> echo;  // effective key/value pairs

  int dim() const { return static_cast<int>(lattice.size()); }
  Lattice make_lattice() const { return Lattice::build(lattice); }
  int coefficient_size() const {
    const DifferentialSymbol sym = symbol_registry(symbol, dim());
    return sym.m;
  }
};

struct Preset {
  std::string name;
  std::string description;
  std::string text;
};

/// Named experiments. Config files may start from one with `preset = NAME`
/// and override any key.
inline const std::vector<Preset>& presets() {
  static const std::vector<Preset> list = {
      {"cell-layered1d", "cell problem of the (1, 4, 1/2) two-phase medium",
       "lattice.basis = 1\ncoefficient.name = layered1d\ncell.grid_n = 64\n"},
      {"dirichlet-L2", "d=1 layered, Dirichlet on (0,1), zeta=-1, eps 1/8..1/256, h=eps/32, interior (1/4,3/4)",
       "lattice.basis = 1\ncoefficient.name = layered1d\ncell.grid_n = 64\ndomain.kind = interval\n"
       "domain.a = 0\ndomain.b = 1\nbc = dirichlet\nregime = sector\n"
       "eps_grid = 1/8 1/16 1/32 1/64 1/128 1/256\nzeta.points = -1\nmesh.ratio = 32\n"
       "smoothing = steklov\ninterior.delta = 1/4\n"},
      {"dirichlet-H1-none", "as dirichlet-L2 with the smoothing-free corrector",
       "lattice.basis = 1\ncoefficient.name = layered1d\ncell.grid_n = 64\ndomain.kind = interval\n"
       "domain.a = 0\ndomain.b = 1\nbc = dirichlet\nregime = sector\n"
       "eps_grid = 1/8 1/16 1/32 1/64 1/128 1/256\nzeta.points = -1\nmesh.ratio = 32\n"
       "smoothing = none\n"},
      {"dirichlet-zeta", "d=1 layered, Dirichlet, ray pi/2, |zeta| 1..1000, eps 1/8..1/64",
       "lattice.basis = 1\ncoefficient.name = layered1d\ncell.grid_n = 64\ndomain.kind = interval\n"
       "domain.a = 0\ndomain.b = 1\nbc = dirichlet\nregime = sector\n"
       "eps_grid = 1/8 1/16 1/32 1/64\nzeta.rays = pi/2\nzeta.moduli = 1 10 100 1000\nmesh.ratio = 32\n"
       "smoothing = steklov\n"},
      {"neumann", "d=1 layered, Neumann on (0,1), zeta=-1, eps 1/8..1/256",
       "lattice.basis = 1\ncoefficient.name = layered1d\ncell.grid_n = 64\ndomain.kind = interval\n"
       "domain.a = 0\ndomain.b = 1\nbc = neumann\nregime = sector\n"
       "eps_grid = 1/8 1/16 1/32 1/64 1/128 1/256\nzeta.points = -1\nmesh.ratio = 32\n"
       "smoothing = steklov\n"},
      {"neumann-kernel", "d=1 layered, Neumann operator on Z-orthogonal data, zeta = -c_flat/2",
       "lattice.basis = 1\ncoefficient.name = layered1d\ncell.grid_n = 64\ndomain.kind = interval\n"
       "domain.a = 0\ndomain.b = 1\nbc = neumann\nregime = below_c_flat\n"
       "eps_grid = 1/8 1/16 1/32 1/64 1/128 1/256\nzeta.scale = -1/2\nmesh.ratio = 32\n"
       "smoothing = steklov\n"},
      {"dirichlet-shifted", "d=1 layered, Dirichlet, zeta = c_* - 1/4 (real, below the spectrum)",
       "lattice.basis = 1\ncoefficient.name = layered1d\ncell.grid_n = 64\ndomain.kind = interval\n"
       "domain.a = 0\ndomain.b = 1\nbc = dirichlet\nregime = below_c_star\n"
       "eps_grid = 1/8 1/16 1/32 1/64 1/128 1/256\nzeta.shift = -1/4\nmesh.ratio = 32\n"
       "smoothing = steklov\n"},
      {"disk-trig2d", "d=2 trig2d, Dirichlet on the unit disk, zeta=-1, eps 1/4 1/8 1/16, h<=eps/16",
       "lattice.basis = 1 0; 0 1\ncoefficient.name = trig2d\ncell.grid_n = 64\ndomain.kind = disk\n"
       "domain.radius = 1\nbc = dirichlet\nregime = sector\nlimits.eps_max = 1/4\n"
       "eps_grid = 1/4 1/8 1/16\nzeta.points = -1\nmesh.ratio = 16\nsmoothing = steklov\n"},
      {"torus-trig2d", "d=2 trig2d on the unit torus, zeta on the ray pi/2",
       "lattice.basis = 1 0; 0 1\ncoefficient.name = trig2d\ncell.grid_n = 64\ndomain.kind = torus\n"
       "domain.periods = 1\nbc = torus\nregime = sector\neps_grid = 1/8 1/16 1/32\n"
       "zeta.rays = pi/2\nzeta.moduli = 1 10 100\nmesh.ratio = 16\nsmoothing = steklov\nensemble.size = 8\n"
       "halving = false\n"},
  };
  return list;
}

inline const Preset& find_preset(const std::string& name) {
  for (const auto& p : presets())
    if (p.name == name) return p;
  fail(ErrorCode::ConfigError, "unknown preset '" + name + "'");
}

namespace detail {

inline const std::set<std::string>& coefficient_param_keys() {
  static const std::set<std::string> keys = {"value", "g_minus", "g_plus",   "fraction", "mean",
                                             "amplitude", "amplitude2", "g_low", "g_high", "sharpness"};
  return keys;
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "preset",         "name",           "lattice.basis",  "coefficient.name", "symbol.name",
      "cell.grid_n",    "domain.kind",    "domain.a",       "domain.b",         "domain.size",
      "domain.radius",  "domain.periods", "bc",             "regime",           "eps_grid",
      "zeta.points",    "zeta.rays",      "zeta.moduli",    "zeta.shift",       "zeta.scale",
      "ensemble.size",  "ensemble.seed",  "ensemble.cutoff", "mesh.ratio",      "smoothing",
      "interior.delta", "flux.constant",  "limits.eps_max", "halving",          "output.dir",
      "output.prefix"};
  return keys;
}

inline std::vector<std::vector<double>> parse_basis(const std::string& text) {
  std::vector<std::vector<double>> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ';')) {
    std::vector<double> v;
    for (const auto& tok : split_list(part)) v.push_back(parse_real(tok));
    require(!v.empty(), ErrorCode::ConfigError, "empty lattice vector");
    out.push_back(v);
  }
  require(out.size() == 1 || out.size() == 2, ErrorCode::ConfigError, "lattice.basis needs 1 or 2 vectors");
  for (const auto& v : out)
    require(v.size() == out.size(), ErrorCode::ConfigError, "lattice vectors must have d entries");
  return out;
}

}  // namespace detail

/// Resolves a config (after preset expansion) into a RunConfig. Unknown
/// keys and malformed values raise ConfigError.
inline RunConfig resolve_config(const ConfigFile& file) {
  ConfigFile cf;
  cf.source = file.source;
  if (file.has("preset")) {
    const Preset& p = find_preset(file.values.at("preset"));
    cf.source = "preset:" + p.name;
    merge_config_text(cf, p.text, false);
    cf.source = file.source;
  }
  for (const auto& [k, v] : file.values) cf.values[k] = v;

  RunConfig rc;
  for (const auto& [k, v] : cf.values) {
    const bool coef_param = k.rfind("coefficient.", 0) == 0 && k != "coefficient.name";
    if (coef_param) {
      const std::string pname = k.substr(12);
      require(detail::coefficient_param_keys().count(pname) != 0, ErrorCode::ConfigError,
              "unknown coefficient parameter '" + pname + "'");
      rc.coefficient_params[pname] = parse_real(v);
    } else {
      require(detail::known_keys().count(k) != 0, ErrorCode::ConfigError, "unknown key '" + k + "'");
    }
    rc.echo[k] = v;
  }
  auto get = [&](const std::string& key) -> const std::string* {
    auto it = cf.values.find(key);
    return it == cf.values.end() ? nullptr : &it->second;
  };
  if (auto s = get("name")) rc.name = *s;
  else if (auto p = get("preset")) rc.name = *p;
  if (auto s = get("lattice.basis")) rc.lattice = detail::parse_basis(*s);
  if (auto s = get("coefficient.name")) rc.coefficient = *s;
  if (auto s = get("symbol.name")) rc.symbol = *s;
  if (auto s = get("cell.grid_n")) rc.cell_grid = parse_int(*s);
  if (auto s = get("domain.kind")) {
    const std::string k = detail::lower(*s);
    if (k == "interval") rc.domain.kind = DomainKind::Interval;
    else if (k == "square") rc.domain.kind = DomainKind::Square;
    else if (k == "disk") rc.domain.kind = DomainKind::Disk;
    else if (k == "torus") rc.domain.kind = DomainKind::Torus;
    else fail(ErrorCode::ConfigError, "unknown domain.kind '" + *s + "'");
  }
  if (auto s = get("domain.a")) rc.domain.a = parse_real(*s);
  if (auto s = get("domain.b")) rc.domain.b = parse_real(*s);
  if (auto s = get("domain.size")) rc.domain.size = parse_real(*s);
  if (auto s = get("domain.radius")) rc.domain.radius = parse_real(*s);
  if (auto s = get("domain.periods")) rc.domain.periods = parse_real(*s);
  if (auto s = get("bc")) {
    const std::string b = detail::lower(*s);
    if (b == "dirichlet") rc.bc = BoundaryCondition::Dirichlet;
    else if (b == "neumann") rc.bc = BoundaryCondition::Neumann;
    else if (b == "torus") rc.bc = BoundaryCondition::Torus;
    else fail(ErrorCode::ConfigError, "unknown bc '" + *s + "'");
  } else if (rc.domain.kind == DomainKind::Torus) {
    rc.bc = BoundaryCondition::Torus;
  }
  if (auto s = get("regime")) {
    const std::string r = detail::lower(*s);
    if (r == "sector") rc.regime = Regime::Sector;
    else if (r == "below_c_star") rc.regime = Regime::BelowCStar;
    else if (r == "below_c_flat") rc.regime = Regime::BelowCFlat;
    else if (r == "rho_zero") rc.regime = Regime::RhoZero;
    else fail(ErrorCode::ConfigError, "unknown regime '" + *s + "'");
  }
  if (auto s = get("eps_grid"))
    for (const auto& t : detail::split_list(*s)) rc.eps.push_back(parse_real(t));

  const int zeta_forms = (get("zeta.points") ? 1 : 0) + (get("zeta.rays") || get("zeta.moduli") ? 1 : 0) +
                         (get("zeta.shift") ? 1 : 0) + (get("zeta.scale") ? 1 : 0);
  require(zeta_forms <= 1, ErrorCode::ConfigError,
          "give exactly one of zeta.points, zeta.rays + zeta.moduli, zeta.shift, zeta.scale");
  if (auto s = get("zeta.points"))
    for (const auto& t : detail::split_list(*s)) rc.zetas.push_back({ZetaSpec::Mode::Absolute, parse_complex(t)});
  if (get("zeta.rays") || get("zeta.moduli")) {
    require(get("zeta.rays") && get("zeta.moduli"), ErrorCode::ConfigError, "zeta.rays needs zeta.moduli");
    for (const auto& r : detail::split_list(*get("zeta.rays")))
      for (const auto& m : detail::split_list(*get("zeta.moduli")))
        rc.zetas.push_back({ZetaSpec::Mode::Absolute, std::polar(parse_real(m), parse_real(r))});
  }
  if (auto s = get("zeta.shift"))
    for (const auto& t : detail::split_list(*s)) rc.zetas.push_back({ZetaSpec::Mode::ShiftFromRef, parse_complex(t)});
  if (auto s = get("zeta.scale"))
    for (const auto& t : detail::split_list(*s)) rc.zetas.push_back({ZetaSpec::Mode::ScaleOfRef, parse_complex(t)});
  const bool relative = get("zeta.shift") || get("zeta.scale");
  if (relative)
    require(rc.regime == Regime::BelowCStar || rc.regime == Regime::BelowCFlat, ErrorCode::ConfigError,
            "zeta.shift and zeta.scale need a shifted regime");

  if (auto s = get("ensemble.size")) rc.ensemble.size = parse_int(*s);
  if (auto s = get("ensemble.seed")) {
    std::size_t used = 0;
    try {
      rc.ensemble.seed = std::stoull(*s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == s->size() && used > 0, ErrorCode::ConfigError, "invalid ensemble.seed '" + *s + "'");
  }
  if (auto s = get("ensemble.cutoff")) rc.ensemble.cutoff = parse_int(*s);
  if (auto s = get("mesh.ratio")) rc.ratio = parse_real(*s);
  if (auto s = get("smoothing")) {
    const std::string v = detail::lower(*s);
    if (v == "steklov") rc.smoothing = Smoothing::Steklov;
    else if (v == "none") rc.smoothing = Smoothing::None;
    else fail(ErrorCode::ConfigError, "unknown smoothing '" + *s + "'");
  }
  if (auto s = get("interior.delta")) rc.interior_delta = parse_real(*s);
  if (auto s = get("flux.constant")) rc.constant_flux = parse_bool(*s);
  if (auto s = get("halving")) rc.halving = parse_bool(*s);
  if (auto s = get("limits.eps_max")) rc.limits.eps_max = parse_real(*s);
  if (auto s = get("output.dir")) rc.out_dir = *s;
  rc.prefix = get("output.prefix") ? *get("output.prefix") : rc.name;

  require(rc.cell_grid >= 8, ErrorCode::ConfigError, "cell.grid_n must be at least 8");
  require(rc.ensemble.size >= 1 && rc.ensemble.cutoff >= 1, ErrorCode::ConfigError, "invalid ensemble settings");
  require(rc.ratio > 0.0, ErrorCode::ConfigError, "mesh.ratio must be positive");
  require(rc.interior_delta >= 0.0, ErrorCode::ConfigError, "interior.delta must be nonnegative");
  return rc;
}

inline ConfigFile load_config_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::ConfigError, "cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

inline RunConfig load_run_config(const std::string& path) { return resolve_config(load_config_file(path)); }

inline RunConfig preset_config(const std::string& name) {
  ConfigFile cf;
  cf.source = "preset";
  cf.values["preset"] = name;
  return resolve_config(cf);
}

inline CellSolution solve_cell_for(const RunConfig& rc) {
  const Lattice lat = rc.make_lattice();
  const DifferentialSymbol sym = symbol_registry(rc.symbol, lat.dim());
  const PeriodicCoefficient coef = coefficient_registry(rc.coefficient, rc.coefficient_params, lat, sym.m);
  CellSolution cs = solve_cell_problem(coef, sym, lat, rc.cell_grid);
  EllipticityReport er = validate_symbol(sym, 400);
  lambda_diagnostics(cs, er.alpha0, lat);
  return cs;
}

/// Sweep description for a resolved config. Without a cell solution only
/// the config-level invariants are checked (eps grid, zeta set, bc/regime).
inline SweepSpec sweep_spec_for(const RunConfig& rc, std::shared_ptr<const CellSolution> cell, int threads = 1) {
  SweepSpec s;
  s.name = rc.name;
  s.cell = std::move(cell);
  s.domain = rc.domain;
  s.bc = rc.bc;
  s.regime = rc.regime;
  s.eps = rc.eps;
  s.zetas = rc.zetas;
  s.ensemble = rc.ensemble;
  s.ratio = rc.ratio;
  s.smoothing = rc.smoothing;
  s.interior_delta = rc.interior_delta;
  s.constant_flux = rc.constant_flux;
  s.halving_check = rc.halving;
  s.limits = rc.limits;
  s.threads = threads;
  validate_sweep(s, s.cell != nullptr);
  if (rc.regime == Regime::Sector || rc.regime == Regime::RhoZero)
    for (const auto& z : rc.zetas) zeta_factors(z.value, rc.regime);
  return s;
}

}  // namespace homog
