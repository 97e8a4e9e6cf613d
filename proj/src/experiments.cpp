#include "spdelab/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace spdelab {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct KindInfo {
  ExperimentKind kind;
  const char *name;
};

constexpr KindInfo kKinds[] = {
    {ExperimentKind::TrotterPLaplace, "trotter_plaplace"},
    {ExperimentKind::TrotterFastDiffusion, "trotter_fastdiffusion"},
    {ExperimentKind::NonlocalToLocal, "nonlocal_to_local"},
    {ExperimentKind::HomogenizePLaplace, "homogenize_plaplace"},
    {ExperimentKind::HomogenizeFastDiffusion, "homogenize_fastdiffusion"},
    {ExperimentKind::SviAudit, "svi_audit_run"},
    {ExperimentKind::MoscoTable, "mosco_table"},
};

void config_require(bool cond, const std::string &msg) {
  if (!cond)
    throw ConfigError(msg);
}

// ---- parsing helpers ------------------------------------------------------

std::string trim(const std::string &s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos)
    return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string &key, const std::string &raw) {
  const std::string s = trim(raw);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  config_require(ec == std::errc() && ptr == s.data() + s.size() && !s.empty(),
                 "'" + key + "': not a number: '" + raw + "'");
  config_require(std::isfinite(v), "'" + key + "': value must be finite");
  return v;
}

long long parse_int(const std::string &key, const std::string &raw) {
  const std::string s = trim(raw);
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  config_require(ec == std::errc() && ptr == s.data() + s.size() && !s.empty(),
                 "'" + key + "': not an integer: '" + raw + "'");
  return v;
}

std::vector<double> parse_list(const std::string &key, const std::string &raw) {
  std::vector<double> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!trim(item).empty())
      out.push_back(parse_double(key, item));
  return out;
}

const std::map<std::string, std::set<std::string>> &schema() {
  static const std::map<std::string, std::set<std::string>> s{
      {"experiment", {"kind", "name", "seed", "n_paths", "output", "budget"}},
      {"grid", {"dim", "cells", "extent"}},
      {"potential", {"family", "p", "m", "weight", "kernel", "kernel_radius"}},
      {"sequence", {"mode", "values", "labels"}},
      {"noise", {"kind", "modes", "amplitude"}},
      {"initial", {"kind", "amplitude", "offset"}},
      {"scheme",
       {"dt", "steps", "horizon", "delta", "viscosity", "ic_smoothing", "stride", "prox_tol",
        "prox_max_iterations"}},
      {"mosco", {"probes", "lambdas"}},
      {"svi", {"checkpoints", "constant"}},
  };
  return s;
}

SequenceMode mode_from_string(const std::string &s) {
  if (s == "exponent")
    return SequenceMode::Exponent;
  if (s == "viscosity")
    return SequenceMode::Viscosity;
  if (s == "yosida")
    return SequenceMode::Yosida;
  if (s == "width")
    return SequenceMode::Width;
  throw ConfigError("unknown sequence mode '" + s + "' (exponent, viscosity, yosida, width)");
}

bool is_fast_diffusion(const ExperimentConfig &cfg) {
  switch (cfg.kind) {
  case ExperimentKind::TrotterFastDiffusion:
  case ExperimentKind::HomogenizeFastDiffusion:
    return true;
  case ExperimentKind::SviAudit:
  case ExperimentKind::MoscoTable:
    return cfg.family == "fast_diffusion";
  default:
    return false;
  }
}

bool needs_schedule(ExperimentKind k) { return k != ExperimentKind::SviAudit; }

bool simulates(ExperimentKind k) { return k != ExperimentKind::MoscoTable; }

std::string fmt(double v) {
  if (std::isnan(v))
    return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_list(const std::vector<double> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

// ---- experiment building blocks -------------------------------------------

GridFunction initial_datum(const ExperimentConfig &cfg, const Grid &grid, SpaceTag tag) {
  const auto &ic = cfg.initial;
  const double Lx = grid.extent(0), Ly = grid.extent(1);
  const bool two = grid.dim() == 2;
  return GridFunction::sample(
      grid,
      [&](double x, double y) {
        double shape = 1.0;
        if (ic.kind == "cosine")
          shape = std::cos(kPi * x / Lx) * (two ? std::cos(kPi * y / Ly) : 1.0);
        else if (ic.kind == "sine")
          shape = std::sin(kPi * x / Lx) * (two ? std::sin(kPi * y / Ly) : 1.0);
        return ic.offset + ic.amplitude * shape;
      },
      tag);
}

DiffusionModel noise_model(const ExperimentConfig &cfg, const Grid &grid) {
  const auto &n = cfg.noise;
  if (n.kind == "none")
    return DiffusionModel::none();
  std::vector<GridFunction> fields;
  const double Lx = grid.extent(0);
  for (int k = 1; k <= n.modes; ++k) {
    const int freq = n.kind == "additive" ? k : k - 1;
    fields.push_back(GridFunction::sample(
        grid, [&](double x, double) { return n.amplitude * std::cos(freq * kPi * x / Lx); }));
  }
  if (n.kind == "additive")
    return DiffusionModel::additive(fields);
  return DiffusionModel::linear_multiplicative(fields);
}

GridFunction periodic_weight(const ExperimentConfig &cfg, const Grid &grid, double eps) {
  const auto a = weight_profile(cfg.weight, grid.dim());
  return GridFunction::sample(grid, [&](double x, double y) {
    const double u = x / eps - std::floor(x / eps), v = y / eps - std::floor(y / eps);
    return a(u, v);
  });
}

Potential base_potential(const ExperimentConfig &cfg, const Grid &grid, double exponent) {
  return is_fast_diffusion(cfg) ? Potential::fast_diffusion(grid, exponent)
                                : Potential::p_dirichlet(grid, exponent);
}

double target_exponent(const ExperimentConfig &cfg) { return is_fast_diffusion(cfg) ? cfg.m : cfg.p; }

struct Sequence {
  Potential target;
  std::vector<Potential> members;
  std::string diagnostic_name;
  std::vector<double> diagnostic;
};

Sequence trotter_sequence(const ExperimentConfig &cfg) {
  const Grid grid = cfg.grid.make();
  Sequence s{base_potential(cfg, grid, target_exponent(cfg)), {}, "", {}};
  for (double v : cfg.schedule) {
    switch (cfg.mode) {
    case SequenceMode::Exponent:
      s.members.push_back(base_potential(cfg, grid, v));
      break;
    case SequenceMode::Viscosity:
      s.members.push_back(s.target.with_viscosity(v));
      break;
    case SequenceMode::Yosida:
      s.members.push_back(s.target.with_yosida(v));
      break;
    case SequenceMode::Width:
      throw ConfigError("width schedules are for nonlocal and homogenization runs");
    }
    s.diagnostic.push_back(kNaN);
  }
  return s;
}

GridFunction smooth_test_function(const Grid &grid, SpaceTag tag) {
  return GridFunction::sample(
      grid,
      [&](double x, double y) {
        return std::sin(kPi * x / grid.extent(0)) *
               (grid.dim() == 2 ? std::sin(kPi * y / grid.extent(1)) : 1.0);
      },
      tag);
}

Sequence nonlocal_sequence(const ExperimentConfig &cfg) {
  const Grid grid = cfg.grid.make();
  Sequence s{Potential::p_dirichlet(grid, cfg.p), {}, "relative_energy_gap_sine", {}};
  const Kernel J = Kernel::from_name(cfg.kernel, grid.dim(), cfg.kernel_radius);
  const GridFunction u = smooth_test_function(grid, SpaceTag::L2);
  const double local = eval(s.target, u);
  for (double eps : cfg.schedule) {
    RescaledKernel rk(J, eps, cfg.p, grid);
    s.members.push_back(Potential::nonlocal(rk));
    s.diagnostic.push_back(std::abs(nonlocal_energy(rk, u) - local) / local);
  }
  return s;
}

Sequence homogenization_sequence(const ExperimentConfig &cfg) {
  const Grid grid = cfg.grid.make();
  const bool fd = is_fast_diffusion(cfg);
  const auto a = weight_profile(cfg.weight, grid.dim());
  const double mean = cell_average(a, grid.dim());
  const GridFunction flat = GridFunction::constant(grid, mean);
  Sequence s{fd ? Potential::fast_diffusion(grid, cfg.m, flat) : Potential::p_dirichlet(grid, cfg.p, flat),
             {}, "", {}};
  double jensen = kNaN;
  if (fd) {
    const double inv = cell_average([&](double x, double y) { return std::pow(a(x, y), -1.0 / cfg.m); },
                                    grid.dim());
    jensen = inv - std::pow(mean, -1.0 / cfg.m);
    s.diagnostic_name = "jensen_gap";
  } else {
    s.diagnostic_name = "cells_per_period";
  }
  for (double eps : cfg.schedule) {
    const GridFunction w = periodic_weight(cfg, grid, eps);
    s.members.push_back(fd ? Potential::fast_diffusion(grid, cfg.m, w)
                           : Potential::p_dirichlet(grid, cfg.p, w));
    s.diagnostic.push_back(fd ? jensen : eps / grid.max_spacing());
  }
  return s;
}

std::vector<double> row_labels(const ExperimentConfig &cfg) {
  if (!cfg.labels.empty())
    return cfg.labels;
  std::vector<double> out;
  for (std::size_t n = 0; n < cfg.schedule.size(); ++n)
    out.push_back(double(n + 1));
  return out;
}

std::string trend_word(const std::vector<double> &v) {
  if (v.size() < 2 || std::isnan(v.front()) || std::isnan(v.back()))
    return "n/a";
  return v.back() < v.front() ? "decreasing" : "not decreasing";
}

struct Writer {
  const ExperimentConfig &cfg;
  bool enabled;
  std::filesystem::path dir;

  Writer(const ExperimentConfig &c, bool on) : cfg(c), enabled(on), dir(c.output_dir) {
    if (enabled)
      std::filesystem::create_directories(dir);
  }
  std::string path(const std::string &name, ExperimentResult &r) const {
    r.files.push_back(name);
    return (dir / name).string();
  }
  void finish(ExperimentResult &r) const {
    if (!enabled)
      return;
    write_table_csv(r.table, path("table.csv", r));
    write_timing_csv(r.table, path("timing.csv", r));
    const std::string manifest = path("manifest.txt", r);
    write_manifest(cfg, r, manifest);
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentResult run_sequence(const ExperimentConfig &cfg, const Sequence &seq, bool write) {
  validate(cfg);
  const Writer out(cfg, write);
  ExperimentResult res;
  res.table.diagnostic_name = seq.diagnostic_name;
  const Grid grid = cfg.grid.make();
  const SpaceTag tag = seq.target.geometry();
  const auto labels = row_labels(cfg);
  const auto probes = standard_probes(grid, tag, cfg.probes, cfg.seed);

  const auto t_mosco = std::chrono::steady_clock::now();
  const MoscoReport mosco = mosco_trend(seq.members, seq.target, probes, cfg.lambdas, labels);
  const double mosco_seconds = seconds_since(t_mosco);

  const bool sim = simulates(cfg.kind);
  TrajectoryEnsemble target;
  std::vector<TestFunctional> dict;
  GridFunction x0;
  DiffusionModel model = DiffusionModel::none();
  if (sim) {
    x0 = initial_datum(cfg, grid, tag);
    model = noise_model(cfg, grid);
    target = simulate(x0, seq.target, model, cfg.scheme, cfg.n_paths, cfg.seed);
    dict = standard_dictionary(grid, tag, cfg.scheme.horizon());
  }

  for (std::size_t n = 0; n < seq.members.size(); ++n) {
    const auto t0 = std::chrono::steady_clock::now();
    TableRow row;
    row.index = labels[n];
    row.parameter = cfg.schedule[n];
    row.weak_metric = row.weak_se = row.strong_gap = kNaN;
    if (sim) {
      const auto ens = simulate(x0, seq.members[n], model, cfg.scheme, cfg.n_paths, cfg.seed);
      const WeakMetric wm = weak_metric_detail(ens, target, dict);
      row.weak_metric = wm.value;
      std::size_t arg = 0;
      for (std::size_t j = 1; j < wm.pairings.size(); ++j)
        if (std::abs(wm.pairings[j]) > std::abs(wm.pairings[arg]))
          arg = j;
      row.weak_se = wm.se[arg];
      const int last = ens.snapshots() - 1;
      double gap = 0.0;
      for (int p = 0; p < ens.n_paths(); ++p)
        gap += norm_sq(ens.state(p, last) - target.state(p, last));
      row.strong_gap = gap / ens.n_paths();
    }
    row.resolvent_distance = 0.0;
    for (std::size_t j = 0; j < probes.size(); ++j)
      for (std::size_t l = 0; l < cfg.lambdas.size(); ++l)
        row.resolvent_distance = std::max(row.resolvent_distance, mosco.distance(n, j, l));
    row.energy_gap = 0.0;
    for (const auto &pr : probes)
      row.energy_gap =
          std::max(row.energy_gap, std::abs(eval(seq.members[n], pr.f) - eval(seq.target, pr.f)));
    row.diagnostic = seq.diagnostic[n];
    res.table.rows.push_back(row);
    res.table.wall_seconds.push_back(seconds_since(t0) + mosco_seconds / double(seq.members.size()));
  }

  std::ostringstream sum;
  sum << to_string(cfg.kind) << ": " << res.table.rows.size() << " rows; ";
  if (sim) {
    const auto w = res.table.column(&TableRow::weak_metric);
    sum << "weak metric " << fmt(w.front()) << " -> " << fmt(w.back()) << " (" << trend_word(w)
        << "); ";
  }
  const auto d = res.table.column(&TableRow::resolvent_distance);
  sum << "resolvent distance " << fmt(d.front()) << " -> " << fmt(d.back()) << " (" << trend_word(d)
      << "); " << mosco.summary();
  res.summary = sum.str();
  if (write)
    write_mosco_csv(mosco, out.path("mosco.csv", res));
  out.finish(res);
  return res;
}

} // namespace

// ---- names ----------------------------------------------------------------

const char *to_string(ExperimentKind k) {
  for (const auto &info : kKinds)
    if (info.kind == k)
      return info.name;
  return "?";
}

ExperimentKind experiment_kind_from_string(const std::string &s) {
  for (const auto &info : kKinds)
    if (s == info.name)
      return info.kind;
  throw ConfigError("unknown experiment kind '" + s + "'");
}

std::vector<std::string> experiment_kinds() {
  std::vector<std::string> out;
  for (const auto &info : kKinds)
    out.emplace_back(info.name);
  return out;
}

const char *version() { return "0.1.0"; }

const char *to_string(SequenceMode m) {
  switch (m) {
  case SequenceMode::Exponent:
    return "exponent";
  case SequenceMode::Viscosity:
    return "viscosity";
  case SequenceMode::Yosida:
    return "yosida";
  case SequenceMode::Width:
    return "width";
  }
  return "?";
}

Grid GridSpec::make() const {
  if (dim == 1)
    return Grid(extent[0], cells[0]);
  return Grid(extent, cells);
}

SchemeParams ExperimentConfig::default_scheme() {
  SchemeParams sp;
  sp.dt = 1e-3;
  sp.steps = 250;
  return sp;
}

// ---- config ---------------------------------------------------------------

ExperimentConfig parse_config(const std::string &text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error &e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  ExperimentConfig cfg;
  bool mode_given = false;
  std::optional<double> horizon;
  bool steps_given = false;
  for (const auto &[section, body] : tree) {
    const auto it = schema().find(section);
    config_require(!(body.empty() && !body.data().empty()), "key '" + section + "' outside any section");
    config_require(it != schema().end(), "unknown section [" + section + "]");
    for (const auto &[key, node] : body) {
      const std::string full = section + "." + key;
      config_require(it->second.count(key) > 0, "unknown key '" + full + "'");
      const std::string v = trim(node.data());
      auto num = [&] { return parse_double(full, v); };
      auto integer = [&] { return parse_int(full, v); };
      if (full == "experiment.kind")
        cfg.kind = experiment_kind_from_string(v);
      else if (full == "experiment.name")
        cfg.name = v;
      else if (full == "experiment.seed") {
        const long long s = integer();
        config_require(s >= 0, "'experiment.seed' must be nonnegative");
        cfg.seed = std::uint64_t(s);
      } else if (full == "experiment.n_paths")
        cfg.n_paths = int(integer());
      else if (full == "experiment.output")
        cfg.output_dir = v;
      else if (full == "experiment.budget")
        cfg.budget = num();
      else if (full == "grid.dim")
        cfg.grid.dim = int(integer());
      else if (full == "grid.cells") {
        const auto c = parse_list(full, v);
        config_require(c.size() == 1 || c.size() == 2, "'grid.cells' takes one or two values");
        for (std::size_t i = 0; i < c.size(); ++i) {
          config_require(c[i] == std::floor(c[i]), "'grid.cells' must be integers");
          cfg.grid.cells[i] = int(c[i]);
        }
        if (c.size() == 1)
          cfg.grid.cells[1] = cfg.grid.dim == 2 ? cfg.grid.cells[0] : 1;
      } else if (full == "grid.extent") {
        const auto e = parse_list(full, v);
        config_require(e.size() == 1 || e.size() == 2, "'grid.extent' takes one or two values");
        cfg.grid.extent[0] = e[0];
        cfg.grid.extent[1] = e.size() == 2 ? e[1] : e[0];
      } else if (full == "potential.family")
        cfg.family = v;
      else if (full == "potential.p")
        cfg.p = num();
      else if (full == "potential.m")
        cfg.m = num();
      else if (full == "potential.weight")
        cfg.weight = v;
      else if (full == "potential.kernel")
        cfg.kernel = v;
      else if (full == "potential.kernel_radius")
        cfg.kernel_radius = num();
      else if (full == "sequence.mode") {
        cfg.mode = mode_from_string(v);
        mode_given = true;
      } else if (full == "sequence.values")
        cfg.schedule = parse_list(full, v);
      else if (full == "sequence.labels")
        cfg.labels = parse_list(full, v);
      else if (full == "noise.kind")
        cfg.noise.kind = v;
      else if (full == "noise.modes")
        cfg.noise.modes = int(integer());
      else if (full == "noise.amplitude")
        cfg.noise.amplitude = num();
      else if (full == "initial.kind")
        cfg.initial.kind = v;
      else if (full == "initial.amplitude")
        cfg.initial.amplitude = num();
      else if (full == "initial.offset")
        cfg.initial.offset = num();
      else if (full == "scheme.dt")
        cfg.scheme.dt = num();
      else if (full == "scheme.steps") {
        cfg.scheme.steps = int(integer());
        steps_given = true;
      } else if (full == "scheme.horizon")
        horizon = num();
      else if (full == "scheme.delta")
        cfg.scheme.delta = num();
      else if (full == "scheme.viscosity")
        cfg.scheme.eps_visc = num();
      else if (full == "scheme.ic_smoothing")
        cfg.scheme.ic_smoothing = int(integer());
      else if (full == "scheme.stride")
        cfg.scheme.stride = int(integer());
      else if (full == "scheme.prox_tol")
        cfg.scheme.prox.tol = num();
      else if (full == "scheme.prox_max_iterations")
        cfg.scheme.prox.max_iterations = int(integer());
      else if (full == "mosco.probes")
        cfg.probes = int(integer());
      else if (full == "mosco.lambdas")
        cfg.lambdas = parse_list(full, v);
      else if (full == "svi.checkpoints")
        cfg.svi_checkpoints = int(integer());
      else if (full == "svi.constant")
        cfg.svi_constant = num();
    }
  }
  if (horizon) {
    config_require(cfg.scheme.dt > 0.0, "'scheme.dt' must be positive");
    const double steps = *horizon / cfg.scheme.dt;
    config_require(std::abs(steps - std::round(steps)) <= 1e-9 * std::max(1.0, steps),
                   "'scheme.horizon' is not a multiple of 'scheme.dt'");
    config_require(!steps_given || int(std::lround(steps)) == cfg.scheme.steps,
                   "'scheme.horizon' and 'scheme.steps' disagree");
    cfg.scheme.steps = int(std::lround(steps));
  }
  if (!mode_given)
    switch (cfg.kind) {
    case ExperimentKind::NonlocalToLocal:
    case ExperimentKind::HomogenizePLaplace:
    case ExperimentKind::HomogenizeFastDiffusion:
      cfg.mode = SequenceMode::Width;
      break;
    default:
      cfg.mode = SequenceMode::Exponent;
    }
  if (cfg.kind == ExperimentKind::TrotterFastDiffusion || cfg.kind == ExperimentKind::HomogenizeFastDiffusion)
    cfg.family = "fast_diffusion";
  return cfg;
}

ExperimentConfig load_config(const std::string &path) {
  std::ifstream in(path);
  config_require(bool(in), "cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

int planned_simulations(const ExperimentConfig &cfg) {
  if (!simulates(cfg.kind))
    return 0;
  if (cfg.kind == ExperimentKind::SviAudit)
    return 1;
  return int(cfg.schedule.size()) + 1;
}

double planned_work(const ExperimentConfig &cfg) {
  const double cells = double(cfg.grid.cells[0]) * (cfg.grid.dim == 2 ? cfg.grid.cells[1] : 1);
  return planned_simulations(cfg) * cells * double(cfg.n_paths) * double(cfg.scheme.steps);
}

void validate(const ExperimentConfig &cfg) {
  const auto &g = cfg.grid;
  config_require(g.dim == 1 || g.dim == 2, "'grid.dim' must be 1 or 2");
  config_require(g.cells[0] >= 2 && (g.dim == 1 || g.cells[1] >= 2), "grids need at least 2 cells per axis");
  config_require(g.extent[0] > 0.0 && g.extent[1] > 0.0, "'grid.extent' must be positive");

  const bool fd = is_fast_diffusion(cfg);
  config_require(cfg.family == "p_dirichlet" || cfg.family == "fast_diffusion",
                 "'potential.family' must be p_dirichlet or fast_diffusion");
  config_require(cfg.p >= 1.0 && cfg.p <= 2.0, "'potential.p' must lie in [1, 2]");
  config_require(cfg.m >= 0.0 && cfg.m <= 1.0, "'potential.m' must lie in [0, 1]");

  if (needs_schedule(cfg.kind))
    config_require(!cfg.schedule.empty(), "'sequence.values' must list at least one value");
  config_require(cfg.labels.empty() || cfg.labels.size() == cfg.schedule.size(),
                 "'sequence.labels' must match 'sequence.values' in length");

  switch (cfg.kind) {
  case ExperimentKind::TrotterPLaplace:
  case ExperimentKind::TrotterFastDiffusion:
  case ExperimentKind::MoscoTable:
    config_require(cfg.mode != SequenceMode::Width, "width schedules need a nonlocal or homogenization run");
    config_require(!(fd && cfg.mode == SequenceMode::Viscosity),
                   "viscosity schedules apply to gradient families only");
    break;
  case ExperimentKind::NonlocalToLocal:
  case ExperimentKind::HomogenizePLaplace:
  case ExperimentKind::HomogenizeFastDiffusion:
    config_require(cfg.mode == SequenceMode::Width, "this experiment takes a width schedule");
    break;
  case ExperimentKind::SviAudit:
    break;
  }
  for (double v : cfg.schedule) {
    if (cfg.mode == SequenceMode::Exponent) {
      if (fd)
        config_require(v >= 0.0 && v <= 1.0, "fast-diffusion exponents must lie in [0, 1]");
      else
        config_require(v >= 1.0 && v <= 2.0, "p-exponents must lie in [1, 2]");
    } else {
      config_require(v > 0.0, "schedule values must be positive");
    }
  }
  if (cfg.mode == SequenceMode::Yosida)
    config_require(cfg.scheme.delta == 0.0,
                   "a Yosida schedule cannot be combined with 'scheme.delta'");

  if (cfg.kind == ExperimentKind::NonlocalToLocal) {
    try {
      (void)Kernel::from_name(cfg.kernel, g.dim, cfg.kernel_radius);
    } catch (const UsageError &e) {
      throw ConfigError(std::string("'potential.kernel': ") + e.what());
    }
    config_require(cfg.p > 1.0 || cfg.scheme.delta > 0.0, "nonlocal p = 1 runs need 'scheme.delta' > 0");
    const double h = g.make().max_spacing();
    for (double eps : cfg.schedule)
      config_require(eps * cfg.kernel_radius >= 2.0 * h,
                     "kernel width " + fmt(eps) + " is not resolved by the grid (needs >= 2 cells)");
  }
  if (cfg.kind == ExperimentKind::HomogenizePLaplace || cfg.kind == ExperimentKind::HomogenizeFastDiffusion) {
    config_require(cfg.weight == "cosine" || cfg.weight == "checkerboard",
                   "'potential.weight' must be cosine or checkerboard");
    if (cfg.kind == ExperimentKind::HomogenizeFastDiffusion)
      config_require(cfg.m > 0.0, "homogenized fast diffusion needs m > 0");
  }

  config_require(cfg.noise.kind == "additive" || cfg.noise.kind == "linear" || cfg.noise.kind == "none",
                 "'noise.kind' must be additive, linear or none");
  if (cfg.noise.kind != "none")
    config_require(cfg.noise.modes >= 1, "'noise.modes' must be at least 1");
  config_require(cfg.noise.amplitude >= 0.0, "'noise.amplitude' must be nonnegative");
  config_require(cfg.initial.kind == "cosine" || cfg.initial.kind == "sine" || cfg.initial.kind == "constant",
                 "'initial.kind' must be cosine, sine or constant");

  const auto &sp = cfg.scheme;
  config_require(sp.dt > 0.0, "'scheme.dt' must be positive");
  config_require(sp.steps >= 1, "'scheme.steps' must be at least 1");
  config_require(sp.delta >= 0.0, "'scheme.delta' must be nonnegative");
  config_require(sp.eps_visc >= 0.0, "'scheme.viscosity' must be nonnegative");
  config_require(!(fd && sp.eps_visc > 0.0), "viscosity applies to gradient families only");
  config_require(sp.ic_smoothing >= 0, "'scheme.ic_smoothing' must be nonnegative");
  config_require(sp.stride >= 1, "'scheme.stride' must be at least 1");
  config_require(sp.prox.tol > 0.0, "'scheme.prox_tol' must be positive");
  config_require(sp.prox.max_iterations >= 1, "'scheme.prox_max_iterations' must be positive");

  config_require(cfg.n_paths >= 1, "'experiment.n_paths' must be at least 1");
  config_require(cfg.probes >= 3, "'mosco.probes' must be at least 3");
  config_require(!cfg.lambdas.empty(), "'mosco.lambdas' must not be empty");
  for (double l : cfg.lambdas)
    config_require(l > 0.0, "'mosco.lambdas' must be positive");

  if (cfg.kind == ExperimentKind::SviAudit) {
    config_require(cfg.n_paths >= 2, "the audit needs at least 2 paths");
    config_require(sp.stride == 1, "the audit needs every step stored ('scheme.stride' = 1)");
    config_require(cfg.svi_checkpoints >= 1 && cfg.svi_checkpoints <= sp.steps,
                   "'svi.checkpoints' must lie in [1, steps]");
    config_require(cfg.svi_constant >= 0.0, "'svi.constant' must be nonnegative");
    const double e = fd ? cfg.m : cfg.p;
    config_require(sp.delta > 0.0 || e == (fd ? 1.0 : 2.0),
                   "the audit checks a strong solution: set 'scheme.delta' > 0");
  }

  const double work = planned_work(cfg);
  config_require(work <= cfg.budget, "planned work " + fmt(work) + " (cells x paths x steps) exceeds budget " +
                                         fmt(cfg.budget));
}

std::string canonical_config(const ExperimentConfig &cfg) {
  std::ostringstream os;
  os << "kind = " << to_string(cfg.kind) << '\n'
     << "name = " << cfg.name << '\n'
     << "seed = " << cfg.seed << '\n'
     << "n_paths = " << cfg.n_paths << '\n'
     << "budget = " << fmt(cfg.budget) << '\n'
     << "grid.dim = " << cfg.grid.dim << '\n'
     << "grid.cells = " << cfg.grid.cells[0] << ", " << cfg.grid.cells[1] << '\n'
     << "grid.extent = " << fmt(cfg.grid.extent[0]) << ", " << fmt(cfg.grid.extent[1]) << '\n'
     << "potential.family = " << cfg.family << '\n'
     << "potential.p = " << fmt(cfg.p) << '\n'
     << "potential.m = " << fmt(cfg.m) << '\n'
     << "potential.weight = " << cfg.weight << '\n'
     << "potential.kernel = " << cfg.kernel << '\n'
     << "potential.kernel_radius = " << fmt(cfg.kernel_radius) << '\n'
     << "sequence.mode = " << to_string(cfg.mode) << '\n'
     << "sequence.values = " << fmt_list(cfg.schedule) << '\n'
     << "sequence.labels = " << fmt_list(cfg.labels) << '\n'
     << "noise.kind = " << cfg.noise.kind << '\n'
     << "noise.modes = " << cfg.noise.modes << '\n'
     << "noise.amplitude = " << fmt(cfg.noise.amplitude) << '\n'
     << "initial.kind = " << cfg.initial.kind << '\n'
     << "initial.amplitude = " << fmt(cfg.initial.amplitude) << '\n'
     << "initial.offset = " << fmt(cfg.initial.offset) << '\n'
     << "scheme.dt = " << fmt(cfg.scheme.dt) << '\n'
     << "scheme.steps = " << cfg.scheme.steps << '\n'
     << "scheme.delta = " << fmt(cfg.scheme.delta) << '\n'
     << "scheme.viscosity = " << fmt(cfg.scheme.eps_visc) << '\n'
     << "scheme.ic_smoothing = " << cfg.scheme.ic_smoothing << '\n'
     << "scheme.stride = " << cfg.scheme.stride << '\n'
     << "scheme.prox_tol = " << fmt(cfg.scheme.prox.tol) << '\n'
     << "scheme.prox_max_iterations = " << cfg.scheme.prox.max_iterations << '\n'
     << "mosco.probes = " << cfg.probes << '\n'
     << "mosco.lambdas = " << fmt_list(cfg.lambdas) << '\n'
     << "svi.checkpoints = " << cfg.svi_checkpoints << '\n'
     << "svi.constant = " << fmt(cfg.svi_constant) << '\n';
  return os.str();
}

std::uint64_t fnv1a(const std::string &s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---- cell averages --------------------------------------------------------

double cell_average(const std::function<double(double, double)> &a, int dim) {
  using boost::math::quadrature::gauss_kronrod;
  require(dim == 1 || dim == 2, "cell averages are implemented for d = 1, 2");
  auto line = [](const std::function<double(double)> &f) {
    double s = 0.0;
    for (auto [lo, hi] : {std::pair{0.0, 0.5}, std::pair{0.5, 1.0}})
      s += gauss_kronrod<double, 31>::integrate(f, lo, hi, 10, 1e-13);
    return s;
  };
  if (dim == 1)
    return line([&](double x) { return a(x, 0.0); });
  return line([&](double y) { return line([&](double x) { return a(x, y); }); });
}

std::function<double(double, double)> weight_profile(const std::string &name, int dim) {
  if (name == "cosine")
    return [](double x, double) { return 2.0 + std::cos(2.0 * kPi * x); };
  if (name == "checkerboard")
    return [dim](double x, double y) {
      const int cx = x < 0.5 ? 0 : 1, cy = dim == 2 && y >= 0.5 ? 1 : 0;
      return (cx + cy) % 2 ? 3.0 : 1.0;
    };
  throw ConfigError("unknown weight profile '" + name + "'");
}

std::vector<double> ConvergenceTable::column(double TableRow::*field) const {
  std::vector<double> out;
  for (const auto &r : rows)
    out.push_back(r.*field);
  return out;
}

// ---- runners --------------------------------------------------------------

ExperimentResult run_trotter_plaplace(const ExperimentConfig &cfg, bool write) {
  require(cfg.kind == ExperimentKind::TrotterPLaplace, "config is not a trotter_plaplace experiment");
  validate(cfg);
  return run_sequence(cfg, trotter_sequence(cfg), write);
}

ExperimentResult run_trotter_fastdiffusion(const ExperimentConfig &cfg, bool write) {
  require(cfg.kind == ExperimentKind::TrotterFastDiffusion, "config is not a trotter_fastdiffusion experiment");
  validate(cfg);
  return run_sequence(cfg, trotter_sequence(cfg), write);
}

ExperimentResult run_nonlocal_to_local(const ExperimentConfig &cfg, bool write) {
  require(cfg.kind == ExperimentKind::NonlocalToLocal, "config is not a nonlocal_to_local experiment");
  validate(cfg);
  return run_sequence(cfg, nonlocal_sequence(cfg), write);
}

ExperimentResult run_homogenize_plaplace(const ExperimentConfig &cfg, bool write) {
  require(cfg.kind == ExperimentKind::HomogenizePLaplace, "config is not a homogenize_plaplace experiment");
  validate(cfg);
  return run_sequence(cfg, homogenization_sequence(cfg), write);
}

ExperimentResult run_homogenize_fastdiffusion(const ExperimentConfig &cfg, bool write) {
  require(cfg.kind == ExperimentKind::HomogenizeFastDiffusion,
          "config is not a homogenize_fastdiffusion experiment");
  validate(cfg);
  return run_sequence(cfg, homogenization_sequence(cfg), write);
}

ExperimentResult run_mosco_table(const ExperimentConfig &cfg, bool write) {
  require(cfg.kind == ExperimentKind::MoscoTable, "config is not a mosco_table experiment");
  validate(cfg);
  return run_sequence(cfg, trotter_sequence(cfg), write);
}

ExperimentResult run_svi_audit(const ExperimentConfig &cfg, bool write) {
  require(cfg.kind == ExperimentKind::SviAudit, "config is not a svi_audit_run experiment");
  validate(cfg);
  const Writer out(cfg, write);
  const Grid grid = cfg.grid.make();
  const Potential pot = base_potential(cfg, grid, target_exponent(cfg));
  const SpaceTag tag = pot.geometry();
  const GridFunction x0 = initial_datum(cfg, grid, tag);
  const DiffusionModel model = noise_model(cfg, grid);
  const Potential stepped = scheme_potential(pot, cfg.scheme);
  const double C = cfg.svi_constant > 0.0 ? cfg.svi_constant : default_svi_constant(model, tag);

  const auto t0 = std::chrono::steady_clock::now();
  const auto ens = simulate(x0, pot, model, cfg.scheme, cfg.n_paths, cfg.seed);
  const double sim_seconds = seconds_since(t0);

  std::vector<int> checkpoints;
  for (int c = 1; c <= cfg.svi_checkpoints; ++c)
    checkpoints.push_back(int(std::lround(double(c) * cfg.scheme.steps / cfg.svi_checkpoints)));
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());

  std::vector<TestProcess> family;
  family.push_back(TestProcess::zero(grid, tag));
  family.push_back(TestProcess::constant(
      GridFunction::sample(grid, [&](double x, double) { return 0.5 * std::cos(2.0 * kPi * x / grid.extent(0)); },
                           tag)));
  family.push_back(TestProcess::deterministic(
      "noise_free_flow", x0, [stepped](double, const GridFunction &z) { return -1.0 * smooth_gradient(stepped, z); }));
  if (model.modes() > 0) {
    TestProcess scaled;
    scaled.name = "half_noise";
    scaled.z0 = GridFunction(grid, tag);
    scaled.noise_seed = cfg.seed;
    scaled.diffusion = [model](int, int, double, const GridFunction &z) {
      std::vector<GridFunction> f;
      for (int k = 0; k < model.modes(); ++k)
        f.push_back(0.5 * model.mode_response(z, k));
      return f;
    };
    family.push_back(scaled);
  }

  ExperimentResult res;
  res.table.diagnostic_name = "worst_margin_in_se";
  std::ostringstream sum;
  const auto t_energy = std::chrono::steady_clock::now();
  const SVIReport energy = check_energy(ens, stepped, C);
  TableRow er;
  er.index = 0;
  er.parameter = C;
  er.weak_metric = er.weak_se = er.resolvent_distance = er.strong_gap = kNaN;
  er.energy_gap = energy.c_min;
  er.diagnostic = energy.worst_margin_in_se();
  res.table.rows.push_back(er);
  res.table.wall_seconds.push_back(sim_seconds + seconds_since(t_energy));
  res.pass = energy.pass();
  sum << "svi_audit_run: energy " << (energy.pass() ? "pass" : "fail") << " (c_min " << fmt(energy.c_min)
      << ", C " << fmt(C) << ")";
  if (write)
    write_svi_csv(energy, out.path("svi_energy.csv", res));

  for (std::size_t i = 0; i < family.size(); ++i) {
    const auto t1 = std::chrono::steady_clock::now();
    const SVIReport r = check_variational(ens, family[i], stepped, model, C, checkpoints);
    TableRow row;
    row.index = double(i + 1);
    row.parameter = C;
    row.weak_metric = row.weak_se = row.resolvent_distance = row.strong_gap = row.energy_gap = kNaN;
    row.diagnostic = r.worst_margin_in_se();
    res.table.rows.push_back(row);
    res.table.wall_seconds.push_back(seconds_since(t1));
    res.pass = res.pass && r.pass();
    sum << "; " << family[i].name << ' ' << (r.pass() ? "pass" : "fail");
    if (write)
      write_svi_csv(r, out.path("svi_" + family[i].name + ".csv", res));
  }
  res.summary = sum.str();
  out.finish(res);
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig &cfg, bool write) {
  switch (cfg.kind) {
  case ExperimentKind::TrotterPLaplace:
    return run_trotter_plaplace(cfg, write);
  case ExperimentKind::TrotterFastDiffusion:
    return run_trotter_fastdiffusion(cfg, write);
  case ExperimentKind::NonlocalToLocal:
    return run_nonlocal_to_local(cfg, write);
  case ExperimentKind::HomogenizePLaplace:
    return run_homogenize_plaplace(cfg, write);
  case ExperimentKind::HomogenizeFastDiffusion:
    return run_homogenize_fastdiffusion(cfg, write);
  case ExperimentKind::SviAudit:
    return run_svi_audit(cfg, write);
  case ExperimentKind::MoscoTable:
    return run_mosco_table(cfg, write);
  }
  throw UsageError("unknown experiment kind");
}

// ---- output ---------------------------------------------------------------

void write_table_csv(const ConvergenceTable &t, const std::string &file) {
  std::ofstream out(file);
  if (!out)
    throw std::runtime_error("cannot write " + file);
  out << "index,parameter,weak_metric,weak_se,resolvent_distance,energy_gap,strong_gap,"
      << (t.diagnostic_name.empty() ? "diagnostic" : t.diagnostic_name) << '\n';
  for (const auto &r : t.rows)
    out << fmt(r.index) << ',' << fmt(r.parameter) << ',' << fmt(r.weak_metric) << ',' << fmt(r.weak_se) << ','
        << fmt(r.resolvent_distance) << ',' << fmt(r.energy_gap) << ',' << fmt(r.strong_gap) << ','
        << fmt(r.diagnostic) << '\n';
  if (!out)
    throw std::runtime_error("write failed for " + file);
}

void write_timing_csv(const ConvergenceTable &t, const std::string &file) {
  std::ofstream out(file);
  if (!out)
    throw std::runtime_error("cannot write " + file);
  out << "index,wall_seconds\n";
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    out << fmt(t.rows[i].index) << ',' << (i < t.wall_seconds.size() ? fmt(t.wall_seconds[i]) : "") << '\n';
}

void write_manifest(const ExperimentConfig &cfg, const ExperimentResult &r, const std::string &file) {
  std::ofstream out(file);
  if (!out)
    throw std::runtime_error("cannot write " + file);
  const std::string canon = canonical_config(cfg);
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a(canon)));
  out << "version = " << version() << '\n'
      << "config_hash = fnv1a64:" << hash << '\n'
      << "seed = " << cfg.seed << '\n'
      << "prox_tol = " << fmt(cfg.scheme.prox.tol) << '\n'
      << "prox_max_iterations = " << cfg.scheme.prox.max_iterations << '\n'
      << "condition_n_tol = 1e-08\n"
      << "trend_halving_slack = 0.1\n"
      << "planned_work = " << fmt(planned_work(cfg)) << '\n'
      << "weak_dictionary = 8 cosine modes x time weights {1, t/T, (t/T)^2, (t/T)^3}\n"
      << "table_columns = index, parameter, weak_metric, weak_se, resolvent_distance, energy_gap, "
         "strong_gap, "
      << (r.table.diagnostic_name.empty() ? "diagnostic" : r.table.diagnostic_name) << '\n'
      << "summary = " << r.summary << '\n';
  std::string files;
  for (const auto &f : r.files)
    if (f != "manifest.txt")
      files += (files.empty() ? "" : ", ") + f;
  out << "outputs = " << files << '\n';
  std::istringstream canon_in(canon);
  std::string line;
  while (std::getline(canon_in, line))
    out << "config." << line << '\n';
  if (!out)
    throw std::runtime_error("write failed for " + file);
}

} // namespace spdelab
