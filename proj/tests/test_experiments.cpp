#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "spdelab/experiments.hpp"

using namespace spdelab;
namespace fs = std::filesystem;

namespace {

const char *kSmall = R"(
; small additive-noise run
[experiment]
kind = trotter_plaplace
seed = 3
n_paths = 12
output = unused

[grid]
dim = 1
cells = 16

[potential]
p = 1.5

[sequence]
values = 1.9, 1.7, 1.6
labels = 1, 2, 4

[scheme]
dt = 2e-3
horizon = 0.04
delta = 1e-2

[mosco]
probes = 6
lambdas = 0.5
)";

std::string slurp(const fs::path &p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string &name) {
  const auto p = fs::temp_directory_path() / ("spdelab_exp_" + name);
  fs::remove_all(p);
  return p;
}

std::string with(std::string text, const std::string &from, const std::string &to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

int run_cli(const std::string &args) {
  const std::string cmd = std::string(SPDELAB_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(kSmall);
  CHECK(cfg.kind == ExperimentKind::TrotterPLaplace);
  CHECK(cfg.seed == 3);
  CHECK(cfg.n_paths == 12);
  CHECK(cfg.grid.cells[0] == 16);
  CHECK(cfg.schedule == std::vector<double>{1.9, 1.7, 1.6});
  CHECK(cfg.scheme.steps == 20);
  CHECK(cfg.mode == SequenceMode::Exponent);
  CHECK(cfg.lambdas == std::vector<double>{0.5});
  CHECK_NOTHROW(validate(cfg));
  CHECK(planned_simulations(cfg) == 4);
  CHECK(planned_work(cfg) == doctest::Approx(4.0 * 16 * 12 * 20));

  CHECK_THROWS_AS(parse_config(with(kSmall, "seed = 3", "sead = 3")), ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kSmall) + "[extra]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config(with(kSmall, "n_paths = 12", "n_paths = 12x")), ConfigError);
  CHECK_THROWS_AS(parse_config(with(kSmall, "n_paths = 12", "n_paths = 12\nn_paths = 13")), ConfigError);
  CHECK_THROWS_AS(parse_config(with(kSmall, "horizon = 0.04", "horizon = 0.041")), ConfigError);
  CHECK_THROWS_AS(parse_config(with(kSmall, "horizon = 0.04", "horizon = 0.04\nsteps = 7")), ConfigError);
  CHECK_THROWS_AS(parse_config("stray = 1\n" + std::string(kSmall)), ConfigError);
  CHECK_THROWS_AS(parse_config(with(kSmall, "trotter_plaplace", "trotter")), ConfigError);

  const auto nl = parse_config(with(kSmall, "trotter_plaplace", "nonlocal_to_local"));
  CHECK(nl.mode == SequenceMode::Width);
}

TEST_CASE("validation before simulation") {
  auto cfg = parse_config(kSmall);
  auto bad = cfg;
  bad.schedule.clear();
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = cfg;
  bad.budget = 100.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  CHECK_THROWS_AS(run_experiment(bad, false), ConfigError);
  bad = cfg;
  bad.schedule = {2.5};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = cfg;
  bad.mode = SequenceMode::Yosida;
  bad.schedule = {0.1};
  CHECK_THROWS_AS(validate(bad), ConfigError); // scheme.delta is set too
  bad = cfg;
  bad.labels = {1.0};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = cfg;
  bad.kind = ExperimentKind::NonlocalToLocal;
  bad.mode = SequenceMode::Width;
  bad.schedule = {0.05};
  CHECK_THROWS_AS(validate(bad), ConfigError); // 0.05 < 2 h = 0.125
  bad.schedule = {0.4};
  bad.kernel = "gaussian";
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = cfg;
  bad.kind = ExperimentKind::SviAudit;
  bad.scheme.delta = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad.p = 2.0;
  CHECK_NOTHROW(validate(bad));
  bad.scheme.stride = 2;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("cell averages and the Jensen diagnostic") {
  // int_0^1 (2 + cos 2 pi y)^{-k}: 1/sqrt(3) for k = 1, 2/3^{3/2} for k = 2.
  const auto a = weight_profile("cosine", 1);
  CHECK(cell_average(a, 1) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(cell_average(a, 2) == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(cell_average([&](double x, double y) { return 1.0 / a(x, y); }, 1) ==
        doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-12));
  CHECK(cell_average([&](double x, double y) { return std::pow(a(x, y), -2.0); }, 1) ==
        doctest::Approx(2.0 / std::pow(3.0, 1.5)).epsilon(1e-12));
  CHECK(cell_average(weight_profile("checkerboard", 1), 1) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(cell_average(weight_profile("checkerboard", 2), 2) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK_THROWS_AS(weight_profile("stripes", 1), ConfigError);
}

TEST_CASE("fnv1a") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("schedule equal to the target gives zero distances") {
  auto cfg = parse_config(kSmall);
  cfg.schedule = {1.5};
  cfg.labels.clear();
  const auto r = run_experiment(cfg, false);
  REQUIRE(r.table.rows.size() == 1);
  CHECK(r.table.rows[0].weak_metric == 0.0);
  CHECK(r.table.rows[0].strong_gap == 0.0);
  CHECK(r.table.rows[0].resolvent_distance == 0.0);
  CHECK(r.table.rows[0].energy_gap == 0.0);
  CHECK(r.files.empty());
}

TEST_CASE("trotter run: ordering, trend and byte-identical outputs") {
  auto cfg = parse_config(kSmall);
  const auto d1 = scratch("a"), d2 = scratch("b");
  cfg.output_dir = d1.string();
  const auto r1 = run_experiment(cfg);
  cfg.output_dir = d2.string();
  const auto r2 = run_experiment(cfg);
  REQUIRE(r1.table.rows.size() == 3);
  CHECK(r1.table.rows[0].index == 1.0);
  CHECK(r1.table.rows[2].index == 4.0);
  const auto w = r1.table.column(&TableRow::weak_metric);
  CHECK(w.back() < w.front());
  const auto d = r1.table.column(&TableRow::resolvent_distance);
  CHECK(d.back() < 0.5 * d.front());
  for (const char *f : {"table.csv", "mosco.csv"})
    CHECK(slurp(d1 / f) == slurp(d2 / f));
  CHECK(slurp(d1 / "table.csv").find("wall") == std::string::npos);
  CHECK(slurp(d1 / "timing.csv").rfind("index,wall_seconds", 0) == 0);
  const auto manifest = slurp(d1 / "manifest.txt");
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a(canonical_config(cfg))));
  CHECK(manifest.find(std::string("config_hash = fnv1a64:") + hash) != std::string::npos);
  CHECK(manifest.find("seed = 3") != std::string::npos);
  CHECK(manifest.find("prox_tol = ") != std::string::npos);
  CHECK(manifest.find("weak_dictionary = ") != std::string::npos);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("vanishing viscosity and Yosida schedules") {
  auto cfg = parse_config(kSmall);
  cfg.kind = ExperimentKind::MoscoTable;
  cfg.p = 1.2;
  cfg.scheme.delta = 0.0;
  cfg.mode = SequenceMode::Yosida;
  cfg.schedule = {0.1, 0.05, 0.025, 0.0125};
  cfg.labels.clear();
  auto r = run_experiment(cfg, false);
  auto d = r.table.column(&TableRow::resolvent_distance);
  for (std::size_t i = 1; i < d.size(); ++i)
    CHECK(d[i] < d[i - 1]);
  CHECK(std::isnan(r.table.rows[0].weak_metric));

  cfg.kind = ExperimentKind::TrotterPLaplace;
  cfg.mode = SequenceMode::Viscosity;
  cfg.p = 1.5;
  cfg.scheme.delta = 1e-2;
  cfg.schedule = {0.4, 0.2, 0.1};
  r = run_experiment(cfg, false);
  const auto w = r.table.column(&TableRow::weak_metric);
  CHECK(w.back() < w.front());
}

TEST_CASE("nonlocal-to-local energy diagnostic") {
  // Local energy of sin(pi x) with p = 2 is pi^2 / 4; the cell-centered
  // Neumann sum is 2 sin^2(pi h / 2) (n / 2 - 1) / h, using
  // sum_{j=1}^{n-1} cos^2(pi j / n) = n / 2 - 1.
  auto cfg = parse_config(with(kSmall, "trotter_plaplace", "nonlocal_to_local"));
  cfg.p = 2.0;
  cfg.grid.cells = {128, 1};
  cfg.scheme.delta = 0.0;
  cfg.schedule = {0.4, 0.2, 0.1};
  cfg.labels.clear();
  cfg.n_paths = 4;
  const auto r = run_experiment(cfg, false);
  const auto g = r.table.column(&TableRow::diagnostic);
  CHECK(g[1] < g[0]);
  CHECK(g[2] < g[1]);
  CHECK(r.table.diagnostic_name == "relative_energy_gap_sine");
  const Grid grid(1.0, 128);
  const auto u = GridFunction::sample(grid, [](double x, double) { return std::sin(std::numbers::pi * x); });
  const double h = 1.0 / 128, s = std::sin(std::numbers::pi * h / 2.0);
  const double discrete = eval(Potential::p_dirichlet(grid, 2.0), u);
  CHECK(discrete == doctest::Approx(2.0 * s * s * (64.0 - 1.0) / h).epsilon(1e-12));
  CHECK(discrete == doctest::Approx(std::numbers::pi * std::numbers::pi / 4.0).epsilon(0.02));
}

TEST_CASE("homogenization runs") {
  auto cfg = parse_config(with(kSmall, "trotter_plaplace", "homogenize_plaplace"));
  cfg.p = 2.0;
  cfg.grid.cells = {64, 1};
  cfg.schedule = {0.25, 0.125, 0.0625};
  cfg.labels.clear();
  const auto r = run_experiment(cfg, false);
  const auto d = r.table.column(&TableRow::resolvent_distance);
  CHECK(d[2] < d[0]);
  CHECK(r.table.rows[2].diagnostic == doctest::Approx(4.0));

  auto fd = parse_config(with(kSmall, "trotter_plaplace", "homogenize_fastdiffusion"));
  fd.m = 0.5;
  fd.grid.cells = {32, 1};
  fd.initial.kind = "sine";
  fd.schedule = {0.25, 0.125};
  fd.labels.clear();
  const auto rf = run_experiment(fd, false);
  CHECK(rf.table.diagnostic_name == "jensen_gap");
  CHECK(rf.table.rows[0].diagnostic == doctest::Approx(2.0 / std::pow(3.0, 1.5) - 0.25).epsilon(1e-10));
  CHECK(rf.table.rows[0].diagnostic > 0.0);
}

TEST_CASE("fast-diffusion Trotter run in H^-1") {
  auto cfg = parse_config(with(kSmall, "trotter_plaplace", "trotter_fastdiffusion"));
  cfg.m = 0.5;
  cfg.initial.kind = "sine";
  cfg.schedule = {0.9, 0.7, 0.6};
  const auto r = run_experiment(cfg, false);
  const auto d = r.table.column(&TableRow::resolvent_distance);
  CHECK(d.back() < d.front());
  const auto w = r.table.column(&TableRow::weak_metric);
  CHECK(w.back() < w.front());
}

TEST_CASE("svi audit run passes for a regularized strong solution") {
  auto cfg = parse_config(with(kSmall, "trotter_plaplace", "svi_audit_run"));
  cfg.schedule.clear();
  cfg.labels.clear();
  cfg.n_paths = 40;
  cfg.noise.kind = "linear";
  const auto dir = scratch("svi");
  cfg.output_dir = dir.string();
  const auto r = run_experiment(cfg);
  CHECK(r.pass);
  CHECK(r.table.rows.size() == 5);
  CHECK(fs::exists(dir / "svi_energy.csv"));
  CHECK(fs::exists(dir / "svi_half_noise.csv"));
  fs::remove_all(dir);
}

TEST_CASE("command line exit codes") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const auto good = dir / "good.ini", bad = dir / "bad.ini";
  std::ofstream(good) << with(kSmall, "output = unused", "output = " + (dir / "out").string());
  std::ofstream(bad) << with(kSmall, "values = 1.9, 1.7, 1.6\nlabels = 1, 2, 4", "values =");
  CHECK(run_cli("version") == 0);
  CHECK(run_cli("list-experiments") == 0);
  CHECK(run_cli("validate " + good.string()) == 0);
  CHECK(run_cli("validate " + bad.string()) == 1);
  CHECK(run_cli("validate " + (dir / "missing.ini").string()) == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("run " + good.string()) == 0);
  CHECK(fs::exists(dir / "out" / "table.csv"));
  // prox_max_iterations = 1 cannot certify a p = 1.5 step.
  const auto starved = dir / "starved.ini";
  std::ofstream(starved) << with(with(kSmall, "output = unused", "output = " + (dir / "s").string()),
                                 "delta = 1e-2", "delta = 1e-2\nprox_max_iterations = 1");
  CHECK(run_cli("run " + starved.string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("shipped configs validate") {
  int n = 0;
  for (const auto &e : fs::directory_iterator(SPDELAB_CONFIG_DIR)) {
    if (e.path().extension() != ".ini")
      continue;
    CAPTURE(e.path().string());
    CHECK_NOTHROW(validate(load_config(e.path().string())));
    ++n;
  }
  CHECK(n >= 7);
}
