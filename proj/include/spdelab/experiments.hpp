#ifndef SPDELAB_EXPERIMENTS_HPP
#define SPDELAB_EXPERIMENTS_HPP

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spdelab/error.hpp"
#include "spdelab/mosco.hpp"
#include "spdelab/spde.hpp"
#include "spdelab/svi.hpp"

namespace spdelab {

enum class ExperimentKind {
  TrotterPLaplace,
  TrotterFastDiffusion,
  NonlocalToLocal,
  HomogenizePLaplace,
  HomogenizeFastDiffusion,
  SviAudit,
  MoscoTable,
};

const char *to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(const std::string &s);
std::vector<std::string> experiment_kinds();
const char *version();

/// Bad or inconsistent configuration.
class ConfigError : public UsageError {
public:
  using UsageError::UsageError;
};

/// How the schedule values enter the sequence potentials.
///   exponent:  p_n (or m_n) replaces the target exponent
///   viscosity: target + eps_n/2 |grad u|^2
///   yosida:    target regularized with delta_n
///   width:     eps_n is a kernel width or a period
enum class SequenceMode { Exponent, Viscosity, Yosida, Width };
const char *to_string(SequenceMode m);

struct GridSpec {
  int dim = 1;
  std::array<int, 2> cells{64, 1};
  std::array<double, 2> extent{1.0, 1.0};

  Grid make() const;
};

struct NoiseSpec {
  /// additive | linear | none
  std::string kind = "additive";
  int modes = 2;
  double amplitude = 0.3;
};

struct InitialSpec {
  /// cosine | sine | constant
  std::string kind = "cosine";
  double amplitude = 1.0;
  double offset = 0.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::TrotterPLaplace;
  std::string name = "experiment";
  GridSpec grid;
  /// Target exponent of p-families.
  double p = 2.0;
  /// Target exponent of fast diffusion.
  double m = 0.5;
  /// Family probed by mosco_table: p_dirichlet | fast_diffusion.
  std::string family = "p_dirichlet";
  SequenceMode mode = SequenceMode::Exponent;
  std::vector<double> schedule;
  /// Row labels n; defaults to 1, 2, ...
  std::vector<double> labels;
  std::string kernel = "bump";
  double kernel_radius = 1.0;
  /// cosine: a(y) = 2 + cos(2 pi y_1); checkerboard: a in {1, 3}.
  std::string weight = "cosine";
  NoiseSpec noise;
  InitialSpec initial;
  SchemeParams scheme = default_scheme();
  int n_paths = 200;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int probes = 16;
  std::vector<double> lambdas{0.1, 1.0};
  /// Largest allowed cells x paths x steps summed over all simulations.
  double budget = 2e9;
  int svi_checkpoints = 8;
  /// 0 selects 2 L^2 + 1.
  double svi_constant = 0.0;

  static SchemeParams default_scheme();
};

/// Parses the sectioned key = value format. Unknown sections or keys,
/// malformed numbers and duplicate keys are ConfigErrors.
ExperimentConfig parse_config(const std::string &text);
ExperimentConfig load_config(const std::string &path);

/// Checks every parameter against the preconditions of the modules it feeds
/// and the work budget. Throws ConfigError.
void validate(const ExperimentConfig &cfg);

/// Number of simulations the experiment runs, and their cells x paths x steps.
int planned_simulations(const ExperimentConfig &cfg);
double planned_work(const ExperimentConfig &cfg);

/// Normalized key = value dump; the config hash is FNV-1a of this text.
std::string canonical_config(const ExperimentConfig &cfg);
std::uint64_t fnv1a(const std::string &s);

/// Cell average of a over [0, 1]^dim by piecewise Gauss-Kronrod quadrature
/// split at 1/2.
double cell_average(const std::function<double(double, double)> &a, int dim);
/// Periodic weight profile on the unit cell.
std::function<double(double, double)> weight_profile(const std::string &name, int dim);

struct TableRow {
  double index = 0.0;
  double parameter = 0.0;
  double weak_metric = 0.0;
  double weak_se = 0.0;
  double resolvent_distance = 0.0;
  double energy_gap = 0.0;
  /// Observational: E |X^n_T - X_T|^2 under common noise.
  double strong_gap = 0.0;
  double diagnostic = 0.0;
};

/// Rows in schedule order. Non-applicable cells hold NaN and are written
/// empty.
struct ConvergenceTable {
  std::string diagnostic_name;
  std::vector<TableRow> rows;
  /// Seconds per row; written to timing.csv, never to table.csv.
  std::vector<double> wall_seconds;

  std::vector<double> column(double TableRow::*field) const;
};

struct ExperimentResult {
  ConvergenceTable table;
  std::string summary;
  /// Written files, relative to the output directory.
  std::vector<std::string> files;
  /// False when an audit found a violated inequality.
  bool pass = true;
};

/// Runs the experiment. With write = false nothing is written to disk.
ExperimentResult run_experiment(const ExperimentConfig &cfg, bool write = true);

ExperimentResult run_trotter_plaplace(const ExperimentConfig &cfg, bool write = true);
ExperimentResult run_trotter_fastdiffusion(const ExperimentConfig &cfg, bool write = true);
ExperimentResult run_nonlocal_to_local(const ExperimentConfig &cfg, bool write = true);
ExperimentResult run_homogenize_plaplace(const ExperimentConfig &cfg, bool write = true);
ExperimentResult run_homogenize_fastdiffusion(const ExperimentConfig &cfg, bool write = true);
ExperimentResult run_svi_audit(const ExperimentConfig &cfg, bool write = true);
ExperimentResult run_mosco_table(const ExperimentConfig &cfg, bool write = true);

void write_table_csv(const ConvergenceTable &t, const std::string &file);
void write_timing_csv(const ConvergenceTable &t, const std::string &file);
void write_manifest(const ExperimentConfig &cfg, const ExperimentResult &r, const std::string &file);

} // namespace spdelab

#endif
