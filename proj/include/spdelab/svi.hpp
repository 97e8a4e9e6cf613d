#ifndef SPDELAB_SVI_HPP
#define SPDELAB_SVI_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spdelab/spde.hpp"

namespace spdelab {

/// Test process Z_{s+1} = Z_s + G_s dt + sum_k F_{s,k} dW_{s,k}. The drift
/// and diffusion callbacks see (path, step, t_s, Z_s), so realizations are
/// adapted by construction. A process with diffusion must be realized on the
/// noise of the ensemble it tests.
struct TestProcess {
  using Drift = std::function<GridFunction(int path, int step, double t, const GridFunction &z)>;
  using Diffusion = std::function<std::vector<GridFunction>(int path, int step, double t, const GridFunction &z)>;

  std::string name;
  GridFunction z0;
  Drift drift;         // empty: G = 0
  Diffusion diffusion; // empty: F = 0
  /// Seed of the noise the process was built for, if any.
  std::optional<std::uint64_t> noise_seed;

  static TestProcess constant(const GridFunction &z);
  static TestProcess zero(const Grid &grid, SpaceTag tag);
  /// Noise-free Z with G_s = drift(t_s, Z_s).
  static TestProcess deterministic(std::string name, const GridFunction &z0,
                                   std::function<GridFunction(double t, const GridFunction &z)> drift);
  /// Z = X itself: G_s = (X_{s+1} - X_s - B(X_s) dW_s) / dt, F_s = B(X_s).
  /// The drift looks at the step's own increment (the implicit scheme), so
  /// this is only the degenerate self-test.
  static TestProcess solution_decomposition(const TrajectoryEnsemble &ens,
                                            const DiffusionModel &model);
};

struct SVIRow {
  int step = 0;
  double t = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;
  double se = 0.0;
  /// |fine - coarse| trapezoid difference of the mean margin.
  double quad_error = 0.0;
  bool pass = false;
};

struct SVIReport {
  std::string kind;
  std::string test_name;
  double C = 0.0;
  /// Energy check: smallest C making every checkpoint hold.
  double c_min = 0.0;
  int n_paths = 0;
  std::vector<SVIRow> rows;

  bool pass() const;
  double worst_margin_in_se() const;
};

/// Default checkpoints: `count` equispaced snapshot indices ending at the last.
std::vector<int> default_checkpoints(const TrajectoryEnsemble &ens, int count = 8);

/// C = 2 L^2 + 1 with L the noise certificate in the ensemble geometry.
double default_svi_constant(const DiffusionModel &model, SpaceTag geometry);

/// sup_{s<=t} E|X_s|^2 + E int_0^t phi(X) versus C (E|x0|^2 + 1) at the
/// given snapshot indices.
SVIReport check_energy(const TrajectoryEnsemble &ens, const Potential &pot, double C,
                       std::vector<int> checkpoints = {});

/// Variational inequality against Z realized on the ensemble's noise. Needs
/// every step stored (stride 1); checkpoints are step indices.
SVIReport check_variational(const TrajectoryEnsemble &ens, const TestProcess &Z,
                            const Potential &pot, const DiffusionModel &model, double C,
                            std::vector<int> checkpoints = {});

void write_svi_csv(const SVIReport &r, const std::string &file);

struct TestFunctional {
  std::string name;
  GridFunction h;
  std::function<double(double)> gamma;
};

/// 8 low cosine modes times the time weights 1, t/T, (t/T)^2, (t/T)^3.
std::vector<TestFunctional> standard_dictionary(const Grid &grid, SpaceTag tag, double horizon);

struct WeakMetric {
  double value = 0.0;
  std::vector<double> pairings;
  std::vector<double> se;
  /// True when both ensembles share their noise and per-path differences
  /// were used for the standard errors.
  bool paired = false;
};

/// max_j |E int gamma_j(t) (X^a_t - X^b_t, h_j)_H dt| with standard errors.
WeakMetric weak_metric_detail(const TrajectoryEnsemble &a, const TrajectoryEnsemble &b,
                              const std::vector<TestFunctional> &dict);
double weak_convergence_metric(const TrajectoryEnsemble &a, const TrajectoryEnsemble &b,
                               const std::vector<TestFunctional> &dict);

} // namespace spdelab

#endif
