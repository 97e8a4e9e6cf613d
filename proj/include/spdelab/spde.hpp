#ifndef SPDELAB_SPDE_HPP
#define SPDELAB_SPDE_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "spdelab/grid.hpp"
#include "spdelab/potentials.hpp"

namespace spdelab {

/// Noise coefficient B(u) acting on K independent Brownian modes.
class DiffusionModel {
public:
  enum class Kind { Additive, LinearMultiplicative, Nemytskii };

  /// B(u) dW = sum_k g_k dW_k.
  static DiffusionModel additive(std::vector<GridFunction> g);
  /// B(u) dW = sum_k f_k u dW_k (pointwise product).
  static DiffusionModel linear_multiplicative(std::vector<GridFunction> f);
  /// B(u) dW = sum_k b(u) e_k dW_k with b scalar and 1-Lipschitz.
  static DiffusionModel nemytskii(std::function<double(double)> b, std::vector<GridFunction> e,
                                  std::string name = "b");
  /// No noise (K = 0).
  static DiffusionModel none();

  Kind kind() const { return kind_; }
  int modes() const { return int(fields_.size()); }
  const std::vector<GridFunction> &fields() const { return fields_; }
  std::string describe() const;

  /// Response of mode k to the state u, tagged like u.
  GridFunction mode_response(const GridFunction &u, int k) const;
  /// B(u) dW for one vector of K increments.
  GridFunction apply(const GridFunction &u, const Vector &dW) const;
  /// sum_k |mode_response(u, k)|_H^2 in the geometry of u.
  double hs_norm_sq(const GridFunction &u) const;
  /// L with |B(u) - B(v)|_HS <= L |u - v|_H in the given geometry.
  /// Nemytskii noise is only certified in L2.
  double lipschitz(SpaceTag geometry) const;
  /// C with |B(u)|_HS^2 <= C (1 + |u|_H^2).
  double growth_constant(SpaceTag geometry) const;

private:
  Kind kind_ = Kind::Additive;
  std::vector<GridFunction> fields_;
  std::function<double(double)> b_;
  std::string b_name_;
};

/// B(u) dW, the free-function spelling.
inline GridFunction apply_B(const DiffusionModel &m, const GridFunction &u, const Vector &dW) {
  return m.apply(u, dW);
}
inline double hs_norm_sq(const DiffusionModel &m, const GridFunction &u) { return m.hs_norm_sq(u); }

/// Brownian increments for one path, keyed by (seed, path, step, mode).
struct NoisePath {
  std::uint64_t seed = 0;
  std::uint64_t path = 0;
  int modes = 0;
  double dt = 0.0;

  /// K increments with variance dt for the given step.
  Vector increments(int step) const;
};

enum class DriftScheme { Proximal, ExplicitYosida };

struct SchemeParams {
  double dt = 1e-3;
  int steps = 0;
  /// Yosida delta applied to the potential; 0 uses the potential as given.
  double delta = 0.0;
  double eps_visc = 0.0;
  /// Implicit heat steps of size h^2 applied to the initial datum.
  int ic_smoothing = 0;
  DriftScheme drift = DriftScheme::Proximal;
  /// Store every stride-th state (the last state is always kept).
  int stride = 1;
  /// Per-step prox options; the certificate panel is trimmed to 8 directions.
  ProxOptions prox{.probes = 8};

  double horizon() const { return dt * steps; }
};

/// Potential actually stepped: pot with Yosida(delta) and viscosity applied.
Potential scheme_potential(const Potential &pot, const SchemeParams &sp);

/// Lipschitz constant (in the potential's geometry) of the regularized
/// drift; infinite when the slope is not Lipschitz.
double drift_lipschitz(const Potential &pot);

/// Heat-semigroup smoothing used for ic_smoothing.
GridFunction smooth_initial(const GridFunction &x0, int steps);

/// One step X+ = prox_dt(X + B(X) dW) (or the explicit Yosida drift).
/// pot is used as given; see scheme_potential.
GridFunction step(const GridFunction &state, const Potential &pot, const DiffusionModel &model,
                  const SchemeParams &sp, const Vector &dW);

/// Monte-Carlo ensemble. Snapshot s of every path is the state at step
/// snapshot_steps[s]; states are columns of a per-path matrix.
struct TrajectoryEnsemble {
  Grid grid;
  SpaceTag tag = SpaceTag::L2;
  std::vector<Eigen::MatrixXd> paths;
  std::vector<NoisePath> noise;
  std::vector<int> snapshot_steps;
  SchemeParams scheme;
  std::string potential_id;
  std::string diffusion_id;
  /// dt times drift_lipschitz of the stepped potential.
  double dt_lipschitz = 0.0;

  int n_paths() const { return int(paths.size()); }
  int snapshots() const { return int(snapshot_steps.size()); }
  double time(int snapshot) const { return scheme.dt * snapshot_steps[std::size_t(snapshot)]; }
  GridFunction state(int path, int snapshot) const;
};

using InitialSampler = std::function<GridFunction(int path)>;

TrajectoryEnsemble simulate(const GridFunction &x0, const Potential &pot,
                            const DiffusionModel &model, const SchemeParams &sp, int n_paths,
                            std::uint64_t seed);
TrajectoryEnsemble simulate(const InitialSampler &x0, const Potential &pot,
                            const DiffusionModel &model, const SchemeParams &sp, int n_paths,
                            std::uint64_t seed);

/// Two ensembles driven by the same noise paths.
std::pair<TrajectoryEnsemble, TrajectoryEnsemble>
simulate_coupled(const GridFunction &x0, const GridFunction &y0, const Potential &pot_x,
                 const Potential &pot_y, const DiffusionModel &model, const SchemeParams &sp,
                 int n_paths, std::uint64_t seed);

/// CSV columns path,step,cell_index,value.
void write_trajectory_csv(const TrajectoryEnsemble &ens, const std::string &file);
/// Key = value listing of the scheme parameters and seeds.
void write_run_manifest(const TrajectoryEnsemble &ens, const std::string &file);

} // namespace spdelab

#endif
