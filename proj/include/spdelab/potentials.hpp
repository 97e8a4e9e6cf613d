#ifndef SPDELAB_POTENTIALS_HPP
#define SPDELAB_POTENTIALS_HPP

#include <cstdint>
#include <memory>
#include <string>

#include "spdelab/grid.hpp"
#include "spdelab/kernels.hpp"
#include "spdelab/scalar_yosida.hpp"

namespace spdelab {

enum class PotentialFamily { PDirichlet, FastDiffusion, Nonlocal, GeneralGradient };

const char *to_string(PotentialFamily f);

/// Convex functional on grid functions of the form
///   vol * sum_g c_g * psi(|rows_g u|)  (+ viscosity vol * sum eps/2 |rows_g u|^2)
/// where the rows are Neumann forward differences (gradient families), the
/// identity (fast diffusion) or kernel-weighted pair differences (nonlocal).
/// Immutable; copies share the difference operator.
class Potential {
public:
  /// int a |grad u|^p / p with Neumann zero flux.
  static Potential p_dirichlet(const Grid &grid, double p);
  static Potential p_dirichlet(const Grid &grid, double p, const GridFunction &weight);
  /// int a |u|^{m+1} / (m+1), prox taken in the discrete H^{-1} metric.
  static Potential fast_diffusion(const Grid &grid, double m);
  static Potential fast_diffusion(const Grid &grid, double m, const GridFunction &weight);
  static Potential nonlocal(const RescaledKernel &kernel);
  /// int psi(|grad u|) for one of the radial profile families.
  static Potential general_gradient(const Grid &grid, const RadialProfile &profile);

  /// psi replaced by its Moreau-Yosida approximation psi^delta.
  Potential with_yosida(double delta) const;
  /// Adds eps/2 int |grad u|^2 (local gradient families only).
  Potential with_viscosity(double eps) const;
  /// u -> phi(u - center). Breaks phi(0) = 0 unless center is an energy zero.
  Potential shifted(const GridFunction &center) const;

  PotentialFamily family() const { return family_; }
  const Grid &grid() const { return grid_; }
  /// Geometry of the prox and of the gradient: L2, or Hminus1 for fast diffusion.
  SpaceTag geometry() const { return geometry_; }
  const RadialProfile &profile() const { return profile_; }
  double delta() const { return delta_; }
  bool regularized() const { return delta_ > 0.0; }
  double viscosity() const { return visc_; }
  bool is_shifted() const { return shift_.size() > 0; }
  const Vector &shift() const { return shift_; }
  std::string describe() const;

  const DifferenceOperator &op() const { return *op_; }
  /// Per-group coefficient c_g = weight_g * a(cell_g).
  const Vector &coefficients() const { return coeff_; }

  // Radial integrand after regularization (psi or psi^delta), without viscosity.
  double radial_value(double r) const;
  double radial_slope(double r) const;
  double radial_curvature(double r) const;
  RadialJet radial_jet(double r) const { return profile_.jet(delta_, r); }
  /// Slope of the integrand is globally Lipschitz.
  bool smooth() const { return delta_ > 0.0 || profile_.lipschitz_slope(); }

private:
  Potential(PotentialFamily family, const Grid &grid, RadialProfile profile);

  PotentialFamily family_;
  Grid grid_;
  RadialProfile profile_;
  SpaceTag geometry_ = SpaceTag::L2;
  std::shared_ptr<const DifferenceOperator> op_;
  Vector coeff_;
  double delta_ = 0.0;
  double visc_ = 0.0;
  Vector shift_;
};

struct ProxOptions {
  double tol = 1e-10;
  int max_iterations = 10000;
  /// Random directions in the variational-inequality certificate, in
  /// addition to v = f and v = 0. Zero skips the random panel.
  int probes = 64;
  std::uint64_t probe_seed = 0x70726f6265ULL;
};

struct ProxResult {
  GridFunction minimizer;
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
};

double eval(const Potential &pot, const GridFunction &u);

/// argmin_v 1/2 |v - f|_H^2 + lambda eval(v), H the potential's geometry.
/// Throws NumericalError when the certificate exceeds opts.tol.
ProxResult prox(const Potential &pot, double lambda, const GridFunction &f,
                const ProxOptions &opts = {});

/// Gradient of eval in the potential's geometry; needs a Lipschitz slope
/// (Yosida regularization, or a quadratic/enveloped profile).
GridFunction smooth_gradient(const Potential &pot, const GridFunction &u);
/// smooth_gradient restricted to Yosida-regularized potentials.
GridFunction yosida_gradient(const Potential &pot, const GridFunction &u);

/// Largest violation of (f - z, v - z)_H <= lambda (eval(v) - eval(z)) over
/// v in {f, 0} and `probes` seeded random perturbations of z, each relative
/// to the magnitude of the terms.
double variational_violation(const Potential &pot, double lambda, const GridFunction &f,
                             const GridFunction &z, int probes, std::uint64_t seed);

} // namespace spdelab

#endif
