#ifndef SPDELAB_KERNELS_HPP
#define SPDELAB_KERNELS_HPP

#include <string>

#include "spdelab/grid.hpp"

namespace spdelab {

enum class KernelProfile { Indicator, Tent, Bump };

/// Radial, compactly supported kernel J normalized to unit mass on R^d.
///   indicator: c * 1{r <= R}
///   tent:      c * (1 - r/R)_+
///   bump:      c * (1 - r^2/R^2)_+^2
/// The indicator is discontinuous at r = R; it is kept as a test profile.
class Kernel {
public:
  Kernel(KernelProfile profile, int dim, double radius = 1.0);
  static Kernel from_name(const std::string &name, int dim, double radius = 1.0);

  double operator()(double r) const;
  KernelProfile profile() const { return profile_; }
  std::string name() const;
  int dim() const { return dim_; }
  double radius() const { return radius_; }

private:
  KernelProfile profile_;
  int dim_;
  double radius_;
  double scale_;
};

/// Volume of the unit ball in R^d (d = 1, 2).
double unit_ball_volume(int d);

/// K_{p,d} = int over the unit sphere of |sigma . e_d|^p.
double k_pd(double p, int d);

/// Total mass of J by direct quadrature in R^d.
double kernel_mass(const Kernel &J);

/// C_{J,p} from the radial reduction (K_{p,d}/2) int_0^R J(r) r^{p+d-1} dr.
double c_jp(const Kernel &J, double p);
/// C_{J,p} from the defining integral (1/2) int_{R^d} J(z) |z_d|^p dz,
/// evaluated by iterated Cartesian quadrature.
double c_jp_direct(const Kernel &J, double p);

/// J rescaled to width eps on a grid, with the cell-pair stencil of the
/// energy
///   C_{J,p}/(2 p eps^d) sum_i sum_j vol^2 J(|x_i - x_j|/eps) |(u_j - u_i)/eps|^p
/// stored as a DifferenceOperator (one row per unordered pair, row value
/// (u_j - u_i)/eps, group weight C_{J,p} vol J / eps^d).
class RescaledKernel {
public:
  RescaledKernel(const Kernel &base, double eps, double p, const Grid &grid);

  const Kernel &base() const { return base_; }
  double eps() const { return eps_; }
  double p() const { return p_; }
  double c_jp() const { return c_jp_; }
  const Grid &grid() const { return grid_; }
  /// eps is smaller than two grid spacings.
  bool under_resolved() const { return under_resolved_; }
  const DifferenceOperator &pairs() const { return pairs_; }
  /// Sum over pairs of the group weights (kernel mass seen by the grid).
  double total_weight() const { return pairs_.weight.sum(); }

private:
  Kernel base_;
  double eps_;
  double p_;
  double c_jp_;
  Grid grid_;
  bool under_resolved_;
  DifferenceOperator pairs_;
};

/// phi^eps(u) with psi(s) = |s|^p / p.
double nonlocal_energy(const RescaledKernel &rk, const GridFunction &u);
/// Same double sum with psi replaced by its Moreau-Yosida approximation.
double nonlocal_energy(const RescaledKernel &rk, double delta, const GridFunction &u);

/// A^delta(u)_i = C vol / eps^{d+1} sum_j J_ij phi^delta((u_j - u_i)/eps),
/// i.e. minus the L^2 gradient of the regularized energy. delta = 0 uses
/// the raw slope (rejected for p = 1).
GridFunction nonlocal_apply(const RescaledKernel &rk, double delta, const GridFunction &u);

} // namespace spdelab

#endif
