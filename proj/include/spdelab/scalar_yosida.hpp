#ifndef SPDELAB_SCALAR_YOSIDA_HPP
#define SPDELAB_SCALAR_YOSIDA_HPP

#include <string>

#include <Eigen/Dense>

namespace spdelab {

/// psi(xi) = |xi|^p / p on R^dim, p in [1, 2].
struct PowerLaw {
  double p = 2.0;
  int dim = 1;

  PowerLaw() = default;
  PowerLaw(double p_, int dim_ = 1);
};

struct YosidaParams {
  double delta = 1.0;

  YosidaParams() = default;
  explicit YosidaParams(double d);
};

/// Radial convex profile psi(|xi|) with psi(0) = 0. Three shapes are
/// supported: pure power r^p/p, power plus viscosity r^p/p + c r^2/2, and
/// the Moreau envelope (parameter mu) of a pure power.
///
/// All maps act on the radius r = |xi| >= 0; the slope is the minimal
/// section of the subdifferential (slope(0) = 0 even for p = 1).
struct RadialJet {
  double value = 0.0;
  double slope = 0.0;
  double curvature = 0.0;
};

class RadialProfile {
public:
  enum class Shape { Power, ViscousPower, EnvelopePower };

  static RadialProfile power(double p);
  static RadialProfile viscous_power(double p, double c);
  static RadialProfile enveloped_power(double p, double mu);

  Shape shape() const { return shape_; }
  double exponent() const { return p_; }
  double parameter() const { return param_; }
  std::string describe() const;

  double value(double r) const;
  double slope(double r) const;
  /// d slope / dr; +infinity where the slope is singular (r = 0, p < 2).
  double curvature(double r) const;
  /// Radial resolvent: the unique x >= 0 with x + delta * slope(x) = r.
  double resolvent(double delta, double r) const;

  // Moreau-Yosida regularized versions psi^delta, phi^delta.
  double value_delta(double delta, double r) const;
  double slope_delta(double delta, double r) const;
  double curvature_delta(double delta, double r) const;
  /// Value, slope and curvature together, sharing one resolvent solve;
  /// delta = 0 gives the unregularized profile.
  RadialJet jet(double delta, double r) const;

  /// True when the slope is globally Lipschitz (p = 2 or an envelope).
  bool lipschitz_slope() const;
  /// True when slope(0+) > 0, i.e. the p = 1 corner at the origin.
  bool corner_at_origin() const;

  /// Smallest r >= 0 with weight * slope(r) + visc * r = s, s >= 0.
  /// Throws NumericalError if s lies beyond the range of the slope.
  double solve_slope(double weight, double visc, double s) const;
  /// Upper bound of weight * slope(r) as r -> infinity when visc = 0.
  double slope_sup(double weight) const;

private:
  RadialProfile(Shape s, double p, double param) : shape_(s), p_(p), param_(param) {}

  Shape shape_;
  double p_;
  double param_;
};

/// Root of x + delta * x^(p-1) = r on [0, r] (p in [1, 2]), p = 1 and p = 2
/// in closed form, otherwise bracketed Newton with bisection fallback.
double power_resolvent(double p, double delta, double r);

using Point = Eigen::VectorXd;

double psi(const PowerLaw &pl, const Point &xi);
/// |phi(xi)| with the minimal-section convention |phi(0)| = 0.
double phi_norm(const PowerLaw &pl, const Point &xi);
Point resolvent_radial(const PowerLaw &pl, const YosidaParams &yp, const Point &xi);
Point phi_delta(const PowerLaw &pl, const YosidaParams &yp, const Point &xi);
double psi_delta(const PowerLaw &pl, const YosidaParams &yp, const Point &xi);

} // namespace spdelab

#endif
