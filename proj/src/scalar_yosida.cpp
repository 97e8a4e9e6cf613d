#include "spdelab/scalar_yosida.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "spdelab/error.hpp"

namespace spdelab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_exponent(double p) {
  require(p >= 1.0 && p <= 2.0, "power-law exponent must lie in [1, 2]");
}

double pure_value(double p, double r) { return std::pow(r, p) / p; }

double pure_slope(double p, double r) {
  if (r <= 0.0)
    return 0.0;
  if (p == 1.0)
    return 1.0;
  if (p == 2.0)
    return r;
  return std::pow(r, p - 1.0);
}

double pure_curvature(double p, double r) {
  if (p == 2.0)
    return 1.0;
  if (r <= 0.0)
    return kInf;
  if (p == 1.0)
    return 0.0;
  return (p - 1.0) * std::pow(r, p - 2.0);
}

// phi'(x) / (1 + delta phi'(x)), the derivative of the Yosida slope, where
// x is the resolvent image and curv = phi'(x) may be infinite.
double damped_curvature(double curv, double delta) {
  if (std::isinf(curv))
    return 1.0 / delta;
  return curv / (1.0 + delta * curv);
}

} // namespace

PowerLaw::PowerLaw(double p_, int dim_) : p(p_), dim(dim_) {
  check_exponent(p);
  require(dim >= 1, "power-law dimension must be positive");
}

YosidaParams::YosidaParams(double d) : delta(d) {
  require(d > 0.0, "Yosida parameter delta must be positive");
}

double power_resolvent(double p, double delta, double r) {
  if (r <= 0.0)
    return 0.0;
  if (p == 1.0)
    return std::max(r - delta, 0.0);
  if (p == 2.0)
    return r / (1.0 + delta);

  const double q = p - 1.0;
  // The root lies below both r and (r / delta)^(1/q); x -> x + delta x^q - r
  // is concave and increasing, so Newton from the right lands left of the
  // root and then climbs monotonically.
  double lo = 0.0;
  double hi = std::min(r, std::pow(r / delta, 1.0 / q));
  double x = hi;
  for (int it = 0; it < 100; ++it) {
    const double xq = std::pow(x, q);
    const double fx = x + delta * xq - r;
    if (fx == 0.0)
      return x;
    if (fx > 0.0)
      hi = x;
    else
      lo = x;
    const double dfx = 1.0 + delta * q * xq / x;
    double next = x - fx / dfx;
    if (!(next > lo && next < hi))
      next = 0.5 * (lo + hi);
    const double step = std::abs(next - x);
    x = next;
    if (step <= 4e-16 * x || hi - lo <= 4e-16 * hi)
      break;
  }
  return x;
}

RadialProfile RadialProfile::power(double p) {
  check_exponent(p);
  return {Shape::Power, p, 0.0};
}

RadialProfile RadialProfile::viscous_power(double p, double c) {
  check_exponent(p);
  require(c >= 0.0, "viscosity coefficient must be nonnegative");
  return {Shape::ViscousPower, p, c};
}

RadialProfile RadialProfile::enveloped_power(double p, double mu) {
  check_exponent(p);
  require(mu > 0.0, "envelope parameter must be positive");
  return {Shape::EnvelopePower, p, mu};
}

std::string RadialProfile::describe() const {
  std::ostringstream os;
  switch (shape_) {
  case Shape::Power:
    os << "power(p=" << p_ << ")";
    break;
  case Shape::ViscousPower:
    os << "viscous_power(p=" << p_ << ",c=" << param_ << ")";
    break;
  case Shape::EnvelopePower:
    os << "enveloped_power(p=" << p_ << ",mu=" << param_ << ")";
    break;
  }
  return os.str();
}

double RadialProfile::value(double r) const {
  switch (shape_) {
  case Shape::Power:
    return pure_value(p_, r);
  case Shape::ViscousPower:
    return pure_value(p_, r) + 0.5 * param_ * r * r;
  case Shape::EnvelopePower: {
    const double x = power_resolvent(p_, param_, r);
    const double s = x > 0.0 ? pure_slope(p_, x) : r / param_;
    return 0.5 * param_ * s * s + pure_value(p_, x);
  }
  }
  return 0.0;
}

double RadialProfile::slope(double r) const {
  switch (shape_) {
  case Shape::Power:
    return pure_slope(p_, r);
  case Shape::ViscousPower:
    return pure_slope(p_, r) + param_ * r;
  case Shape::EnvelopePower: {
    const double x = power_resolvent(p_, param_, r);
    return x > 0.0 ? pure_slope(p_, x) : r / param_;
  }
  }
  return 0.0;
}

double RadialProfile::curvature(double r) const {
  switch (shape_) {
  case Shape::Power:
    return pure_curvature(p_, r);
  case Shape::ViscousPower:
    return pure_curvature(p_, r) + param_;
  case Shape::EnvelopePower: {
    const double x = power_resolvent(p_, param_, r);
    return damped_curvature(pure_curvature(p_, x), param_);
  }
  }
  return 0.0;
}

double RadialProfile::resolvent(double delta, double r) const {
  switch (shape_) {
  case Shape::Power:
    return power_resolvent(p_, delta, r);
  case Shape::ViscousPower: {
    // (1 + delta c) x + delta x^(p-1) = r
    const double scale = 1.0 + delta * param_;
    return power_resolvent(p_, delta / scale, r / scale);
  }
  case Shape::EnvelopePower: {
    // Resolvent of an envelope: r + delta/(mu+delta) (R_{mu+delta} r - r).
    const double total = param_ + delta;
    return r + delta / total * (power_resolvent(p_, total, r) - r);
  }
  }
  return r;
}

namespace {

// (r - x) / delta where x + delta * slope(x) = r; slope(x) avoids the
// cancellation in r - x whenever x > 0.
double yosida_slope_at(const RadialProfile &prof, double delta, double r, double x) {
  return x > 0.0 ? prof.slope(x) : r / delta;
}

} // namespace

double RadialProfile::value_delta(double delta, double r) const {
  const double x = resolvent(delta, r);
  const double s = yosida_slope_at(*this, delta, r, x);
  return 0.5 * delta * s * s + value(x);
}

double RadialProfile::slope_delta(double delta, double r) const {
  return yosida_slope_at(*this, delta, r, resolvent(delta, r));
}

double RadialProfile::curvature_delta(double delta, double r) const {
  return damped_curvature(curvature(resolvent(delta, r)), delta);
}

RadialJet RadialProfile::jet(double delta, double r) const {
  if (delta <= 0.0)
    return {value(r), slope(r), curvature(r)};
  const double x = resolvent(delta, r);
  const double s = yosida_slope_at(*this, delta, r, x);
  return {0.5 * delta * s * s + value(x), s, damped_curvature(curvature(x), delta)};
}

bool RadialProfile::lipschitz_slope() const {
  return shape_ == Shape::EnvelopePower || p_ == 2.0;
}

bool RadialProfile::corner_at_origin() const {
  return p_ == 1.0 && shape_ != Shape::EnvelopePower;
}

double RadialProfile::slope_sup(double weight) const {
  if (shape_ == Shape::ViscousPower && param_ > 0.0)
    return kInf;
  if (p_ == 1.0)
    return weight;
  return kInf;
}

double RadialProfile::solve_slope(double weight, double visc, double s) const {
  require(weight > 0.0 && visc >= 0.0, "solve_slope needs weight > 0, visc >= 0");
  if (s <= 0.0)
    return 0.0;
  // weight * x^(p-1) + c x = s, rewritten as a power resolvent.
  auto power_branch = [&](double a, double c) -> double {
    if (c > 0.0)
      return power_resolvent(p_, a / c, s / c);
    if (p_ == 1.0) {
      if (s <= a)
        return 0.0;
      throw NumericalError("slope value outside the range of a p = 1 profile", s - a, 0);
    }
    return std::pow(s / a, 1.0 / (p_ - 1.0));
  };
  switch (shape_) {
  case Shape::Power:
    return power_branch(weight, visc);
  case Shape::ViscousPower:
    return power_branch(weight, weight * param_ + visc);
  case Shape::EnvelopePower: {
    // Parametrize x = R + mu phi(R); slope = phi(R).
    const double mu = param_;
    const double a = weight + visc * mu;
    double R = 0.0;
    if (visc > 0.0) {
      R = power_resolvent(p_, a / visc, s / visc);
    } else if (p_ == 1.0) {
      if (s > weight)
        throw NumericalError("slope value outside the range of the envelope", s - weight, 0);
      return mu * s / weight;
    } else {
      R = std::pow(s / a, 1.0 / (p_ - 1.0));
    }
    return R + mu * pure_slope(p_, R);
  }
  }
  return 0.0;
}

namespace {

Point along(const Point &xi, double radius) {
  const double r = xi.norm();
  if (r == 0.0)
    return Point::Zero(xi.size());
  return xi * (radius / r);
}

void check_dim(const PowerLaw &pl, const Point &xi) {
  require(xi.size() == pl.dim, "argument dimension does not match the power law");
}

} // namespace

double psi(const PowerLaw &pl, const Point &xi) {
  check_dim(pl, xi);
  return pure_value(pl.p, xi.norm());
}

double phi_norm(const PowerLaw &pl, const Point &xi) {
  check_dim(pl, xi);
  return pure_slope(pl.p, xi.norm());
}

Point resolvent_radial(const PowerLaw &pl, const YosidaParams &yp, const Point &xi) {
  check_dim(pl, xi);
  return along(xi, power_resolvent(pl.p, yp.delta, xi.norm()));
}

Point phi_delta(const PowerLaw &pl, const YosidaParams &yp, const Point &xi) {
  check_dim(pl, xi);
  return along(xi, RadialProfile::power(pl.p).slope_delta(yp.delta, xi.norm()));
}

double psi_delta(const PowerLaw &pl, const YosidaParams &yp, const Point &xi) {
  check_dim(pl, xi);
  return RadialProfile::power(pl.p).value_delta(yp.delta, xi.norm());
}

} // namespace spdelab
