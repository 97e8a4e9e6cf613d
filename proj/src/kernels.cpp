#include "spdelab/kernels.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "spdelab/error.hpp"
#include "spdelab/scalar_yosida.hpp"

namespace spdelab {

namespace {

using boost::math::quadrature::gauss_kronrod;
constexpr double kPi = std::numbers::pi;

template <class F> double integrate(F f, double a, double b, const char *what) {
  double err = 0.0, l1 = 0.0;
  // A single panel first: on short smooth pieces the adaptive recursion
  // only accumulates roundoff in its error estimate.
  double val = gauss_kronrod<double, 31>::integrate(f, a, b, 0, 0.0, &err, &l1);
  if (err <= 1e-12 * l1)
    return val;
  val = gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-11, &err, &l1);
  // Absolute floor: lines grazing the support edge carry values near zero
  // and lose relative accuracy to cancellation in R - |z|.
  if (!(err <= 1e-9 * l1 + 1e-10))
    throw NumericalError(std::string("quadrature did not converge: ") + what, err, 15);
  return val;
}

// Iterated integral of g(|z|) * h(z_2) over the disk of radius R, with the
// outer variable z_2 = R sin(theta) to remove the square-root endpoints.
template <class G, class H> double disk_integral(G g, H h, double R) {
  auto outer = [&](double theta) {
    const double z2 = R * std::sin(theta);
    const double w = R * std::cos(theta);
    // z1 = |z2| sinh(t) smooths the radius |z| = |z2| cosh(t) near z1 = 0.
    // Clamp: rounding can step past the support edge at z1 = w.
    const double a = std::abs(z2);
    double line;
    if (a == 0.0) {
      line = 2.0 * integrate([&](double z1) { return g(std::min(z1, R)); }, 0.0, w, "disk inner");
    } else {
      auto inner = [&](double t) {
        const double c = std::cosh(t);
        return g(std::min(a * c, R)) * a * c;
      };
      line = 2.0 * integrate(inner, 0.0, std::asinh(w / a), "disk inner");
    }
    return line * h(z2) * R * std::cos(theta);
  };
  return integrate(outer, -0.5 * kPi, 0.0, "disk outer") +
         integrate(outer, 0.0, 0.5 * kPi, "disk outer");
}

} // namespace

Kernel::Kernel(KernelProfile profile, int dim, double radius)
    : profile_(profile), dim_(dim), radius_(radius) {
  require(dim == 1 || dim == 2, "kernels are implemented for d = 1, 2");
  require(radius > 0.0, "kernel support radius must be positive");
  const double R = radius;
  switch (profile) {
  case KernelProfile::Indicator:
    scale_ = dim == 1 ? 1.0 / (2.0 * R) : 1.0 / (kPi * R * R);
    break;
  case KernelProfile::Tent:
    scale_ = dim == 1 ? 1.0 / R : 3.0 / (kPi * R * R);
    break;
  case KernelProfile::Bump:
    scale_ = dim == 1 ? 15.0 / (16.0 * R) : 3.0 / (kPi * R * R);
    break;
  }
}

Kernel Kernel::from_name(const std::string &name, int dim, double radius) {
  if (name == "indicator")
    return {KernelProfile::Indicator, dim, radius};
  if (name == "tent")
    return {KernelProfile::Tent, dim, radius};
  if (name == "bump")
    return {KernelProfile::Bump, dim, radius};
  throw UsageError("unknown kernel profile '" + name + "' (indicator, tent, bump)");
}

std::string Kernel::name() const {
  switch (profile_) {
  case KernelProfile::Indicator:
    return "indicator";
  case KernelProfile::Tent:
    return "tent";
  case KernelProfile::Bump:
    return "bump";
  }
  return "?";
}

double Kernel::operator()(double r) const {
  r = std::abs(r);
  if (r > radius_)
    return 0.0;
  const double t = r / radius_;
  switch (profile_) {
  case KernelProfile::Indicator:
    return scale_;
  case KernelProfile::Tent:
    return scale_ * (1.0 - t);
  case KernelProfile::Bump:
    return scale_ * (1.0 - t * t) * (1.0 - t * t);
  }
  return 0.0;
}

double unit_ball_volume(int d) {
  require(d == 1 || d == 2, "unit ball volume implemented for d = 1, 2");
  return d == 1 ? 2.0 : kPi;
}

double k_pd(double p, int d) {
  require(d == 1 || d == 2, "K_{p,d} implemented for d = 1, 2");
  require(p >= 1.0 && p <= 2.0, "K_{p,d} needs p in [1, 2]");
  if (d == 1)
    return 2.0;
  // |sin|^p has period pi and is symmetric about pi/2.
  return 4.0 * integrate([p](double t) { return std::pow(std::sin(t), p); }, 0.0,
                         0.5 * kPi, "K_{p,2}");
}

double kernel_mass(const Kernel &J) {
  const double R = J.radius();
  if (J.dim() == 1)
    return 2.0 * integrate([&](double z) { return J(z); }, 0.0, R, "kernel mass");
  return disk_integral([&](double r) { return J(r); }, [](double) { return 1.0; }, R);
}

double c_jp(const Kernel &J, double p) {
  const int d = J.dim();
  const double moment = integrate(
      [&](double r) { return J(r) * std::pow(r, p + d - 1.0); }, 0.0, J.radius(), "radial moment");
  return 1.0 / (0.5 * k_pd(p, d) * moment);
}

double c_jp_direct(const Kernel &J, double p) {
  const double R = J.radius();
  double integral = 0.0;
  if (J.dim() == 1) {
    integral = 2.0 * integrate([&](double z) { return J(z) * std::pow(z, p); }, 0.0, R,
                               "direct moment");
  } else {
    integral = disk_integral([&](double r) { return J(r); },
                             [p](double z2) { return std::pow(std::abs(z2), p); }, R);
  }
  return 1.0 / (0.5 * integral);
}

RescaledKernel::RescaledKernel(const Kernel &base, double eps, double p, const Grid &grid)
    : base_(base), eps_(eps), p_(p), c_jp_(spdelab::c_jp(base, p)), grid_(grid),
      under_resolved_(eps < 2.0 * grid.max_spacing()) {
  require(eps > 0.0, "kernel width eps must be positive");
  require(grid.dim() == base.dim(), "kernel and grid dimensions differ");

  const double reach = base.radius() * eps * (1.0 + 1e-12);
  const double vol = grid.cell_volume();
  const double prefactor = c_jp_ * vol / std::pow(eps, grid.dim());
  const int nx = grid.cells(0);
  const int ny = grid.dim() == 2 ? grid.cells(1) : 1;
  const double hx = grid.spacing(0);
  const double hy = grid.dim() == 2 ? grid.spacing(1) : 1.0;
  const int rx = int(std::floor(reach / hx));
  const int ry = grid.dim() == 2 ? int(std::floor(reach / hy)) : 0;

  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> weights;
  pairs_.offsets.push_back(0);
  Index row = 0;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Index a = grid.index(i, j);
      for (int dj = 0; dj <= ry; ++dj) {
        for (int di = -rx; di <= rx; ++di) {
          if (dj == 0 && di <= 0)
            continue; // each unordered pair once
          const int i2 = i + di, j2 = j + dj;
          if (i2 < 0 || i2 >= nx || j2 >= ny)
            continue;
          const double dist = std::hypot(di * hx, grid.dim() == 2 ? dj * hy : 0.0);
          if (dist > reach)
            continue;
          const double w = base(dist / eps);
          if (w <= 0.0)
            continue;
          const Index b = grid.index(i2, j2);
          trip.emplace_back(row, b, 1.0 / eps);
          trip.emplace_back(row, a, -1.0 / eps);
          weights.push_back(prefactor * w);
          ++row;
          pairs_.offsets.push_back(row);
          pairs_.cell.push_back(a);
        }
      }
    }
  }
  pairs_.matrix.resize(row, grid.size());
  pairs_.matrix.setFromTriplets(trip.begin(), trip.end());
  pairs_.weight = Eigen::Map<Vector>(weights.data(), Index(weights.size()));
}

double nonlocal_energy(const RescaledKernel &rk, const GridFunction &u) {
  return nonlocal_energy(rk, 0.0, u);
}

double nonlocal_energy(const RescaledKernel &rk, double delta, const GridFunction &u) {
  require(u.grid() == rk.grid(), "grid function and kernel stencil use different grids");
  const auto profile = RadialProfile::power(rk.p());
  const Vector diff = rk.pairs().matrix * u.values();
  double sum = 0.0;
  for (Index e = 0; e < diff.size(); ++e) {
    const double s = std::abs(diff[e]);
    sum += rk.pairs().weight[e] * (delta > 0.0 ? profile.value_delta(delta, s) : profile.value(s));
  }
  return u.grid().cell_volume() * sum;
}

GridFunction nonlocal_apply(const RescaledKernel &rk, double delta, const GridFunction &u) {
  require(u.grid() == rk.grid(), "grid function and kernel stencil use different grids");
  require(delta > 0.0 || rk.p() > 1.0, "the p = 1 nonlocal operator needs delta > 0");
  const auto profile = RadialProfile::power(rk.p());
  const Vector diff = rk.pairs().matrix * u.values();
  Vector flux(diff.size());
  for (Index e = 0; e < diff.size(); ++e) {
    const double s = std::abs(diff[e]);
    const double slope = delta > 0.0 ? profile.slope_delta(delta, s) : profile.slope(s);
    flux[e] = rk.pairs().weight[e] * std::copysign(slope, diff[e]);
  }
  Vector out = -(rk.pairs().matrix.transpose() * flux);
  return GridFunction(u.grid(), std::move(out), u.tag());
}

} // namespace spdelab
