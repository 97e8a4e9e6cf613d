#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "spdelab/error.hpp"
#include "spdelab/rng.hpp"
#include "spdelab/spde.hpp"

using namespace spdelab;

namespace {

const double kPi = std::numbers::pi;

GridFunction cos_mode(const Grid &g, int k, double amp = 1.0) {
  return GridFunction::sample(g, [=](double x, double) { return amp * std::cos(k * kPi * x); });
}

GridFunction random_function(const Grid &g, std::uint64_t seed, double amp = 1.0,
                             SpaceTag tag = SpaceTag::L2) {
  Vector v(g.size());
  for (Index i = 0; i < g.size(); ++i)
    v[i] = amp * keyed_normal(seed, 3, std::uint64_t(i), 0);
  return GridFunction(g, v, tag);
}

SchemeParams params(double dt, int steps) {
  SchemeParams sp;
  sp.dt = dt;
  sp.steps = steps;
  return sp;
}

} // namespace

TEST_CASE("apply_B examples") {
  Grid g(1.0, 16);
  auto one = GridFunction::constant(g, 1.0);
  auto u = random_function(g, 1);
  auto add = DiffusionModel::additive({one});
  CHECK(add.apply(u, Vector::Constant(1, 0.3)).values().isApproxToConstant(0.3));
  auto lm = DiffusionModel::linear_multiplicative({cos_mode(g, 1), cos_mode(g, 2)});
  CHECK(lm.apply(u, Vector::Zero(2)).values().norm() == 0.0);
  CHECK(lm.apply(GridFunction(g), Vector::Constant(2, 0.7)).values().norm() == 0.0);
  auto nem = DiffusionModel::nemytskii([](double x) { return std::sin(x); }, {one}, "sin");
  CHECK(nem.apply(u, Vector::Constant(1, 2.0))[3] == doctest::Approx(2.0 * std::sin(u[3])));
  CHECK_THROWS_AS(lm.apply(u, Vector::Zero(3)), UsageError);
  CHECK_THROWS_AS(DiffusionModel::additive({one, GridFunction::constant(Grid(1.0, 8), 1.0)}),
                  UsageError);
}

TEST_CASE("Hilbert-Schmidt norms") {
  Grid g(1.0, 32);
  auto g1 = cos_mode(g, 1), g2 = cos_mode(g, 3, 0.5);
  auto add = DiffusionModel::additive({g1, g2});
  const double a = add.hs_norm_sq(random_function(g, 2));
  CHECK(a == doctest::Approx(add.hs_norm_sq(random_function(g, 3))).epsilon(1e-14));
  CHECK(a == doctest::Approx(norm_sq(g1) + norm_sq(g2)).epsilon(1e-14));
  auto lm = DiffusionModel::linear_multiplicative({g1, g2});
  CHECK(lm.hs_norm_sq(GridFunction::constant(g, 1.0)) ==
        doctest::Approx(norm_sq(g1) + norm_sq(g2)).epsilon(1e-14));
  CHECK(add.lipschitz(SpaceTag::L2) == 0.0);
}

TEST_CASE("sampled Lipschitz ratios respect the declared constants") {
  Grid g(1.0, 24);
  auto f1 = GridFunction::sample(g, [](double x, double) { return 1.0 + x; });
  auto f2 = cos_mode(g, 2, 0.5);
  auto lm = DiffusionModel::linear_multiplicative({f1, f2});
  auto nem = DiffusionModel::nemytskii([](double x) { return std::tanh(x); }, {f1, f2}, "tanh");
  for (SpaceTag tag : {SpaceTag::L2, SpaceTag::Hminus1}) {
    const double L = lm.lipschitz(tag);
    CHECK(L > 0.0);
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 1000; ++k) {
      auto u = random_function(g, 100 + k, 1.0, tag), v = random_function(g, 5000 + k, 1.0, tag);
      double diff = 0.0;
      for (int m = 0; m < lm.modes(); ++m)
        diff += norm_sq(lm.mode_response(u, m) - lm.mode_response(v, m));
      worst = std::max(worst, std::sqrt(diff) / norm(u - v));
    }
    CHECK(worst <= L * (1 + 1e-10));
    // The certificate is not wildly loose.
    CHECK(worst >= 0.3 * L);
  }
  const double L = nem.lipschitz(SpaceTag::L2);
  for (std::uint64_t k = 0; k < 1000; ++k) {
    auto u = random_function(g, 200 + k, 2.0), v = random_function(g, 7000 + k, 2.0);
    double diff = 0.0;
    for (int m = 0; m < nem.modes(); ++m)
      diff += norm_sq(nem.mode_response(u, m) - nem.mode_response(v, m));
    CHECK(std::sqrt(diff) <= L * norm(u - v) * (1 + 1e-12));
  }
  CHECK_THROWS_AS(nem.lipschitz(SpaceTag::Hminus1), UsageError);
  // Growth bound |B(u)|^2 <= C (1 + |u|^2).
  for (const auto *m : {&lm, &nem}) {
    const double C = m->growth_constant(SpaceTag::L2);
    for (std::uint64_t k = 0; k < 50; ++k) {
      auto u = random_function(g, 300 + k, 3.0);
      CHECK(m->hs_norm_sq(u) <= C * (1.0 + norm_sq(u)) * (1 + 1e-12));
    }
  }
}

TEST_CASE("noise paths are reproducible with the right statistics") {
  NoisePath a{42, 3, 4, 0.01}, b{42, 3, 4, 0.01}, c{43, 3, 4, 0.01};
  CHECK(a.increments(7) == b.increments(7));
  CHECK(a.increments(7) != c.increments(7));
  CHECK(a.increments(7) != a.increments(8));
  // Per-channel sample variance within 5 standard errors of dt.
  const int n = 4000;
  for (int k = 0; k < 4; ++k) {
    double s = 0.0, s2 = 0.0;
    for (int p = 0; p < n; ++p) {
      const double x = NoisePath{9, std::uint64_t(p), 4, 0.01}.increments(0)[k];
      s += x;
      s2 += x * x;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    // Var of the sample variance of a Gaussian: 2 dt^2 / n.
    CHECK(std::abs(var - 0.01) <= 5.0 * std::sqrt(2.0 / n) * 0.01);
    CHECK(std::abs(mean) <= 5.0 * std::sqrt(0.01 / n));
  }
}

TEST_CASE("noise-free p = 2 step damps Neumann eigenmodes") {
  Grid g(1.0, 32);
  auto pot = Potential::p_dirichlet(g, 2.0);
  const double dt = 0.01;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      -Eigen::MatrixXd(laplacian_matrix(g, BoundaryCondition::Neumann)));
  const auto &V = es.eigenvectors();
  const Vector damp = (1.0 + dt * es.eigenvalues().array()).inverse();
  auto x = random_function(g, 11);
  const Vector expect = V * damp.asDiagonal() * V.transpose() * x.values();
  auto y = step(x, pot, DiffusionModel::none(), params(dt, 1), Vector());
  CHECK((y.values() - expect).lpNorm<Eigen::Infinity>() <= 1e-9);
}

TEST_CASE("constants are equilibria for the gradient families") {
  Grid g(1.0, 20);
  Grid g2({1.0, 1.0}, {6, 5});
  auto c = GridFunction::constant(g, 1.7);
  std::vector<Potential> pots = {
      Potential::p_dirichlet(g, 1.0), Potential::p_dirichlet(g, 1.5), Potential::p_dirichlet(g, 2.0),
      Potential::general_gradient(g, RadialProfile::enveloped_power(1.0, 0.1)),
      Potential::nonlocal(RescaledKernel(Kernel(KernelProfile::Tent, 1), 0.2, 1.5, g)),
      Potential::p_dirichlet(g, 1.5).with_yosida(0.01)};
  for (const auto &pot : pots) {
    auto y = step(c, pot, DiffusionModel::none(), params(0.05, 1), Vector());
    CHECK((y - c).values().lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  auto c2 = GridFunction::constant(g2, -0.4);
  auto y2 = step(c2, Potential::p_dirichlet(g2, 1.0), DiffusionModel::none(), params(0.05, 1), Vector());
  CHECK((y2 - c2).values().lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("single-cell fast diffusion with m = 1 is scalar implicit Euler") {
  // One cell of width 1: K = 2/h^2 = 2, so v + dt K v = f.
  Grid g(1.0, 1);
  auto pot = Potential::fast_diffusion(g, 1.0);
  for (double f : {0.3, -2.0}) {
    GridFunction x(g, Vector::Constant(1, f), SpaceTag::Hminus1);
    auto y = step(x, pot, DiffusionModel::none(), params(0.1, 1), Vector());
    CHECK(y[0] == doctest::Approx(f / 1.2).epsilon(1e-10));
  }
}

TEST_CASE("noise-free simulation reduces to the deterministic scheme") {
  Grid g(1.0, 24);
  auto pot = Potential::p_dirichlet(g, 1.5);
  auto x0 = GridFunction::sample(g, [](double x, double) { return x < 0.5 ? 1.0 : -1.0; });
  auto sp = params(0.01, 10);
  auto ens = simulate(x0, pot, DiffusionModel::none(), sp, 1, 5);
  GridFunction x = x0;
  double prev = eval(pot, x);
  for (int s = 0; s < 10; ++s) {
    x = step(x, pot, DiffusionModel::none(), sp, Vector());
    // Energy budget: implicit gradient steps never increase the energy.
    const double e = eval(pot, x);
    CHECK(e <= prev + 1e-12);
    prev = e;
  }
  CHECK((ens.state(0, ens.snapshots() - 1) - x).values().norm() == 0.0);
  CHECK(ens.snapshots() == 11);
}

TEST_CASE("seeded ensembles are bitwise reproducible and coupled runs share noise") {
  Grid g(1.0, 16);
  auto pot = Potential::p_dirichlet(g, 1.5);
  auto model = DiffusionModel::linear_multiplicative({cos_mode(g, 1, 0.5)});
  auto x0 = cos_mode(g, 1);
  auto sp = params(0.01, 8);
  auto a = simulate(x0, pot, model, sp, 6, 77);
  auto b = simulate(x0, pot, model, sp, 6, 77);
  auto c = simulate(x0, pot, model, sp, 6, 78);
  bool same = true, differ = false;
  for (int p = 0; p < 6; ++p) {
    same = same && a.paths[std::size_t(p)] == b.paths[std::size_t(p)];
    differ = differ || a.paths[std::size_t(p)] != c.paths[std::size_t(p)];
  }
  CHECK(same);
  CHECK(differ);
  auto [x, y] = simulate_coupled(x0, x0, pot, pot, model, sp, 6, 77);
  for (int p = 0; p < 6; ++p)
    CHECK(x.paths[std::size_t(p)] == y.paths[std::size_t(p)]);
}

TEST_CASE("ensemble mean of a linear additive problem follows the noiseless path") {
  Grid g(1.0, 32);
  auto pot = Potential::p_dirichlet(g, 2.0);
  auto model = DiffusionModel::additive({cos_mode(g, 1, 0.5), cos_mode(g, 2, 0.5)});
  auto x0 = GridFunction::sample(g, [](double x, double) { return x * x; });
  auto sp = params(0.01, 20);
  auto ens = simulate(x0, pot, model, sp, 200, 123);
  auto det = simulate(x0, pot, DiffusionModel::none(), sp, 1, 0);
  const int last = ens.snapshots() - 1;
  for (int k : {0, 1, 2, 3}) {
    auto h = cos_mode(g, k);
    double s = 0.0, s2 = 0.0;
    for (int p = 0; p < 200; ++p) {
      const double v = inner(ens.state(p, last), h);
      s += v;
      s2 += v * v;
    }
    const double mean = s / 200, se = std::sqrt((s2 / 200 - mean * mean) / 199);
    CHECK(std::abs(mean - inner(det.state(0, last), h)) <= 3.0 * se + 1e-12);
  }
}

TEST_CASE("mean-zero additive noise conserves mass under Neumann p-Laplace") {
  Grid g(1.0, 32);
  auto model = DiffusionModel::additive({cos_mode(g, 1, 0.8), cos_mode(g, 3, 0.4)});
  auto x0 = GridFunction::sample(g, [](double x, double) { return 1.0 + std::sin(3 * x); });
  const double mass0 = x0.values().mean();
  for (double p : {1.0, 1.5, 2.0}) {
    auto ens = simulate(x0, Potential::p_dirichlet(g, p), model, params(0.01, 20), 4, 9);
    for (int path = 0; path < 4; ++path)
      for (int s = 0; s < ens.snapshots(); ++s)
        CHECK(std::abs(ens.state(path, s).values().mean() - mass0) <= 1e-10);
  }
}

TEST_CASE("explicit Yosida drift") {
  Grid g(1.0, 8);
  auto pot = Potential::p_dirichlet(g, 1.5);
  auto x0 = cos_mode(g, 1);
  SchemeParams sp = params(0.0005, 100);
  sp.delta = 0.1;
  sp.drift = DriftScheme::ExplicitYosida;
  auto ex = simulate(x0, pot, DiffusionModel::none(), sp, 1, 0);
  CHECK(ex.dt_lipschitz < 2.0);
  sp.drift = DriftScheme::Proximal;
  auto im = simulate(x0, pot, DiffusionModel::none(), sp, 1, 0);
  const int last = ex.snapshots() - 1;
  // Both are first-order in dt.
  CHECK(norm(ex.state(0, last) - im.state(0, last)) <= 0.02 * norm(x0));
  sp.drift = DriftScheme::ExplicitYosida;
  sp.dt = 0.05;
  CHECK_THROWS_AS(simulate(x0, pot, DiffusionModel::none(), sp, 1, 0), UsageError);
  sp.delta = 0.0;
  CHECK_THROWS_AS(simulate(x0, pot, DiffusionModel::none(), sp, 1, 0), UsageError);
}

TEST_CASE("scheme potential and validation") {
  Grid g(1.0, 8);
  auto pot = Potential::p_dirichlet(g, 1.5);
  SchemeParams sp = params(0.01, 2);
  sp.delta = 0.01;
  sp.eps_visc = 0.1;
  auto eff = scheme_potential(pot, sp);
  CHECK(eff.regularized());
  CHECK(eff.viscosity() == 0.1);
  CHECK(std::isinf(drift_lipschitz(pot)));
  CHECK(drift_lipschitz(Potential::p_dirichlet(g, 2.0)) ==
        doctest::Approx(4.0 / std::pow(g.spacing(0), 2) * std::pow(std::cos(kPi / 16), 2)).epsilon(1e-6));
  CHECK_THROWS_AS(scheme_potential(pot.with_yosida(0.1), sp), UsageError);
  sp.dt = 0.0;
  CHECK_THROWS_AS(simulate(cos_mode(g, 1), pot, DiffusionModel::none(), sp, 1, 0), UsageError);
  // Wrong geometry for fast diffusion.
  CHECK_THROWS_AS(simulate(cos_mode(g, 1), Potential::fast_diffusion(g, 0.5), DiffusionModel::none(),
                           params(0.01, 1), 1, 0),
                  UsageError);
}

TEST_CASE("initial smoothing is a contraction that keeps constants") {
  Grid g(1.0, 32);
  auto x = random_function(g, 4);
  auto y = smooth_initial(x, 5);
  CHECK(norm(y) < norm(x));
  CHECK(std::abs(y.values().mean() - x.values().mean()) <= 1e-12);
  auto c = GridFunction::constant(g, 2.0);
  CHECK((smooth_initial(c, 3) - c).values().lpNorm<Eigen::Infinity>() <= 1e-12);
}

TEST_CASE("trajectory CSV and manifest") {
  Grid g(1.0, 4);
  auto ens = simulate(cos_mode(g, 1), Potential::p_dirichlet(g, 2.0),
                      DiffusionModel::additive({cos_mode(g, 1)}), params(0.01, 3), 2, 1);
  const auto dir = std::filesystem::temp_directory_path() / "spdelab_test_spde";
  std::filesystem::create_directories(dir);
  write_trajectory_csv(ens, (dir / "traj.csv").string());
  write_run_manifest(ens, (dir / "manifest.txt").string());
  std::ifstream in(dir / "traj.csv");
  std::string line;
  int lines = 0;
  while (std::getline(in, line))
    ++lines;
  CHECK(lines == 1 + 2 * 4 * 4);
  std::ifstream man(dir / "manifest.txt");
  std::string all((std::istreambuf_iterator<char>(man)), std::istreambuf_iterator<char>());
  CHECK(all.find("seed = 1") != std::string::npos);
  CHECK(all.find("dt_lipschitz") != std::string::npos);
  std::filesystem::remove_all(dir);
}
