#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "spdelab/error.hpp"
#include "spdelab/svi.hpp"

using namespace spdelab;

namespace {

const double kPi = std::numbers::pi;

GridFunction cos_mode(const Grid &g, int k, double amp = 1.0) {
  return GridFunction::sample(g, [=](double x, double) { return amp * std::cos(k * kPi * x); });
}

SchemeParams params(double dt, int steps) {
  SchemeParams sp;
  sp.dt = dt;
  sp.steps = steps;
  return sp;
}

GridFunction initial(const Grid &g) {
  return GridFunction::sample(g, [](double x, double) { return std::cos(kPi * x) + 0.5 * std::cos(3 * kPi * x); });
}

} // namespace

TEST_CASE("self-decomposition makes the inequality an identity") {
  Grid g(1.0, 16);
  auto pot = Potential::p_dirichlet(g, 2.0);
  auto model = DiffusionModel::linear_multiplicative({cos_mode(g, 1, 0.5), cos_mode(g, 2, 0.3)});
  auto ens = simulate(initial(g), pot, model, params(1e-3, 60), 40, 11);
  auto Z = TestProcess::solution_decomposition(ens, model);
  const double C = default_svi_constant(model, SpaceTag::L2);
  auto r = check_variational(ens, Z, pot, model, C);
  REQUIRE(r.rows.size() == 8);
  CHECK(r.pass());
  for (const auto &row : r.rows) {
    CHECK(std::abs(row.margin) <= row.quad_error + 3.0 * row.se + 1e-9);
    CHECK(std::abs(row.margin) <= 1e-9);
  }
}

TEST_CASE("noise-free decay: margin against Z = 0 equals 2 int phi") {
  // p = 2: (dphi(x), x) = 2 phi(x), so |X_t|^2 + 4 int phi = |x0|^2 and with
  // C = 0 the margin is 2 int phi = (|x0|^2 - |X_t|^2) / 2.
  Grid g(1.0, 32);
  auto pot = Potential::p_dirichlet(g, 2.0);
  auto model = DiffusionModel::none();
  const auto x0 = initial(g);
  auto ens = simulate(x0, pot, model, params(2e-5, 2000), 1, 3);
  auto r = check_variational(ens, TestProcess::zero(g, SpaceTag::L2), pot, model, 0.0);
  CHECK(r.pass());
  const auto &last = r.rows.back();
  const double xt = norm_sq(ens.state(0, ens.snapshots() - 1));
  const double oracle = 0.5 * (norm_sq(x0) - xt);
  CHECK(last.margin == doctest::Approx(oracle).epsilon(2e-3));
  CHECK(last.se == 0.0);
}

TEST_CASE("variational check passes for structured test processes") {
  Grid g(1.0, 16);
  auto pot = Potential::p_dirichlet(g, 1.5);
  SchemeParams sp = params(2e-3, 50);
  sp.delta = 0.05;
  const auto stepped = scheme_potential(pot, sp);
  auto model = DiffusionModel::linear_multiplicative({cos_mode(g, 0, 0.4), cos_mode(g, 1, 0.3)});
  auto ens = simulate(initial(g), pot, model, sp, 200, 5);
  const double C = default_svi_constant(model, SpaceTag::L2);

  std::vector<TestProcess> tests;
  tests.push_back(TestProcess::zero(g, SpaceTag::L2));
  tests.push_back(TestProcess::constant(cos_mode(g, 2, 0.7)));
  tests.push_back(TestProcess::deterministic(
      "heat_flow", initial(g), [&](double, const GridFunction &z) {
        return -1.0 * smooth_gradient(Potential::p_dirichlet(g, 2.0), z);
      }));
  TestProcess noisy;
  noisy.name = "scaled_noise";
  noisy.z0 = cos_mode(g, 1);
  noisy.noise_seed = 5;
  noisy.diffusion = [&](int, int, double, const GridFunction &z) {
    std::vector<GridFunction> f;
    for (int k = 0; k < model.modes(); ++k)
      f.push_back(0.5 * model.mode_response(z, k));
    return f;
  };
  tests.push_back(noisy);

  for (const auto &Z : tests) {
    CAPTURE(Z.name);
    auto r = check_variational(ens, Z, stepped, model, C);
    CHECK(r.pass());
    CHECK(r.worst_margin_in_se() > -3.0);
  }
}

TEST_CASE("energy estimate and smallest constant") {
  Grid g(1.0, 16);
  auto pot = Potential::p_dirichlet(g, 2.0);
  auto model = DiffusionModel::additive({cos_mode(g, 1, 0.5)});
  auto ens = simulate(initial(g), pot, model, params(1e-3, 100), 100, 9);
  auto r = check_energy(ens, pot, 10.0);
  CHECK(r.pass());
  CHECK(r.c_min > 0.0);
  CHECK(r.c_min < 10.0);
  auto tight = check_energy(ens, pot, 0.5 * r.c_min);
  CHECK_FALSE(tight.pass());
  // The supremum term alone already reaches |x0|^2.
  CHECK(r.c_min >= norm_sq(ens.state(0, 0)) / (norm_sq(ens.state(0, 0)) + 1.0) - 1e-12);
}

TEST_CASE("usage errors") {
  Grid g(1.0, 8);
  auto pot = Potential::p_dirichlet(g, 2.0);
  auto model = DiffusionModel::additive({cos_mode(g, 1)});
  auto ens = simulate(initial(g), pot, model, params(1e-3, 10), 4, 1);
  auto Z = TestProcess::solution_decomposition(ens, model);
  Z.noise_seed = 2;
  CHECK_THROWS_AS(check_variational(ens, Z, pot, model, 1.0), UsageError);
  SchemeParams sp = params(1e-3, 10);
  sp.stride = 2;
  auto sparse = simulate(initial(g), pot, model, sp, 4, 1);
  CHECK_THROWS_AS(check_variational(sparse, TestProcess::zero(g, SpaceTag::L2), pot, model, 1.0),
                  UsageError);
  CHECK_THROWS_AS(check_energy(ens, pot, -1.0), UsageError);
  CHECK_THROWS_AS(check_variational(ens, TestProcess::zero(Grid(1.0, 4), SpaceTag::L2), pot, model, 1.0),
                  UsageError);
}

TEST_CASE("weak convergence metric") {
  Grid g(1.0, 16);
  auto pot = Potential::p_dirichlet(g, 2.0);
  auto model = DiffusionModel::additive({cos_mode(g, 1, 0.5), cos_mode(g, 2, 0.5)});
  auto sp = params(2e-3, 50);
  auto a = simulate(initial(g), pot, model, sp, 200, 21);
  auto b = simulate(initial(g), pot, model, sp, 200, 22);
  const auto dict = standard_dictionary(g, SpaceTag::L2, sp.horizon());
  CHECK(dict.size() == 32);
  CHECK(weak_convergence_metric(a, a, dict) == 0.0);

  auto same_law = weak_metric_detail(a, b, dict);
  CHECK_FALSE(same_law.paired);
  for (std::size_t j = 0; j < dict.size(); ++j)
    CHECK(std::abs(same_law.pairings[j]) <= 4.0 * same_law.se[j] + 1e-14);

  auto shifted = simulate(initial(g) + GridFunction::constant(g, 0.3), pot, model, sp, 200, 21);
  auto diff = weak_metric_detail(a, shifted, dict);
  CHECK(diff.paired);
  // Mass is conserved, so the constant mode with weight 1 sees 0.3 T exactly.
  CHECK(diff.value == doctest::Approx(0.3 * sp.horizon()).epsilon(1e-8));

  Grid g2({1.0, 1.0}, {6, 6});
  CHECK(standard_dictionary(g2, SpaceTag::L2, 1.0).size() == 32);
  CHECK_THROWS_AS(weak_convergence_metric(a, simulate(initial(g), pot, model, params(2e-3, 40), 4, 1), dict),
                  UsageError);
}

TEST_CASE("svi csv") {
  Grid g(1.0, 8);
  auto pot = Potential::p_dirichlet(g, 2.0);
  auto model = DiffusionModel::additive({cos_mode(g, 1)});
  auto ens = simulate(initial(g), pot, model, params(1e-3, 16), 8, 1);
  auto r = check_variational(ens, TestProcess::zero(g, SpaceTag::L2), pot, model, 1.0);
  const auto file = (std::filesystem::temp_directory_path() / "spdelab_svi.csv").string();
  write_svi_csv(r, file);
  std::ifstream in(file);
  std::string line;
  std::getline(in, line);
  CHECK(line == "checkpoint_t,lhs,rhs,margin,se,verdict");
  int rows = 0;
  while (std::getline(in, line))
    rows += line.rfind('#', 0) != 0;
  CHECK(rows == int(r.rows.size()));
  std::filesystem::remove(file);
}
