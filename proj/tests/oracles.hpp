// Independent reference computations shared by unit and acceptance tests.
#ifndef SPDELAB_TEST_ORACLES_HPP
#define SPDELAB_TEST_ORACLES_HPP

#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace oracles {

/// Objective h/2 |v - f|^2 + lambda h sum_faces |(v_{i+1} - v_i)/h|^p / p on
/// a 4-cell 1D grid, written out directly from the definition.
inline double four_cell_objective(const std::array<double, 4> &v, const std::array<double, 4> &f,
                                  double h, double lambda, double p) {
  double fit = 0.0, energy = 0.0;
  for (int i = 0; i < 4; ++i)
    fit += (v[i] - f[i]) * (v[i] - f[i]);
  for (int i = 0; i < 3; ++i)
    energy += std::pow(std::abs((v[i + 1] - v[i]) / h), p) / p;
  return 0.5 * h * fit + lambda * h * energy;
}

/// Lattice search for the 4-cell prox: steps 0.1, 0.01, 0.001, each level a
/// (2w+1)^4 window centered on the previous best point. The first level
/// covers [min f, max f], which contains the minimizer (maximum principle).
inline std::array<double, 4> four_cell_lattice_search(const std::array<double, 4> &f, double h,
                                                      double lambda, double p, int window = 12) {
  double lo = f[0], hi = f[0];
  for (double x : f) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  std::array<double, 4> best{};
  double best_val = std::numeric_limits<double>::infinity();
  // Coarse level: full box at step 0.1.
  {
    const double step = 0.1;
    const double start = std::floor(lo / step) * step;
    const int count = int(std::ceil((hi - start) / step)) + 1;
    std::array<double, 4> v{};
    for (int a = 0; a < count; ++a)
      for (int b = 0; b < count; ++b)
        for (int c = 0; c < count; ++c)
          for (int d = 0; d < count; ++d) {
            v = {start + a * step, start + b * step, start + c * step, start + d * step};
            const double val = four_cell_objective(v, f, h, lambda, p);
            if (val < best_val) {
              best_val = val;
              best = v;
            }
          }
  }
  for (double step : {0.01, 0.001}) {
    const std::array<double, 4> center = best;
    std::array<double, 4> v{};
    for (int a = -window; a <= window; ++a)
      for (int b = -window; b <= window; ++b)
        for (int c = -window; c <= window; ++c)
          for (int d = -window; d <= window; ++d) {
            v = {center[0] + a * step, center[1] + b * step, center[2] + c * step,
                 center[3] + d * step};
            const double val = four_cell_objective(v, f, h, lambda, p);
            if (val < best_val) {
              best_val = val;
              best = v;
            }
          }
  }
  return best;
}

} // namespace oracles

#endif
