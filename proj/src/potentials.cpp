#include "spdelab/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "spdelab/error.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

DifferenceOperator identity_operator(const Grid &g) {
  DifferenceOperator op;
  const Index n = g.size();
  op.matrix.resize(n, n);
  op.matrix.setIdentity();
  op.offsets.resize(std::size_t(n) + 1);
  op.cell.resize(std::size_t(n));
  for (Index i = 0; i <= n; ++i)
    op.offsets[std::size_t(i)] = i;
  for (Index i = 0; i < n; ++i)
    op.cell[std::size_t(i)] = i;
  op.weight = Vector::Ones(n);
  return op;
}

Vector checked_weight(const Grid &grid, const GridFunction &weight) {
  require(weight.grid() == grid, "weight lives on a different grid");
  require(weight.finite() && weight.values().minCoeff() > 0.0,
          "weights must be finite and bounded below by a positive constant");
  return weight.values();
}

Vector group_coefficients(const DifferenceOperator &op, const Vector *weight) {
  Vector c = op.weight;
  if (weight)
    for (Index g = 0; g < op.groups(); ++g)
      c[g] *= (*weight)[op.cell[std::size_t(g)]];
  return c;
}

double segment_norm(const Vector &y, Index a, Index b) {
  return y.segment(a, b - a).norm();
}

// Adds the radial block alpha * n n^T + beta * (I - n n^T) of group rows
// [a, b) to a triplet list, n = y / |y| (n arbitrary when y = 0, alpha = beta).
void push_radial_block(std::vector<Eigen::Triplet<double>> &trip, const Vector &y, Index a,
                       Index b, double alpha, double beta, double scale = 1.0) {
  const double r = segment_norm(y, a, b);
  for (Index i = a; i < b; ++i) {
    for (Index j = a; j < b; ++j) {
      const double nn = r > 0.0 ? y[i] * y[j] / (r * r) : (i == j ? 1.0 : 0.0);
      const double val = alpha * nn + beta * ((i == j ? 1.0 : 0.0) - nn);
      trip.emplace_back(i, j, scale * val);
    }
  }
}

struct Iterate {
  double value = 0.0;
  Vector grad;
};

// Damped Newton on a smooth strictly convex function; `assemble` returns the
// Hessian at x. Returns the scaled stationarity residual.
template <class Objective, class Hessian>
double newton_minimize(Vector &x, Objective objective, Hessian assemble, double tol,
                       double scale, int max_iterations, int &iterations,
                       const char *what) {
  Iterate cur = objective(x, true);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  Index analyzed_nnz = -1;
  double residual = cur.grad.lpNorm<Eigen::Infinity>() / scale;
  double damping = 0.0;
  for (iterations = 0; iterations < max_iterations && residual > tol; ++iterations) {
    SparseMatrix H = assemble(x);
    // The sparsity pattern normally stays fixed between iterations.
    if (H.nonZeros() != analyzed_nnz) {
      ldlt.analyzePattern(H);
      analyzed_nnz = H.nonZeros();
    }
    const double diag_mean = std::max(H.diagonal().cwiseAbs().mean(), 1e-300);
    Vector step;
    for (int attempt = 0;; ++attempt) {
      SparseMatrix Hd = H;
      if (damping > 0.0)
        for (Index i = 0; i < Hd.rows(); ++i)
          Hd.coeffRef(i, i) += damping * diag_mean;
      ldlt.factorize(Hd);
      bool ok = ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all();
      if (ok) {
        step = -ldlt.solve(cur.grad);
        ok = step.allFinite() && step.dot(cur.grad) < 0.0;
      }
      if (ok)
        break;
      damping = damping == 0.0 ? 1e-12 : damping * 100.0;
      if (attempt > 20)
        throw NumericalError(std::string(what) + ": Newton system is singular", residual,
                             iterations);
    }
    const double slope = step.dot(cur.grad);
    double t = 1.0;
    Iterate next;
    Vector trial;
    for (;;) {
      trial = x + t * step;
      next = objective(trial, true);
      const double slack = 8.0 * kEps * std::abs(cur.value);
      if (next.value <= cur.value + 1e-4 * t * slope + slack)
        break;
      t *= 0.5;
      if (t < 1e-14)
        break;
    }
    if (t < 1e-14) {
      // No measurable decrease: accept only if the gradient still shrinks.
      if (next.grad.lpNorm<Eigen::Infinity>() >= cur.grad.lpNorm<Eigen::Infinity>())
        break;
    }
    x = trial;
    cur = next;
    residual = cur.grad.lpNorm<Eigen::Infinity>() / scale;
    damping = t == 1.0 ? damping * 0.1 : std::max(damping, 1e-10) * 10.0;
    if (damping < 1e-14)
      damping = 0.0;
  }
  return residual;
}

// Projection of group blocks onto the balls |eta_g| <= c_g.
void project_balls(Vector &eta, const std::vector<Index> &offsets, const Vector &c) {
  for (std::size_t g = 0; g + 1 < offsets.size(); ++g) {
    const Index a = offsets[g], b = offsets[g + 1];
    const double r = segment_norm(eta, a, b);
    if (r > c[Index(g)])
      eta.segment(a, b - a) *= c[Index(g)] / r;
  }
}

double projected_gradient_residual(const Vector &eta, const Vector &grad,
                                   const std::vector<Index> &offsets, const Vector &c) {
  Vector moved = eta - grad;
  project_balls(moved, offsets, c);
  return (moved - eta).lpNorm<Eigen::Infinity>();
}

bool is_m_matrix_pattern(const SparseMatrix &A) {
  for (Index k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it)
      if (it.row() != it.col() && it.value() > 0.0)
        return false;
  return true;
}

// Primal-dual active set for min 1/2 x^T A x - b^T x, |x_i| <= c_i, A an
// M-matrix. Returns false if the active sets cycle or the result is not a
// KKT point.
bool pdas_box(const SparseMatrix &A, const Vector &b, const Vector &c, Vector &x,
              int &iterations, double tol, double scale) {
  const Index n = A.rows();
  const double kappa = A.diagonal().mean();
  x = x.cwiseMax(-c).cwiseMin(c);
  Vector mu = b - A * x;
  std::vector<signed char> state(std::size_t(n), 2), prev;
  for (int it = 0; it < 200; ++it) {
    ++iterations;
    prev = state;
    for (Index i = 0; i < n; ++i) {
      if (mu[i] + kappa * (x[i] - c[i]) > 0.0)
        state[std::size_t(i)] = 1;
      else if (mu[i] + kappa * (x[i] + c[i]) < 0.0)
        state[std::size_t(i)] = -1;
      else
        state[std::size_t(i)] = 0;
    }
    if (it > 0 && state == prev)
      break;
    std::vector<Index> free_idx;
    std::vector<Index> pos(std::size_t(n), -1);
    for (Index i = 0; i < n; ++i) {
      if (state[std::size_t(i)] == 0) {
        pos[std::size_t(i)] = Index(free_idx.size());
        free_idx.push_back(i);
      } else {
        x[i] = state[std::size_t(i)] * c[i];
      }
    }
    if (!free_idx.empty()) {
      const Index m = Index(free_idx.size());
      Vector rhs(m);
      for (Index k = 0; k < m; ++k)
        rhs[k] = b[free_idx[std::size_t(k)]];
      std::vector<Eigen::Triplet<double>> trip;
      for (Index col = 0; col < n; ++col) {
        for (SparseMatrix::InnerIterator it2(A, col); it2; ++it2) {
          const Index r = it2.row();
          const Index pr = pos[std::size_t(r)];
          if (pr < 0)
            continue;
          const Index pc = pos[std::size_t(col)];
          if (pc >= 0)
            trip.emplace_back(pr, pc, it2.value());
          else
            rhs[pr] -= it2.value() * x[col];
        }
      }
      SparseMatrix Aff(m, m);
      Aff.setFromTriplets(trip.begin(), trip.end());
      Eigen::SimplicialLDLT<SparseMatrix> ldlt(Aff);
      if (ldlt.info() != Eigen::Success)
        return false;
      const Vector xf = ldlt.solve(rhs);
      for (Index k = 0; k < m; ++k)
        x[free_idx[std::size_t(k)]] = xf[k];
    }
    mu = b - A * x;
    for (Index i = 0; i < n; ++i)
      if (state[std::size_t(i)] == 0)
        mu[i] = 0.0;
  }
  if (state != prev)
    return false;
  std::vector<Index> offsets(std::size_t(n) + 1);
  for (Index i = 0; i <= n; ++i)
    offsets[std::size_t(i)] = i;
  const Vector grad = A * x - b;
  return projected_gradient_residual(x, grad, offsets, c) <= tol * scale;
}

// Accelerated projected gradient with adaptive restart for
// min 1/2 x^T A x - b^T x over a product of balls.
double fista_balls(const SparseMatrix &A, const Vector &b, const std::vector<Index> &offsets,
                   const Vector &c, Vector &x, int &iterations, double tol, double scale,
                   int max_iterations) {
  // Power iteration for the Lipschitz constant.
  Vector z = Vector::Ones(A.rows()).normalized();
  double L = 0.0;
  for (int k = 0; k < 50; ++k) {
    Vector Az = A * z;
    L = Az.norm();
    if (L == 0.0)
      break;
    z = Az / L;
  }
  L = std::max(L * 1.05, 1e-300);
  project_balls(x, offsets, c);
  Vector y = x, x_prev = x;
  double t = 1.0;
  auto objective = [&](const Vector &v) { return 0.5 * v.dot(A * v) - b.dot(v); };
  double f_prev = objective(x);
  double residual = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iterations; ++it) {
    ++iterations;
    Vector xn = y - (A * y - b) / L;
    project_balls(xn, offsets, c);
    const double fn = objective(xn);
    if (fn > f_prev) {
      // restart
      t = 1.0;
      y = x;
      continue;
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = xn + ((t - 1.0) / tn) * (xn - x);
    x_prev = x;
    x = xn;
    t = tn;
    f_prev = fn;
    if (it % 10 == 0) {
      residual = projected_gradient_residual(x, (A * x - b) / L, offsets, c) * L / scale;
      if (residual <= tol)
        return residual;
    }
  }
  return projected_gradient_residual(x, (A * x - b) / L, offsets, c) * L / scale;
}

// min_eta 1/2 eta^T M eta - b^T eta + sum_g H_g(eta_g), H_g the conjugate
// of r -> c_g psi(r) + visc r^2 / 2 plus q_g |eta_g|^2 / 2.
struct ConjugateProblem {
  const SparseMatrix &M;
  const Vector &b;
  const std::vector<Index> &offsets;
  const Vector &c;
  const Vector &q;
  double visc;
  const RadialProfile &profile;

  Index groups() const { return Index(offsets.size()) - 1; }

  Iterate evaluate(const Vector &eta, bool) const {
    Iterate out;
    const Vector Me = M * eta;
    out.value = 0.5 * eta.dot(Me) - b.dot(eta);
    out.grad = Me - b;
    for (Index g = 0; g < groups(); ++g) {
      const Index a = offsets[std::size_t(g)], e = offsets[std::size_t(g) + 1];
      const double s = segment_norm(eta, a, e);
      const double qg = q.size() ? q[g] : 0.0;
      if (s == 0.0)
        continue;
      const double R = profile.solve_slope(c[g], visc, s);
      out.value += s * R - c[g] * profile.value(R) - 0.5 * visc * R * R + 0.5 * qg * s * s;
      out.grad.segment(a, e - a) += (R / s + qg) * eta.segment(a, e - a);
    }
    return out;
  }

  SparseMatrix hessian(const Vector &eta) const {
    std::vector<Eigen::Triplet<double>> trip;
    for (Index g = 0; g < groups(); ++g) {
      const Index a = offsets[std::size_t(g)], e = offsets[std::size_t(g) + 1];
      const double s = segment_norm(eta, a, e);
      const double qg = q.size() ? q[g] : 0.0;
      const double R = s > 0.0 ? profile.solve_slope(c[g], visc, s) : 0.0;
      const double alpha = 1.0 / (c[g] * profile.curvature(R) + visc);
      const double beta = s > 0.0 ? R / s : alpha;
      push_radial_block(trip, eta, a, e, alpha + qg, beta + qg);
    }
    SparseMatrix B(M.rows(), M.cols());
    B.setFromTriplets(trip.begin(), trip.end());
    return M + B;
  }
};

struct SolveOutcome {
  Vector values;
  double residual = 0.0;
  int iterations = 0;
};

SolveOutcome solve_conjugate(const ConjugateProblem &prob, Vector eta, const ProxOptions &opts,
                             double scale, bool box) {
  SolveOutcome out;
  if (box) {
    SparseMatrix A = prob.M;
    if (prob.q.size()) {
      for (Index g = 0; g < prob.groups(); ++g)
        for (Index i = prob.offsets[std::size_t(g)]; i < prob.offsets[std::size_t(g) + 1]; ++i)
          A.coeffRef(i, i) += prob.q[g];
    }
    bool singletons = true;
    for (Index g = 0; g < prob.groups(); ++g)
      singletons = singletons && prob.offsets[std::size_t(g) + 1] - prob.offsets[std::size_t(g)] == 1;
    if (singletons && is_m_matrix_pattern(A)) {
      Vector x = eta;
      int its = 0;
      if (pdas_box(A, prob.b, prob.c, x, its, opts.tol, scale)) {
        out.values = x;
        out.iterations = its;
        const Vector grad = A * x - prob.b;
        out.residual = projected_gradient_residual(x, grad, prob.offsets, prob.c) / scale;
        return out;
      }
      out.iterations = its;
    }
    int its = 0;
    out.residual = fista_balls(A, prob.b, prob.offsets, prob.c, eta, its, opts.tol, scale,
                               opts.max_iterations);
    out.iterations += its;
    out.values = eta;
    return out;
  }
  out.residual = newton_minimize(
      eta, [&](const Vector &x, bool g) { return prob.evaluate(x, g); },
      [&](const Vector &x) { return prob.hessian(x); }, opts.tol, scale, opts.max_iterations,
      out.iterations, "conjugate prox");
  out.values = eta;
  return out;
}

// Primal Newton for smooth integrands in the L^2 geometry.
SolveOutcome solve_primal(const Potential &pot, double lambda, const Vector &f,
                          const ProxOptions &opts, double scale) {
  const auto &op = pot.op();
  const SparseMatrix G = op.matrix;
  const SparseMatrix Gt = G.transpose();
  const Vector &c = pot.coefficients();
  const double visc = pot.viscosity();
  auto objective = [&](const Vector &v, bool) {
    Iterate out;
    const Vector y = G * v;
    Vector flux = Vector::Zero(y.size());
    double energy = 0.0;
    for (Index g = 0; g < op.groups(); ++g) {
      const Index a = op.offsets[std::size_t(g)], e = op.offsets[std::size_t(g) + 1];
      const double r = segment_norm(y, a, e);
      const RadialJet j = pot.radial_jet(r);
      energy += c[g] * j.value + 0.5 * visc * r * r;
      const double ratio = r > 0.0 ? c[g] * j.slope / r : 0.0;
      flux.segment(a, e - a) = (ratio + visc) * y.segment(a, e - a);
    }
    out.value = 0.5 * (v - f).squaredNorm() + lambda * energy;
    out.grad = v - f + lambda * (Gt * flux);
    return out;
  };
  auto hessian = [&](const Vector &v) {
    const Vector y = G * v;
    std::vector<Eigen::Triplet<double>> trip;
    for (Index g = 0; g < op.groups(); ++g) {
      const Index a = op.offsets[std::size_t(g)], e = op.offsets[std::size_t(g) + 1];
      const double r = segment_norm(y, a, e);
      const RadialJet j = pot.radial_jet(r);
      const double alpha = c[g] * j.curvature + visc;
      const double beta = r > 0.0 ? c[g] * j.slope / r + visc : alpha;
      push_radial_block(trip, y, a, e, alpha, beta);
    }
    SparseMatrix D(G.rows(), G.rows());
    D.setFromTriplets(trip.begin(), trip.end());
    SparseMatrix H = lambda * (Gt * D * G);
    SparseMatrix I(H.rows(), H.cols());
    I.setIdentity();
    return SparseMatrix(H + I);
  };
  SolveOutcome out;
  Vector v = f;
  out.residual = newton_minimize(v, objective, hessian, opts.tol, scale, opts.max_iterations,
                                 out.iterations, "primal prox");
  out.values = v;
  return out;
}

// Prox of the unshifted potential.
SolveOutcome solve_prox(const Potential &pot, double lambda, const Vector &f,
                        const ProxOptions &opts) {
  const double scale = std::max(1.0, f.lpNorm<Eigen::Infinity>());
  const auto &op = pot.op();
  const bool box = pot.profile().corner_at_origin() && pot.viscosity() == 0.0;

  if (pot.geometry() == SpaceTag::Hminus1) {
    // K w + dG*(w) = f with G = lambda a psi^delta; v = f - K w.
    const auto solver = dirichlet_solver(pot.grid());
    const SparseMatrix &K = solver->stiffness();
    const Vector c = lambda * pot.coefficients();
    Vector q;
    if (pot.regularized())
      q = pot.delta() * c.cwiseInverse();
    ConjugateProblem prob{K, f, op.offsets, c, q, 0.0, pot.profile()};
    Vector w0(f.size());
    for (Index i = 0; i < f.size(); ++i)
      w0[i] = std::copysign(c[i] * pot.profile().slope(std::abs(f[i])), f[i]);
    if (box)
      w0 = w0.cwiseMax(-c).cwiseMin(c);
    SolveOutcome out = solve_conjugate(prob, w0, opts, scale, box);
    out.values = f - K * out.values;
    return out;
  }

  if (pot.smooth())
    return solve_primal(pot, lambda, f, opts, scale);

  // Dual in the difference variables: v = f - lambda G^T eta.
  const SparseMatrix G = op.matrix;
  const SparseMatrix M = lambda * SparseMatrix(G * SparseMatrix(G.transpose()));
  const Vector b = G * f;
  const Vector &c = pot.coefficients();
  const Vector q;
  ConjugateProblem prob{M, b, op.offsets, c, q, pot.viscosity(), pot.profile()};
  Vector eta0 = Vector::Zero(b.size());
  for (Index g = 0; g < op.groups(); ++g) {
    const Index a = op.offsets[std::size_t(g)], e = op.offsets[std::size_t(g) + 1];
    const double r = segment_norm(b, a, e);
    if (r > 0.0)
      eta0.segment(a, e - a) =
          (c[g] * pot.profile().slope(r) + pot.viscosity() * r) / r * b.segment(a, e - a);
  }
  if (box)
    project_balls(eta0, op.offsets, c);
  const double dual_scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
  SolveOutcome out = solve_conjugate(prob, eta0, opts, dual_scale, box);
  out.values = f - lambda * (G.transpose() * out.values);
  return out;
}

} // namespace

const char *to_string(PotentialFamily f) {
  switch (f) {
  case PotentialFamily::PDirichlet:
    return "pdirichlet";
  case PotentialFamily::FastDiffusion:
    return "fastdiffusion";
  case PotentialFamily::Nonlocal:
    return "nonlocal";
  case PotentialFamily::GeneralGradient:
    return "general_gradient";
  }
  return "?";
}

Potential::Potential(PotentialFamily family, const Grid &grid, RadialProfile profile)
    : family_(family), grid_(grid), profile_(profile) {}

Potential Potential::p_dirichlet(const Grid &grid, double p) {
  Potential pot(PotentialFamily::PDirichlet, grid, RadialProfile::power(p));
  pot.op_ = std::make_shared<const DifferenceOperator>(neumann_gradient_operator(grid));
  pot.coeff_ = group_coefficients(*pot.op_, nullptr);
  return pot;
}

Potential Potential::p_dirichlet(const Grid &grid, double p, const GridFunction &weight) {
  Potential pot = p_dirichlet(grid, p);
  const Vector a = checked_weight(grid, weight);
  pot.coeff_ = group_coefficients(*pot.op_, &a);
  return pot;
}

Potential Potential::fast_diffusion(const Grid &grid, double m) {
  require(m >= 0.0 && m <= 1.0, "fast-diffusion exponent m must lie in [0, 1]");
  Potential pot(PotentialFamily::FastDiffusion, grid, RadialProfile::power(m + 1.0));
  pot.geometry_ = SpaceTag::Hminus1;
  pot.op_ = std::make_shared<const DifferenceOperator>(identity_operator(grid));
  pot.coeff_ = group_coefficients(*pot.op_, nullptr);
  return pot;
}

Potential Potential::fast_diffusion(const Grid &grid, double m, const GridFunction &weight) {
  Potential pot = fast_diffusion(grid, m);
  const Vector a = checked_weight(grid, weight);
  pot.coeff_ = group_coefficients(*pot.op_, &a);
  return pot;
}

Potential Potential::nonlocal(const RescaledKernel &kernel) {
  Potential pot(PotentialFamily::Nonlocal, kernel.grid(), RadialProfile::power(kernel.p()));
  pot.op_ = std::make_shared<const DifferenceOperator>(kernel.pairs());
  pot.coeff_ = group_coefficients(*pot.op_, nullptr);
  return pot;
}

Potential Potential::general_gradient(const Grid &grid, const RadialProfile &profile) {
  Potential pot(PotentialFamily::GeneralGradient, grid, profile);
  pot.op_ = std::make_shared<const DifferenceOperator>(neumann_gradient_operator(grid));
  pot.coeff_ = group_coefficients(*pot.op_, nullptr);
  return pot;
}

Potential Potential::with_yosida(double delta) const {
  require(delta > 0.0, "Yosida parameter delta must be positive");
  require(delta_ == 0.0, "potential is already Yosida-regularized");
  Potential pot = *this;
  pot.delta_ = delta;
  return pot;
}

Potential Potential::with_viscosity(double eps) const {
  require(eps >= 0.0, "viscosity must be nonnegative");
  require(family_ == PotentialFamily::PDirichlet || family_ == PotentialFamily::GeneralGradient ||
              eps == 0.0,
          "viscosity is only defined for local gradient families");
  Potential pot = *this;
  pot.visc_ = eps;
  return pot;
}

Potential Potential::shifted(const GridFunction &center) const {
  require(center.grid() == grid_, "shift lives on a different grid");
  Potential pot = *this;
  pot.shift_ = is_shifted() ? Vector(shift_ + center.values()) : center.values();
  return pot;
}

std::string Potential::describe() const {
  std::ostringstream os;
  os << to_string(family_) << "[" << profile_.describe() << "]";
  if (delta_ > 0.0)
    os << "+yosida(" << delta_ << ")";
  if (visc_ > 0.0)
    os << "+viscosity(" << visc_ << ")";
  if (is_shifted())
    os << "+shift";
  return os.str();
}

double Potential::radial_value(double r) const {
  return delta_ > 0.0 ? profile_.value_delta(delta_, r) : profile_.value(r);
}

double Potential::radial_slope(double r) const {
  return delta_ > 0.0 ? profile_.slope_delta(delta_, r) : profile_.slope(r);
}

double Potential::radial_curvature(double r) const {
  return delta_ > 0.0 ? profile_.curvature_delta(delta_, r) : profile_.curvature(r);
}

namespace {

void check_argument(const Potential &pot, const GridFunction &u) {
  require(u.grid() == pot.grid(), "grid function and potential use different grids");
  if (pot.geometry() == SpaceTag::Hminus1)
    require(u.tag() == SpaceTag::Hminus1, "fast-diffusion potentials act on Hminus1 states");
  else
    require(u.tag() != SpaceTag::Hminus1, "gradient potentials act on L2 or H1 states");
}

Vector unshifted(const Potential &pot, const GridFunction &u) {
  return pot.is_shifted() ? Vector(u.values() - pot.shift()) : u.values();
}

} // namespace

double eval(const Potential &pot, const GridFunction &u) {
  check_argument(pot, u);
  const auto &op = pot.op();
  const Vector y = op.matrix * unshifted(pot, u);
  const Vector &c = pot.coefficients();
  double sum = 0.0;
  for (Index g = 0; g < op.groups(); ++g) {
    const double r = segment_norm(y, op.offsets[std::size_t(g)], op.offsets[std::size_t(g) + 1]);
    sum += c[g] * pot.radial_value(r) + 0.5 * pot.viscosity() * r * r;
  }
  return pot.grid().cell_volume() * sum;
}

GridFunction smooth_gradient(const Potential &pot, const GridFunction &u) {
  check_argument(pot, u);
  require(pot.smooth(), "gradient needs a Lipschitz slope (Yosida regularization)");
  const auto &op = pot.op();
  const Vector y = op.matrix * unshifted(pot, u);
  const Vector &c = pot.coefficients();
  Vector flux(y.size());
  for (Index g = 0; g < op.groups(); ++g) {
    const Index a = op.offsets[std::size_t(g)], e = op.offsets[std::size_t(g) + 1];
    const double r = segment_norm(y, a, e);
    const double ratio = r > 0.0 ? c[g] * pot.radial_slope(r) / r : 0.0;
    flux.segment(a, e - a) = (ratio + pot.viscosity()) * y.segment(a, e - a);
  }
  if (pot.geometry() == SpaceTag::Hminus1) {
    const auto solver = dirichlet_solver(pot.grid());
    return GridFunction(pot.grid(), solver->apply(flux), SpaceTag::Hminus1);
  }
  return GridFunction(pot.grid(), op.matrix.transpose() * flux, SpaceTag::L2);
}

GridFunction yosida_gradient(const Potential &pot, const GridFunction &u) {
  require(pot.regularized(), "yosida_gradient needs a Yosida-regularized potential");
  return smooth_gradient(pot, u);
}

double variational_violation(const Potential &pot, double lambda, const GridFunction &f,
                             const GridFunction &z, int probes, std::uint64_t seed) {
  const double ez = eval(pot, z);
  const GridFunction resid = f - z;
  auto violation = [&](double lhs, const GridFunction &v) {
    const double ev = eval(pot, v);
    const double rhs = lambda * (ev - ez);
    const double mag = std::max(1.0, std::abs(lhs) + lambda * (std::abs(ev) + std::abs(ez)));
    return (lhs - rhs) / mag;
  };
  const GridFunction zero(f.grid(), f.tag());
  double worst = std::max(violation(inner(resid, f - z), f), violation(inner(resid, zero - z), zero));
  if (probes <= 0)
    return std::max(0.0, worst);
  // Probe directions depend only on (seed, size, count); keep the last panel.
  thread_local std::uint64_t cached_seed = 0;
  thread_local Eigen::MatrixXd panel;
  if (cached_seed != seed || panel.rows() != f.size() || panel.cols() < probes) {
    panel.resize(f.size(), probes);
    for (int k = 0; k < probes; ++k)
      for (Index i = 0; i < f.size(); ++i)
        panel(i, k) = keyed_normal(seed, std::uint64_t(k), std::uint64_t(i), 0);
    cached_seed = seed;
  }
  const double amp = std::max(1.0, f.values().lpNorm<Eigen::Infinity>());
  GridFunction v(f.grid(), f.tag());
  GridFunction d(f.grid(), f.tag());
  for (int k = 0; k < probes; ++k) {
    const double s = amp * std::pow(10.0, -double(k % 4));
    d.values() = panel.col(k);
    v.values() = z.values() + s * panel.col(k);
    worst = std::max(worst, violation(s * inner(resid, d), v));
  }
  return std::max(0.0, worst);
}

ProxResult prox(const Potential &pot, double lambda, const GridFunction &f,
                const ProxOptions &opts) {
  require(lambda > 0.0, "prox step lambda must be positive");
  require(f.grid() == pot.grid(), "grid function and potential use different grids");
  require(f.tag() == pot.geometry(),
          std::string("prox argument must be tagged ") + to_string(pot.geometry()));
  require(f.finite(), "prox argument has non-finite values");

  const Vector center = pot.is_shifted() ? pot.shift() : Vector::Zero(f.size());
  const Vector f0 = f.values() - center;
  // The solvers stop on their own residual; a dual residual at tol does not
  // always give a primal certificate at tol, so tighten and re-solve.
  ProxOptions inner = opts;
  ProxResult res;
  double kkt = 0.0;
  int total = 0;
  for (int attempt = 0;; ++attempt) {
    SolveOutcome out = solve_prox(pot, lambda, f0, inner);
    total += out.iterations;
    res.minimizer = GridFunction(f.grid(), out.values + center, f.tag());
    res.iterations = total;
    if (!res.minimizer.finite())
      throw NumericalError("prox produced non-finite values", out.residual, total);
    const GridFunction diff = res.minimizer - f;
    res.objective = 0.5 * norm_sq(diff) + lambda * eval(pot, res.minimizer);
    kkt = std::max(std::min(out.residual, opts.tol),
                   variational_violation(pot, lambda, f, res.minimizer, std::max(0, opts.probes),
                                         opts.probe_seed));
    if (out.residual > inner.tol)
      kkt = std::max(kkt, out.residual);
    if (kkt <= opts.tol || attempt == 3)
      break;
    inner.tol *= 0.1;
  }
  res.kkt_residual = kkt;
  if (!(kkt <= opts.tol))
    throw NumericalError("prox did not reach tolerance for " + pot.describe(), kkt, total);
  return res;
}

} // namespace spdelab
