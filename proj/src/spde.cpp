#include "spdelab/spde.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "spdelab/error.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

namespace {

void check_fields(const std::vector<GridFunction> &fields) {
  for (const auto &f : fields) {
    require(f.grid() == fields.front().grid(), "noise mode fields must share one grid");
    require(f.finite(), "noise mode field has non-finite values");
  }
}

// Largest eigenvalue of a symmetric positive semidefinite operator.
template <class Apply> double power_iteration(Apply apply, Index n, int iterations = 300) {
  // Random start: constants often span the null space.
  Vector z(n);
  for (Index i = 0; i < n; ++i)
    z[i] = keyed_normal(0x706f776572ULL, std::uint64_t(i), 0, 0);
  z.normalize();
  double lambda = 0.0;
  for (int k = 0; k < iterations; ++k) {
    Vector y = apply(z);
    const double nrm = y.norm();
    if (nrm == 0.0)
      return 0.0;
    lambda = z.dot(y);
    z = y / nrm;
  }
  return lambda;
}

// Dense K^{-1} for the generalized eigenproblems of the H^{-1} certificates.
Eigen::MatrixXd dense_inverse_stiffness(const Grid &g) {
  const auto solver = dirichlet_solver(g);
  Eigen::MatrixXd inv(g.size(), g.size());
  for (Index i = 0; i < g.size(); ++i)
    inv.col(i) = solver->solve(Vector::Unit(g.size(), i));
  return 0.5 * (inv + inv.transpose());
}

// sup_w sum_k |D_k w|_{-1}^2 / |w|_{-1}^2 for pointwise multipliers D_k.
double hminus1_multiplier_bound(const std::vector<GridFunction> &fields) {
  const Grid &g = fields.front().grid();
  const Eigen::MatrixXd Kinv = dense_inverse_stiffness(g);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(g.size(), g.size());
  for (const auto &f : fields)
    A += f.values().asDiagonal() * Kinv * f.values().asDiagonal();
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Kinv, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw NumericalError("generalized eigenproblem for the noise certificate failed", 0.0, 0);
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

double max_pointwise_sum_sq(const std::vector<GridFunction> &fields) {
  Vector s = Vector::Zero(fields.front().size());
  for (const auto &f : fields)
    s += f.values().cwiseAbs2();
  return s.maxCoeff();
}

double slope_lipschitz(const Potential &pot) {
  if (pot.regularized())
    return 1.0 / pot.delta();
  const auto &prof = pot.profile();
  if (!prof.lipschitz_slope())
    return std::numeric_limits<double>::infinity();
  switch (prof.shape()) {
  case RadialProfile::Shape::Power:
    return 1.0;
  case RadialProfile::Shape::ViscousPower:
    return 1.0 + prof.parameter();
  case RadialProfile::Shape::EnvelopePower:
    return 1.0 / prof.parameter();
  }
  return std::numeric_limits<double>::infinity();
}

const char *to_string(DriftScheme d) {
  return d == DriftScheme::Proximal ? "proximal" : "explicit_yosida";
}

void validate(const SchemeParams &sp) {
  require(sp.dt > 0.0 && std::isfinite(sp.dt), "scheme dt must be positive");
  require(sp.steps >= 0, "scheme step count must be non-negative");
  require(sp.delta >= 0.0, "Yosida delta must be non-negative");
  require(sp.eps_visc >= 0.0, "viscosity must be non-negative");
  require(sp.ic_smoothing >= 0, "ic_smoothing must be non-negative");
  require(sp.stride >= 1, "snapshot stride must be at least 1");
  if (sp.drift == DriftScheme::ExplicitYosida) {
    require(sp.delta > 0.0, "explicit_yosida drift needs delta > 0");
    require(sp.dt <= sp.delta / 4.0 * (1 + 1e-12), "explicit_yosida drift needs dt <= delta/4");
  }
}

std::vector<int> snapshot_schedule(const SchemeParams &sp) {
  std::vector<int> out;
  for (int s = 0; s <= sp.steps; s += sp.stride)
    out.push_back(s);
  if (out.back() != sp.steps)
    out.push_back(sp.steps);
  return out;
}

} // namespace

DiffusionModel DiffusionModel::additive(std::vector<GridFunction> g) {
  check_fields(g);
  DiffusionModel m;
  m.kind_ = Kind::Additive;
  m.fields_ = std::move(g);
  return m;
}

DiffusionModel DiffusionModel::linear_multiplicative(std::vector<GridFunction> f) {
  check_fields(f);
  DiffusionModel m;
  m.kind_ = Kind::LinearMultiplicative;
  m.fields_ = std::move(f);
  return m;
}

DiffusionModel DiffusionModel::nemytskii(std::function<double(double)> b,
                                         std::vector<GridFunction> e, std::string name) {
  require(bool(b), "Nemytskii noise needs a scalar map");
  check_fields(e);
  DiffusionModel m;
  m.kind_ = Kind::Nemytskii;
  m.fields_ = std::move(e);
  m.b_ = std::move(b);
  m.b_name_ = std::move(name);
  return m;
}

DiffusionModel DiffusionModel::none() { return DiffusionModel(); }

std::string DiffusionModel::describe() const {
  std::ostringstream os;
  switch (kind_) {
  case Kind::Additive:
    os << "additive";
    break;
  case Kind::LinearMultiplicative:
    os << "linear_multiplicative";
    break;
  case Kind::Nemytskii:
    os << "nemytskii[" << b_name_ << "]";
    break;
  }
  os << "(K=" << modes() << ")";
  return os.str();
}

GridFunction DiffusionModel::mode_response(const GridFunction &u, int k) const {
  require(k >= 0 && k < modes(), "noise mode index out of range");
  const GridFunction &f = fields_[std::size_t(k)];
  require(f.grid() == u.grid(), "noise fields and state use different grids");
  switch (kind_) {
  case Kind::Additive:
    return f.retagged(u.tag());
  case Kind::LinearMultiplicative:
    return GridFunction(u.grid(), f.values().cwiseProduct(u.values()), u.tag());
  case Kind::Nemytskii: {
    Vector v(u.size());
    for (Index i = 0; i < u.size(); ++i)
      v[i] = b_(u[i]) * f[i];
    return GridFunction(u.grid(), v, u.tag());
  }
  }
  return GridFunction(u.grid(), u.tag());
}

GridFunction DiffusionModel::apply(const GridFunction &u, const Vector &dW) const {
  require(dW.size() == modes(), "increment count " + std::to_string(dW.size()) +
                                    " does not match the " + std::to_string(modes()) +
                                    " noise modes");
  GridFunction out(u.grid(), u.tag());
  for (int k = 0; k < modes(); ++k)
    if (dW[k] != 0.0)
      out += dW[k] * mode_response(u, k);
  return out;
}

double DiffusionModel::hs_norm_sq(const GridFunction &u) const {
  double s = 0.0;
  for (int k = 0; k < modes(); ++k)
    s += norm_sq(mode_response(u, k));
  return s;
}

double DiffusionModel::lipschitz(SpaceTag geometry) const {
  require(geometry != SpaceTag::H1, "noise certificates are implemented for L2 and Hminus1");
  if (kind_ == Kind::Additive || modes() == 0)
    return 0.0;
  if (geometry == SpaceTag::L2)
    return std::sqrt(max_pointwise_sum_sq(fields_));
  if (kind_ == Kind::Nemytskii)
    throw UsageError("Nemytskii noise has no Lipschitz certificate in Hminus1");
  return std::sqrt(hminus1_multiplier_bound(fields_));
}

double DiffusionModel::growth_constant(SpaceTag geometry) const {
  if (modes() == 0)
    return 0.0;
  switch (kind_) {
  case Kind::Additive: {
    double s = 0.0;
    for (const auto &g : fields_)
      s += norm_sq(g.retagged(geometry));
    return s;
  }
  case Kind::LinearMultiplicative: {
    const double L = lipschitz(geometry);
    return L * L;
  }
  case Kind::Nemytskii: {
    // |b(u)| <= |b(0)| + |u|.
    const double L = lipschitz(geometry);
    double s = 0.0;
    for (const auto &e : fields_)
      s += norm_sq(e.retagged(geometry));
    const double b0 = b_(0.0);
    return 2.0 * std::max(b0 * b0 * s, L * L);
  }
  }
  return 0.0;
}

Vector NoisePath::increments(int step) const {
  Vector dW(modes);
  const double scale = std::sqrt(dt);
  for (int k = 0; k < modes; ++k)
    dW[k] = scale * keyed_normal(seed, path, std::uint64_t(step), std::uint64_t(k));
  return dW;
}

Potential scheme_potential(const Potential &pot, const SchemeParams &sp) {
  Potential out = pot;
  if (sp.delta > 0.0) {
    if (pot.regularized())
      require(std::abs(pot.delta() - sp.delta) <= 1e-14 * sp.delta,
              "potential is already regularized with a different delta");
    else
      out = out.with_yosida(sp.delta);
  }
  if (sp.eps_visc > 0.0)
    out = out.with_viscosity(sp.eps_visc);
  return out;
}

double drift_lipschitz(const Potential &pot) {
  const double kappa = slope_lipschitz(pot);
  if (!std::isfinite(kappa))
    return kappa;
  const auto &op = pot.op();
  const Vector &c = pot.coefficients();
  Vector d(op.matrix.rows());
  for (Index g = 0; g < op.groups(); ++g)
    d.segment(op.offsets[std::size_t(g)], op.group_size(g)).setConstant(c[g] * kappa + pot.viscosity());
  if (pot.geometry() == SpaceTag::Hminus1) {
    // Symmetrized D^{1/2} K D^{1/2}.
    const auto solver = dirichlet_solver(pot.grid());
    const Vector s = d.cwiseSqrt();
    return power_iteration(
        [&](const Vector &z) { return Vector(s.cwiseProduct(solver->apply(s.cwiseProduct(z)))); },
        d.size());
  }
  const auto &G = op.matrix;
  return power_iteration(
      [&](const Vector &z) { return Vector(G.transpose() * d.cwiseProduct(G * z)); }, G.cols());
}

GridFunction smooth_initial(const GridFunction &x0, int steps) {
  require(steps >= 0, "smoothing step count must be non-negative");
  if (steps == 0)
    return x0;
  const Grid &g = x0.grid();
  const double tau = std::pow(g.max_spacing(), 2);
  const auto bc = x0.tag() == SpaceTag::Hminus1 ? BoundaryCondition::Dirichlet
                                                : BoundaryCondition::Neumann;
  SparseMatrix A = -tau * laplacian_matrix(g, bc);
  SparseMatrix I(g.size(), g.size());
  I.setIdentity();
  A += I;
  Eigen::SimplicialLDLT<SparseMatrix> solver(A);
  if (solver.info() != Eigen::Success)
    throw NumericalError("factorization of the smoothing operator failed", 0.0, 0);
  Vector v = x0.values();
  for (int k = 0; k < steps; ++k)
    v = solver.solve(v);
  return GridFunction(g, v, x0.tag());
}

GridFunction step(const GridFunction &state, const Potential &pot, const DiffusionModel &model,
                  const SchemeParams &sp, const Vector &dW) {
  require(state.grid() == pot.grid(), "state and potential use different grids");
  require(state.tag() == pot.geometry(),
          std::string("state must be tagged ") + to_string(pot.geometry()));
  GridFunction pre = state;
  if (model.modes() > 0)
    pre += model.apply(state, dW);
  else
    require(dW.size() == 0, "increments given for a noise-free model");
  if (sp.drift == DriftScheme::ExplicitYosida) {
    require(pot.regularized(), "explicit_yosida drift needs a Yosida-regularized potential");
    require(sp.dt <= pot.delta() / 4.0 * (1 + 1e-12), "explicit_yosida drift needs dt <= delta/4");
    GridFunction out = pre - sp.dt * smooth_gradient(pot, state);
    if (!out.finite())
      throw NumericalError("explicit Yosida step produced non-finite values", 0.0, 1);
    return out;
  }
  return prox(pot, sp.dt, pre, sp.prox).minimizer;
}

GridFunction TrajectoryEnsemble::state(int path, int snapshot) const {
  require(path >= 0 && path < n_paths(), "path index out of range");
  require(snapshot >= 0 && snapshot < snapshots(), "snapshot index out of range");
  return GridFunction(grid, paths[std::size_t(path)].col(snapshot), tag);
}

TrajectoryEnsemble simulate(const InitialSampler &x0, const Potential &pot,
                            const DiffusionModel &model, const SchemeParams &sp, int n_paths,
                            std::uint64_t seed) {
  validate(sp);
  require(n_paths >= 1, "need at least one path");
  require(bool(x0), "initial sampler is empty");
  const Potential eff = scheme_potential(pot, sp);
  if (model.modes() > 0)
    require(model.fields().front().grid() == pot.grid(), "noise fields and potential use different grids");

  TrajectoryEnsemble ens;
  ens.grid = pot.grid();
  ens.tag = pot.geometry();
  ens.scheme = sp;
  ens.snapshot_steps = snapshot_schedule(sp);
  ens.potential_id = eff.describe();
  ens.diffusion_id = model.describe();
  ens.dt_lipschitz = sp.dt * drift_lipschitz(eff);
  ens.paths.assign(std::size_t(n_paths), Eigen::MatrixXd());
  ens.noise.resize(std::size_t(n_paths));
  for (int p = 0; p < n_paths; ++p)
    ens.noise[std::size_t(p)] = NoisePath{seed, std::uint64_t(p), model.modes(), sp.dt};

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_paths));
#pragma omp parallel for schedule(dynamic)
  for (int p = 0; p < n_paths; ++p) {
    try {
      GridFunction x = x0(p);
      require(x.grid() == pot.grid(), "initial datum and potential use different grids");
      require(x.tag() == pot.geometry(),
              std::string("initial datum must be tagged ") + to_string(pot.geometry()));
      x = smooth_initial(x, sp.ic_smoothing);
      Eigen::MatrixXd store(x.size(), Index(ens.snapshot_steps.size()));
      std::size_t next = 0;
      const NoisePath &noise = ens.noise[std::size_t(p)];
      for (int s = 0;; ++s) {
        if (next < ens.snapshot_steps.size() && ens.snapshot_steps[next] == s)
          store.col(Index(next++)) = x.values();
        if (s == sp.steps)
          break;
        x = step(x, eff, model, sp, noise.increments(s));
      }
      ens.paths[std::size_t(p)] = std::move(store);
    } catch (...) {
      errors[std::size_t(p)] = std::current_exception();
    }
  }
  for (const auto &e : errors)
    if (e)
      std::rethrow_exception(e);
  return ens;
}

TrajectoryEnsemble simulate(const GridFunction &x0, const Potential &pot,
                            const DiffusionModel &model, const SchemeParams &sp, int n_paths,
                            std::uint64_t seed) {
  return simulate([&x0](int) { return x0; }, pot, model, sp, n_paths, seed);
}

std::pair<TrajectoryEnsemble, TrajectoryEnsemble>
simulate_coupled(const GridFunction &x0, const GridFunction &y0, const Potential &pot_x,
                 const Potential &pot_y, const DiffusionModel &model, const SchemeParams &sp,
                 int n_paths, std::uint64_t seed) {
  require(pot_x.grid() == pot_y.grid(), "coupled potentials use different grids");
  require(pot_x.geometry() == pot_y.geometry(), "coupled potentials use different geometries");
  // Counter-keyed increments: the same seed gives the same noise paths.
  return {simulate(x0, pot_x, model, sp, n_paths, seed),
          simulate(y0, pot_y, model, sp, n_paths, seed)};
}

void write_trajectory_csv(const TrajectoryEnsemble &ens, const std::string &file) {
  std::ofstream out(file);
  if (!out)
    throw std::runtime_error("cannot write " + file);
  out << "path,step,cell_index,value\n";
  char buf[64];
  for (int p = 0; p < ens.n_paths(); ++p)
    for (int s = 0; s < ens.snapshots(); ++s) {
      const auto col = ens.paths[std::size_t(p)].col(s);
      for (Index i = 0; i < col.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", col[i]);
        out << p << ',' << ens.snapshot_steps[std::size_t(s)] << ',' << i << ',' << buf << '\n';
      }
    }
  if (!out)
    throw std::runtime_error("write failed for " + file);
}

void write_run_manifest(const TrajectoryEnsemble &ens, const std::string &file) {
  std::ofstream out(file);
  if (!out)
    throw std::runtime_error("cannot write " + file);
  const auto &sp = ens.scheme;
  out << std::setprecision(17);
  out << "potential = " << ens.potential_id << '\n';
  out << "diffusion = " << ens.diffusion_id << '\n';
  out << "geometry = " << to_string(ens.tag) << '\n';
  out << "dt = " << sp.dt << '\n';
  out << "steps = " << sp.steps << '\n';
  out << "delta = " << sp.delta << '\n';
  out << "eps_visc = " << sp.eps_visc << '\n';
  out << "ic_smoothing = " << sp.ic_smoothing << '\n';
  out << "drift = " << to_string(sp.drift) << '\n';
  out << "stride = " << sp.stride << '\n';
  out << "prox_tol = " << sp.prox.tol << '\n';
  out << "dt_lipschitz = " << ens.dt_lipschitz << '\n';
  out << "n_paths = " << ens.n_paths() << '\n';
  out << "seed = " << (ens.noise.empty() ? 0 : ens.noise.front().seed) << '\n';
  out << "rng = splitmix64 counter hash keyed by (seed, path, step, mode)\n";
  if (!out)
    throw std::runtime_error("write failed for " + file);
}

} // namespace spdelab
