#include "spdelab/svi.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <memory>
#include <numbers>

#include "spdelab/error.hpp"

namespace spdelab {

namespace {

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double> &v) {
  Moments m;
  const double n = double(v.size());
  if (v.empty())
    return m;
  for (double x : v)
    m.mean += x;
  m.mean /= n;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v)
      ss += (x - m.mean) * (x - m.mean);
    m.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return m;
}

void rethrow_first(const std::vector<std::exception_ptr> &errors) {
  for (const auto &e : errors)
    if (e)
      std::rethrow_exception(e);
}

// Trapezoid partial sums of per-interval (left, right) values over steps of
// width dt, plus the coarse rule on interval pairs.
struct Quadrature {
  std::vector<double> fine;   // fine[t] = integral over [0, t]
  std::vector<double> coarse; // pairs, falling back to fine on an odd tail
};

Quadrature accumulate(const std::vector<double> &left, const std::vector<double> &right,
                      double dt) {
  const std::size_t n = left.size();
  Quadrature q;
  q.fine.assign(n + 1, 0.0);
  q.coarse.assign(n + 1, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    q.fine[s + 1] = q.fine[s] + 0.5 * dt * (left[s] + right[s]);
  for (std::size_t t = 1; t <= n; ++t) {
    double c = 0.0;
    std::size_t s = 0;
    for (; s + 2 <= t; s += 2)
      c += dt * (left[s] + right[s + 1]);
    if (s < t)
      c += 0.5 * dt * (left[s] + right[s]);
    q.coarse[t] = c;
  }
  return q;
}

bool row_passes(const SVIRow &r) {
  const double slack = 1e-10 * (std::abs(r.lhs) + std::abs(r.rhs) + 1.0);
  return r.margin >= -3.0 * r.se - slack;
}

} // namespace

TestProcess TestProcess::constant(const GridFunction &z) {
  TestProcess t;
  t.name = "constant";
  t.z0 = z;
  return t;
}

TestProcess TestProcess::zero(const Grid &grid, SpaceTag tag) {
  auto t = constant(GridFunction(grid, tag));
  t.name = "zero";
  return t;
}

TestProcess TestProcess::deterministic(std::string name, const GridFunction &z0,
                                       std::function<GridFunction(double, const GridFunction &)> drift) {
  require(bool(drift), "deterministic test process needs a drift");
  TestProcess t;
  t.name = std::move(name);
  t.z0 = z0;
  t.drift = [drift](int, int, double time, const GridFunction &z) { return drift(time, z); };
  return t;
}

TestProcess TestProcess::solution_decomposition(const TrajectoryEnsemble &ens,
                                                const DiffusionModel &model) {
  require(ens.n_paths() > 0, "empty ensemble");
  require(ens.scheme.stride == 1, "solution decomposition needs every step stored");
  const auto data = std::make_shared<const TrajectoryEnsemble>(ens);
  const double dt = ens.scheme.dt;
  TestProcess t;
  t.name = "solution_decomposition";
  t.z0 = ens.state(0, 0);
  t.noise_seed = ens.noise.front().seed;
  t.drift = [data, model, dt](int path, int step, double, const GridFunction &) {
    const GridFunction x = data->state(path, step);
    const GridFunction next = data->state(path, step + 1);
    const Vector dW = data->noise[std::size_t(path)].increments(step);
    return (1.0 / dt) * (next - x - model.apply(x, dW));
  };
  t.diffusion = [data, model](int path, int step, double, const GridFunction &) {
    const GridFunction x = data->state(path, step);
    std::vector<GridFunction> f;
    for (int k = 0; k < model.modes(); ++k)
      f.push_back(model.mode_response(x, k));
    return f;
  };
  return t;
}

bool SVIReport::pass() const {
  return std::all_of(rows.begin(), rows.end(), [](const SVIRow &r) { return r.pass; });
}

double SVIReport::worst_margin_in_se() const {
  double w = INFINITY;
  for (const auto &r : rows)
    w = std::min(w, r.se > 0.0 ? r.margin / r.se : (r.margin >= 0.0 ? INFINITY : -INFINITY));
  return w;
}

std::vector<int> default_checkpoints(const TrajectoryEnsemble &ens, int count) {
  require(count >= 1, "need at least one checkpoint");
  const int last = ens.snapshots() - 1;
  require(last >= 1, "ensemble has no time steps");
  std::vector<int> out;
  for (int c = 1; c <= count; ++c) {
    const int s = int(std::lround(double(c) * last / count));
    if (s >= 1 && (out.empty() || s > out.back()))
      out.push_back(s);
  }
  return out;
}

double default_svi_constant(const DiffusionModel &model, SpaceTag geometry) {
  const double L = model.lipschitz(geometry);
  return 2.0 * L * L + 1.0;
}

SVIReport check_energy(const TrajectoryEnsemble &ens, const Potential &pot, double C,
                       std::vector<int> checkpoints) {
  require(ens.n_paths() > 0, "empty ensemble");
  require(C > 0.0 && std::isfinite(C), "energy constant must be positive and finite");
  require(pot.grid() == ens.grid && pot.geometry() == ens.tag,
          "potential and ensemble use different settings");
  if (checkpoints.empty())
    checkpoints = default_checkpoints(ens);
  for (int c : checkpoints)
    require(c >= 0 && c < ens.snapshots(), "energy checkpoint out of range");

  const int P = ens.n_paths(), S = ens.snapshots();
  // norms[p][s], phi_int[p][s] = trapezoid of phi over snapshots 0..s.
  std::vector<std::vector<double>> norms(static_cast<std::size_t>(P)), integral(static_cast<std::size_t>(P));
  std::vector<double> x0_sq(static_cast<std::size_t>(P));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(P));
#pragma omp parallel for schedule(dynamic)
  for (int p = 0; p < P; ++p) {
    try {
      auto &nv = norms[std::size_t(p)];
      auto &iv = integral[std::size_t(p)];
      nv.assign(std::size_t(S), 0.0);
      iv.assign(std::size_t(S), 0.0);
      double prev = 0.0;
      for (int s = 0; s < S; ++s) {
        const GridFunction x = ens.state(p, s);
        nv[std::size_t(s)] = norm_sq(x);
        const double phi = eval(pot, x);
        if (!std::isfinite(phi))
          throw NumericalError("potential is infinite along a trajectory", INFINITY, 0);
        if (s > 0)
          iv[std::size_t(s)] = iv[std::size_t(s - 1)] + 0.5 * (ens.time(s) - ens.time(s - 1)) * (prev + phi);
        prev = phi;
      }
      x0_sq[std::size_t(p)] = nv[0];
    } catch (...) {
      errors[std::size_t(p)] = std::current_exception();
    }
  }
  rethrow_first(errors);

  std::vector<double> mean_norm(std::size_t(S), 0.0);
  for (int s = 0; s < S; ++s) {
    for (int p = 0; p < P; ++p)
      mean_norm[std::size_t(s)] += norms[std::size_t(p)][std::size_t(s)];
    mean_norm[std::size_t(s)] /= P;
  }
  const double ex0 = moments(x0_sq).mean;

  SVIReport r;
  r.kind = "energy";
  r.C = C;
  r.n_paths = P;
  for (int c : checkpoints) {
    int arg = 0;
    for (int s = 1; s <= c; ++s)
      if (mean_norm[std::size_t(s)] > mean_norm[std::size_t(arg)])
        arg = s;
    std::vector<double> lhs(static_cast<std::size_t>(P)), margin(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p) {
      lhs[std::size_t(p)] = norms[std::size_t(p)][std::size_t(arg)] + integral[std::size_t(p)][std::size_t(c)];
      margin[std::size_t(p)] = C * (x0_sq[std::size_t(p)] + 1.0) - lhs[std::size_t(p)];
    }
    SVIRow row;
    row.step = ens.snapshot_steps[std::size_t(c)];
    row.t = ens.time(c);
    row.lhs = moments(lhs).mean;
    row.rhs = C * (ex0 + 1.0);
    const Moments m = moments(margin);
    row.margin = m.mean;
    row.se = m.se;
    row.pass = row_passes(row);
    r.c_min = std::max(r.c_min, row.lhs / (ex0 + 1.0));
    r.rows.push_back(row);
  }
  return r;
}

SVIReport check_variational(const TrajectoryEnsemble &ens, const TestProcess &Z,
                            const Potential &pot, const DiffusionModel &model, double C,
                            std::vector<int> checkpoints) {
  require(ens.n_paths() > 0, "empty ensemble");
  require(ens.scheme.stride == 1, "variational check needs every step stored (stride 1)");
  require(C >= 0.0 && std::isfinite(C), "constant C must be finite and non-negative");
  require(pot.grid() == ens.grid && pot.geometry() == ens.tag,
          "potential and ensemble use different settings");
  require(Z.z0.grid() == ens.grid && Z.z0.tag() == ens.tag,
          "test process and ensemble use different settings");
  require(model.modes() == ens.noise.front().modes, "diffusion model does not match the ensemble noise");
  if (Z.noise_seed)
    require(*Z.noise_seed == ens.noise.front().seed,
            "test process was built on different noise paths than the ensemble");
  const int N = ens.scheme.steps;
  const double dt = ens.scheme.dt;
  if (checkpoints.empty())
    checkpoints = default_checkpoints(ens);
  for (int c : checkpoints)
    require(c >= 1 && c <= N, "variational checkpoint out of range");

  const int P = ens.n_paths();
  // Per path and checkpoint: lhs, rhs, and the coarse-rule margin.
  std::vector<std::vector<double>> lhs(checkpoints.size(), std::vector<double>(std::size_t(P)));
  auto rhs = lhs, coarse_margin = lhs;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(P));

#pragma omp parallel for schedule(dynamic)
  for (int p = 0; p < P; ++p) {
    try {
      const NoisePath &noise = ens.noise[std::size_t(p)];
      const auto n = static_cast<std::size_t>(N);
      std::vector<double> dist(n + 1), phx_l(n), phx_r(n), phz_l(n), phz_r(n), g_l(n), g_r(n),
          f_l(n), f_r(n);
      GridFunction z = Z.z0;
      GridFunction x = ens.state(p, 0);
      auto weight = [&](int s) { return std::exp(-C * dt * s); };
      double phx = eval(pot, x), phz = eval(pot, z);
      dist[0] = norm_sq(x - z);
      for (int s = 0; s < N; ++s) {
        GridFunction g(ens.grid, ens.tag);
        if (Z.drift) {
          g = Z.drift(p, s, dt * s, z);
          require(g.grid() == ens.grid && g.tag() == ens.tag, "test drift has the wrong setting");
        }
        std::vector<GridFunction> f;
        if (Z.diffusion) {
          f = Z.diffusion(p, s, dt * s, z);
          require(int(f.size()) == model.modes(), "test diffusion has the wrong number of modes");
        }
        auto hs_gap = [&](const GridFunction &zz) {
          double acc = 0.0;
          for (int k = 0; k < model.modes(); ++k) {
            const GridFunction b = model.mode_response(zz, k);
            acc += f.empty() ? norm_sq(b) : norm_sq(f[std::size_t(k)] - b);
          }
          return acc;
        };
        const Vector dW = noise.increments(s);
        GridFunction z_next = z + dt * g;
        for (std::size_t k = 0; k < f.size(); ++k)
          z_next += dW[Index(k)] * f[k];
        const GridFunction x_next = ens.state(p, s + 1);
        const double phx_next = eval(pot, x_next), phz_next = eval(pot, z_next);
        if (!std::isfinite(phx) || !std::isfinite(phx_next))
          throw NumericalError("potential is infinite along a trajectory", INFINITY, 0);
        const double w0 = weight(s), w1 = weight(s + 1);
        const std::size_t u = std::size_t(s);
        phx_l[u] = w0 * phx;
        phx_r[u] = w1 * phx_next;
        phz_l[u] = w0 * phz;
        phz_r[u] = w1 * phz_next;
        g_l[u] = w0 * inner(g, x - z);
        g_r[u] = w1 * inner(g, x_next - z_next);
        // F_s - B(Z_s) is frozen over the step, as in the realization of Z.
        const double gap = hs_gap(z);
        f_l[u] = w0 * gap;
        f_r[u] = w1 * gap;
        dist[u + 1] = norm_sq(x_next - z_next);
        x = x_next;
        z = std::move(z_next);
        phx = phx_next;
        phz = phz_next;
      }
      const auto qx = accumulate(phx_l, phx_r, dt), qz = accumulate(phz_l, phz_r, dt),
                 qg = accumulate(g_l, g_r, dt), qf = accumulate(f_l, f_r, dt);
      for (std::size_t c = 0; c < checkpoints.size(); ++c) {
        const std::size_t t = std::size_t(checkpoints[c]);
        const double l = weight(int(t)) * dist[t] + 2.0 * qx.fine[t];
        const double r = dist[0] + 2.0 * qz.fine[t] - 2.0 * qg.fine[t] + 2.0 * qf.fine[t];
        const double lc = weight(int(t)) * dist[t] + 2.0 * qx.coarse[t];
        const double rc = dist[0] + 2.0 * qz.coarse[t] - 2.0 * qg.coarse[t] + 2.0 * qf.coarse[t];
        lhs[c][std::size_t(p)] = l;
        rhs[c][std::size_t(p)] = r;
        coarse_margin[c][std::size_t(p)] = rc - lc;
      }
    } catch (...) {
      errors[std::size_t(p)] = std::current_exception();
    }
  }
  rethrow_first(errors);

  SVIReport rep;
  rep.kind = "variational";
  rep.test_name = Z.name;
  rep.C = C;
  rep.n_paths = P;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    std::vector<double> margin(static_cast<std::size_t>(P));
    for (int p = 0; p < P; ++p)
      margin[std::size_t(p)] = rhs[c][std::size_t(p)] - lhs[c][std::size_t(p)];
    SVIRow row;
    row.step = checkpoints[c];
    row.t = dt * checkpoints[c];
    row.lhs = moments(lhs[c]).mean;
    row.rhs = moments(rhs[c]).mean;
    const Moments m = moments(margin);
    row.margin = m.mean;
    row.se = m.se;
    row.quad_error = std::abs(m.mean - moments(coarse_margin[c]).mean);
    row.pass = row_passes(row);
    rep.rows.push_back(row);
  }
  return rep;
}

void write_svi_csv(const SVIReport &r, const std::string &file) {
  std::ofstream out(file);
  if (!out)
    throw std::runtime_error("cannot write " + file);
  out << "checkpoint_t,lhs,rhs,margin,se,verdict\n";
  char buf[256];
  for (const auto &row : r.rows) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%s", row.t, row.lhs, row.rhs,
                  row.margin, row.se, row.pass ? "pass" : "fail");
    out << buf << '\n';
  }
  out << "# " << r.kind << " C=" << r.C;
  if (r.kind == "energy")
    out << " c_min=" << r.c_min;
  else
    out << " test=" << r.test_name;
  out << " paths=" << r.n_paths << '\n';
  if (!out)
    throw std::runtime_error("write failed for " + file);
}

std::vector<TestFunctional> standard_dictionary(const Grid &grid, SpaceTag tag, double horizon) {
  require(horizon > 0.0, "horizon must be positive");
  constexpr double pi = std::numbers::pi;
  std::vector<std::pair<int, int>> modes;
  if (grid.dim() == 1)
    for (int k = 0; k < 8; ++k)
      modes.emplace_back(k, 0);
  else
    modes = {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 0}, {0, 2}, {2, 1}, {1, 2}};
  const double Lx = grid.extent(0), Ly = grid.extent(1);
  std::vector<TestFunctional> out;
  for (auto [a, b] : modes) {
    const auto h = GridFunction::sample(
        grid, [&](double x, double y) { return std::cos(a * pi * x / Lx) * std::cos(b * pi * y / Ly); },
        tag);
    for (int d = 0; d < 4; ++d)
      out.push_back({"cos" + std::to_string(a) + "_" + std::to_string(b) + "_t" + std::to_string(d), h,
                     [d, horizon](double t) { return std::pow(t / horizon, d); }});
  }
  return out;
}

WeakMetric weak_metric_detail(const TrajectoryEnsemble &a, const TrajectoryEnsemble &b,
                              const std::vector<TestFunctional> &dict) {
  require(!dict.empty(), "empty test-functional dictionary");
  require(a.n_paths() > 0 && b.n_paths() > 0, "empty ensemble");
  require(a.grid == b.grid && a.tag == b.tag, "ensembles use different settings");
  const double Ta = a.time(a.snapshots() - 1), Tb = b.time(b.snapshots() - 1);
  require(std::abs(Ta - Tb) <= 1e-12 * std::max(1.0, Ta), "ensembles have different horizons");
  for (const auto &f : dict)
    require(f.h.grid() == a.grid && f.h.tag() == a.tag, "test function has the wrong setting");

  auto pairings = [&](const TrajectoryEnsemble &e) {
    // out[j][p] = int gamma_j(t) (X_t, h_j) dt
    std::vector<std::vector<double>> out(dict.size(), std::vector<double>(std::size_t(e.n_paths())));
    for (int p = 0; p < e.n_paths(); ++p)
      for (int s = 0; s < e.snapshots(); ++s) {
        const GridFunction x = e.state(p, s);
        double w = 0.0;
        if (s > 0)
          w += 0.5 * (e.time(s) - e.time(s - 1));
        if (s + 1 < e.snapshots())
          w += 0.5 * (e.time(s + 1) - e.time(s));
        for (std::size_t j = 0; j < dict.size(); ++j)
          out[j][std::size_t(p)] += w * dict[j].gamma(e.time(s)) * inner(x, dict[j].h);
      }
    return out;
  };
  const auto pa = pairings(a), pb = pairings(b);

  WeakMetric m;
  m.paired = a.n_paths() == b.n_paths() && !a.noise.empty() && !b.noise.empty() &&
             a.noise.front().seed == b.noise.front().seed &&
             a.noise.front().modes == b.noise.front().modes;
  for (std::size_t j = 0; j < dict.size(); ++j) {
    double value, se;
    if (m.paired) {
      std::vector<double> d(pa[j].size());
      for (std::size_t p = 0; p < d.size(); ++p)
        d[p] = pa[j][p] - pb[j][p];
      const Moments md = moments(d);
      value = md.mean;
      se = md.se;
    } else {
      const Moments ma = moments(pa[j]), mb = moments(pb[j]);
      value = ma.mean - mb.mean;
      se = std::hypot(ma.se, mb.se);
    }
    m.pairings.push_back(value);
    m.se.push_back(se);
    m.value = std::max(m.value, std::abs(value));
  }
  return m;
}

double weak_convergence_metric(const TrajectoryEnsemble &a, const TrajectoryEnsemble &b,
                               const std::vector<TestFunctional> &dict) {
  return weak_metric_detail(a, b, dict).value;
}

} // namespace spdelab
