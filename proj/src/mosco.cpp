#include "spdelab/mosco.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "spdelab/error.hpp"
#include "spdelab/rng.hpp"

namespace spdelab {

namespace {

constexpr double kPi = std::numbers::pi;

void check_same_setting(const Potential &a, const Potential &b) {
  require(a.grid() == b.grid(), "potentials use different grids");
  require(a.geometry() == b.geometry(), "potentials use different Hilbert geometries");
}

} // namespace

double resolvent_distance(const Potential &a, const Potential &b, const GridFunction &f,
                          double lambda, const ProxOptions &opts) {
  check_same_setting(a, b);
  require(f.tag() == a.geometry(), "probe must be tagged with the potentials' geometry");
  return norm(prox(a, lambda, f, opts).minimizer - prox(b, lambda, f, opts).minimizer);
}

ConditionN condition_n_check(const std::vector<Potential> &pots, const Potential &target,
                             double tol) {
  ConditionN out;
  if (pots.empty())
    out.warning = "empty potential sequence: condition (N) holds vacuously";
  std::vector<const Potential *> all{&target};
  for (const auto &p : pots) {
    check_same_setting(p, target);
    all.push_back(&p);
  }
  for (const Potential *p : all) {
    const GridFunction zero(p->grid(), p->geometry());
    for (double lambda : {0.1, 1.0, 10.0}) {
      const double r = norm(prox(*p, lambda, zero).minimizer);
      out.worst = std::max(out.worst, r);
      if (!(r <= tol))
        out.ok = false;
    }
  }
  return out;
}

std::vector<Probe> standard_probes(const Grid &grid, SpaceTag tag, int count,
                                   std::uint64_t seed) {
  require(count >= 3, "need at least three probes");
  const int smooth = (count + 2) / 3;
  const int pieces = (count - smooth + 1) / 2;
  const int gauss = count - smooth - pieces;
  std::vector<Probe> out;
  const double Lx = grid.extent(0), Ly = grid.extent(1);
  for (int k = 0; k < smooth; ++k) {
    const int a = 1 + k % 3, b = k / 3;
    const double amp = 1.0 + 0.5 * k;
    auto f = GridFunction::sample(
        grid,
        [&](double x, double y) {
          const double s = k % 2 ? std::sin(a * kPi * x / Lx) : std::cos(a * kPi * x / Lx);
          return amp * s * std::cos(b * kPi * y / Ly);
        },
        tag);
    out.push_back({"smooth" + std::to_string(k), f});
  }
  for (int k = 0; k < pieces; ++k) {
    const int parts = 2 + k;
    std::vector<double> level(static_cast<std::size_t>(parts));
    for (int j = 0; j < parts; ++j)
      level[std::size_t(j)] = 2.0 * keyed_normal(seed, 1, std::uint64_t(k), std::uint64_t(j));
    auto f = GridFunction::sample(
        grid,
        [&](double x, double) {
          const int j = std::min(parts - 1, int(x / Lx * parts));
          return level[std::size_t(j)];
        },
        tag);
    out.push_back({"piecewise" + std::to_string(k), f});
  }
  for (int k = 0; k < gauss; ++k) {
    Vector v(grid.size());
    for (Index i = 0; i < grid.size(); ++i)
      v[i] = keyed_normal(seed, 2, std::uint64_t(k), std::uint64_t(i));
    out.push_back({"gaussian" + std::to_string(k), GridFunction(grid, v, tag)});
  }
  return out;
}

const char *to_string(TrendVerdict v) {
  switch (v) {
  case TrendVerdict::Converging:
    return "converging";
  case TrendVerdict::AtLimit:
    return "at_limit";
  case TrendVerdict::NotConverging:
    return "not_converging";
  }
  return "?";
}

TrendVerdict classify_trend(const std::vector<double> &d, double floor) {
  if (d.empty())
    return TrendVerdict::NotConverging;
  bool all_small = true;
  for (double x : d)
    all_small = all_small && x <= floor;
  if (all_small)
    return TrendVerdict::AtLimit;
  if (d.size() < 2 || !(d.back() <= 0.5 * d.front()))
    return TrendVerdict::NotConverging;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i] > 1.1 * d[i - 1] + floor)
      return TrendVerdict::NotConverging;
  return TrendVerdict::Converging;
}

int MoscoReport::converging_probes() const {
  int n = 0;
  for (auto v : verdicts)
    n += v != TrendVerdict::NotConverging;
  return n;
}

std::string MoscoReport::summary() const {
  std::ostringstream os;
  os << "converging " << converging_probes() << "/" << verdicts.size() << " probes ("
     << probe_description << "); condition_N " << (condition_n_ok ? "ok" : "violated");
  return os.str();
}

MoscoReport mosco_trend(const std::vector<Potential> &pots, const Potential &target,
                        const std::vector<Probe> &probes, const std::vector<double> &lambdas,
                        std::vector<double> parameters, const ProxOptions &opts) {
  require(!probes.empty(), "need at least one probe");
  require(!lambdas.empty(), "need at least one step size");
  for (double l : lambdas)
    require(l > 0.0, "step sizes must be positive");
  if (parameters.empty())
    for (std::size_t n = 0; n < pots.size(); ++n)
      parameters.push_back(double(n + 1));
  require(parameters.size() == pots.size(), "one parameter label per potential");

  MoscoReport r;
  r.probe_description = std::to_string(probes.size()) + " sampled probes";
  r.parameters = parameters;
  r.lambdas = lambdas;
  for (const auto &p : probes) {
    require(p.f.tag() == target.geometry(), "probe must be tagged with the target's geometry");
    r.probe_ids.push_back(p.id);
  }
  const auto cn = condition_n_check(pots, target);
  r.condition_n_ok = cn.ok;
  r.condition_n_warning = cn.warning;

  const std::size_t P = probes.size(), L = lambdas.size(), N = pots.size();
  std::vector<GridFunction> ref(P * L);
  std::vector<double> target_energy(P);
  for (std::size_t j = 0; j < P; ++j) {
    target_energy[j] = eval(target, probes[j].f);
    for (std::size_t l = 0; l < L; ++l)
      ref[j * L + l] = prox(target, lambdas[l], probes[j].f, opts).minimizer;
  }
  r.distances.assign(N * P * L, 0.0);
  r.limsup_gap.assign(N, 0.0);
  r.growth_ratio.assign(N, 0.0);
  for (std::size_t n = 0; n < N; ++n) {
    check_same_setting(pots[n], target);
    for (std::size_t j = 0; j < P; ++j) {
      const double en = eval(pots[n], probes[j].f);
      r.limsup_gap[n] = std::max(r.limsup_gap[n], en - target_energy[j]);
      r.growth_ratio[n] =
          std::max(r.growth_ratio[n], en / (1.0 + target_energy[j] + norm_sq(probes[j].f)));
      for (std::size_t l = 0; l < L; ++l)
        r.distances[(n * P + j) * L + l] =
            norm(prox(pots[n], lambdas[l], probes[j].f, opts).minimizer - ref[j * L + l]);
    }
  }
  for (std::size_t j = 0; j < P; ++j) {
    TrendVerdict v = TrendVerdict::AtLimit;
    for (std::size_t l = 0; l < L; ++l) {
      std::vector<double> col(N);
      for (std::size_t n = 0; n < N; ++n)
        col[n] = r.distance(n, j, l);
      const TrendVerdict c = classify_trend(col);
      if (c == TrendVerdict::NotConverging)
        v = c;
      else if (c == TrendVerdict::Converging && v == TrendVerdict::AtLimit)
        v = c;
    }
    r.verdicts.push_back(v);
  }
  return r;
}

void write_mosco_csv(const MoscoReport &r, const std::string &file) {
  std::ofstream out(file);
  if (!out)
    throw std::runtime_error("cannot write " + file);
  out << "n,probe_id,lambda,distance\n";
  char buf[128];
  for (std::size_t n = 0; n < r.parameters.size(); ++n)
    for (std::size_t j = 0; j < r.probe_ids.size(); ++j)
      for (std::size_t l = 0; l < r.lambdas.size(); ++l) {
        std::snprintf(buf, sizeof buf, "%.17g,%s,%.17g,%.17g", r.parameters[n],
                      r.probe_ids[j].c_str(), r.lambdas[l], r.distance(n, j, l));
        out << buf << '\n';
      }
  out << "# " << r.summary() << '\n';
  if (!out)
    throw std::runtime_error("write failed for " + file);
}

double h1_resolvent_bound_check(const Potential &pot, const GridFunction &f,
                                const ProxOptions &opts) {
  require(pot.geometry() == SpaceTag::L2, "H1 resolvent bound applies to the L2 geometry");
  require(pot.family() == PotentialFamily::PDirichlet ||
              pot.family() == PotentialFamily::GeneralGradient,
          "H1 resolvent bound applies to local gradient families");
  const double nf = norm(f.retagged(SpaceTag::H1));
  require(nf > 0.0, "probe has zero H1 norm");
  return norm(prox(pot, 1.0, f, opts).minimizer.retagged(SpaceTag::H1)) / nf;
}

} // namespace spdelab
