#ifndef SPDELAB_MOSCO_HPP
#define SPDELAB_MOSCO_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "spdelab/potentials.hpp"

namespace spdelab {

/// |prox(a, lambda, f) - prox(b, lambda, f)|_H.
double resolvent_distance(const Potential &a, const Potential &b, const GridFunction &f,
                          double lambda, const ProxOptions &opts = {});

struct ConditionN {
  bool ok = true;
  /// Largest |prox(pot, lambda, 0)|_H seen.
  double worst = 0.0;
  std::string warning;
};

/// Checks prox(pot, lambda, 0) = 0 for lambda in {0.1, 1, 10}, every pot in
/// the sequence and the target. An empty sequence passes with a warning.
ConditionN condition_n_check(const std::vector<Potential> &pots, const Potential &target,
                             double tol = 1e-8);

struct Probe {
  std::string id;
  GridFunction f;
};

/// Default probe set: smooth trigonometric fields, piecewise constants and
/// seeded Gaussian fields, in the given geometry.
std::vector<Probe> standard_probes(const Grid &grid, SpaceTag tag, int count = 16,
                                   std::uint64_t seed = 2024);

enum class TrendVerdict { Converging, AtLimit, NotConverging };
const char *to_string(TrendVerdict v);

/// Verdict for one distance sequence: AtLimit when every entry is below
/// floor, Converging when the last is at most half the first and no entry
/// exceeds its predecessor by more than 10%.
TrendVerdict classify_trend(const std::vector<double> &d, double floor = 1e-9);

struct MoscoReport {
  std::string probe_description;
  std::vector<double> parameters;
  std::vector<std::string> probe_ids;
  std::vector<double> lambdas;
  /// distance[(n * probes + j) * lambdas + l].
  std::vector<double> distances;
  bool condition_n_ok = true;
  std::string condition_n_warning;
  /// Per probe: Converging only if every lambda column converges.
  std::vector<TrendVerdict> verdicts;
  /// Per n: max over probes of (eval_n(probe) - eval_target(probe))^+.
  std::vector<double> limsup_gap;
  /// Per n: max over probes of eval_n / (1 + eval_target + |probe|^2).
  std::vector<double> growth_ratio;

  double distance(std::size_t n, std::size_t probe, std::size_t lambda) const {
    return distances[(n * probe_ids.size() + probe) * lambdas.size() + lambda];
  }
  int converging_probes() const;
  std::string summary() const;
};

/// Resolvent distances of a sequence against a target over probes and
/// step sizes. parameters label the rows (defaults to 1, 2, ...).
MoscoReport mosco_trend(const std::vector<Potential> &pots, const Potential &target,
                        const std::vector<Probe> &probes, const std::vector<double> &lambdas,
                        std::vector<double> parameters = {}, const ProxOptions &opts = {});

/// CSV columns n,probe_id,lambda,distance, followed by a '#' summary line.
void write_mosco_csv(const MoscoReport &r, const std::string &file);

/// |prox(pot, 1, f)|_{H1} / |f|_{H1} for an L2 gradient family.
double h1_resolvent_bound_check(const Potential &pot, const GridFunction &f,
                                const ProxOptions &opts = {});

} // namespace spdelab

#endif
