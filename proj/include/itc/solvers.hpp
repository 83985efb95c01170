#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itc/ising.hpp"

namespace itc {

struct SolveResult {
  std::vector<int> sigma;
  double energy = 0.0;  // recomputed from sigma, never the running estimate
  int reads = 0;        // restarts or chains actually run
};

struct SolverConfig {
  int num_reads = 1000;   // greedy restarts / annealing chains
  int sweeps = 1000;      // per annealing chain
  double beta_min = 0.1;   // ramp start, relative to the largest single-flip
  double beta_max = 10.0;  // energy; ramp end, to the smallest coefficient
  uint64_t seed = 1;

  void validate() const;
};

enum class SolverKind { exact, greedy, sa };

SolverKind solver_from_name(const std::string& name);
std::string solver_name(SolverKind kind);

/// Exhaustive enumeration, feasible up to 24 spins. Ties resolve to the
/// lexicographically smallest configuration (-1 before +1, position 0 most
/// significant).
SolveResult solve_exact(const IsingInstance& inst);

/// Steepest-descent local search from num_reads random starts. Each read
/// flips the spin with the most negative energy change (lowest index on
/// ties) until no flip improves.
SolveResult solve_greedy(const IsingInstance& inst, const SolverConfig& cfg);

/// Metropolis simulated annealing, num_reads independent chains with a
/// geometric beta ramp, each chain closed by a steepest descent to the
/// minimum of its final basin. Chains are seeded by (seed, chain) so the
/// result is reproducible regardless of scheduling.
SolveResult solve_sa(const IsingInstance& inst, const SolverConfig& cfg);

SolveResult solve(SolverKind kind, const IsingInstance& inst,
                  const SolverConfig& cfg);

}  // namespace itc
