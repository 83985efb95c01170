#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "itc/flowstats.hpp"
#include "itc/ising.hpp"
#include "itc/mesosim.hpp"
#include "itc/network.hpp"
#include "itc/solvers.hpp"

namespace itc {

enum class ControllerKind { ampic, local, random, pattern };

ControllerKind controller_from_name(const std::string& name);
std::string controller_name(ControllerKind kind);

/// One control decision: the signal states applied now, plus the full
/// optimized horizon when the decision came from a solver.
struct SignalPlan {
  std::vector<int> sigma;         // per controlled intersection, +-1
  std::vector<int> horizon_plan;  // n * k_h spins; equals sigma for baselines
  double solve_energy = 0.0;
  double solve_seconds = 0.0;  // diagnostic only, kept out of result files
};

struct ControllerConfig {
  ControllerKind kind = ControllerKind::ampic;
  SolverKind solver = SolverKind::sa;
  SolverConfig solver_cfg;
  int k_h = 1;
  double tau = 60.0;           // seconds between decisions
  std::vector<double> q_diag;  // empty = identity weights
  double flip_prob = 0.5;      // random baseline switching probability
  // Pooled rates overstate per-road net drift, so the predictor treats
  // demand as stationary unless this is set.
  bool drift_term = false;

  void validate() const;
};

/// Model-predictive step: estimate the bias, compile the horizon objective,
/// minimize it, apply the first block of the plan. When previous signal
/// states are given, applied spins revert to them wherever that does not
/// raise the objective.
SignalPlan ampic_step(const RoadNetwork& net, const FlowStats& stats,
                      const TrafficSnapshot& snapshot,
                      const ControllerConfig& cfg, uint64_t solver_seed,
                      const std::vector<int>* previous = nullptr);

/// sigma_i follows the sign of x_i and holds the previous state at zero.
std::vector<int> local_step(const std::vector<double>& x,
                            const std::vector<int>& previous);

/// Each signal flips independently with probability flip_prob.
std::vector<int> random_step(const std::vector<int>& previous,
                             double flip_prob, std::mt19937_64& rng);

/// Synchronized square wave: all signals flip every second cycle, so the
/// pattern repeats every four cycles.
std::vector<int> pattern_step(int n, int cycle_index);

/// Stateful wrapper owning the previous plan, the cycle counter, and the
/// controller's random stream. All controllers start from all +1.
class Controller {
 public:
  Controller(const RoadNetwork& net, const ControllerConfig& cfg,
             uint64_t seed);

  /// Advances one control cycle and returns the applied signal states.
  const std::vector<int>& decide(const TrafficSnapshot& snapshot,
                                 const FlowStats& stats);

  const std::vector<int>& sigma() const { return sigma_; }
  const SignalPlan& last_plan() const { return plan_; }
  int cycle() const { return cycle_; }
  const ControllerConfig& config() const { return cfg_; }

 private:
  const RoadNetwork* net_;
  ControllerConfig cfg_;
  uint64_t seed_;
  std::vector<int> sigma_;
  SignalPlan plan_;
  std::mt19937_64 rng_;
  int cycle_ = 0;
};

}  // namespace itc
