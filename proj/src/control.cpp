#include "itc/control.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "itc/rng.hpp"

namespace itc {

namespace {
constexpr uint64_t kControllerStreamTag = 0xC0117801;
}

ControllerKind controller_from_name(const std::string& name) {
  if (name == "ampic") return ControllerKind::ampic;
  if (name == "local") return ControllerKind::local;
  if (name == "random") return ControllerKind::random;
  if (name == "pattern") return ControllerKind::pattern;
  throw std::invalid_argument(
      "unknown controller '" + name +
      "' (expected ampic, local, random, or pattern)");
}

std::string controller_name(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::ampic: return "ampic";
    case ControllerKind::local: return "local";
    case ControllerKind::random: return "random";
    case ControllerKind::pattern: return "pattern";
  }
  throw std::invalid_argument("unknown controller kind");
}

void ControllerConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (k_h < 1) throw std::invalid_argument("k_h must be at least 1");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) {
    throw std::invalid_argument("flip_prob must lie in [0, 1]");
  }
  solver_cfg.validate();
}

SignalPlan ampic_step(const RoadNetwork& net, const FlowStats& stats,
                      const TrafficSnapshot& snapshot,
                      const ControllerConfig& cfg, uint64_t solver_seed,
                      const std::vector<int>* previous) {
  const auto start = std::chrono::steady_clock::now();
  InternalModel model =
      build_internal_model(net, stats, cfg.tau, cfg.k_h, cfg.q_diag);
  if (!cfg.drift_term) std::fill(model.b.begin(), model.b.end(), 0.0);
  std::vector<double> x0 = compute_bias_vector(net, snapshot);
  IsingInstance inst = compile_ising(model, x0);
  SolverConfig solver_cfg = cfg.solver_cfg;
  solver_cfg.seed = solver_seed;
  SolveResult result = solve(cfg.solver, inst, solver_cfg);

  if (previous && static_cast<int>(previous->size()) == model.n) {
    // Intersections the objective is indifferent about keep their state
    // instead of following solver tie-breaking.
    for (int i = 0; i < model.n; ++i) {
      if (result.sigma[i] == (*previous)[i]) continue;
      result.sigma[i] = (*previous)[i];
      const double held = energy(inst, result.sigma);
      if (held <= result.energy) {
        result.energy = held;
      } else {
        result.sigma[i] = -(*previous)[i];
      }
    }
  }

  SignalPlan plan;
  plan.horizon_plan = result.sigma;
  plan.sigma.assign(result.sigma.begin(), result.sigma.begin() + model.n);
  plan.solve_energy = result.energy;
  plan.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return plan;
}

std::vector<int> local_step(const std::vector<double>& x,
                            const std::vector<int>& previous) {
  if (x.size() != previous.size()) {
    throw std::invalid_argument("local_step: bias and state sizes differ");
  }
  std::vector<int> sigma(previous);
  for (size_t i = 0; i < x.size(); ++i) {
    if (x[i] > 0.0) sigma[i] = 1;
    if (x[i] < 0.0) sigma[i] = -1;
  }
  return sigma;
}

std::vector<int> random_step(const std::vector<int>& previous,
                             double flip_prob, std::mt19937_64& rng) {
  std::vector<int> sigma(previous);
  for (auto& s : sigma) {
    if (next_unit(rng) < flip_prob) s = -s;
  }
  return sigma;
}

std::vector<int> pattern_step(int n, int cycle_index) {
  const int phase = (cycle_index / 2) % 2 == 0 ? 1 : -1;
  return std::vector<int>(n, phase);
}

Controller::Controller(const RoadNetwork& net, const ControllerConfig& cfg,
                       uint64_t seed)
    : net_(&net),
      cfg_(cfg),
      seed_(seed),
      sigma_(net.controlled_count(), 1),
      rng_(mix64(seed, kControllerStreamTag)) {
  cfg_.validate();
  plan_.sigma = sigma_;
  plan_.horizon_plan = sigma_;
}

const std::vector<int>& Controller::decide(const TrafficSnapshot& snapshot,
                                           const FlowStats& stats) {
  switch (cfg_.kind) {
    case ControllerKind::ampic:
      plan_ = ampic_step(*net_, stats, snapshot, cfg_, mix64(seed_, cycle_),
                         &sigma_);
      break;
    case ControllerKind::local: {
      plan_ = SignalPlan{};
      plan_.sigma = local_step(compute_bias_vector(*net_, snapshot), sigma_);
      plan_.horizon_plan = plan_.sigma;
      break;
    }
    case ControllerKind::random:
      plan_ = SignalPlan{};
      plan_.sigma = random_step(sigma_, cfg_.flip_prob, rng_);
      plan_.horizon_plan = plan_.sigma;
      break;
    case ControllerKind::pattern:
      plan_ = SignalPlan{};
      plan_.sigma = pattern_step(net_->controlled_count(), cycle_);
      plan_.horizon_plan = plan_.sigma;
      break;
  }
  sigma_ = plan_.sigma;
  ++cycle_;
  return sigma_;
}

}  // namespace itc
