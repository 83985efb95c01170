#include "itc/solvers.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "itc/rng.hpp"

namespace itc {

namespace {

struct Adjacency {
  std::vector<int> offset;  // n + 1
  std::vector<int> nbr;
  std::vector<double> w;
  double scale = 1.0;  // max coefficient magnitude, >= 1
};

Adjacency build_adjacency(const IsingInstance& inst) {
  if (static_cast<int>(inst.h.size()) != inst.n) {
    throw std::invalid_argument("instance field vector has wrong length");
  }
  Adjacency adj;
  adj.offset.assign(inst.n + 1, 0);
  for (const auto& [g1, g2, v] : inst.couplings) {
    if (g1 < 0 || g2 < 0 || g1 >= inst.n || g2 >= inst.n || g1 == g2) {
      throw std::invalid_argument("instance coupling indices out of range");
    }
    ++adj.offset[g1 + 1];
    ++adj.offset[g2 + 1];
    adj.scale = std::max(adj.scale, std::fabs(v));
  }
  for (double hg : inst.h) adj.scale = std::max(adj.scale, std::fabs(hg));
  for (int g = 0; g < inst.n; ++g) adj.offset[g + 1] += adj.offset[g];
  adj.nbr.resize(adj.offset[inst.n]);
  adj.w.resize(adj.offset[inst.n]);
  std::vector<int> cursor(adj.offset.begin(), adj.offset.end() - 1);
  for (const auto& [g1, g2, v] : inst.couplings) {
    adj.nbr[cursor[g1]] = g2;
    adj.w[cursor[g1]++] = v;
    adj.nbr[cursor[g2]] = g1;
    adj.w[cursor[g2]++] = v;
  }
  return adj;
}

std::vector<double> local_fields(const IsingInstance& inst,
                                 const Adjacency& adj,
                                 const std::vector<int>& sigma) {
  std::vector<double> f(inst.h);
  for (int g = 0; g < inst.n; ++g) {
    for (int k = adj.offset[g]; k < adj.offset[g + 1]; ++k) {
      f[g] += adj.w[k] * sigma[adj.nbr[k]];
    }
  }
  return f;
}

bool lex_less(const std::vector<int>& a, const std::vector<int>& b) {
  for (size_t g = 0; g < a.size(); ++g) {
    if (a[g] != b[g]) return a[g] < b[g];
  }
  return false;
}

/// Keeps the lowest energy seen; exact energy ties go to the
/// lexicographically smaller configuration.
void keep_best(std::vector<int>& best_sigma, double& best_energy,
               const std::vector<int>& sigma, double energy) {
  if (energy < best_energy ||
      (energy == best_energy && lex_less(sigma, best_sigma))) {
    best_energy = energy;
    best_sigma = sigma;
  }
}

std::vector<int> random_sigma(std::mt19937_64& rng, int n) {
  std::vector<int> sigma(n);
  for (auto& s : sigma) s = next_below(rng, 2) ? 1 : -1;
  return sigma;
}

void descend(const IsingInstance& inst, const Adjacency& adj,
             std::vector<int>& sigma) {
  std::vector<double> f = local_fields(inst, adj, sigma);
  const double eps = 1e-9 * adj.scale;
  const long max_flips = 100L * inst.n + 100;
  for (long flips = 0; flips < max_flips; ++flips) {
    int best_g = -1;
    double best_delta = -eps;
    for (int g = 0; g < inst.n; ++g) {
      const double delta = -2.0 * sigma[g] * f[g];
      if (delta < best_delta) {
        best_delta = delta;
        best_g = g;
      }
    }
    if (best_g < 0) return;
    sigma[best_g] = -sigma[best_g];
    for (int k = adj.offset[best_g]; k < adj.offset[best_g + 1]; ++k) {
      f[adj.nbr[k]] += 2.0 * adj.w[k] * sigma[best_g];
    }
  }
}

}  // namespace

void SolverConfig::validate() const {
  if (num_reads < 1) throw std::invalid_argument("num_reads must be >= 1");
  if (sweeps < 1) throw std::invalid_argument("sweeps must be >= 1");
  if (!(beta_min > 0.0) || !(beta_max >= beta_min)) {
    throw std::invalid_argument("need 0 < beta_min <= beta_max");
  }
}

SolverKind solver_from_name(const std::string& name) {
  if (name == "exact") return SolverKind::exact;
  if (name == "greedy") return SolverKind::greedy;
  if (name == "sa") return SolverKind::sa;
  throw std::invalid_argument("unknown solver '" + name +
                              "' (expected exact, greedy, or sa)");
}

std::string solver_name(SolverKind kind) {
  switch (kind) {
    case SolverKind::exact: return "exact";
    case SolverKind::greedy: return "greedy";
    case SolverKind::sa: return "sa";
  }
  throw std::invalid_argument("unknown solver kind");
}

SolveResult solve_exact(const IsingInstance& inst) {
  if (inst.n > 24) {
    throw std::invalid_argument("exact solver supports at most 24 spins, got " +
                                std::to_string(inst.n));
  }
  Adjacency adj = build_adjacency(inst);
  if (inst.n == 0) return {{}, inst.offset, 1};

  std::vector<int> sigma(inst.n, -1);
  std::vector<int> best_sigma = sigma;
  double e = energy(inst, sigma);
  double best_energy = e;
  const uint32_t states = 1u << inst.n;
  for (uint32_t mask = 1; mask < states; ++mask) {
    if ((mask & 0xFFFFu) == 0) e = energy(inst, sigma);
    uint32_t toggled = mask ^ (mask - 1);
    for (int g = 0; toggled != 0; ++g, toggled >>= 1) {
      if ((toggled & 1u) == 0) continue;
      double f = inst.h[g];
      for (int k = adj.offset[g]; k < adj.offset[g + 1]; ++k) {
        f += adj.w[k] * sigma[adj.nbr[k]];
      }
      e += -2.0 * sigma[g] * f;
      sigma[g] = -sigma[g];
    }
    keep_best(best_sigma, best_energy, sigma, e);
  }
  return {best_sigma, energy(inst, best_sigma), 1};
}

SolveResult solve_greedy(const IsingInstance& inst, const SolverConfig& cfg) {
  cfg.validate();
  Adjacency adj = build_adjacency(inst);
  if (inst.n == 0) return {{}, inst.offset, cfg.num_reads};

  std::vector<int> best_sigma;
  double best_energy = 0.0;
  for (int read = 0; read < cfg.num_reads; ++read) {
    std::mt19937_64 rng(mix64(cfg.seed, read));
    std::vector<int> sigma = random_sigma(rng, inst.n);
    descend(inst, adj, sigma);
    const double e = energy(inst, sigma);
    if (read == 0) {
      best_sigma = sigma;
      best_energy = e;
    } else {
      keep_best(best_sigma, best_energy, sigma, e);
    }
  }
  return {best_sigma, best_energy, cfg.num_reads};
}

SolveResult solve_sa(const IsingInstance& inst, const SolverConfig& cfg) {
  cfg.validate();
  Adjacency adj = build_adjacency(inst);
  if (inst.n == 0) return {{}, inst.offset, cfg.num_reads};

  // The ramp is rescaled per instance: it starts hot relative to the largest
  // single-flip energy and ends cold relative to the smallest coefficient
  // within six orders of that, so the sweeps cool through the scales that
  // carry energy. Smaller coefficients are cancellation residue; they are
  // resolved by the closing descent, not the ramp.
  double hot = 0.0;
  for (int g = 0; g < inst.n; ++g) {
    double m = std::fabs(inst.h[g]);
    for (int k = adj.offset[g]; k < adj.offset[g + 1]; ++k) {
      m += std::fabs(adj.w[k]);
    }
    hot = std::max(hot, m);
  }
  double cold = 0.0;
  auto fold_cold = [&cold](double v) {
    v = std::fabs(v);
    if (v > 0.0 && (cold == 0.0 || v < cold)) cold = v;
  };
  for (double hg : inst.h) fold_cold(hg);
  for (const auto& [g1, g2, v] : inst.couplings) fold_cold(v);
  cold = std::max(cold, hot * 1e-6);

  double beta_start = cfg.beta_min;
  double beta_end = cfg.beta_max;
  if (hot > 0.0) {
    beta_start /= hot;
    beta_end /= cold;
  }
  std::vector<double> beta(cfg.sweeps, beta_start);
  for (int k = 1; k < cfg.sweeps; ++k) {
    beta[k] = beta_start * std::pow(beta_end / beta_start,
                                    static_cast<double>(k) / (cfg.sweeps - 1));
  }

  std::vector<int> best_sigma;
  double best_energy = 0.0;
  for (int chain = 0; chain < cfg.num_reads; ++chain) {
    std::mt19937_64 rng(mix64(cfg.seed, chain));
    std::vector<int> sigma = random_sigma(rng, inst.n);
    std::vector<double> f = local_fields(inst, adj, sigma);
    for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
      const double b = beta[sweep];
      for (int g = 0; g < inst.n; ++g) {
        const double delta = -2.0 * sigma[g] * f[g];
        if (delta > 0.0 && next_unit(rng) >= std::exp(-b * delta)) continue;
        sigma[g] = -sigma[g];
        for (int k = adj.offset[g]; k < adj.offset[g + 1]; ++k) {
          f[adj.nbr[k]] += 2.0 * adj.w[k] * sigma[g];
        }
      }
    }
    descend(inst, adj, sigma);
    const double e = energy(inst, sigma);
    if (chain == 0) {
      best_sigma = sigma;
      best_energy = e;
    } else {
      keep_best(best_sigma, best_energy, sigma, e);
    }
  }
  return {best_sigma, best_energy, cfg.num_reads};
}

SolveResult solve(SolverKind kind, const IsingInstance& inst,
                  const SolverConfig& cfg) {
  switch (kind) {
    case SolverKind::exact: return solve_exact(inst);
    case SolverKind::greedy: return solve_greedy(inst, cfg);
    case SolverKind::sa: return solve_sa(inst, cfg);
  }
  throw std::invalid_argument("unknown solver kind");
}

}  // namespace itc
