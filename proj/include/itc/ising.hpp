#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "itc/flowstats.hpp"
#include "itc/mesosim.hpp"
#include "itc/network.hpp"

namespace itc {

/// Linear prediction of the bias vector over the control horizon:
/// x(t+tau) = x(t) + A*tau*sigma(t) + b*tau, one row per controlled
/// intersection.
struct InternalModel {
  int n = 0;       // controlled intersections
  int k_h = 1;     // horizon in control cycles
  double tau = 60.0;
  std::vector<double> a;       // n x n row-major
  std::vector<double> b;       // n
  std::vector<double> q_diag;  // n, positive weights
  std::vector<int> node_ids;   // external id per row

  double a_at(int i, int j) const { return a[static_cast<size_t>(i) * n + j]; }
  double a_tilde(int i, int j) const { return a_at(i, j) * tau; }
  double b_tilde(int i) const { return b[i] * tau; }
};

/// Quadratic +-1 objective: energy(sigma) =
/// sum_{g<g'} J_{gg'} sigma_g sigma_g' + sum_g h_g sigma_g + offset.
struct IsingInstance {
  int n = 0;  // spins = controlled intersections * horizon
  double offset = 0.0;
  std::vector<double> h;
  std::vector<std::tuple<int, int, double>> couplings;  // (g, g', J), g < g'
};

/// Spin layout: g = cycle * n + intersection; cycle 0 is the decision applied
/// now.
inline int spin_index(int cycle, int intersection, int n) {
  return cycle * n + intersection;
}

double energy(const IsingInstance& inst, const std::vector<int>& sigma);

/// x_i = sum over approaches of eta * s * count, per controlled intersection.
std::vector<double> compute_bias_vector(const RoadNetwork& net,
                                        const TrafficSnapshot& snapshot);

/// Assembles A and b from the current flow estimates:
/// Per-second balance of each approach, averaged over the two phases:
/// A_ii = -sum_j eta_ij * o_delta_ij / 2, A_ij = eta_ij * s_ij * a_delta_ij
/// / 2 on roads (i,j), b_i = sum_j eta_ij * s_ij * (a_bar_ij - o_bar_ij) / 2.
/// A green approach then drains at o_g for the whole cycle and a red one
/// not at all.
InternalModel build_internal_model(const RoadNetwork& net,
                                   const FlowStats& stats, double tau, int k_h,
                                   const std::vector<double>& q_diag = {});

/// Iterates the difference equation; returns x after 1..k_h cycles.
/// sigma_seq must hold k_h vectors of dimension n.
std::vector<std::vector<double>> predict_bias(
    const InternalModel& model, const std::vector<double>& x0,
    const std::vector<std::vector<int>>& sigma_seq);

/// Expands sum_{m=1..k_h} x(t+m tau)^T Q x(t+m tau) into (J, h, offset) over
/// the stacked decision vector; exact for every sigma.
IsingInstance compile_ising(const InternalModel& model,
                            const std::vector<double>& x0);

/// Plain-text instance form: "n", "offset", "h i v", "J i j v" lines.
std::string instance_to_text(const IsingInstance& inst);
IsingInstance instance_from_text(const std::string& text);
void save_instance(const IsingInstance& inst, const std::string& path);
IsingInstance load_instance(const std::string& path);

}  // namespace itc
