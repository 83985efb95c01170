#pragma once

#include <string>
#include <tuple>
#include <vector>

#include "itc/mesosim.hpp"
#include "itc/network.hpp"

namespace itc {

/// Adaptive flow estimates feeding the internal traffic model: a pooled
/// outflow rate over green seconds, turning probabilities per road pair, and
/// per-road inflow rates split by the releasing signal phase.
struct FlowStats {
  double prior = 0.5;  // outflow fallback until green time accrues
  double o_g = 0.5;    // pooled vehicles per green second
  double o_r = 0.0;    // red-phase outflow; zero without turn lanes

  std::vector<double> t_green;  // per road: green seconds seen
  std::vector<double> n_exit;   // per road: stop-line crossings seen
  double t_green_total = 0.0;
  double n_exit_total = 0.0;

  // Both indexed [road][slot], slot = position of the downstream road in
  // net.outgoing(road.to).
  std::vector<std::vector<double>> turn_count;
  std::vector<std::vector<double>> p_turn;

  std::vector<double> a0;  // per road: inflow rate while sigma_from = +1
  std::vector<double> a1;  // per road: inflow rate while sigma_from = -1
};

FlowStats make_flow_stats(const RoadNetwork& net, double prior);

/// Accumulates one second of observations and refreshes the pooled rate.
/// Only approaches of signalized intersections count; free-flowing roads
/// would dilute the green-second pool.
void update_outflow(FlowStats& stats, const RoadNetwork& net,
                    const std::vector<char>& green,
                    const std::vector<int>& departures);

/// Fills p_turn from complete routes known ahead of the run.
void compute_turning_probs(FlowStats& stats, const RoadNetwork& net,
                           const std::vector<std::vector<int>>& routes);
void compute_turning_probs(FlowStats& stats, const RoadNetwork& net,
                           const SpawnSchedule& schedule);

/// Online alternative: count link changes as they are observed, then
/// normalize.
void record_transition(FlowStats& stats, const RoadNetwork& net, int from_road,
                       int to_road, double count = 1.0);
void refresh_turning(FlowStats& stats, const RoadNetwork& net);

/// Cycle-aggregated form of the per-second updates, for coupled runs that
/// only exchange observations at control instants: sigma was held for
/// `seconds`, stop-line crossings arrive as per-road totals and turns as
/// (from_road, to_road, count) triples. Produces the same totals as calling
/// update_outflow and record_transition every second.
void apply_cycle_observations(
    FlowStats& stats, const RoadNetwork& net, const std::vector<int>& sigma,
    int seconds, const std::vector<long>& exit_counts,
    const std::vector<std::tuple<int, int, long>>& transitions);

/// a0/a1 per road from the pooled outflow and turning probabilities. An
/// upstream approach contributes to the phase that shows it green; approaches
/// of unsignalized intersections flow in both phases.
void compute_inflow(FlowStats& stats, const RoadNetwork& net);

/// Probability that a vehicle leaving from_road continues onto to_road.
double turning_prob(const FlowStats& stats, const RoadNetwork& net,
                    int from_road, int to_road);

inline double a_bar(const FlowStats& s, int road) {
  return s.a0[road] + s.a1[road];
}
inline double a_delta(const FlowStats& s, int road) {
  return s.a0[road] - s.a1[road];
}
/// Outflow sum and difference across the two phases. Roads into unsignalized
/// intersections see no phase modulation.
double o_bar(const FlowStats& s, const RoadNetwork& net, int road);
double o_delta(const FlowStats& s, const RoadNetwork& net, int road);

/// Diagnostic CSV: t, o_g, a0 min/max, a1 min/max.
std::string flow_csv_header();
std::string flow_csv_row(int t, const FlowStats& stats);

}  // namespace itc
