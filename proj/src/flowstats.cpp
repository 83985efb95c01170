#include "itc/flowstats.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace itc {

namespace {

int slot_of(const RoadNetwork& net, int from_road, int to_road) {
  int node = net.node_index(net.roads()[from_road].to);
  const auto& out = net.outgoing(node);
  for (int i = 0; i < static_cast<int>(out.size()); ++i)
    if (out[i] == to_road) return i;
  return -1;
}

}  // namespace

FlowStats make_flow_stats(const RoadNetwork& net, double prior) {
  if (!(prior > 0.0)) throw std::invalid_argument("outflow prior must be > 0");
  FlowStats stats;
  stats.prior = prior;
  stats.o_g = prior;
  const int e = net.road_count();
  stats.t_green.assign(e, 0.0);
  stats.n_exit.assign(e, 0.0);
  stats.turn_count.resize(e);
  stats.p_turn.resize(e);
  for (int r = 0; r < e; ++r) {
    size_t fan = net.outgoing(net.node_index(net.roads()[r].to)).size();
    stats.turn_count[r].assign(fan, 0.0);
    stats.p_turn[r].assign(fan, 0.0);
  }
  stats.a0.assign(e, 0.0);
  stats.a1.assign(e, 0.0);
  return stats;
}

void update_outflow(FlowStats& stats, const RoadNetwork& net,
                    const std::vector<char>& green,
                    const std::vector<int>& departures) {
  for (int r = 0; r < net.road_count(); ++r) {
    const Road& road = net.roads()[r];
    if (net.controlled_index(net.node_index(road.to)) < 0) continue;
    if (!green[r]) continue;
    stats.t_green[r] += 1.0;
    stats.n_exit[r] += departures[r];
    stats.t_green_total += 1.0;
    stats.n_exit_total += departures[r];
  }
  stats.o_g = stats.t_green_total > 0.0
                  ? stats.n_exit_total / stats.t_green_total
                  : stats.prior;
}

void record_transition(FlowStats& stats, const RoadNetwork& net, int from_road,
                       int to_road, double count) {
  int slot = slot_of(net, from_road, to_road);
  if (slot < 0)
    throw std::invalid_argument("roads are not consecutive in the graph");
  stats.turn_count[from_road][slot] += count;
}

void apply_cycle_observations(
    FlowStats& stats, const RoadNetwork& net, const std::vector<int>& sigma,
    int seconds, const std::vector<long>& exit_counts,
    const std::vector<std::tuple<int, int, long>>& transitions) {
  if (seconds < 0) throw std::invalid_argument("cycle length must be >= 0");
  if (static_cast<int>(sigma.size()) != net.controlled_count() ||
      static_cast<int>(exit_counts.size()) != net.road_count()) {
    throw std::invalid_argument("cycle observation sizes do not match network");
  }
  for (int r = 0; r < net.road_count(); ++r) {
    const Road& road = net.roads()[r];
    int ctrl = net.controlled_index(net.node_index(road.to));
    if (ctrl < 0) continue;
    if (sigma[ctrl] * road.sign <= 0) continue;
    stats.t_green[r] += seconds;
    stats.n_exit[r] += exit_counts[r];
    stats.t_green_total += seconds;
    stats.n_exit_total += exit_counts[r];
  }
  stats.o_g = stats.t_green_total > 0.0
                  ? stats.n_exit_total / stats.t_green_total
                  : stats.prior;
  for (const auto& [from, to, count] : transitions) {
    record_transition(stats, net, from, to, static_cast<double>(count));
  }
}

void refresh_turning(FlowStats& stats, const RoadNetwork& net) {
  for (int r = 0; r < net.road_count(); ++r) {
    double total = 0.0;
    for (double c : stats.turn_count[r]) total += c;
    for (size_t i = 0; i < stats.turn_count[r].size(); ++i)
      stats.p_turn[r][i] = total > 0.0 ? stats.turn_count[r][i] / total : 0.0;
  }
}

void compute_turning_probs(FlowStats& stats, const RoadNetwork& net,
                           const std::vector<std::vector<int>>& routes) {
  for (auto& row : stats.turn_count) std::fill(row.begin(), row.end(), 0.0);
  for (const auto& route : routes)
    for (size_t i = 0; i + 1 < route.size(); ++i)
      record_transition(stats, net, route[i], route[i + 1]);
  refresh_turning(stats, net);
}

void compute_turning_probs(FlowStats& stats, const RoadNetwork& net,
                           const SpawnSchedule& schedule) {
  for (auto& row : stats.turn_count) std::fill(row.begin(), row.end(), 0.0);
  for (const SpawnEvent& event : schedule.events)
    for (size_t i = 0; i + 1 < event.route.size(); ++i)
      record_transition(stats, net, event.route[i], event.route[i + 1]);
  refresh_turning(stats, net);
}

void compute_inflow(FlowStats& stats, const RoadNetwork& net) {
  std::fill(stats.a0.begin(), stats.a0.end(), 0.0);
  std::fill(stats.a1.begin(), stats.a1.end(), 0.0);
  for (int rd = 0; rd < net.road_count(); ++rd) {
    int j = net.node_index(net.roads()[rd].from);
    bool signalized = net.controlled_index(j) >= 0;
    for (int u : net.incoming(j)) {
      int slot = slot_of(net, u, rd);
      double flow = stats.o_g * stats.p_turn[u][slot];
      if (!signalized) {
        stats.a0[rd] += flow;
        stats.a1[rd] += flow;
      } else if (net.roads()[u].sign > 0) {
        stats.a0[rd] += flow;
      } else {
        stats.a1[rd] += flow;
      }
    }
  }
}

double turning_prob(const FlowStats& stats, const RoadNetwork& net,
                    int from_road, int to_road) {
  int slot = slot_of(net, from_road, to_road);
  return slot < 0 ? 0.0 : stats.p_turn[from_road][slot];
}

double o_bar(const FlowStats& s, const RoadNetwork& net, int road) {
  if (net.controlled_index(net.node_index(net.roads()[road].to)) < 0)
    return 2.0 * s.o_g;  // both phases flow
  return s.o_g + s.o_r;
}

double o_delta(const FlowStats& s, const RoadNetwork& net, int road) {
  if (net.controlled_index(net.node_index(net.roads()[road].to)) < 0)
    return 0.0;
  return s.o_g - s.o_r;
}

std::string flow_csv_header() { return "t,o_g,a0_min,a0_max,a1_min,a1_max\n"; }

std::string flow_csv_row(int t, const FlowStats& stats) {
  auto range = [](const std::vector<double>& v) {
    if (v.empty()) return std::pair{0.0, 0.0};
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return std::pair{*lo, *hi};
  };
  auto [a0_lo, a0_hi] = range(stats.a0);
  auto [a1_lo, a1_hi] = range(stats.a1);
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", t,
                stats.o_g, a0_lo, a0_hi, a1_lo, a1_hi);
  return buf;
}

}  // namespace itc
