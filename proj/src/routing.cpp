#include "itc/routing.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

#include "itc/rng.hpp"

namespace itc {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDistEps = 1e-6;  // meters; link lengths are O(1e2)
}  // namespace

RoutingTable build_routing_table(const RoadNetwork& net, int dest_idx) {
  const int n = net.node_count();
  if (dest_idx < 0 || dest_idx >= n)
    throw std::invalid_argument("destination index out of range");

  RoutingTable table;
  table.dest = dest_idx;
  table.dist.assign(n, kInf);
  table.path_count.assign(n, 0.0);

  // Dijkstra on reversed edges gives distance-to-destination.
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  table.dist[dest_idx] = 0.0;
  heap.push({0.0, dest_idx});
  while (!heap.empty()) {
    auto [d, v] = heap.top();
    heap.pop();
    if (d > table.dist[v]) continue;
    for (int r : net.incoming(v)) {
      const Road& road = net.roads()[r];
      int w = net.node_index(road.from);
      double nd = d + road.length;
      if (nd < table.dist[w] - kDistEps) {
        table.dist[w] = nd;
        heap.push({nd, w});
      }
    }
  }

  // Count shortest routes by relaxing nodes in increasing distance order;
  // every on-path successor is strictly closer to the destination.
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (table.dist[a] != table.dist[b]) return table.dist[a] < table.dist[b];
    return a < b;
  });
  table.path_count[dest_idx] = 1.0;
  for (int v : order) {
    if (v == dest_idx || table.dist[v] == kInf) continue;
    double total = 0.0;
    for (int r : net.outgoing(v)) {
      const Road& road = net.roads()[r];
      int u = net.node_index(road.to);
      if (std::abs(table.dist[v] - (road.length + table.dist[u])) <= kDistEps)
        total += table.path_count[u];
    }
    table.path_count[v] = total;
  }
  return table;
}

std::vector<int> sample_route(const RoadNetwork& net, const RoutingTable& table,
                              int origin_idx, std::mt19937_64& rng) {
  std::vector<int> route;
  if (origin_idx == table.dest) return route;
  if (origin_idx < 0 || origin_idx >= net.node_count())
    throw std::invalid_argument("origin index out of range");
  if (table.dist[origin_idx] == kInf) return route;

  int v = origin_idx;
  while (v != table.dest) {
    double total = 0.0;
    for (int r : net.outgoing(v)) {
      const Road& road = net.roads()[r];
      int u = net.node_index(road.to);
      if (std::abs(table.dist[v] - (road.length + table.dist[u])) <= kDistEps)
        total += table.path_count[u];
    }
    double pick = next_unit(rng) * total;
    int chosen = -1;
    for (int r : net.outgoing(v)) {
      const Road& road = net.roads()[r];
      int u = net.node_index(road.to);
      if (std::abs(table.dist[v] - (road.length + table.dist[u])) > kDistEps)
        continue;
      chosen = r;
      pick -= table.path_count[u];
      if (pick < 0.0) break;
    }
    if (chosen < 0)
      throw std::logic_error("routing table inconsistent at node " +
                             std::to_string(net.intersections()[v].id));
    route.push_back(chosen);
    v = net.node_index(net.roads()[chosen].to);
  }
  return route;
}

}  // namespace itc
