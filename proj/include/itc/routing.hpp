#pragma once

#include <random>
#include <vector>

#include "itc/network.hpp"

namespace itc {

/// Shortest-path data toward one destination node: free-flow distance from
/// every node and the number of distinct shortest routes, used to sample
/// uniformly among equal-length routes.
struct RoutingTable {
  int dest = -1;                   // node index
  std::vector<double> dist;        // node idx -> meters to dest (inf if unreachable)
  std::vector<double> path_count;  // node idx -> number of shortest routes to dest
};

RoutingTable build_routing_table(const RoadNetwork& net, int dest_idx);

/// Draws one route uniformly among all shortest origin->dest routes.
/// Returns road indices in travel order; empty when origin == dest or no
/// route exists.
std::vector<int> sample_route(const RoadNetwork& net, const RoutingTable& table,
                              int origin_idx, std::mt19937_64& rng);

}  // namespace itc
