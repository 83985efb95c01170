#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <map>
#include <random>

#include "doctest.h"
#include "itc/network.hpp"
#include "itc/routing.hpp"
#include "itc/rng.hpp"

using namespace itc;

namespace {

double route_length(const RoadNetwork& net, const std::vector<int>& route) {
  double total = 0.0;
  for (int r : route) total += net.roads()[r].length;
  return total;
}

bool route_connected(const RoadNetwork& net, const std::vector<int>& route,
                     int origin_idx, int dest_idx) {
  int at = origin_idx;
  for (int r : route) {
    if (net.node_index(net.roads()[r].from) != at) return false;
    at = net.node_index(net.roads()[r].to);
  }
  return at == dest_idx;
}

}  // namespace

TEST_CASE("distances on a 3x3 lattice") {
  RoadNetwork net = generate_lattice(3, 3, 100.0);
  int corner = net.node_index(1);
  int opposite = net.node_index(9);
  RoutingTable table = build_routing_table(net, opposite);
  CHECK(table.dist[corner] == doctest::Approx(400.0));
  CHECK(table.dist[opposite] == 0.0);
  CHECK(table.dist[net.node_index(5)] == doctest::Approx(200.0));
  // monotone grid walks: choose 2 of 4 steps to go east
  CHECK(table.path_count[corner] == doctest::Approx(6.0));
}

TEST_CASE("sampled routes are shortest and connected") {
  RoadNetwork net = generate_lattice(4, 4, 100.0);
  std::mt19937_64 rng(mix64(7, 1));
  for (int dest_id : {1, 6, 16}) {
    int dest = net.node_index(dest_id);
    RoutingTable table = build_routing_table(net, dest);
    for (int origin = 0; origin < net.node_count(); ++origin) {
      if (origin == dest) continue;
      auto route = sample_route(net, table, origin, rng);
      REQUIRE(!route.empty());
      CHECK(route_connected(net, route, origin, dest));
      CHECK(route_length(net, route) == doctest::Approx(table.dist[origin]));
    }
  }
}

TEST_CASE("equal-length routes are drawn near-uniformly") {
  RoadNetwork net = generate_lattice(3, 3, 100.0);
  int origin = net.node_index(1);
  int dest = net.node_index(9);
  RoutingTable table = build_routing_table(net, dest);
  std::mt19937_64 rng(mix64(11, 2));
  std::map<std::vector<int>, int> freq;
  const int draws = 6000;
  for (int i = 0; i < draws; ++i) ++freq[sample_route(net, table, origin, rng)];
  CHECK(freq.size() == 6);
  for (const auto& [route, count] : freq) CHECK(count > 800);
}

TEST_CASE("degenerate queries") {
  RoadNetwork net = generate_lattice(3, 3, 100.0);
  RoutingTable table = build_routing_table(net, 0);
  std::mt19937_64 rng(1);
  CHECK(sample_route(net, table, 0, rng).empty());
  CHECK_THROWS_AS(build_routing_table(net, 99), std::invalid_argument);

  // one-way pair: node 2 cannot reach node 1
  std::vector<Intersection> nodes{{1, 0.0, 0.0, false}, {2, 100.0, 0.0, false}};
  std::vector<Road> roads{{1, 2, 100.0, 1, 2, 0.2}};
  RoadNetwork oneway(std::move(nodes), std::move(roads));
  RoutingTable to_first = build_routing_table(oneway, 0);
  CHECK(sample_route(oneway, to_first, 1, rng).empty());
}

TEST_CASE("sampling is deterministic for a fixed seed") {
  RoadNetwork net = generate_lattice(4, 4, 100.0);
  RoutingTable table = build_routing_table(net, net.node_index(16));
  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 50; ++i)
    CHECK(sample_route(net, table, 0, a) == sample_route(net, table, 0, b));
}
