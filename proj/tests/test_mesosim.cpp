#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "itc/mesosim.hpp"
#include "itc/network.hpp"

using namespace itc;

namespace {

// One-way chain 0 -> 1 -> 2 -> 3 with nodes 1 and 2 signalized; every road
// is east-west (s=+1) and a lone approach (c=2, eta=0.2 at 100 m).
RoadNetwork chain_net() {
  std::vector<Intersection> nodes{{0, 0.0, 0.0, false},
                                  {1, 100.0, 0.0, true},
                                  {2, 200.0, 0.0, true},
                                  {3, 300.0, 0.0, false}};
  std::vector<Road> roads{{0, 1, 100.0, 0, 0, 0.0},
                          {1, 2, 100.0, 0, 0, 0.0},
                          {2, 3, 100.0, 0, 0, 0.0}};
  return assign_signal_groups(
      RoadNetwork(std::move(nodes), std::move(roads)));
}

SpawnSchedule chain_schedule(const RoadNetwork& net, int count, int start_t,
                             int spacing) {
  std::vector<int> route{net.road_index(0, 1), net.road_index(1, 2),
                         net.road_index(2, 3)};
  SpawnSchedule s;
  for (int k = 0; k < count; ++k) s.events.push_back({start_t + k * spacing, route});
  s.generated = count;
  return s;
}

SimConfig quiet_config() {
  SimConfig cfg;
  cfg.generation_rate = 0.0;
  cfg.duration = 600;
  return cfg;
}

}  // namespace

TEST_CASE("surrogate emission rates") {
  CHECK(surrogate_co2(0.0) == doctest::Approx(2.5e-4));
  CHECK(surrogate_co2(13.89) == doctest::Approx(9.445e-4));
  CHECK(surrogate_co2(5.0) > surrogate_co2(1.0));
}

TEST_CASE("spawn counts follow the rate accumulator") {
  RoadNetwork net = generate_lattice(3, 3, 100.0);
  SimConfig cfg;
  cfg.generation_rate = 1.0;
  cfg.duration = 10;
  CHECK(build_spawn_schedule(net, cfg).generated == 10);

  cfg.generation_rate = 2.22;
  cfg.duration = 3600;
  SpawnSchedule big = build_spawn_schedule(net, cfg);
  CHECK(big.generated == 7992);
  CHECK(big.skipped == 0);
  CHECK(big.events.size() == 7992);
}

TEST_CASE("spawn schedule is deterministic") {
  RoadNetwork net = generate_lattice(3, 3, 100.0);
  SimConfig cfg;
  cfg.generation_rate = 0.7;
  cfg.duration = 200;
  cfg.seed = 99;
  SpawnSchedule a = build_spawn_schedule(net, cfg);
  SpawnSchedule b = build_spawn_schedule(net, cfg);
  REQUIRE(a.events.size() == b.events.size());
  for (size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].t == b.events[i].t);
    CHECK(a.events[i].route == b.events[i].route);
  }
}

TEST_CASE("unobstructed vehicle moves at free-flow speed") {
  RoadNetwork net = chain_net();
  Simulation sim(net, quiet_config(), chain_schedule(net, 1, 0, 1));
  StepMetrics m = sim.step({+1, +1});
  CHECK(m.vehicle_count == 1);
  CHECK(m.mean_velocity == doctest::Approx(13.89));
  CHECK(m.waiting_ratio == 0.0);
  sim.audit();
}

TEST_CASE("free-flow arrival time matches route length") {
  RoadNetwork net = chain_net();
  Simulation sim(net, quiet_config(), chain_schedule(net, 1, 0, 1));
  int arrival = -1;
  for (int t = 0; t < 60 && arrival < 0; ++t) {
    sim.step({+1, +1});
    sim.audit();
    if (sim.arrived() == 1) arrival = sim.time();
  }
  double expect = 300.0 / 13.89;  // 21.6 s
  REQUIRE(arrival > 0);
  CHECK(std::abs(arrival - expect) <= 1.0);
}

TEST_CASE("red light holds the queue, green releases within 2 s") {
  RoadNetwork net = chain_net();
  Simulation sim(net, quiet_config(), chain_schedule(net, 1, 0, 1));
  // red at node 2: the vehicle queues at the end of road (1,2)
  for (int t = 0; t < 20; ++t) sim.step({+1, -1});
  TrafficSnapshot snap = sim.observe();
  CHECK(snap.counts[net.road_index(1, 2)] == 1);
  CHECK(sim.vehicles()[0].queued);
  StepMetrics m = sim.step({+1, -1});
  CHECK(sim.vehicles()[0].queued);  // still held at red
  CHECK(m.waiting_ratio == 1.0);
  CHECK(m.mean_velocity == 0.0);

  // saturation_flow 0.5/s: discharge on the second green second
  sim.step({+1, +1});
  CHECK(sim.vehicles()[0].queued);
  sim.step({+1, +1});
  CHECK(!sim.vehicles()[0].queued);
  CHECK(sim.observe().counts[net.road_index(2, 3)] == 1);
  sim.audit();
}

TEST_CASE("counts track spawned vehicles") {
  RoadNetwork net = chain_net();
  Simulation sim(net, quiet_config(), chain_schedule(net, 5, 0, 0));
  StepMetrics m = sim.step({+1, +1});
  CHECK(sim.observe().counts[net.road_index(0, 1)] == 5);
  CHECK(m.vehicle_count == 5);
  CHECK(m.squared_bias == doctest::Approx(1.0));  // (0.2 * 5)^2
  sim.audit();
}

TEST_CASE("storage cap, pending line, and spillback") {
  RoadNetwork net = chain_net();
  const int cap = 13;  // floor(100 / 7.5)
  Simulation sim(net, quiet_config(), chain_schedule(net, 30, 0, 0));
  sim.step({+1, -1});
  CHECK(sim.observe().counts[net.road_index(0, 1)] == cap);
  CHECK(sim.pending() == 30 - cap);
  sim.audit();

  // red at node 2 forever: road (1,2) fills, then (0,1) fills behind it
  for (int t = 0; t < 200; ++t) {
    sim.step({+1, -1});
    sim.audit();
  }
  TrafficSnapshot snap = sim.observe();
  CHECK(snap.counts[net.road_index(1, 2)] == cap);
  CHECK(snap.counts[net.road_index(0, 1)] == cap);
  CHECK(sim.in_network() == 2 * cap);
  CHECK(sim.pending() == 30 - 2 * cap);
  CHECK(sim.arrived() == 0);
  StepMetrics m = sim.step({+1, -1});
  CHECK(m.waiting_ratio == 1.0);
  CHECK(m.mean_velocity == 0.0);

  // green drains everything
  int t = 0;
  while (sim.arrived() < 30 && t++ < 400) {
    sim.step({+1, +1});
    sim.audit();
  }
  CHECK(sim.arrived() == 30);
  CHECK(sim.in_network() == 0);
  CHECK(sim.pending() == 0);
}

TEST_CASE("empty network metrics") {
  RoadNetwork net = generate_lattice(3, 3, 100.0);
  SimConfig cfg = quiet_config();
  Simulation sim(net, cfg);
  std::vector<int> sigma(net.controlled_count(), +1);
  StepMetrics m = sim.step(sigma);
  CHECK(m.vehicle_count == 0);
  CHECK(m.mean_velocity == doctest::Approx(cfg.free_flow_speed));
  CHECK(m.waiting_ratio == 0.0);
  CHECK(m.co2_rate == 0.0);
  CHECK(m.squared_bias == 0.0);
}

TEST_CASE("step validates the signal vector") {
  RoadNetwork net = chain_net();
  Simulation sim(net, quiet_config(), SpawnSchedule{});
  CHECK_THROWS_AS(sim.step({+1}), std::invalid_argument);
  CHECK_THROWS_AS(sim.step({+1, 0}), std::invalid_argument);
}

TEST_CASE("config validation") {
  SimConfig cfg;
  cfg.generation_rate = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.duration = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.jam_spacing = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("identical seeds give identical traces") {
  RoadNetwork net = generate_lattice(5, 5, 100.0);
  SimConfig cfg;
  cfg.generation_rate = 1.5;
  cfg.duration = 150;
  cfg.seed = 3;
  Simulation a(net, cfg), b(net, cfg);
  std::vector<int> sigma(net.controlled_count(), +1);
  for (int t = 0; t < cfg.duration; ++t) {
    if (t % 60 == 0)
      for (int& s : sigma) s = -s;
    StepMetrics ma = a.step(sigma);
    StepMetrics mb = b.step(sigma);
    CHECK(ma.mean_velocity == mb.mean_velocity);
    CHECK(ma.waiting_ratio == mb.waiting_ratio);
    CHECK(ma.co2_rate == mb.co2_rate);
    CHECK(ma.squared_bias == mb.squared_bias);
    CHECK(ma.vehicle_count == mb.vehicle_count);
    a.audit();
  }
  CHECK(a.observe().counts == b.observe().counts);
}

TEST_CASE("metrics stay in range under load") {
  RoadNetwork net = generate_lattice(4, 4, 100.0);
  SimConfig cfg;
  cfg.generation_rate = 3.0;
  cfg.duration = 300;
  cfg.seed = 17;
  Simulation sim(net, cfg);
  std::vector<int> sigma(net.controlled_count(), +1);
  for (int t = 0; t < cfg.duration; ++t) {
    if (t % 60 == 0)
      for (size_t i = 0; i < sigma.size(); ++i) sigma[i] = (t / 60 + i) % 2 ? +1 : -1;
    StepMetrics m = sim.step(sigma);
    CHECK(m.waiting_ratio >= 0.0);
    CHECK(m.waiting_ratio <= 1.0);
    CHECK(m.mean_velocity >= 0.0);
    CHECK(m.mean_velocity <= cfg.free_flow_speed + 1e-12);
    CHECK(m.squared_bias >= 0.0);
    CHECK(std::isfinite(m.co2_rate));
    sim.audit();
  }
  // conservation across the whole run
  CHECK(sim.spawned() == sim.pending() + sim.in_network() + sim.arrived());
  int on_roads = 0;
  for (int q : sim.observe().counts) on_roads += q;
  CHECK(on_roads == sim.in_network());
}

TEST_CASE("green seconds and departures are reported per road") {
  RoadNetwork net = chain_net();
  Simulation sim(net, quiet_config(), chain_schedule(net, 3, 0, 0));
  sim.step({+1, +1});
  const auto& green = sim.green_last_step();
  CHECK(green[net.road_index(0, 1)] == 1);
  CHECK(green[net.road_index(1, 2)] == 1);
  sim.step({-1, -1});
  CHECK(sim.green_last_step()[net.road_index(0, 1)] == 0);
  // road into the unsignalized end node is always green
  CHECK(sim.green_last_step()[net.road_index(2, 3)] == 1);

  int crossings = 0;
  Simulation flow(net, quiet_config(), chain_schedule(net, 1, 0, 1));
  for (int t = 0; t < 30; ++t) {
    flow.step({+1, +1});
    crossings += flow.departures_last_step()[net.road_index(0, 1)];
  }
  CHECK(crossings == 1);  // the single vehicle crossed node 1 exactly once
}
