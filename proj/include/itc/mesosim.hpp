#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "itc/network.hpp"
#include "itc/routing.hpp"

namespace itc {

/// Per-vehicle emission rate of the surrogate model: an idle floor plus a
/// linear speed term. The constants are declared design values for trend and
/// ordering comparisons, not calibrated emission factors.
inline constexpr double kCo2IdleRate = 2.5e-4;   // kg/s
inline constexpr double kCo2MovePerM = 5.0e-5;   // kg/m

inline double surrogate_co2(double speed) {
  return kCo2IdleRate + kCo2MovePerM * speed;
}

struct SimConfig {
  double generation_rate = 2.22;  // vehicles per second, network-wide
  std::uint64_t seed = 1;
  int duration = 3600;            // seconds
  double free_flow_speed = 13.89;  // m/s
  double saturation_flow = 0.5;    // vehicles per second per approach
  double jam_spacing = 7.5;        // meters of link per queued vehicle
  int control_cycle = 60;          // seconds between signal decisions

  void validate() const;  // throws std::invalid_argument
};

struct Vehicle {
  int id = -1;
  std::vector<int> route;   // road indices in travel order
  int route_index = 0;
  double link_position = 0.0;  // meters from link entry
  double speed = 0.0;          // meters covered in the last step
  bool queued = false;
  bool active = false;     // currently on a road
  int moved_stamp = -1;    // last step this vehicle was processed
};

struct TrafficSnapshot {
  int t = 0;
  std::vector<int> counts;  // per road index
  std::vector<int> sigma;   // per controlled index, +-1
};

struct StepMetrics {
  double mean_velocity = 0.0;
  double waiting_ratio = 0.0;
  double co2_rate = 0.0;
  double squared_bias = 0.0;
  int vehicle_count = 0;
};

struct SpawnEvent {
  int t = 0;                // step at which the vehicle is released
  std::vector<int> route;   // road indices
};

struct SpawnSchedule {
  std::vector<SpawnEvent> events;  // ordered by release step
  int generated = 0;               // floor(rate * duration)
  int skipped = 0;                 // no route found after bounded retries
};

/// Precomputes every spawn for the run: a rate accumulator releases
/// floor(rate * duration) vehicles, origins and destinations drawn uniformly
/// (distinct), each route drawn uniformly among the shortest ones.
SpawnSchedule build_spawn_schedule(const RoadNetwork& net, const SimConfig& cfg);

/// Deterministic 1 s link-queue simulator. Vehicles traverse links at
/// free-flow speed, wait in a stop-line queue with finite storage
/// (floor(L / jam_spacing) slots), and discharge at saturation_flow while
/// their approach is green. A green stop line with an empty queue is crossed
/// without stopping. Vehicles that cannot enter a full first link wait in a
/// per-link pending line outside the network.
class Simulation {
 public:
  Simulation(const RoadNetwork& net, SimConfig cfg);
  Simulation(const RoadNetwork& net, SimConfig cfg, SpawnSchedule schedule);

  /// Advances one second under the given signal states (one +-1 entry per
  /// controlled intersection). Returns the metrics of the post-step state.
  StepMetrics step(const std::vector<int>& sigma);

  TrafficSnapshot observe() const;

  int time() const { return t_; }
  const RoadNetwork& network() const { return net_; }
  const SimConfig& config() const { return cfg_; }
  const SpawnSchedule& schedule() const { return schedule_; }

  int generated() const { return schedule_.generated; }
  int spawned() const { return spawned_; }    // events released so far
  int arrived() const { return arrived_; }
  int pending() const { return pending_count_; }
  int in_network() const { return in_network_; }
  const std::vector<Vehicle>& vehicles() const { return vehicles_; }

  /// Roads shown green during the last step.
  const std::vector<char>& green_last_step() const { return green_; }
  /// Stop-line crossings per road during the last step (discharges,
  /// pass-throughs, and arrivals).
  const std::vector<int>& departures_last_step() const { return departures_; }
  /// (from_road, to_road) pairs of vehicles that changed links last step.
  const std::vector<std::pair<int, int>>& transitions_last_step() const {
    return transitions_;
  }

  /// Full recount of every conservation invariant; throws std::logic_error
  /// with context if any is violated.
  void audit() const;

  /// x_i = sum over approaches of eta * s * count, one entry per controlled
  /// intersection.
  std::vector<double> bias_vector() const;

 private:
  struct LinkState {
    std::vector<int> moving;  // vehicle ids, unordered
    std::deque<int> queued;   // front = at the stop line
    std::deque<int> pending;  // spawned here, waiting for storage
    double discharge_acc = 0.0;
    int capacity = 1;
  };

  int link_occupancy(const LinkState& link) const {
    return static_cast<int>(link.moving.size() + link.queued.size());
  }
  bool is_green(int road_idx) const;
  void release_spawns();
  void insert_pending();
  void discharge_queues();
  void move_vehicles();
  StepMetrics collect_metrics() const;

  const RoadNetwork& net_;
  SimConfig cfg_;
  SpawnSchedule schedule_;
  std::vector<Vehicle> vehicles_;
  std::vector<LinkState> links_;
  std::vector<int> sigma_;        // per controlled index, applied this step
  std::vector<char> green_;      // per road
  std::vector<int> departures_;  // per road
  std::vector<std::pair<int, int>> transitions_;
  std::size_t next_event_ = 0;
  int t_ = 0;
  int spawned_ = 0;
  int arrived_ = 0;
  int pending_count_ = 0;
  int in_network_ = 0;
};

}  // namespace itc
