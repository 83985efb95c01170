#include "itc/mesosim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

#include "itc/rng.hpp"

namespace itc {

namespace {
constexpr double kAccEps = 1e-9;      // rate-accumulator tolerance
constexpr uint64_t kScheduleTag = 0xA11CE5EEDULL;
}  // namespace

void SimConfig::validate() const {
  if (generation_rate < 0.0)
    throw std::invalid_argument("generation_rate must be >= 0");
  if (duration < 1) throw std::invalid_argument("duration must be >= 1 s");
  if (!(free_flow_speed > 0.0))
    throw std::invalid_argument("free_flow_speed must be > 0");
  if (!(saturation_flow > 0.0))
    throw std::invalid_argument("saturation_flow must be > 0");
  if (!(jam_spacing > 0.0))
    throw std::invalid_argument("jam_spacing must be > 0");
  if (control_cycle < 1)
    throw std::invalid_argument("control_cycle must be >= 1 s");
}

SpawnSchedule build_spawn_schedule(const RoadNetwork& net,
                                   const SimConfig& cfg) {
  cfg.validate();
  const int n = net.node_count();
  if (n < 2) throw std::invalid_argument("need at least two intersections");

  SpawnSchedule schedule;
  std::mt19937_64 rng(mix64(cfg.seed, kScheduleTag));
  std::vector<std::unique_ptr<RoutingTable>> tables(n);
  auto table_for = [&](int dest) -> const RoutingTable& {
    if (!tables[dest])
      tables[dest] = std::make_unique<RoutingTable>(build_routing_table(net, dest));
    return *tables[dest];
  };

  double acc = 0.0;
  for (int t = 0; t < cfg.duration; ++t) {
    acc += cfg.generation_rate;
    while (acc >= 1.0 - kAccEps) {
      acc -= 1.0;
      ++schedule.generated;
      std::vector<int> route;
      for (int attempt = 0; attempt < 8 && route.empty(); ++attempt) {
        int origin = static_cast<int>(next_below(rng, n));
        int dest = origin;
        while (dest == origin) dest = static_cast<int>(next_below(rng, n));
        route = sample_route(net, table_for(dest), origin, rng);
      }
      if (route.empty()) {
        ++schedule.skipped;
        std::fprintf(stderr,
                     "warning: no route found at t=%d, vehicle skipped\n", t);
        continue;
      }
      schedule.events.push_back({t, std::move(route)});
    }
  }
  return schedule;
}

Simulation::Simulation(const RoadNetwork& net, SimConfig cfg)
    : Simulation(net, cfg, build_spawn_schedule(net, cfg)) {}

Simulation::Simulation(const RoadNetwork& net, SimConfig cfg,
                       SpawnSchedule schedule)
    : net_(net), cfg_(cfg), schedule_(std::move(schedule)) {
  cfg_.validate();
  links_.resize(net_.road_count());
  for (int r = 0; r < net_.road_count(); ++r) {
    links_[r].capacity = std::max(
        1, static_cast<int>(std::floor(net_.roads()[r].length / cfg_.jam_spacing)));
  }
  sigma_.assign(net_.controlled_count(), +1);
  green_.assign(net_.road_count(), 1);
  departures_.assign(net_.road_count(), 0);
  vehicles_.reserve(schedule_.events.size());
}

bool Simulation::is_green(int road_idx) const {
  const Road& road = net_.roads()[road_idx];
  int ctrl = net_.controlled_index(net_.node_index(road.to));
  if (ctrl < 0) return true;  // unsignalized: free flow
  return sigma_[ctrl] * road.sign > 0;
}

StepMetrics Simulation::step(const std::vector<int>& sigma) {
  if (static_cast<int>(sigma.size()) != net_.controlled_count())
    throw std::invalid_argument("signal vector has wrong dimension");
  for (int s : sigma)
    if (s != 1 && s != -1)
      throw std::invalid_argument("signal states must be +1 or -1");
  sigma_ = sigma;

  transitions_.clear();
  for (int r = 0; r < net_.road_count(); ++r) {
    green_[r] = is_green(r) ? 1 : 0;
    departures_[r] = 0;
    for (int id : links_[r].queued) vehicles_[id].speed = 0.0;
  }

  discharge_queues();
  insert_pending();
  release_spawns();
  move_vehicles();

  if (spawned_ != pending_count_ + in_network_ + arrived_)
    throw std::logic_error(
        "vehicle conservation violated at t=" + std::to_string(t_) + ": " +
        std::to_string(spawned_) + " released vs " +
        std::to_string(pending_count_) + " pending + " +
        std::to_string(in_network_) + " on roads + " +
        std::to_string(arrived_) + " arrived");

  ++t_;
  return collect_metrics();
}

void Simulation::discharge_queues() {
  for (int r = 0; r < net_.road_count(); ++r) {
    LinkState& link = links_[r];
    if (link.queued.empty() || !green_[r]) {
      link.discharge_acc = 0.0;
      continue;
    }
    link.discharge_acc += cfg_.saturation_flow;
    while (link.discharge_acc >= 1.0 - kAccEps && !link.queued.empty()) {
      int id = link.queued.front();
      Vehicle& v = vehicles_[id];
      bool last = v.route_index + 1 == static_cast<int>(v.route.size());
      if (!last) {
        int next = v.route[v.route_index + 1];
        if (link_occupancy(links_[next]) >= links_[next].capacity)
          break;  // downstream full: head stays, credit kept
      }
      link.queued.pop_front();
      link.discharge_acc -= 1.0;
      ++departures_[r];
      v.queued = false;
      v.moved_stamp = t_;
      v.speed = cfg_.free_flow_speed;
      if (last) {
        v.active = false;
        ++arrived_;
        --in_network_;
      } else {
        ++v.route_index;
        v.link_position = 0.0;
        links_[v.route[v.route_index]].moving.push_back(id);
        transitions_.emplace_back(r, v.route[v.route_index]);
      }
    }
    link.discharge_acc = std::min(link.discharge_acc, 1.0);
  }
}

void Simulation::insert_pending() {
  for (int r = 0; r < net_.road_count(); ++r) {
    LinkState& link = links_[r];
    while (!link.pending.empty() && link_occupancy(link) < link.capacity) {
      int id = link.pending.front();
      link.pending.pop_front();
      --pending_count_;
      Vehicle& v = vehicles_[id];
      v.active = true;
      v.link_position = 0.0;
      link.moving.push_back(id);
      ++in_network_;
    }
  }
}

void Simulation::release_spawns() {
  while (next_event_ < schedule_.events.size() &&
         schedule_.events[next_event_].t == t_) {
    const SpawnEvent& event = schedule_.events[next_event_];
    ++next_event_;
    ++spawned_;
    Vehicle v;
    v.id = static_cast<int>(vehicles_.size());
    v.route = event.route;
    vehicles_.push_back(std::move(v));
    int first = event.route.front();
    LinkState& link = links_[first];
    if (link.pending.empty() && link_occupancy(link) < link.capacity) {
      Vehicle& stored = vehicles_.back();
      stored.active = true;
      link.moving.push_back(stored.id);
      ++in_network_;
    } else {
      link.pending.push_back(vehicles_.back().id);
      ++pending_count_;
    }
  }
}

void Simulation::move_vehicles() {
  std::vector<int> order;
  for (int r = 0; r < net_.road_count(); ++r) {
    order.assign(links_[r].moving.begin(), links_[r].moving.end());
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (vehicles_[a].link_position != vehicles_[b].link_position)
        return vehicles_[a].link_position > vehicles_[b].link_position;
      return a < b;
    });
    for (int id : order) {
      Vehicle& v = vehicles_[id];
      if (!v.active || v.queued || v.moved_stamp == t_) continue;
      v.moved_stamp = t_;
      double budget = cfg_.free_flow_speed;
      double moved = 0.0;
      while (true) {
        int cur = v.route[v.route_index];
        LinkState& link = links_[cur];
        double stop_pos = net_.roads()[cur].length -
                          static_cast<double>(link.queued.size()) * cfg_.jam_spacing;
        double gap = std::max(0.0, stop_pos - v.link_position);
        if (gap > budget) {
          v.link_position += budget;
          moved += budget;
          break;
        }
        v.link_position += gap;
        moved += gap;
        budget -= gap;
        auto join_queue = [&]() {
          link.moving.erase(
              std::find(link.moving.begin(), link.moving.end(), id));
          link.queued.push_back(id);
          v.queued = true;
          v.link_position = std::max(0.0, stop_pos);
        };
        if (!link.queued.empty() || !green_[cur]) {
          join_queue();
          break;
        }
        bool last = v.route_index + 1 == static_cast<int>(v.route.size());
        if (last) {
          link.moving.erase(
              std::find(link.moving.begin(), link.moving.end(), id));
          ++departures_[cur];
          v.active = false;
          ++arrived_;
          --in_network_;
          break;
        }
        int next = v.route[v.route_index + 1];
        if (link_occupancy(links_[next]) >= links_[next].capacity) {
          join_queue();
          break;
        }
        link.moving.erase(std::find(link.moving.begin(), link.moving.end(), id));
        ++departures_[cur];
        ++v.route_index;
        v.link_position = 0.0;
        links_[next].moving.push_back(id);
        transitions_.emplace_back(cur, next);
        if (budget <= 0.0) break;
      }
      v.speed = moved;
    }
  }
}

StepMetrics Simulation::collect_metrics() const {
  StepMetrics m;
  double speed_sum = 0.0;
  int waiting = 0;
  int count = 0;
  for (const LinkState& link : links_) {
    for (int id : link.moving) {
      const Vehicle& v = vehicles_[id];
      speed_sum += v.speed;
      if (v.speed < 0.1) ++waiting;
      m.co2_rate += surrogate_co2(v.speed);
      ++count;
    }
    for (int id : link.queued) {
      const Vehicle& v = vehicles_[id];
      speed_sum += v.speed;
      if (v.speed < 0.1) ++waiting;
      m.co2_rate += surrogate_co2(v.speed);
      ++count;
    }
  }
  m.vehicle_count = count;
  m.mean_velocity = count > 0 ? speed_sum / count : cfg_.free_flow_speed;
  m.waiting_ratio = count > 0 ? static_cast<double>(waiting) / count : 0.0;
  for (double x : bias_vector()) m.squared_bias += x * x;
  return m;
}

TrafficSnapshot Simulation::observe() const {
  TrafficSnapshot snap;
  snap.t = t_;
  snap.counts.resize(net_.road_count());
  for (int r = 0; r < net_.road_count(); ++r)
    snap.counts[r] = link_occupancy(links_[r]);
  snap.sigma = sigma_;
  return snap;
}

std::vector<double> Simulation::bias_vector() const {
  std::vector<double> x(net_.controlled_count(), 0.0);
  for (int c = 0; c < net_.controlled_count(); ++c) {
    int node = net_.controlled_nodes()[c];
    for (int r : net_.incoming(node)) {
      const Road& road = net_.roads()[r];
      x[c] += road.eta * road.sign * link_occupancy(links_[r]);
    }
  }
  return x;
}

void Simulation::audit() const {
  auto fail = [this](const std::string& what) {
    throw std::logic_error("audit failed at t=" + std::to_string(t_) + ": " +
                           what);
  };
  std::vector<char> seen(vehicles_.size(), 0);
  int on_roads = 0;
  int pending = 0;
  for (int r = 0; r < net_.road_count(); ++r) {
    const LinkState& link = links_[r];
    if (link_occupancy(link) > link.capacity)
      fail("road " + std::to_string(r) + " over capacity");
    for (int id : link.moving) {
      const Vehicle& v = vehicles_[id];
      if (seen[id]) fail("vehicle appears twice");
      seen[id] = 1;
      ++on_roads;
      if (!v.active || v.queued) fail("moving vehicle in wrong state");
      if (v.route[v.route_index] != r) fail("moving vehicle on wrong road");
      if (v.link_position < 0.0 ||
          v.link_position > net_.roads()[r].length + 1e-9)
        fail("vehicle position out of range");
    }
    for (int id : link.queued) {
      const Vehicle& v = vehicles_[id];
      if (seen[id]) fail("vehicle appears twice");
      seen[id] = 1;
      ++on_roads;
      if (!v.active || !v.queued) fail("queued vehicle in wrong state");
      if (v.route[v.route_index] != r) fail("queued vehicle on wrong road");
    }
    for (int id : link.pending) {
      if (seen[id]) fail("vehicle appears twice");
      seen[id] = 1;
      ++pending;
      if (vehicles_[id].active) fail("pending vehicle marked active");
    }
  }
  if (on_roads != in_network_) fail("in-network count drifted");
  if (pending != pending_count_) fail("pending count drifted");
  if (spawned_ != pending_count_ + in_network_ + arrived_)
    fail("released != pending + on roads + arrived");
  if (spawned_ != static_cast<int>(next_event_))
    fail("event cursor out of sync with releases");
}

}  // namespace itc
