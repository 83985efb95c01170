#include "itc/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

namespace itc {

namespace {

std::string road_label(const Road& r) {
  return "(" + std::to_string(r.from) + " -> " + std::to_string(r.to) + ")";
}

}  // namespace

RoadNetwork::RoadNetwork(std::vector<Intersection> intersections,
                         std::vector<Road> roads, double l_ref, double n_ref)
    : nodes_(std::move(intersections)),
      roads_(std::move(roads)),
      l_ref_(l_ref),
      n_ref_(n_ref) {
  if (l_ref_ <= 0.0 || n_ref_ <= 0.0)
    throw std::invalid_argument("l_ref and n_ref must be positive");
  rebuild_adjacency();
}

void RoadNetwork::rebuild_adjacency() {
  id_to_index_.clear();
  id_to_index_.reserve(nodes_.size());
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (!id_to_index_.emplace(nodes_[i].id, i).second)
      throw std::invalid_argument("duplicate intersection id " +
                                  std::to_string(nodes_[i].id));
  }
  in_.assign(nodes_.size(), {});
  out_.assign(nodes_.size(), {});
  road_by_ids_.clear();
  for (int r = 0; r < static_cast<int>(roads_.size()); ++r) {
    const Road& road = roads_[r];
    auto from = id_to_index_.find(road.from);
    auto to = id_to_index_.find(road.to);
    if (from == id_to_index_.end() || to == id_to_index_.end())
      throw std::invalid_argument("road " + road_label(road) +
                                  " references unknown intersection");
    if (road.from == road.to)
      throw std::invalid_argument("self-loop at intersection " +
                                  std::to_string(road.from));
    if (!road_by_ids_.emplace(std::make_pair(road.from, road.to), r).second)
      throw std::invalid_argument("duplicate road " + road_label(road));
    if (!(road.length > 0.0))
      throw std::invalid_argument("road " + road_label(road) +
                                  " has non-positive length");
    in_[to->second].push_back(r);
    out_[from->second].push_back(r);
  }
  controlled_.clear();
  ctrl_of_node_.assign(nodes_.size(), -1);
  for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
    if (nodes_[i].signalized) {
      ctrl_of_node_[i] = static_cast<int>(controlled_.size());
      controlled_.push_back(i);
    }
  }
}

int RoadNetwork::node_index(int id) const {
  auto it = id_to_index_.find(id);
  if (it == id_to_index_.end())
    throw std::invalid_argument("unknown intersection id " +
                                std::to_string(id));
  return it->second;
}

int RoadNetwork::road_index(int from_id, int to_id) const {
  auto it = road_by_ids_.find(std::make_pair(from_id, to_id));
  return it == road_by_ids_.end() ? -1 : it->second;
}

bool RoadNetwork::strongly_connected() const {
  const int n = node_count();
  if (n <= 1) return true;
  auto reach = [&](const std::vector<std::vector<int>>& adj, bool forward) {
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int r : adj[v]) {
        const Road& road = roads_[r];
        int w = forward ? node_index(road.to) : node_index(road.from);
        if (!seen[w]) {
          seen[w] = 1;
          ++count;
          stack.push_back(w);
        }
      }
    }
    return count == n;
  };
  return reach(out_, true) && reach(in_, false);
}

void RoadNetwork::validate() const {
  for (int i = 0; i < node_count(); ++i) {
    const auto& inc = in_[i];
    if (nodes_[i].signalized && (inc.size() < 3 || inc.size() > 4))
      throw std::invalid_argument(
          "signalized intersection " + std::to_string(nodes_[i].id) +
          " has in-degree " + std::to_string(inc.size()) + " (want 3 or 4)");
    int plus = 0, minus = 0, lone2 = 0;
    for (int r : inc) {
      const Road& road = roads_[r];
      if (road.sign != 1 && road.sign != -1)
        throw std::invalid_argument("road " + road_label(road) +
                                    " has unset or invalid sign");
      if (road.group_coeff != 1 && road.group_coeff != 2)
        throw std::invalid_argument("road " + road_label(road) +
                                    " has unset or invalid group coefficient");
      if (!(road.eta > 0.0))
        throw std::invalid_argument("road " + road_label(road) +
                                    " has non-positive eta");
      // eta definition closure: eta * L * N_ref / (c * L_ref) == 1
      double closure =
          road.eta * road.length * n_ref_ / (road.group_coeff * l_ref_);
      if (std::abs(closure - 1.0) > 1e-9)
        throw std::invalid_argument("road " + road_label(road) +
                                    " eta inconsistent with c*L_ref/(N_ref*L)");
      (road.sign > 0 ? plus : minus) += 1;
      if (road.group_coeff == 2) ++lone2;
    }
    if (!nodes_[i].signalized) continue;
    if (inc.size() == 4 && (plus != 2 || minus != 2))
      throw std::invalid_argument("4-way intersection " +
                                  std::to_string(nodes_[i].id) +
                                  " is not split 2/2 between signal groups");
    if (inc.size() == 3 && lone2 != 1)
      throw std::invalid_argument("3-way intersection " +
                                  std::to_string(nodes_[i].id) +
                                  " must have exactly one lone approach");
    if (plus == 0 || minus == 0)
      throw std::invalid_argument("intersection " +
                                  std::to_string(nodes_[i].id) +
                                  " has all approaches in one signal group");
  }
  if (!strongly_connected())
    throw std::invalid_argument("network is not strongly connected");
}

RoadNetwork generate_lattice(int rows, int cols, double spacing) {
  if (rows < 2 || cols < 2)
    throw std::invalid_argument("lattice dimensions must be at least 2x2");
  if (!(spacing > 0.0))
    throw std::invalid_argument("lattice spacing must be positive");

  std::vector<Intersection> nodes;
  nodes.reserve(static_cast<size_t>(rows) * cols);
  auto id_at = [cols](int r, int c) { return r * cols + c + 1; };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      Intersection node;
      node.id = id_at(r, c);
      node.x = c * spacing;
      node.y = r * spacing;
      // in-degree equals the number of grid neighbors; corners (2) flow free
      int degree = (r > 0) + (r + 1 < rows) + (c > 0) + (c + 1 < cols);
      node.signalized = degree >= 3;
      nodes.push_back(node);
    }
  }

  std::vector<Road> roads;
  auto connect = [&](int a, int b) {
    roads.push_back({a, b, spacing, 0, 0, 0.0});
    roads.push_back({b, a, spacing, 0, 0, 0.0});
  };
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) connect(id_at(r, c), id_at(r, c + 1));
      if (r + 1 < rows) connect(id_at(r, c), id_at(r + 1, c));
    }
  }

  return assign_signal_groups(RoadNetwork(std::move(nodes), std::move(roads)));
}

RoadNetwork assign_signal_groups(RoadNetwork net) {
  for (int i = 0; i < net.node_count(); ++i) {
    const Intersection& to = net.nodes_[i];
    for (int r : net.in_[i]) {
      Road& road = net.roads_[r];
      const Intersection& from = net.nodes_[net.node_index(road.from)];
      double dx = to.x - from.x;
      double dy = to.y - from.y;
      if (dx == 0.0 && dy == 0.0)
        throw std::invalid_argument("road " + road_label(road) +
                                    " has coincident endpoints");
      // Heading angle folded into [0, 90] degrees off the east-west axis;
      // ties at exactly 45 break toward east-west.
      double off_axis =
          std::atan2(std::abs(dy), std::abs(dx)) * 180.0 / std::numbers::pi;
      road.sign = off_axis <= 45.0 ? +1 : -1;
    }
    int plus = 0, minus = 0;
    for (int r : net.in_[i]) (net.roads_[r].sign > 0 ? plus : minus) += 1;
    for (int r : net.in_[i]) {
      Road& road = net.roads_[r];
      int same = road.sign > 0 ? plus : minus;
      road.group_coeff = same == 1 ? 2 : 1;
    }
    if (!to.signalized) continue;
    if (net.in_[i].size() >= 3 && (plus == 0 || minus == 0))
      throw std::invalid_argument(
          "invalid geometry: all approaches of intersection " +
          std::to_string(to.id) + " fall in one signal group");
    if (net.in_[i].size() == 4 && (plus != 2 || minus != 2))
      throw std::invalid_argument(
          "invalid geometry: 4-way intersection " + std::to_string(to.id) +
          " splits " + std::to_string(plus) + "/" + std::to_string(minus));
  }
  return compute_eta(std::move(net));
}

RoadNetwork compute_eta(RoadNetwork net) {
  for (Road& road : net.roads_) {
    if (road.group_coeff != 1 && road.group_coeff != 2)
      throw std::invalid_argument("road " + road_label(road) +
                                  " needs group_coeff before eta");
    road.eta = road.group_coeff * net.l_ref_ / (net.n_ref_ * road.length);
  }
  return net;
}

}  // namespace itc
