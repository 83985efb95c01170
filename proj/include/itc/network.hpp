#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace itc {

/// A node of the road graph. Signalized intersections carry a binary signal
/// state; unsignalized ones (lattice corners) let traffic flow freely and are
/// excluded from the decision vector.
struct Intersection {
  int id = 0;          // external id (1..N for generated lattices)
  double x = 0.0;      // meters
  double y = 0.0;      // meters
  bool signalized = true;
};

/// Directed road (i,j): from intersection `from` = j into intersection
/// `to` = i. `sign` is the signal-group label s_ij: the light at `to` shows
/// green for this road exactly when sigma_to * sign == +1. `group_coeff` is
/// c_ij (2 for a lone approach in its group, else 1) and `eta` the bias
/// weight c_ij * L_ref / (N_ref * L_ij).
struct Road {
  int from = 0;
  int to = 0;
  double length = 0.0;   // meters, > 0
  int sign = 0;          // +1 east-west group, -1 north-south group; 0 = unset
  int group_coeff = 0;   // 1 or 2; 0 = unset
  double eta = 0.0;      // > 0 once computed
};

/// Immutable after construction; safe to share read-only across runs.
class RoadNetwork {
 public:
  RoadNetwork() = default;
  RoadNetwork(std::vector<Intersection> intersections, std::vector<Road> roads,
              double l_ref = 100.0, double n_ref = 10.0);

  const std::vector<Intersection>& intersections() const { return nodes_; }
  const std::vector<Road>& roads() const { return roads_; }
  double l_ref() const { return l_ref_; }
  double n_ref() const { return n_ref_; }

  int node_count() const { return static_cast<int>(nodes_.size()); }
  int road_count() const { return static_cast<int>(roads_.size()); }

  // Dense indices (positions in the vectors) for graph work.
  int node_index(int id) const;                  // throws if unknown
  int road_index(int from_id, int to_id) const;  // -1 if absent
  const std::vector<int>& incoming(int node_idx) const { return in_[node_idx]; }
  const std::vector<int>& outgoing(int node_idx) const { return out_[node_idx]; }

  /// Signalized intersections in ascending node-index order; position in this
  /// list is the "controlled index" used by bias vectors and signal plans.
  const std::vector<int>& controlled_nodes() const { return controlled_; }
  int controlled_count() const { return static_cast<int>(controlled_.size()); }
  int controlled_index(int node_idx) const { return ctrl_of_node_[node_idx]; }  // -1 if unsignalized

  bool strongly_connected() const;

  /// Checks the structural invariants (endpoints, degrees, s balance, c rule,
  /// eta closure). Throws std::invalid_argument with context on violation.
  void validate() const;

 private:
  friend RoadNetwork assign_signal_groups(RoadNetwork net);
  friend RoadNetwork compute_eta(RoadNetwork net);

  void rebuild_adjacency();

  std::vector<Intersection> nodes_;
  std::vector<Road> roads_;
  double l_ref_ = 100.0;
  double n_ref_ = 10.0;
  std::vector<std::vector<int>> in_;   // node idx -> incoming road indices
  std::vector<std::vector<int>> out_;  // node idx -> outgoing road indices
  std::vector<int> controlled_;
  std::vector<int> ctrl_of_node_;
  std::unordered_map<int, int> id_to_index_;
  std::map<std::pair<int, int>, int> road_by_ids_;
};

/// rows x cols grid of signalized intersections, spacing meters apart, each
/// adjacent pair joined by two opposite one-lane roads. Corner nodes have
/// only two approaches and are created unsignalized (free flow); edge nodes
/// are 3-way, interior nodes 4-way. East-west approaches get s=+1,
/// north-south s=-1.
RoadNetwork generate_lattice(int rows, int cols, double spacing);

/// Assigns s by approach heading (within 45 deg of the east-west axis -> +1,
/// ties toward east-west), then c by the lone-approach rule, and re-derives
/// eta. Throws std::invalid_argument if a signalized intersection ends up
/// with all approaches in one group or an unbalanced 4-way split.
RoadNetwork assign_signal_groups(RoadNetwork net);

/// eta_ij = c_ij * L_ref / (N_ref * L_ij) on every road.
RoadNetwork compute_eta(RoadNetwork net);

/// JSON file round-trip. Schema: top-level keys `intersections`
/// (id, x, y, signalized), `roads` (from, to, length, optional s, c),
/// `l_ref`, `n_ref`. Missing s/c are filled by assign_signal_groups.
RoadNetwork load_network(const std::string& path);
void save_network(const RoadNetwork& net, const std::string& path);
RoadNetwork parse_network(const std::string& json_text);  // same schema, from memory
std::string network_to_json(const RoadNetwork& net);

/// Parse/validation failure with field context.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace itc
