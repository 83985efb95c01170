#include <fstream>
#include <sstream>

#include "itc/network.hpp"
#include "json.hpp"

namespace itc {

namespace {

using nlohmann::json;

double require_number(const json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number())
    throw ParseError(ctx + ": missing or non-numeric field '" + key + "'");
  return it->get<double>();
}

int require_int(const json& obj, const char* key, const std::string& ctx) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer())
    throw ParseError(ctx + ": missing or non-integer field '" + key + "'");
  return it->get<int>();
}

}  // namespace

RoadNetwork parse_network(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("network file: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("network file: top level must be an object");

  double l_ref = doc.value("l_ref", 100.0);
  double n_ref = doc.value("n_ref", 10.0);
  if (!(l_ref > 0.0) || !(n_ref > 0.0))
    throw ParseError("network file: l_ref and n_ref must be positive");

  auto nodes_it = doc.find("intersections");
  auto roads_it = doc.find("roads");
  if (nodes_it == doc.end() || !nodes_it->is_array())
    throw ParseError("network file: missing 'intersections' array");
  if (roads_it == doc.end() || !roads_it->is_array())
    throw ParseError("network file: missing 'roads' array");

  std::vector<Intersection> nodes;
  nodes.reserve(nodes_it->size());
  int pos = 0;
  for (const json& item : *nodes_it) {
    std::string ctx = "intersections[" + std::to_string(pos++) + "]";
    if (!item.is_object()) throw ParseError(ctx + ": must be an object");
    Intersection node;
    node.id = require_int(item, "id", ctx);
    node.x = require_number(item, "x", ctx);
    node.y = require_number(item, "y", ctx);
    if (auto it = item.find("signalized"); it != item.end()) {
      if (!it->is_boolean()) throw ParseError(ctx + ": 'signalized' must be a boolean");
      node.signalized = it->get<bool>();
    }
    nodes.push_back(node);
  }

  std::vector<Road> roads;
  roads.reserve(roads_it->size());
  bool all_tagged = true;
  pos = 0;
  for (const json& item : *roads_it) {
    std::string ctx = "roads[" + std::to_string(pos++) + "]";
    if (!item.is_object()) throw ParseError(ctx + ": must be an object");
    Road road;
    road.from = require_int(item, "from", ctx);
    road.to = require_int(item, "to", ctx);
    road.length = require_number(item, "length", ctx);
    if (!(road.length > 0.0)) throw ParseError(ctx + ": 'length' must be > 0");
    if (auto it = item.find("s"); it != item.end()) {
      if (!it->is_number_integer() || (it->get<int>() != 1 && it->get<int>() != -1))
        throw ParseError(ctx + ": 's' must be -1 or 1");
      road.sign = it->get<int>();
    }
    if (auto it = item.find("c"); it != item.end()) {
      if (!it->is_number_integer() || (it->get<int>() != 1 && it->get<int>() != 2))
        throw ParseError(ctx + ": 'c' must be 1 or 2");
      road.group_coeff = it->get<int>();
    }
    all_tagged = all_tagged && road.sign != 0 && road.group_coeff != 0;
    roads.push_back(road);
  }

  RoadNetwork net;
  try {
    net = RoadNetwork(std::move(nodes), std::move(roads), l_ref, n_ref);
    net = all_tagged ? compute_eta(std::move(net))
                     : assign_signal_groups(std::move(net));
    net.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("network file: ") + e.what());
  }
  return net;
}

RoadNetwork load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open network file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

std::string network_to_json(const RoadNetwork& net) {
  json doc;
  doc["l_ref"] = net.l_ref();
  doc["n_ref"] = net.n_ref();
  json nodes = json::array();
  for (const Intersection& node : net.intersections()) {
    nodes.push_back({{"id", node.id},
                     {"x", node.x},
                     {"y", node.y},
                     {"signalized", node.signalized}});
  }
  json roads = json::array();
  for (const Road& road : net.roads()) {
    roads.push_back({{"from", road.from},
                     {"to", road.to},
                     {"length", road.length},
                     {"s", road.sign},
                     {"c", road.group_coeff}});
  }
  doc["intersections"] = std::move(nodes);
  doc["roads"] = std::move(roads);
  return doc.dump(2) + "\n";
}

void save_network(const RoadNetwork& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write network file: " + path);
  out << network_to_json(net);
}

}  // namespace itc
