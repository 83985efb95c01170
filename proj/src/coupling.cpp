#include "itc/coupling.hpp"

#include <unistd.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <stdexcept>
#include <tuple>
#include <utility>

#include "itc/flowstats.hpp"
#include "json.hpp"

namespace itc {

namespace {

using nlohmann::json;

json error_reply(const std::string& message) {
  return json{{"version", 1}, {"type", "error"}, {"message", message}};
}

bool int_triple(const json& entry, long long& a, long long& b, long long& c) {
  if (!entry.is_array() || entry.size() != 3) return false;
  for (const auto& v : entry) {
    if (!v.is_number_integer()) return false;
  }
  a = entry[0].get<long long>();
  b = entry[1].get<long long>();
  c = entry[2].get<long long>();
  return true;
}

}  // namespace

CouplingServer::CouplingServer(const RoadNetwork& net,
                               const ControllerConfig& cfg, uint64_t seed,
                               double prior)
    : net_(net),
      ctl_(net, cfg, seed),
      stats_(make_flow_stats(net, prior)),
      cycle_seconds_(static_cast<int>(cfg.tau)) {
  if (cfg.tau != cycle_seconds_ || cycle_seconds_ < 1) {
    throw std::invalid_argument(
        "coupling needs a whole-second control cycle");
  }
}

std::string CouplingServer::fail(const std::string& message) {
  done_ = true;
  failed_ = true;
  return error_reply(message).dump();
}

std::string CouplingServer::handle_line(const std::string& line) {
  if (done_) return fail("request after the loop ended");

  json msg;
  try {
    msg = json::parse(line);
  } catch (const json::exception& e) {
    return fail(std::string("invalid JSON: ") + e.what());
  }
  if (!msg.is_object()) return fail("request must be a JSON object");
  if (!msg.contains("version") || msg["version"] != 1) {
    return fail("unsupported protocol version");
  }
  if (!msg.contains("type") || !msg["type"].is_string()) {
    return fail("missing message type");
  }
  const std::string type = msg["type"].get<std::string>();
  if (type == "end") {
    done_ = true;
    return "";
  }
  if (type != "counts") return fail("unexpected message type: " + type);

  if (!msg.contains("t") || !msg["t"].is_number_integer()) {
    return fail("missing integer timestamp");
  }
  const long long t = msg["t"].get<long long>();
  const long long expected =
      static_cast<long long>(cycles_) * cycle_seconds_;
  if (t != expected) {
    return fail("out-of-order timestamp " + std::to_string(t) +
                ", expected " + std::to_string(expected));
  }

  if (!msg.contains("q") || !msg["q"].is_array()) {
    return fail("missing counts array q");
  }
  std::vector<int> counts(net_.road_count(), -1);
  for (const auto& entry : msg["q"]) {
    long long from = 0;
    long long to = 0;
    long long count = 0;
    if (!int_triple(entry, from, to, count)) {
      return fail("q entries must be [from, to, count] integer triples");
    }
    const int road = net_.road_index(static_cast<int>(from),
                                     static_cast<int>(to));
    if (road < 0) {
      return fail("unknown road (" + std::to_string(from) + ", " +
                  std::to_string(to) + ") in q");
    }
    if (counts[road] >= 0) {
      return fail("duplicate road (" + std::to_string(from) + ", " +
                  std::to_string(to) + ") in q");
    }
    if (count < 0) return fail("negative count in q");
    counts[road] = static_cast<int>(count);
  }
  int missing = 0;
  for (int& c : counts) {
    if (c < 0) {
      c = 0;
      ++missing;
    }
  }
  if (missing > 0) {
    std::fprintf(stderr,
                 "coupling: %d roads missing from q at t=%lld, assuming "
                 "empty\n",
                 missing, t);
  }

  const bool has_exits = msg.contains("exits");
  const bool has_turns = msg.contains("turns");
  if (has_exits || has_turns) {
    if (cycles_ == 0) {
      return fail("observations before the first cycle");
    }
    std::vector<long> exits(net_.road_count(), 0);
    if (has_exits) {
      if (!msg["exits"].is_array()) return fail("exits must be an array");
      for (const auto& entry : msg["exits"]) {
        long long from = 0;
        long long to = 0;
        long long count = 0;
        if (!int_triple(entry, from, to, count)) {
          return fail("exits entries must be [from, to, count] triples");
        }
        const int road = net_.road_index(static_cast<int>(from),
                                         static_cast<int>(to));
        if (road < 0) {
          return fail("unknown road (" + std::to_string(from) + ", " +
                      std::to_string(to) + ") in exits");
        }
        if (count < 0) return fail("negative count in exits");
        exits[road] += count;
      }
    }
    std::vector<std::tuple<int, int, long>> turns;
    if (has_turns) {
      if (!msg["turns"].is_array()) return fail("turns must be an array");
      for (const auto& entry : msg["turns"]) {
        if (!entry.is_array() || entry.size() != 4) {
          return fail("turns entries must be [a, b, c, count] quadruples");
        }
        for (const auto& v : entry) {
          if (!v.is_number_integer()) {
            return fail("turns entries must be [a, b, c, count] quadruples");
          }
        }
        const long long a = entry[0].get<long long>();
        const long long b = entry[1].get<long long>();
        const long long c = entry[2].get<long long>();
        const long long count = entry[3].get<long long>();
        const int from_road =
            net_.road_index(static_cast<int>(a), static_cast<int>(b));
        const int to_road =
            net_.road_index(static_cast<int>(b), static_cast<int>(c));
        if (from_road < 0 || to_road < 0) {
          return fail("unknown road pair (" + std::to_string(a) + ", " +
                      std::to_string(b) + ", " + std::to_string(c) +
                      ") in turns");
        }
        if (count < 0) return fail("negative count in turns");
        turns.emplace_back(from_road, to_road, count);
      }
    }
    apply_cycle_observations(stats_, net_, ctl_.sigma(), cycle_seconds_,
                             exits, turns);
  }

  refresh_turning(stats_, net_);
  compute_inflow(stats_, net_);

  TrafficSnapshot snapshot;
  snapshot.t = static_cast<int>(t);
  snapshot.counts = std::move(counts);
  snapshot.sigma = ctl_.sigma();
  const std::vector<int>& sigma = ctl_.decide(snapshot, stats_);
  ++cycles_;

  json reply;
  reply["version"] = 1;
  reply["type"] = "sigma";
  reply["t"] = t;
  json states = json::array();
  for (int ci = 0; ci < net_.controlled_count(); ++ci) {
    const int node = net_.controlled_nodes()[ci];
    states.push_back(json::array({net_.intersections()[node].id, sigma[ci]}));
  }
  reply["sigma"] = std::move(states);
  return reply.dump();
}

bool serve_stream(CouplingServer& server, std::istream& in,
                  std::ostream& out) {
  std::string line;
  while (!server.done() && std::getline(in, line)) {
    const std::string reply = server.handle_line(line);
    if (!reply.empty()) {
      out << reply << "\n";
      out.flush();
    }
  }
  return !server.failed();
}

bool serve_tcp(CouplingServer& server, int& port,
               const std::function<void(int)>& on_listen) {
  const int listener = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listener < 0) throw std::runtime_error("cannot create socket");
  const int one = 1;
  ::setsockopt(listener, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(port));
  if (::bind(listener, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listener, 1) < 0) {
    ::close(listener);
    throw std::runtime_error("cannot bind loopback port " +
                             std::to_string(port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listener, reinterpret_cast<sockaddr*>(&addr), &len);
  port = ntohs(addr.sin_port);
  if (on_listen) on_listen(port);

  const int peer = ::accept(listener, nullptr, nullptr);
  ::close(listener);
  if (peer < 0) throw std::runtime_error("accept failed");

  std::string buffer;
  char chunk[4096];
  bool open = true;
  while (open && !server.done()) {
    const ssize_t got = ::read(peer, chunk, sizeof chunk);
    if (got <= 0) break;
    buffer.append(chunk, static_cast<size_t>(got));
    size_t pos = 0;
    size_t nl = 0;
    while (!server.done() &&
           (nl = buffer.find('\n', pos)) != std::string::npos) {
      const std::string reply = server.handle_line(buffer.substr(pos, nl - pos));
      pos = nl + 1;
      if (!reply.empty()) {
        std::string out = reply + "\n";
        size_t sent = 0;
        while (sent < out.size()) {
          const ssize_t n = ::write(peer, out.data() + sent,
                                    out.size() - sent);
          if (n <= 0) {
            open = false;
            break;
          }
          sent += static_cast<size_t>(n);
        }
      }
    }
    buffer.erase(0, pos);
  }
  ::close(peer);
  return !server.failed();
}

std::vector<StepMetrics> run_coupled(
    const RoadNetwork& net, const Experiment& exp, uint64_t seed,
    const std::function<std::string(const std::string&)>& exchange) {
  SimConfig sim_cfg = exp.sim;
  sim_cfg.seed = seed;
  Simulation sim(net, sim_cfg);

  std::vector<int> sigma(net.controlled_count(), 1);
  std::vector<long> exits(net.road_count(), 0);
  std::map<std::pair<int, int>, long> turn_acc;

  std::vector<StepMetrics> trace;
  trace.reserve(sim_cfg.duration);
  for (int t = 0; t < sim_cfg.duration; ++t) {
    if (t % sim_cfg.control_cycle == 0) {
      json msg;
      msg["version"] = 1;
      msg["type"] = "counts";
      msg["t"] = t;
      const TrafficSnapshot snap = sim.observe();
      json q = json::array();
      for (int r = 0; r < net.road_count(); ++r) {
        q.push_back(json::array(
            {net.roads()[r].from, net.roads()[r].to, snap.counts[r]}));
      }
      msg["q"] = std::move(q);
      if (t > 0) {
        json exit_rows = json::array();
        for (int r = 0; r < net.road_count(); ++r) {
          if (exits[r] > 0) {
            exit_rows.push_back(json::array(
                {net.roads()[r].from, net.roads()[r].to, exits[r]}));
          }
        }
        msg["exits"] = std::move(exit_rows);
        json turn_rows = json::array();
        for (const auto& [pair, count] : turn_acc) {
          const Road& from = net.roads()[pair.first];
          const Road& to = net.roads()[pair.second];
          turn_rows.push_back(json::array({from.from, from.to, to.to, count}));
        }
        msg["turns"] = std::move(turn_rows);
        std::fill(exits.begin(), exits.end(), 0);
        turn_acc.clear();
      }

      const std::string reply_line = exchange(msg.dump());
      json reply;
      try {
        reply = json::parse(reply_line);
      } catch (const json::exception&) {
        throw std::runtime_error("coupling peer sent invalid JSON");
      }
      if (reply.value("type", "") == "error") {
        throw std::runtime_error("coupling peer reported: " +
                                 reply.value("message", std::string("?")));
      }
      if (reply.value("type", "") != "sigma" || !reply.contains("sigma")) {
        throw std::runtime_error("coupling peer sent an unexpected reply");
      }
      std::vector<int> next(net.controlled_count(), 0);
      for (const auto& entry : reply["sigma"]) {
        if (!entry.is_array() || entry.size() != 2 ||
            !entry[0].is_number_integer() || !entry[1].is_number_integer()) {
          throw std::runtime_error("coupling peer sent a malformed sigma");
        }
        const long long id = entry[0].get<long long>();
        const long long value = entry[1].get<long long>();
        int ci = -1;
        try {
          ci = net.controlled_index(net.node_index(static_cast<int>(id)));
        } catch (const std::exception&) {
        }
        if (ci < 0 || (value != 1 && value != -1)) {
          throw std::runtime_error("coupling peer sent a malformed sigma");
        }
        next[ci] = static_cast<int>(value);
      }
      for (int v : next) {
        if (v == 0) {
          throw std::runtime_error(
              "coupling peer left an intersection unassigned");
        }
      }
      sigma = std::move(next);
    }

    trace.push_back(sim.step(sigma));
    const auto& departures = sim.departures_last_step();
    for (int r = 0; r < net.road_count(); ++r) exits[r] += departures[r];
    for (auto [from, to] : sim.transitions_last_step()) {
      turn_acc[{from, to}] += 1;
    }
  }
  exchange(json{{"version", 1}, {"type", "end"}}.dump());
  return trace;
}

}  // namespace itc
