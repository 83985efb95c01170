#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>

#include "doctest.h"
#include "itc/coupling.hpp"
#include "itc/harness.hpp"
#include "json.hpp"

using namespace itc;
namespace fs = std::filesystem;

namespace {

Experiment small_experiment(const std::string& dir) {
  Experiment exp;
  exp.rows = 3;
  exp.cols = 3;
  exp.sim.generation_rate = 1.0;
  exp.sim.duration = 180;
  exp.control.kind = ControllerKind::pattern;
  exp.seeds = {1};
  exp.output_dir = dir;
  return exp;
}

std::string fresh_dir(const std::string& name) {
  const std::string dir = "harness_out/" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string trace_text(const std::vector<StepMetrics>& trace) {
  std::string out = trace_csv_header();
  for (size_t t = 0; t < trace.size(); ++t) {
    out += trace_csv_row(static_cast<int>(t), trace[t]);
  }
  return out;
}

}  // namespace

TEST_CASE("a run produces one metric row per second") {
  Experiment exp = small_experiment(fresh_dir("shape"));
  RoadNetwork net = experiment_network(exp);
  auto trace = run_single(net, exp, 1);
  CHECK(trace.size() == 180);
  for (const auto& m : trace) {
    CHECK(m.vehicle_count >= 0);
    CHECK(m.waiting_ratio >= 0.0);
    CHECK(m.waiting_ratio <= 1.0);
  }
}

TEST_CASE("repeating an experiment yields byte-identical files") {
  Experiment exp = small_experiment(fresh_dir("repeat"));
  exp.control.kind = ControllerKind::ampic;
  exp.control.solver = SolverKind::sa;
  exp.control.solver_cfg.num_reads = 20;
  exp.control.solver_cfg.sweeps = 30;
  exp.seeds = {3, 4};

  auto first = run_experiment(exp);
  std::map<std::string, std::string> bytes;
  for (const auto& path : first.trace_paths) bytes[path] = slurp(path);
  bytes[first.summary_path] = slurp(first.summary_path);

  auto second = run_experiment(exp);
  REQUIRE(second.trace_paths == first.trace_paths);
  for (const auto& [path, content] : bytes) CHECK(slurp(path) == content);
}

TEST_CASE("summaries aggregate seeds with mean and standard error") {
  Experiment exp = small_experiment(fresh_dir("agg"));
  exp.seeds = {1, 2, 3};
  auto result = run_experiment(exp);

  REQUIRE(result.per_seed.size() == 3);
  REQUIRE(result.summary.size() == 5);
  for (const auto& row : result.summary) {
    CHECK(row.controller == "pattern");
    CHECK(row.seed_count == 3);
    CHECK(row.n_nodes == 9);
    CHECK(row.solver == "-");
  }

  const SummaryRow& vel = result.summary[0];
  REQUIRE(vel.indicator == "mean_velocity");
  double mean = 0.0;
  for (const auto& s : result.per_seed) mean += s.mean_velocity;
  mean /= 3.0;
  double ss = 0.0;
  for (const auto& s : result.per_seed) {
    ss += (s.mean_velocity - mean) * (s.mean_velocity - mean);
  }
  CHECK(vel.mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(vel.std_error ==
        doctest::Approx(std::sqrt(ss / 2.0 / 3.0)).epsilon(1e-12));
}

TEST_CASE("the audit accepts written results and rejects tampering") {
  Experiment exp = small_experiment(fresh_dir("audit"));
  exp.seeds = {1, 2};
  auto result = run_experiment(exp);
  CHECK_NOTHROW(audit_experiment(result.summary_path, result.trace_paths));

  auto rows = read_summary_csv(result.summary_path);
  rows[2].mean += 0.5;
  write_text_atomic(result.summary_path, summary_csv(rows));
  CHECK_THROWS_AS(audit_experiment(result.summary_path, result.trace_paths),
                  std::runtime_error);
}

TEST_CASE("atomic writes leave no partial files behind") {
  const std::string dir = fresh_dir("atomic");
  const std::string path = dir + "/out.txt";
  write_text_atomic(path, "hello\n");
  CHECK(slurp(path) == "hello\n");
  CHECK_FALSE(fs::exists(path + ".tmp"));
  write_text_atomic(path, "replaced\n");
  CHECK(slurp(path) == "replaced\n");
}

TEST_CASE("trace and summary files round-trip through the readers") {
  Experiment exp = small_experiment(fresh_dir("roundtrip"));
  auto result = run_experiment(exp);

  auto trace = read_trace_csv(result.trace_paths[0]);
  REQUIRE(trace.size() == result.traces[0].size());
  for (size_t t = 0; t < trace.size(); ++t) {
    CHECK(trace_csv_row(static_cast<int>(t), trace[t]) ==
          trace_csv_row(static_cast<int>(t), result.traces[0][t]));
  }

  auto rows = read_summary_csv(result.summary_path);
  REQUIRE(rows.size() == result.summary.size());
  CHECK(summary_csv(rows) == summary_csv(result.summary));

  CHECK_THROWS_AS(read_trace_csv(result.summary_path), std::runtime_error);
  CHECK_THROWS_AS(read_summary_csv(result.trace_paths[0]),
                  std::runtime_error);
}

TEST_CASE("experiments validate their configuration") {
  Experiment exp = small_experiment("harness_out");
  CHECK_NOTHROW(exp.validate());
  Experiment bad = exp;
  bad.seeds.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = exp;
  bad.sim.duration = 30;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = exp;
  bad.rows = 1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  CHECK(experiment_name(exp, experiment_network(exp)) ==
        "pattern_3x3_r1_kh1");
  exp.tag = "custom";
  CHECK(experiment_name(exp, experiment_network(exp)) == "custom");
}

TEST_CASE("zero demand leaves the network in free flow") {
  Experiment exp = small_experiment(fresh_dir("zero"));
  exp.sim.generation_rate = 0.0;
  exp.write_traces = false;
  auto result = run_experiment(exp);
  for (const auto& row : result.summary) {
    if (row.indicator == "mean_velocity") {
      CHECK(row.mean == doctest::Approx(exp.sim.free_flow_speed));
    } else {
      CHECK(row.mean == 0.0);
    }
  }
}

TEST_CASE("rate sweeps cover every controller and rate and resume from cells") {
  Experiment base = small_experiment(fresh_dir("sweeprate"));
  base.sim.duration = 120;
  base.seeds = {1, 2};
  const std::vector<double> rates = {0.5, 1.5};
  const std::vector<ControllerKind> kinds = {ControllerKind::local,
                                             ControllerKind::pattern};

  auto rows = sweep_rate(base, rates, kinds, 2);
  CHECK(rows.size() == rates.size() * kinds.size() * 5);
  const std::string csv_path = base.output_dir + "/sweep_rate.csv";
  const std::string bytes = slurp(csv_path);
  CHECK(summary_csv(rows) == bytes);

  int cells = 0;
  for (const auto& entry : fs::directory_iterator(base.output_dir + "/cells")) {
    (void)entry;
    ++cells;
  }
  CHECK(cells == 8);

  auto again = sweep_rate(base, rates, kinds, 2);
  CHECK(summary_csv(again) == bytes);

  SUBCASE("finished cells are read back instead of recomputed") {
    Experiment probe = base;
    probe.control.kind = ControllerKind::local;
    probe.sim.generation_rate = rates[0];
    probe.write_traces = false;
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx",
                  static_cast<unsigned long long>(
                      fnv64(cell_key(probe, base.seeds[0]))));
    const std::string cell =
        base.output_dir + "/cells/cell_" + std::string(hash) + ".csv";
    REQUIRE(fs::exists(cell));
    write_text_atomic(
        cell,
        "seed,mean_velocity,waiting_ratio,co2_rate,squared_bias,"
        "vehicle_count,solve_seconds\n1,999,0,0,0,0,0\n");
    auto poisoned = sweep_rate(base, rates, kinds, 2);
    bool saw_marker = false;
    for (const auto& row : poisoned) {
      if (row.controller == "local" && row.rate == rates[0] &&
          row.indicator == "mean_velocity" && row.mean > 400.0) {
        saw_marker = true;
      }
    }
    CHECK(saw_marker);
  }
}

TEST_CASE("size sweeps emit absolute and relative rows") {
  Experiment base = small_experiment(fresh_dir("sweepsize"));
  base.sim.duration = 120;
  base.control.kind = ControllerKind::ampic;
  base.control.solver = SolverKind::greedy;
  base.control.solver_cfg.num_reads = 10;
  auto rows = sweep_size(base, {3}, {0.2, 0.3}, 2);
  REQUIRE(rows.size() == 2 * 3 * 5);

  int relative = 0;
  for (const auto& row : rows) {
    if (row.controller == "ampic/local") {
      ++relative;
      CHECK(row.n_nodes == 9);
      CHECK(row.mean >= 0.0);
    }
  }
  CHECK(relative == 10);
  CHECK(fs::exists(base.output_dir + "/sweep_size.csv"));

  bool saw_rate = false;
  for (const auto& row : rows) {
    if (row.rate == doctest::Approx(0.2 * 3.0)) saw_rate = true;
  }
  CHECK(saw_rate);
}

TEST_CASE("horizon sweeps run the predictive controller per horizon") {
  Experiment base = small_experiment(fresh_dir("sweephorizon"));
  base.sim.duration = 120;
  base.control.solver = SolverKind::greedy;
  base.control.solver_cfg.num_reads = 10;
  auto rows = sweep_horizon(base, {1, 2}, 2);
  REQUIRE(rows.size() == 10);
  CHECK(rows[0].k_h == 1);
  CHECK(rows[5].k_h == 2);
  for (const auto& row : rows) CHECK(row.controller == "ampic");
  CHECK(fs::exists(base.output_dir + "/sweep_horizon.csv"));
}

TEST_CASE("cycle-aggregated observations match per-second bookkeeping") {
  RoadNetwork net = generate_lattice(3, 3, 200.0);
  SimConfig cfg;
  cfg.generation_rate = 1.5;
  cfg.duration = 240;
  cfg.seed = 7;
  Simulation sim(net, cfg);

  FlowStats per_second = make_flow_stats(net, cfg.saturation_flow);
  FlowStats aggregated = make_flow_stats(net, cfg.saturation_flow);

  std::vector<int> sigma(net.controlled_count(), 1);
  std::vector<long> exits(net.road_count(), 0);
  std::map<std::pair<int, int>, long> turn_acc;
  for (int t = 0; t < cfg.duration; ++t) {
    if (t % cfg.control_cycle == 0 && t > 0) {
      std::vector<std::tuple<int, int, long>> turns;
      for (const auto& [pair, count] : turn_acc) {
        turns.emplace_back(pair.first, pair.second, count);
      }
      apply_cycle_observations(aggregated, net, sigma, cfg.control_cycle,
                               exits, turns);
      std::fill(exits.begin(), exits.end(), 0);
      turn_acc.clear();
      for (auto& s : sigma) s = -s;
    }
    sim.step(sigma);
    update_outflow(per_second, net, sim.green_last_step(),
                   sim.departures_last_step());
    for (int r = 0; r < net.road_count(); ++r) {
      exits[r] += sim.departures_last_step()[r];
    }
    for (auto [from, to] : sim.transitions_last_step()) {
      record_transition(per_second, net, from, to);
      turn_acc[{from, to}] += 1;
    }
  }
  std::vector<std::tuple<int, int, long>> turns;
  for (const auto& [pair, count] : turn_acc) {
    turns.emplace_back(pair.first, pair.second, count);
  }
  apply_cycle_observations(aggregated, net, sigma, cfg.control_cycle, exits,
                           turns);

  CHECK(aggregated.t_green == per_second.t_green);
  CHECK(aggregated.n_exit == per_second.n_exit);
  CHECK(aggregated.t_green_total == per_second.t_green_total);
  CHECK(aggregated.n_exit_total == per_second.n_exit_total);
  CHECK(aggregated.o_g == per_second.o_g);
  CHECK(aggregated.turn_count == per_second.turn_count);
}

TEST_CASE("the coupling loopback reproduces the direct trace byte for byte") {
  Experiment exp = small_experiment(fresh_dir("loopback"));
  exp.control.kind = ControllerKind::ampic;
  exp.control.solver = SolverKind::sa;
  exp.control.solver_cfg.num_reads = 20;
  exp.control.solver_cfg.sweeps = 30;
  exp.sim.generation_rate = 1.5;
  exp.sim.duration = 240;

  RoadNetwork net = experiment_network(exp);
  auto direct = run_single(net, exp, 5);

  ControllerConfig server_cfg = exp.control;
  server_cfg.tau = exp.sim.control_cycle;
  CouplingServer server(net, server_cfg, 5, exp.sim.saturation_flow);
  auto coupled = run_coupled(net, exp, 5, [&](const std::string& line) {
    return server.handle_line(line);
  });

  CHECK(server.done());
  CHECK_FALSE(server.failed());
  CHECK(server.cycles() == 4);
  REQUIRE(coupled.size() == direct.size());
  CHECK(trace_text(coupled) == trace_text(direct));
}

TEST_CASE("the coupling server rejects protocol violations") {
  RoadNetwork net = generate_lattice(2, 3, 200.0);
  ControllerConfig cfg;
  cfg.kind = ControllerKind::local;
  cfg.tau = 60.0;

  auto q_all = [&](int count) {
    nlohmann::json q = nlohmann::json::array();
    for (const auto& road : net.roads()) {
      q.push_back(nlohmann::json::array({road.from, road.to, count}));
    }
    return q;
  };

  SUBCASE("malformed JSON terminates the loop") {
    CouplingServer server(net, cfg, 1);
    auto reply = nlohmann::json::parse(server.handle_line("{nope"));
    CHECK(reply["type"] == "error");
    CHECK(server.failed());
    CHECK(server.done());
  }

  SUBCASE("out-of-order timestamps are refused") {
    CouplingServer server(net, cfg, 1);
    nlohmann::json msg = {
        {"version", 1}, {"type", "counts"}, {"t", 60}, {"q", q_all(0)}};
    auto reply = nlohmann::json::parse(server.handle_line(msg.dump()));
    CHECK(reply["type"] == "error");
    CHECK(std::string(reply["message"]).find("timestamp") !=
          std::string::npos);
    CHECK(server.failed());
  }

  SUBCASE("a repeated timestamp is refused") {
    CouplingServer server(net, cfg, 1);
    nlohmann::json msg = {
        {"version", 1}, {"type", "counts"}, {"t", 0}, {"q", q_all(0)}};
    auto ok = nlohmann::json::parse(server.handle_line(msg.dump()));
    CHECK(ok["type"] == "sigma");
    auto reply = nlohmann::json::parse(server.handle_line(msg.dump()));
    CHECK(reply["type"] == "error");
  }

  SUBCASE("unknown roads are refused") {
    CouplingServer server(net, cfg, 1);
    nlohmann::json msg = {{"version", 1},
                          {"type", "counts"},
                          {"t", 0},
                          {"q", nlohmann::json::array(
                                    {nlohmann::json::array({1, 99, 3})})}};
    auto reply = nlohmann::json::parse(server.handle_line(msg.dump()));
    CHECK(reply["type"] == "error");
    CHECK(std::string(reply["message"]).find("unknown road") !=
          std::string::npos);
  }

  SUBCASE("missing version or wrong type are refused") {
    CouplingServer server(net, cfg, 1);
    nlohmann::json msg = {{"type", "counts"}, {"t", 0}, {"q", q_all(0)}};
    auto reply = nlohmann::json::parse(server.handle_line(msg.dump()));
    CHECK(reply["type"] == "error");

    CouplingServer other(net, cfg, 1);
    msg = {{"version", 1}, {"type", "hello"}};
    reply = nlohmann::json::parse(other.handle_line(msg.dump()));
    CHECK(reply["type"] == "error");
  }

  SUBCASE("roads missing from q count as empty") {
    CouplingServer server(net, cfg, 1);
    nlohmann::json msg = {{"version", 1},
                          {"type", "counts"},
                          {"t", 0},
                          {"q", nlohmann::json::array()}};
    auto reply = nlohmann::json::parse(server.handle_line(msg.dump()));
    CHECK(reply["type"] == "sigma");
    CHECK_FALSE(server.failed());
    REQUIRE(static_cast<int>(reply["sigma"].size()) ==
            net.controlled_count());
    for (const auto& entry : reply["sigma"]) {
      const int value = entry[1].get<int>();
      CHECK((value == 1 || value == -1));
    }
  }

  SUBCASE("observations on the first message are refused") {
    CouplingServer server(net, cfg, 1);
    nlohmann::json msg = {{"version", 1},
                          {"type", "counts"},
                          {"t", 0},
                          {"q", q_all(0)},
                          {"exits", nlohmann::json::array()}};
    auto reply = nlohmann::json::parse(server.handle_line(msg.dump()));
    CHECK(reply["type"] == "error");
  }

  SUBCASE("end closes the loop cleanly") {
    CouplingServer server(net, cfg, 1);
    nlohmann::json msg = {{"version", 1}, {"type", "end"}};
    CHECK(server.handle_line(msg.dump()).empty());
    CHECK(server.done());
    CHECK_FALSE(server.failed());
  }
}

TEST_CASE("a recorded session replays through the stream server") {
  RoadNetwork net = generate_lattice(2, 3, 200.0);
  Experiment exp;
  exp.rows = 2;
  exp.cols = 3;
  exp.sim.generation_rate = 1.0;
  exp.sim.duration = 180;
  exp.control.kind = ControllerKind::local;
  ControllerConfig server_cfg = exp.control;
  server_cfg.tau = exp.sim.control_cycle;

  std::vector<std::string> requests;
  std::vector<std::string> replies;
  CouplingServer recorder(net, server_cfg, 9, exp.sim.saturation_flow);
  run_coupled(net, exp, 9, [&](const std::string& line) {
    requests.push_back(line);
    std::string reply = recorder.handle_line(line);
    if (!reply.empty()) replies.push_back(reply);
    return reply;
  });

  std::string input;
  for (const auto& line : requests) input += line + "\n";
  std::istringstream in(input);
  std::ostringstream out;
  CouplingServer server(net, server_cfg, 9, exp.sim.saturation_flow);
  CHECK(serve_stream(server, in, out));
  CHECK(server.done());

  std::string expected;
  for (const auto& line : replies) expected += line + "\n";
  CHECK(out.str() == expected);
}

TEST_CASE("the TCP transport carries a full session") {
  Experiment exp = small_experiment("harness_out");
  exp.rows = 2;
  exp.cols = 3;
  exp.sim.duration = 180;
  exp.control.kind = ControllerKind::local;
  RoadNetwork net = experiment_network(exp);

  ControllerConfig server_cfg = exp.control;
  server_cfg.tau = exp.sim.control_cycle;
  CouplingServer server(net, server_cfg, 2, exp.sim.saturation_flow);

  std::promise<int> port_promise;
  int port = 0;
  std::thread host([&] {
    serve_tcp(server, port, [&](int p) { port_promise.set_value(p); });
  });
  const int bound = port_promise.get_future().get();
  REQUIRE(bound > 0);

  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  REQUIRE(fd >= 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(bound));
  REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) ==
          0);

  std::string pending;
  auto exchange = [&](const std::string& line) -> std::string {
    const std::string out = line + "\n";
    size_t sent = 0;
    while (sent < out.size()) {
      const ssize_t n = ::write(fd, out.data() + sent, out.size() - sent);
      REQUIRE(n > 0);
      sent += static_cast<size_t>(n);
    }
    if (line.find("\"end\"") != std::string::npos) return "";
    size_t nl;
    while ((nl = pending.find('\n')) == std::string::npos) {
      char chunk[4096];
      const ssize_t got = ::read(fd, chunk, sizeof chunk);
      REQUIRE(got > 0);
      pending.append(chunk, static_cast<size_t>(got));
    }
    const std::string reply = pending.substr(0, nl);
    pending.erase(0, nl + 1);
    return reply;
  };

  auto coupled = run_coupled(net, exp, 2, exchange);
  ::close(fd);
  host.join();
  CHECK_FALSE(server.failed());
  CHECK(server.done());

  auto direct = run_single(net, exp, 2);
  CHECK(trace_text(coupled) == trace_text(direct));
}
