#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "itc/coupling.hpp"
#include "itc/harness.hpp"
#include "itc/ising.hpp"
#include "itc/solvers.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

void apply_config_file(itc::Experiment& exp, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json cfg = json::parse(in);
  if (!cfg.is_object()) throw std::runtime_error("config must be an object");
  for (const auto& [key, value] : cfg.items()) {
    if (key == "network") {
      exp.rows = value.value("rows", exp.rows);
      exp.cols = value.value("cols", exp.cols);
      exp.spacing = value.value("spacing", exp.spacing);
      exp.network_file = value.value("file", exp.network_file);
    } else if (key == "sim") {
      exp.sim.generation_rate = value.value("rate", exp.sim.generation_rate);
      exp.sim.duration = value.value("duration", exp.sim.duration);
      exp.sim.free_flow_speed =
          value.value("free_flow_speed", exp.sim.free_flow_speed);
      exp.sim.saturation_flow =
          value.value("saturation_flow", exp.sim.saturation_flow);
      exp.sim.jam_spacing = value.value("jam_spacing", exp.sim.jam_spacing);
      exp.sim.control_cycle = value.value("cycle", exp.sim.control_cycle);
    } else if (key == "control") {
      if (value.contains("kind")) {
        exp.control.kind =
            itc::controller_from_name(value["kind"].get<std::string>());
      }
      if (value.contains("solver")) {
        exp.control.solver =
            itc::solver_from_name(value["solver"].get<std::string>());
      }
      exp.control.k_h = value.value("k_h", exp.control.k_h);
      exp.control.flip_prob = value.value("flip_prob", exp.control.flip_prob);
      exp.control.drift_term = value.value("drift_term", exp.control.drift_term);
      exp.control.solver_cfg.num_reads =
          value.value("num_reads", exp.control.solver_cfg.num_reads);
      exp.control.solver_cfg.sweeps =
          value.value("sweeps", exp.control.solver_cfg.sweeps);
      exp.control.solver_cfg.beta_min =
          value.value("beta_min", exp.control.solver_cfg.beta_min);
      exp.control.solver_cfg.beta_max =
          value.value("beta_max", exp.control.solver_cfg.beta_max);
    } else if (key == "seeds") {
      exp.seeds = value.get<std::vector<uint64_t>>();
    } else if (key == "output_dir") {
      exp.output_dir = value.get<std::string>();
    } else if (key == "tag") {
      exp.tag = value.get<std::string>();
    } else if (key == "write_traces") {
      exp.write_traces = value.get<bool>();
    } else {
      throw std::runtime_error("unknown config key: " + key);
    }
  }
}

struct Flags {
  std::string config;
  int rows = 0;
  int cols = 0;
  double spacing = 0.0;
  std::string network_file;
  double rate = 0.0;
  int duration = 0;
  double free_flow_speed = 0.0;
  double saturation_flow = 0.0;
  double jam_spacing = 0.0;
  int cycle = 0;
  std::string controller;
  std::string solver;
  int k_h = 0;
  double flip_prob = 0.0;
  bool drift_term = false;
  int num_reads = 0;
  int sweeps = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<uint64_t> seeds;
  int replications = 0;
  std::string output_dir;
  std::string tag;
  bool no_traces = false;
};

void add_common_options(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config, "JSON config file; flags override it");
  app.add_option("--rows", f.rows, "lattice rows");
  app.add_option("--cols", f.cols, "lattice columns");
  app.add_option("--spacing", f.spacing, "lattice spacing in meters");
  app.add_option("--network", f.network_file,
                 "network file (overrides the lattice)");
  app.add_option("--rate", f.rate, "vehicle generation rate per second");
  app.add_option("--duration", f.duration, "run length in seconds");
  app.add_option("--vf", f.free_flow_speed, "free-flow speed in m/s");
  app.add_option("--sat-flow", f.saturation_flow,
                 "saturation flow per approach");
  app.add_option("--jam-spacing", f.jam_spacing,
                 "meters of link per queued vehicle");
  app.add_option("--cycle", f.cycle, "control cycle in seconds");
  app.add_option("--controller", f.controller,
                 "ampic, local, random, or pattern");
  app.add_option("--solver", f.solver, "exact, greedy, or sa");
  app.add_option("--kh", f.k_h, "prediction horizon in cycles");
  app.add_option("--flip-prob", f.flip_prob,
                 "random-controller switching probability");
  app.add_flag("--drift", f.drift_term,
               "keep the constant drift term in the prediction");
  app.add_option("--num-reads", f.num_reads, "solver restarts per decision");
  app.add_option("--sweeps", f.sweeps, "annealing sweeps per read");
  app.add_option("--beta-min", f.beta_min, "initial inverse temperature");
  app.add_option("--beta-max", f.beta_max, "final inverse temperature");
  app.add_option("--seeds", f.seeds, "replication seeds")->delimiter(',');
  app.add_option("--replications", f.replications, "use seeds 1..N");
  app.add_option("--out", f.output_dir, "output directory");
  app.add_option("--tag", f.tag, "output base name");
  app.add_flag("--no-traces", f.no_traces, "skip per-second trace files");
}

itc::Experiment build_experiment(const CLI::App& app, const Flags& f) {
  itc::Experiment exp;
  if (app.count("--config")) apply_config_file(exp, f.config);
  if (app.count("--rows")) exp.rows = f.rows;
  if (app.count("--cols")) exp.cols = f.cols;
  if (app.count("--spacing")) exp.spacing = f.spacing;
  if (app.count("--network")) exp.network_file = f.network_file;
  if (app.count("--rate")) exp.sim.generation_rate = f.rate;
  if (app.count("--duration")) exp.sim.duration = f.duration;
  if (app.count("--vf")) exp.sim.free_flow_speed = f.free_flow_speed;
  if (app.count("--sat-flow")) exp.sim.saturation_flow = f.saturation_flow;
  if (app.count("--jam-spacing")) exp.sim.jam_spacing = f.jam_spacing;
  if (app.count("--cycle")) exp.sim.control_cycle = f.cycle;
  if (app.count("--controller")) {
    exp.control.kind = itc::controller_from_name(f.controller);
  }
  if (app.count("--solver")) exp.control.solver = itc::solver_from_name(f.solver);
  if (app.count("--kh")) exp.control.k_h = f.k_h;
  if (app.count("--flip-prob")) exp.control.flip_prob = f.flip_prob;
  if (app.count("--drift")) exp.control.drift_term = f.drift_term;
  if (app.count("--num-reads")) exp.control.solver_cfg.num_reads = f.num_reads;
  if (app.count("--sweeps")) exp.control.solver_cfg.sweeps = f.sweeps;
  if (app.count("--beta-min")) exp.control.solver_cfg.beta_min = f.beta_min;
  if (app.count("--beta-max")) exp.control.solver_cfg.beta_max = f.beta_max;
  if (app.count("--seeds")) exp.seeds = f.seeds;
  if (app.count("--replications")) {
    if (f.replications < 1) throw std::runtime_error("need replications >= 1");
    exp.seeds.clear();
    for (int k = 1; k <= f.replications; ++k) exp.seeds.push_back(k);
  }
  if (app.count("--out")) exp.output_dir = f.output_dir;
  if (app.count("--tag")) exp.tag = f.tag;
  if (f.no_traces) exp.write_traces = false;
  return exp;
}

void print_rows(const std::vector<itc::SummaryRow>& rows) {
  std::fputs(itc::summary_csv(rows).c_str(), stdout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ising-model traffic signal control"};
  app.require_subcommand(1);
  Flags f;

  auto* run = app.add_subcommand("run", "run one experiment");
  add_common_options(*run, f);

  auto* sweep_rate = app.add_subcommand(
      "sweep-rate", "summary table over generation rates and controllers");
  add_common_options(*sweep_rate, f);
  std::vector<double> rates = {0.5, 1.0, 1.5, 2.0, 2.5};
  std::vector<std::string> controllers = {"ampic", "local", "random",
                                          "pattern"};
  int workers = 0;
  sweep_rate->add_option("--rates", rates, "rates to sweep")->delimiter(',');
  sweep_rate->add_option("--controllers", controllers, "controllers to sweep")
      ->delimiter(',');
  sweep_rate->add_option("--workers", workers, "concurrent cells (0 = auto)");

  auto* sweep_size = app.add_subcommand(
      "sweep-size", "lattice-size sweep at scaled demand, with ratio rows");
  add_common_options(*sweep_size, f);
  std::vector<int> sizes = {5, 10};
  std::vector<double> ptilde = {0.1, 0.2, 0.3, 0.4, 0.5};
  sweep_size->add_option("--sizes", sizes, "lattice side lengths")
      ->delimiter(',');
  sweep_size
      ->add_option("--ptilde", ptilde,
                   "scaled rates; rate = ptilde * sqrt(N)")
      ->delimiter(',');
  sweep_size->add_option("--workers", workers, "concurrent cells (0 = auto)");

  auto* sweep_horizon = app.add_subcommand(
      "sweep-horizon", "predictive controller over prediction horizons");
  add_common_options(*sweep_horizon, f);
  std::vector<int> horizons = {1, 2, 3};
  sweep_horizon->add_option("--horizons", horizons, "horizons to sweep")
      ->delimiter(',');
  sweep_horizon->add_option("--workers", workers,
                            "concurrent cells (0 = auto)");

  auto* solve = app.add_subcommand("solve", "minimize one instance file");
  std::string instance_path;
  std::string solve_solver = "sa";
  itc::SolverConfig solve_cfg;
  solve->add_option("instance", instance_path, "instance file")->required();
  solve->add_option("--solver", solve_solver, "exact, greedy, or sa");
  solve->add_option("--num-reads", solve_cfg.num_reads, "solver restarts");
  solve->add_option("--sweeps", solve_cfg.sweeps, "annealing sweeps per read");
  solve->add_option("--beta-min", solve_cfg.beta_min,
                    "initial inverse temperature");
  solve->add_option("--beta-max", solve_cfg.beta_max,
                    "final inverse temperature");
  solve->add_option("--seed", solve_cfg.seed, "solver seed");

  auto* couple = app.add_subcommand(
      "couple", "serve the controller to an external simulator");
  add_common_options(*couple, f);
  int port = -1;
  double prior = 0.5;
  uint64_t couple_seed = 1;
  couple->add_option("--port", port,
                     "listen on 127.0.0.1:PORT (0 = ephemeral); stdio "
                     "without this flag");
  couple->add_option("--prior", prior, "initial outflow rate estimate");
  couple->add_option("--seed", couple_seed, "controller seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      itc::Experiment exp = build_experiment(*run, f);
      auto result = itc::run_experiment(exp);
      print_rows(result.summary);
      std::fprintf(stderr, "wrote %s\n", result.summary_path.c_str());
      for (const auto& path : result.trace_paths) {
        std::fprintf(stderr, "wrote %s\n", path.c_str());
      }
    } else if (sweep_rate->parsed()) {
      itc::Experiment base = build_experiment(*sweep_rate, f);
      std::vector<itc::ControllerKind> kinds;
      for (const auto& name : controllers) {
        kinds.push_back(itc::controller_from_name(name));
      }
      print_rows(itc::sweep_rate(base, rates, kinds, workers));
      std::fprintf(stderr, "wrote %s/sweep_rate.csv\n",
                   base.output_dir.c_str());
    } else if (sweep_size->parsed()) {
      itc::Experiment base = build_experiment(*sweep_size, f);
      print_rows(itc::sweep_size(base, sizes, ptilde, workers));
      std::fprintf(stderr, "wrote %s/sweep_size.csv\n",
                   base.output_dir.c_str());
    } else if (sweep_horizon->parsed()) {
      itc::Experiment base = build_experiment(*sweep_horizon, f);
      print_rows(itc::sweep_horizon(base, horizons, workers));
      std::fprintf(stderr, "wrote %s/sweep_horizon.csv\n",
                   base.output_dir.c_str());
    } else if (solve->parsed()) {
      itc::IsingInstance inst = itc::load_instance(instance_path);
      solve_cfg.validate();
      auto result =
          itc::solve(itc::solver_from_name(solve_solver), inst, solve_cfg);
      std::printf("energy %.17g\n", result.energy);
      std::printf("sigma");
      for (int s : result.sigma) std::printf(" %d", s);
      std::printf("\nreads %d\n", result.reads);
    } else if (couple->parsed()) {
      itc::Experiment exp = build_experiment(*couple, f);
      itc::RoadNetwork net = itc::experiment_network(exp);
      itc::ControllerConfig cfg = exp.control;
      cfg.tau = exp.sim.control_cycle;
      itc::CouplingServer server(net, cfg, couple_seed, prior);
      bool clean;
      if (couple->count("--port")) {
        clean = itc::serve_tcp(server, port, [](int p) {
          std::fprintf(stderr, "listening on 127.0.0.1:%d\n", p);
        });
      } else {
        clean = itc::serve_stream(server, std::cin, std::cout);
      }
      if (!clean) return 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
