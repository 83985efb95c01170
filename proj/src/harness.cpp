#include "itc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "itc/flowstats.hpp"

namespace itc {

namespace {

namespace fs = std::filesystem;

constexpr const char* kIndicators[] = {"mean_velocity", "waiting_ratio",
                                       "co2_rate", "squared_bias",
                                       "vehicle_count"};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double indicator_value(const SeedSummary& s, const std::string& name) {
  if (name == "mean_velocity") return s.mean_velocity;
  if (name == "waiting_ratio") return s.waiting_ratio;
  if (name == "co2_rate") return s.co2_rate;
  if (name == "squared_bias") return s.squared_bias;
  if (name == "vehicle_count") return s.vehicle_count;
  throw std::invalid_argument("unknown indicator: " + name);
}

void mean_and_error(const std::vector<double>& values, double& mean,
                    double& std_error) {
  mean = 0.0;
  for (double v : values) mean += v;
  mean /= values.size();
  std_error = 0.0;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    std_error = std::sqrt(ss / (values.size() - 1) / values.size());
  }
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string solver_column(const ControllerConfig& cfg) {
  return cfg.kind == ControllerKind::ampic ? solver_name(cfg.solver) : "-";
}

std::string cell_path(const Experiment& exp, uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv64(cell_key(exp, seed))));
  return exp.output_dir + "/cells/cell_" + buf + ".csv";
}

std::string cell_csv(const SeedSummary& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                static_cast<unsigned long long>(s.seed), s.mean_velocity,
                s.waiting_ratio, s.co2_rate, s.squared_bias, s.vehicle_count,
                s.solve_seconds);
  return std::string(
             "seed,mean_velocity,waiting_ratio,co2_rate,squared_bias,"
             "vehicle_count,solve_seconds\n") +
         buf;
}

bool read_cell(const std::string& path, uint64_t seed, SeedSummary& out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string header;
  std::string row;
  if (!std::getline(in, header) || !std::getline(in, row)) return false;
  auto fields = split_line(row);
  if (fields.size() != 7) return false;
  try {
    if (std::stoull(fields[0]) != seed) return false;
    out.seed = seed;
    out.mean_velocity = std::stod(fields[1]);
    out.waiting_ratio = std::stod(fields[2]);
    out.co2_rate = std::stod(fields[3]);
    out.squared_bias = std::stod(fields[4]);
    out.vehicle_count = std::stod(fields[5]);
    out.solve_seconds = std::stod(fields[6]);
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

struct CellTask {
  const Experiment* exp;
  const RoadNetwork* net;
  uint64_t seed;
  SeedSummary* out;
};

/// Runs cells on a pool; finished cells are loaded from disk instead of
/// being recomputed.
void run_cells(std::vector<CellTask>& tasks, int workers) {
  if (tasks.empty()) return;
  fs::create_directories(tasks[0].exp->output_dir + "/cells");
  std::atomic<size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const size_t k = next.fetch_add(1);
      if (k >= tasks.size()) return;
      CellTask& task = tasks[k];
      try {
        const std::string path = cell_path(*task.exp, task.seed);
        if (read_cell(path, task.seed, *task.out)) continue;
        double solve_seconds = 0.0;
        auto trace = run_single(*task.net, *task.exp, task.seed,
                                &solve_seconds);
        *task.out = summarize_trace(task.seed, trace, solve_seconds);
        write_text_atomic(path, cell_csv(*task.out));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(tasks.size());
        return;
      }
    }
  };
  int n = workers > 0 ? workers
                      : static_cast<int>(std::min<size_t>(
                            std::max(1u, std::thread::hardware_concurrency()),
                            tasks.size()));
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (int i = 0; i < n; ++i) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::vector<SeedSummary> run_all_seeds(const Experiment& exp,
                                       const RoadNetwork& net, int workers) {
  std::vector<SeedSummary> out(exp.seeds.size());
  std::vector<CellTask> tasks;
  tasks.reserve(exp.seeds.size());
  for (size_t k = 0; k < exp.seeds.size(); ++k) {
    tasks.push_back({&exp, &net, exp.seeds[k], &out[k]});
  }
  run_cells(tasks, workers);
  return out;
}

std::vector<SummaryRow> ratio_rows(const Experiment& exp,
                                   const RoadNetwork& net,
                                   const std::vector<SeedSummary>& num,
                                   const std::vector<SeedSummary>& den) {
  std::vector<SummaryRow> rows;
  for (const char* indicator : kIndicators) {
    std::vector<double> ratios;
    for (size_t k = 0; k < num.size(); ++k) {
      const double a = indicator_value(num[k], indicator);
      const double b = indicator_value(den[k], indicator);
      if (b == 0.0) {
        ratios.push_back(a == 0.0 ? 1.0
                                  : std::numeric_limits<double>::infinity());
      } else {
        ratios.push_back(a / b);
      }
    }
    SummaryRow row;
    row.controller = "ampic/local";
    row.rate = exp.sim.generation_rate;
    row.n_nodes = net.node_count();
    row.k_h = exp.control.k_h;
    row.solver = solver_name(exp.control.solver);
    row.seed_count = static_cast<int>(ratios.size());
    row.indicator = indicator;
    mean_and_error(ratios, row.mean, row.std_error);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

void Experiment::validate() const {
  sim.validate();
  control.validate();
  if (seeds.empty()) throw std::invalid_argument("need at least one seed");
  if (sim.duration < sim.control_cycle) {
    throw std::invalid_argument("duration must cover one control cycle");
  }
  if (network_file.empty()) {
    if (rows < 2 || cols < 2) {
      throw std::invalid_argument("lattice needs at least 2x2 intersections");
    }
    if (!(spacing > 0.0)) {
      throw std::invalid_argument("lattice spacing must be positive");
    }
  }
  if (output_dir.empty()) {
    throw std::invalid_argument("output directory must be set");
  }
}

RoadNetwork experiment_network(const Experiment& exp) {
  if (!exp.network_file.empty()) return load_network(exp.network_file);
  return generate_lattice(exp.rows, exp.cols, exp.spacing);
}

std::string experiment_name(const Experiment& exp, const RoadNetwork& net) {
  if (!exp.tag.empty()) return exp.tag;
  std::string name = controller_name(exp.control.kind);
  if (exp.network_file.empty()) {
    name += "_" + std::to_string(exp.rows) + "x" + std::to_string(exp.cols);
  } else {
    name += "_net" + std::to_string(net.node_count());
  }
  name += "_r" + fmt("%g", exp.sim.generation_rate);
  name += "_kh" + std::to_string(exp.control.k_h);
  if (exp.control.kind == ControllerKind::ampic) {
    name += "_" + solver_name(exp.control.solver);
  }
  return name;
}

std::vector<StepMetrics> run_single(const RoadNetwork& net,
                                    const Experiment& exp, uint64_t seed,
                                    double* solve_seconds) {
  SimConfig sim_cfg = exp.sim;
  sim_cfg.seed = seed;
  Simulation sim(net, sim_cfg);
  FlowStats stats = make_flow_stats(net, sim_cfg.saturation_flow);
  ControllerConfig ctl_cfg = exp.control;
  ctl_cfg.tau = sim_cfg.control_cycle;
  Controller controller(net, ctl_cfg, seed);

  std::vector<StepMetrics> trace;
  trace.reserve(sim_cfg.duration);
  double solved = 0.0;
  for (int t = 0; t < sim_cfg.duration; ++t) {
    if (t % sim_cfg.control_cycle == 0) {
      refresh_turning(stats, net);
      compute_inflow(stats, net);
      controller.decide(sim.observe(), stats);
      solved += controller.last_plan().solve_seconds;
    }
    trace.push_back(sim.step(controller.sigma()));
    update_outflow(stats, net, sim.green_last_step(),
                   sim.departures_last_step());
    for (auto [from, to] : sim.transitions_last_step()) {
      record_transition(stats, net, from, to);
    }
  }
  if (solve_seconds) *solve_seconds = solved;
  return trace;
}

SeedSummary summarize_trace(uint64_t seed,
                            const std::vector<StepMetrics>& trace,
                            double solve_seconds) {
  if (trace.empty()) throw std::invalid_argument("empty metric trace");
  SeedSummary s;
  s.seed = seed;
  s.solve_seconds = solve_seconds;
  for (const StepMetrics& m : trace) {
    s.mean_velocity += m.mean_velocity;
    s.waiting_ratio += m.waiting_ratio;
    s.co2_rate += m.co2_rate;
    s.squared_bias += m.squared_bias;
    s.vehicle_count += m.vehicle_count;
  }
  const double n = static_cast<double>(trace.size());
  s.mean_velocity /= n;
  s.waiting_ratio /= n;
  s.co2_rate /= n;
  s.squared_bias /= n;
  s.vehicle_count /= n;
  return s;
}

std::vector<SummaryRow> summarize(const Experiment& exp,
                                  const RoadNetwork& net,
                                  const std::vector<SeedSummary>& per_seed) {
  std::vector<SummaryRow> rows;
  for (const char* indicator : kIndicators) {
    std::vector<double> values;
    values.reserve(per_seed.size());
    for (const SeedSummary& s : per_seed) {
      values.push_back(indicator_value(s, indicator));
    }
    SummaryRow row;
    row.controller = controller_name(exp.control.kind);
    row.rate = exp.sim.generation_rate;
    row.n_nodes = net.node_count();
    row.k_h = exp.control.k_h;
    row.solver = solver_column(exp.control);
    row.seed_count = static_cast<int>(per_seed.size());
    row.indicator = indicator;
    mean_and_error(values, row.mean, row.std_error);
    rows.push_back(row);
  }
  return rows;
}

std::string trace_csv_header() {
  return "t,mean_velocity,waiting_ratio,co2_rate,squared_bias,vehicle_count\n";
}

std::string trace_csv_row(int t, const StepMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%d\n", t,
                m.mean_velocity, m.waiting_ratio, m.co2_rate, m.squared_bias,
                m.vehicle_count);
  return buf;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out =
      "controller,rate,N,k_h,solver,seed_count,indicator,mean,stderr\n";
  char buf[256];
  for (const SummaryRow& row : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.10g,%d,%d,%s,%d,%s,%.10g,%.10g\n",
                  row.controller.c_str(), row.rate, row.n_nodes, row.k_h,
                  row.solver.c_str(), row.seed_count, row.indicator.c_str(),
                  row.mean, row.std_error);
    out += buf;
  }
  return out;
}

std::vector<StepMetrics> read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line) || line + "\n" != trace_csv_header()) {
    throw std::runtime_error("unexpected trace header in " + path);
  }
  std::vector<StepMetrics> trace;
  int expected_t = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != 6) {
      throw std::runtime_error("malformed trace row in " + path);
    }
    if (std::stoi(fields[0]) != expected_t++) {
      throw std::runtime_error("non-contiguous time steps in " + path);
    }
    StepMetrics m;
    m.mean_velocity = std::stod(fields[1]);
    m.waiting_ratio = std::stod(fields[2]);
    m.co2_rate = std::stod(fields[3]);
    m.squared_bias = std::stod(fields[4]);
    m.vehicle_count = std::stoi(fields[5]);
    trace.push_back(m);
  }
  return trace;
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open summary file: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "controller,rate,N,k_h,solver,seed_count,indicator,mean,stderr") {
    throw std::runtime_error("unexpected summary header in " + path);
  }
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (fields.size() != 9) {
      throw std::runtime_error("malformed summary row in " + path);
    }
    SummaryRow row;
    row.controller = fields[0];
    row.rate = std::stod(fields[1]);
    row.n_nodes = std::stoi(fields[2]);
    row.k_h = std::stoi(fields[3]);
    row.solver = fields[4];
    row.seed_count = std::stoi(fields[5]);
    row.indicator = fields[6];
    row.mean = std::stod(fields[7]);
    row.std_error = std::stod(fields[8]);
    rows.push_back(row);
  }
  return rows;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out << content;
    if (!out.flush()) throw std::runtime_error("failed writing file: " + tmp);
  }
  fs::rename(tmp, path);
}

void audit_experiment(const std::string& summary_path,
                      const std::vector<std::string>& trace_paths) {
  auto rows = read_summary_csv(summary_path);
  std::vector<SeedSummary> per_seed;
  for (const std::string& path : trace_paths) {
    per_seed.push_back(summarize_trace(0, read_trace_csv(path)));
  }
  for (const SummaryRow& row : rows) {
    if (row.seed_count != static_cast<int>(per_seed.size())) {
      throw std::runtime_error("summary seed_count does not match trace count");
    }
    std::vector<double> values;
    for (const SeedSummary& s : per_seed) {
      values.push_back(indicator_value(s, row.indicator));
    }
    double mean = 0.0;
    double std_error = 0.0;
    mean_and_error(values, mean, std_error);
    const double tol = 1e-9 * std::max(1.0, std::fabs(mean));
    if (std::fabs(mean - row.mean) > tol ||
        std::fabs(std_error - row.std_error) > tol) {
      throw std::runtime_error("summary row '" + row.indicator +
                               "' does not match its traces");
    }
  }
}

ExperimentResult run_experiment(const Experiment& exp) {
  exp.validate();
  RoadNetwork net = experiment_network(exp);
  const std::string name = experiment_name(exp, net);
  fs::create_directories(exp.output_dir);

  ExperimentResult result;
  for (uint64_t seed : exp.seeds) {
    double solve_seconds = 0.0;
    auto trace = run_single(net, exp, seed, &solve_seconds);
    result.per_seed.push_back(summarize_trace(seed, trace, solve_seconds));
    if (exp.write_traces) {
      std::string csv = trace_csv_header();
      for (size_t t = 0; t < trace.size(); ++t) {
        csv += trace_csv_row(static_cast<int>(t), trace[t]);
      }
      const std::string path = exp.output_dir + "/" + name + "_seed" +
                               std::to_string(seed) + "_trace.csv";
      write_text_atomic(path, csv);
      result.trace_paths.push_back(path);
    }
    result.traces.push_back(std::move(trace));
  }
  result.summary = summarize(exp, net, result.per_seed);
  result.summary_path = exp.output_dir + "/" + name + "_summary.csv";
  write_text_atomic(result.summary_path, summary_csv(result.summary));
  return result;
}

uint64_t fnv64(const std::string& text) {
  uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

std::string cell_key(const Experiment& exp, uint64_t seed) {
  std::ostringstream key;
  key << "net=";
  if (exp.network_file.empty()) {
    key << exp.rows << "x" << exp.cols << "@" << fmt("%.17g", exp.spacing);
  } else {
    key << exp.network_file;
  }
  key << ";rate=" << fmt("%.17g", exp.sim.generation_rate)
      << ";duration=" << exp.sim.duration
      << ";vf=" << fmt("%.17g", exp.sim.free_flow_speed)
      << ";sat=" << fmt("%.17g", exp.sim.saturation_flow)
      << ";jam=" << fmt("%.17g", exp.sim.jam_spacing)
      << ";cycle=" << exp.sim.control_cycle
      << ";controller=" << controller_name(exp.control.kind)
      << ";solver=" << solver_name(exp.control.solver)
      << ";kh=" << exp.control.k_h
      << ";drift=" << (exp.control.drift_term ? 1 : 0)
      << ";flip=" << fmt("%.17g", exp.control.flip_prob)
      << ";reads=" << exp.control.solver_cfg.num_reads
      << ";sweeps=" << exp.control.solver_cfg.sweeps
      << ";bmin=" << fmt("%.17g", exp.control.solver_cfg.beta_min)
      << ";bmax=" << fmt("%.17g", exp.control.solver_cfg.beta_max) << ";q=";
  for (double q : exp.control.q_diag) key << fmt("%.17g", q) << ",";
  key << ";seed=" << seed;
  return key.str();
}

std::vector<SummaryRow> sweep_rate(const Experiment& base,
                                   const std::vector<double>& rates,
                                   const std::vector<ControllerKind>& kinds,
                                   int workers) {
  if (rates.empty() || kinds.empty()) {
    throw std::invalid_argument("sweep needs at least one rate and controller");
  }
  std::vector<SummaryRow> rows;
  for (ControllerKind kind : kinds) {
    for (double rate : rates) {
      Experiment exp = base;
      exp.control.kind = kind;
      exp.sim.generation_rate = rate;
      exp.write_traces = false;
      exp.validate();
      RoadNetwork net = experiment_network(exp);
      auto per_seed = run_all_seeds(exp, net, workers);
      auto summary = summarize(exp, net, per_seed);
      rows.insert(rows.end(), summary.begin(), summary.end());
    }
  }
  fs::create_directories(base.output_dir);
  write_text_atomic(base.output_dir + "/sweep_rate.csv", summary_csv(rows));
  return rows;
}

std::vector<SummaryRow> sweep_size(const Experiment& base,
                                   const std::vector<int>& sides,
                                   const std::vector<double>& scaled_rates,
                                   int workers) {
  if (sides.empty() || scaled_rates.empty()) {
    throw std::invalid_argument("sweep needs at least one size and rate");
  }
  std::vector<SummaryRow> rows;
  for (int side : sides) {
    for (double scaled : scaled_rates) {
      Experiment exp = base;
      exp.network_file.clear();
      exp.rows = side;
      exp.cols = side;
      exp.sim.generation_rate = scaled * side;
      exp.write_traces = false;

      Experiment ampic = exp;
      ampic.control.kind = ControllerKind::ampic;
      ampic.validate();
      Experiment local = exp;
      local.control.kind = ControllerKind::local;
      local.validate();

      RoadNetwork net = experiment_network(exp);
      auto ampic_seed = run_all_seeds(ampic, net, workers);
      auto local_seed = run_all_seeds(local, net, workers);

      auto a = summarize(ampic, net, ampic_seed);
      auto l = summarize(local, net, local_seed);
      rows.insert(rows.end(), a.begin(), a.end());
      rows.insert(rows.end(), l.begin(), l.end());
      auto rel = ratio_rows(ampic, net, ampic_seed, local_seed);
      rows.insert(rows.end(), rel.begin(), rel.end());
    }
  }
  fs::create_directories(base.output_dir);
  write_text_atomic(base.output_dir + "/sweep_size.csv", summary_csv(rows));
  return rows;
}

std::vector<SummaryRow> sweep_horizon(const Experiment& base,
                                      const std::vector<int>& horizons,
                                      int workers) {
  if (horizons.empty()) {
    throw std::invalid_argument("sweep needs at least one horizon");
  }
  std::vector<SummaryRow> rows;
  for (int k_h : horizons) {
    Experiment exp = base;
    exp.control.kind = ControllerKind::ampic;
    exp.control.k_h = k_h;
    exp.write_traces = false;
    exp.validate();
    RoadNetwork net = experiment_network(exp);
    auto per_seed = run_all_seeds(exp, net, workers);
    auto summary = summarize(exp, net, per_seed);
    rows.insert(rows.end(), summary.begin(), summary.end());

    double solve_total = 0.0;
    for (const SeedSummary& s : per_seed) solve_total += s.solve_seconds;
    const double cycles = static_cast<double>(exp.seeds.size()) *
                          (exp.sim.duration / exp.sim.control_cycle);
    std::fprintf(stderr, "horizon %d: %.6f solver seconds per cycle\n", k_h,
                 solve_total / cycles);
  }
  fs::create_directories(base.output_dir);
  write_text_atomic(base.output_dir + "/sweep_horizon.csv", summary_csv(rows));
  return rows;
}

}  // namespace itc
