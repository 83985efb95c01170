#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "itc/control.hpp"
#include "itc/mesosim.hpp"
#include "itc/network.hpp"

namespace itc {

/// One benchmark scenario: a network, traffic demand, a controller, and the
/// seeds to replicate over.
struct Experiment {
  int rows = 5;
  int cols = 5;
  double spacing = 200.0;
  std::string network_file;  // overrides the lattice when set
  SimConfig sim;
  ControllerConfig control;
  std::vector<uint64_t> seeds = {1};
  std::string output_dir = ".";
  std::string tag;  // output base name; derived from the config when empty
  bool write_traces = true;

  void validate() const;
};

RoadNetwork experiment_network(const Experiment& exp);
std::string experiment_name(const Experiment& exp, const RoadNetwork& net);

/// Time averages of one seed's per-second trace.
struct SeedSummary {
  uint64_t seed = 0;
  double mean_velocity = 0.0;
  double waiting_ratio = 0.0;
  double co2_rate = 0.0;
  double squared_bias = 0.0;
  double vehicle_count = 0.0;
  double solve_seconds = 0.0;  // wall time inside solvers; diagnostics only
};

/// mean and standard error across seeds for one indicator.
struct SummaryRow {
  std::string controller;
  double rate = 0.0;
  int n_nodes = 0;
  int k_h = 1;
  std::string solver;
  int seed_count = 0;
  std::string indicator;
  double mean = 0.0;
  double std_error = 0.0;
};

struct ExperimentResult {
  std::vector<std::vector<StepMetrics>> traces;  // one per seed
  std::vector<SeedSummary> per_seed;
  std::vector<SummaryRow> summary;
  std::vector<std::string> trace_paths;
  std::string summary_path;
};

/// One seed: per second, update the controller at control instants, step the
/// simulator, collect a metric row. Feeds the flow estimates every second and
/// refreshes the derived rates each cycle.
std::vector<StepMetrics> run_single(const RoadNetwork& net,
                                    const Experiment& exp, uint64_t seed,
                                    double* solve_seconds = nullptr);

SeedSummary summarize_trace(uint64_t seed,
                            const std::vector<StepMetrics>& trace,
                            double solve_seconds = 0.0);

std::vector<SummaryRow> summarize(const Experiment& exp,
                                  const RoadNetwork& net,
                                  const std::vector<SeedSummary>& per_seed);

/// Runs all seeds, writes one trace CSV per seed plus a summary CSV
/// (atomically), and returns everything in memory.
ExperimentResult run_experiment(const Experiment& exp);

std::string trace_csv_header();
std::string trace_csv_row(int t, const StepMetrics& m);
std::string summary_csv(const std::vector<SummaryRow>& rows);
std::vector<StepMetrics> read_trace_csv(const std::string& path);
std::vector<SummaryRow> read_summary_csv(const std::string& path);
void write_text_atomic(const std::string& path, const std::string& content);

/// Recomputes every summary row from the trace files and throws
/// std::runtime_error on any mismatch beyond 1e-9 relative.
void audit_experiment(const std::string& summary_path,
                      const std::vector<std::string>& trace_paths);

/// Sweeps run their (config, seed) cells on a small thread pool and are
/// resumable: each finished cell is persisted under
/// <output_dir>/cells/cell_<hash>.csv and skipped on the next invocation.
std::vector<SummaryRow> sweep_rate(const Experiment& base,
                                   const std::vector<double>& rates,
                                   const std::vector<ControllerKind>& kinds,
                                   int workers = 0);

/// Square lattices; demand scales with network size: rate = scaled_rate *
/// sqrt(side*side). Runs the model-predictive controller and the sign-rule
/// baseline, and adds per-seed ratio rows (controller "ampic/local").
std::vector<SummaryRow> sweep_size(const Experiment& base,
                                   const std::vector<int>& sides,
                                   const std::vector<double>& scaled_rates,
                                   int workers = 0);

std::vector<SummaryRow> sweep_horizon(const Experiment& base,
                                      const std::vector<int>& horizons,
                                      int workers = 0);

uint64_t fnv64(const std::string& text);
std::string cell_key(const Experiment& exp, uint64_t seed);

}  // namespace itc
