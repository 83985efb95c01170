#include "itc/ising.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace itc {

namespace {

void check_sigma(const std::vector<int>& sigma, int n, const char* what) {
  if (static_cast<int>(sigma.size()) != n) {
    throw std::invalid_argument(std::string(what) + ": expected " +
                                std::to_string(n) + " spins, got " +
                                std::to_string(sigma.size()));
  }
  for (int v : sigma) {
    if (v != 1 && v != -1) {
      throw std::invalid_argument(std::string(what) +
                                  ": spins must be +1 or -1");
    }
  }
}

}  // namespace

double energy(const IsingInstance& inst, const std::vector<int>& sigma) {
  check_sigma(sigma, inst.n, "energy");
  double e = inst.offset;
  for (int g = 0; g < inst.n; ++g) e += inst.h[g] * sigma[g];
  for (const auto& [g1, g2, j] : inst.couplings) e += j * sigma[g1] * sigma[g2];
  return e;
}

std::vector<double> compute_bias_vector(const RoadNetwork& net,
                                        const TrafficSnapshot& snapshot) {
  if (snapshot.counts.size() != net.roads().size()) {
    throw std::invalid_argument("compute_bias_vector: snapshot has " +
                                std::to_string(snapshot.counts.size()) +
                                " road counts, network has " +
                                std::to_string(net.roads().size()));
  }
  const auto& controlled = net.controlled_nodes();
  std::vector<double> x(controlled.size(), 0.0);
  for (size_t c = 0; c < controlled.size(); ++c) {
    for (int r : net.incoming(controlled[c])) {
      const Road& road = net.roads()[r];
      x[c] += road.eta * road.sign * snapshot.counts[r];
    }
  }
  return x;
}

InternalModel build_internal_model(const RoadNetwork& net,
                                   const FlowStats& stats, double tau, int k_h,
                                   const std::vector<double>& q_diag) {
  if (tau <= 0.0) throw std::invalid_argument("tau must be positive");
  if (k_h < 1) throw std::invalid_argument("k_h must be at least 1");
  const auto& controlled = net.controlled_nodes();
  const int n = static_cast<int>(controlled.size());

  InternalModel model;
  model.n = n;
  model.k_h = k_h;
  model.tau = tau;
  model.a.assign(static_cast<size_t>(n) * n, 0.0);
  model.b.assign(n, 0.0);
  if (q_diag.empty()) {
    model.q_diag.assign(n, 1.0);
  } else {
    if (static_cast<int>(q_diag.size()) != n) {
      throw std::invalid_argument("q_diag must have one weight per controlled "
                                  "intersection");
    }
    for (double q : q_diag) {
      if (!(q > 0.0)) {
        throw std::invalid_argument("q_diag entries must be positive");
      }
    }
    model.q_diag = q_diag;
  }
  model.node_ids.reserve(n);
  for (size_t c = 0; c < controlled.size(); ++c) {
    model.node_ids.push_back(net.intersections()[controlled[c]].id);
  }

  for (int row = 0; row < n; ++row) {
    const int node = controlled[row];
    double diag = 0.0;
    double bias = 0.0;
    for (int r : net.incoming(node)) {
      const Road& road = net.roads()[r];
      diag -= 0.5 * road.eta * o_delta(stats, net, r);
      bias += 0.5 * road.eta * road.sign * (a_bar(stats, r) - o_bar(stats, net, r));
      const int col = net.controlled_index(net.node_index(road.from));
      if (col >= 0) {
        model.a[static_cast<size_t>(row) * n + col] =
            0.5 * road.eta * road.sign * a_delta(stats, r);
      }
    }
    model.a[static_cast<size_t>(row) * n + row] = diag;
    model.b[row] = bias;
  }
  return model;
}

std::vector<std::vector<double>> predict_bias(
    const InternalModel& model, const std::vector<double>& x0,
    const std::vector<std::vector<int>>& sigma_seq) {
  if (static_cast<int>(x0.size()) != model.n) {
    throw std::invalid_argument("predict_bias: x0 has wrong dimension");
  }
  if (static_cast<int>(sigma_seq.size()) != model.k_h) {
    throw std::invalid_argument("predict_bias: expected " +
                                std::to_string(model.k_h) +
                                " decision vectors, got " +
                                std::to_string(sigma_seq.size()));
  }
  std::vector<std::vector<double>> trajectory;
  trajectory.reserve(model.k_h);
  std::vector<double> x = x0;
  for (int m = 0; m < model.k_h; ++m) {
    check_sigma(sigma_seq[m], model.n, "predict_bias");
    std::vector<double> next(model.n);
    for (int i = 0; i < model.n; ++i) {
      double drift = model.b_tilde(i);
      for (int j = 0; j < model.n; ++j) {
        drift += model.a_tilde(i, j) * sigma_seq[m][j];
      }
      next[i] = x[i] + drift;
    }
    trajectory.push_back(next);
    x = std::move(next);
  }
  return trajectory;
}

IsingInstance compile_ising(const InternalModel& model,
                            const std::vector<double>& x0) {
  const int n = model.n;
  const int kh = model.k_h;
  if (static_cast<int>(x0.size()) != n) {
    throw std::invalid_argument("compile_ising: x0 has wrong dimension");
  }
  if (static_cast<int>(model.a.size()) != n * n ||
      static_cast<int>(model.b.size()) != n ||
      static_cast<int>(model.q_diag.size()) != n) {
    throw std::invalid_argument("compile_ising: inconsistent model dimensions");
  }

  IsingInstance inst;
  inst.n = n * kh;
  inst.h.assign(inst.n, 0.0);
  if (n == 0) return inst;

  // s = a_tilde^T Q a_tilde, the coupling kernel between two decisions.
  std::vector<double> s(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double v = 0.0;
      for (int m = 0; m < n; ++m) {
        v += model.a_tilde(m, i) * model.q_diag[m] * model.a_tilde(m, j);
      }
      s[static_cast<size_t>(i) * n + j] = v;
      s[static_cast<size_t>(j) * n + i] = v;
    }
  }

  for (int g1 = 0; g1 < inst.n; ++g1) {
    const int r1 = g1 / n;
    const int i = g1 % n;
    for (int g2 = g1 + 1; g2 < inst.n; ++g2) {
      const int r2 = g2 / n;
      const int j = g2 % n;
      const int factor = kh - std::max(r1, r2);
      const double v = 2.0 * factor * s[static_cast<size_t>(i) * n + j];
      if (v != 0.0) inst.couplings.emplace_back(g1, g2, v);
    }
  }

  for (int cycle = 0; cycle < kh; ++cycle) {
    const double drift_weight =
        0.5 * (static_cast<double>(kh) * (kh + 1) - cycle * (cycle + 1.0));
    std::vector<double> w(n);
    for (int m = 0; m < n; ++m) {
      w[m] = (kh - cycle) * x0[m] + drift_weight * model.b_tilde(m);
    }
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      for (int m = 0; m < n; ++m) {
        v += model.a_tilde(m, i) * model.q_diag[m] * w[m];
      }
      inst.h[spin_index(cycle, i, n)] = 2.0 * v;
    }
  }

  double trace = 0.0;
  for (int i = 0; i < n; ++i) trace += s[static_cast<size_t>(i) * n + i];
  inst.offset = 0.5 * kh * (kh + 1) * trace;
  for (int m = 1; m <= kh; ++m) {
    for (int i = 0; i < n; ++i) {
      const double y = x0[i] + m * model.b_tilde(i);
      inst.offset += y * model.q_diag[i] * y;
    }
  }
  return inst;
}

std::string instance_to_text(const IsingInstance& inst) {
  std::string out;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "n %d\n", inst.n);
  out += buf;
  std::snprintf(buf, sizeof(buf), "offset %.17g\n", inst.offset);
  out += buf;
  for (int g = 0; g < inst.n; ++g) {
    if (inst.h[g] == 0.0) continue;
    std::snprintf(buf, sizeof(buf), "h %d %.17g\n", g, inst.h[g]);
    out += buf;
  }
  for (const auto& [g1, g2, j] : inst.couplings) {
    std::snprintf(buf, sizeof(buf), "J %d %d %.17g\n", g1, g2, j);
    out += buf;
  }
  return out;
}

IsingInstance instance_from_text(const std::string& text) {
  IsingInstance inst;
  bool have_n = false;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string key;
    if (!(fields >> key) || key[0] == '#') continue;
    const std::string where = "instance line " + std::to_string(line_no);
    if (key == "n") {
      int n = -1;
      if (!(fields >> n) || n < 0) {
        throw ParseError(where + ": invalid spin count");
      }
      inst.n = n;
      inst.h.assign(n, 0.0);
      have_n = true;
    } else if (key == "offset") {
      if (!(fields >> inst.offset)) {
        throw ParseError(where + ": invalid offset");
      }
    } else if (key == "h") {
      int g = -1;
      double v = 0.0;
      if (!have_n) throw ParseError(where + ": 'h' before 'n'");
      if (!(fields >> g >> v) || g < 0 || g >= inst.n) {
        throw ParseError(where + ": invalid field term");
      }
      inst.h[g] += v;
    } else if (key == "J") {
      int g1 = -1;
      int g2 = -1;
      double v = 0.0;
      if (!have_n) throw ParseError(where + ": 'J' before 'n'");
      if (!(fields >> g1 >> g2 >> v) || g1 < 0 || g1 >= inst.n || g2 < 0 ||
          g2 >= inst.n || g1 == g2) {
        throw ParseError(where + ": invalid coupling term");
      }
      inst.couplings.emplace_back(std::min(g1, g2), std::max(g1, g2), v);
    } else {
      throw ParseError(where + ": unknown record '" + key + "'");
    }
  }
  if (!have_n) throw ParseError("instance text: missing 'n' record");
  return inst;
}

void save_instance(const IsingInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file: " + path);
  out << instance_to_text(inst);
  if (!out.flush()) {
    throw std::runtime_error("failed writing instance file: " + path);
  }
}

IsingInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open instance file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return instance_from_text(buffer.str());
}

}  // namespace itc
