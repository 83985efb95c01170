#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "itc/control.hpp"
#include "itc/harness.hpp"
#include "itc/network.hpp"

namespace itc {

/// Runs the controller against an external simulator over newline-delimited
/// JSON. One request per control cycle:
///
///   {"version":1,"type":"counts","t":120,
///    "q":[[1,2,7],[2,1,0],...],          vehicles on road (from,to) at t
///    "exits":[[1,2,31],...],             stop-line crossings in [t-tau, t)
///    "turns":[[1,2,3,12],...]}           road (1,2) -> road (2,3) changes
///
/// is answered with
///
///   {"version":1,"type":"sigma","t":120,"sigma":[[2,1],[3,-1],...]}
///
/// listing the signal state per controlled intersection id. "exits" and
/// "turns" are optional; without them the flow estimates stay at their
/// priors. A {"type":"end"} request closes the loop without a reply.
/// Timestamps must arrive as ascending multiples of the control cycle.
/// Malformed input draws a {"type":"error","message":...} reply and
/// terminates the loop. Roads absent from "q" count as empty (one warning
/// per request on stderr).
class CouplingServer {
 public:
  CouplingServer(const RoadNetwork& net, const ControllerConfig& cfg,
                 uint64_t seed, double prior = 0.5);

  /// Processes one request line. Returns the reply line (no trailing
  /// newline), or an empty string when the request was "end".
  std::string handle_line(const std::string& line);

  bool done() const { return done_; }
  bool failed() const { return failed_; }
  int cycles() const { return cycles_; }

 private:
  std::string fail(const std::string& message);

  const RoadNetwork& net_;
  Controller ctl_;
  FlowStats stats_;
  int cycle_seconds_;
  int cycles_ = 0;
  bool done_ = false;
  bool failed_ = false;
};

/// Serves requests line by line until "end", EOF, or a protocol error.
/// Returns true when the loop ended cleanly.
bool serve_stream(CouplingServer& server, std::istream& in, std::ostream& out);

/// Binds 127.0.0.1:port (0 picks an ephemeral port, written back), accepts
/// one peer, and serves it. `on_listen` fires with the bound port once the
/// socket accepts connections. Returns true when the loop ended cleanly.
bool serve_tcp(CouplingServer& server, int& port,
               const std::function<void(int)>& on_listen = {});

/// Drives the built-in simulator through the coupling protocol: `exchange`
/// sends one request line and returns the reply line. Produces the same
/// trace as run_single over a loopback exchange.
std::vector<StepMetrics> run_coupled(
    const RoadNetwork& net, const Experiment& exp, uint64_t seed,
    const std::function<std::string(const std::string&)>& exchange);

}  // namespace itc
