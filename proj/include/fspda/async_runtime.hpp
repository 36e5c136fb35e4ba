#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fspda/sync_engine.hpp"

namespace fspda {

// Streamed gossip payload: (coordinate, value) pairs in strictly increasing
// coordinate order, tagged with the sender's clock. Application is
// transactional — coordinates are staged and committed only on completion.
struct GossipMessage {
  int sender = -1;
  long sender_clock = 0;
  std::vector<std::uint32_t> coords;
  std::vector<double> values;
  bool completed = false;
};

// Per-agent runtime shared by the logical communication and computation
// threads: current (x, dual) tagged with the local clock, the communication
// buffer of completed-but-unconsumed gossips, the gradient counter, and the
// pending stochastic-gradient slot.
struct AgentRuntime {
  int id = -1;
  std::vector<double> x;
  std::vector<double> dual;
  long clock = 0;       // t_i
  long grad_count = 0;  // g_i

  struct BufferEntry {
    int peer;
    long peer_clock;
    std::vector<std::uint32_t> coords;
    std::vector<double> peer_values;
  };
  std::vector<BufferEntry> buffer;  // B_i; transitions only {} -> {j} -> {}

  // pending SG result (completed, unconsumed)
  bool sg_ready = false;
  std::vector<double> sg;
  long sg_generation = 0;  // bumped on interruption; stale completions ignored

  AgentRuntime() = default;
  AgentRuntime(int id_, int d) : id(id_), x(d, 0.0), dual(d, 0.0), sg(d, 0.0) {}
};

enum class GossipOutcome { Success, Skipped, Failed };

// Local SG step (buffer empty): with c_hat = g_i/(t_i+1),
//   x_i <- x_i - eta*dual_i - alpha*c_hat*grad,  t_i <- t_i + 1.
// Consumes the pending gradient slot.
void local_sg_step(AgentRuntime& agent, const HyperParams& hp);

// One communication-thread handshake over an active edge. Guard: both
// buffers empty. If one endpoint lags, it first consumes any ready SG via
// the local SG step, then applies the catch-up non-SG step
//   x <- x - (t_peer - t)*eta*dual,  t <- t_peer  (dual unchanged),
// interrupting any in-flight SG (reported through `interrupted_*`). Then the
// masked coordinates are exchanged and both buffers record the peer.
// `fail` simulates a timeout: the whole transaction is skipped and neither
// endpoint changes.
GossipOutcome comm_thread_step(AgentRuntime& a, AgentRuntime& b,
                               std::span<const std::uint32_t> mask,
                               const HyperParams& hp, bool fail,
                               bool* interrupted_a = nullptr,
                               bool* interrupted_b = nullptr);

enum class CompStepKind { LocalSg, GossipSg };

// One computation-thread step after the SG slot resolves. Empty buffer:
// local SG step. Otherwise the gossip-with-SG step over the buffered peers:
//   t' = max(t_i, max_j t_j), d = 1 + t' - t_i,
//   c_hat = g_i/(t'+1) if the gradient is ready else 0,
//   x_i <- x_i - gamma*sum_j C_ij(x_i - x_j) - d*eta*dual_i
//          - alpha*c_hat*grad,
//   dual_i <- dual_i + beta*sum_j C_ij(x_i - x_j), t_i <- t'+1, B_i <- {}.
CompStepKind comp_thread_step(AgentRuntime& agent, const HyperParams& hp);

struct AsyncScheduler {
  enum class Mode { ScriptedRounds, RandomEvents };
  Mode mode = Mode::ScriptedRounds;
  // random-events parameters
  double mean_sg_duration = 1.0;
  double mean_gossip_interval = 0.25;  // per-edge attempt spacing
  double gossip_failure_prob = 0.0;
  std::uint64_t event_seed = 0xA11;
};

struct AsyncEvent {
  double time;
  int agent;           // -1 for gossip events
  int edge;            // -1 for SG events
  std::string kind;    // "sg_complete" | "gossip" | "interrupt"
  long clock_after;
};

struct AsyncRunResult {
  std::vector<MetricsRecord> metrics;
  std::vector<AgentRuntime> agents;
  std::vector<AsyncEvent> trace;  // populated when trace_events is set
  long events_processed = 0;
  double dual_sum_drift = 0;  // max |sum_i dual_i| over the run (per coord, L2)
};

// Event-driven runtime. Terminates when max_i t_i >= config.T; metrics are
// recorded on a global sampling clock every `metric_period` logical
// iterations of the fastest agent. Scripted mode replays the synchronous
// schedule (per round: handshakes for the round's sample, then every agent
// completes one SG and takes one computation step) and reproduces the sync
// engine's trajectories exactly when fed the same seeds. Detects deadlock
// (no eligible event before reaching T) and aborts naming the blocked
// agents.
AsyncRunResult run_async(const RunConfig& config, const ObjectiveSuite& suite,
                         const Topology& topology,
                         const AsyncScheduler& scheduler,
                         bool trace_events = false);

void write_event_trace(const std::vector<AsyncEvent>& trace,
                       std::ostream& out);

}  // namespace fspda
