#include "fspda/async_runtime.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "json.hpp"

namespace fspda {

void local_sg_step(AgentRuntime& agent, const HyperParams& hp) {
  if (!agent.sg_ready)
    throw std::logic_error("local_sg_step: no gradient in the slot");
  const double c_hat = static_cast<double>(agent.grad_count) /
                       static_cast<double>(agent.clock + 1);
  const size_t d = agent.x.size();
  for (size_t k = 0; k < d; ++k)
    agent.x[k] += -hp.eta * agent.dual[k] - hp.alpha * c_hat * agent.sg[k];
  agent.clock += 1;
  agent.sg_ready = false;
}

namespace {

// Catch-up of the lagging endpoint: consume any ready SG, then the local
// non-SG step x <- x - (t_peer - t)*eta*dual with the dual unchanged.
void catch_up(AgentRuntime& agent, long peer_clock, const HyperParams& hp,
              bool* interrupted) {
  if (interrupted) *interrupted = true;  // any in-flight SG is discarded
  if (agent.sg_ready) local_sg_step(agent, hp);
  const long gap = peer_clock - agent.clock;
  if (gap <= 0) return;
  for (size_t k = 0; k < agent.x.size(); ++k)
    agent.x[k] -= static_cast<double>(gap) * hp.eta * agent.dual[k];
  agent.clock = peer_clock;
}

}  // namespace

GossipOutcome comm_thread_step(AgentRuntime& a, AgentRuntime& b,
                               std::span<const std::uint32_t> mask,
                               const HyperParams& hp, bool fail,
                               bool* interrupted_a, bool* interrupted_b) {
  if (interrupted_a) *interrupted_a = false;
  if (interrupted_b) *interrupted_b = false;
  if (!a.buffer.empty() || !b.buffer.empty()) return GossipOutcome::Skipped;
  // The timeout is decided before any mutation: a failed gossip is a no-op
  // transaction on both endpoints.
  if (fail) return GossipOutcome::Failed;

  if (a.clock < b.clock) catch_up(a, b.clock, hp, interrupted_a);
  else if (b.clock < a.clock) catch_up(b, a.clock, hp, interrupted_b);

  AgentRuntime::BufferEntry for_a{b.id, b.clock, {}, {}};
  AgentRuntime::BufferEntry for_b{a.id, a.clock, {}, {}};
  for_a.coords.assign(mask.begin(), mask.end());
  for_b.coords.assign(mask.begin(), mask.end());
  for (auto k : mask) {
    for_a.peer_values.push_back(b.x[k]);
    for_b.peer_values.push_back(a.x[k]);
  }
  a.buffer.push_back(std::move(for_a));
  b.buffer.push_back(std::move(for_b));
  return GossipOutcome::Success;
}

CompStepKind comp_thread_step(AgentRuntime& agent, const HyperParams& hp) {
  if (agent.buffer.empty()) {
    local_sg_step(agent, hp);  // throws if no gradient either
    return CompStepKind::LocalSg;
  }
  long t_sync = agent.clock;
  for (const auto& e : agent.buffer)
    t_sync = std::max(t_sync, e.peer_clock);
  const double delay = static_cast<double>(1 + t_sync - agent.clock);
  const double c_hat =
      agent.sg_ready ? static_cast<double>(agent.grad_count) /
                           static_cast<double>(t_sync + 1)
                     : 0.0;

  // Masked edge differences, evaluated once at the pre-update state so the
  // dual increments pair antisymmetrically with the peer's.
  std::vector<double> gossip(agent.x.size(), 0.0);
  for (const auto& e : agent.buffer)
    for (size_t m = 0; m < e.coords.size(); ++m) {
      const auto k = e.coords[m];
      gossip[k] += agent.x[k] - e.peer_values[m];
    }

  for (size_t k = 0; k < agent.x.size(); ++k) {
    double step = -hp.gamma * gossip[k] - delay * hp.eta * agent.dual[k];
    if (c_hat != 0.0) step -= hp.alpha * c_hat * agent.sg[k];
    agent.x[k] += step;
    agent.dual[k] += hp.beta * gossip[k];
  }
  agent.clock = t_sync + 1;
  agent.buffer.clear();
  agent.sg_ready = false;
  return CompStepKind::GossipSg;
}

namespace {

AgentStates assemble_states(const std::vector<AgentRuntime>& agents, int d) {
  AgentStates st(static_cast<int>(agents.size()), d, false);
  for (size_t i = 0; i < agents.size(); ++i) {
    std::copy(agents[i].x.begin(), agents[i].x.end(), st.x.block(i).begin());
    std::copy(agents[i].dual.begin(), agents[i].dual.end(),
              st.dual.block(i).begin());
  }
  return st;
}

double dual_sum_norm(const std::vector<AgentRuntime>& agents, int d) {
  double acc = 0;
  for (int k = 0; k < d; ++k) {
    double s = 0;
    for (const auto& a : agents) s += a.dual[k];
    acc += s * s;
  }
  return std::sqrt(acc);
}

void complete_sg(AgentRuntime& agent, const ObjectiveSuite& suite,
                 const RunConfig& config) {
  auto rng = CounterRng::keyed(config.seeds.noise, rng_salt::kGradNoise,
                               static_cast<std::uint64_t>(agent.clock),
                               static_cast<std::uint64_t>(agent.id));
  stochastic_gradient(suite, agent.id, agent.x, config.noise, rng, agent.sg);
  agent.grad_count += 1;
  agent.sg_ready = true;
}

}  // namespace

AsyncRunResult run_async(const RunConfig& config, const ObjectiveSuite& suite,
                         const Topology& topology,
                         const AsyncScheduler& scheduler, bool trace_events) {
  const int n = suite.num_agents(), d = suite.dim();
  if (topology.num_agents() != n)
    throw std::invalid_argument("run_async: topology/suite mismatch");
  if (config.algorithm != AlgorithmKind::FspdaSa)
    throw std::invalid_argument(
        "run_async: the asynchronous runtime implements fspda_sa");

  SamplerSpec sampler_spec = config.sampler;
  sampler_spec.seed = config.seeds.graph;
  GraphSampler sampler(sampler_spec, topology, d);

  AgentStates init = initial_states(config, suite);
  std::vector<AgentRuntime> agents;
  agents.reserve(n);
  for (int i = 0; i < n; ++i) {
    AgentRuntime a(i, d);
    std::copy(init.x.block(i).begin(), init.x.block(i).end(), a.x.begin());
    agents.push_back(std::move(a));
  }

  AsyncRunResult result;
  long long bits_cum = 0;
  auto record = [&](long t) {
    result.metrics.push_back(measure_state(
        t, assemble_states(agents, d), suite, config, bits_cum, nullptr));
  };
  auto max_clock = [&]() {
    long m = 0;
    for (const auto& a : agents) m = std::max(m, a.clock);
    return m;
  };
  record(0);

  if (scheduler.mode == AsyncScheduler::Mode::ScriptedRounds) {
    // One round = the synchronous schedule: handshakes for the round's
    // sample, then every agent completes one SG and takes one step.
    for (long r = 0; max_clock() < config.T; ++r) {
      const double mult = schedule_at(config.schedule, r, config.T);
      HyperParams hp = config.hp;
      hp.alpha *= mult;
      hp.eta *= mult;
      GraphSample sample = sampler.sample(r);
      for (const auto& ae : sample.edges) {
        auto [i, j] = topology.edge(ae.edge);
        auto out = comm_thread_step(agents[i], agents[j], ae.coords, hp,
                                    /*fail=*/false);
        if (out == GossipOutcome::Success)
          bits_cum += account_bits(
              GraphSample{r, {ae}}, config.algorithm, config.bits);
        ++result.events_processed;
      }
      for (auto& agent : agents) {
        complete_sg(agent, suite, config);
        comp_thread_step(agent, hp);
        ++result.events_processed;
      }
      result.dual_sum_drift =
          std::max(result.dual_sum_drift, dual_sum_norm(agents, d));
      const long t = max_clock();
      if (t >= config.T || t % config.metric_period == 0) record(t);
    }
    result.agents = std::move(agents);
    return result;
  }

  // Random event schedule: per-agent SG completions and per-edge gossip
  // attempts with exponential spacing.
  struct Event {
    double time;
    int kind;  // 0 = sg_complete, 1 = gossip_attempt
    int agent;
    int edge;
    long generation;
    bool operator>(const Event& o) const { return time > o.time; }
  };
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue;
  auto rng = CounterRng::keyed(scheduler.event_seed, rng_salt::kEvents);
  auto exp_draw = [&](double mean) {
    double u = rng.next_double();
    while (u <= 0.0) u = rng.next_double();
    return -mean * std::log(u);
  };

  for (int i = 0; i < n; ++i)
    queue.push({exp_draw(scheduler.mean_sg_duration), 0, i, -1, 0});
  std::vector<long> edge_attempts(topology.num_edges(), 0);
  for (int e = 0; e < topology.num_edges(); ++e)
    queue.push({exp_draw(scheduler.mean_gossip_interval), 1, -1, e, 0});

  const double record_dt =
      scheduler.mean_sg_duration * static_cast<double>(config.metric_period);
  double next_record = record_dt;

  while (max_clock() < config.T) {
    if (queue.empty()) {
      std::string blocked;
      for (const auto& a : agents)
        if (a.clock < config.T) blocked += std::to_string(a.id) + " ";
      throw std::runtime_error("run_async: deadlock; blocked agents: " +
                               blocked);
    }
    Event ev = queue.top();
    queue.pop();
    HyperParams hp = config.hp;
    {
      const double mult = schedule_at(config.schedule, max_clock(), config.T);
      hp.alpha *= mult;
      hp.eta *= mult;
    }
    if (ev.kind == 0) {
      AgentRuntime& agent = agents[ev.agent];
      if (ev.generation != agent.sg_generation) continue;  // interrupted
      complete_sg(agent, suite, config);
      auto kind = comp_thread_step(agent, hp);
      ++result.events_processed;
      if (trace_events)
        result.trace.push_back({ev.time, ev.agent, -1,
                                kind == CompStepKind::LocalSg ? "local_sg"
                                                              : "gossip_sg",
                                agent.clock});
      queue.push({ev.time + exp_draw(scheduler.mean_sg_duration), 0, ev.agent,
                  -1, agent.sg_generation});
    } else {
      auto [i, j] = topology.edge(ev.edge);
      auto mask_rng = CounterRng::keyed(
          config.seeds.graph, rng_salt::kCoordMask,
          static_cast<std::uint64_t>(ev.edge),
          static_cast<std::uint64_t>(edge_attempts[ev.edge]++));
      // size-ceil(s*d) mask for this attempt
      const int k = sampler.mask_size();
      std::vector<std::uint32_t> pool(d);
      for (int c = 0; c < d; ++c) pool[c] = c;
      for (int c = 0; c < k; ++c) {
        auto swap_at = c + static_cast<int>(mask_rng.next_below(d - c));
        std::swap(pool[c], pool[swap_at]);
      }
      std::vector<std::uint32_t> mask(pool.begin(), pool.begin() + k);
      std::sort(mask.begin(), mask.end());

      const bool fail = rng.next_double() < scheduler.gossip_failure_prob;
      bool int_i = false, int_j = false;
      auto out =
          comm_thread_step(agents[i], agents[j], mask, hp, fail, &int_i, &int_j);
      ++result.events_processed;
      if (out == GossipOutcome::Success) {
        bits_cum += 2LL * static_cast<long long>(mask.size()) *
                    (config.bits.value_bits + config.bits.index_bits);
        // interrupted computations restart at the synchronized state
        if (int_i) {
          agents[i].sg_generation++;
          queue.push({ev.time + exp_draw(scheduler.mean_sg_duration), 0, i, -1,
                      agents[i].sg_generation});
        }
        if (int_j) {
          agents[j].sg_generation++;
          queue.push({ev.time + exp_draw(scheduler.mean_sg_duration), 0, j, -1,
                      agents[j].sg_generation});
        }
      }
      if (trace_events)
        result.trace.push_back(
            {ev.time, -1, ev.edge,
             out == GossipOutcome::Success
                 ? "gossip"
                 : (out == GossipOutcome::Skipped ? "gossip_skipped"
                                                  : "gossip_failed"),
             std::max(agents[i].clock, agents[j].clock)});
      queue.push({ev.time + exp_draw(scheduler.mean_gossip_interval), 1, -1,
                  ev.edge, 0});
    }
    result.dual_sum_drift =
        std::max(result.dual_sum_drift, dual_sum_norm(agents, d));
    if (ev.time >= next_record) {
      record(max_clock());
      next_record += record_dt;
    }
  }
  record(max_clock());
  result.agents = std::move(agents);
  return result;
}

void write_event_trace(const std::vector<AsyncEvent>& trace,
                       std::ostream& out) {
  for (const auto& ev : trace) {
    nlohmann::json j;
    j["time"] = ev.time;
    if (ev.agent >= 0) j["agent"] = ev.agent;
    if (ev.edge >= 0) j["edge"] = ev.edge;
    j["kind"] = ev.kind;
    j["clock"] = ev.clock_after;
    out << j.dump() << "\n";
  }
}

}  // namespace fspda
