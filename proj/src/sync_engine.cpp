#include "fspda/sync_engine.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

#include "fspda/spectral.hpp"

namespace fspda {

using nlohmann::json;

std::string algorithm_name(AlgorithmKind a) {
  switch (a) {
    case AlgorithmKind::FspdaSa: return "fspda_sa";
    case AlgorithmKind::FspdaStorm: return "fspda_storm";
    case AlgorithmKind::Dsgd: return "dsgd";
  }
  return "?";
}

AlgorithmKind algorithm_from_name(const std::string& name) {
  if (name == "fspda_sa") return AlgorithmKind::FspdaSa;
  if (name == "fspda_storm") return AlgorithmKind::FspdaStorm;
  if (name == "dsgd") return AlgorithmKind::Dsgd;
  throw std::invalid_argument("unknown algorithm: " + name);
}

Topology build_topology(const TopologySpec& spec) {
  switch (spec.kind) {
    case TopologySpec::Kind::Complete: return Topology::complete(spec.n);
    case TopologySpec::Kind::Ring: return Topology::ring(spec.n);
    case TopologySpec::Kind::ErdosRenyi:
      return Topology::erdos_renyi(spec.n, spec.p, spec.seed);
    case TopologySpec::Kind::File: return Topology::from_file(spec.path);
  }
  throw std::logic_error("unreachable");
}

std::unique_ptr<ObjectiveSuite> build_suite(const ProblemSpec& spec, int n,
                                            int d) {
  switch (spec.kind) {
    case ProblemSpec::Kind::Quadratic:
      return make_heterogeneous_quadratic(n, d, spec.heterogeneity, spec.seed);
    case ProblemSpec::Kind::Logistic:
      return make_logistic_suite(n, spec.samples_per_agent, d, spec.partition,
                                 spec.l2, spec.seed);
  }
  throw std::logic_error("unreachable");
}

long long account_bits(const GraphSample& sample, AlgorithmKind algorithm,
                       const BitAccounting& bits) {
  long long per_coord = bits.value_bits + bits.index_bits;
  long long total = 0;
  for (const auto& ae : sample.edges)
    total += 2LL * static_cast<long long>(ae.coords.size()) * per_coord;
  if (algorithm == AlgorithmKind::FspdaStorm) total *= 2;
  return total;
}

AgentStates initial_states(const RunConfig& config,
                           const ObjectiveSuite& suite) {
  const int n = suite.num_agents(), d = suite.dim();
  std::vector<double> x0(d, 0.0);
  switch (config.init.kind) {
    case InitSpec::Kind::Consensus:
      if (!config.init.point.empty()) {
        if (static_cast<int>(config.init.point.size()) != d)
          throw std::invalid_argument("init: point dimension mismatch");
        x0 = config.init.point;
      }
      break;
    case InitSpec::Kind::RandomConsensus: {
      auto rng = CounterRng::keyed(config.seeds.init, rng_salt::kInit);
      for (int k = 0; k < d; ++k)
        x0[k] = config.init.scale * rng.next_gaussian();
      break;
    }
    case InitSpec::Kind::PerAgent: {
      if (static_cast<int>(config.init.points.size()) != n)
        throw std::invalid_argument("init: need one point per agent");
      AgentStates st(n, d, config.algorithm == AlgorithmKind::FspdaStorm);
      for (int i = 0; i < n; ++i) {
        if (static_cast<int>(config.init.points[i].size()) != d)
          throw std::invalid_argument("init: point dimension mismatch");
        auto b = st.x.block(i);
        std::copy(config.init.points[i].begin(), config.init.points[i].end(),
                  b.begin());
      }
      return st;
    }
  }
  if (config.algorithm == AlgorithmKind::FspdaStorm)
    return storm_init(x0, suite, config.hp, config.storm_init_mode);
  AgentStates st(n, d, false);
  for (int i = 0; i < n; ++i) {
    auto b = st.x.block(i);
    std::copy(x0.begin(), x0.end(), b.begin());
  }
  return st;
}

namespace {

void check_finite(const AgentStates& st, long t) {
  auto scan = [&](const BlockVec& v, const char* field) {
    for (int i = 0; i < v.n; ++i)
      for (double val : v.block(i))
        if (!std::isfinite(val))
          throw EngineError({t, i, field},
                            "non-finite value at iteration " +
                                std::to_string(t) + ", agent " +
                                std::to_string(i) + ", field " + field);
  };
  scan(st.x, "x");
  scan(st.dual, "dual");
  if (st.has_momentum) {
    scan(st.primal_momentum, "primal_momentum");
    scan(st.dual_momentum, "dual_momentum");
  }
}

}  // namespace

MetricsRecord measure_state(long t, const AgentStates& st,
                            const ObjectiveSuite& suite,
                            const RunConfig& config, long long bits_cum,
                            const PotentialContext* potential) {
  const int n = st.num_agents();
  MetricsRecord r;
  r.t = t;
  auto x_bar = mean_block(st.x);
  r.grad_norm_sq_avg = suite.global_grad_norm_sq(x_bar);
  double worst_g = 0, worst_f = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    std::vector<double> xi(st.x.block(i).begin(), st.x.block(i).end());
    worst_g = std::max(worst_g, suite.global_grad_norm_sq(xi));
    worst_f = std::max(worst_f, suite.global_value(xi));
  }
  r.worst_grad_norm_sq = worst_g;
  r.worst_loss = worst_f;
  r.consensus_err = k_seminorm_sq(st.x);
  const auto& hp = config.hp;
  if (hp.eta > 0 && config.algorithm != AlgorithmKind::Dsgd)
    r.v_norm_sq = compute_v(st, suite, hp).k_norm_sq;
  if (potential)
    r.potential = compute_potential(st, suite, hp, potential->weights,
                                    potential->expected_laplacian_block)
                      .total;
  r.bits_cum = bits_cum;
  if (suite.optimal_value())
    r.suboptimality = suite.global_value(x_bar) - *suite.optimal_value();
  return r;
}

RunResult run(const RunConfig& config, const ObjectiveSuite& suite,
              const Topology& topology, const StepObserver& observer) {
  const int n = suite.num_agents(), d = suite.dim();
  if (topology.num_agents() != n)
    throw std::invalid_argument("run: topology/suite agent count mismatch");
  if (config.metric_period < 1)
    throw std::invalid_argument("run: metric_period must be >= 1");
  if (config.T < 0) throw std::invalid_argument("run: T must be >= 0");

  SamplerSpec sampler_spec = config.sampler;
  sampler_spec.seed = config.seeds.graph;
  GraphSampler sampler(sampler_spec, topology, d);

  std::optional<PotentialContext> pot_ctx;
  if (config.potential.enabled) {
    IncidenceMatrix inc = build_incidence(topology, d);
    pot_ctx = PotentialContext{
        expected_laplacian(sampler, inc),
        potential_weights(config.hp, config.potential.weight_a,
                          config.potential.delta1)};
  }
  const PotentialContext* pot = pot_ctx ? &*pot_ctx : nullptr;

  AgentStates st = initial_states(config, suite);
  check_finite(st, 0);

  RunResult result;
  long long bits_cum = 0;
  result.metrics.push_back(measure_state(0, st, suite, config, bits_cum, pot));

  BlockVec sgrads(n, d);
  BlockVec masked(n, d);
  std::vector<double> g(d);

  for (long t = 0; t < config.T; ++t) {
    const double mult = schedule_at(config.schedule, t, config.T);
    HyperParams hp = config.hp;
    hp.alpha *= mult;
    hp.eta *= mult;

    AgentStates before = observer ? st : AgentStates{};
    const BlockVec* applied = &sgrads;

    if (config.algorithm == AlgorithmKind::FspdaStorm) {
      // iteration t consumes the fresh sample indexed t+1
      GraphSample sample_next = sampler.sample(t + 1);
      auto grad_pair = [&](int i, std::span<const double> x_old,
                           std::span<const double> x_new,
                           std::span<double> g_old, std::span<double> g_new) {
        auto rng_old =
            CounterRng::keyed(config.seeds.noise, rng_salt::kGradNoise,
                              static_cast<std::uint64_t>(t + 1),
                              static_cast<std::uint64_t>(i));
        auto rng_new = rng_old;  // same sample at both points
        stochastic_gradient(suite, i, x_old, config.noise, rng_old, g_old);
        stochastic_gradient(suite, i, x_new, config.noise, rng_new, g_new);
      };
      fspda_storm_step(st, sample_next, topology, grad_pair, hp);
      bits_cum += account_bits(sample_next, config.algorithm, config.bits);
      applied = &st.primal_momentum;
    } else {
      GraphSample sample = sampler.sample(t);
      // all gradients are drawn before any update (synchronous semantics)
      for (int i = 0; i < n; ++i) {
        auto rng = CounterRng::keyed(config.seeds.noise, rng_salt::kGradNoise,
                                     static_cast<std::uint64_t>(t),
                                     static_cast<std::uint64_t>(i));
        stochastic_gradient(suite, i, st.x.block(i), config.noise, rng,
                            sgrads.block(i));
        if (config.async_mask) {
          auto mrng = CounterRng::keyed(config.seeds.noise,
                                        rng_salt::kAsyncMask,
                                        static_cast<std::uint64_t>(t),
                                        static_cast<std::uint64_t>(i));
          apply_async_mask(*config.async_mask, i, sgrads.block(i), mrng,
                           masked.block(i));
        } else {
          std::copy(sgrads.block(i).begin(), sgrads.block(i).end(),
                    masked.block(i).begin());
        }
      }
      if (config.algorithm == AlgorithmKind::FspdaSa)
        fspda_sa_step(st, sample, topology, masked, hp);
      else
        dsgd_step(st, sample, topology, masked, hp.alpha, hp.gamma);
      bits_cum += account_bits(sample, config.algorithm, config.bits);
      applied = &masked;
    }

    check_finite(st, t + 1);
    if (observer) observer(t, before, *applied, st);

    const long next = t + 1;
    if (next == config.T || next % config.metric_period == 0)
      result.metrics.push_back(
          measure_state(next, st, suite, config, bits_cum, pot));
  }

  result.final_states = std::move(st);
  return result;
}

RunResult run(const RunConfig& config, const ObjectiveSuite& suite,
              const StepObserver& observer) {
  Topology topo = build_topology(config.topology);
  return run(config, suite, topo, observer);
}

namespace {

json record_to_json(const MetricsRecord& r) {
  json j;
  j["t"] = r.t;
  j["grad_norm_sq_avg"] = r.grad_norm_sq_avg;
  j["worst_grad_norm_sq"] = r.worst_grad_norm_sq;
  j["worst_loss"] = r.worst_loss;
  j["consensus_err"] = r.consensus_err;
  if (r.v_norm_sq) j["v_norm_sq"] = *r.v_norm_sq;
  if (r.potential) j["potential"] = *r.potential;
  j["bits_cum"] = r.bits_cum;
  if (r.suboptimality) j["suboptimality"] = *r.suboptimality;
  return j;
}

}  // namespace

void write_jsonl(const std::vector<MetricsRecord>& metrics,
                 std::ostream& out) {
  for (const auto& r : metrics) out << record_to_json(r).dump() << "\n";
}

void write_csv(const std::vector<MetricsRecord>& metrics, std::ostream& out) {
  out << "t,grad_norm_sq_avg,worst_grad_norm_sq,worst_loss,consensus_err,"
         "v_norm_sq,potential,bits_cum,suboptimality\n";
  for (const auto& r : metrics) {
    out << r.t << ',' << r.grad_norm_sq_avg << ',' << r.worst_grad_norm_sq
        << ',' << r.worst_loss << ',' << r.consensus_err << ',';
    if (r.v_norm_sq) out << *r.v_norm_sq;
    out << ',';
    if (r.potential) out << *r.potential;
    out << ',' << r.bits_cum << ',';
    if (r.suboptimality) out << *r.suboptimality;
    out << '\n';
  }
}

std::vector<MetricsRecord> read_jsonl(std::istream& in) {
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    MetricsRecord r;
    r.t = j.at("t").get<long>();
    r.grad_norm_sq_avg = j.at("grad_norm_sq_avg").get<double>();
    r.worst_grad_norm_sq = j.at("worst_grad_norm_sq").get<double>();
    r.worst_loss = j.at("worst_loss").get<double>();
    r.consensus_err = j.at("consensus_err").get<double>();
    if (j.contains("v_norm_sq")) r.v_norm_sq = j["v_norm_sq"].get<double>();
    if (j.contains("potential")) r.potential = j["potential"].get<double>();
    r.bits_cum = j.at("bits_cum").get<long long>();
    if (j.contains("suboptimality"))
      r.suboptimality = j["suboptimality"].get<double>();
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fspda
