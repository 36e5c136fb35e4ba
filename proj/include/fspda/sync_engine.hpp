#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fspda/algorithms.hpp"
#include "fspda/objectives.hpp"
#include "fspda/sampling.hpp"

namespace fspda {

enum class AlgorithmKind { FspdaSa, FspdaStorm, Dsgd };

std::string algorithm_name(AlgorithmKind a);
AlgorithmKind algorithm_from_name(const std::string& name);

struct TopologySpec {
  enum class Kind { Complete, Ring, ErdosRenyi, File };
  Kind kind = Kind::Complete;
  int n = 2;
  double p = 0.5;          // ErdosRenyi
  std::string path;        // File
  std::uint64_t seed = 7;  // ErdosRenyi
};

Topology build_topology(const TopologySpec& spec);

struct ProblemSpec {
  enum class Kind { Quadratic, Logistic };
  Kind kind = Kind::Quadratic;
  // quadratic
  double heterogeneity = 10.0;
  // logistic
  long samples_per_agent = 200;
  Partition partition = Partition::Shuffled;
  double l2 = 1e-4;
  std::uint64_t seed = 0xF00D;
};

std::unique_ptr<ObjectiveSuite> build_suite(const ProblemSpec& spec, int n,
                                            int d);

struct InitSpec {
  enum class Kind { Consensus, PerAgent, RandomConsensus };
  Kind kind = Kind::Consensus;
  std::vector<double> point;                // Consensus (empty -> origin)
  std::vector<std::vector<double>> points;  // PerAgent
  double scale = 1.0;                       // RandomConsensus
};

struct Seeds {
  std::uint64_t graph = 1;
  std::uint64_t noise = 2;
  std::uint64_t init = 3;
};

struct BitAccounting {
  int value_bits = 32;
  int index_bits = 32;
};

struct PotentialSpec {
  bool enabled = false;
  double weight_a = 1.0;
  double delta1 = 8.0;
};

struct RunConfig {
  AlgorithmKind algorithm = AlgorithmKind::FspdaSa;
  long T = 100;
  int dim = 2;
  HyperParams hp;
  Schedule schedule;
  SamplerSpec sampler;
  TopologySpec topology;
  ProblemSpec problem;
  NoiseModel noise;
  std::optional<AsyncGradientMask> async_mask;
  InitSpec init;
  StormInitMode storm_init_mode = StormInitMode::Zero;
  long metric_period = 1;
  Seeds seeds;
  BitAccounting bits;
  PotentialSpec potential;
};

// One iteration's telemetry. Stationarity uses the deterministic gradient
// oracle so the recorded values are exact.
struct MetricsRecord {
  long t = 0;
  double grad_norm_sq_avg = 0;    // ||grad F(x_bar)||^2
  double worst_grad_norm_sq = 0;  // max_i ||grad F(x_i)||^2
  double worst_loss = 0;          // max_i F(x_i)
  double consensus_err = 0;       // ||x||_K^2
  std::optional<double> v_norm_sq;
  std::optional<double> potential;
  long long bits_cum = 0;
  std::optional<double> suboptimality;  // F(x_bar) - f_star
};

// Communication cost of one iteration: per active edge and direction each
// transmitted coordinate costs value_bits + index_bits; FSPDA-STORM ships
// both the current and previous-iterate aggregates, doubling the cost.
long long account_bits(const GraphSample& sample, AlgorithmKind algorithm,
                       const BitAccounting& bits = {});

struct EngineAbort {
  long t;
  int agent;
  std::string field;
};

class EngineError : public std::runtime_error {
 public:
  EngineError(EngineAbort info, const std::string& what)
      : std::runtime_error(what), info(info) {}
  EngineAbort info;
};

struct RunResult {
  std::vector<MetricsRecord> metrics;
  AgentStates final_states;
};

struct PotentialContext {
  Eigen::MatrixXd expected_laplacian_block;
  PotentialWeights weights;
};

// Telemetry snapshot of a state; gradients come from the deterministic
// oracle so recorded stationarity is exact.
MetricsRecord measure_state(long t, const AgentStates& st,
                            const ObjectiveSuite& suite,
                            const RunConfig& config, long long bits_cum,
                            const PotentialContext* potential = nullptr);

// Observer invoked after every iteration with the gradients (or momenta, for
// STORM) that were applied; used by identity checks in tests.
using StepObserver =
    std::function<void(long t, const AgentStates& before,
                       const BlockVec& applied, const AgentStates& after)>;

// Synchronous driver: per iteration, sample a graph, draw gradients for all
// agents, apply one algorithm step, record metrics every `metric_period`
// iterations and at t in {0, T}. Deterministic given seeds; NaN/Inf in any
// state aborts with an EngineError naming (iteration, agent, field).
RunResult run(const RunConfig& config, const ObjectiveSuite& suite,
              const Topology& topology, const StepObserver& observer = {});

// Convenience overload building topology from the config.
RunResult run(const RunConfig& config, const ObjectiveSuite& suite,
              const StepObserver& observer = {});

AgentStates initial_states(const RunConfig& config,
                           const ObjectiveSuite& suite);

void write_jsonl(const std::vector<MetricsRecord>& metrics, std::ostream& out);
void write_csv(const std::vector<MetricsRecord>& metrics, std::ostream& out);
std::vector<MetricsRecord> read_jsonl(std::istream& in);

}  // namespace fspda
