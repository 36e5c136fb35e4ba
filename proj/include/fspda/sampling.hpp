#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "fspda/graph.hpp"
#include "fspda/rng.hpp"

namespace fspda {

// Per-agent stacked vectors: n blocks of dimension d, row-major.
struct BlockVec {
  int n = 0;
  int d = 0;
  std::vector<double> data;

  BlockVec() = default;
  BlockVec(int n_, int d_) : n(n_), d(d_), data(static_cast<size_t>(n_) * d_, 0.0) {}

  std::span<double> block(int i) {
    return {data.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)};
  }
  std::span<const double> block(int i) const {
    return {data.data() + static_cast<size_t>(i) * d, static_cast<size_t>(d)};
  }
  void set_zero() { std::fill(data.begin(), data.end(), 0.0); }

  friend bool operator==(const BlockVec&, const BlockVec&) = default;
};

// Network average x_bar (length d).
std::vector<double> mean_block(const BlockVec& x);

// K-seminorm: sum_i ||x_i - x_bar||^2 (zero iff consensus).
double k_seminorm_sq(const BlockVec& x);

enum class EdgeLaw {
  OneEdgeUniform,
  IndependentBernoulli,
  FullGraph,
  PeriodicLocalUpdate,
};

// Random time-varying subgraph law with coordinate sparsification.
// Coordinate masks are uniform over size-ceil(s*d) subsets, drawn
// independently per active edge per iteration.
struct SamplerSpec {
  EdgeLaw edge_law = EdgeLaw::FullGraph;
  std::vector<double> bernoulli_p;  // per-edge (scalar broadcast allowed)
  long period = 1;                  // PeriodicLocalUpdate
  double sparsity = 1.0;            // s in (0, 1]
  std::uint64_t seed = 0;
};

// One realization: active edges plus per-edge coordinate masks.
struct GraphSample {
  long t = 0;
  struct ActiveEdge {
    int edge;
    std::vector<std::uint32_t> coords;  // strictly increasing, non-empty
    friend bool operator==(const ActiveEdge&, const ActiveEdge&) = default;
  };
  std::vector<ActiveEdge> edges;  // sorted by edge id

  bool empty() const { return edges.empty(); }
  friend bool operator==(const GraphSample&, const GraphSample&) = default;
};

// Draws GraphSamples as a pure function of (spec, t); safe to call from any
// number of threads and replayable out of order.
class GraphSampler {
 public:
  GraphSampler(SamplerSpec spec, const Topology& topology, int dim);

  GraphSample sample(long t) const;

  // Expected selection probability of an (edge, coordinate) diagonal entry,
  // i.e. P(edge active) * k/d. PeriodicLocalUpdate reports the
  // period-averaged value.
  double selection_prob(int edge) const;
  // P(edge active); period-averaged for PeriodicLocalUpdate.
  double edge_prob(int edge) const;

  int mask_size() const { return mask_size_; }
  int dim() const { return dim_; }
  int num_edges() const { return num_edges_; }
  const SamplerSpec& spec() const { return spec_; }

 private:
  std::vector<std::uint32_t> draw_mask(long t, int edge) const;

  SamplerSpec spec_;
  int num_edges_;
  int dim_;
  int mask_size_;  // ceil(s*d)
};

// For each agent i, sum_{j in N_i(xi)} C_ij(xi) (x_j - x_i): the sparsified
// neighborhood aggregate driving both primal gossip and dual updates. Zero
// block for agents with no active incident edge. Each edge difference is
// computed once and applied antisymmetrically, so the blocks sum to zero up
// to rounding.
BlockVec apply_neighborhood_aggregate(const GraphSample& sample,
                                      const Topology& topology,
                                      const BlockVec& x);

// In-place variant writing into `out` (must be shaped like x).
void apply_neighborhood_aggregate(const GraphSample& sample,
                                  const Topology& topology, const BlockVec& x,
                                  BlockVec& out);

}  // namespace fspda
