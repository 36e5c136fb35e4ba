#include "fspda/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace fspda {

std::vector<double> mean_block(const BlockVec& x) {
  std::vector<double> m(x.d, 0.0);
  for (int i = 0; i < x.n; ++i) {
    auto b = x.block(i);
    for (int k = 0; k < x.d; ++k) m[k] += b[k];
  }
  for (auto& v : m) v /= x.n;
  return m;
}

double k_seminorm_sq(const BlockVec& x) {
  auto m = mean_block(x);
  double s = 0.0;
  for (int i = 0; i < x.n; ++i) {
    auto b = x.block(i);
    for (int k = 0; k < x.d; ++k) {
      double dev = b[k] - m[k];
      s += dev * dev;
    }
  }
  return s;
}

GraphSampler::GraphSampler(SamplerSpec spec, const Topology& topology, int dim)
    : spec_(std::move(spec)), num_edges_(topology.num_edges()), dim_(dim) {
  if (dim_ < 1) throw std::invalid_argument("sampler: dimension must be >= 1");
  if (!(spec_.sparsity > 0.0) || spec_.sparsity > 1.0)
    throw std::invalid_argument("sampler: sparsity must be in (0, 1]");
  mask_size_ = static_cast<int>(std::ceil(spec_.sparsity * dim_));
  mask_size_ = std::min(std::max(mask_size_, 1), dim_);
  switch (spec_.edge_law) {
    case EdgeLaw::IndependentBernoulli: {
      if (spec_.bernoulli_p.size() == 1)
        spec_.bernoulli_p.assign(num_edges_, spec_.bernoulli_p[0]);
      if (static_cast<int>(spec_.bernoulli_p.size()) != num_edges_)
        throw std::invalid_argument(
            "sampler: bernoulli_p must carry one probability per edge");
      for (double p : spec_.bernoulli_p)
        if (!(p > 0.0) || p > 1.0)
          throw std::invalid_argument(
              "sampler: bernoulli probabilities must be in (0, 1] so that "
              "E[I(xi)] stays positive definite on the edge set");
      break;
    }
    case EdgeLaw::PeriodicLocalUpdate:
      if (spec_.period < 1)
        throw std::invalid_argument("sampler: period must be >= 1");
      break;
    default:
      break;
  }
}

std::vector<std::uint32_t> GraphSampler::draw_mask(long t, int edge) const {
  const int d = dim_, k = mask_size_;
  if (k == d) {
    std::vector<std::uint32_t> all(d);
    for (int c = 0; c < d; ++c) all[c] = c;
    return all;
  }
  // Partial Fisher-Yates over the index range, keyed so each (t, edge) mask
  // replays independently of draw order.
  auto rng = CounterRng::keyed(spec_.seed, rng_salt::kCoordMask,
                               static_cast<std::uint64_t>(t),
                               static_cast<std::uint64_t>(edge));
  std::vector<std::uint32_t> pool(d);
  for (int c = 0; c < d; ++c) pool[c] = c;
  for (int c = 0; c < k; ++c) {
    auto j = c + static_cast<int>(rng.next_below(d - c));
    std::swap(pool[c], pool[j]);
  }
  std::vector<std::uint32_t> mask(pool.begin(), pool.begin() + k);
  std::sort(mask.begin(), mask.end());
  return mask;
}

GraphSample GraphSampler::sample(long t) const {
  GraphSample s;
  s.t = t;
  std::vector<int> active;
  switch (spec_.edge_law) {
    case EdgeLaw::OneEdgeUniform: {
      if (num_edges_ > 0) {
        auto rng = CounterRng::keyed(spec_.seed, rng_salt::kEdgeChoice,
                                     static_cast<std::uint64_t>(t));
        active.push_back(static_cast<int>(rng.next_below(num_edges_)));
      }
      break;
    }
    case EdgeLaw::IndependentBernoulli: {
      auto rng = CounterRng::keyed(spec_.seed, rng_salt::kEdgeChoice,
                                   static_cast<std::uint64_t>(t));
      for (int e = 0; e < num_edges_; ++e)
        if (rng.next_double() < spec_.bernoulli_p[e]) active.push_back(e);
      break;
    }
    case EdgeLaw::FullGraph:
      for (int e = 0; e < num_edges_; ++e) active.push_back(e);
      break;
    case EdgeLaw::PeriodicLocalUpdate:
      if (t % spec_.period == 0)
        for (int e = 0; e < num_edges_; ++e) active.push_back(e);
      break;
  }
  s.edges.reserve(active.size());
  for (int e : active) s.edges.push_back({e, draw_mask(t, e)});
  return s;
}

double GraphSampler::edge_prob(int edge) const {
  switch (spec_.edge_law) {
    case EdgeLaw::OneEdgeUniform:
      return num_edges_ > 0 ? 1.0 / num_edges_ : 0.0;
    case EdgeLaw::IndependentBernoulli:
      return spec_.bernoulli_p[edge];
    case EdgeLaw::FullGraph:
      return 1.0;
    case EdgeLaw::PeriodicLocalUpdate:
      return 1.0 / static_cast<double>(spec_.period);
  }
  return 0.0;
}

double GraphSampler::selection_prob(int edge) const {
  return edge_prob(edge) * static_cast<double>(mask_size_) / dim_;
}

void apply_neighborhood_aggregate(const GraphSample& sample,
                                  const Topology& topology, const BlockVec& x,
                                  BlockVec& out) {
  if (x.n != topology.num_agents())
    throw std::invalid_argument("aggregate: agent count mismatch");
  if (out.n != x.n || out.d != x.d)
    throw std::invalid_argument("aggregate: output shape mismatch");
  out.set_zero();
  for (const auto& ae : sample.edges) {
    auto [i, j] = topology.edge(ae.edge);
    auto xi = x.block(i);
    auto xj = x.block(j);
    auto oi = out.block(i);
    auto oj = out.block(j);
    for (std::uint32_t k : ae.coords) {
      if (k >= static_cast<std::uint32_t>(x.d))
        throw std::invalid_argument("aggregate: coordinate out of range");
      const double diff = xj[k] - xi[k];
      oi[k] += diff;
      oj[k] -= diff;
    }
  }
}

BlockVec apply_neighborhood_aggregate(const GraphSample& sample,
                                      const Topology& topology,
                                      const BlockVec& x) {
  BlockVec out(x.n, x.d);
  apply_neighborhood_aggregate(sample, topology, x, out);
  return out;
}

}  // namespace fspda
