#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fspda/objectives.hpp"
#include "fspda/sampling.hpp"

namespace fspda {

// Per-agent algorithm state. `dual` houses the transformed dual
// lambda_hat := [A^T lambda]_i, which is all the algorithms ever need: the
// edge-indexed multiplier is never materialized (O(nd) memory). Momenta are
// used by FSPDA-STORM only; the dual momentum already lives in the
// A^T-transformed per-agent space.
struct AgentStates {
  BlockVec x;
  BlockVec dual;
  BlockVec primal_momentum;
  BlockVec dual_momentum;
  bool has_momentum = false;

  AgentStates() = default;
  AgentStates(int n, int d, bool momentum = false)
      : x(n, d), dual(n, d), has_momentum(momentum) {
    if (momentum) {
      primal_momentum = BlockVec(n, d);
      dual_momentum = BlockVec(n, d);
    }
  }
  int num_agents() const { return x.n; }
  int dim() const { return x.d; }
};

// Step sizes for the primal-dual updates; the implementation works in
// (alpha, eta, gamma, beta) space exactly as the update rules are stated
// (the augmented-Lagrangian penalties are never exposed).
struct HyperParams {
  double alpha = 1e-2;   // primal step
  double eta = 1e-3;     // dual-coupling step
  double gamma = 0.5;    // gossip step
  double beta = 1.0;     // dual ascent step
  double a_x = 1.0;      // primal momentum (STORM)
  double a_lambda = 1.0; // dual momentum (STORM)
};

struct Schedule {
  enum class Kind { Constant, CosineWithWarmup };
  Kind kind = Kind::Constant;
  double warmup_frac = 0.0;

  static Schedule constant() { return {}; }
  static Schedule cosine(double warmup_frac) {
    return {Kind::CosineWithWarmup, warmup_frac};
  }
};

// Multiplier applied jointly to (alpha, eta) so alpha_t/eta_t stays constant:
// linear warmup to 1 at t = w*T, then cosine decay to 0 at t = T.
double schedule_at(const Schedule& schedule, long t, long total);

// One FSPDA-SA iteration. masked_sgrads[i] is the (possibly async-masked)
// stochastic gradient at x_i; `aggregate` is the neighborhood aggregate of x
// under this iteration's sample (one communication round). The same
// aggregate feeds both updates:
//   x_i    <- x_i - alpha*sgrad_i - eta*dual_i + gamma*aggregate_i
//   dual_i <- dual_i - beta*aggregate_i
// The dual increment is ascent on the stochastic augmented Lagrangian
// (+beta * [A^T A(xi) x]_i); increments pair antisymmetrically across each
// edge, so sum_i dual_i is conserved.
void fspda_sa_step(AgentStates& states, const BlockVec& aggregate,
                   const BlockVec& masked_sgrads, const HyperParams& hp);

// Convenience overload drawing the aggregate from (sample, topology).
void fspda_sa_step(AgentStates& states, const GraphSample& sample,
                   const Topology& topology, const BlockVec& masked_sgrads,
                   const HyperParams& hp);

// Supplies, per agent, the stochastic gradients at the old and new iterate
// under one shared gradient sample: (grad at x_old, grad at x_new).
using GradPairFn = std::function<void(int agent, std::span<const double> x_old,
                                      std::span<const double> x_new,
                                      std::span<double> g_old,
                                      std::span<double> g_new)>;

// One FSPDA-STORM iteration:
//   x <- x - alpha*m_x,  dual <- dual + beta*m_dual,
// then both momenta are refreshed with control variates evaluated at the old
// and new iterates under the single fresh sample `sample_next` (exactly one
// graph sample and one gradient sample per iteration; old-point terms are
// recomputed under the fresh sample, not cached).
void fspda_storm_step(AgentStates& states, const GraphSample& sample_next,
                      const Topology& topology, const GradPairFn& grad_pair,
                      const HyperParams& hp);

enum class StormInitMode { Theoretical, Zero };

// Consensus start at x_bar0 with momenta per the prescribed initialization:
// theoretical sets dual_i = (alpha/eta) n^{-1} (grad F(x_bar0) - grad
// f_i(x_bar0)), m_x = grad F(x_bar0), m_dual = 0; zero leaves everything
// but x at zero.
AgentStates storm_init(std::span<const double> x_bar0,
                       const ObjectiveSuite& suite, const HyperParams& hp,
                       StormInitMode mode);

// DSGD baseline: x_i <- x_i - step*sgrad_i + gamma_mix*aggregate_i; no dual.
void dsgd_step(AgentStates& states, const GraphSample& sample,
               const Topology& topology, const BlockVec& sgrads, double step,
               double gamma_mix);

// Primal-only second-order recursion equivalent to the two-variable FSPDA-SA
// dynamics: given consecutive iterates and their samples/gradients, returns
//   x^{t+2} = 2x^{t+1} + gamma*agg(xi^{t+1}, x^{t+1})
//           - x^t - (gamma - eta*beta)*agg(xi^t, x^t)
//           - alpha*(sgrad^{t+1} - sgrad^t),
// the blockwise form of 2(I - (gamma/2) A^T A(xi^{t+1})) x^{t+1}
// - (I - (gamma - eta beta) A^T A(xi^t)) x^t - alpha * grad difference.
BlockVec primal_only_recursion(const BlockVec& x_t, const BlockVec& x_tp1,
                               const GraphSample& sample_t,
                               const GraphSample& sample_tp1,
                               const Topology& topology,
                               const BlockVec& sgrads_t,
                               const BlockVec& sgrads_tp1,
                               const HyperParams& hp);

struct DualTrackingResidual {
  BlockVec v;        // v_i = dual_i + (alpha/eta) grad f_i(x_bar)
  double k_norm_sq;  // ||v||_K^2
};

// Dual-tracking residual; its K-seminorm measures the violation of the
// fixed-point dual condition. eta must be nonzero.
DualTrackingResidual compute_v(const AgentStates& states,
                               const ObjectiveSuite& suite,
                               const HyperParams& hp);

// Weights of the convergence potential; the recipe ties (b, c, d) to a:
// b = a*eta/beta, d = delta1*eta*a, c = ((eta*beta + gamma)*d
// - 2*eta*gamma*a) / (2*beta*b), with delta1 >= 8 (default 8).
struct PotentialWeights {
  double a = 0, b = 0, c = 0, d = 0;
};

PotentialWeights potential_weights(const HyperParams& hp, double a,
                                   double delta1 = 8.0);

struct PotentialValue {
  double total = 0;
  double objective = 0;       // F(x_bar)
  double consensus_term = 0;  // a ||x||_K^2
  double v_term = 0;          // b ||v||^2_{Q + cK}
  double cross_term = 0;      // d <x, v>_K
};

// Potential F_t = F(x_bar) + a||x||_K^2 + b||v||^2_{Q+cK} + d<x,v>_K, with
// Q the pseudo-inverse of the expected Laplacian (consensus mode deflated).
// expected_laplacian_block is the per-coordinate n x n block.
PotentialValue compute_potential(const AgentStates& states,
                                 const ObjectiveSuite& suite,
                                 const HyperParams& hp,
                                 const PotentialWeights& weights,
                                 const Eigen::MatrixXd& expected_laplacian_block);

struct FixedPointResiduals {
  double consensus_residual = 0;  // ||A x||^2 over the full edge set
  double dual_residual = 0;  // sum_i ||eta*dual_i - alpha*(grad F - grad f_i)||^2
};

// Both residuals vanish exactly at fixed points of the expected update:
// consensus (x_i all equal) and the dual matching the local-vs-global
// gradient gap at the mean iterate.
FixedPointResiduals fixed_point_residuals(const AgentStates& states,
                                          const Topology& topology,
                                          const ObjectiveSuite& suite,
                                          const HyperParams& hp);

// The dual value satisfying the fixed-point condition at consensus point
// x_bar: dual_i = (alpha/eta) * (grad F(x_bar) - grad f_i(x_bar)).
BlockVec fixed_point_dual(std::span<const double> x_bar,
                          const ObjectiveSuite& suite, const HyperParams& hp);

}  // namespace fspda
