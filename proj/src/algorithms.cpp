#include "fspda/algorithms.hpp"

#include <cmath>
#include <stdexcept>

#include "fspda/spectral.hpp"

namespace fspda {

double schedule_at(const Schedule& schedule, long t, long total) {
  if (schedule.kind == Schedule::Kind::Constant) return 1.0;
  const double w = schedule.warmup_frac;
  const double wt = w * static_cast<double>(total);
  if (static_cast<double>(t) < wt) return static_cast<double>(t) / wt;
  if (t >= total) return 0.0;
  const double span = static_cast<double>(total) - wt;
  return 0.5 * (1.0 + std::cos(3.14159265358979323846 *
                               (static_cast<double>(t) - wt) / span));
}

void fspda_sa_step(AgentStates& states, const BlockVec& aggregate,
                   const BlockVec& masked_sgrads, const HyperParams& hp) {
  const int n = states.num_agents(), d = states.dim();
  if (masked_sgrads.n != n || masked_sgrads.d != d || aggregate.n != n ||
      aggregate.d != d)
    throw std::invalid_argument("fspda_sa_step: dimension mismatch");
  for (int i = 0; i < n; ++i) {
    auto x = states.x.block(i);
    auto dual = states.dual.block(i);
    auto g = masked_sgrads.block(i);
    auto agg = aggregate.block(i);
    for (int k = 0; k < d; ++k) {
      x[k] += -hp.alpha * g[k] - hp.eta * dual[k] + hp.gamma * agg[k];
      dual[k] -= hp.beta * agg[k];
    }
  }
}

void fspda_sa_step(AgentStates& states, const GraphSample& sample,
                   const Topology& topology, const BlockVec& masked_sgrads,
                   const HyperParams& hp) {
  BlockVec agg = apply_neighborhood_aggregate(sample, topology, states.x);
  fspda_sa_step(states, agg, masked_sgrads, hp);
}

void fspda_storm_step(AgentStates& states, const GraphSample& sample_next,
                      const Topology& topology, const GradPairFn& grad_pair,
                      const HyperParams& hp) {
  const int n = states.num_agents(), d = states.dim();
  if (!states.has_momentum)
    throw std::invalid_argument("fspda_storm_step: momenta not initialized");

  BlockVec x_old = states.x;
  BlockVec dual_old = states.dual;

  // advance primal and dual with the current momenta
  for (int i = 0; i < n; ++i) {
    auto x = states.x.block(i);
    auto dual = states.dual.block(i);
    auto mx = states.primal_momentum.block(i);
    auto ml = states.dual_momentum.block(i);
    for (int k = 0; k < d; ++k) {
      x[k] -= hp.alpha * mx[k];
      dual[k] += hp.beta * ml[k];
    }
  }

  // both aggregates under the single fresh sample
  BlockVec agg_old = apply_neighborhood_aggregate(sample_next, topology, x_old);
  BlockVec agg_new = apply_neighborhood_aggregate(sample_next, topology, states.x);

  const double eta_over_alpha = hp.eta / hp.alpha;
  const double gamma_over_alpha = hp.gamma / hp.alpha;
  std::vector<double> g_old(d), g_new(d);
  for (int i = 0; i < n; ++i) {
    grad_pair(i, x_old.block(i), states.x.block(i), g_old, g_new);
    auto mx = states.primal_momentum.block(i);
    auto ml = states.dual_momentum.block(i);
    auto ao = agg_old.block(i);
    auto an = agg_new.block(i);
    auto du_old = dual_old.block(i);
    auto du_new = states.dual.block(i);
    for (int k = 0; k < d; ++k) {
      // Lagrangian primal gradient at the new and old points; the aggregate
      // enters with a minus (it equals -[A^T A(xi) x]_i blockwise).
      const double lg_new =
          g_new[k] + eta_over_alpha * du_new[k] - gamma_over_alpha * an[k];
      const double lg_old =
          g_old[k] + eta_over_alpha * du_old[k] - gamma_over_alpha * ao[k];
      mx[k] = lg_new + (1.0 - hp.a_x) * (mx[k] - lg_old);
      // dual drift [A^T A(xi) x]_i = -aggregate_i
      ml[k] = -an[k] + (1.0 - hp.a_lambda) * (ml[k] + ao[k]);
    }
  }
}

AgentStates storm_init(std::span<const double> x_bar0,
                       const ObjectiveSuite& suite, const HyperParams& hp,
                       StormInitMode mode) {
  const int n = suite.num_agents(), d = suite.dim();
  AgentStates states(n, d, true);
  for (int i = 0; i < n; ++i) {
    auto x = states.x.block(i);
    std::copy(x_bar0.begin(), x_bar0.end(), x.begin());
  }
  if (mode == StormInitMode::Theoretical) {
    std::vector<double> gf(d), gi(d);
    suite.global_grad(x_bar0, gf);
    const double scale = hp.alpha / (hp.eta * static_cast<double>(n));
    for (int i = 0; i < n; ++i) {
      suite.grad(i, x_bar0, gi);
      auto dual = states.dual.block(i);
      auto mx = states.primal_momentum.block(i);
      for (int k = 0; k < d; ++k) {
        dual[k] = scale * (gf[k] - gi[k]);
        mx[k] = gf[k];
      }
    }
  }
  return states;
}

void dsgd_step(AgentStates& states, const GraphSample& sample,
               const Topology& topology, const BlockVec& sgrads, double step,
               double gamma_mix) {
  const int n = states.num_agents(), d = states.dim();
  if (sgrads.n != n || sgrads.d != d)
    throw std::invalid_argument("dsgd_step: dimension mismatch");
  BlockVec agg = apply_neighborhood_aggregate(sample, topology, states.x);
  for (int i = 0; i < n; ++i) {
    auto x = states.x.block(i);
    auto g = sgrads.block(i);
    auto a = agg.block(i);
    for (int k = 0; k < d; ++k) x[k] += -step * g[k] + gamma_mix * a[k];
  }
}

BlockVec primal_only_recursion(const BlockVec& x_t, const BlockVec& x_tp1,
                               const GraphSample& sample_t,
                               const GraphSample& sample_tp1,
                               const Topology& topology,
                               const BlockVec& sgrads_t,
                               const BlockVec& sgrads_tp1,
                               const HyperParams& hp) {
  const int n = x_t.n, d = x_t.d;
  if (x_tp1.n != n || x_tp1.d != d || sgrads_t.n != n || sgrads_tp1.n != n)
    throw std::invalid_argument("primal_only_recursion: dimension mismatch");
  BlockVec agg_t = apply_neighborhood_aggregate(sample_t, topology, x_t);
  BlockVec agg_tp1 = apply_neighborhood_aggregate(sample_tp1, topology, x_tp1);
  BlockVec out(n, d);
  const double trail = hp.gamma - hp.eta * hp.beta;
  for (int i = 0; i < n; ++i) {
    auto o = out.block(i);
    auto x0 = x_t.block(i);
    auto x1 = x_tp1.block(i);
    auto a0 = agg_t.block(i);
    auto a1 = agg_tp1.block(i);
    auto g0 = sgrads_t.block(i);
    auto g1 = sgrads_tp1.block(i);
    for (int k = 0; k < d; ++k)
      o[k] = 2.0 * x1[k] + hp.gamma * a1[k] - x0[k] - trail * a0[k] -
             hp.alpha * (g1[k] - g0[k]);
  }
  return out;
}

DualTrackingResidual compute_v(const AgentStates& states,
                               const ObjectiveSuite& suite,
                               const HyperParams& hp) {
  if (hp.eta == 0.0)
    throw std::invalid_argument("compute_v: eta must be nonzero");
  const int n = states.num_agents(), d = states.dim();
  auto x_bar = mean_block(states.x);
  DualTrackingResidual res;
  res.v = BlockVec(n, d);
  std::vector<double> gi(d);
  const double ratio = hp.alpha / hp.eta;
  for (int i = 0; i < n; ++i) {
    suite.grad(i, x_bar, gi);
    auto v = res.v.block(i);
    auto dual = states.dual.block(i);
    for (int k = 0; k < d; ++k) v[k] = dual[k] + ratio * gi[k];
  }
  res.k_norm_sq = k_seminorm_sq(res.v);
  return res;
}

PotentialWeights potential_weights(const HyperParams& hp, double a,
                                   double delta1) {
  if (hp.beta == 0.0)
    throw std::invalid_argument("potential_weights: beta must be nonzero");
  PotentialWeights w;
  w.a = a;
  w.b = a * hp.eta / hp.beta;
  w.d = delta1 * hp.eta * a;
  if (w.b != 0.0)
    w.c = ((hp.eta * hp.beta + hp.gamma) * w.d - 2.0 * hp.eta * hp.gamma * a) /
          (2.0 * hp.beta * w.b);
  return w;
}

PotentialValue compute_potential(
    const AgentStates& states, const ObjectiveSuite& suite,
    const HyperParams& hp, const PotentialWeights& weights,
    const Eigen::MatrixXd& expected_laplacian_block) {
  const int n = states.num_agents(), d = states.dim();
  PotentialValue out;
  auto x_bar = mean_block(states.x);
  out.objective = suite.global_value(x_bar);
  out.consensus_term = weights.a * k_seminorm_sq(states.x);

  // Q = pinv(expected Laplacian); validates PSD-with-consensus-kernel.
  const Eigen::MatrixXd q = consensus_pinv(expected_laplacian_block);
  DualTrackingResidual vres = compute_v(states, suite, hp);

  // blockwise per coordinate: v_c^T (Q + cK) v_c and <x_c, K v_c>
  double v_term = 0.0, cross = 0.0;
  Eigen::VectorXd vc(n), xc(n);
  const Eigen::MatrixXd k_proj =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  for (int c = 0; c < d; ++c) {
    for (int i = 0; i < n; ++i) {
      vc(i) = vres.v.block(i)[c];
      xc(i) = states.x.block(i)[c];
    }
    v_term += vc.dot(q * vc) + weights.c * vc.dot(k_proj * vc);
    cross += xc.dot(k_proj * vc);
  }
  out.v_term = weights.b * v_term;
  out.cross_term = weights.d * cross;
  out.total = out.objective + out.consensus_term + out.v_term + out.cross_term;
  return out;
}

BlockVec fixed_point_dual(std::span<const double> x_bar,
                          const ObjectiveSuite& suite, const HyperParams& hp) {
  if (hp.eta == 0.0)
    throw std::invalid_argument("fixed_point_dual: eta must be nonzero");
  const int n = suite.num_agents(), d = suite.dim();
  BlockVec dual(n, d);
  std::vector<double> gf(d), gi(d);
  suite.global_grad(x_bar, gf);
  const double ratio = hp.alpha / hp.eta;
  for (int i = 0; i < n; ++i) {
    suite.grad(i, x_bar, gi);
    auto b = dual.block(i);
    for (int k = 0; k < d; ++k) b[k] = ratio * (gf[k] - gi[k]);
  }
  return dual;
}

FixedPointResiduals fixed_point_residuals(const AgentStates& states,
                                          const Topology& topology,
                                          const ObjectiveSuite& suite,
                                          const HyperParams& hp) {
  const int d = states.dim();
  FixedPointResiduals res;
  for (const auto& [i, j] : topology.edges()) {
    auto xi = states.x.block(i);
    auto xj = states.x.block(j);
    for (int k = 0; k < d; ++k) {
      const double diff = xi[k] - xj[k];
      res.consensus_residual += diff * diff;
    }
  }
  auto x_bar = mean_block(states.x);
  std::vector<double> gf(d), gi(d);
  suite.global_grad(x_bar, gf);
  for (int i = 0; i < states.num_agents(); ++i) {
    suite.grad(i, x_bar, gi);
    auto dual = states.dual.block(i);
    for (int k = 0; k < d; ++k) {
      const double r = hp.eta * dual[k] - hp.alpha * (gf[k] - gi[k]);
      res.dual_residual += r * r;
    }
  }
  return res;
}

}  // namespace fspda
