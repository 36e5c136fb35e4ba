#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fspda/rng.hpp"
#include "fspda/sampling.hpp"

namespace fspda {

// Interface over the n local objectives f_i with deterministic gradient
// access and, for dataset-backed suites, per-sample gradients enabling
// minibatch noise. Suites are immutable after construction; all oracles are
// pure given an explicit RNG stream.
class ObjectiveSuite {
 public:
  virtual ~ObjectiveSuite() = default;

  int num_agents() const { return n_; }
  int dim() const { return d_; }

  virtual double value(int i, std::span<const double> x) const = 0;
  virtual void grad(int i, std::span<const double> x,
                    std::span<double> out) const = 0;

  // Dataset hooks (minibatch noise); shard_size == 0 means "no dataset".
  virtual long shard_size(int /*i*/) const { return 0; }
  virtual void sample_grad(int /*i*/, long /*sample*/,
                           std::span<const double> /*x*/,
                           std::span<double> /*out*/) const {
    throw std::logic_error("suite has no per-sample gradients");
  }
  // Fraction of positive labels in agent i's shard (classification suites).
  virtual std::optional<double> positive_label_fraction(int /*i*/) const {
    return std::nullopt;
  }

  // Published constants.
  double smoothness() const { return smoothness_; }                  // L
  std::optional<double> mean_square_smoothness() const { return ms_smoothness_; }
  std::optional<double> pl_constant() const { return pl_; }          // mu
  std::optional<double> optimal_value() const { return f_star_; }
  const std::optional<std::vector<double>>& minimizer() const { return x_star_; }

  // Global objective F = (1/n) sum f_i and its gradient.
  double global_value(std::span<const double> x) const;
  void global_grad(std::span<const double> x, std::span<double> out) const;
  double global_grad_norm_sq(std::span<const double> x) const;

 protected:
  int n_ = 0, d_ = 0;
  double smoothness_ = 0;
  std::optional<double> ms_smoothness_;
  std::optional<double> pl_;
  std::optional<double> f_star_;
  std::optional<std::vector<double>> x_star_;
};

// Stochastic-gradient noise law. AdditiveGaussian perturbs the deterministic
// gradient with N(0, sigma^2/d) per coordinate so E||noise||^2 = sigma^2
// exactly; Minibatch averages per-sample gradients over a uniform
// without-replacement batch.
struct NoiseModel {
  enum class Kind { None, AdditiveGaussian, Minibatch };
  Kind kind = Kind::None;
  double sigma = 0.0;
  long batch = 1;

  static NoiseModel none() { return {}; }
  static NoiseModel gaussian(double sigma) {
    return {Kind::AdditiveGaussian, sigma, 1};
  }
  static NoiseModel minibatch(long batch) {
    return {Kind::Minibatch, 0.0, batch};
  }
};

// Draws an unbiased stochastic gradient of f_i at x under the noise model.
void stochastic_gradient(const ObjectiveSuite& suite, int i,
                         std::span<const double> x, const NoiseModel& noise,
                         CounterRng& rng, std::span<double> out);

// Asynchronous-gradient model: each agent participates with probability
// 1/b_bar_i, and the surviving gradients are rescaled by b_bar_i so the
// masked gradient stays unbiased.
struct AsyncGradientMask {
  std::vector<double> b_bar;  // one per agent, each >= 1

  double participation(int i) const { return 1.0 / b_bar[i]; }
};

// Returns b_bar_i * g with probability 1/b_bar_i, else the zero vector.
void apply_async_mask(const AsyncGradientMask& mask, int i,
                      std::span<const double> g, CounterRng& rng,
                      std::span<double> out);

// f_i(x) = 1/2 ||B_i x - c_i||^2 with well-conditioned random B_i and
// c_i = B_i(center + h*u_i), sum_i u_i = 0. Publishes exact L, mu, f_star,
// x_star (normal-equations solve, self-checked at construction).
std::unique_ptr<ObjectiveSuite> make_heterogeneous_quadratic(
    int n, int d, double heterogeneity, std::uint64_t seed);

enum class Partition { LabelSorted, Shuffled };

// Two-class Gaussian-mixture logistic regression split across agents.
// label_sorted gives each agent predominantly one class; f_star is computed
// once at construction by a high-accuracy centralized solve and cached.
std::unique_ptr<ObjectiveSuite> make_logistic_suite(int n,
                                                    long samples_per_agent,
                                                    int d, Partition partition,
                                                    double l2,
                                                    std::uint64_t seed);

// Empirical per-agent noise second moment E||grad(x;xi) - grad(x)||^2 at x.
double estimate_noise_variance(const ObjectiveSuite& suite, int i,
                               std::span<const double> x,
                               const NoiseModel& noise, long draws,
                               std::uint64_t seed);

}  // namespace fspda
