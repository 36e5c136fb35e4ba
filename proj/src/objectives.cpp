#include "fspda/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>

namespace fspda {

double ObjectiveSuite::global_value(std::span<const double> x) const {
  double s = 0.0;
  for (int i = 0; i < n_; ++i) s += value(i, x);
  return s / n_;
}

void ObjectiveSuite::global_grad(std::span<const double> x,
                                 std::span<double> out) const {
  std::vector<double> g(d_);
  std::fill(out.begin(), out.end(), 0.0);
  for (int i = 0; i < n_; ++i) {
    grad(i, x, g);
    for (int k = 0; k < d_; ++k) out[k] += g[k];
  }
  for (int k = 0; k < d_; ++k) out[k] /= n_;
}

double ObjectiveSuite::global_grad_norm_sq(std::span<const double> x) const {
  std::vector<double> g(d_);
  global_grad(x, g);
  double s = 0.0;
  for (double v : g) s += v * v;
  return s;
}

void stochastic_gradient(const ObjectiveSuite& suite, int i,
                         std::span<const double> x, const NoiseModel& noise,
                         CounterRng& rng, std::span<double> out) {
  const int d = suite.dim();
  if (static_cast<int>(x.size()) != d || static_cast<int>(out.size()) != d)
    throw std::invalid_argument("stochastic_gradient: dimension mismatch");
  switch (noise.kind) {
    case NoiseModel::Kind::None:
      suite.grad(i, x, out);
      return;
    case NoiseModel::Kind::AdditiveGaussian: {
      suite.grad(i, x, out);
      if (noise.sigma > 0.0) {
        const double scale = noise.sigma / std::sqrt(static_cast<double>(d));
        for (int k = 0; k < d; ++k) out[k] += scale * rng.next_gaussian();
      }
      return;
    }
    case NoiseModel::Kind::Minibatch: {
      const long m = suite.shard_size(i);
      if (m <= 0)
        throw std::invalid_argument(
            "stochastic_gradient: minibatch noise requires a dataset-backed "
            "suite");
      const long b = std::min(noise.batch, m);
      if (b < 1)
        throw std::invalid_argument("stochastic_gradient: batch size < 1");
      std::fill(out.begin(), out.end(), 0.0);
      std::vector<double> g(d);
      if (b == m) {
        for (long s = 0; s < m; ++s) {
          suite.sample_grad(i, s, x, g);
          for (int k = 0; k < d; ++k) out[k] += g[k];
        }
      } else {
        // Floyd's sampling: b distinct indices, uniform over subsets.
        std::vector<long> chosen;
        chosen.reserve(b);
        for (long j = m - b; j < m; ++j) {
          long t = static_cast<long>(rng.next_below(j + 1));
          if (std::find(chosen.begin(), chosen.end(), t) != chosen.end())
            chosen.push_back(j);
          else
            chosen.push_back(t);
        }
        for (long s : chosen) {
          suite.sample_grad(i, s, x, g);
          for (int k = 0; k < d; ++k) out[k] += g[k];
        }
      }
      for (int k = 0; k < d; ++k) out[k] /= static_cast<double>(b);
      return;
    }
  }
}

void apply_async_mask(const AsyncGradientMask& mask, int i,
                      std::span<const double> g, CounterRng& rng,
                      std::span<double> out) {
  const double b_bar = mask.b_bar.at(i);
  if (b_bar < 1.0)
    throw std::invalid_argument("async mask: b_bar must be >= 1");
  if (rng.next_double() < 1.0 / b_bar) {
    for (size_t k = 0; k < g.size(); ++k) out[k] = b_bar * g[k];
  } else {
    std::fill(out.begin(), out.end(), 0.0);
  }
}

namespace {

class QuadraticSuite final : public ObjectiveSuite {
 public:
  QuadraticSuite(int n, int d, double h, std::uint64_t seed) {
    n_ = n;
    d_ = d;
    if (n < 1 || d < 1)
      throw std::invalid_argument("quadratic suite: n, d must be >= 1");
    if (h < 0) throw std::invalid_argument("quadratic suite: h must be >= 0");
    auto rng = CounterRng::keyed(seed, rng_salt::kData, 0x9A);

    auto random_orthogonal = [&]() {
      Eigen::MatrixXd g(d, d);
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) g(r, c) = rng.next_gaussian();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
      Eigen::MatrixXd q = qr.householderQ();
      return q;
    };

    // Local minimizer offsets u_i with zero mean; center drawn once.
    Eigen::MatrixXd offsets(d, n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < d; ++k) offsets(k, i) = rng.next_gaussian();
    Eigen::VectorXd mean_u = offsets.rowwise().mean();
    offsets.colwise() -= mean_u;
    Eigen::VectorXd center(d);
    for (int k = 0; k < d; ++k) center(k) = rng.next_gaussian();

    b_.reserve(n);
    c_.reserve(n);
    double l = 0.0;
    Eigen::MatrixXd hbar = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < n; ++i) {
      // B_i = Q D P with singular values in [0.5, 1.5]: well-conditioned.
      Eigen::VectorXd sv(d);
      for (int k = 0; k < d; ++k) sv(k) = 0.5 + rng.next_double();
      Eigen::MatrixXd b = random_orthogonal() * sv.asDiagonal() *
                          random_orthogonal();
      Eigen::VectorXd c = b * (center + h * offsets.col(i));
      Eigen::MatrixXd hess = b.transpose() * b;
      hbar += hess;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
      l = std::max(l, es.eigenvalues().maxCoeff());
      b_.push_back(std::move(b));
      c_.push_back(std::move(c));
    }
    hbar /= n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hbar);
    if (es.eigenvalues().minCoeff() <= 1e-12)
      throw std::invalid_argument(
          "quadratic suite: aggregate Hessian is singular");
    smoothness_ = l;
    ms_smoothness_ = l;  // additive noise leaves gradient differences exact
    pl_ = es.eigenvalues().minCoeff();

    // Normal equations for the global minimizer; self-check at construction.
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) rhs += b_[i].transpose() * c_[i];
    rhs /= n;
    Eigen::VectorXd xs = hbar.ldlt().solve(rhs);
    std::vector<double> xs_v(xs.data(), xs.data() + d);
    std::vector<double> gf(d);
    global_grad(xs_v, gf);
    double gn = 0;
    for (double v : gf) gn += v * v;
    if (std::sqrt(gn) > 1e-10)
      throw std::runtime_error(
          "quadratic suite: normal-equations self-check failed");
    x_star_ = xs_v;
    f_star_ = global_value(xs_v);
  }

  double value(int i, std::span<const double> x) const override {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), d_);
    return 0.5 * (b_[i] * xv - c_[i]).squaredNorm();
  }

  void grad(int i, std::span<const double> x,
            std::span<double> out) const override {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), d_);
    Eigen::Map<Eigen::VectorXd> g(out.data(), d_);
    g = b_[i].transpose() * (b_[i] * xv - c_[i]);
  }

 private:
  std::vector<Eigen::MatrixXd> b_;
  std::vector<Eigen::VectorXd> c_;
};

class LogisticSuite final : public ObjectiveSuite {
 public:
  LogisticSuite(int n, long per_agent, int d, Partition partition, double l2,
                std::uint64_t seed)
      : l2_(l2) {
    n_ = n;
    d_ = d;
    if (per_agent < 1)
      throw std::invalid_argument("logistic suite: samples_per_agent < 1");
    if (l2 < 0) throw std::invalid_argument("logistic suite: l2 must be >= 0");
    auto rng = CounterRng::keyed(seed, rng_salt::kData, 0x10);

    const long total = per_agent * n;
    // Two-class Gaussian mixture, classes separated along a random direction.
    Eigen::VectorXd dir(d);
    for (int k = 0; k < d; ++k) dir(k) = rng.next_gaussian();
    dir.normalize();
    dir *= 1.5;

    std::vector<Eigen::VectorXd> xs;
    std::vector<int> ys;
    xs.reserve(total);
    ys.reserve(total);
    for (long s = 0; s < total; ++s) {
      int y = rng.next_double() < 0.5 ? 0 : 1;
      Eigen::VectorXd f(d);
      for (int k = 0; k < d; ++k) f(k) = rng.next_gaussian();
      f += (y == 1 ? 1.0 : -1.0) * dir;
      xs.push_back(std::move(f));
      ys.push_back(y);
    }

    std::vector<long> order(total);
    std::iota(order.begin(), order.end(), 0);
    if (partition == Partition::LabelSorted) {
      std::stable_sort(order.begin(), order.end(),
                       [&](long a, long b) { return ys[a] < ys[b]; });
    } else {
      for (long s = total - 1; s > 0; --s) {
        long j = static_cast<long>(rng.next_below(s + 1));
        std::swap(order[s], order[j]);
      }
    }

    shards_.resize(n);
    for (int i = 0; i < n; ++i) {
      auto& shard = shards_[i];
      shard.features.reserve(per_agent);
      shard.labels.reserve(per_agent);
      for (long s = 0; s < per_agent; ++s) {
        long idx = order[static_cast<long>(i) * per_agent + s];
        shard.features.push_back(xs[idx]);
        shard.labels.push_back(ys[idx]);
      }
    }

    // L upper bound: (1/4) max_i lambda_max(X_i^T X_i / m_i) + l2.
    double l = 0.0;
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
      for (const auto& f : shards_[i].features) gram += f * f.transpose();
      gram /= static_cast<double>(per_agent);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
      l = std::max(l, es.eigenvalues().maxCoeff());
      double ls = 0.0;  // per-sample smoothness for the mean-square bound
      for (const auto& f : shards_[i].features)
        ls = std::max(ls, 0.25 * f.squaredNorm() + l2);
      ms_bound_ = std::max(ms_bound_, ls);
    }
    smoothness_ = 0.25 * l + l2;
    ms_smoothness_ = ms_bound_;
    if (l2 > 0) pl_ = l2;  // strong convexity constant from the regularizer

    solve_f_star();
  }

  double value(int i, std::span<const double> x) const override {
    Eigen::Map<const Eigen::VectorXd> w(x.data(), d_);
    const auto& shard = shards_[i];
    double s = 0.0;
    for (size_t k = 0; k < shard.features.size(); ++k) {
      const double margin = shard.features[k].dot(w);
      const double z = shard.labels[k] == 1 ? -margin : margin;
      // log(1 + exp(z)) computed stably
      s += z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
    return s / static_cast<double>(shard.features.size()) +
           0.5 * l2_ * w.squaredNorm();
  }

  void grad(int i, std::span<const double> x,
            std::span<double> out) const override {
    Eigen::Map<const Eigen::VectorXd> w(x.data(), d_);
    Eigen::Map<Eigen::VectorXd> g(out.data(), d_);
    const auto& shard = shards_[i];
    g.setZero();
    for (size_t k = 0; k < shard.features.size(); ++k) {
      const double margin = shard.features[k].dot(w);
      const double p = 1.0 / (1.0 + std::exp(-margin));
      g += (p - static_cast<double>(shard.labels[k])) * shard.features[k];
    }
    g /= static_cast<double>(shard.features.size());
    g += l2_ * w;
  }

  long shard_size(int i) const override {
    return static_cast<long>(shards_[i].features.size());
  }

  void sample_grad(int i, long sample, std::span<const double> x,
                   std::span<double> out) const override {
    Eigen::Map<const Eigen::VectorXd> w(x.data(), d_);
    Eigen::Map<Eigen::VectorXd> g(out.data(), d_);
    const auto& f = shards_[i].features[sample];
    const double p = 1.0 / (1.0 + std::exp(-f.dot(w)));
    g = (p - static_cast<double>(shards_[i].labels[sample])) * f + l2_ * w;
  }

  std::optional<double> positive_label_fraction(int i) const override {
    const auto& shard = shards_[i];
    double ones = 0;
    for (int y : shard.labels) ones += y;
    return ones / static_cast<double>(shard.labels.size());
  }

 private:
  // Damped Newton on the centralized objective, run to ||grad|| <= 1e-10.
  void solve_f_star() {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d_);
    std::vector<double> wv(d_, 0.0), gv(d_);
    for (int iter = 0; iter < 200; ++iter) {
      std::copy(w.data(), w.data() + d_, wv.begin());
      global_grad(wv, gv);
      Eigen::Map<Eigen::VectorXd> g(gv.data(), d_);
      if (g.norm() <= 1e-10) break;
      Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(d_, d_);
      long count = 0;
      for (const auto& shard : shards_) {
        for (const auto& f : shard.features) {
          const double p = 1.0 / (1.0 + std::exp(-f.dot(w)));
          hess += p * (1.0 - p) * f * f.transpose();
        }
        count += static_cast<long>(shard.features.size());
      }
      // equal shard sizes: Hessian of F is the all-sample mean plus the ridge
      hess /= static_cast<double>(count);
      hess += (l2_ + 1e-12) * Eigen::MatrixXd::Identity(d_, d_);
      Eigen::VectorXd step = hess.ldlt().solve(g);
      double fw;
      {
        std::copy(w.data(), w.data() + d_, wv.begin());
        fw = global_value(wv);
      }
      double tau = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        Eigen::VectorXd trial = w - tau * step;
        std::copy(trial.data(), trial.data() + d_, wv.begin());
        if (global_value(wv) <= fw - 1e-4 * tau * g.dot(step)) {
          w = trial;
          break;
        }
        tau *= 0.5;
      }
    }
    std::copy(w.data(), w.data() + d_, wv.begin());
    global_grad(wv, gv);
    double gn = 0;
    for (double v : gv) gn += v * v;
    if (std::sqrt(gn) > 1e-8)
      throw std::runtime_error(
          "logistic suite: centralized solve did not reach tolerance");
    x_star_ = wv;
    f_star_ = global_value(wv);
  }

  struct Shard {
    std::vector<Eigen::VectorXd> features;
    std::vector<int> labels;
  };
  std::vector<Shard> shards_;
  double l2_ = 0.0;
  double ms_bound_ = 0.0;
};

}  // namespace

std::unique_ptr<ObjectiveSuite> make_heterogeneous_quadratic(
    int n, int d, double heterogeneity, std::uint64_t seed) {
  return std::make_unique<QuadraticSuite>(n, d, heterogeneity, seed);
}

std::unique_ptr<ObjectiveSuite> make_logistic_suite(int n,
                                                    long samples_per_agent,
                                                    int d, Partition partition,
                                                    double l2,
                                                    std::uint64_t seed) {
  return std::make_unique<LogisticSuite>(n, samples_per_agent, d, partition,
                                         l2, seed);
}

double estimate_noise_variance(const ObjectiveSuite& suite, int i,
                               std::span<const double> x,
                               const NoiseModel& noise, long draws,
                               std::uint64_t seed) {
  const int d = suite.dim();
  std::vector<double> mean_g(d), g(d);
  suite.grad(i, x, mean_g);
  auto rng = CounterRng::keyed(seed, rng_salt::kGradNoise, 0x51);
  double acc = 0.0;
  for (long s = 0; s < draws; ++s) {
    stochastic_gradient(suite, i, x, noise, rng, g);
    double sq = 0.0;
    for (int k = 0; k < d; ++k) {
      const double dev = g[k] - mean_g[k];
      sq += dev * dev;
    }
    acc += sq;
  }
  return acc / static_cast<double>(draws);
}

}  // namespace fspda
