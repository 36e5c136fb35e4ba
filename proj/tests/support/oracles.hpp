#pragma once

// Dense-matrix reference transcriptions used as independent oracles in the
// tests. Everything here materializes the Kronecker-expanded operators the
// library deliberately never forms, so agreement is meaningful.

#include <Eigen/Dense>

#include "fspda/algorithms.hpp"
#include "fspda/graph.hpp"
#include "fspda/sampling.hpp"

namespace fspda::test {

// Full incidence matrix A = A_tilde (x) I_d, shape (|E| d) x (n d).
inline Eigen::MatrixXd dense_incidence(const Topology& topo, int d) {
  const int m = topo.num_edges(), n = topo.num_agents();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m * d, n * d);
  for (int e = 0; e < m; ++e) {
    auto [i, j] = topo.edge(e);
    for (int k = 0; k < d; ++k) {
      a(e * d + k, i * d + k) = 1.0;
      a(e * d + k, j * d + k) = -1.0;
    }
  }
  return a;
}

// Diagonal selection operator I(xi) of shape (|E| d) x (|E| d).
inline Eigen::MatrixXd dense_selection(const GraphSample& s, int num_edges,
                                       int d) {
  Eigen::MatrixXd sel = Eigen::MatrixXd::Zero(num_edges * d, num_edges * d);
  for (const auto& ae : s.edges)
    for (auto k : ae.coords) sel(ae.edge * d + k, ae.edge * d + k) = 1.0;
  return sel;
}

inline Eigen::VectorXd flatten(const BlockVec& x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data.data(),
                                           static_cast<long>(x.data.size()));
}

inline BlockVec unflatten(const Eigen::VectorXd& v, int n, int d) {
  BlockVec x(n, d);
  Eigen::Map<Eigen::VectorXd>(x.data.data(), v.size()) = v;
  return x;
}

// The aggregate convention: sum_j C_ij (x_j - x_i) = -(A^T I(xi) A) x.
inline Eigen::VectorXd dense_aggregate(const Topology& topo,
                                       const GraphSample& s,
                                       const Eigen::VectorXd& x, int d) {
  Eigen::MatrixXd a = dense_incidence(topo, d);
  Eigen::MatrixXd sel = dense_selection(s, topo.num_edges(), d);
  return -(a.transpose() * sel * a) * x;
}

// Projector K = (I - 11^T/n) (x) I_d.
inline Eigen::MatrixXd dense_k_projector(int n, int d) {
  Eigen::MatrixXd kn = Eigen::MatrixXd::Identity(n, n) -
                       Eigen::MatrixXd::Constant(n, n, 1.0 / n);
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n * d, n * d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c)
      for (int kk = 0; kk < d; ++kk) k(r * d + kk, c * d + kk) = kn(r, c);
  return k;
}

// One EXTRA step sequence with W = I - gamma * Laplacian (mixing) and
// W_bar = (I + W)/2, for deterministic gradients on a static graph:
//   x^1 = W x^0 - alpha grad f(x^0)
//   x^{t+2} = (I + W) x^{t+1} - W_bar x^t - alpha (grad f(x^{t+1}) - grad
//   f(x^t))
struct ExtraReference {
  Eigen::MatrixXd w, w_bar;
  double alpha;

  ExtraReference(const Topology& topo, int d, double gamma, double alpha_)
      : alpha(alpha_) {
    Eigen::MatrixXd a = dense_incidence(topo, d);
    Eigen::MatrixXd lap = a.transpose() * a;
    const int nd = static_cast<int>(lap.rows());
    w = Eigen::MatrixXd::Identity(nd, nd) - gamma * lap;
    w_bar = 0.5 * (Eigen::MatrixXd::Identity(nd, nd) + w);
  }
};

}  // namespace fspda::test
