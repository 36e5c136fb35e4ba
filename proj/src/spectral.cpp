#include "fspda/spectral.hpp"

#include <cmath>
#include <stdexcept>

namespace fspda {

namespace {

Eigen::MatrixXd edge_outer(const IncidenceMatrix& inc, int e) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(inc.n, inc.n);
  auto [i, j] = inc.rows[e];
  m(i, i) += 1;
  m(j, j) += 1;
  m(i, j) -= 1;
  m(j, i) -= 1;
  return m;
}

// All size-k subsets of {0..d-1}, lexicographic.
std::vector<std::vector<int>> combinations(int d, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(k);
  for (int i = 0; i < k; ++i) cur[i] = i;
  for (;;) {
    out.push_back(cur);
    int i = k - 1;
    while (i >= 0 && cur[i] == d - k + i) --i;
    if (i < 0) break;
    ++cur[i];
    for (int j = i + 1; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

struct EdgePattern {
  std::vector<int> active;
  double prob;
};

std::vector<EdgePattern> edge_patterns(const GraphSampler& sampler) {
  const int m = sampler.num_edges();
  std::vector<EdgePattern> pats;
  switch (sampler.spec().edge_law) {
    case EdgeLaw::OneEdgeUniform: {
      if (m == 0) {
        pats.push_back({{}, 1.0});
      } else {
        for (int e = 0; e < m; ++e) pats.push_back({{e}, 1.0 / m});
      }
      break;
    }
    case EdgeLaw::FullGraph: {
      EdgePattern p;
      for (int e = 0; e < m; ++e) p.active.push_back(e);
      p.prob = 1.0;
      pats.push_back(std::move(p));
      break;
    }
    case EdgeLaw::PeriodicLocalUpdate: {
      EdgePattern full;
      for (int e = 0; e < m; ++e) full.active.push_back(e);
      const double q = 1.0 / static_cast<double>(sampler.spec().period);
      full.prob = q;
      pats.push_back(std::move(full));
      if (q < 1.0) pats.push_back({{}, 1.0 - q});
      break;
    }
    case EdgeLaw::IndependentBernoulli: {
      if (m > 60)
        throw std::invalid_argument(
            "spectral: Bernoulli edge-pattern enumeration infeasible for |E| > "
            "60; use monte_carlo");
      const auto& p = sampler.spec().bernoulli_p;
      const std::uint64_t total = 1ULL << m;
      for (std::uint64_t bits = 0; bits < total; ++bits) {
        EdgePattern pat;
        pat.prob = 1.0;
        for (int e = 0; e < m; ++e) {
          if (bits & (1ULL << e)) {
            pat.active.push_back(e);
            pat.prob *= p[e];
          } else {
            pat.prob *= 1.0 - p[e];
          }
        }
        pats.push_back(std::move(pat));
      }
      break;
    }
  }
  return pats;
}

// Per-coordinate blocks of the realized Laplacian A^T I(xi) A.
std::vector<Eigen::MatrixXd> realized_blocks(const IncidenceMatrix& inc,
                                             const Topology& topo,
                                             const GraphSample& s, int d) {
  std::vector<Eigen::MatrixXd> L(d, Eigen::MatrixXd::Zero(inc.n, inc.n));
  for (const auto& ae : s.edges) {
    auto [i, j] = topo.edge(ae.edge);
    for (auto c : ae.coords) {
      L[c](i, i) += 1;
      L[c](j, j) += 1;
      L[c](i, j) -= 1;
      L[c](j, i) -= 1;
    }
  }
  return L;
}

}  // namespace

Eigen::MatrixXd graph_laplacian(const IncidenceMatrix& inc) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(inc.n, inc.n);
  for (int e = 0; e < inc.num_edges(); ++e) l += edge_outer(inc, e);
  return l;
}

Eigen::MatrixXd expected_laplacian(const GraphSampler& sampler,
                                   const IncidenceMatrix& inc) {
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(inc.n, inc.n);
  for (int e = 0; e < inc.num_edges(); ++e)
    l += sampler.selection_prob(e) * edge_outer(inc, e);
  return l;
}

Eigen::MatrixXd consensus_complement_basis(int n) {
  Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
  Eigen::MatrixXd q = qr.householderQ();
  return q.rightCols(n - 1);
}

Eigen::MatrixXd consensus_pinv(const Eigen::MatrixXd& psd) {
  const int n = static_cast<int>(psd.rows());
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
  if ((psd * ones).norm() > 1e-9 * (1.0 + psd.norm()))
    throw std::invalid_argument(
        "pinv: matrix kernel does not contain the consensus direction");
  Eigen::MatrixXd u = consensus_complement_basis(n);
  Eigen::MatrixXd reduced = u.transpose() * psd * u;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
  if (es.eigenvalues().minCoeff() <= 0)
    throw std::invalid_argument("pinv: matrix is not positive definite on the "
                                "complement of the consensus direction");
  return u * es.eigenvectors() *
         es.eigenvalues().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose() * u.transpose();
}

SpectralReport spectral_constants(const GraphSampler& sampler,
                                  const IncidenceMatrix& inc,
                                  SpectralMode mode, long mc_samples,
                                  std::uint64_t mc_seed,
                                  double enumeration_cap) {
  const int n = inc.n;
  if (n < 2)
    throw std::invalid_argument("spectral: need at least two agents");
  const int d = sampler.dim();
  const Eigen::MatrixXd u = consensus_complement_basis(n);

  SpectralReport rep;
  rep.period_averaged =
      sampler.spec().edge_law == EdgeLaw::PeriodicLocalUpdate;

  const Eigen::MatrixXd lbar = expected_laplacian(sampler, inc);
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(u.transpose() * lbar * u);
    rep.rho_min = es.eigenvalues().minCoeff();
    rep.rho_max = es.eigenvalues().maxCoeff();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esb(
        u.transpose() * graph_laplacian(inc) * u);
    rep.rho_bar_min = esb.eigenvalues().minCoeff();
    rep.rho_bar_max = esb.eigenvalues().maxCoeff();
  }
  if (rep.rho_min <= 0 || rep.rho_bar_min <= 0)
    throw std::invalid_argument(
        "spectral: expected Laplacian is singular on the complement of the "
        "consensus direction (graph not connected in expectation)");

  // Edge outer products reused across outcomes.
  std::vector<Eigen::MatrixXd> outer;
  outer.reserve(inc.num_edges());
  for (int e = 0; e < inc.num_edges(); ++e) outer.push_back(edge_outer(inc, e));
  const Eigen::MatrixXd lbar_sq = lbar * lbar;

  auto sigma_from_second_moment =
      [&](const std::vector<Eigen::MatrixXd>& second, int* argmax_coord,
          Eigen::VectorXd* top_vec) {
        double best = 0.0;
        for (int c = 0; c < d; ++c) {
          Eigen::MatrixXd m = second[c] - lbar_sq;
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(u.transpose() * m *
                                                            u);
          const int last = static_cast<int>(es.eigenvalues().size()) - 1;
          double lam = es.eigenvalues()(last);
          if (c == 0 || lam > best) {
            best = lam;
            if (argmax_coord) *argmax_coord = c;
            if (top_vec) *top_vec = u * es.eigenvectors().col(last);
          }
        }
        return std::max(best, 0.0);
      };

  if (mode == SpectralMode::Exact) {
    const int k = sampler.mask_size();
    const auto masks = combinations(d, k);
    const double mask_count = static_cast<double>(masks.size());
    const auto patterns = edge_patterns(sampler);
    double outcome_count = 0.0;
    for (const auto& p : patterns)
      outcome_count += std::pow(mask_count, static_cast<double>(p.active.size()));
    if (outcome_count > enumeration_cap)
      throw std::invalid_argument(
          "spectral: exact enumeration would visit " +
          std::to_string(static_cast<long long>(outcome_count)) +
          " outcomes (cap " +
          std::to_string(static_cast<long long>(enumeration_cap)) +
          "); use monte_carlo mode");

    std::vector<Eigen::MatrixXd> second(d, Eigen::MatrixXd::Zero(n, n));
    std::vector<Eigen::MatrixXd> lc(d, Eigen::MatrixXd::Zero(n, n));
    for (const auto& pat : patterns) {
      const int na = static_cast<int>(pat.active.size());
      std::vector<size_t> odo(na, 0);  // mask index per active edge
      const double w_masks = std::pow(1.0 / mask_count, na);
      for (;;) {
        for (int c = 0; c < d; ++c) lc[c].setZero();
        for (int a = 0; a < na; ++a)
          for (int c : masks[odo[a]]) lc[c] += outer[pat.active[a]];
        const double w = pat.prob * w_masks;
        for (int c = 0; c < d; ++c) second[c] += w * (lc[c] * lc[c]);
        // advance odometer
        int pos = 0;
        while (pos < na && ++odo[pos] == masks.size()) odo[pos++] = 0;
        if (pos == na) break;
        if (na == 0) break;
      }
    }
    rep.sigma_A_sq = sigma_from_second_moment(second, nullptr, nullptr);
    rep.method = "exact-enumeration";
    return rep;
  }

  // Monte Carlo over a dedicated sample stream.
  if (mc_samples < 2)
    throw std::invalid_argument("spectral: monte_carlo needs >= 2 samples");
  SamplerSpec mc_spec = sampler.spec();
  mc_spec.seed = mc_seed;
  // Rebuild a topology view from the incidence rows for sampling.
  std::vector<std::pair<int, int>> edges = inc.rows;
  Topology topo(n, std::move(edges));
  GraphSampler mc_sampler(mc_spec, topo, d);

  std::vector<Eigen::MatrixXd> second(d, Eigen::MatrixXd::Zero(n, n));
  for (long t = 0; t < mc_samples; ++t) {
    auto s = mc_sampler.sample(t);
    auto lc = realized_blocks(inc, topo, s, d);
    for (int c = 0; c < d; ++c) second[c] += lc[c] * lc[c];
  }
  for (int c = 0; c < d; ++c) second[c] /= static_cast<double>(mc_samples);
  int cstar = 0;
  Eigen::VectorXd v;
  rep.sigma_A_sq = sigma_from_second_moment(second, &cstar, &v);

  // Second pass: standard error of the quadratic form at the top eigenvector.
  const double lv_sq = (lbar * v).squaredNorm();
  double mean_z = 0.0, mean_z2 = 0.0;
  for (long t = 0; t < mc_samples; ++t) {
    auto s = mc_sampler.sample(t);
    auto lc = realized_blocks(inc, topo, s, d);
    const double z = (lc[cstar] * v).squaredNorm() - lv_sq;
    mean_z += z;
    mean_z2 += z * z;
  }
  mean_z /= static_cast<double>(mc_samples);
  mean_z2 /= static_cast<double>(mc_samples);
  const double var_z = std::max(mean_z2 - mean_z * mean_z, 0.0);
  rep.mc_stderr = std::sqrt(var_z / static_cast<double>(mc_samples));
  rep.mc_samples = mc_samples;
  rep.method = "monte-carlo(" + std::to_string(mc_samples) + ")";
  return rep;
}

}  // namespace fspda
