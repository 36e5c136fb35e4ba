#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "support/oracles.hpp"

#include "fspda/graph.hpp"
#include "fspda/sampling.hpp"
#include "fspda/spectral.hpp"

using namespace fspda;

TEST_CASE("topology validation names the offender") {
  CHECK_THROWS_WITH_AS(Topology(3, {{0, 0}}),
                       doctest::Contains("self-loop"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(Topology(3, {{0, 1}, {1, 0}}),
                       doctest::Contains("duplicate"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(Topology(4, {{0, 1}}),
                       doctest::Contains("disconnected"),
                       std::invalid_argument);
  CHECK_THROWS_AS(Topology(3, {{0, 5}}), std::invalid_argument);
  CHECK_NOTHROW(Topology(1, {}));  // single agent, no edges
}

TEST_CASE("incidence: smallest graph is a single signed row") {
  Topology topo(2, {{0, 1}});
  auto inc = build_incidence(topo);
  REQUIRE(inc.num_edges() == 1);
  CHECK(inc.rows[0].first == 0);   // +1 at the smaller index
  CHECK(inc.rows[0].second == 1);  // -1 at the larger
}

TEST_CASE("incidence: A^T A equals the Laplacian, ring and complete spectra") {
  // ring n=4: eigenvalues {0, 2, 2, 4}
  {
    Topology topo = Topology::ring(4);
    auto a = test::dense_incidence(topo, 1);
    Eigen::MatrixXd lap = a.transpose() * a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
    Eigen::VectorXd expected(4);
    expected << 0, 2, 2, 4;
    CHECK((es.eigenvalues() - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  // complete n=5: 5I - 11^T, eigenvalues {0, 5, 5, 5, 5}
  {
    Topology topo = Topology::complete(5);
    auto a = test::dense_incidence(topo, 1);
    Eigen::MatrixXd lap = a.transpose() * a;
    Eigen::MatrixXd expected = 5.0 * Eigen::MatrixXd::Identity(5, 5) -
                               Eigen::MatrixXd::Ones(5, 5);
    CHECK((lap - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  // every row sums to zero
  {
    Topology topo = Topology::erdos_renyi(6, 0.7, 42);
    auto a = test::dense_incidence(topo, 2);
    CHECK(a.rowwise().sum().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("topology file round-trip with comments") {
  const char* path = "topo_test.txt";
  {
    std::ofstream out(path);
    out << "# a comment\n3\n0 1\n1 2  # trailing comment\n";
  }
  Topology topo = Topology::from_file(path);
  CHECK(topo.num_agents() == 3);
  REQUIRE(topo.num_edges() == 2);
  CHECK(topo.edge(0) == std::pair<int, int>{0, 1});
  std::remove(path);
}

TEST_CASE("sampler: one-edge law activates exactly one edge") {
  Topology topo(3, {{0, 1}, {1, 2}, {0, 2}});
  GraphSampler sampler({EdgeLaw::OneEdgeUniform, {}, 1, 1.0, 11}, topo, 4);
  for (long t = 0; t < 50; ++t) {
    auto s = sampler.sample(t);
    REQUIRE(s.edges.size() == 1);
    CHECK(s.edges[0].coords.size() == 4);  // s=1.0: full mask
  }
}

TEST_CASE("sampler: deterministic replay, byte-for-byte") {
  Topology topo = Topology::complete(5);
  SamplerSpec spec{EdgeLaw::IndependentBernoulli, {0.4}, 1, 0.5, 99};
  GraphSampler a(spec, topo, 6);
  GraphSampler b(spec, topo, 6);
  for (long t : {0L, 17L, 3L, 17L, 1000000L})
    CHECK(a.sample(t) == b.sample(t));
}

TEST_CASE("sampler: empirical selection frequency matches the product law") {
  // one-edge uniform over |E|=3, s=0.5 on d=4 -> every (edge, coord) entry
  // of E[I] equals (1/3)*(1/2)
  Topology topo(3, {{0, 1}, {1, 2}, {0, 2}});
  GraphSampler sampler({EdgeLaw::OneEdgeUniform, {}, 1, 0.5, 7}, topo, 4);
  const long N = 100000;
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(3, 4);
  for (long t = 0; t < N; ++t) {
    auto s = sampler.sample(t);
    REQUIRE(s.edges.size() == 1);
    CHECK(s.edges[0].coords.size() == 2);
    for (auto k : s.edges[0].coords) counts(s.edges[0].edge, k) += 1.0;
  }
  const double expect = 1.0 / 6.0;
  const double se = std::sqrt(expect * (1 - expect) / N);
  for (int e = 0; e < 3; ++e)
    for (int k = 0; k < 4; ++k)
      CHECK(std::abs(counts(e, k) / N - expect) < 3 * se);
}

TEST_CASE("sampler: periodic local update") {
  Topology topo = Topology::ring(4);
  GraphSampler sampler({EdgeLaw::PeriodicLocalUpdate, {}, 5, 1.0, 1}, topo, 2);
  CHECK(sampler.sample(0).edges.size() == 4);
  for (long t = 1; t < 5; ++t) CHECK(sampler.sample(t).empty());
  CHECK(sampler.sample(5).edges.size() == 4);
  CHECK(sampler.edge_prob(0) == doctest::Approx(0.2));
}

TEST_CASE("aggregate: trivial cases") {
  Topology topo(2, {{0, 1}});
  BlockVec x(2, 2);
  x.block(0)[0] = 1;
  x.block(0)[1] = 1;
  x.block(1)[0] = 3;
  x.block(1)[1] = 3;

  GraphSample empty;
  auto zero = apply_neighborhood_aggregate(empty, topo, x);
  CHECK(zero.data == std::vector<double>{0, 0, 0, 0});

  GraphSample full{0, {{0, {0, 1}}}};
  auto out = apply_neighborhood_aggregate(full, topo, x);
  CHECK(out.block(0)[0] == 2);
  CHECK(out.block(0)[1] == 2);
  CHECK(out.block(1)[0] == -2);
  CHECK(out.block(1)[1] == -2);
}

TEST_CASE("aggregate: path graph hand value and dense oracle") {
  Topology topo(3, {{0, 1}, {1, 2}});
  BlockVec x(3, 1);
  x.block(0)[0] = 0;
  x.block(1)[0] = 1;
  x.block(2)[0] = 5;
  GraphSample s{0, {{0, {0}}, {1, {0}}}};
  auto out = apply_neighborhood_aggregate(s, topo, x);
  CHECK(out.block(0)[0] == doctest::Approx(1));
  CHECK(out.block(1)[0] == doctest::Approx(3));
  CHECK(out.block(2)[0] == doctest::Approx(-4));

  auto dense = test::dense_aggregate(topo, s, test::flatten(x), 1);
  for (int i = 0; i < 3; ++i)
    CHECK(out.block(i)[0] == doctest::Approx(dense(i)).epsilon(1e-14));
}

TEST_CASE("aggregate: blockwise equals dense for random samples") {
  auto rng = CounterRng::keyed(123, 1);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.next_below(4));  // 3..6
    const int d = 1 + static_cast<int>(rng.next_below(4));  // 1..4
    Topology topo = Topology::complete(n);
    GraphSampler sampler(
        {EdgeLaw::IndependentBernoulli, {0.5}, 1, 0.6, rng.next_u64()}, topo,
        d);
    BlockVec x(n, d);
    for (auto& v : x.data) v = rng.next_gaussian();
    auto s = sampler.sample(trial);
    auto fast = apply_neighborhood_aggregate(s, topo, x);
    auto dense = test::dense_aggregate(topo, s, test::flatten(x), d);
    CHECK((test::flatten(fast) - dense).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("aggregate: orientation independence") {
  // flipping a row's sign leaves A^T I A unchanged; the blockwise evaluation
  // never sees the orientation at all, so compare dense oracles directly
  Topology topo(3, {{0, 1}, {1, 2}, {0, 2}});
  const int d = 2;
  Eigen::MatrixXd a = test::dense_incidence(topo, d);
  Eigen::MatrixXd a_flipped = a;
  a_flipped.row(2) *= -1.0;  // flip one edge row (both coords)
  a_flipped.row(3) *= -1.0;
  GraphSample s{0, {{0, {0, 1}}, {1, {0}}, {2, {1}}}};
  Eigen::MatrixXd sel = test::dense_selection(s, 3, d);
  Eigen::MatrixXd m1 = a.transpose() * sel * a;
  Eigen::MatrixXd m2 = a_flipped.transpose() * sel * a_flipped;
  CHECK((m1 - m2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("k-seminorm") {
  BlockVec x(2, 1);
  x.block(0)[0] = 0;
  x.block(1)[0] = 2;
  CHECK(k_seminorm_sq(x) == doctest::Approx(2.0));

  BlockVec consensus(3, 2);
  for (int i = 0; i < 3; ++i) {
    consensus.block(i)[0] = 1.5;
    consensus.block(i)[1] = -7;
  }
  CHECK(k_seminorm_sq(consensus) == doctest::Approx(0.0));

  // random x: equals x^T K x with the dense projector
  auto rng = CounterRng::keyed(5, 5);
  BlockVec r(5, 3);
  for (auto& v : r.data) v = rng.next_gaussian();
  Eigen::MatrixXd k = test::dense_k_projector(5, 3);
  Eigen::VectorXd xf = test::flatten(r);
  CHECK(k_seminorm_sq(r) ==
        doctest::Approx(xf.dot(k * xf)).epsilon(1e-12));
}

TEST_CASE("contraction: (I - gamma A^T R A) is a K-contraction") {
  Topology topo = Topology::ring(5);
  const int d = 2;
  GraphSampler sampler({EdgeLaw::OneEdgeUniform, {}, 1, 0.5, 3}, topo, d);
  IncidenceMatrix inc = build_incidence(topo, d);
  Eigen::MatrixXd lbar = expected_laplacian(sampler, inc);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      consensus_complement_basis(5).transpose() * lbar *
      consensus_complement_basis(5));
  const double rho_min = es.eigenvalues().minCoeff();
  const double rho_max = es.eigenvalues().maxCoeff();
  const double gamma = rho_min / (rho_max * rho_max);

  auto rng = CounterRng::keyed(17, 0);
  Eigen::MatrixXd kn = Eigen::MatrixXd::Identity(5, 5) -
                       Eigen::MatrixXd::Constant(5, 5, 0.2);
  for (int probe = 0; probe < 100; ++probe) {
    Eigen::VectorXd x(5);
    for (int i = 0; i < 5; ++i) x(i) = rng.next_gaussian();
    Eigen::VectorXd y = x - gamma * (lbar * x);
    const double lhs = y.dot(kn * y);
    const double rhs = (1 - gamma * rho_min) * x.dot(kn * x);
    CHECK(lhs <= rhs * (1 + 1e-12));
  }
}
