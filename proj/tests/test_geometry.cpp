#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "gemini/geometry.hpp"
#include "support/oracles.hpp"

using namespace gemini;

namespace {

DenseArray random_points(std::mt19937_64& rng, int n, int d, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  DenseArray x(n, d);
  for (double& v : x.data) v = u(rng);
  return x;
}

}  // namespace

TEST_CASE("nearest-rank quantile hand cases") {
  CHECK(quantile_nearest_rank({3.0, 1.0, 2.0}, 0.05) == 1.0);
  CHECK(quantile_nearest_rank({3.0, 1.0, 2.0}, 0.34) == 2.0);
  CHECK(quantile_nearest_rank({3.0, 1.0, 2.0}, 1.0) == 3.0);
  CHECK_THROWS_AS(quantile_nearest_rank({1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(quantile_nearest_rank({}, 0.5), std::invalid_argument);
}

TEST_CASE("gaussian kernel closed-form entries and exact unit diagonal") {
  DenseArray x = DenseArray::from_rows({{0.0}, {2.0}});
  KernelMatrix k = build_kernel(x, KernelKind::Gaussian, 1.0);
  CHECK(k.m.at(0, 0) == 1.0);
  CHECK(k.m.at(1, 1) == 1.0);
  CHECK(k.m.at(0, 1) == Catch::Approx(std::exp(-2.0)));
  CHECK(k.m.at(1, 0) == Catch::Approx(std::exp(-2.0)));
  CHECK_THROWS_AS(build_kernel(x, KernelKind::Gaussian, 0.0), std::invalid_argument);
}

TEST_CASE("linear kernel is the gram matrix of dot products") {
  DenseArray x = DenseArray::from_rows({{1.0, 2.0}, {-1.0, 0.5}});
  KernelMatrix k = build_kernel(x, KernelKind::Linear);
  CHECK(k.m.at(0, 0) == Catch::Approx(5.0));
  CHECK(k.m.at(0, 1) == Catch::Approx(0.0));
  CHECK(k.m.at(1, 1) == Catch::Approx(1.25));
}

TEST_CASE("gaussian kernel is positive semidefinite on random points") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    DenseArray x = random_points(rng, 24, 3, 2.0);
    KernelMatrix k = build_kernel(x, KernelKind::Gaussian, 0.7);
    Eigen::MatrixXd em(24, 24);
    for (int i = 0; i < 24; ++i)
      for (int j = 0; j < 24; ++j) em(i, j) = k.m.at(i, j);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(em);
    CHECK(es.eigenvalues().minCoeff() > -1e-8);
  }
}

TEST_CASE("euclidean and squared euclidean costs") {
  DenseArray x = DenseArray::from_rows({{0.0, 0.0}, {3.0, 4.0}});
  CostMatrix ce = build_cost(x, CostKind::Euclidean);
  CostMatrix cs = build_cost(x, CostKind::SquaredEuclidean);
  CHECK(ce.m.at(0, 1) == Catch::Approx(5.0));
  CHECK(cs.m.at(0, 1) == Catch::Approx(25.0));
  CHECK(ce.m.at(0, 0) == 0.0);
  CHECK(ce.m.at(1, 0) == ce.m.at(0, 1));
}

TEST_CASE("euclidean cost satisfies the triangle inequality") {
  std::mt19937_64 rng(9);
  DenseArray x = random_points(rng, 20, 3);
  CostMatrix c = build_cost(x, CostKind::Euclidean);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j)
      for (int k = 0; k < 20; ++k) REQUIRE(c.m.at(i, j) <= c.m.at(i, k) + c.m.at(k, j) + 1e-12);
}

TEST_CASE("three collinear points at unit spacing give hop count two end to end") {
  DenseArray x = DenseArray::from_rows({{0.0}, {1.0}, {2.0}});
  // Pairwise distances are {1, 1, 2}; the median picks epsilon = 1.
  NeighborhoodGraph g = build_neighborhood_graph(x, 0.5);
  CHECK(g.epsilon == 1.0);
  DenseArray hops = shortest_path_hops(g);
  CHECK(hops.at(0, 1) == 1.0);
  CHECK(hops.at(1, 2) == 1.0);
  CHECK(hops.at(0, 2) == 2.0);
  CHECK(hops.at(2, 0) == 2.0);
  for (int i = 0; i < 3; ++i) CHECK(hops.at(i, i) == 0.0);
}

TEST_CASE("disconnected components pay the sample-count sentinel") {
  DenseArray x = DenseArray::from_rows({{0.0}, {0.1}, {100.0}, {100.1}});
  // Six pairwise distances, the two smallest are 0.1: rank ceil(0.3*6) = 2.
  NeighborhoodGraph g = build_neighborhood_graph(x, 0.3);
  REQUIRE(g.epsilon < 1.0);
  DenseArray hops = shortest_path_hops(g);
  CHECK(hops.at(0, 2) == 4.0);
  CHECK(hops.at(1, 3) == 4.0);
  CHECK(hops.at(0, 1) == 1.0);
  CHECK(hops.at(2, 3) == 1.0);
}

TEST_CASE("breadth-first hop counts match Floyd-Warshall on random graphs") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 8; ++trial) {
    int n = 10 + static_cast<int>(rng() % 40);
    DenseArray x = random_points(rng, n, 2);
    std::uniform_real_distribution<double> uq(0.05, 0.5);
    NeighborhoodGraph g = build_neighborhood_graph(x, uq(rng));
    DenseArray got = shortest_path_hops(g);
    DenseArray want = oracles::floyd_warshall_hops(g.adj, static_cast<double>(n));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) REQUIRE(got.at(i, j) == want.at(i, j));
  }
}

TEST_CASE("shortest-path cost is a symmetric metric with zero diagonal") {
  std::mt19937_64 rng(33);
  DenseArray x = random_points(rng, 30, 2);
  CostMatrix c = build_cost(x, CostKind::ShortestPath, 0.2);
  for (int i = 0; i < 30; ++i) {
    CHECK(c.m.at(i, i) == 0.0);
    for (int j = 0; j < 30; ++j) {
      CHECK(c.m.at(i, j) == c.m.at(j, i));
      for (int k = 0; k < 30; ++k) REQUIRE(c.m.at(i, j) <= c.m.at(i, k) + c.m.at(k, j));
    }
  }
}

TEST_CASE("hop matrix is equivariant under point permutation") {
  std::mt19937_64 rng(4);
  DenseArray x = random_points(rng, 15, 2);
  CostMatrix c = build_cost(x, CostKind::ShortestPath, 0.3);
  std::vector<int> perm(15);
  for (int i = 0; i < 15; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  DenseArray xp(15, 2);
  for (int i = 0; i < 15; ++i)
    for (int d = 0; d < 2; ++d) xp.at(i, d) = x.at(perm[i], d);
  CostMatrix cp = build_cost(xp, CostKind::ShortestPath, 0.3);
  for (int i = 0; i < 15; ++i)
    for (int j = 0; j < 15; ++j) REQUIRE(cp.m.at(i, j) == c.m.at(perm[i], perm[j]));
}

TEST_CASE("precomputed matrices are validated") {
  DenseArray asym = DenseArray::from_rows({{0.0, 1.0}, {2.0, 0.0}});
  CHECK_THROWS_AS(kernel_from_matrix(asym), std::invalid_argument);
  CHECK_THROWS_AS(cost_from_matrix(asym), std::invalid_argument);
  DenseArray bad_diag = DenseArray::from_rows({{0.5, 1.0}, {1.0, 0.0}});
  CHECK_THROWS_AS(cost_from_matrix(bad_diag), std::invalid_argument);
  CHECK_NOTHROW(kernel_from_matrix(DenseArray::from_rows({{1.0, 0.2}, {0.2, 1.0}})));
  CHECK_NOTHROW(cost_from_matrix(DenseArray::from_rows({{0.0, 1.0}, {1.0, 0.0}})));
  CHECK_THROWS_AS(kernel_from_matrix(DenseArray(2, 3, 0.0)), std::invalid_argument);
}

TEST_CASE("submatrix slices rows and columns jointly") {
  DenseArray m = DenseArray::from_rows({{0.0, 1.0, 2.0}, {1.0, 0.0, 3.0}, {2.0, 3.0, 0.0}});
  std::vector<int> idx = {2, 0};
  DenseArray s = submatrix(m, idx);
  CHECK(s.rows == 2);
  CHECK(s.at(0, 0) == 0.0);
  CHECK(s.at(0, 1) == 2.0);
  CHECK(s.at(1, 0) == 2.0);
}
