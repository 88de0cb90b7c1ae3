#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "gemini/transport.hpp"
#include "support/oracles.hpp"

using namespace gemini;

namespace {

DiscreteMeasure random_measure(std::mt19937_64& rng, int n, double lo = 0.05) {
  std::uniform_real_distribution<double> u(lo, 1.0);
  DiscreteMeasure m;
  m.weights.resize(n);
  double s = 0.0;
  for (double& w : m.weights) s += (w = u(rng));
  for (double& w : m.weights) w /= s;
  return m;
}

CostMatrix random_cost(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.1, 3.0);
  DenseArray c(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) c.at(i, j) = c.at(j, i) = u(rng);
  return CostMatrix{std::move(c), CostKind::Precomputed};
}

}  // namespace

TEST_CASE("all mass across a two-point gap costs the full fare") {
  DiscreteMeasure p{{1.0, 0.0}}, q{{0.0, 1.0}};
  CostMatrix c{DenseArray::from_rows({{0.0, 3.0}, {3.0, 0.0}}), CostKind::Precomputed};
  TransportPlan t = emd(p, q, c);
  CHECK(t.cost_value == Catch::Approx(3.0).margin(1e-12));
  CHECK(t.plan.at(0, 1) == Catch::Approx(1.0));
  // Duals are unique here up to a constant: u1 - u2 = 3, reported zero-sum.
  CHECK(t.dual_u[0] - t.dual_u[1] == Catch::Approx(3.0).margin(1e-9));
  CHECK(t.dual_u[0] + t.dual_u[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("half the mass moves when one sink absorbs everything") {
  DiscreteMeasure p{{0.5, 0.5}}, q{{0.0, 1.0}};
  CostMatrix c{DenseArray::from_rows({{0.0, 2.0}, {2.0, 0.0}}), CostKind::Precomputed};
  TransportPlan t = emd(p, q, c);
  CHECK(t.cost_value == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("identical measures transport for free") {
  std::mt19937_64 rng(2);
  DiscreteMeasure p = random_measure(rng, 7);
  CostMatrix c = random_cost(rng, 7);
  TransportPlan t = emd(p, p, c);
  CHECK(t.cost_value == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("uniform source into a single sink pays the mean fare") {
  std::mt19937_64 rng(6);
  int n = 5;
  CostMatrix c = random_cost(rng, n);
  DiscreteMeasure p{std::vector<double>(n, 1.0 / n)};
  DiscreteMeasure q{{0.0, 0.0, 1.0, 0.0, 0.0}};
  double want = 0.0;
  for (int i = 0; i < n; ++i) want += c.m.at(i, 2) / n;
  CHECK(emd(p, q, c).cost_value == Catch::Approx(want).margin(1e-10));
}

TEST_CASE("plan marginals reproduce the input measures") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 2 + static_cast<int>(rng() % 7);
    DiscreteMeasure p = random_measure(rng, n), q = random_measure(rng, n);
    CostMatrix c = random_cost(rng, n);
    TransportPlan t = emd(p, q, c);
    for (int i = 0; i < n; ++i) {
      double row = 0.0, colsum = 0.0;
      for (int j = 0; j < n; ++j) {
        row += t.plan.at(i, j);
        colsum += t.plan.at(j, i);
        REQUIRE(t.plan.at(i, j) >= 0.0);
      }
      REQUIRE(row == Catch::Approx(p.weights[i]).margin(1e-10));
      REQUIRE(colsum == Catch::Approx(q.weights[i]).margin(1e-10));
    }
  }
}

TEST_CASE("complementary slackness holds on the support of the plan") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 3 + static_cast<int>(rng() % 5);
    DiscreteMeasure p = random_measure(rng, n), q = random_measure(rng, n);
    CostMatrix c = random_cost(rng, n);
    TransportPlan t = emd(p, q, c);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        REQUIRE(c.m.at(i, j) - t.dual_u[i] - t.dual_v[j] >= -1e-8);  // dual feasibility
        if (t.plan.at(i, j) > 1e-12)
          REQUIRE(std::abs(c.m.at(i, j) - t.dual_u[i] - t.dual_v[j]) < 1e-8);
      }
  }
}

TEST_CASE("optimal value matches a tableau-simplex oracle on random instances") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    int n = 2 + static_cast<int>(rng() % 5);
    DiscreteMeasure p = random_measure(rng, n), q = random_measure(rng, n);
    CostMatrix c = random_cost(rng, n);
    double got = emd(p, q, c).cost_value;
    double want = oracles::lp_transport_cost(p.weights, q.weights, c.m);
    REQUIRE(got == Catch::Approx(want).margin(1e-8));
  }
}

TEST_CASE("transport cost is symmetric under swapping measures with a symmetric cost") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 8; ++trial) {
    int n = 3 + static_cast<int>(rng() % 4);
    DiscreteMeasure p = random_measure(rng, n), q = random_measure(rng, n);
    CostMatrix c = random_cost(rng, n);
    CHECK(emd(p, q, c).cost_value == Catch::Approx(emd(q, p, c).cost_value).margin(1e-10));
  }
}

TEST_CASE("dual potentials are tangent gradients of the cost in the weights") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 12; ++trial) {
    int n = 3 + static_cast<int>(rng() % 4);
    DiscreteMeasure p = random_measure(rng, n, 0.1), q = random_measure(rng, n, 0.1);
    CostMatrix c = random_cost(rng, n);
    auto [u, v] = emd_gradient_wrt_weights(p, q, c);

    // Random zero-sum direction keeps p on the simplex.
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    std::vector<double> delta(n);
    double mean = 0.0;
    for (double& d : delta) mean += (d = ud(rng));
    mean /= n;
    for (double& d : delta) d -= mean;

    double h = 1e-6;
    DiscreteMeasure up = p, dn = p;
    for (int i = 0; i < n; ++i) {
      up.weights[i] += h * delta[i];
      dn.weights[i] -= h * delta[i];
    }
    double fd = (emd(up, q, c).cost_value - emd(dn, q, c).cost_value) / (2.0 * h);
    double analytic = 0.0;
    for (int i = 0; i < n; ++i) analytic += u[i] * delta[i];
    REQUIRE(analytic == Catch::Approx(fd).epsilon(1e-4).margin(1e-7));
  }
}

TEST_CASE("invalid measures and mismatched costs are rejected") {
  CostMatrix c{DenseArray::from_rows({{0.0, 1.0}, {1.0, 0.0}}), CostKind::Precomputed};
  CHECK_THROWS_AS(emd(DiscreteMeasure{{0.7, 0.7}}, DiscreteMeasure{{0.5, 0.5}}, c), std::invalid_argument);
  CHECK_THROWS_AS(emd(DiscreteMeasure{{-0.5, 1.5}}, DiscreteMeasure{{0.5, 0.5}}, c), std::invalid_argument);
  CHECK_THROWS_AS(emd(DiscreteMeasure{{0.0, 0.0}}, DiscreteMeasure{{0.5, 0.5}}, c), std::invalid_argument);
  CHECK_THROWS_AS(emd(DiscreteMeasure{{0.2, 0.3, 0.5}}, DiscreteMeasure{{0.5, 0.5}}, c), std::invalid_argument);
  DiscreteMeasure nan_m{{0.5, 0.5}};
  nan_m.weights[0] = std::nan("");
  CHECK_THROWS_AS(emd(nan_m, DiscreteMeasure{{0.5, 0.5}}, c), std::invalid_argument);
}

TEST_CASE("solver is deterministic") {
  std::mt19937_64 rng(29);
  DiscreteMeasure p = random_measure(rng, 9), q = random_measure(rng, 9);
  CostMatrix c = random_cost(rng, 9);
  TransportPlan a = emd(p, q, c), b = emd(p, q, c);
  CHECK(a.cost_value == b.cost_value);
  for (int i = 0; i < a.plan.size(); ++i) REQUIRE(a.plan.data[i] == b.plan.data[i]);
  for (int i = 0; i < 9; ++i) REQUIRE(a.dual_u[i] == b.dual_u[i]);
}

TEST_CASE("degenerate equal weights still terminate and agree with the oracle") {
  // Uniform weights maximise degeneracy; this is the regime Bland's rule exists for.
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 4 + static_cast<int>(rng() % 3);
    DiscreteMeasure p{std::vector<double>(n, 1.0 / n)}, q{std::vector<double>(n, 1.0 / n)};
    CostMatrix c = random_cost(rng, n);
    double got = emd(p, q, c).cost_value;
    double want = oracles::lp_transport_cost(p.weights, q.weights, c.m);
    REQUIRE(got == Catch::Approx(want).margin(1e-8));

    // Break the exact tie so the solve cannot stay on the identity coupling;
    // nearly uniform weights keep almost every pivot degenerate.
    for (int i = 0; i < n; ++i) p.weights[i] += (i % 2 == 0 ? 1e-9 : -1e-9);
    double total = 0.0;
    for (double w : p.weights) total += w;
    for (double& w : p.weights) w /= total;
    got = emd(p, q, c).cost_value;
    want = oracles::lp_transport_cost(p.weights, q.weights, c.m);
    REQUIRE(got == Catch::Approx(want).margin(1e-8));
  }
}
