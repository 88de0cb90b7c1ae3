#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <numeric>
#include <vector>

#include "gemini/models.hpp"
#include "support/oracles.hpp"

using namespace gemini;

namespace {

DenseArray random_features(std::mt19937_64& rng, int n, int d) {
  std::normal_distribution<double> g(0.0, 1.0);
  DenseArray x(n, d);
  for (auto& v : x.data) v = g(rng);
  return x;
}

std::vector<int> iota_indices(int n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// Weighted sum of the posterior matrix: an asymmetric scalar that exercises
// every output entry, for finite-difference checks on the parameters.
double weighted_posterior_sum(const ClusterModel& m, const DenseArray& x, std::span<const int> idx,
                              const DenseArray& wts, std::vector<double>* grad_out = nullptr, int leaf = 0) {
  ad::Tape tape;
  PosteriorBatch batch = m.predict(tape, x, idx);
  ad::Var s = ad::sum_all(ad::mul(batch.matrix, ad::leaf(tape, wts)));
  if (grad_out) {
    tape.backward(s.node);
    *grad_out = batch.leaves[static_cast<size_t>(leaf)].grad_or_zero().data;
  }
  return s.scalar();
}

}  // namespace

TEST_CASE("posterior rows are stochastic for both models") {
  std::mt19937_64 rng(5);
  DenseArray x = random_features(rng, 12, 3);
  auto idx = iota_indices(12);

  CategoricalTableModel table(12, 4, 77);
  MlpModel mlp({3, 8, 4}, 77);
  for (ClusterModel* m : {static_cast<ClusterModel*>(&table), static_cast<ClusterModel*>(&mlp)}) {
    ad::Tape tape;
    PosteriorBatch b = m->predict(tape, x, idx);
    REQUIRE(b.matrix.rows() == 12);
    REQUIRE(b.matrix.cols() == 4);
    for (int i = 0; i < 12; ++i) {
      double sum = 0.0;
      for (int k = 0; k < 4; ++k) {
        REQUIRE(b.matrix.value().at(i, k) >= 0.0);
        sum += b.matrix.value().at(i, k);
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-9));
    }
    REQUIRE(b.sample_indices == idx);
  }
}

TEST_CASE("mlp with zeroed parameters emits uniform rows") {
  MlpModel mlp({2, 5, 3}, 9);
  for (DenseArray* p : mlp.parameters())
    for (double& v : p->data) v = 0.0;
  std::mt19937_64 rng(1);
  DenseArray x = random_features(rng, 6, 2);
  auto idx = iota_indices(6);
  ad::Tape tape;
  PosteriorBatch b = mlp.predict(tape, x, idx);
  for (int i = 0; i < 6; ++i)
    for (int k = 0; k < 3; ++k) REQUIRE(b.matrix.value().at(i, k) == Catch::Approx(1.0 / 3.0).margin(1e-12));
}

TEST_CASE("table model saturates after a large logit gap") {
  CategoricalTableModel table(3, 2, 4);
  DenseArray* logits = table.parameters()[0];
  logits->at(1, 0) = 10.0;
  logits->at(1, 1) = -10.0;
  ad::Tape tape;
  std::vector<int> idx{1};
  PosteriorBatch b = table.predict(tape, DenseArray(0, 0), idx);
  REQUIRE(b.matrix.value().at(0, 0) == Catch::Approx(1.0).margin(1e-4));
  REQUIRE(b.matrix.value().at(0, 1) == Catch::Approx(0.0).margin(1e-4));
}

TEST_CASE("parameter gradients through predict match finite differences") {
  std::mt19937_64 rng(11);
  DenseArray x = random_features(rng, 7, 3);
  auto idx = iota_indices(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DenseArray wts(7, 4);
  for (auto& v : wts.data) v = u(rng);

  MlpModel mlp({3, 6, 4}, 21);
  CategoricalTableModel table(7, 4, 21);
  for (ClusterModel* m : {static_cast<ClusterModel*>(&mlp), static_cast<ClusterModel*>(&table)}) {
    auto params = m->parameters();
    for (size_t pi = 0; pi < params.size(); ++pi) {
      std::vector<double> grad;
      weighted_posterior_sum(*m, x, idx, wts, &grad, static_cast<int>(pi));
      const double h = 1e-5;
      for (size_t e = 0; e < params[pi]->data.size(); ++e) {
        double keep = params[pi]->data[e];
        params[pi]->data[e] = keep + h;
        double up = weighted_posterior_sum(*m, x, idx, wts);
        params[pi]->data[e] = keep - h;
        double dn = weighted_posterior_sum(*m, x, idx, wts);
        params[pi]->data[e] = keep;
        double fd = (up - dn) / (2.0 * h);
        double denom = std::max(std::abs(fd), 1e-6);
        REQUIRE(std::abs(grad[e] - fd) / denom < 1e-4);
      }
    }
  }
}

TEST_CASE("batch row permutation permutes posteriors identically") {
  std::mt19937_64 rng(3);
  DenseArray x = random_features(rng, 9, 2);
  MlpModel mlp({2, 5, 3}, 13);
  auto idx = iota_indices(9);
  ad::Tape t1;
  PosteriorBatch base = mlp.predict(t1, x, idx);

  std::vector<int> perm{4, 0, 8, 2, 6, 1, 7, 3, 5};
  DenseArray xp(9, 2);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 2; ++j) xp.at(i, j) = x.at(perm[i], j);
  ad::Tape t2;
  PosteriorBatch permuted = mlp.predict(t2, xp, perm);
  for (int i = 0; i < 9; ++i)
    for (int k = 0; k < 3; ++k)
      REQUIRE(permuted.matrix.value().at(i, k) == Catch::Approx(base.matrix.value().at(perm[i], k)).margin(1e-14));

  // Table model: gathering permuted indices is the same permutation.
  CategoricalTableModel table(9, 3, 13);
  ad::Tape t3, t4;
  PosteriorBatch tb = table.predict(t3, DenseArray(0, 0), idx);
  PosteriorBatch tp = table.predict(t4, DenseArray(0, 0), perm);
  for (int i = 0; i < 9; ++i)
    for (int k = 0; k < 3; ++k)
      REQUIRE(tp.matrix.value().at(i, k) == Catch::Approx(tb.matrix.value().at(perm[i], k)).margin(1e-14));
}

TEST_CASE("parameter counts match the architecture") {
  CategoricalTableModel table(100, 3, 0);
  size_t table_count = 0;
  for (DenseArray* p : table.parameters()) table_count += p->data.size();
  REQUIRE(table_count == 300);

  MlpModel mlp({2, 64, 64, 4}, 0);
  size_t mlp_count = 0;
  for (DenseArray* p : mlp.parameters()) mlp_count += p->data.size();
  REQUIRE(mlp_count == (2 + 1) * 64 + (64 + 1) * 64 + (64 + 1) * 4);
}

TEST_CASE("glorot init stays inside its bound and biases start at zero") {
  MlpModel mlp({10, 7, 3}, 42);
  auto params = mlp.parameters();
  double limit0 = std::sqrt(6.0 / (10 + 7)), limit1 = std::sqrt(6.0 / (7 + 3));
  double max_abs = 0.0;
  for (double v : params[0]->data) {
    REQUIRE(std::abs(v) <= limit0);
    max_abs = std::max(max_abs, std::abs(v));
  }
  REQUIRE(max_abs > 0.1 * limit0);  // actually randomised, not degenerate
  for (double v : params[2]->data) REQUIRE(std::abs(v) <= limit1);
  for (double v : params[1]->data) REQUIRE(v == 0.0);
  for (double v : params[3]->data) REQUIRE(v == 0.0);

  MlpModel same({10, 7, 3}, 42), other({10, 7, 3}, 43);
  REQUIRE(same.parameters()[0]->data == params[0]->data);
  REQUIRE(other.parameters()[0]->data != params[0]->data);
}

TEST_CASE("cluster proportions average the posterior columns") {
  PosteriorBatch b;
  ad::Tape tape;
  b.matrix = ad::leaf(tape, DenseArray::from_rows({{1.0, 0.0}, {0.0, 1.0}}));
  auto pi = cluster_proportions(b);
  REQUIRE(pi[0] == Catch::Approx(0.5));
  REQUIRE(pi[1] == Catch::Approx(0.5));

  b.matrix = ad::leaf(tape, DenseArray::from_rows({{0.8, 0.2}, {0.8, 0.2}, {0.8, 0.2}}));
  pi = cluster_proportions(b);
  REQUIRE(pi[0] == Catch::Approx(0.8));
  REQUIRE(pi[1] == Catch::Approx(0.2));

  std::mt19937_64 rng(2);
  DenseArray soft(100, 3);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  for (int i = 0; i < 100; ++i) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += (soft.at(i, k) = u(rng));
    for (int k = 0; k < 3; ++k) soft.at(i, k) /= s;
  }
  b.matrix = ad::leaf(tape, soft);
  pi = cluster_proportions(b);
  REQUIRE(pi[0] + pi[1] + pi[2] == Catch::Approx(1.0).margin(1e-12));

  PosteriorBatch empty;
  empty.matrix = ad::leaf(tape, DenseArray(0, 2));
  REQUIRE_THROWS_AS(cluster_proportions(empty), std::invalid_argument);
}

TEST_CASE("hard assignment breaks ties toward the lowest cluster") {
  PosteriorBatch b;
  ad::Tape tape;
  b.matrix = ad::leaf(tape, DenseArray::from_rows({{0.9, 0.1}, {0.5, 0.5}, {0.1, 0.9}}));
  REQUIRE(hard_assign(b) == std::vector<int>{0, 0, 1});

  b.matrix = ad::leaf(tape, DenseArray::from_rows({{0.25, 0.25, 0.25, 0.25}}));
  REQUIRE(hard_assign(b) == std::vector<int>{0});
}

TEST_CASE("invalid model inputs are rejected") {
  CategoricalTableModel table(5, 3, 0);
  ad::Tape tape;
  std::vector<int> bad{5};
  REQUIRE_THROWS_AS(table.predict(tape, DenseArray(0, 0), bad), std::out_of_range);
  std::vector<int> negative{-1};
  REQUIRE_THROWS_AS(table.predict(tape, DenseArray(0, 0), negative), std::out_of_range);

  MlpModel mlp({3, 4, 2}, 0);
  DenseArray narrow(2, 2);
  std::vector<int> idx{0, 1};
  REQUIRE_THROWS_AS(mlp.predict(tape, narrow, idx), std::invalid_argument);

  REQUIRE_THROWS_AS(CategoricalTableModel(0, 3, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(CategoricalTableModel(5, 1, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(MlpModel({4}, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(MlpModel({4, 0, 2}, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(MlpModel({4, 8, 1}, 0), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip both model kinds bit for bit") {
  std::mt19937_64 rng(8);
  DenseArray x = random_features(rng, 6, 3);
  auto idx = iota_indices(6);

  MlpModel mlp({3, 5, 4}, 1234);
  // Nudge a few weights so the file differs from a fresh init.
  mlp.parameters()[0]->at(0, 0) = 2.5;
  mlp.parameters()[1]->at(0, 1) = -0.75;
  std::string path = "ckpt_mlp_test.bin";
  save_checkpoint(mlp, path);
  auto loaded = load_checkpoint(path);
  REQUIRE(loaded->kind() == "mlp");
  REQUIRE(loaded->layer_sizes() == std::vector<int>{3, 5, 4});
  REQUIRE(loaded->init_seed() == 1234);
  auto lp = loaded->parameters();
  auto mp = mlp.parameters();
  REQUIRE(lp.size() == mp.size());
  for (size_t i = 0; i < lp.size(); ++i) REQUIRE(lp[i]->data == mp[i]->data);
  ad::Tape t1, t2;
  PosteriorBatch a = mlp.predict(t1, x, idx);
  PosteriorBatch b = loaded->predict(t2, x, idx);
  REQUIRE(a.matrix.value().data == b.matrix.value().data);
  std::remove(path.c_str());

  CategoricalTableModel table(6, 3, 99);
  table.parameters()[0]->at(2, 1) = 4.0;
  path = "ckpt_table_test.bin";
  save_checkpoint(table, path);
  auto tloaded = load_checkpoint(path);
  REQUIRE(tloaded->kind() == "table");
  REQUIRE(tloaded->layer_sizes() == std::vector<int>{6, 3});
  REQUIRE(tloaded->parameters()[0]->data == table.parameters()[0]->data);
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
  MlpModel mlp({2, 3, 2}, 7);
  std::string path = "ckpt_corrupt_test.bin";
  save_checkpoint(mlp, path);

  // Truncate inside the parameter block.
  {
    std::ifstream in(path, std::ios::binary);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary);
    out.write(all.data(), static_cast<std::streamsize>(all.size() - 9));
  }
  REQUIRE_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("truncated"));

  // Append trailing garbage to a fresh save.
  save_checkpoint(mlp, path);
  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.write("xx", 2);
  }
  REQUIRE_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("trailing"));

  REQUIRE_THROWS_WITH(load_checkpoint("no_such_checkpoint.bin"), Catch::Matchers::ContainsSubstring("cannot open"));
  std::remove(path.c_str());
}
