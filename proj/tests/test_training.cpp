#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "gemini/metrics.hpp"
#include "gemini/training.hpp"

using namespace gemini;

namespace {

Dataset three_blobs(int per_component, std::uint64_t seed) {
  DenseArray means = DenseArray::from_rows({{0.0, 0.0}, {8.0, 0.0}, {4.0, 7.0}});
  return gen_gaussian_mixture(3, 3 * per_component, means, 0.5, seed);
}

}  // namespace

TEST_CASE("adam first step moves each coordinate by almost exactly lr") {
  DenseArray theta(1, 3);
  theta.data = {1.0, -2.0, 0.5};
  DenseArray g(1, 3);
  g.data = {0.4, -3.0, 1e-3};
  AdamConfig cfg;
  cfg.lr = 0.05;
  AdamState state = AdamState::like({&theta});
  adam_step({&theta}, {&g}, state, cfg);
  REQUIRE(theta.data[0] == Catch::Approx(1.0 - 0.05).margin(1e-8));
  REQUIRE(theta.data[1] == Catch::Approx(-2.0 + 0.05).margin(1e-8));
  REQUIRE(theta.data[2] == Catch::Approx(0.5 - 0.05).margin(1e-6));
}

TEST_CASE("adam with zero gradients never moves") {
  DenseArray theta(2, 2);
  theta.data = {1.0, 2.0, 3.0, 4.0};
  DenseArray g(2, 2);
  AdamState state = AdamState::like({&theta});
  for (int t = 0; t < 10; ++t) adam_step({&theta}, {&g}, state, {});
  REQUIRE(theta.data == std::vector<double>{1.0, 2.0, 3.0, 4.0});
}

TEST_CASE("adam matches a scalar hand trace for three steps") {
  DenseArray theta(1, 1);
  theta.at(0, 0) = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.1;
  AdamState state = AdamState::like({&theta});

  double p = 1.0, m = 0.0, v = 0.0;
  std::vector<double> gs{0.5, -0.2, 0.1};
  for (int t = 1; t <= 3; ++t) {
    double g = gs[t - 1];
    DenseArray ga(1, 1);
    ga.at(0, 0) = g;
    adam_step({&theta}, {&ga}, state, cfg);

    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    double mhat = m / (1.0 - std::pow(0.9, t));
    double vhat = v / (1.0 - std::pow(0.999, t));
    p -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    REQUIRE(theta.at(0, 0) == Catch::Approx(p).margin(1e-15));
  }
}

TEST_CASE("adam rejects mismatched shapes and bad hyperparameters") {
  DenseArray theta(2, 2), good(2, 2), bad(1, 2);
  AdamState state = AdamState::like({&theta});
  REQUIRE_THROWS_AS(adam_step({&theta}, {&bad}, state, {}), std::invalid_argument);
  REQUIRE_THROWS_AS(adam_step({&theta}, {}, state, {}), std::invalid_argument);
  AdamConfig crazy;
  crazy.beta1 = 1.0;
  REQUIRE_THROWS_AS(adam_step({&theta}, {&good}, state, crazy), std::invalid_argument);
}

TEST_CASE("zero-epoch training reports the untouched initial state") {
  Dataset data = three_blobs(10, 1);
  CategoricalTableModel model(data.size(), 3, 5);
  std::vector<double> before = model.parameters()[0]->data;
  TrainConfig cfg;
  cfg.epochs = 0;
  RunReport report = train(model, data, cfg);
  REQUIRE(report.objective_history.empty());
  REQUIRE(model.parameters()[0]->data == before);
  REQUIRE(report.assignments.size() == static_cast<size_t>(data.size()));
  REQUIRE(report.final_proportions.size() == 3);
  REQUIRE(report.final_ari.has_value());
  REQUIRE(std::isfinite(report.final_objective));
}

TEST_CASE("training is deterministic given config and seeds") {
  Dataset data = three_blobs(8, 2);
  TrainConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 10;  // exercise the shuffling path
  cfg.seed = 9;
  cfg.objective = {Distance::SquaredHellinger, Mode::OvO};

  CategoricalTableModel m1(data.size(), 3, 7), m2(data.size(), 3, 7);
  RunReport r1 = train(m1, data, cfg);
  RunReport r2 = train(m2, data, cfg);
  REQUIRE(r1.objective_history == r2.objective_history);
  REQUIRE(r1.assignments == r2.assignments);
  REQUIRE(r1.final_objective == r2.final_objective);
  REQUIRE(r1.final_proportions == r2.final_proportions);
}

TEST_CASE("training proceeds epoch by epoch with finite history") {
  Dataset data = three_blobs(8, 3);
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.objective = {Distance::MMD, Mode::OvA};
  MlpModel model(std::vector<int>{2, 8, 3}, 11);
  RunReport report = train(model, data, cfg);
  REQUIRE(report.objective_history.size() == 40);
  for (double v : report.objective_history) REQUIRE(std::isfinite(v));
  REQUIRE(report.nonempty <= 3);
  REQUIRE(report.max_posterior.size() == static_cast<size_t>(data.size()));
  for (double v : report.max_posterior) {
    REQUIRE(v >= 1.0 / 3.0 - 1e-12);
    REQUIRE(v <= 1.0);
  }
}

TEST_CASE("full-batch ascent is non-decreasing over ten-epoch windows") {
  Dataset data = three_blobs(10, 4);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.objective = {Distance::KL, Mode::OvA};
  CategoricalTableModel model(data.size(), 3, 13);
  RunReport report = train(model, data, cfg);
  int ok = 0, total = 0;
  for (size_t t = 0; t + 10 < report.objective_history.size(); ++t, ++total)
    if (report.objective_history[t + 10] >= report.objective_history[t] - 1e-12) ++ok;
  REQUIRE(ok >= static_cast<int>(0.9 * total));
}

TEST_CASE("the mmd objective steers a table model to the true blobs") {
  // Scaled-down version of the categorical experiment: the kernel carries
  // the geometry, so even a per-point table finds the three blobs. A linear
  // kernel only compares cluster means and admits too many optima; the
  // Gaussian kernel at blob scale prefers the true partition.
  Dataset data = three_blobs(10, 5);
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.adam.lr = 1e-2;
  cfg.objective = {Distance::MMD, Mode::OvA};
  cfg.kernel = KernelKind::Gaussian;
  cfg.kernel_sigma = 3.0;
  CategoricalTableModel model(data.size(), 3, 17);
  RunReport report = train(model, data, cfg);
  REQUIRE(report.final_ari.has_value());
  REQUIRE(*report.final_ari >= 0.9);
}

TEST_CASE("a non-finite objective aborts with epoch and batch context") {
  // Finite but astronomically large features overflow the linear kernel's
  // inner products, which is exactly the failure the guard must surface.
  Dataset data;
  data.features = DenseArray::from_rows({{1e200, 1e200}, {-1e200, 1e200}, {1e200, -1e200}, {-1e154, 0.0}});
  data.name = "overflow";
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.objective = {Distance::MMD, Mode::OvA};
  CategoricalTableModel model(4, 2, 19);
  try {
    train(model, data, cfg);
    FAIL("expected NonFiniteObjective");
  } catch (const NonFiniteObjective& e) {
    REQUIRE(e.epoch() == 0);
    REQUIRE(e.batch() == 0);
    REQUIRE(std::string(e.what()).find("epoch 0") != std::string::npos);
  }
}

TEST_CASE("report serialisation is stable and complete") {
  Dataset data = three_blobs(6, 6);
  TrainConfig cfg;
  cfg.epochs = 5;
  CategoricalTableModel model(data.size(), 3, 23);
  RunReport report = train(model, data, cfg);
  report.config_echo = {{"experiment", "unit"}, {"seed", 23}};

  nlohmann::json j = report_to_json(report);
  REQUIRE(j["objective_history"].size() == 5);
  REQUIRE(j["final_ari"].is_number());
  REQUIRE(j["config"]["experiment"] == "unit");
  REQUIRE(j.contains("nonempty_clusters"));
  REQUIRE_FALSE(j.contains("wall_seconds"));

  // Identical runs must dump identical bytes.
  CategoricalTableModel again(data.size(), 3, 23);
  RunReport r2 = train(again, data, cfg);
  r2.config_echo = report.config_echo;
  REQUIRE(report_to_json(r2).dump(2) == j.dump(2));

  std::string path = "/tmp/gemini_train_assignments.csv";
  write_assignments_csv(report, path);
  std::ifstream in(path);
  std::string line;
  REQUIRE(std::getline(in, line));
  REQUIRE(line == "index,cluster,max_posterior");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  REQUIRE(rows == data.size());
  std::remove(path.c_str());
}

TEST_CASE("batch slicing sees the same geometry as the full matrix") {
  Dataset data = three_blobs(5, 7);
  KernelMatrix full = build_kernel(data.features, KernelKind::Gaussian, 1.0);
  std::vector<int> idx{3, 11, 7, 0};
  DenseArray sliced = submatrix(full.m, idx);
  for (size_t a = 0; a < idx.size(); ++a)
    for (size_t b = 0; b < idx.size(); ++b)
      REQUIRE(sliced.at(static_cast<int>(a), static_cast<int>(b)) == full.m.at(idx[a], idx[b]));

  // Training with mini-batches on a cost-based objective exercises the
  // slicing path end to end and must stay finite.
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 6;
  cfg.objective = {Distance::Wasserstein, Mode::OvO};
  CategoricalTableModel model(data.size(), 2, 29);
  RunReport report = train(model, data, cfg);
  for (double v : report.objective_history) REQUIRE(std::isfinite(v));
}
