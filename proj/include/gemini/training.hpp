#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"
#include "gemini/autodiff.hpp"
#include "gemini/geometry.hpp"
#include "gemini/metrics.hpp"
#include "gemini/models.hpp"
#include "gemini/objectives.hpp"
#include "gemini/rng.hpp"
#include "gemini/synthdata.hpp"

#include "json.hpp"

// Gradient ascent on a clustering objective: Adam over the model parameters,
// seeded shuffling, full-dataset geometry sliced per batch, and a run report
// that captures everything an experiment table needs.
namespace gemini {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<DenseArray> m, v;  // first and second moments per parameter
  long step = 0;

  static AdamState like(const std::vector<DenseArray*>& params) {
    AdamState s;
    for (const DenseArray* p : params) {
      s.m.emplace_back(p->rows, p->cols);
      s.v.emplace_back(p->rows, p->cols);
    }
    return s;
  }
};

// One bias-corrected descent step over every parameter array.
inline void adam_step(const std::vector<DenseArray*>& params, const std::vector<const DenseArray*>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_step: parameter, gradient, and state counts differ");
  if (!(cfg.lr > 0.0) || cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
    throw std::invalid_argument("adam_step: need lr > 0 and betas in [0, 1)");
  ++state.step;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    DenseArray& theta = *params[p];
    const DenseArray& g = *grads[p];
    if (g.rows != theta.rows || g.cols != theta.cols)
      throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() + " does not match parameter " +
                                  theta.shape_str());
    DenseArray& m = state.m[p];
    DenseArray& v = state.v[p];
    for (int i = 0; i < theta.size(); ++i) {
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g.data[i];
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g.data[i] * g.data[i];
      theta.data[i] -= cfg.lr * (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + cfg.eps);
    }
  }
}

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 0;  // 0 means full batch
  AdamConfig adam;
  std::uint64_t seed = 0;  // shuffling; model init carries its own seed
  GeminiSpec objective{Distance::KL, Mode::OvA};
  KernelKind kernel = KernelKind::Linear;
  double kernel_sigma = 1.0;
  CostKind cost = CostKind::Euclidean;
  double cost_quantile = 0.05;
  double numeric_eps = 1e-12;  // tape clamp floor for log/sqrt/divide
  int log_every = 0;           // epochs between progress lines; 0 is silent
};

struct RunReport {
  std::vector<double> objective_history;  // one entry per epoch, batch mean
  double final_objective = 0.0;           // full-dataset value after training
  std::optional<double> final_ari;        // only when the dataset has labels
  std::vector<double> final_proportions;
  int nonempty = 0;
  double mean_row_entropy = 0.0;  // Shannon, then Renyi order 2, over posterior rows
  double mean_row_renyi2 = 0.0;
  std::vector<int> assignments;
  std::vector<double> max_posterior;
  double wall_seconds = 0.0;       // kept out of the canonical JSON
  nlohmann::json config_echo;      // resolved experiment config, set by the caller
};

// Training failure with the context needed to debug a diverging run.
class NonFiniteObjective : public std::runtime_error {
 public:
  NonFiniteObjective(int epoch, int batch, const std::vector<double>& history)
      : std::runtime_error(describe(epoch, batch, history)), epoch_(epoch), batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  static std::string describe(int epoch, int batch, const std::vector<double>& history) {
    std::ostringstream out;
    out << "training: objective became non-finite at epoch " << epoch << ", batch " << batch;
    if (!history.empty()) {
      out << "; last epochs:";
      size_t from = history.size() > 5 ? history.size() - 5 : 0;
      for (size_t i = from; i < history.size(); ++i) out << ' ' << history[i];
    }
    return out.str();
  }
  int epoch_, batch_;
};

// Whole-dataset kernel and cost, computed once and sliced per batch. Callers
// with matrices from elsewhere (files, other features) can fill one in
// themselves and hand it to the train() overload below.
struct GeometrySet {
  std::optional<KernelMatrix> kernel;
  std::optional<CostMatrix> cost;
};

inline GeometrySet build_geometry_set(const Dataset& data, const TrainConfig& cfg) {
  GeometrySet g;
  if (needs_kernel(cfg.objective)) g.kernel = build_kernel(data.features, cfg.kernel, cfg.kernel_sigma);
  if (needs_cost(cfg.objective)) g.cost = build_cost(data.features, cfg.cost, cfg.cost_quantile);
  return g;
}

namespace train_detail {

using Geometry = GeometrySet;

// Objective value of one batch, with gradients left on batch.leaves when
// backprop is requested. The caller owns the tape: the returned batch's
// nodes live exactly as long as it does.
inline double eval_batch(ad::Tape& tape, const ClusterModel& model, const Dataset& data, const Geometry& geo,
                         const TrainConfig& cfg, std::span<const int> idx, bool backprop,
                         PosteriorBatch& out_batch) {
  DenseArray feats = rows_subset(data.features, idx);
  out_batch = model.predict(tape, feats, idx);
  std::optional<KernelMatrix> kb;
  std::optional<CostMatrix> cb;
  if (geo.kernel) kb = KernelMatrix{submatrix(geo.kernel->m, idx), geo.kernel->kind};
  if (geo.cost) cb = CostMatrix{submatrix(geo.cost->m, idx), geo.cost->kind};
  ad::Var value = eval_gemini(out_batch, cfg.objective, kb ? &*kb : nullptr, cb ? &*cb : nullptr);
  if (backprop) {
    ad::Var loss = ad::neg(value);  // ascend the objective with a descent rule
    tape.backward(loss.node);
  }
  return value.scalar();
}

}  // namespace train_detail

inline RunReport train(ClusterModel& model, const Dataset& data, const TrainConfig& cfg, const GeometrySet& geo,
                       std::ostream* progress = nullptr) {
  if (cfg.epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (cfg.batch_size < 0) throw std::invalid_argument("train: batch_size must be >= 0");
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (geo.kernel && geo.kernel->m.rows != data.size())
    throw std::invalid_argument("train: kernel is " + geo.kernel->m.shape_str() + " for a dataset of " +
                                std::to_string(data.size()));
  if (geo.cost && geo.cost->m.rows != data.size())
    throw std::invalid_argument("train: cost is " + geo.cost->m.shape_str() + " for a dataset of " +
                                std::to_string(data.size()));
  auto started = std::chrono::steady_clock::now();

  std::vector<DenseArray*> params = model.parameters();
  AdamState adam = AdamState::like(params);
  const int n = data.size();
  const int batch = cfg.batch_size == 0 ? n : std::min(cfg.batch_size, n);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg.seed);

  RunReport report;
  report.objective_history.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (batch < n) {
      // Fisher-Yates, driven by our own generator so runs replay exactly.
      for (int i = n - 1; i > 0; --i)
        std::swap(order[i], order[rng.below(static_cast<std::uint64_t>(i) + 1)]);
    }
    double epoch_value = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += batch, ++batches) {
      int len = std::min(batch, n - start);
      std::span<const int> idx(order.data() + start, static_cast<size_t>(len));
      ad::Tape tape(cfg.numeric_eps);
      PosteriorBatch staged;
      double value;
      try {
        value = train_detail::eval_batch(tape, model, data, geo, cfg, idx, true, staged);
      } catch (const std::runtime_error& e) {
        // The tape refuses to build non-finite nodes; keep that as the same
        // abort contract as a non-finite final value.
        if (std::string(e.what()).find("non-finite") != std::string::npos)
          throw NonFiniteObjective(epoch, batches, report.objective_history);
        throw;
      }
      if (!std::isfinite(value)) throw NonFiniteObjective(epoch, batches, report.objective_history);
      epoch_value += value;
      std::vector<const DenseArray*> grads;
      grads.reserve(staged.leaves.size());
      for (const ad::Var& leaf : staged.leaves) grads.push_back(&leaf.node->grad);
      adam_step(params, grads, adam, cfg.adam);
    }
    report.objective_history.push_back(epoch_value / batches);
    if (progress && cfg.log_every > 0 && (epoch + 1) % cfg.log_every == 0)
      *progress << "epoch " << epoch + 1 << "/" << cfg.epochs << " objective "
                << report.objective_history.back() << "\n";
  }

  // Final full-dataset evaluation, independent of how training was batched.
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  ad::Tape tape(cfg.numeric_eps);
  PosteriorBatch final_batch;
  try {
    report.final_objective = train_detail::eval_batch(tape, model, data, geo, cfg, all, false, final_batch);
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()).find("non-finite") != std::string::npos)
      throw NonFiniteObjective(cfg.epochs, 0, report.objective_history);
    throw;
  }
  if (!std::isfinite(report.final_objective))
    throw NonFiniteObjective(cfg.epochs, 0, report.objective_history);
  const DenseArray& posterior = final_batch.matrix.value();
  report.assignments = hard_assign(final_batch);
  report.max_posterior.resize(n);
  for (int i = 0; i < n; ++i) report.max_posterior[i] = posterior.at(i, report.assignments[i]);
  report.final_proportions = cluster_proportions(final_batch);
  report.nonempty = nonempty_clusters(posterior);
  report.mean_row_entropy = mean_renyi_entropy(posterior, 1.0);
  report.mean_row_renyi2 = mean_renyi_entropy(posterior, 2.0);
  if (data.has_labels()) report.final_ari = ari(data.labels, report.assignments);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

inline RunReport train(ClusterModel& model, const Dataset& data, const TrainConfig& cfg,
                       std::ostream* progress = nullptr) {
  return train(model, data, cfg, build_geometry_set(data, cfg), progress);
}

// Canonical report serialisation: everything but wall time, which varies run
// to run and would break byte-identical re-runs. nlohmann keeps keys sorted,
// so equal reports dump to equal bytes.
inline nlohmann::json report_to_json(const RunReport& report) {
  nlohmann::json j;
  j["objective_history"] = report.objective_history;
  j["final_objective"] = report.final_objective;
  j["final_ari"] = report.final_ari ? nlohmann::json(*report.final_ari) : nlohmann::json(nullptr);
  j["final_proportions"] = report.final_proportions;
  j["nonempty_clusters"] = report.nonempty;
  j["mean_row_entropy"] = report.mean_row_entropy;
  j["mean_row_renyi2_entropy"] = report.mean_row_renyi2;
  j["assignments"] = report.assignments;
  j["max_posterior"] = report.max_posterior;
  j["config"] = report.config_echo.is_null() ? nlohmann::json::object() : report.config_echo;
  return j;
}

// "index,cluster,max_posterior" rows for external tools. A non-empty comment
// goes in as a leading '#' line, used to stamp files with their config.
inline void write_assignments_csv(const RunReport& report, const std::string& path, const std::string& comment = "") {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_assignments_csv: cannot open " + path);
  out.precision(17);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "index,cluster,max_posterior\n";
  for (size_t i = 0; i < report.assignments.size(); ++i)
    out << i << "," << report.assignments[i] << "," << report.max_posterior[i] << "\n";
  if (!out) throw std::runtime_error("write_assignments_csv: write failed for " + path);
}

}  // namespace gemini
