#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"
#include "gemini/autodiff.hpp"
#include "gemini/rng.hpp"

#include "json.hpp"

// Discriminative clustering models: a conditional distribution over K
// clusters, evaluated on a batch and differentiable back to the parameters.
// Parameters persist outside the tape; every predict() stages them as fresh
// leaves and returns those leaves with the batch, so the caller reads
// gradients off the batch after the backward pass. Prediction itself never
// mutates the model.
namespace gemini {

struct PosteriorBatch {
  ad::Var matrix;                   // BxK row-stochastic soft assignments
  std::vector<int> sample_indices;  // dataset rows behind each batch row
  std::vector<ad::Var> leaves;      // staged parameter leaves, aligned with parameters()
};

class ClusterModel {
 public:
  virtual ~ClusterModel() = default;
  virtual int num_clusters() const = 0;
  virtual std::string kind() const = 0;
  // Full size description, [N, K] for the table model, [D, h.., K] for the MLP.
  virtual std::vector<int> layer_sizes() const = 0;
  virtual std::uint64_t init_seed() const = 0;
  virtual PosteriorBatch predict(ad::Tape& tape, const DenseArray& features, std::span<const int> indices) const = 0;
  virtual std::vector<DenseArray*> parameters() = 0;
};

// Mean of each posterior column: the model's cluster mass on this batch.
inline std::vector<double> cluster_proportions(const PosteriorBatch& batch) {
  const DenseArray& p = batch.matrix.value();
  if (p.rows == 0) throw std::invalid_argument("cluster_proportions: empty batch");
  std::vector<double> pi(p.cols, 0.0);
  for (int i = 0; i < p.rows; ++i)
    for (int k = 0; k < p.cols; ++k) pi[k] += p.at(i, k);
  for (double& v : pi) v /= p.rows;
  return pi;
}

// Per-row argmax; ties go to the lowest cluster index.
inline std::vector<int> hard_assign(const PosteriorBatch& batch) {
  const DenseArray& p = batch.matrix.value();
  std::vector<int> out(p.rows, 0);
  for (int i = 0; i < p.rows; ++i) {
    int best = 0;
    for (int k = 1; k < p.cols; ++k)
      if (p.at(i, k) > p.at(i, best)) best = k;
    out[i] = best;
  }
  return out;
}

// One free logit row per training sample; prediction gathers rows by index.
// Init is a small seeded uniform jitter: exact zeros would sit on the
// symmetric saddle where every cluster is interchangeable and no objective
// can break the tie.
class CategoricalTableModel final : public ClusterModel {
 public:
  CategoricalTableModel(int n_samples, int k, std::uint64_t seed) : seed_(seed), logits_(n_samples, k) {
    if (n_samples < 1 || k < 2) throw std::invalid_argument("CategoricalTableModel: need n >= 1 and k >= 2");
    Rng rng(seed);
    for (double& v : logits_.data) v = rng.uniform(-0.1, 0.1);
  }

  int num_clusters() const override { return logits_.cols; }
  std::string kind() const override { return "table"; }
  std::vector<int> layer_sizes() const override { return {logits_.rows, logits_.cols}; }
  std::uint64_t init_seed() const override { return seed_; }

  PosteriorBatch predict(ad::Tape& tape, const DenseArray&, std::span<const int> indices) const override {
    for (int i : indices)
      if (i < 0 || i >= logits_.rows) throw std::out_of_range("CategoricalTableModel: sample index out of range");
    ad::Var table = ad::leaf(tape, logits_);
    ad::Var rows = ad::row_gather(table, indices);
    PosteriorBatch batch;
    batch.matrix = ad::softmax_rows(rows);
    batch.sample_indices.assign(indices.begin(), indices.end());
    batch.leaves = {table};
    return batch;
  }

  std::vector<DenseArray*> parameters() override { return {&logits_}; }

 private:
  std::uint64_t seed_;
  DenseArray logits_;
};

// Fully connected rectifier network with a softmax head. Weights are
// Glorot-uniform so the initial posteriors stay near uniform without sitting
// exactly on the tie point; biases start at zero.
class MlpModel final : public ClusterModel {
 public:
  MlpModel(std::vector<int> sizes, std::uint64_t seed) : seed_(seed), sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("MlpModel: need at least input and output sizes");
    for (int s : sizes_)
      if (s < 1) throw std::invalid_argument("MlpModel: layer sizes must be positive");
    if (sizes_.back() < 2) throw std::invalid_argument("MlpModel: need k >= 2 output clusters");
    Rng rng(seed);
    for (size_t l = 0; l + 1 < sizes_.size(); ++l) {
      int fan_in = sizes_[l], fan_out = sizes_[l + 1];
      DenseArray w(fan_in, fan_out);
      double limit = std::sqrt(6.0 / (fan_in + fan_out));
      for (double& v : w.data) v = rng.uniform(-limit, limit);
      weights_.push_back(std::move(w));
      biases_.emplace_back(1, fan_out);
    }
  }

  int num_clusters() const override { return sizes_.back(); }
  std::string kind() const override { return "mlp"; }
  std::vector<int> layer_sizes() const override { return sizes_; }
  std::uint64_t init_seed() const override { return seed_; }

  PosteriorBatch predict(ad::Tape& tape, const DenseArray& features, std::span<const int> indices) const override {
    if (features.cols != sizes_.front())
      throw std::invalid_argument("MlpModel: feature width " + std::to_string(features.cols) + " does not match input size " +
                                  std::to_string(sizes_.front()));
    PosteriorBatch batch;
    ad::Var h = ad::leaf(tape, features);
    for (size_t l = 0; l < weights_.size(); ++l) {
      ad::Var w = ad::leaf(tape, weights_[l]);
      ad::Var b = ad::leaf(tape, biases_[l]);
      batch.leaves.push_back(w);
      batch.leaves.push_back(b);
      h = ad::add(ad::matmul(h, w), b);
      if (l + 1 < weights_.size()) h = ad::max_clamp(h, 0.0);
    }
    batch.matrix = ad::softmax_rows(h);
    batch.sample_indices.assign(indices.begin(), indices.end());
    return batch;
  }

  std::vector<DenseArray*> parameters() override {
    std::vector<DenseArray*> out;
    for (size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::vector<int> sizes_;
  std::vector<DenseArray> weights_;
  std::vector<DenseArray> biases_;
};

// Checkpoint layout: little-endian u32 header length, JSON header
// {layer_sizes, model_kind, seed}, then every parameter array's doubles in
// parameters() order.
inline void save_checkpoint(ClusterModel& model, const std::string& path) {
  nlohmann::json header{{"layer_sizes", model.layer_sizes()}, {"model_kind", model.kind()}, {"seed", model.init_seed()}};
  std::string head = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  std::uint32_t len = static_cast<std::uint32_t>(head.size());
  char lenb[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff), static_cast<char>((len >> 16) & 0xff),
                  static_cast<char>((len >> 24) & 0xff)};
  out.write(lenb, 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  for (DenseArray* p : model.parameters())
    out.write(reinterpret_cast<const char*>(p->data.data()), static_cast<std::streamsize>(p->data.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

inline std::unique_ptr<ClusterModel> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  unsigned char lenb[4];
  in.read(reinterpret_cast<char*>(lenb), 4);
  if (!in) throw std::runtime_error("load_checkpoint: truncated header length");
  std::uint32_t len = lenb[0] | (lenb[1] << 8) | (lenb[2] << 16) | (static_cast<std::uint32_t>(lenb[3]) << 24);
  std::string head(len, '\0');
  in.read(head.data(), len);
  if (!in) throw std::runtime_error("load_checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(head);
  std::vector<int> sizes = header.at("layer_sizes").get<std::vector<int>>();
  std::string kind = header.at("model_kind").get<std::string>();
  std::uint64_t seed = header.at("seed").get<std::uint64_t>();
  std::unique_ptr<ClusterModel> model;
  if (kind == "table") {
    if (sizes.size() != 2) throw std::runtime_error("load_checkpoint: table model expects [n, k] sizes");
    model = std::make_unique<CategoricalTableModel>(sizes[0], sizes[1], seed);
  } else if (kind == "mlp") {
    model = std::make_unique<MlpModel>(sizes, seed);
  } else {
    throw std::runtime_error("load_checkpoint: unknown model kind '" + kind + "'");
  }
  for (DenseArray* p : model->parameters()) {
    in.read(reinterpret_cast<char*>(p->data.data()), static_cast<std::streamsize>(p->data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated parameters");
  }
  in.peek();
  if (!in.eof()) throw std::runtime_error("load_checkpoint: trailing bytes after parameters");
  return model;
}

}  // namespace gemini
