#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"
#include "gemini/geometry.hpp"
#include "gemini/metrics.hpp"
#include "gemini/models.hpp"
#include "gemini/objectives.hpp"
#include "gemini/synthdata.hpp"
#include "gemini/training.hpp"

#include "json.hpp"

// Experiment configuration: schema-versioned JSON in, validated structs out.
// Unknown keys are rejected at every level, so a typo like "objectve" or a
// misspelled distance name fails loudly instead of silently using a default.
namespace gemini {

// Invalid configuration, carrying the dotted path of the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& problem)
      : std::runtime_error("config: " + (field.empty() ? "(top level)" : field) + ": " + problem),
        field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

struct DatasetConfig {
  enum class Kind { GaussianMixture, Gstm, Moons, File };
  Kind kind = Kind::GaussianMixture;
  // gaussian_mixture
  DenseArray means;
  std::vector<int> counts;  // empty means balanced over "n"
  int n = 0;                // gaussian_mixture (balanced) and moons
  double sigma = 1.0;
  // gstm
  GstmParams gstm;
  // moons
  double noise = 0.05;
  // file
  std::string path;
  FileFormat format = FileFormat::Csv;
};

struct ModelConfig {
  enum class Kind { Table, Mlp };
  Kind kind = Kind::Mlp;
  int clusters = 2;
  std::vector<int> hidden{64, 64};  // mlp only
};

struct GeometryConfig {
  KernelKind kernel = KernelKind::Linear;
  double kernel_sigma = 1.0;
  std::string kernel_path;  // precomputed kernel only
  CostKind cost = CostKind::Euclidean;
  double cost_quantile = 0.05;
  std::string cost_path;  // precomputed cost only
};

struct FigureConfig {
  enum class Kind { BoundaryMi, EntropyGrid };
  Kind kind = Kind::EntropyGrid;
  // boundary_mi: two-Gaussian boundary-placement study over mean gaps
  std::vector<double> gaps{1.0, 2.0, 4.0, 8.0};
  double sigma = 1.0;
  double epsilon = 1e-3;
  int mc_samples = 1000;
  int mc_repeats = 50;
  // entropy_grid: prediction maps of the trained model over a 2-D grid
  GridSpec grid;
  double renyi_order = 2.0;
};

struct ExperimentConfig {
  int schema_version = 1;
  std::string experiment;
  std::optional<DatasetConfig> dataset;
  std::optional<ModelConfig> model;
  std::vector<GeminiSpec> objectives;  // one entry for run, any number for sweep
  GeometryConfig geometry;
  TrainConfig train;  // objective, kernel, cost, and seed get filled per run
  std::vector<std::uint64_t> seeds{0};
  bool kmeans_baseline = false;
  std::optional<FigureConfig> figures;
};

namespace config_detail {

using nlohmann::json;

inline std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void reject_unknown_keys(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path, "expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) known = true;
    if (!known) throw ConfigError(join(path, it.key()), "unknown key");
  }
}

inline const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path, "must be finite");
  return v;
}

inline int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<int>();
}

inline std::uint64_t as_seed(const json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
    throw ConfigError(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

inline bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected a boolean");
  return j.get<bool>();
}

template <typename T, typename Fn>
T get_or(const json& j, const char* key, const std::string& path, T fallback, Fn convert) {
  const json* v = find(j, key);
  return v ? convert(*v, join(path, key)) : fallback;
}

}  // namespace config_detail

// Enum names as they appear in config files and output tables.

inline Distance parse_distance(const std::string& s, const std::string& path) {
  if (s == "kl") return Distance::KL;
  if (s == "tv") return Distance::TV;
  if (s == "squared_hellinger") return Distance::SquaredHellinger;
  if (s == "mmd") return Distance::MMD;
  if (s == "wasserstein") return Distance::Wasserstein;
  throw ConfigError(path, "unknown distance '" + s + "' (expected kl|tv|squared_hellinger|mmd|wasserstein)");
}

inline std::string distance_name(Distance d) {
  switch (d) {
    case Distance::KL: return "kl";
    case Distance::TV: return "tv";
    case Distance::SquaredHellinger: return "squared_hellinger";
    case Distance::MMD: return "mmd";
    case Distance::Wasserstein: return "wasserstein";
  }
  throw std::logic_error("distance_name: unhandled enum value");
}

inline Mode parse_mode(const std::string& s, const std::string& path) {
  if (s == "ova") return Mode::OvA;
  if (s == "ovo") return Mode::OvO;
  throw ConfigError(path, "unknown mode '" + s + "' (expected ova|ovo)");
}

inline std::string mode_name(Mode m) { return m == Mode::OvA ? "ova" : "ovo"; }

inline std::string objective_slug(const GeminiSpec& spec) {
  return distance_name(spec.distance) + "_" + mode_name(spec.mode);
}

inline KernelKind parse_kernel_kind(const std::string& s, const std::string& path) {
  if (s == "linear") return KernelKind::Linear;
  if (s == "gaussian") return KernelKind::Gaussian;
  if (s == "precomputed") return KernelKind::Precomputed;
  throw ConfigError(path, "unknown kernel '" + s + "' (expected linear|gaussian|precomputed)");
}

inline std::string kernel_kind_name(KernelKind k) {
  switch (k) {
    case KernelKind::Linear: return "linear";
    case KernelKind::Gaussian: return "gaussian";
    case KernelKind::Precomputed: return "precomputed";
  }
  throw std::logic_error("kernel_kind_name: unhandled enum value");
}

inline CostKind parse_cost_kind(const std::string& s, const std::string& path) {
  if (s == "euclidean") return CostKind::Euclidean;
  if (s == "squared_euclidean") return CostKind::SquaredEuclidean;
  if (s == "shortest_path") return CostKind::ShortestPath;
  if (s == "precomputed") return CostKind::Precomputed;
  throw ConfigError(path, "unknown cost '" + s + "' (expected euclidean|squared_euclidean|shortest_path|precomputed)");
}

inline std::string cost_kind_name(CostKind c) {
  switch (c) {
    case CostKind::Euclidean: return "euclidean";
    case CostKind::SquaredEuclidean: return "squared_euclidean";
    case CostKind::ShortestPath: return "shortest_path";
    case CostKind::Precomputed: return "precomputed";
  }
  throw std::logic_error("cost_kind_name: unhandled enum value");
}

namespace config_detail {

inline GeminiSpec parse_objective(const json& j, const std::string& path) {
  reject_unknown_keys(j, path, {"distance", "mode"});
  const json* d = find(j, "distance");
  if (!d) throw ConfigError(join(path, "distance"), "required");
  const json* m = find(j, "mode");
  if (!m) throw ConfigError(join(path, "mode"), "required");
  return {parse_distance(as_string(*d, join(path, "distance")), join(path, "distance")),
          parse_mode(as_string(*m, join(path, "mode")), join(path, "mode"))};
}

inline DatasetConfig parse_dataset(const json& j, const std::string& path) {
  DatasetConfig out;
  const json* kind = find(j, "kind");
  if (!kind) throw ConfigError(join(path, "kind"), "required");
  std::string k = as_string(*kind, join(path, "kind"));
  if (k == "gaussian_mixture") {
    out.kind = DatasetConfig::Kind::GaussianMixture;
    reject_unknown_keys(j, path, {"kind", "means", "sigma", "counts", "n"});
    const json* means = find(j, "means");
    if (!means) throw ConfigError(join(path, "means"), "required");
    if (!means->is_array() || means->empty()) throw ConfigError(join(path, "means"), "expected a non-empty array");
    int dim = -1;
    std::vector<std::vector<double>> rows;
    for (size_t i = 0; i < means->size(); ++i) {
      const json& row = (*means)[i];
      std::string rp = join(path, "means[" + std::to_string(i) + "]");
      if (!row.is_array() || row.empty()) throw ConfigError(rp, "expected a non-empty array of numbers");
      if (dim == -1) dim = static_cast<int>(row.size());
      if (static_cast<int>(row.size()) != dim) throw ConfigError(rp, "all means must have the same dimension");
      std::vector<double> vals;
      for (size_t c = 0; c < row.size(); ++c) vals.push_back(as_number(row[c], rp + "[" + std::to_string(c) + "]"));
      rows.push_back(std::move(vals));
    }
    out.means = DenseArray::from_rows(rows);
    out.sigma = get_or(j, "sigma", path, 1.0, as_number);
    if (out.sigma < 0.0) throw ConfigError(join(path, "sigma"), "must be >= 0");
    const json* counts = find(j, "counts");
    const json* n = find(j, "n");
    if ((counts != nullptr) == (n != nullptr))
      throw ConfigError(path, "need exactly one of 'counts' and 'n'");
    if (counts) {
      if (!counts->is_array() || counts->size() != rows.size())
        throw ConfigError(join(path, "counts"), "expected one count per mean");
      for (size_t i = 0; i < counts->size(); ++i) {
        int c = as_int((*counts)[i], join(path, "counts[" + std::to_string(i) + "]"));
        if (c < 0) throw ConfigError(join(path, "counts[" + std::to_string(i) + "]"), "must be >= 0");
        out.counts.push_back(c);
      }
    } else {
      out.n = as_int(*n, join(path, "n"));
      if (out.n < 1) throw ConfigError(join(path, "n"), "must be >= 1");
    }
  } else if (k == "gstm") {
    out.kind = DatasetConfig::Kind::Gstm;
    reject_unknown_keys(j, path, {"kind", "alpha", "sigma", "rho", "n_per_cluster"});
    out.gstm.alpha = get_or(j, "alpha", path, out.gstm.alpha, as_number);
    out.gstm.sigma = get_or(j, "sigma", path, out.gstm.sigma, as_number);
    if (out.gstm.sigma <= 0.0) throw ConfigError(join(path, "sigma"), "must be > 0");
    out.gstm.rho = get_or(j, "rho", path, out.gstm.rho, as_int);
    if (out.gstm.rho < 1) throw ConfigError(join(path, "rho"), "must be >= 1");
    out.gstm.n_per_cluster = get_or(j, "n_per_cluster", path, out.gstm.n_per_cluster, as_int);
    if (out.gstm.n_per_cluster < 1) throw ConfigError(join(path, "n_per_cluster"), "must be >= 1");
  } else if (k == "moons") {
    out.kind = DatasetConfig::Kind::Moons;
    reject_unknown_keys(j, path, {"kind", "n", "noise"});
    out.n = get_or(j, "n", path, 500, as_int);
    if (out.n < 2 || out.n % 2 != 0) throw ConfigError(join(path, "n"), "must be even and >= 2");
    out.noise = get_or(j, "noise", path, 0.05, as_number);
    if (out.noise < 0.0) throw ConfigError(join(path, "noise"), "must be >= 0");
  } else if (k == "file") {
    out.kind = DatasetConfig::Kind::File;
    reject_unknown_keys(j, path, {"kind", "path", "format"});
    const json* p = find(j, "path");
    if (!p) throw ConfigError(join(path, "path"), "required");
    out.path = as_string(*p, join(path, "path"));
    if (out.path.empty()) throw ConfigError(join(path, "path"), "must be non-empty");
    std::string fmt = get_or(j, "format", path, std::string("csv"), as_string);
    if (fmt == "csv") out.format = FileFormat::Csv;
    else if (fmt == "binary") out.format = FileFormat::Binary;
    else throw ConfigError(join(path, "format"), "unknown format '" + fmt + "' (expected csv|binary)");
  } else {
    throw ConfigError(join(path, "kind"), "unknown dataset kind '" + k + "' (expected gaussian_mixture|gstm|moons|file)");
  }
  return out;
}

inline ModelConfig parse_model(const json& j, const std::string& path) {
  ModelConfig out;
  const json* kind = find(j, "kind");
  if (!kind) throw ConfigError(join(path, "kind"), "required");
  std::string k = as_string(*kind, join(path, "kind"));
  if (k == "table") {
    out.kind = ModelConfig::Kind::Table;
    reject_unknown_keys(j, path, {"kind", "clusters"});
    out.hidden.clear();
  } else if (k == "mlp") {
    out.kind = ModelConfig::Kind::Mlp;
    reject_unknown_keys(j, path, {"kind", "clusters", "hidden"});
    const json* hidden = find(j, "hidden");
    if (hidden) {
      if (!hidden->is_array()) throw ConfigError(join(path, "hidden"), "expected an array of layer widths");
      out.hidden.clear();
      for (size_t i = 0; i < hidden->size(); ++i) {
        int w = as_int((*hidden)[i], join(path, "hidden[" + std::to_string(i) + "]"));
        if (w < 1) throw ConfigError(join(path, "hidden[" + std::to_string(i) + "]"), "must be >= 1");
        out.hidden.push_back(w);
      }
    }
  } else {
    throw ConfigError(join(path, "kind"), "unknown model kind '" + k + "' (expected table|mlp)");
  }
  const json* clusters = find(j, "clusters");
  if (!clusters) throw ConfigError(join(path, "clusters"), "required");
  out.clusters = as_int(*clusters, join(path, "clusters"));
  if (out.clusters < 2) throw ConfigError(join(path, "clusters"), "must be >= 2");
  return out;
}

inline GeometryConfig parse_geometry(const json& j, const std::string& path) {
  GeometryConfig out;
  reject_unknown_keys(j, path, {"kernel", "kernel_sigma", "kernel_path", "cost", "cost_quantile", "cost_path"});
  if (const json* k = find(j, "kernel")) out.kernel = parse_kernel_kind(as_string(*k, join(path, "kernel")), join(path, "kernel"));
  out.kernel_sigma = get_or(j, "kernel_sigma", path, 1.0, as_number);
  if (out.kernel_sigma <= 0.0) throw ConfigError(join(path, "kernel_sigma"), "must be > 0");
  out.kernel_path = get_or(j, "kernel_path", path, std::string(), as_string);
  if (const json* c = find(j, "cost")) out.cost = parse_cost_kind(as_string(*c, join(path, "cost")), join(path, "cost"));
  out.cost_quantile = get_or(j, "cost_quantile", path, 0.05, as_number);
  if (!(out.cost_quantile > 0.0) || out.cost_quantile > 1.0) throw ConfigError(join(path, "cost_quantile"), "must be in (0, 1]");
  out.cost_path = get_or(j, "cost_path", path, std::string(), as_string);
  if (!out.kernel_path.empty() && out.kernel != KernelKind::Precomputed)
    throw ConfigError(join(path, "kernel_path"), "only valid when kernel is 'precomputed'");
  if (out.kernel == KernelKind::Precomputed && out.kernel_path.empty())
    throw ConfigError(join(path, "kernel_path"), "required when kernel is 'precomputed'");
  if (!out.cost_path.empty() && out.cost != CostKind::Precomputed)
    throw ConfigError(join(path, "cost_path"), "only valid when cost is 'precomputed'");
  if (out.cost == CostKind::Precomputed && out.cost_path.empty())
    throw ConfigError(join(path, "cost_path"), "required when cost is 'precomputed'");
  return out;
}

inline void parse_train(const json& j, const std::string& path, TrainConfig& out) {
  reject_unknown_keys(j, path,
                      {"epochs", "batch_size", "lr", "beta1", "beta2", "adam_eps", "numeric_eps", "log_every"});
  out.epochs = get_or(j, "epochs", path, out.epochs, as_int);
  if (out.epochs < 0) throw ConfigError(join(path, "epochs"), "must be >= 0");
  out.batch_size = get_or(j, "batch_size", path, out.batch_size, as_int);
  if (out.batch_size < 0) throw ConfigError(join(path, "batch_size"), "must be >= 0 (0 means full batch)");
  out.adam.lr = get_or(j, "lr", path, out.adam.lr, as_number);
  if (!(out.adam.lr > 0.0)) throw ConfigError(join(path, "lr"), "must be > 0");
  out.adam.beta1 = get_or(j, "beta1", path, out.adam.beta1, as_number);
  out.adam.beta2 = get_or(j, "beta2", path, out.adam.beta2, as_number);
  if (out.adam.beta1 < 0.0 || out.adam.beta1 >= 1.0) throw ConfigError(join(path, "beta1"), "must be in [0, 1)");
  if (out.adam.beta2 < 0.0 || out.adam.beta2 >= 1.0) throw ConfigError(join(path, "beta2"), "must be in [0, 1)");
  out.adam.eps = get_or(j, "adam_eps", path, out.adam.eps, as_number);
  if (!(out.adam.eps > 0.0)) throw ConfigError(join(path, "adam_eps"), "must be > 0");
  out.numeric_eps = get_or(j, "numeric_eps", path, out.numeric_eps, as_number);
  if (!(out.numeric_eps > 0.0)) throw ConfigError(join(path, "numeric_eps"), "must be > 0");
  out.log_every = get_or(j, "log_every", path, out.log_every, as_int);
  if (out.log_every < 0) throw ConfigError(join(path, "log_every"), "must be >= 0");
}

inline FigureConfig parse_figures(const json& j, const std::string& path) {
  FigureConfig out;
  const json* kind = find(j, "kind");
  if (!kind) throw ConfigError(join(path, "kind"), "required");
  std::string k = as_string(*kind, join(path, "kind"));
  if (k == "boundary_mi") {
    out.kind = FigureConfig::Kind::BoundaryMi;
    reject_unknown_keys(j, path, {"kind", "gaps", "sigma", "epsilon", "mc_samples", "mc_repeats"});
    if (const json* gaps = find(j, "gaps")) {
      if (!gaps->is_array() || gaps->empty()) throw ConfigError(join(path, "gaps"), "expected a non-empty array");
      out.gaps.clear();
      for (size_t i = 0; i < gaps->size(); ++i) {
        double g = as_number((*gaps)[i], join(path, "gaps[" + std::to_string(i) + "]"));
        if (!(g > 0.0)) throw ConfigError(join(path, "gaps[" + std::to_string(i) + "]"), "must be > 0");
        out.gaps.push_back(g);
      }
    }
    out.sigma = get_or(j, "sigma", path, out.sigma, as_number);
    if (!(out.sigma > 0.0)) throw ConfigError(join(path, "sigma"), "must be > 0");
    out.epsilon = get_or(j, "epsilon", path, out.epsilon, as_number);
    if (out.epsilon < 0.0 || out.epsilon >= 0.5) throw ConfigError(join(path, "epsilon"), "must be in [0, 0.5)");
    out.mc_samples = get_or(j, "mc_samples", path, out.mc_samples, as_int);
    if (out.mc_samples < 2) throw ConfigError(join(path, "mc_samples"), "must be >= 2");
    out.mc_repeats = get_or(j, "mc_repeats", path, out.mc_repeats, as_int);
    if (out.mc_repeats < 2) throw ConfigError(join(path, "mc_repeats"), "must be >= 2");
  } else if (k == "entropy_grid") {
    out.kind = FigureConfig::Kind::EntropyGrid;
    reject_unknown_keys(j, path, {"kind", "x_min", "x_max", "y_min", "y_max", "width", "height", "renyi_order"});
    for (const char* req : {"x_min", "x_max", "y_min", "y_max"})
      if (!find(j, req)) throw ConfigError(join(path, req), "required");
    out.grid.x_min = as_number(*find(j, "x_min"), join(path, "x_min"));
    out.grid.x_max = as_number(*find(j, "x_max"), join(path, "x_max"));
    out.grid.y_min = as_number(*find(j, "y_min"), join(path, "y_min"));
    out.grid.y_max = as_number(*find(j, "y_max"), join(path, "y_max"));
    if (!(out.grid.x_min < out.grid.x_max)) throw ConfigError(join(path, "x_max"), "must exceed x_min");
    if (!(out.grid.y_min < out.grid.y_max)) throw ConfigError(join(path, "y_max"), "must exceed y_min");
    out.grid.width = get_or(j, "width", path, 50, as_int);
    out.grid.height = get_or(j, "height", path, 50, as_int);
    if (out.grid.width < 2 || out.grid.height < 2) throw ConfigError(join(path, "width"), "grid needs width, height >= 2");
    out.renyi_order = get_or(j, "renyi_order", path, 2.0, as_number);
    if (!(out.renyi_order > 0.0)) throw ConfigError(join(path, "renyi_order"), "must be > 0");
  } else {
    throw ConfigError(join(path, "kind"), "unknown figure kind '" + k + "' (expected boundary_mi|entropy_grid)");
  }
  return out;
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace config_detail;
  ExperimentConfig out;
  reject_unknown_keys(j, "", {"schema_version", "experiment", "dataset", "model", "objective", "objectives",
                              "geometry", "train", "seeds", "kmeans_baseline", "figures"});
  const json* version = find(j, "schema_version");
  if (!version) throw ConfigError("schema_version", "required");
  out.schema_version = as_int(*version, "schema_version");
  if (out.schema_version != 1)
    throw ConfigError("schema_version", "unsupported version " + std::to_string(out.schema_version) + " (this build reads 1)");

  const json* experiment = find(j, "experiment");
  if (!experiment) throw ConfigError("experiment", "required");
  out.experiment = as_string(*experiment, "experiment");
  if (out.experiment.empty()) throw ConfigError("experiment", "must be non-empty");
  for (char c : out.experiment)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-')
      throw ConfigError("experiment", "names a directory; use only letters, digits, '_', '-'");

  if (const json* d = find(j, "dataset")) out.dataset = parse_dataset(*d, "dataset");
  if (const json* m = find(j, "model")) out.model = parse_model(*m, "model");

  const json* objective = find(j, "objective");
  const json* objectives = find(j, "objectives");
  if (objective && objectives) throw ConfigError("objectives", "give either 'objective' or 'objectives', not both");
  if (objective) out.objectives.push_back(parse_objective(*objective, "objective"));
  if (objectives) {
    if (!objectives->is_array() || objectives->empty())
      throw ConfigError("objectives", "expected a non-empty array");
    for (size_t i = 0; i < objectives->size(); ++i)
      out.objectives.push_back(parse_objective((*objectives)[i], "objectives[" + std::to_string(i) + "]"));
  }

  if (const json* g = find(j, "geometry")) out.geometry = parse_geometry(*g, "geometry");
  if (const json* t = find(j, "train")) parse_train(*t, "train", out.train);

  if (const json* seeds = find(j, "seeds")) {
    if (!seeds->is_array() || seeds->empty()) throw ConfigError("seeds", "expected a non-empty array");
    out.seeds.clear();
    for (size_t i = 0; i < seeds->size(); ++i)
      out.seeds.push_back(as_seed((*seeds)[i], "seeds[" + std::to_string(i) + "]"));
  }

  if (const json* b = find(j, "kmeans_baseline")) out.kmeans_baseline = as_bool(*b, "kmeans_baseline");
  if (const json* f = find(j, "figures")) out.figures = parse_figures(*f, "figures");
  return out;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

// The parsed config back as JSON with every default filled in. This is what
// gets embedded in reports and CSV headers as provenance.
inline nlohmann::json config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["schema_version"] = cfg.schema_version;
  j["experiment"] = cfg.experiment;
  if (cfg.dataset) {
    nlohmann::json d;
    switch (cfg.dataset->kind) {
      case DatasetConfig::Kind::GaussianMixture: {
        d["kind"] = "gaussian_mixture";
        nlohmann::json means = nlohmann::json::array();
        for (int r = 0; r < cfg.dataset->means.rows; ++r) {
          nlohmann::json row = nlohmann::json::array();
          for (int c = 0; c < cfg.dataset->means.cols; ++c) row.push_back(cfg.dataset->means.at(r, c));
          means.push_back(row);
        }
        d["means"] = means;
        d["sigma"] = cfg.dataset->sigma;
        if (!cfg.dataset->counts.empty()) d["counts"] = cfg.dataset->counts;
        else d["n"] = cfg.dataset->n;
        break;
      }
      case DatasetConfig::Kind::Gstm:
        d["kind"] = "gstm";
        d["alpha"] = cfg.dataset->gstm.alpha;
        d["sigma"] = cfg.dataset->gstm.sigma;
        d["rho"] = cfg.dataset->gstm.rho;
        d["n_per_cluster"] = cfg.dataset->gstm.n_per_cluster;
        break;
      case DatasetConfig::Kind::Moons:
        d["kind"] = "moons";
        d["n"] = cfg.dataset->n;
        d["noise"] = cfg.dataset->noise;
        break;
      case DatasetConfig::Kind::File:
        d["kind"] = "file";
        d["path"] = cfg.dataset->path;
        d["format"] = cfg.dataset->format == FileFormat::Csv ? "csv" : "binary";
        break;
    }
    j["dataset"] = d;
  }
  if (cfg.model) {
    nlohmann::json m;
    m["kind"] = cfg.model->kind == ModelConfig::Kind::Table ? "table" : "mlp";
    m["clusters"] = cfg.model->clusters;
    if (cfg.model->kind == ModelConfig::Kind::Mlp) m["hidden"] = cfg.model->hidden;
    j["model"] = m;
  }
  nlohmann::json objectives = nlohmann::json::array();
  for (const GeminiSpec& spec : cfg.objectives)
    objectives.push_back({{"distance", distance_name(spec.distance)}, {"mode", mode_name(spec.mode)}});
  j["objectives"] = objectives;
  nlohmann::json g;
  g["kernel"] = kernel_kind_name(cfg.geometry.kernel);
  g["kernel_sigma"] = cfg.geometry.kernel_sigma;
  if (!cfg.geometry.kernel_path.empty()) g["kernel_path"] = cfg.geometry.kernel_path;
  g["cost"] = cost_kind_name(cfg.geometry.cost);
  g["cost_quantile"] = cfg.geometry.cost_quantile;
  if (!cfg.geometry.cost_path.empty()) g["cost_path"] = cfg.geometry.cost_path;
  j["geometry"] = g;
  nlohmann::json t;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["lr"] = cfg.train.adam.lr;
  t["beta1"] = cfg.train.adam.beta1;
  t["beta2"] = cfg.train.adam.beta2;
  t["adam_eps"] = cfg.train.adam.eps;
  t["numeric_eps"] = cfg.train.numeric_eps;
  t["log_every"] = cfg.train.log_every;
  j["train"] = t;
  j["seeds"] = cfg.seeds;
  j["kmeans_baseline"] = cfg.kmeans_baseline;
  if (cfg.figures) {
    nlohmann::json f;
    if (cfg.figures->kind == FigureConfig::Kind::BoundaryMi) {
      f["kind"] = "boundary_mi";
      f["gaps"] = cfg.figures->gaps;
      f["sigma"] = cfg.figures->sigma;
      f["epsilon"] = cfg.figures->epsilon;
      f["mc_samples"] = cfg.figures->mc_samples;
      f["mc_repeats"] = cfg.figures->mc_repeats;
    } else {
      f["kind"] = "entropy_grid";
      f["x_min"] = cfg.figures->grid.x_min;
      f["x_max"] = cfg.figures->grid.x_max;
      f["y_min"] = cfg.figures->grid.y_min;
      f["y_max"] = cfg.figures->grid.y_max;
      f["width"] = cfg.figures->grid.width;
      f["height"] = cfg.figures->grid.height;
      f["renyi_order"] = cfg.figures->renyi_order;
    }
    j["figures"] = f;
  }
  return j;
}

inline Dataset make_dataset(const DatasetConfig& cfg, std::uint64_t seed) {
  switch (cfg.kind) {
    case DatasetConfig::Kind::GaussianMixture:
      return cfg.counts.empty() ? gen_gaussian_mixture(cfg.means.rows, cfg.n, cfg.means, cfg.sigma, seed)
                                : gen_gaussian_mixture(cfg.counts, cfg.means, cfg.sigma, seed);
    case DatasetConfig::Kind::Gstm:
      return gen_gstm(cfg.gstm, seed);
    case DatasetConfig::Kind::Moons:
      return gen_two_moons(cfg.n, cfg.noise, seed);
    case DatasetConfig::Kind::File:
      return load_dataset(cfg.path, cfg.format);
  }
  throw std::logic_error("make_dataset: unhandled dataset kind");
}

inline std::unique_ptr<ClusterModel> make_model(const ModelConfig& cfg, const Dataset& data, std::uint64_t seed) {
  if (cfg.kind == ModelConfig::Kind::Table)
    return std::make_unique<CategoricalTableModel>(data.size(), cfg.clusters, seed);
  std::vector<int> sizes;
  sizes.push_back(data.dim());
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  sizes.push_back(cfg.clusters);
  return std::make_unique<MlpModel>(std::move(sizes), seed);
}

}  // namespace gemini
