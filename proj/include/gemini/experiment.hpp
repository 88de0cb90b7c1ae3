#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "gemini/config.hpp"
#include "gemini/metrics.hpp"
#include "gemini/models.hpp"
#include "gemini/rng.hpp"
#include "gemini/synthdata.hpp"
#include "gemini/training.hpp"

// Turns a validated ExperimentConfig into directories of reports, grids, and
// an aggregate summary. One run = one (objective, seed) pair; runs only ever
// write inside their own directory, so a sweep can execute them concurrently.
namespace gemini {

enum class Command { Run, Sweep, Figures };

struct RunResult {
  GeminiSpec objective;
  std::uint64_t seed = 0;
  RunReport report;
};

struct ExperimentOutcome {
  std::vector<RunResult> runs;  // ordered by (objective, seed) as configured
  std::string experiment_dir;
};

// Every run seed fans out into three independent streams so that, say,
// adding a shuffle cannot silently shift the dataset draw.
struct DerivedSeeds {
  std::uint64_t dataset = 0, model = 0, shuffle = 0;
};

inline DerivedSeeds derive_seeds(std::uint64_t run_seed) {
  Rng r(run_seed);
  DerivedSeeds d;
  d.dataset = r.raw();
  d.model = r.raw();
  d.shuffle = r.raw();
  return d;
}

namespace experiment_detail {

// Square matrix as headerless CSV, for precomputed kernels and costs.
inline DenseArray load_matrix_csv(const std::string& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw ConfigError(field, "cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t used = 0;
        double v = std::stod(cell, &used);
        if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument("");
        row.push_back(v);
      } catch (const std::exception&) {
        throw ConfigError(field, path + " line " + std::to_string(lineno) + ": '" + cell + "' is not a finite number");
      }
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError(field, path + " is empty");
  for (const auto& r : rows)
    if (r.size() != rows.size())
      throw ConfigError(field, path + " must be square; got a row of " + std::to_string(r.size()) + " in " +
                                   std::to_string(rows.size()) + " rows");
  return DenseArray::from_rows(rows);
}

inline GeometrySet build_run_geometry(const ExperimentConfig& cfg, const GeminiSpec& spec, const Dataset& data) {
  GeometrySet geo;
  if (needs_kernel(spec)) {
    if (cfg.geometry.kernel == KernelKind::Precomputed) {
      DenseArray m = load_matrix_csv(cfg.geometry.kernel_path, "geometry.kernel_path");
      if (m.rows != data.size())
        throw ConfigError("geometry.kernel_path", "matrix is " + m.shape_str() + " for a dataset of " +
                                                      std::to_string(data.size()) + " samples");
      validate_square_symmetric(m, 1e-9, "precomputed kernel");
      geo.kernel = KernelMatrix{std::move(m), KernelKind::Precomputed};
    } else {
      geo.kernel = build_kernel(data.features, cfg.geometry.kernel, cfg.geometry.kernel_sigma);
    }
  }
  if (needs_cost(spec)) {
    if (cfg.geometry.cost == CostKind::Precomputed) {
      DenseArray m = load_matrix_csv(cfg.geometry.cost_path, "geometry.cost_path");
      if (m.rows != data.size())
        throw ConfigError("geometry.cost_path", "matrix is " + m.shape_str() + " for a dataset of " +
                                                    std::to_string(data.size()) + " samples");
      validate_square_symmetric(m, 1e-9, "precomputed cost");
      geo.cost = CostMatrix{std::move(m), CostKind::Precomputed};
    } else {
      geo.cost = build_cost(data.features, cfg.geometry.cost, cfg.geometry.cost_quantile);
    }
  }
  return geo;
}

inline nlohmann::json run_echo(const ExperimentConfig& cfg, const GeminiSpec& spec, std::uint64_t seed,
                               const DerivedSeeds& derived) {
  nlohmann::json echo = config_json(cfg);
  echo["run"] = {{"seed", seed},
                 {"objective", {{"distance", distance_name(spec.distance)}, {"mode", mode_name(spec.mode)}}},
                 {"dataset_seed", derived.dataset},
                 {"model_seed", derived.model},
                 {"shuffle_seed", derived.shuffle}};
  return echo;
}

inline double mean_of(const std::vector<double>& xs) {
  return xs.empty() ? std::nan("") : std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
}

inline double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / (xs.size() - 1.0));
}

inline double median_of(std::vector<double> xs) {
  if (xs.empty()) return std::nan("");
  std::sort(xs.begin(), xs.end());
  size_t mid = xs.size() / 2;
  return xs.size() % 2 == 1 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

// One complete training run, written into run_dir.
inline RunResult run_one(const ExperimentConfig& cfg, const GeminiSpec& spec, std::uint64_t seed,
                         const std::filesystem::path& run_dir, std::ostream* progress) {
  DerivedSeeds derived = derive_seeds(seed);
  Dataset data = make_dataset(*cfg.dataset, derived.dataset);
  GeometrySet geo = build_run_geometry(cfg, spec, data);
  std::unique_ptr<ClusterModel> model = make_model(*cfg.model, data, derived.model);

  TrainConfig tc = cfg.train;
  tc.seed = derived.shuffle;
  tc.objective = spec;
  tc.kernel = cfg.geometry.kernel;
  tc.kernel_sigma = cfg.geometry.kernel_sigma;
  tc.cost = cfg.geometry.cost;
  tc.cost_quantile = cfg.geometry.cost_quantile;

  RunResult result{spec, seed, train(*model, data, tc, geo, progress)};
  result.report.config_echo = run_echo(cfg, spec, seed, derived);
  std::string provenance = result.report.config_echo.dump();

  std::filesystem::create_directories(run_dir);
  {
    std::ofstream out(run_dir / "report.json");
    if (!out) throw std::runtime_error("run_one: cannot open " + (run_dir / "report.json").string());
    out << report_to_json(result.report).dump(2) << "\n";
  }
  write_assignments_csv(result.report, (run_dir / "assignments.csv").string(), provenance);
  save_checkpoint(*model, (run_dir / "model.ckpt").string());

  if (cfg.figures && cfg.figures->kind == FigureConfig::Kind::EntropyGrid) {
    const FigureConfig& fig = *cfg.figures;
    std::filesystem::create_directories(run_dir / "grids");
    EntropyGrid eg = renyi_entropy_map(*model, fig.grid, fig.renyi_order);
    save_grid_csv(fig.grid, eg.values, "entropy", (run_dir / "grids" / "entropy.csv").string(), provenance);

    DenseArray pts = grid_points(fig.grid);
    std::vector<int> idx(pts.rows);
    std::iota(idx.begin(), idx.end(), 0);
    ad::Tape tape(tc.numeric_eps);
    std::vector<int> hard = hard_assign(model->predict(tape, pts, idx));
    DenseArray clusters(fig.grid.height, fig.grid.width);
    for (int i = 0; i < fig.grid.height; ++i)
      for (int j = 0; j < fig.grid.width; ++j) clusters.at(i, j) = hard[static_cast<size_t>(i) * fig.grid.width + j];
    save_grid_csv(fig.grid, clusters, "cluster", (run_dir / "grids" / "cluster.csv").string(), provenance);
  }
  return result;
}

// Closed-form and Monte-Carlo boundary MI over a range of mean gaps: the
// data behind the "how much does a misplaced boundary cost" curve.
inline void write_boundary_figure(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir) {
  const FigureConfig& fig = *cfg.figures;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "boundary_mi.csv");
  if (!out) throw std::runtime_error("write_boundary_figure: cannot open " + (dir / "boundary_mi.csv").string());
  out.precision(17);
  nlohmann::json echo = config_json(cfg);
  echo["run"] = {{"seed", seed}};
  out << "# " << echo.dump() << "\n";
  out << "gap,beta,closed_midpoint,closed_band,delta_closed,mc_midpoint_mean,mc_midpoint_std,mc_band_mean,mc_band_std,"
         "delta_mc_median\n";
  Rng seedgen(seed);
  for (double gap : fig.gaps) {
    double beta = mass_between_means(0.0, gap, fig.sigma);
    double closed_a = boundary_mi_closed_form(BoundaryModel::MidpointSplit, fig.epsilon, beta);
    double closed_b = boundary_mi_closed_form(BoundaryModel::BandSplit, fig.epsilon, beta);
    std::vector<double> mc_a, mc_b, delta;
    for (int r = 0; r < fig.mc_repeats; ++r) {
      double a = boundary_mi_monte_carlo(BoundaryModel::MidpointSplit, fig.epsilon, 0.0, gap, fig.sigma,
                                         fig.mc_samples, seedgen.raw());
      double b = boundary_mi_monte_carlo(BoundaryModel::BandSplit, fig.epsilon, 0.0, gap, fig.sigma, fig.mc_samples,
                                         seedgen.raw());
      mc_a.push_back(a);
      mc_b.push_back(b);
      delta.push_back(a - b);
    }
    out << gap << "," << beta << "," << closed_a << "," << closed_b << "," << closed_a - closed_b << ","
        << mean_of(mc_a) << "," << sample_std(mc_a) << "," << mean_of(mc_b) << "," << sample_std(mc_b) << ","
        << median_of(delta) << "\n";
  }
  if (!out) throw std::runtime_error("write_boundary_figure: write failed");
}

struct SummaryRow {
  std::string label_distance, label_mode;
  size_t n_seeds = 0;
  double ari_mean = std::nan(""), ari_std = std::nan("");
  double nonempty_mean = std::nan("");
  double entropy_mean = std::nan(""), renyi2_mean = std::nan("");
  double objective_mean = std::nan("");
};

inline void write_summary_csv(const ExperimentConfig& cfg, const std::vector<SummaryRow>& rows,
                              const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_summary_csv: cannot open " + path.string());
  out.precision(17);
  out << "# " << config_json(cfg).dump() << "\n";
  out << "distance,mode,n_seeds,ari_mean,ari_std,nonempty_mean,mean_row_entropy,mean_row_renyi2_entropy,"
         "objective_mean\n";
  for (const SummaryRow& r : rows)
    out << r.label_distance << "," << r.label_mode << "," << r.n_seeds << "," << r.ari_mean << "," << r.ari_std << ","
        << r.nonempty_mean << "," << r.entropy_mean << "," << r.renyi2_mean << "," << r.objective_mean << "\n";
  if (!out) throw std::runtime_error("write_summary_csv: write failed for " + path.string());
}

}  // namespace experiment_detail

inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, Command cmd, const std::string& outdir,
                                        const std::vector<std::uint64_t>& seed_override, int threads,
                                        std::ostream& log) {
  namespace detail = experiment_detail;
  namespace fs = std::filesystem;
  if (threads < 1) throw ConfigError("threads", "must be >= 1");
  // A seed listed twice would run the same directory twice (and race under
  // --threads), for byte-identical results; keep first occurrences only.
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s : seed_override.empty() ? cfg.seeds : seed_override)
    if (std::find(seeds.begin(), seeds.end(), s) == seeds.end()) seeds.push_back(s);

  if (cmd == Command::Figures && !cfg.figures) throw ConfigError("figures", "required for the figures command");
  bool boundary_only = cmd == Command::Figures && cfg.figures->kind == FigureConfig::Kind::BoundaryMi;

  ExperimentOutcome outcome;
  fs::path exp_dir = fs::path(outdir) / cfg.experiment;
  outcome.experiment_dir = exp_dir.string();

  if (boundary_only) {
    for (std::uint64_t s : seeds) detail::write_boundary_figure(cfg, s, exp_dir / std::to_string(s) / "grids");
    log << cfg.experiment << ": boundary curves for " << seeds.size() << " seed(s) under " << exp_dir.string() << "\n";
    return outcome;
  }

  if (!cfg.dataset) throw ConfigError("dataset", "required to train");
  if (!cfg.model) throw ConfigError("model", "required to train");
  if (cfg.objectives.empty()) throw ConfigError("objective", "required to train");
  if (cmd == Command::Run && cfg.objectives.size() != 1)
    throw ConfigError("objectives", "run expects exactly one objective; this config has " +
                                        std::to_string(cfg.objectives.size()) + " (use sweep)");
  if (cfg.figures && cfg.figures->kind == FigureConfig::Kind::EntropyGrid &&
      cfg.model->kind == ModelConfig::Kind::Table)
    throw ConfigError("figures", "entropy_grid needs a model that maps features (mlp); the table model only scores "
                                 "training rows");

  // Runs nest under an objective directory only when there are several, so a
  // one-objective sweep lays out its files exactly like run.
  bool multi = cfg.objectives.size() > 1;
  struct Job {
    size_t obj_idx, seed_idx;
  };
  std::vector<Job> jobs;
  for (size_t o = 0; o < cfg.objectives.size(); ++o)
    for (size_t s = 0; s < seeds.size(); ++s) jobs.push_back({o, s});

  std::vector<RunResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= jobs.size()) break;
      const Job& job = jobs[i];
      const GeminiSpec& spec = cfg.objectives[job.obj_idx];
      std::uint64_t seed = seeds[job.seed_idx];
      fs::path run_dir = multi ? exp_dir / objective_slug(spec) / std::to_string(seed) : exp_dir / std::to_string(seed);
      try {
        std::ostream* progress = threads == 1 && cfg.train.log_every > 0 ? &log : nullptr;
        results[i] = detail::run_one(cfg, spec, seed, run_dir, progress);
        std::lock_guard<std::mutex> hold(log_mutex);
        log << cfg.experiment << " " << objective_slug(spec) << " seed " << seed << ": objective "
            << results[i].report.final_objective;
        if (results[i].report.final_ari) log << ", ari " << *results[i].report.final_ari;
        log << ", nonempty " << results[i].report.nonempty << "\n";
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  int n_workers = std::min<int>(threads, static_cast<int>(jobs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);

  // A boundary figure declared alongside a training config is independent of
  // the model; it lands once per seed next to that seed's runs.
  if (cfg.figures && cfg.figures->kind == FigureConfig::Kind::BoundaryMi)
    for (std::uint64_t s : seeds) detail::write_boundary_figure(cfg, s, exp_dir / std::to_string(s) / "grids");

  // Aggregate over seeds in sorted order so the summary never depends on
  // which run finished first or how the seed list was typed.
  std::vector<size_t> seed_order(seeds.size());
  std::iota(seed_order.begin(), seed_order.end(), 0);
  std::sort(seed_order.begin(), seed_order.end(), [&](size_t a, size_t b) { return seeds[a] < seeds[b]; });

  std::vector<detail::SummaryRow> rows;
  for (size_t o = 0; o < cfg.objectives.size(); ++o) {
    detail::SummaryRow row;
    row.label_distance = distance_name(cfg.objectives[o].distance);
    row.label_mode = mode_name(cfg.objectives[o].mode);
    std::vector<double> aris, nonempty, entropy, renyi2, objective;
    for (size_t s : seed_order) {
      const RunReport& rep = results[o * seeds.size() + s].report;
      if (rep.final_ari) aris.push_back(*rep.final_ari);
      nonempty.push_back(rep.nonempty);
      entropy.push_back(rep.mean_row_entropy);
      renyi2.push_back(rep.mean_row_renyi2);
      objective.push_back(rep.final_objective);
    }
    row.n_seeds = seeds.size();
    row.ari_mean = detail::mean_of(aris);
    row.ari_std = detail::sample_std(aris);
    row.nonempty_mean = detail::mean_of(nonempty);
    row.entropy_mean = detail::mean_of(entropy);
    row.renyi2_mean = detail::mean_of(renyi2);
    row.objective_mean = detail::mean_of(objective);
    rows.push_back(row);
  }
  if (cfg.kmeans_baseline) {
    detail::SummaryRow row;
    row.label_distance = "kmeans";
    row.label_mode = "";
    std::vector<double> aris;
    for (size_t s : seed_order) {
      DerivedSeeds derived = derive_seeds(seeds[s]);
      Dataset data = make_dataset(*cfg.dataset, derived.dataset);
      if (!data.has_labels()) break;
      KmeansResult km = kmeans(data.features, cfg.model->clusters, derived.model);
      aris.push_back(ari(data.labels, km.assignments));
    }
    row.n_seeds = seeds.size();
    row.ari_mean = detail::mean_of(aris);
    row.ari_std = detail::sample_std(aris);
    rows.push_back(row);
  }
  detail::write_summary_csv(cfg, rows, exp_dir / "summary.csv");

  outcome.runs = std::move(results);
  log << cfg.experiment << ": " << jobs.size() << " run(s) complete, summary at "
      << (exp_dir / "summary.csv").string() << "\n";
  return outcome;
}

}  // namespace gemini
