#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"
#include "gemini/autodiff.hpp"
#include "gemini/models.hpp"
#include "gemini/rng.hpp"
#include "gemini/synthdata.hpp"

// Clustering evaluation: agreement with ground truth, prediction confidence
// over a plane, cluster usage counts, the K-Means baseline, and closed-form
// references for what mutual information assigns to a well-placed versus a
// misplaced decision boundary on a two-Gaussian mixture.
namespace gemini {

// Hubert-Arabie adjusted Rand index. Symmetric, invariant to relabeling
// either side, 1 for identical partitions, 0 in expectation for independent
// ones, negative for worse-than-chance agreement.
inline double ari(std::span<const int> labels, std::span<const int> assignments) {
  if (labels.size() != assignments.size()) throw std::invalid_argument("ari: length mismatch");
  const int n = static_cast<int>(labels.size());
  if (n < 2) throw std::invalid_argument("ari: need at least two samples");
  int r = 0, c = 0;
  for (int v : labels) {
    if (v < 0) throw std::invalid_argument("ari: negative label");
    r = std::max(r, v + 1);
  }
  for (int v : assignments) {
    if (v < 0) throw std::invalid_argument("ari: negative assignment");
    c = std::max(c, v + 1);
  }
  std::vector<long long> counts(static_cast<size_t>(r) * c, 0);
  std::vector<long long> row(r, 0), col(c, 0);
  for (int i = 0; i < n; ++i) {
    ++counts[static_cast<size_t>(labels[i]) * c + assignments[i]];
    ++row[labels[i]];
    ++col[assignments[i]];
  }
  auto pairs = [](long long m) { return 0.5 * m * (m - 1); };
  double index = 0.0, row_pairs = 0.0, col_pairs = 0.0;
  for (long long v : counts) index += pairs(v);
  for (long long v : row) row_pairs += pairs(v);
  for (long long v : col) col_pairs += pairs(v);
  double expected = row_pairs * col_pairs / pairs(n);
  double maximum = 0.5 * (row_pairs + col_pairs);
  // Both partitions trivial (all-in-one or all-singletons): no pair
  // statistics to compare, and the partitions coincide. Count as agreement.
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

// Renyi entropy of one distribution: (1/(1-order)) log sum p^order, with the
// Shannon limit at order 1. Zeros contribute zero mass for order > 0.
inline double renyi_entropy(std::span<const double> p, double order) {
  if (order <= 0.0) throw std::invalid_argument("renyi_entropy: order must be positive");
  if (order == 1.0) {
    double h = 0.0;
    for (double v : p)
      if (v > 0.0) h -= v * std::log(v);
    return h;
  }
  double s = 0.0;
  for (double v : p)
    if (v > 0.0) s += std::pow(v, order);
  return std::log(s) / (1.0 - order);
}

inline double mean_renyi_entropy(const DenseArray& posterior, double order) {
  if (posterior.rows == 0) throw std::invalid_argument("mean_renyi_entropy: empty posterior");
  double total = 0.0;
  for (int i = 0; i < posterior.rows; ++i)
    total += renyi_entropy(std::span(posterior.data).subspan(static_cast<size_t>(i) * posterior.cols,
                                                             posterior.cols),
                           order);
  return total / posterior.rows;
}

// Clusters that received at least one hard assignment.
inline int nonempty_clusters(std::span<const int> assignments, int k) {
  std::vector<char> used(k, 0);
  for (int a : assignments) {
    if (a < 0 || a >= k) throw std::invalid_argument("nonempty_clusters: assignment out of range");
    used[a] = 1;
  }
  return static_cast<int>(std::count(used.begin(), used.end(), 1));
}

// Clusters whose soft mass exceeds the threshold; the default tenth of a
// balanced share treats near-zero columns as switched off.
inline int nonempty_clusters(const DenseArray& posterior, double threshold = -1.0) {
  const int k = posterior.cols;
  if (posterior.rows == 0 || k == 0) throw std::invalid_argument("nonempty_clusters: empty posterior");
  if (threshold < 0.0) threshold = 1.0 / (10.0 * k);
  int used = 0;
  for (int y = 0; y < k; ++y) {
    double mass = 0.0;
    for (int i = 0; i < posterior.rows; ++i) mass += posterior.at(i, y);
    if (mass / posterior.rows > threshold) ++used;
  }
  return used;
}

// Two reference decision rules on a balanced mixture of two unit-variance-
// style Gaussians at mu0 < mu1. The midpoint rule flips cluster 1 on past
// the midpoint between the means; the band rule flips it on inside
// [mu0, mu1]. Both leak probability epsilon to the wrong side.
enum class BoundaryModel { MidpointSplit, BandSplit };

// Fraction of mixture mass falling between the two means; the band rule's
// cluster balance is a function of this alone.
inline double mass_between_means(double mu0, double mu1, double sigma) {
  if (!(mu0 < mu1) || sigma <= 0.0) throw std::invalid_argument("mass_between_means: need mu0 < mu1, sigma > 0");
  double d = (mu1 - mu0) / sigma;
  // Each component contributes Phi(d) - 1/2; the mixture averages them.
  return 0.5 * std::erf(d / std::numbers::sqrt2);
}

// Exact mutual information of each rule under the generating mixture. The
// midpoint rule splits mass evenly, so its value depends on epsilon alone;
// the band rule's proportions shift with beta, the mass between the means.
inline double boundary_mi_closed_form(BoundaryModel model, double epsilon, double beta) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("boundary_mi: epsilon must lie in (0,1)");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("boundary_mi: beta must lie in (0,1)");
  if (model == BoundaryModel::MidpointSplit)
    return epsilon * std::log(2.0 * epsilon) + (1.0 - epsilon) * std::log(2.0 * (1.0 - epsilon));
  double pi = epsilon + beta * (1.0 - 2.0 * epsilon);
  double pibar = 1.0 - pi;
  return epsilon * std::log(epsilon) + (1.0 - epsilon) * std::log(1.0 - epsilon) - std::log(pibar) -
         (2.0 * beta * epsilon - beta - epsilon) * std::log(pibar / pi);
}

// Plug-in estimate of the same quantity: draw from the mixture, apply the
// piecewise rule, and score mean KL between per-sample posteriors and their
// average. Converges to the closed form as samples grow.
inline double boundary_mi_monte_carlo(BoundaryModel model, double epsilon, double mu0, double mu1, double sigma,
                                      int n_samples, std::uint64_t seed) {
  if (!(mu0 < mu1) || sigma <= 0.0) throw std::invalid_argument("boundary_mi: need mu0 < mu1, sigma > 0");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("boundary_mi: epsilon must lie in (0,1)");
  if (n_samples < 2) throw std::invalid_argument("boundary_mi: need at least two samples");
  Rng rng(seed);
  std::vector<double> p1(n_samples);
  double midpoint = 0.5 * (mu0 + mu1);
  for (int i = 0; i < n_samples; ++i) {
    double x = (rng.uniform() < 0.5 ? mu0 : mu1) + sigma * rng.normal();
    bool on;
    if (model == BoundaryModel::MidpointSplit)
      on = x > midpoint;
    else
      on = x >= mu0 && x <= mu1;
    p1[i] = on ? 1.0 - epsilon : epsilon;
  }
  double pi1 = std::accumulate(p1.begin(), p1.end(), 0.0) / n_samples;
  double mi = 0.0;
  for (double p : p1) mi += p * std::log(p / pi1) + (1.0 - p) * std::log((1.0 - p) / (1.0 - pi1));
  return mi / n_samples;
}

// Rectangular evaluation grid and the per-point prediction entropy on it.
struct GridSpec {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  int width = 100, height = 100;
};

struct EntropyGrid {
  GridSpec spec;
  DenseArray values;  // height x width, row i at y_i, column j at x_j
};

inline DenseArray grid_points(const GridSpec& spec) {
  if (spec.width < 2 || spec.height < 2) throw std::invalid_argument("grid_points: need width, height >= 2");
  if (!(spec.x_min < spec.x_max) || !(spec.y_min < spec.y_max))
    throw std::invalid_argument("grid_points: bounds must be ordered");
  DenseArray pts(spec.width * spec.height, 2);
  for (int i = 0; i < spec.height; ++i)
    for (int j = 0; j < spec.width; ++j) {
      pts.at(i * spec.width + j, 0) = spec.x_min + (spec.x_max - spec.x_min) * j / (spec.width - 1);
      pts.at(i * spec.width + j, 1) = spec.y_min + (spec.y_max - spec.y_min) * i / (spec.height - 1);
    }
  return pts;
}

inline EntropyGrid renyi_entropy_map(const ClusterModel& model, const GridSpec& spec, double order) {
  DenseArray pts = grid_points(spec);
  std::vector<int> idx(pts.rows);
  std::iota(idx.begin(), idx.end(), 0);
  ad::Tape tape;
  PosteriorBatch batch = model.predict(tape, pts, idx);
  const DenseArray& p = batch.matrix.value();
  EntropyGrid grid{spec, DenseArray(spec.height, spec.width)};
  for (int i = 0; i < spec.height; ++i)
    for (int j = 0; j < spec.width; ++j)
      grid.values.at(i, j) = renyi_entropy(
          std::span(p.data).subspan(static_cast<size_t>(i * spec.width + j) * p.cols, p.cols), order);
  return grid;
}

// "x,y,<column>" CSV of any grid-shaped field, one row per grid point. A
// non-empty comment goes in as a leading '#' line, used to stamp files with
// their config.
inline void save_grid_csv(const GridSpec& spec, const DenseArray& values, const std::string& column,
                          const std::string& path, const std::string& comment = "") {
  if (values.rows != spec.height || values.cols != spec.width)
    throw std::invalid_argument("save_grid_csv: values do not match the grid");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_grid_csv: cannot open " + path);
  out.precision(17);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "x,y," << column << "\n";
  for (int i = 0; i < spec.height; ++i)
    for (int j = 0; j < spec.width; ++j) {
      double x = spec.x_min + (spec.x_max - spec.x_min) * j / (spec.width - 1);
      double y = spec.y_min + (spec.y_max - spec.y_min) * i / (spec.height - 1);
      out << x << "," << y << "," << values.at(i, j) << "\n";
    }
  if (!out) throw std::runtime_error("save_grid_csv: write failed for " + path);
}

// Lloyd's algorithm with distance-squared-weighted seeding. Empty clusters
// are re-seeded from the point farthest from its current center, so the
// result always uses all k centers.
struct KmeansResult {
  std::vector<int> assignments;
  DenseArray centers;             // k x D
  std::vector<double> sse_trace;  // within-cluster SSE after each assignment
  int iterations = 0;
};

inline KmeansResult kmeans(const DenseArray& features, int k, std::uint64_t seed, int max_iter = 100) {
  const int n = features.rows, dim = features.cols;
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: need 1 <= k <= n");
  Rng rng(seed);

  auto sq_dist = [&](int i, const DenseArray& centers, int c) {
    double s = 0.0;
    for (int d = 0; d < dim; ++d) {
      double v = features.at(i, d) - centers.at(c, d);
      s += v * v;
    }
    return s;
  };

  KmeansResult res;
  res.centers = DenseArray(k, dim);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  int first = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
  for (int d = 0; d < dim; ++d) res.centers.at(0, d) = features.at(first, d);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      best[i] = std::min(best[i], sq_dist(i, res.centers, c - 1));
      total += best[i];
    }
    int pick = n - 1;
    if (total > 0.0) {
      double target = rng.uniform() * total, cum = 0.0;
      for (int i = 0; i < n; ++i) {
        cum += best[i];
        if (cum >= target) {
          pick = i;
          break;
        }
      }
    } else {
      // All remaining points coincide with chosen centers; any copy works.
      pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    }
    for (int d = 0; d < dim; ++d) res.centers.at(c, d) = features.at(pick, d);
  }

  res.assignments.assign(n, 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      int arg = 0;
      double bd = sq_dist(i, res.centers, 0);
      for (int c = 1; c < k; ++c) {
        double d2 = sq_dist(i, res.centers, c);
        if (d2 < bd) {
          bd = d2;
          arg = c;
        }
      }
      if (arg != res.assignments[i]) changed = true;
      res.assignments[i] = arg;
      sse += bd;
    }
    res.sse_trace.push_back(sse);
    res.iterations = iter + 1;
    if (!changed) break;

    std::vector<int> sizes(k, 0);
    DenseArray sums(k, dim);
    for (int i = 0; i < n; ++i) {
      ++sizes[res.assignments[i]];
      for (int d = 0; d < dim; ++d) sums.at(res.assignments[i], d) += features.at(i, d);
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[c] > 0) {
        for (int d = 0; d < dim; ++d) res.centers.at(c, d) = sums.at(c, d) / sizes[c];
      } else {
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
          double d2 = sq_dist(i, res.centers, res.assignments[i]);
          if (d2 > fd) {
            fd = d2;
            far = i;
          }
        }
        for (int d = 0; d < dim; ++d) res.centers.at(c, d) = features.at(far, d);
      }
    }
  }
  return res;
}

// Maximum a posteriori labeling under the generating mixture of gen_gstm:
// equal-weight components, three isotropic Gaussians and one isotropic
// Student-t, all with the generator's own means and scale. Evaluation-only;
// a clustering model never sees these densities.
inline std::vector<int> gstm_map_assignments(const DenseArray& features, const GstmParams& params) {
  if (features.cols != 2) throw std::invalid_argument("gstm_map_assignments: features must be Nx2");
  const double a = params.alpha, s2 = params.sigma * params.sigma, rho = params.rho;
  const double mu[4][2] = {{a, a}, {a, -a}, {-a, a}, {-a, -a}};
  // Equal mixture weights: compare per-component log densities directly.
  const double log_gauss_norm = -std::log(2.0 * std::numbers::pi * s2);
  const double log_t_norm =
      std::lgamma((rho + 2.0) / 2.0) - std::lgamma(rho / 2.0) - std::log(rho * std::numbers::pi * s2);
  std::vector<int> out(features.rows);
  for (int i = 0; i < features.rows; ++i) {
    int arg = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < 4; ++c) {
      double dx = features.at(i, 0) - mu[c][0];
      double dy = features.at(i, 1) - mu[c][1];
      double d2 = dx * dx + dy * dy;
      double ll = c < 3 ? log_gauss_norm - d2 / (2.0 * s2)
                        : log_t_norm - ((rho + 2.0) / 2.0) * std::log1p(d2 / (rho * s2));
      if (ll > best) {
        best = ll;
        arg = c;
      }
    }
    out[i] = arg;
  }
  return out;
}

}  // namespace gemini
