#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"

// Data-space geometry staged once per dataset and sliced per batch: kernel
// gram matrices for MMD objectives and ground cost matrices for Wasserstein
// objectives, including the epsilon-neighborhood shortest-path metric.
namespace gemini {

enum class KernelKind { Linear, Gaussian, Precomputed };
enum class CostKind { Euclidean, SquaredEuclidean, ShortestPath, Precomputed };

struct KernelMatrix {
  DenseArray m;
  KernelKind kind = KernelKind::Linear;
};

struct CostMatrix {
  DenseArray m;
  CostKind kind = CostKind::Euclidean;
};

struct NeighborhoodGraph {
  std::vector<std::vector<int>> adj;
  double epsilon = 0.0;
};

inline DenseArray pairwise_distances(const DenseArray& x) {
  DenseArray d(x.rows, x.rows);
  for (int i = 0; i < x.rows; ++i)
    for (int j = i + 1; j < x.rows; ++j) d.at(i, j) = d.at(j, i) = std::sqrt(squared_distance(x, i, j));
  return d;
}

// Nearest-rank quantile: the ceil(q*M)-th smallest value, 1-based.
inline double quantile_nearest_rank(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("quantile: q must lie in (0, 1]");
  std::sort(values.begin(), values.end());
  auto rank = static_cast<size_t>(std::ceil(q * static_cast<double>(values.size())));
  rank = std::max<size_t>(rank, 1);
  return values[rank - 1];
}

// Connects every pair at Euclidean distance <= epsilon, where epsilon is the
// given quantile of the strict-upper-triangle pairwise distances.
inline NeighborhoodGraph build_neighborhood_graph(const DenseArray& x, double quantile) {
  int n = x.rows;
  if (n < 2) throw std::invalid_argument("neighborhood graph: need at least 2 points");
  DenseArray d = pairwise_distances(x);
  std::vector<double> upper;
  upper.reserve(static_cast<size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) upper.push_back(d.at(i, j));
  NeighborhoodGraph g;
  g.epsilon = quantile_nearest_rank(std::move(upper), quantile);
  g.adj.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && d.at(i, j) <= g.epsilon) g.adj[i].push_back(j);
  return g;
}

// Unweighted all-pairs hop counts, one BFS per source. Unreachable pairs get
// the sentinel n (one more than any possible path length).
inline DenseArray shortest_path_hops(const NeighborhoodGraph& g) {
  int n = static_cast<int>(g.adj.size());
  DenseArray hops(n, n, static_cast<double>(n));
  std::vector<int> dist(n);
  std::deque<int> queue;
  for (int s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    queue.clear();
    queue.push_back(s);
    while (!queue.empty()) {
      int cur = queue.front();
      queue.pop_front();
      for (int nb : g.adj[cur])
        if (dist[nb] < 0) {
          dist[nb] = dist[cur] + 1;
          queue.push_back(nb);
        }
    }
    for (int t = 0; t < n; ++t)
      if (dist[t] >= 0) hops.at(s, t) = static_cast<double>(dist[t]);
  }
  return hops;
}

inline KernelMatrix build_kernel(const DenseArray& x, KernelKind kind, double sigma = 1.0) {
  KernelMatrix k;
  k.kind = kind;
  switch (kind) {
    case KernelKind::Linear: {
      k.m = matmul(x, transpose(x));
      break;
    }
    case KernelKind::Gaussian: {
      if (!(sigma > 0.0)) throw std::invalid_argument("gaussian kernel: sigma must be positive");
      k.m = DenseArray(x.rows, x.rows);
      for (int i = 0; i < x.rows; ++i) {
        k.m.at(i, i) = 1.0;
        for (int j = i + 1; j < x.rows; ++j)
          k.m.at(i, j) = k.m.at(j, i) = std::exp(-squared_distance(x, i, j) / (2.0 * sigma * sigma));
      }
      break;
    }
    case KernelKind::Precomputed:
      throw std::invalid_argument("build_kernel: precomputed kernels are loaded, not built");
  }
  return k;
}

inline CostMatrix build_cost(const DenseArray& x, CostKind kind, double quantile = 0.05) {
  CostMatrix c;
  c.kind = kind;
  switch (kind) {
    case CostKind::Euclidean:
      c.m = pairwise_distances(x);
      break;
    case CostKind::SquaredEuclidean: {
      c.m = DenseArray(x.rows, x.rows);
      for (int i = 0; i < x.rows; ++i)
        for (int j = i + 1; j < x.rows; ++j) c.m.at(i, j) = c.m.at(j, i) = squared_distance(x, i, j);
      break;
    }
    case CostKind::ShortestPath:
      c.m = shortest_path_hops(build_neighborhood_graph(x, quantile));
      break;
    case CostKind::Precomputed:
      throw std::invalid_argument("build_cost: precomputed costs are loaded, not built");
  }
  return c;
}

// Validation shared by the precomputed-matrix loaders.
inline void validate_square_symmetric(const DenseArray& m, double sym_tol, const char* what) {
  if (m.rows != m.cols) throw std::invalid_argument(std::string(what) + ": matrix must be square");
  for (int i = 0; i < m.rows; ++i)
    for (int j = i + 1; j < m.cols; ++j)
      if (std::abs(m.at(i, j) - m.at(j, i)) > sym_tol)
        throw std::invalid_argument(std::string(what) + ": not symmetric at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
}

inline KernelMatrix kernel_from_matrix(DenseArray m) {
  validate_square_symmetric(m, 1e-6, "precomputed kernel");
  return KernelMatrix{std::move(m), KernelKind::Precomputed};
}

inline CostMatrix cost_from_matrix(DenseArray m) {
  validate_square_symmetric(m, 1e-6, "precomputed cost");
  for (int i = 0; i < m.rows; ++i)
    if (std::abs(m.at(i, i)) > 1e-9)
      throw std::invalid_argument("precomputed cost: diagonal must be zero (row " + std::to_string(i) + ")");
  return CostMatrix{std::move(m), CostKind::Precomputed};
}

// Symmetric slice used to restrict a staged kernel/cost to a batch.
inline DenseArray submatrix(const DenseArray& m, std::span<const int> idx) {
  DenseArray out(static_cast<int>(idx.size()), static_cast<int>(idx.size()));
  for (size_t a = 0; a < idx.size(); ++a)
    for (size_t b = 0; b < idx.size(); ++b) out.at(static_cast<int>(a), static_cast<int>(b)) = m.at(idx[a], idx[b]);
  return out;
}

}  // namespace gemini
