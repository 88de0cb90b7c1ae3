#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"
#include "gemini/rng.hpp"

// Seeded synthetic datasets plus CSV/binary ingestion for precomputed
// features. Generators are pure functions of their parameters and seed, and
// the RNG is our own fixed-transform sampler, so every platform reproduces
// the same bytes.
namespace gemini {

struct Dataset {
  DenseArray features;      // N x D
  std::vector<int> labels;  // ground truth, evaluation only; empty if unknown
  std::string name;
  std::uint64_t seed = 0;

  int size() const { return features.rows; }
  int dim() const { return features.cols; }
  bool has_labels() const { return !labels.empty(); }
};

namespace data_detail {

inline void validate(const Dataset& d, const char* what) {
  for (double v : d.features.data)
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite feature");
  if (!d.labels.empty()) {
    if (static_cast<int>(d.labels.size()) != d.features.rows)
      throw std::invalid_argument(std::string(what) + ": label count does not match rows");
    for (int l : d.labels)
      if (l < 0) throw std::invalid_argument(std::string(what) + ": negative label");
  }
}

}  // namespace data_detail

// Isotropic Gaussian blobs with explicit per-component sample counts.
// Component i contributes counts[i] rows labeled i, drawn around means row i
// with standard deviation sigma in every coordinate.
inline Dataset gen_gaussian_mixture(const std::vector<int>& counts, const DenseArray& means, double sigma,
                                    std::uint64_t seed) {
  const int k = means.rows, dim = means.cols;
  if (k < 1 || dim < 1) throw std::invalid_argument("gen_gaussian_mixture: means must be KxD with K,D >= 1");
  if (static_cast<int>(counts.size()) != k)
    throw std::invalid_argument("gen_gaussian_mixture: one count per component required");
  for (int c : counts)
    if (c < 0) throw std::invalid_argument("gen_gaussian_mixture: negative count");
  if (sigma < 0.0) throw std::invalid_argument("gen_gaussian_mixture: sigma must be >= 0");
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      bool same = true;
      for (int d = 0; d < dim; ++d) same = same && means.at(a, d) == means.at(b, d);
      if (same) throw std::invalid_argument("gen_gaussian_mixture: component means must be distinct");
    }

  int n = 0;
  for (int c : counts) n += c;
  Dataset out{DenseArray(n, dim), {}, "gaussian_mixture", seed};
  out.labels.reserve(n);
  Rng rng(seed);
  int row = 0;
  for (int comp = 0; comp < k; ++comp)
    for (int i = 0; i < counts[comp]; ++i, ++row) {
      out.labels.push_back(comp);
      for (int d = 0; d < dim; ++d) out.features.at(row, d) = means.at(comp, d) + sigma * rng.normal();
    }
  data_detail::validate(out, "gen_gaussian_mixture");
  return out;
}

// Balanced variant: n samples from each of the K components.
inline Dataset gen_gaussian_mixture(int k, int n, const DenseArray& means, double sigma, std::uint64_t seed) {
  if (means.rows != k) throw std::invalid_argument("gen_gaussian_mixture: k does not match means rows");
  return gen_gaussian_mixture(std::vector<int>(k, n), means, sigma, seed);
}

struct GstmParams {
  double alpha = 5.0;       // mean offset: components sit at (+-alpha, +-alpha)
  double sigma = 1.0;       // isotropic scale of every component
  int rho = 1;              // Student-t degrees of freedom
  int n_per_cluster = 100;
};

// Three Gaussian components and one Student-t component on the corners of a
// square. The Student draw takes a centered Gaussian x and u from chi^2(rho),
// then scales x by sqrt(rho/u); small rho gives the heavy tail that makes
// this dataset hostile to centroid methods. A resample guard retries the
// astronomically rare non-finite draw (u rounding to zero).
inline Dataset gen_gstm(const GstmParams& params, std::uint64_t seed) {
  if (params.alpha <= 0.0 || params.sigma <= 0.0)
    throw std::invalid_argument("gen_gstm: alpha and sigma must be positive");
  if (params.rho < 1) throw std::invalid_argument("gen_gstm: rho must be >= 1");
  if (params.n_per_cluster < 1) throw std::invalid_argument("gen_gstm: n_per_cluster must be >= 1");

  const double a = params.alpha;
  const double mu[4][2] = {{a, a}, {a, -a}, {-a, a}, {-a, -a}};
  const int n = params.n_per_cluster;
  Dataset out{DenseArray(4 * n, 2), {}, "gstm", seed};
  out.labels.reserve(4 * n);
  Rng rng(seed);
  int row = 0;
  for (int comp = 0; comp < 4; ++comp)
    for (int i = 0; i < n; ++i, ++row) {
      out.labels.push_back(comp);
      double x0, x1;
      do {
        x0 = params.sigma * rng.normal();
        x1 = params.sigma * rng.normal();
        if (comp == 3) {
          double u = rng.chi_squared(params.rho);
          double stretch = std::sqrt(params.rho / u);
          x0 *= stretch;
          x1 *= stretch;
        }
      } while (!std::isfinite(x0) || !std::isfinite(x1));
      out.features.at(row, 0) = mu[comp][0] + x0;
      out.features.at(row, 1) = mu[comp][1] + x1;
    }
  data_detail::validate(out, "gen_gstm");
  return out;
}

// Two interleaved half-circles of unit radius. The first moon is the lower
// half-circle around the origin; the second is its point reflection shifted
// by (1, -0.5), so the tips of each arc reach into the other's hollow.
// Arc positions are evenly spaced, then jittered by isotropic Gaussian noise.
inline Dataset gen_two_moons(int n, double noise, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("gen_two_moons: n must be even and >= 2");
  if (noise < 0.0) throw std::invalid_argument("gen_two_moons: noise must be >= 0");

  const int half = n / 2;
  Dataset out{DenseArray(n, 2), {}, "two_moons", seed};
  out.labels.reserve(n);
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    int moon = i < half ? 0 : 1;
    int j = moon == 0 ? i : i - half;
    double t = half == 1 ? 0.0 : std::numbers::pi * j / (half - 1);
    double x = std::cos(t), y = -std::sin(t);
    if (moon == 1) {
      x = 1.0 - x;
      y = -0.5 - y;
    }
    out.labels.push_back(moon);
    out.features.at(i, 0) = x + noise * rng.normal();
    out.features.at(i, 1) = y + noise * rng.normal();
  }
  data_detail::validate(out, "gen_two_moons");
  return out;
}

enum class FileFormat { Csv, Binary };

// CSV layout: header "f0,...,f{D-1}[,label]", one row per sample. Parse
// failures report the offending 1-based file line.
inline void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  out.precision(17);
  for (int c = 0; c < d.dim(); ++c) out << (c ? "," : "") << "f" << c;
  if (d.has_labels()) out << ",label";
  out << "\n";
  for (int i = 0; i < d.size(); ++i) {
    for (int c = 0; c < d.dim(); ++c) out << (c ? "," : "") << d.features.at(i, c);
    if (d.has_labels()) out << "," << d.labels[i];
    out << "\n";
  }
  if (!out) throw std::runtime_error("save_csv: write failed for " + path);
}

namespace data_detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

inline double parse_cell(const std::string& cell, int file_line, const char* what) {
  size_t used = 0;
  double v;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw std::runtime_error(std::string(what) + ": non-numeric cell at line " + std::to_string(file_line));
  }
  // stod accepts leading junk-free prefixes; insist the whole cell parsed.
  while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
  if (used != cell.size())
    throw std::runtime_error(std::string(what) + ": non-numeric cell at line " + std::to_string(file_line));
  if (!std::isfinite(v))
    throw std::runtime_error(std::string(what) + ": non-finite value at line " + std::to_string(file_line));
  return v;
}

}  // namespace data_detail

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  auto header = data_detail::split_csv_line(line);
  bool labeled = !header.empty() && header.back() == "label";
  int dim = static_cast<int>(header.size()) - (labeled ? 1 : 0);
  if (dim < 1) throw std::runtime_error("load_csv: header has no feature columns in " + path);
  for (int c = 0; c < dim; ++c)
    if (header[c] != "f" + std::to_string(c))
      throw std::runtime_error("load_csv: expected header column f" + std::to_string(c) + " in " + path);

  std::vector<double> flat;
  std::vector<int> labels;
  int file_line = 1;
  while (std::getline(in, line)) {
    ++file_line;
    if (line.empty()) continue;
    auto cells = data_detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != static_cast<int>(header.size()))
      throw std::runtime_error("load_csv: ragged row at line " + std::to_string(file_line));
    for (int c = 0; c < dim; ++c) flat.push_back(data_detail::parse_cell(cells[c], file_line, "load_csv"));
    if (labeled) {
      double l = data_detail::parse_cell(cells[dim], file_line, "load_csv");
      if (l != std::floor(l) || l < 0)
        throw std::runtime_error("load_csv: label must be a non-negative integer at line " +
                                 std::to_string(file_line));
      labels.push_back(static_cast<int>(l));
    }
  }
  int n = static_cast<int>(flat.size()) / dim;
  Dataset out{DenseArray(n, dim), std::move(labels), path, 0};
  out.features.data = std::move(flat);
  data_detail::validate(out, "load_csv");
  return out;
}

// Binary layout: magic "GEMD", u32 N, u32 D, u8 has_labels, N*D
// little-endian f64 features, then N i32 labels when flagged.
inline void save_binary(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_binary: cannot open " + path);
  out.write("GEMD", 4);
  std::uint32_t n = static_cast<std::uint32_t>(d.size()), dim = static_cast<std::uint32_t>(d.dim());
  std::uint8_t labeled = d.has_labels() ? 1 : 0;
  out.write(reinterpret_cast<const char*>(&n), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(&labeled), 1);
  out.write(reinterpret_cast<const char*>(d.features.data.data()),
            static_cast<std::streamsize>(d.features.data.size() * sizeof(double)));
  if (labeled)
    for (int l : d.labels) {
      std::int32_t v = l;
      out.write(reinterpret_cast<const char*>(&v), 4);
    }
  if (!out) throw std::runtime_error("save_binary: write failed for " + path);
}

inline Dataset load_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_binary: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "GEMD") throw std::runtime_error("load_binary: bad magic in " + path);
  std::uint32_t n = 0, dim = 0;
  std::uint8_t labeled = 0;
  in.read(reinterpret_cast<char*>(&n), 4);
  in.read(reinterpret_cast<char*>(&dim), 4);
  in.read(reinterpret_cast<char*>(&labeled), 1);
  if (!in || dim == 0) throw std::runtime_error("load_binary: bad header in " + path);
  Dataset out{DenseArray(static_cast<int>(n), static_cast<int>(dim)), {}, path, 0};
  in.read(reinterpret_cast<char*>(out.features.data.data()),
          static_cast<std::streamsize>(out.features.data.size() * sizeof(double)));
  if (!in) throw std::runtime_error("load_binary: feature block shorter than header claims in " + path);
  if (labeled) {
    out.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      std::int32_t v;
      in.read(reinterpret_cast<char*>(&v), 4);
      if (!in) throw std::runtime_error("load_binary: label block shorter than header claims in " + path);
      out.labels[i] = v;
    }
  }
  in.peek();
  if (!in.eof()) throw std::runtime_error("load_binary: trailing bytes after payload in " + path);
  data_detail::validate(out, "load_binary");
  return out;
}

inline void save_dataset(const Dataset& d, const std::string& path, FileFormat format) {
  format == FileFormat::Csv ? save_csv(d, path) : save_binary(d, path);
}

inline Dataset load_dataset(const std::string& path, FileFormat format) {
  return format == FileFormat::Csv ? load_csv(path) : load_binary(path);
}

}  // namespace gemini
