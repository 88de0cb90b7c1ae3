#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gemini {

// Dense row-major matrix of doubles. Vectors are represented as 1xC or Rx1.
struct DenseArray {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  DenseArray() = default;
  DenseArray(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("DenseArray: negative shape");
  }

  static DenseArray from_rows(std::initializer_list<std::initializer_list<double>> rs) {
    DenseArray a(static_cast<int>(rs.size()), rs.size() ? static_cast<int>(rs.begin()->size()) : 0);
    int i = 0;
    for (const auto& r : rs) {
      if (static_cast<int>(r.size()) != a.cols) throw std::invalid_argument("DenseArray: ragged rows");
      int j = 0;
      for (double v : r) a.at(i, j++) = v;
      ++i;
    }
    return a;
  }

  static DenseArray from_rows(const std::vector<std::vector<double>>& rs) {
    DenseArray a(static_cast<int>(rs.size()), rs.empty() ? 0 : static_cast<int>(rs.front().size()));
    for (int i = 0; i < a.rows; ++i) {
      if (static_cast<int>(rs[i].size()) != a.cols) throw std::invalid_argument("DenseArray: ragged rows");
      for (int j = 0; j < a.cols; ++j) a.at(i, j) = rs[i][j];
    }
    return a;
  }

  static DenseArray row_vector(const std::vector<double>& v) {
    DenseArray a(1, static_cast<int>(v.size()));
    a.data = v;
    return a;
  }

  static DenseArray col_vector(const std::vector<double>& v) {
    DenseArray a(static_cast<int>(v.size()), 1);
    a.data = v;
    return a;
  }

  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  int size() const { return rows * cols; }
  bool same_shape(const DenseArray& o) const { return rows == o.rows && cols == o.cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  double scalar() const {
    if (!is_scalar()) throw std::logic_error("DenseArray: scalar() on non 1x1");
    return data[0];
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::string shape_str() const { return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")"; }
};

inline DenseArray rows_subset(const DenseArray& a, std::span<const int> idx) {
  DenseArray out(static_cast<int>(idx.size()), a.cols);
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= a.rows) throw std::out_of_range("rows_subset: row index out of range");
    for (int c = 0; c < a.cols; ++c) out.at(static_cast<int>(r), c) = a.at(idx[r], c);
  }
  return out;
}

inline DenseArray transpose(const DenseArray& a) {
  DenseArray t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// C = A * B, cache-friendly ikj order.
inline DenseArray matmul(const DenseArray& a, const DenseArray& b) {
  if (a.cols != b.rows)
    throw std::invalid_argument("matmul: shape mismatch " + a.shape_str() + " x " + b.shape_str());
  DenseArray c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + static_cast<size_t>(i) * a.cols;
    double* crow = c.data.data() + static_cast<size_t>(i) * b.cols;
    for (int k = 0; k < a.cols; ++k) {
      double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + static_cast<size_t>(k) * b.cols;
      for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline double squared_distance(const DenseArray& x, int i, int j) {
  double s = 0.0;
  for (int d = 0; d < x.cols; ++d) {
    double diff = x.at(i, d) - x.at(j, d);
    s += diff * diff;
  }
  return s;
}

}  // namespace gemini
