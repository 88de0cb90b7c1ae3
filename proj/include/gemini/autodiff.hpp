#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"

// Reverse-mode automatic differentiation on a dynamic tape. The tape is
// rebuilt for every optimisation step: stage leaves, compose ops, call
// backward() on a scalar root, then read gradients off the leaf nodes.
// Creation order doubles as topological order, so the backward pass is a
// single reverse sweep over the node list.
namespace gemini::ad {

class Tape;

struct Node {
  DenseArray value;
  DenseArray grad;  // allocated on first touch during backward
  Tape* tape = nullptr;
  const char* op = "leaf";
  int idx = -1;
  std::function<void(Node&)> backprop;  // scatters this->grad into parents
};

inline DenseArray& ensure_grad(Node* n) {
  if (n->grad.rows == 0) n->grad = DenseArray(n->value.rows, n->value.cols);
  return n->grad;
}

class Tape {
 public:
  explicit Tape(double eps = 1e-12) : eps_(eps) {}

  Node* alloc(DenseArray value, const char* op) {
    if (!value.all_finite())
      throw std::runtime_error(std::string("autodiff: non-finite values produced by op '") + op + "'");
    auto n = std::make_unique<Node>();
    n->value = std::move(value);
    n->tape = this;
    n->op = op;
    n->idx = static_cast<int>(nodes_.size());
    Node* raw = n.get();
    nodes_.push_back(std::move(n));
    return raw;
  }

  // Seeds root with gradient 1 and sweeps the tape in reverse creation order.
  void backward(Node* root) {
    if (!root || root->tape != this) throw std::invalid_argument("backward: root not on this tape");
    if (!root->value.is_scalar()) throw std::invalid_argument("backward: root must be a 1x1 scalar");
    ensure_grad(root).data[0] = 1.0;
    for (int i = root->idx; i >= 0; --i) {
      Node& n = *nodes_[i];
      if (n.grad.rows != 0 && n.backprop) n.backprop(n);
    }
  }

  double eps() const { return eps_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  std::vector<std::unique_ptr<Node>> nodes_;
  double eps_;
};

// Lightweight handle; the tape owns the node.
struct Var {
  Node* node = nullptr;

  const DenseArray& value() const { return node->value; }
  int rows() const { return node->value.rows; }
  int cols() const { return node->value.cols; }
  double scalar() const { return node->value.scalar(); }

  // Gradient after backward(); zeros if this node never received one.
  DenseArray grad_or_zero() const {
    if (node->grad.rows == 0) return DenseArray(node->value.rows, node->value.cols);
    return node->grad;
  }
};

inline Var leaf(Tape& tape, DenseArray value) { return Var{tape.alloc(std::move(value), "leaf")}; }

// A leaf that never receives gradients; ops that know about it skip the
// accumulation entirely (worthwhile for BxB kernel matrices in matmul).
inline Var const_leaf(Tape& tape, DenseArray value) { return Var{tape.alloc(std::move(value), "const")}; }

inline bool is_const(const Node* n) { return n->op[0] == 'c' && std::strcmp(n->op, "const") == 0; }

namespace detail {

// Elementwise binary ops broadcast a 1x1 scalar, a 1xC row or an Rx1 column
// against an RxC operand (in either argument position).
inline void broadcast_shape(const DenseArray& a, const DenseArray& b, const char* op, int& r, int& c) {
  auto ok = [](int x, int y) { return x == y || x == 1 || y == 1; };
  if (!ok(a.rows, b.rows) || !ok(a.cols, b.cols))
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
  r = std::max(a.rows, b.rows);
  c = std::max(a.cols, b.cols);
}

// Accumulate g (shaped RxC) into the gradient of a node whose value may be
// broadcast along rows and/or columns; broadcast dimensions are summed out.
inline void accum_reduced(Node* n, const DenseArray& g) {
  DenseArray& dst = ensure_grad(n);
  int nr = n->value.rows, nc = n->value.cols;
  for (int i = 0; i < g.rows; ++i)
    for (int j = 0; j < g.cols; ++j) dst.at(nr == 1 ? 0 : i, nc == 1 ? 0 : j) += g.at(i, j);
}

template <class Fwd, class Bwd>
Var unary(Var x, const char* name, Fwd fwd, Bwd bwd) {
  Tape& tape = *x.node->tape;
  const DenseArray& xv = x.node->value;
  DenseArray out(xv.rows, xv.cols);
  for (int i = 0; i < xv.size(); ++i) out.data[i] = fwd(xv.data[i]);
  Node* n = tape.alloc(std::move(out), name);
  Node* xn = x.node;
  n->backprop = [xn, bwd](Node& self) {
    DenseArray& gx = ensure_grad(xn);
    for (int i = 0; i < self.grad.size(); ++i) gx.data[i] += self.grad.data[i] * bwd(xn->value.data[i]);
  };
  return Var{n};
}

}  // namespace detail

inline Var add(Var a, Var b) {
  int r, c;
  detail::broadcast_shape(a.value(), b.value(), "add", r, c);
  const DenseArray &av = a.value(), &bv = b.value();
  DenseArray out(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.at(i, j) = av.at(av.rows == 1 ? 0 : i, av.cols == 1 ? 0 : j) + bv.at(bv.rows == 1 ? 0 : i, bv.cols == 1 ? 0 : j);
  Node* n = a.node->tape->alloc(std::move(out), "add");
  Node *an = a.node, *bn = b.node;
  n->backprop = [an, bn](Node& self) {
    detail::accum_reduced(an, self.grad);
    detail::accum_reduced(bn, self.grad);
  };
  return Var{n};
}

inline Var sub(Var a, Var b) {
  int r, c;
  detail::broadcast_shape(a.value(), b.value(), "sub", r, c);
  const DenseArray &av = a.value(), &bv = b.value();
  DenseArray out(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.at(i, j) = av.at(av.rows == 1 ? 0 : i, av.cols == 1 ? 0 : j) - bv.at(bv.rows == 1 ? 0 : i, bv.cols == 1 ? 0 : j);
  Node* n = a.node->tape->alloc(std::move(out), "sub");
  Node *an = a.node, *bn = b.node;
  n->backprop = [an, bn](Node& self) {
    detail::accum_reduced(an, self.grad);
    DenseArray neg = self.grad;
    for (double& v : neg.data) v = -v;
    detail::accum_reduced(bn, neg);
  };
  return Var{n};
}

inline Var mul(Var a, Var b) {
  int r, c;
  detail::broadcast_shape(a.value(), b.value(), "mul", r, c);
  const DenseArray &av = a.value(), &bv = b.value();
  DenseArray out(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.at(i, j) = av.at(av.rows == 1 ? 0 : i, av.cols == 1 ? 0 : j) * bv.at(bv.rows == 1 ? 0 : i, bv.cols == 1 ? 0 : j);
  Node* n = a.node->tape->alloc(std::move(out), "mul");
  Node *an = a.node, *bn = b.node;
  n->backprop = [an, bn](Node& self) {
    const DenseArray &avv = an->value, &bvv = bn->value;
    DenseArray ga(self.grad.rows, self.grad.cols), gb(self.grad.rows, self.grad.cols);
    for (int i = 0; i < self.grad.rows; ++i)
      for (int j = 0; j < self.grad.cols; ++j) {
        double g = self.grad.at(i, j);
        ga.at(i, j) = g * bvv.at(bvv.rows == 1 ? 0 : i, bvv.cols == 1 ? 0 : j);
        gb.at(i, j) = g * avv.at(avv.rows == 1 ? 0 : i, avv.cols == 1 ? 0 : j);
      }
    detail::accum_reduced(an, ga);
    detail::accum_reduced(bn, gb);
  };
  return Var{n};
}

inline Var div(Var a, Var b) {
  int r, c;
  detail::broadcast_shape(a.value(), b.value(), "div", r, c);
  const DenseArray &av = a.value(), &bv = b.value();
  DenseArray out(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.at(i, j) = av.at(av.rows == 1 ? 0 : i, av.cols == 1 ? 0 : j) / bv.at(bv.rows == 1 ? 0 : i, bv.cols == 1 ? 0 : j);
  Node* n = a.node->tape->alloc(std::move(out), "div");
  Node *an = a.node, *bn = b.node;
  n->backprop = [an, bn](Node& self) {
    const DenseArray &avv = an->value, &bvv = bn->value;
    DenseArray ga(self.grad.rows, self.grad.cols), gb(self.grad.rows, self.grad.cols);
    for (int i = 0; i < self.grad.rows; ++i)
      for (int j = 0; j < self.grad.cols; ++j) {
        double g = self.grad.at(i, j);
        double aij = avv.at(avv.rows == 1 ? 0 : i, avv.cols == 1 ? 0 : j);
        double bij = bvv.at(bvv.rows == 1 ? 0 : i, bvv.cols == 1 ? 0 : j);
        ga.at(i, j) = g / bij;
        gb.at(i, j) = -g * aij / (bij * bij);
      }
    detail::accum_reduced(an, ga);
    detail::accum_reduced(bn, gb);
  };
  return Var{n};
}

inline Var matmul(Var a, Var b) {
  Node* n = a.node->tape->alloc(gemini::matmul(a.value(), b.value()), "matmul");
  Node *an = a.node, *bn = b.node;
  n->backprop = [an, bn](Node& self) {
    if (!is_const(an)) {
      DenseArray ga = gemini::matmul(self.grad, gemini::transpose(bn->value));
      DenseArray& da = ensure_grad(an);
      for (int i = 0; i < da.size(); ++i) da.data[i] += ga.data[i];
    }
    if (!is_const(bn)) {
      DenseArray gb = gemini::matmul(gemini::transpose(an->value), self.grad);
      DenseArray& db = ensure_grad(bn);
      for (int i = 0; i < db.size(); ++i) db.data[i] += gb.data[i];
    }
  };
  return Var{n};
}

inline Var transpose(Var x) {
  Node* n = x.node->tape->alloc(gemini::transpose(x.value()), "transpose");
  Node* xn = x.node;
  n->backprop = [xn](Node& self) {
    DenseArray g = gemini::transpose(self.grad);
    DenseArray& gx = ensure_grad(xn);
    for (int i = 0; i < gx.size(); ++i) gx.data[i] += g.data[i];
  };
  return Var{n};
}

inline Var exp(Var x) {
  Tape& tape = *x.node->tape;
  const DenseArray& xv = x.node->value;
  DenseArray out(xv.rows, xv.cols);
  for (int i = 0; i < xv.size(); ++i) out.data[i] = std::exp(xv.data[i]);
  Node* n = tape.alloc(std::move(out), "exp");
  Node* xn = x.node;
  n->backprop = [n, xn](Node& self) {
    DenseArray& gx = ensure_grad(xn);
    for (int i = 0; i < self.grad.size(); ++i) gx.data[i] += self.grad.data[i] * n->value.data[i];
  };
  return Var{n};
}

// log and sqrt clamp their argument at the tape epsilon; inside the clamped
// region the value is constant, so the gradient there is zero.
inline Var log(Var x) {
  double eps = x.node->tape->eps();
  return detail::unary(
      x, "log", [eps](double v) { return std::log(std::max(v, eps)); },
      [eps](double v) { return v > eps ? 1.0 / v : 0.0; });
}

inline Var sqrt(Var x) {
  double eps = x.node->tape->eps();
  return detail::unary(
      x, "sqrt", [eps](double v) { return std::sqrt(std::max(v, eps)); },
      [eps](double v) { return v > eps ? 0.5 / std::sqrt(v) : 0.0; });
}

inline Var abs(Var x) {
  return detail::unary(
      x, "abs", [](double v) { return std::abs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Var square(Var x) {
  return detail::unary(
      x, "square", [](double v) { return v * v; }, [](double v) { return 2.0 * v; });
}

inline Var pow(Var x, double e) {
  return detail::unary(
      x, "pow", [e](double v) { return std::pow(v, e); },
      [e](double v) { return e * std::pow(v, e - 1.0); });
}

inline Var neg(Var x) {
  return detail::unary(
      x, "neg", [](double v) { return -v; }, [](double) { return -1.0; });
}

inline Var scale(Var x, double c) {
  return detail::unary(
      x, "scale", [c](double v) { return c * v; }, [c](double) { return c; });
}

inline Var add_scalar(Var x, double c) {
  return detail::unary(
      x, "add_scalar", [c](double v) { return v + c; }, [](double) { return 1.0; });
}

// max(x, lo); gradient is zero at and below the bound.
inline Var max_clamp(Var x, double lo) {
  return detail::unary(
      x, "max_clamp", [lo](double v) { return std::max(v, lo); },
      [lo](double v) { return v > lo ? 1.0 : 0.0; });
}

inline Var softmax_rows(Var x) {
  const DenseArray& xv = x.node->value;
  DenseArray out(xv.rows, xv.cols);
  for (int i = 0; i < xv.rows; ++i) {
    double mx = xv.at(i, 0);
    for (int j = 1; j < xv.cols; ++j) mx = std::max(mx, xv.at(i, j));
    double z = 0.0;
    for (int j = 0; j < xv.cols; ++j) z += (out.at(i, j) = std::exp(xv.at(i, j) - mx));
    for (int j = 0; j < xv.cols; ++j) out.at(i, j) /= z;
  }
  Node* n = x.node->tape->alloc(std::move(out), "softmax_rows");
  Node* xn = x.node;
  n->backprop = [n, xn](Node& self) {
    // dz = s .* (g - <g, s>_row)
    DenseArray& gx = ensure_grad(xn);
    const DenseArray& s = n->value;
    for (int i = 0; i < s.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < s.cols; ++j) dot += self.grad.at(i, j) * s.at(i, j);
      for (int j = 0; j < s.cols; ++j) gx.at(i, j) += s.at(i, j) * (self.grad.at(i, j) - dot);
    }
  };
  return Var{n};
}

inline Var sum_all(Var x) {
  const DenseArray& xv = x.node->value;
  double s = 0.0;
  for (double v : xv.data) s += v;
  Node* n = x.node->tape->alloc(DenseArray(1, 1, s), "sum_all");
  Node* xn = x.node;
  n->backprop = [xn](Node& self) {
    double g = self.grad.data[0];
    DenseArray& gx = ensure_grad(xn);
    for (double& v : gx.data) v += g;
  };
  return Var{n};
}

inline Var mean_all(Var x) { return scale(sum_all(x), 1.0 / x.value().size()); }

inline Var sum_rows(Var x) {  // RxC -> Rx1
  const DenseArray& xv = x.node->value;
  DenseArray out(xv.rows, 1);
  for (int i = 0; i < xv.rows; ++i) {
    double s = 0.0;
    for (int j = 0; j < xv.cols; ++j) s += xv.at(i, j);
    out.at(i, 0) = s;
  }
  Node* n = x.node->tape->alloc(std::move(out), "sum_rows");
  Node* xn = x.node;
  n->backprop = [xn](Node& self) {
    DenseArray& gx = ensure_grad(xn);
    for (int i = 0; i < gx.rows; ++i)
      for (int j = 0; j < gx.cols; ++j) gx.at(i, j) += self.grad.at(i, 0);
  };
  return Var{n};
}

inline Var sum_cols(Var x) {  // RxC -> 1xC
  const DenseArray& xv = x.node->value;
  DenseArray out(1, xv.cols);
  for (int j = 0; j < xv.cols; ++j) {
    double s = 0.0;
    for (int i = 0; i < xv.rows; ++i) s += xv.at(i, j);
    out.at(0, j) = s;
  }
  Node* n = x.node->tape->alloc(std::move(out), "sum_cols");
  Node* xn = x.node;
  n->backprop = [xn](Node& self) {
    DenseArray& gx = ensure_grad(xn);
    for (int i = 0; i < gx.rows; ++i)
      for (int j = 0; j < gx.cols; ++j) gx.at(i, j) += self.grad.at(0, j);
  };
  return Var{n};
}

inline Var mean_cols(Var x) { return scale(sum_cols(x), 1.0 / x.value().rows); }

inline Var col(Var x, int k) {  // RxC -> Rx1
  const DenseArray& xv = x.node->value;
  if (k < 0 || k >= xv.cols) throw std::invalid_argument("col: index out of range");
  DenseArray out(xv.rows, 1);
  for (int i = 0; i < xv.rows; ++i) out.at(i, 0) = xv.at(i, k);
  Node* n = x.node->tape->alloc(std::move(out), "col");
  Node* xn = x.node;
  n->backprop = [xn, k](Node& self) {
    DenseArray& gx = ensure_grad(xn);
    for (int i = 0; i < gx.rows; ++i) gx.at(i, k) += self.grad.at(i, 0);
  };
  return Var{n};
}

inline Var row_gather(Var x, std::span<const int> idx) {
  const DenseArray& xv = x.node->value;
  DenseArray out(static_cast<int>(idx.size()), xv.cols);
  for (int i = 0; i < out.rows; ++i) {
    int r = idx[i];
    if (r < 0 || r >= xv.rows) throw std::invalid_argument("row_gather: index out of range");
    for (int j = 0; j < xv.cols; ++j) out.at(i, j) = xv.at(r, j);
  }
  Node* n = x.node->tape->alloc(std::move(out), "row_gather");
  Node* xn = x.node;
  std::vector<int> rows(idx.begin(), idx.end());
  n->backprop = [xn, rows](Node& self) {
    DenseArray& gx = ensure_grad(xn);
    for (int i = 0; i < self.grad.rows; ++i)
      for (int j = 0; j < self.grad.cols; ++j) gx.at(rows[i], j) += self.grad.at(i, j);
  };
  return Var{n};
}

}  // namespace gemini::ad
