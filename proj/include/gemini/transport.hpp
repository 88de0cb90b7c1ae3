#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"
#include "gemini/geometry.hpp"

// Exact earth mover's distance between two discrete measures supported on the
// same batch, solved as a dense transportation problem by the network simplex
// method. The basis is a spanning tree over sources and sinks, maintained
// through parent/depth arrays so a pivot touches only the entering cycle and
// the detached subtree. Pivots price arcs in cyclic blocks (most negative
// reduced cost within a block) and fall back to Bland's smallest-index rule
// whenever a run of degenerate pivots stalls, which guarantees termination.
namespace gemini {

struct DiscreteMeasure {
  std::vector<double> weights;

  void validate(double tol = 1e-9) const {
    double sum = 0.0;
    for (double w : weights) {
      if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("DiscreteMeasure: weights must be finite and nonnegative");
      sum += w;
    }
    if (weights.empty() || std::abs(sum - 1.0) > tol)
      throw std::invalid_argument("DiscreteMeasure: weights must sum to 1 (got " + std::to_string(sum) + ")");
  }
};

struct TransportPlan {
  DenseArray plan;  // BxB coupling
  double cost_value = 0.0;
  std::vector<double> dual_u, dual_v;  // dual_u normalised to sum 0
};

namespace emd_detail {

struct BasicArc {
  int i, j;
  double flow;
};

struct Solution {
  double cost = 0.0;
  std::vector<double> u, v;
  std::vector<BasicArc> basis;
};

// Transportation simplex state. Node ids: sources are 0..n-1, sinks n..n+m-1.
class Solver {
 public:
  Solver(std::span<const double> p, std::span<const double> q, const DenseArray& c)
      : n_(static_cast<int>(p.size())), m_(static_cast<int>(q.size())), c_(c) {
    if (c.rows != n_ || c.cols != m_) throw std::invalid_argument("emd: cost shape does not match measures");
    double cmax = 1.0;
    for (double v : c.data) cmax = std::max(cmax, std::abs(v));
    tol_ = 1e-11 * cmax;
    flow_.assign(static_cast<size_t>(n_) * m_, 0.0);
    basic_.assign(static_cast<size_t>(n_) * m_, 0);
    adj_.assign(n_ + m_, {});
    u_.assign(n_, 0.0);
    v_.assign(m_, 0.0);
    parent_.assign(n_ + m_, -1);
    parent_arc_.assign(n_ + m_, -1);
    depth_.assign(n_ + m_, 0);
    northwest_corner(p, q);
    init_tree();
  }

  Solution run() {
    const long max_pivots = 20000 + 400L * (n_ + m_);
    int cursor = 0;
    const int block = std::max(64, static_cast<int>(std::sqrt(static_cast<double>(n_) * m_)));
    // Long degenerate runs are normal here (nearly equal measures produce
    // thousands of zero-ish pivots), so the Bland fallback only engages after
    // a streak far beyond what terminating runs exhibit in practice; it is an
    // anti-cycling parachute, not a pricing strategy.
    const int stall_limit = 50 * (n_ + m_);
    int stall = 0;
    bool bland = false;
    for (long pivot = 0; pivot < max_pivots; ++pivot) {
      int enter = bland ? find_entering_bland() : find_entering_block(cursor, block);
      if (enter < 0) return finish();
      double delta = pivot_on(enter);
      if (delta > tol_) {
        stall = 0;
        bland = false;
      } else if (++stall > stall_limit) {
        bland = true;
      }
    }
    throw std::runtime_error("emd: pivot limit exceeded");
  }

 private:
  int arc_id(int i, int j) const { return i * m_ + j; }

  void add_basic(int i, int j, double f) {
    int a = arc_id(i, j);
    basic_[a] = 1;
    flow_[a] = f;
    adj_[i].push_back(a);
    adj_[n_ + j].push_back(a);
  }

  void drop_basic(int a) {
    basic_[a] = 0;
    flow_[a] = 0.0;
    auto remove = [&](int node) {
      auto& list = adj_[node];
      list.erase(std::find(list.begin(), list.end(), a));
    };
    remove(a / m_);
    remove(n_ + a % m_);
  }

  // Classic initial basis: exactly n+m-1 arcs, degenerate zeros included.
  void northwest_corner(std::span<const double> p, std::span<const double> q) {
    std::vector<double> a(p.begin(), p.end()), b(q.begin(), q.end());
    int i = 0, j = 0;
    while (true) {
      double f = std::min(a[i], b[j]);
      add_basic(i, j, f);
      a[i] -= f;
      b[j] -= f;
      if (i == n_ - 1 && j == m_ - 1) break;
      if (j == m_ - 1 || (a[i] <= b[j] && i < n_ - 1))
        ++i;
      else
        ++j;
    }
  }

  // One-off traversal from the root: parents, depths and duals for the
  // initial basis tree. Later pivots maintain these incrementally.
  void init_tree() {
    stack_.clear();
    stack_.push_back(0);
    parent_[0] = 0;
    u_[0] = 0.0;
    depth_[0] = 0;
    size_t head = 0;
    while (head < stack_.size()) {
      int node = stack_[head++];
      for (int a : adj_[node]) {
        int i = a / m_, j = a % m_;
        int other = (node < n_) ? n_ + j : i;
        if (other == parent_[node] && a == parent_arc_[node]) continue;
        if (parent_[other] >= 0 && other != 0) continue;
        if (other == 0) continue;
        parent_[other] = node;
        parent_arc_[other] = a;
        depth_[other] = depth_[node] + 1;
        if (node < n_)
          v_[j] = c_.at(i, j) - u_[i];
        else
          u_[i] = c_.at(i, j) - v_[j];
        stack_.push_back(other);
      }
    }
    if (stack_.size() != static_cast<size_t>(n_ + m_)) throw std::runtime_error("emd: basis tree disconnected");
    parent_[0] = -1;
  }

  double reduced_cost(int a) const { return c_.data[a] - u_[a / m_] - v_[a % m_]; }

  // Most negative reduced cost within successive blocks of a cyclic scan.
  int find_entering_block(int& cursor, int block) {
    int arcs = n_ * m_;
    int best = -1;
    double best_r = -tol_;
    int scanned = 0;
    while (scanned < arcs) {
      int stop = std::min(block, arcs - scanned);
      for (int k = 0; k < stop; ++k) {
        double r = reduced_cost(cursor);
        if (r < best_r && !basic_[cursor]) {
          best_r = r;
          best = cursor;
        }
        if (++cursor == arcs) cursor = 0;
      }
      scanned += stop;
      if (best >= 0) return best;
    }
    return -1;
  }

  int find_entering_bland() {
    int arcs = n_ * m_;
    for (int a = 0; a < arcs; ++a)
      if (!basic_[a] && reduced_cost(a) < -tol_) return a;
    return -1;
  }

  // Pivot: the entering arc closes a unique tree cycle; flow shifts by the
  // bottleneck over the arcs traversed sink-to-source, the bottleneck arc
  // leaves, and the subtree detached by it is re-hung from the entering arc
  // with its duals shifted by the entering arc's reduced cost.
  double pivot_on(int enter) {
    int ei = enter / m_, ej = enter % m_;
    int t = n_ + ej;
    double r = reduced_cost(enter);

    // Climb to the lowest common ancestor. path_e_ holds nodes from the
    // source side (cycle traverses parent->node there), path_t_ from the
    // sink side (cycle traverses node->parent).
    path_e_.clear();
    path_t_.clear();
    int a = ei, b = t;
    while (depth_[a] > depth_[b]) {
      path_e_.push_back(a);
      a = parent_[a];
    }
    while (depth_[b] > depth_[a]) {
      path_t_.push_back(b);
      b = parent_[b];
    }
    while (a != b) {
      path_e_.push_back(a);
      a = parent_[a];
      path_t_.push_back(b);
      b = parent_[b];
    }

    // Bottleneck over reverse arcs; ties resolved to the smallest arc id.
    double delta = std::numeric_limits<double>::infinity();
    int leave = -1;
    bool leave_on_t_side = false;
    auto consider = [&](int node, bool t_side) {
      bool reverse = t_side ? (node >= n_) : (node < n_);
      if (!reverse) return;
      int arc = parent_arc_[node];
      double f = flow_[arc];
      if (f < delta - 1e-15 || (std::abs(f - delta) <= 1e-15 && (leave < 0 || arc < leave))) {
        delta = f;
        leave = arc;
        leave_on_t_side = t_side;
      }
    };
    for (int node : path_t_) consider(node, true);
    for (int node : path_e_) consider(node, false);
    if (leave < 0) throw std::runtime_error("emd: cycle without reverse arc");

    for (int node : path_t_) flow_[parent_arc_[node]] += (node >= n_) ? -delta : delta;
    for (int node : path_e_) flow_[parent_arc_[node]] += (node < n_) ? -delta : delta;
    add_basic(ei, ej, delta);
    drop_basic(leave);

    // Re-root the detached side at the entering arc's endpoint inside it and
    // shift its duals so the entering arc prices to zero.
    int e_det = leave_on_t_side ? t : ei;
    int e_root = leave_on_t_side ? ei : t;
    double du, dv;
    if (e_det >= n_) {
      dv = r;
      du = -r;
    } else {
      du = r;
      dv = -r;
    }
    parent_[e_det] = e_root;
    parent_arc_[e_det] = enter;
    depth_[e_det] = depth_[e_root] + 1;
    if (e_det >= n_)
      v_[e_det - n_] += dv;
    else
      u_[e_det] += du;
    stack_.clear();
    stack_.push_back(e_det);
    size_t head = 0;
    while (head < stack_.size()) {
      int node = stack_[head++];
      for (int arc : adj_[node]) {
        if (arc == parent_arc_[node]) continue;
        int other = (node < n_) ? n_ + arc % m_ : arc / m_;
        if (other == parent_[node]) continue;
        parent_[other] = node;
        parent_arc_[other] = arc;
        depth_[other] = depth_[node] + 1;
        if (other >= n_)
          v_[other - n_] += dv;
        else
          u_[other] += du;
        stack_.push_back(other);
      }
    }
    return delta;
  }

  Solution finish() {
    Solution s;
    s.u = u_;
    s.v = v_;
    double shift = 0.0;
    for (double ui : s.u) shift += ui;
    shift /= n_;
    for (double& ui : s.u) ui -= shift;
    for (double& vj : s.v) vj += shift;
    for (int a = 0; a < n_ * m_; ++a)
      if (basic_[a]) {
        s.basis.push_back({a / m_, a % m_, flow_[a]});
        s.cost += flow_[a] * c_.data[a];
      }
    return s;
  }

  int n_, m_;
  const DenseArray& c_;
  double tol_;
  std::vector<double> flow_, u_, v_;
  std::vector<char> basic_;
  std::vector<std::vector<int>> adj_;
  std::vector<int> parent_, parent_arc_, depth_;
  std::vector<int> stack_, path_e_, path_t_;
};

inline Solution solve(std::span<const double> p, std::span<const double> q, const DenseArray& c) {
  // Identical measures over a zero-diagonal nonnegative cost stay in place.
  if (p.size() == q.size()) {
    bool same = std::memcmp(p.data(), q.data(), p.size() * sizeof(double)) == 0;
    if (same) {
      bool trivial = true;
      for (int i = 0; trivial && i < c.rows; ++i) {
        if (c.at(i, i) != 0.0) trivial = false;
        for (int j = 0; trivial && j < c.cols; ++j)
          if (c.at(i, j) < 0.0) trivial = false;
      }
      if (trivial) {
        Solution s;
        s.u.assign(p.size(), 0.0);
        s.v.assign(q.size(), 0.0);
        for (int i = 0; i < static_cast<int>(p.size()); ++i) s.basis.push_back({i, i, p[i]});
        return s;
      }
    }
  }
  return Solver(p, q, c).run();
}

}  // namespace emd_detail

inline TransportPlan emd(const DiscreteMeasure& a, const DiscreteMeasure& b, const CostMatrix& cost) {
  a.validate();
  b.validate();
  auto sol = emd_detail::solve(a.weights, b.weights, cost.m);
  TransportPlan plan;
  plan.plan = DenseArray(static_cast<int>(a.weights.size()), static_cast<int>(b.weights.size()));
  for (const auto& arc : sol.basis) plan.plan.at(arc.i, arc.j) = arc.flow;
  plan.cost_value = sol.cost;
  plan.dual_u = std::move(sol.u);
  plan.dual_v = std::move(sol.v);
  return plan;
}

// Gradient of the transport cost w.r.t. the two weight vectors: the optimal
// dual potentials, meaningful as directions tangent to the simplex (adding a
// constant to u and subtracting it from v leaves the objective unchanged).
inline std::pair<std::vector<double>, std::vector<double>> emd_gradient_wrt_weights(
    const DiscreteMeasure& a, const DiscreteMeasure& b, const CostMatrix& cost) {
  a.validate();
  b.validate();
  auto sol = emd_detail::solve(a.weights, b.weights, cost.m);
  return {std::move(sol.u), std::move(sol.v)};
}

}  // namespace gemini
