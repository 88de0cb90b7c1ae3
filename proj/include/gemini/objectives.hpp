#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "gemini/array.hpp"
#include "gemini/autodiff.hpp"
#include "gemini/geometry.hpp"
#include "gemini/models.hpp"
#include "gemini/transport.hpp"

// The clustering objectives: differentiable scalars measuring how far the
// cluster-conditional data distributions sit from the data distribution
// (one-vs-all) or from each other (one-vs-one), estimated on a batch of soft
// assignments. Three families: f-divergences (KL, total variation, squared
// Hellinger) need no geometry; MMD needs a kernel; Wasserstein needs a ground
// cost and goes through the exact transport solver. All are maximised.
namespace gemini {

enum class Distance { KL, TV, SquaredHellinger, MMD, Wasserstein };
enum class Mode { OvA, OvO };

struct GeminiSpec {
  Distance distance;
  Mode mode;
};

inline bool needs_kernel(const GeminiSpec& s) { return s.distance == Distance::MMD; }
inline bool needs_cost(const GeminiSpec& s) { return s.distance == Distance::Wasserstein; }

namespace obj_detail {

// Batch cluster proportions on the tape. The raw version weights terms (an
// empty cluster then contributes exactly zero); the clamped version is the
// only one ever used as a divisor or inside a log.
struct Proportions {
  ad::Var raw;      // 1xK
  ad::Var clamped;  // 1xK, entries >= tape eps
};

inline Proportions proportions(ad::Var posterior) {
  Proportions p;
  p.raw = ad::mean_cols(posterior);
  p.clamped = ad::max_clamp(p.raw, posterior.node->tape->eps());
  return p;
}

inline void check_batch(const PosteriorBatch& p) {
  if (p.matrix.node == nullptr || p.matrix.rows() == 0) throw std::invalid_argument("gemini objective: empty batch");
}

// Transport cost as a tape node. The solve runs eagerly; the dual potentials
// are the local partials with respect to the two weight vectors. Constant
// shifts in the duals are annihilated by the normalisation that produced the
// weights, so no extra centering is needed here.
inline ad::Var emd_pair_node(ad::Var wa, ad::Var wb, const DenseArray& cost) {
  DiscreteMeasure ma{wa.value().data}, mb{wb.value().data};
  ma.validate();
  mb.validate();
  auto sol = emd_detail::solve(ma.weights, mb.weights, cost);
  ad::Node* n = wa.node->tape->alloc(DenseArray::from_rows({{sol.cost}}), "emd");
  ad::Node *an = wa.node, *bn = wb.node;
  auto du = std::make_shared<std::vector<double>>(std::move(sol.u));
  auto dv = std::make_shared<std::vector<double>>(std::move(sol.v));
  n->backprop = [an, bn, du, dv](ad::Node& self) {
    double g = self.grad.data[0];
    DenseArray& da = ad::ensure_grad(an);
    for (size_t i = 0; i < du->size(); ++i) da.data[i] += g * (*du)[i];
    DenseArray& db = ad::ensure_grad(bn);
    for (size_t i = 0; i < dv->size(); ++i) db.data[i] += g * (*dv)[i];
  };
  return ad::Var{n};
}

inline ad::Var emd_to_uniform_node(ad::Var w, const DenseArray& cost) {
  int b = w.rows();
  DiscreteMeasure mw{w.value().data}, uniform{std::vector<double>(b, 1.0 / b)};
  mw.validate();
  auto sol = emd_detail::solve(mw.weights, uniform.weights, cost);
  ad::Node* n = w.node->tape->alloc(DenseArray::from_rows({{sol.cost}}), "emd");
  ad::Node* wn = w.node;
  auto duals = std::make_shared<std::vector<double>>(std::move(sol.u));
  n->backprop = [wn, duals](ad::Node& self) {
    double g = self.grad.data[0];
    DenseArray& dw = ad::ensure_grad(wn);
    for (size_t i = 0; i < duals->size(); ++i) dw.data[i] += g * (*duals)[i];
  };
  return ad::Var{n};
}

}  // namespace obj_detail

inline ad::Var eval_f_divergence(const PosteriorBatch& p, GeminiSpec spec) {
  obj_detail::check_batch(p);
  ad::Var P = p.matrix;
  const int b = P.rows(), k = P.cols();
  auto pi = obj_detail::proportions(P);

  switch (spec.distance) {
    case Distance::KL: {
      // mean_x KL(p(.|x) || pi), plus the reverse direction for OvO.
      ad::Var forward = ad::sum_all(ad::mul(P, ad::sub(ad::log(P), ad::log(pi.raw))));
      if (spec.mode == Mode::OvA) return ad::scale(forward, 1.0 / b);
      ad::Var reverse = ad::sum_all(ad::mul(pi.raw, ad::sub(ad::log(pi.raw), ad::log(P))));
      return ad::scale(ad::add(forward, reverse), 1.0 / b);
    }
    case Distance::TV: {
      if (spec.mode == Mode::OvA) return ad::scale(ad::sum_all(ad::abs(ad::sub(P, pi.raw))), 0.5 / b);
      // Half the full double sum over cluster pairs = the upper triangle.
      ad::Var r = ad::div(P, pi.clamped);
      ad::Var total;
      for (int a = 0; a < k; ++a)
        for (int c = a + 1; c < k; ++c) {
          ad::Var weight = ad::mul(ad::col(pi.raw, a), ad::col(pi.raw, c));
          ad::Var gap = ad::mean_all(ad::abs(ad::sub(ad::col(r, a), ad::col(r, c))));
          ad::Var term = ad::mul(weight, gap);
          total = total.node ? ad::add(total, term) : term;
        }
      return total;
    }
    case Distance::SquaredHellinger: {
      if (spec.mode == Mode::OvA) {
        // 1 - mean_x sum_y pi_y sqrt(p/pi)
        ad::Var inner = ad::mul(pi.raw, ad::sqrt(ad::div(P, pi.clamped)));
        return ad::add_scalar(ad::neg(ad::scale(ad::sum_all(inner), 1.0 / b)), 1.0);
      }
      // mean_x Var_pi[sqrt(p/pi)]; the second moment is the posterior row sum.
      ad::Var mean_root = ad::sum_rows(ad::sqrt(ad::mul(P, pi.raw)));
      return ad::mean_all(ad::sub(ad::sum_rows(P), ad::square(mean_root)));
    }
    default:
      throw std::invalid_argument("eval_f_divergence: distance is not an f-divergence");
  }
}

inline ad::Var eval_mmd(const PosteriorBatch& p, const KernelMatrix& kernel, Mode mode) {
  obj_detail::check_batch(p);
  ad::Var P = p.matrix;
  const int b = P.rows(), k = P.cols();
  if (kernel.m.rows != b || kernel.m.cols != b)
    throw std::invalid_argument("eval_mmd: kernel is " + kernel.m.shape_str() + " for a batch of " + std::to_string(b));
  validate_square_symmetric(kernel.m, 1e-9, "eval_mmd kernel");
  ad::Tape& tape = *P.node->tape;
  auto pi = obj_detail::proportions(P);
  ad::Var gram = ad::const_leaf(tape, kernel.m);

  // Column y rescaled to importance weights against the cluster mass, minus
  // the all-ones data weighting: S = (1/B^2) d' K d estimates the squared
  // mean-embedding distance.
  auto ratio = [&](int y) { return ad::div(ad::col(P, y), ad::col(pi.clamped, y)); };
  auto sq_distance = [&](ad::Var d) {
    ad::Var quad = ad::matmul(ad::transpose(d), ad::matmul(gram, d));
    return ad::scale(quad, 1.0 / (static_cast<double>(b) * b));
  };
  auto rooted = [&](ad::Var s) { return ad::sqrt(ad::max_clamp(s, 0.0)); };

  ad::Var total;
  if (mode == Mode::OvA) {
    for (int y = 0; y < k; ++y) {
      ad::Var d = ad::add_scalar(ratio(y), -1.0);
      ad::Var term = ad::mul(ad::col(pi.raw, y), rooted(sq_distance(d)));
      total = total.node ? ad::add(total, term) : term;
    }
  } else {
    std::vector<ad::Var> ratios;
    for (int y = 0; y < k; ++y) ratios.push_back(ratio(y));
    for (int a = 0; a < k; ++a)
      for (int c = a + 1; c < k; ++c) {
        ad::Var d = ad::sub(ratios[a], ratios[c]);
        ad::Var weight = ad::mul(ad::col(pi.raw, a), ad::col(pi.raw, c));
        ad::Var term = ad::scale(ad::mul(weight, rooted(sq_distance(d))), 2.0);
        total = total.node ? ad::add(total, term) : term;
      }
    if (!total.node) return ad::scale(ad::sum_all(P), 0.0);  // K = 1: no pairs
  }
  return total;
}

inline ad::Var eval_wasserstein(const PosteriorBatch& p, const CostMatrix& cost, Mode mode) {
  obj_detail::check_batch(p);
  ad::Var P = p.matrix;
  const int b = P.rows(), k = P.cols();
  if (cost.m.rows != b || cost.m.cols != b)
    throw std::invalid_argument("eval_wasserstein: cost is " + cost.m.shape_str() + " for a batch of " + std::to_string(b));
  ad::Tape& tape = *P.node->tape;
  auto pi = obj_detail::proportions(P);

  // Clusters below the mass floor are skipped entirely; emptying a cluster is
  // legitimate behaviour, not an error.
  std::vector<char> alive(k, 0);
  std::vector<double> mass(k, 0.0);
  for (int i = 0; i < b; ++i)
    for (int y = 0; y < k; ++y) mass[y] += P.value().at(i, y);
  for (int y = 0; y < k; ++y) alive[y] = (mass[y] / b >= tape.eps()) ? 1 : 0;

  ad::Var colsum = ad::sum_cols(P);
  auto dirac = [&](int y) { return ad::div(ad::col(P, y), ad::col(colsum, y)); };

  ad::Var total;
  if (mode == Mode::OvA) {
    for (int y = 0; y < k; ++y) {
      if (!alive[y]) continue;
      ad::Var term = ad::mul(ad::col(pi.raw, y), obj_detail::emd_to_uniform_node(dirac(y), cost.m));
      total = total.node ? ad::add(total, term) : term;
    }
  } else {
    std::vector<ad::Var> diracs(k);
    for (int y = 0; y < k; ++y)
      if (alive[y]) diracs[y] = dirac(y);
    for (int a = 0; a < k; ++a)
      for (int c = a + 1; c < k; ++c) {
        if (!alive[a] || !alive[c]) continue;
        ad::Var weight = ad::mul(ad::col(pi.raw, a), ad::col(pi.raw, c));
        ad::Var term = ad::scale(ad::mul(weight, obj_detail::emd_pair_node(diracs[a], diracs[c], cost.m)), 2.0);
        total = total.node ? ad::add(total, term) : term;
      }
  }
  if (!total.node) return ad::scale(ad::sum_all(P), 0.0);  // everything empty or K = 1
  return total;
}

inline ad::Var eval_gemini(const PosteriorBatch& p, GeminiSpec spec, const KernelMatrix* kernel = nullptr,
                           const CostMatrix* cost = nullptr) {
  if (needs_kernel(spec)) {
    if (!kernel) throw std::invalid_argument("eval_gemini: MMD needs a kernel matrix");
    return eval_mmd(p, *kernel, spec.mode);
  }
  if (needs_cost(spec)) {
    if (!cost) throw std::invalid_argument("eval_gemini: Wasserstein needs a cost matrix");
    return eval_wasserstein(p, *cost, spec.mode);
  }
  return eval_f_divergence(p, spec);
}

// Plain-number readouts of the per-cluster and per-pair MMD distances, for
// inspecting which clusters an objective can actually tell apart.
inline std::vector<double> mmd_ova_distances(const DenseArray& posterior, const KernelMatrix& kernel) {
  const int b = posterior.rows, k = posterior.cols;
  std::vector<double> pi(k, 0.0);
  for (int i = 0; i < b; ++i)
    for (int y = 0; y < k; ++y) pi[y] += posterior.at(i, y) / b;
  std::vector<double> out(k, 0.0);
  for (int y = 0; y < k; ++y) {
    double denom = std::max(pi[y], 1e-12);
    double s = 0.0;
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < b; ++j)
        s += kernel.m.at(i, j) * (posterior.at(i, y) / denom - 1.0) * (posterior.at(j, y) / denom - 1.0);
    out[y] = std::sqrt(std::max(s / (static_cast<double>(b) * b), 0.0));
  }
  return out;
}

inline DenseArray mmd_ovo_distances(const DenseArray& posterior, const KernelMatrix& kernel) {
  const int b = posterior.rows, k = posterior.cols;
  std::vector<double> pi(k, 0.0);
  for (int i = 0; i < b; ++i)
    for (int y = 0; y < k; ++y) pi[y] += posterior.at(i, y) / b;
  DenseArray out(k, k);
  for (int a = 0; a < k; ++a)
    for (int c = a + 1; c < k; ++c) {
      double da = std::max(pi[a], 1e-12), dc = std::max(pi[c], 1e-12);
      double s = 0.0;
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) {
          double wi = posterior.at(i, a) / da - posterior.at(i, c) / dc;
          double wj = posterior.at(j, a) / da - posterior.at(j, c) / dc;
          s += kernel.m.at(i, j) * wi * wj;
        }
      out.at(a, c) = out.at(c, a) = std::sqrt(std::max(s / (static_cast<double>(b) * b), 0.0));
    }
  return out;
}

}  // namespace gemini
