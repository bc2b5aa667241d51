// Copyright 2026 The mtsf-smoothing Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include "mtsf/forest.hpp"
#include "mtsf/graph.hpp"
#include "mtsf/random.hpp"
#include "mtsf/sampler.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mtsf {

enum class EstimatorKind { kTilde, kBar, kHat };

inline std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kTilde: return "tilde";
    case EstimatorKind::kBar: return "bar";
    case EstimatorKind::kHat: return "hat";
  }
  return "?";
}

inline EstimatorKind parse_estimator_kind(std::string_view s) {
  if (s == "tilde") return EstimatorKind::kTilde;
  if (s == "bar") return EstimatorKind::kBar;
  if (s == "hat") return EstimatorKind::kHat;
  throw std::invalid_argument("unknown estimator kind '" + std::string(s) + "'");
}

/// Target f_o = (L + Q)^{-1} Q g. Holds a non-owning reference to the graph.
class SmoothingProblem {
 public:
  SmoothingProblem(const ConnectionGraph& graph, ComplexSignal g, NodeWeights q)
      : graph_(&graph), g_(std::move(g)), q_(std::move(q)) {
    check_signal(graph, g_);
    if (q_.size() != graph.n_nodes()) {
      throw std::invalid_argument("node weights size does not match graph");
    }
  }

  const ConnectionGraph& graph() const { return *graph_; }
  const ComplexSignal& signal() const { return g_; }
  const NodeWeights& q() const { return q_; }

 private:
  const ConnectionGraph* graph_;
  ComplexSignal g_;
  NodeWeights q_;
};

struct EstimateResult {
  ComplexSignal estimate;
  Eigen::VectorXd per_node_sample_variance;
  std::size_t m_used = 0;
  EstimatorKind estimator_kind = EstimatorKind::kTilde;
  double wall_time = 0.0;  // seconds
};

namespace detail {
inline void check_forest(const Mtsf& phi, const SmoothingProblem& p) {
  if (phi.n_nodes() != p.graph().n_nodes()) {
    throw std::invalid_argument("forest was not sampled on this graph");
  }
}
}  // namespace detail

/// Propagates the root value through the tree: psi_{r->v} g(r); zero on unicycles.
inline ComplexSignal estimate_tilde(const Mtsf& phi, const SmoothingProblem& p) {
  detail::check_forest(phi, p);
  const auto& g = p.signal();
  ComplexSignal out = ComplexSignal::Zero(g.size());
  for (const auto& c : phi.components) {
    if (!c.is_tree()) continue;
    const Complex at_root = g[c.root];
    for (NodeId v : c.nodes) out[v] = phi.root_to_node_phase[v] * at_root;
  }
  return out;
}

/// Rao-Blackwellised estimator: the q-weighted mean of the transported signal
/// over each tree, i.e. the expectation of the tilde estimator over the root
/// position given the unrooted edge set.
///
/// Uses psi_{w->v} = conj(psi_{r->w}) psi_{r->v}, so one accumulation and one
/// propagation pass per tree suffice.
inline ComplexSignal estimate_bar(const Mtsf& phi, const SmoothingProblem& p) {
  detail::check_forest(phi, p);
  const auto& g = p.signal();
  const auto& q = p.q();
  const auto& phase = phi.root_to_node_phase;
  ComplexSignal out = ComplexSignal::Zero(g.size());
  for (const auto& c : phi.components) {
    if (!c.is_tree()) continue;
    Complex num{0.0, 0.0};
    double den = 0.0;
    for (NodeId w : c.nodes) {
      num += q[w] * std::conj(phase[w]) * g[w];
      den += q[w];
    }
    const Complex h = num / den;
    for (NodeId v : c.nodes) out[v] = phase[v] * h;
  }
  return out;
}

/// Largest alpha for which the control variate provably lowers variance when
/// Q = qI: 2q / (q + 2 d_max).
inline double default_alpha(double q, double d_max) {
  if (!(q > 0.0)) throw std::invalid_argument("default_alpha: q must be positive");
  if (d_max < 0.0) throw std::invalid_argument("default_alpha: d_max must be nonnegative");
  return 2.0 * q / (q + 2.0 * d_max);
}

/// Control-variate correction f_bar - alpha (Q^{-1}(L + Q) f_bar - g).
///
/// The variance guarantee only holds for uniform q, so non-uniform weights are
/// rejected unless `allow_nonuniform` is set (the normalized-Laplacian mode).
inline ComplexSignal estimate_hat(const ComplexSignal& f_bar, const SmoothingProblem& p,
                                  double alpha, bool allow_nonuniform = false) {
  check_signal(p.graph(), f_bar);
  if (!p.q().is_uniform() && !allow_nonuniform) {
    throw std::invalid_argument("estimate_hat: node weights are not uniform");
  }
  const ComplexSignal lf = apply_laplacian(p.graph(), f_bar);
  ComplexSignal out(f_bar.size());
  for (Eigen::Index v = 0; v < f_bar.size(); ++v) {
    const Complex residual = lf[v] / p.q()[v] + f_bar[v] - p.signal()[v];
    out[v] = f_bar[v] - alpha * residual;
  }
  return out;
}

struct SmoothOptions {
  unsigned workers = 1;
  /// Defaults to default_alpha(q, d_max) for uniform q.
  std::optional<double> alpha;
  /// Lets the hat estimator run with non-uniform q (needs an explicit alpha).
  bool allow_nonuniform_hat = false;
};

namespace detail {

/// Streaming mean / sum of squared deviations, mergeable in a fixed order.
struct MomentAccumulator {
  std::size_t count = 0;
  ComplexSignal mean;
  Eigen::VectorXd m2;

  explicit MomentAccumulator(Eigen::Index n)
      : mean(ComplexSignal::Zero(n)), m2(Eigen::VectorXd::Zero(n)) {}

  void add(const ComplexSignal& x) {
    ++count;
    const ComplexSignal delta = x - mean;
    mean += delta / static_cast<double>(count);
    m2.array() += (delta.array().conjugate() * (x - mean).array()).real();
  }

  void merge(const MomentAccumulator& other) {
    if (other.count == 0) return;
    if (count == 0) {
      *this = other;
      return;
    }
    const double na = static_cast<double>(count);
    const double nb = static_cast<double>(other.count);
    const ComplexSignal delta = other.mean - mean;
    mean += delta * (nb / (na + nb));
    m2 += other.m2 + delta.cwiseAbs2() * (na * nb / (na + nb));
    count += other.count;
  }

  Eigen::VectorXd sample_variance() const {
    if (count < 2) return Eigen::VectorXd::Zero(m2.size());
    return (m2 / static_cast<double>(count - 1)).cwiseMax(0.0);
  }
};

inline constexpr std::size_t kReductionBlock = 32;

inline double resolve_alpha(const SmoothingProblem& p, EstimatorKind kind,
                            const SmoothOptions& opts) {
  if (kind != EstimatorKind::kHat) return 0.0;
  if (opts.alpha) return *opts.alpha;
  if (!p.q().is_uniform()) {
    throw std::invalid_argument("hat estimator with non-uniform q needs an explicit alpha");
  }
  return default_alpha(p.q()[0], p.graph().max_degree());
}

inline ComplexSignal single_estimate(const Mtsf& phi, const SmoothingProblem& p, EstimatorKind kind,
                                     double alpha, bool allow_nonuniform) {
  switch (kind) {
    case EstimatorKind::kTilde: return estimate_tilde(phi, p);
    case EstimatorKind::kBar: return estimate_bar(phi, p);
    case EstimatorKind::kHat:
      return estimate_hat(estimate_bar(phi, p), p, alpha, allow_nonuniform);
  }
  throw std::logic_error("unreachable");
}

inline EstimateResult finish(const MomentAccumulator& acc, EstimatorKind kind,
                             std::chrono::steady_clock::time_point t0) {
  EstimateResult r;
  r.estimate = acc.mean;
  r.per_node_sample_variance = acc.sample_variance();
  r.m_used = acc.count;
  r.estimator_kind = kind;
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace detail

/// Monte-Carlo average of `m` single-forest estimates. Forest i is drawn with
/// seed derive_seed(seed, i); partial sums are merged block by block in index
/// order, so the result is identical for any worker count.
inline EstimateResult smooth(const SmoothingProblem& p, EstimatorKind kind, std::size_t m,
                             std::uint64_t seed, const SmoothOptions& opts = {}) {
  if (m == 0) throw std::invalid_argument("smooth: m must be at least 1");
  const auto t0 = std::chrono::steady_clock::now();
  const auto n = static_cast<Eigen::Index>(p.graph().n_nodes());
  const double alpha = detail::resolve_alpha(p, kind, opts);

  if (p.signal().isZero(0.0)) {
    return detail::finish(detail::MomentAccumulator(n), kind, t0);
  }

  const std::size_t n_blocks = (m + detail::kReductionBlock - 1) / detail::kReductionBlock;
  std::vector<detail::MomentAccumulator> blocks(n_blocks, detail::MomentAccumulator(n));
  detail::parallel_draws(
      p.graph(), p.q(), n_blocks, opts.workers, [&](std::size_t b, detail::ForestWalker& walker) {
        const std::size_t end = std::min(m, (b + 1) * detail::kReductionBlock);
        for (std::size_t i = b * detail::kReductionBlock; i < end; ++i) {
          Rng rng(derive_seed(seed, i));
          const Mtsf phi = walker.draw(rng);
          blocks[b].add(detail::single_estimate(phi, p, kind, alpha, opts.allow_nonuniform_hat));
        }
      });
  detail::MomentAccumulator total(n);
  for (const auto& b : blocks) total.merge(b);
  return detail::finish(total, kind, t0);
}

/// Same averaging over forests the caller already drew.
inline EstimateResult smooth_with_forests(const SmoothingProblem& p, EstimatorKind kind,
                                          std::span<const Mtsf> forests,
                                          const SmoothOptions& opts = {}) {
  if (forests.empty()) throw std::invalid_argument("smooth_with_forests: no forests");
  const auto t0 = std::chrono::steady_clock::now();
  const double alpha = detail::resolve_alpha(p, kind, opts);
  detail::MomentAccumulator acc(p.signal().size());
  for (const auto& phi : forests) {
    acc.add(detail::single_estimate(phi, p, kind, alpha, opts.allow_nonuniform_hat));
  }
  return detail::finish(acc, kind, t0);
}

// ---------------------------------------------------------------------------
// Normalized-Laplacian mode.
//
// q (L~ + qI)^{-1} x with L~ = D^{-1/2} L D^{-1/2} equals
// D^{1/2} (L + qD)^{-1} (qD) D^{-1/2} x, so the estimators run unchanged with
// node weights q d_v on the signal D^{-1/2} x.

class NormalizedResolvent {
 public:
  NormalizedResolvent(const ConnectionGraph& g, double q) : graph_(&g), q_(q) {
    if (!(q > 0.0)) throw std::invalid_argument("q must be positive");
    std::vector<double> w(g.n_nodes());
    sqrt_degree_.resize(static_cast<Eigen::Index>(g.n_nodes()));
    for (NodeId v = 0; v < g.n_nodes(); ++v) {
      const double d = g.degree(v);
      if (!(d > 0.0)) {
        throw std::invalid_argument("normalized mode needs every node to have an edge (node " +
                                    std::to_string(v) + " is isolated)");
      }
      w[v] = q * d;
      sqrt_degree_[v] = std::sqrt(d);
    }
    weights_ = NodeWeights(std::move(w));
  }

  const ConnectionGraph& graph() const { return *graph_; }
  const NodeWeights& node_weights() const { return weights_; }
  double q() const { return q_; }

  /// Control-variate step: lambda_max(D^{-1} L) <= 2 plays the role of 2 d_max.
  double alpha() const { return 2.0 * q_ / (q_ + 2.0); }

  SmoothOptions options(unsigned workers = 1) const {
    SmoothOptions o;
    o.workers = workers;
    o.alpha = alpha();
    o.allow_nonuniform_hat = true;
    return o;
  }

  SmoothingProblem problem_for(const ComplexSignal& x) const {
    check_signal(*graph_, x);
    return SmoothingProblem(*graph_, x.cwiseQuotient(sqrt_degree_.cast<Complex>()), weights_);
  }

  EstimateResult apply(const ComplexSignal& x, EstimatorKind kind, std::size_t m,
                       std::uint64_t seed, unsigned workers = 1) const {
    return rescale(smooth(problem_for(x), kind, m, seed, options(workers)));
  }

  EstimateResult apply(const ComplexSignal& x, EstimatorKind kind,
                       std::span<const Mtsf> forests) const {
    return rescale(smooth_with_forests(problem_for(x), kind, forests, options()));
  }

  std::vector<Mtsf> draw_forests(std::size_t m, std::uint64_t seed, unsigned workers = 1) const {
    return sample_batch(*graph_, SamplerConfig{seed, weights_}, m, workers);
  }

 private:
  EstimateResult rescale(EstimateResult r) const {
    r.estimate = r.estimate.cwiseProduct(sqrt_degree_.cast<Complex>());
    r.per_node_sample_variance = r.per_node_sample_variance.cwiseProduct(sqrt_degree_.cwiseAbs2());
    return r;
  }

  const ConnectionGraph* graph_;
  double q_;
  NodeWeights weights_;
  Eigen::VectorXd sqrt_degree_;
};

/// CSV body "node,re_estimate,im_estimate,variance".
inline void write_estimate_csv(std::ostream& out, const EstimateResult& r) {
  out << "node,re_estimate,im_estimate,variance\n";
  for (Eigen::Index v = 0; v < r.estimate.size(); ++v) {
    out << v << ',' << detail::format_real(r.estimate[v].real()) << ','
        << detail::format_real(r.estimate[v].imag()) << ','
        << detail::format_real(r.per_node_sample_variance[v]) << '\n';
  }
}

}  // namespace mtsf
