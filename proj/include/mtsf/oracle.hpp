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

#include "mtsf/estimators.hpp"
#include "mtsf/forest.hpp"
#include "mtsf/graph.hpp"
#include "mtsf/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtsf {

// Brute-force ground truth for tiny graphs. Everything here is exponential in
// the edge count and exists to check the sampler and the estimators.

inline constexpr std::size_t kOracleMaxNodes = 8;
inline constexpr std::size_t kOracleMaxEdges = 14;

struct CatalogEntry {
  Mtsf forest;
  double weight = 0.0;
  double probability = 0.0;
};

struct MtsfCatalog {
  std::vector<CatalogEntry> entries;
  double partition_value = 0.0;

  /// Entry index by Mtsf::canonical_key().
  std::map<std::vector<std::uint32_t>, std::size_t> index() const {
    std::map<std::vector<std::uint32_t>, std::size_t> idx;
    for (std::size_t i = 0; i < entries.size(); ++i) idx.emplace(entries[i].forest.canonical_key(), i);
    return idx;
  }
};

inline void check_oracle_size(const ConnectionGraph& g) {
  if (g.n_nodes() > kOracleMaxNodes || g.n_edges() > kOracleMaxEdges) {
    throw std::invalid_argument("oracle: graph too large for enumeration (" +
                                std::to_string(g.n_nodes()) + " nodes, " +
                                std::to_string(g.n_edges()) + " edges)");
  }
}

/// Unnormalized weight prod q_r * prod w_e * prod (2 - 2 cos theta_C).
inline double mtsf_weight(const ConnectionGraph& g, const NodeWeights& q, const Mtsf& f) {
  double w = 1.0;
  for (NodeId r : f.roots) w *= q[r];
  for (EdgeId e : f.edges) w *= g.edge(e).weight;
  for (const auto& c : f.components) {
    if (!c.is_tree()) w *= 2.0 - 2.0 * std::cos(c.cycle_phase);
  }
  return w;
}

/// Every rooted multi-type spanning forest with positive weight.
inline MtsfCatalog enumerate_mtsfs(const ConnectionGraph& g, const NodeWeights& q) {
  check_oracle_size(g);
  if (q.size() != g.n_nodes()) throw std::invalid_argument("oracle: node weights size mismatch");
  const std::size_t n = g.n_nodes();
  const std::size_t m = g.n_edges();
  MtsfCatalog cat;

  std::vector<std::size_t> parent(n), comp_nodes(n), comp_edges(n);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<EdgeId> edges;
    for (EdgeId e = 0; e < m; ++e) {
      if (!(mask >> e & 1u)) continue;
      edges.push_back(e);
      const auto a = find(g.edge(e).u), b = find(g.edge(e).v);
      if (a != b) parent[a] = b;
    }
    std::fill(comp_nodes.begin(), comp_nodes.end(), 0);
    std::fill(comp_edges.begin(), comp_edges.end(), 0);
    for (std::size_t v = 0; v < n; ++v) ++comp_nodes[find(v)];
    for (EdgeId e : edges) ++comp_edges[find(g.edge(e).u)];

    bool valid = true;
    std::vector<std::vector<NodeId>> tree_members;  // root candidates per tree
    std::map<std::size_t, std::size_t> tree_slot;
    for (std::size_t v = 0; v < n && valid; ++v) {
      const auto r = find(v);
      if (comp_edges[r] + 1 == comp_nodes[r]) {
        auto [it, fresh] = tree_slot.emplace(r, tree_members.size());
        if (fresh) tree_members.emplace_back();
        tree_members[it->second].push_back(static_cast<NodeId>(v));
      } else if (comp_edges[r] != comp_nodes[r]) {
        valid = false;
      }
    }
    if (!valid) continue;

    // One entry per choice of a root in every tree.
    std::vector<std::size_t> choice(tree_members.size(), 0);
    while (true) {
      std::vector<NodeId> roots;
      for (std::size_t t = 0; t < tree_members.size(); ++t) roots.push_back(tree_members[t][choice[t]]);
      Mtsf f = Mtsf::assemble(g, edges, roots);
      const double w = mtsf_weight(g, q, f);
      if (w > 0.0) {
        cat.partition_value += w;
        cat.entries.push_back({std::move(f), w, 0.0});
      }
      std::size_t t = 0;
      while (t < choice.size() && ++choice[t] == tree_members[t].size()) choice[t++] = 0;
      if (t == choice.size()) break;
    }
  }
  for (auto& e : cat.entries) e.probability = e.weight / cat.partition_value;
  return cat;
}

/// Twisted incidence stacked over sqrt(Q): rows are the edges, then the nodes.
/// Edge e = (u, v) has -sqrt(w) e^{i theta} at u and +sqrt(w) at v;
/// then B* B = L + Q.
inline HermitianMatrix stacked_incidence(const ConnectionGraph& g, const NodeWeights& q) {
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  const auto m = static_cast<Eigen::Index>(g.n_edges());
  HermitianMatrix b = HermitianMatrix::Zero(m + n, n);
  for (Eigen::Index e = 0; e < m; ++e) {
    const auto& ed = g.edge(static_cast<EdgeId>(e));
    const double s = std::sqrt(ed.weight);
    b(e, ed.u) = -s * unit_phase(ed.theta);
    b(e, ed.v) = s;
  }
  for (Eigen::Index v = 0; v < n; ++v) b(m + v, v) = std::sqrt(q[static_cast<std::size_t>(v)]);
  return b;
}

/// Item index of edge e in the marginal kernel; node v (as a root) is at n_edges + v.
inline std::size_t edge_item(EdgeId e) { return e; }
inline std::size_t root_item(const ConnectionGraph& g, NodeId v) { return g.n_edges() + v; }

/// K = B (L + Q)^{-1} B*, a rank-|V| Hermitian projection over E u V.
inline HermitianMatrix marginal_kernel(const ConnectionGraph& g, const NodeWeights& q) {
  check_oracle_size(g);
  const HermitianMatrix b = stacked_incidence(g, q);
  const HermitianMatrix gram = b.adjoint() * b;
  Eigen::LLT<HermitianMatrix> llt(gram);
  if (llt.info() != Eigen::Success) throw std::runtime_error("oracle: L + Q is not positive definite");
  return b * llt.solve(b.adjoint());
}

/// P(all of `items` belong to the forest), summed over the catalog.
inline double inclusion_probability(const ConnectionGraph& g, const MtsfCatalog& cat,
                                    const std::vector<std::size_t>& items) {
  double p = 0.0;
  for (const auto& e : cat.entries) {
    bool all = true;
    for (auto x : items) {
      const bool in = x < g.n_edges() ? e.forest.has_edge(static_cast<EdgeId>(x))
                                      : e.forest.is_root(static_cast<NodeId>(x - g.n_edges()));
      if (!in) {
        all = false;
        break;
      }
    }
    if (all) p += e.probability;
  }
  return p;
}

struct ExactMoments {
  ComplexSignal mean;
  Eigen::VectorXd variance;  // E|X|^2 - |E X|^2 per node
};

struct EstimatorMoments {
  ExactMoments tilde;
  ExactMoments bar;
  std::optional<ExactMoments> hat;  // uniform q only, default alpha
};

/// Exact per-node mean and variance of each estimator by summing over the catalog.
inline EstimatorMoments exact_estimator_moments(const ConnectionGraph& g, const NodeWeights& q,
                                                const ComplexSignal& signal,
                                                const MtsfCatalog& cat) {
  const SmoothingProblem p(g, signal, q);
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  auto zero = [&] { return ExactMoments{ComplexSignal::Zero(n), Eigen::VectorXd::Zero(n)}; };
  EstimatorMoments out{zero(), zero(), std::nullopt};
  std::optional<double> alpha;
  if (q.is_uniform()) {
    alpha = default_alpha(q[0], g.max_degree());
    out.hat = zero();
  }
  auto accumulate = [](ExactMoments& m, const ComplexSignal& x, double prob) {
    m.mean += prob * x;
    m.variance += prob * x.cwiseAbs2();
  };
  for (const auto& e : cat.entries) {
    const ComplexSignal bar = estimate_bar(e.forest, p);
    accumulate(out.tilde, estimate_tilde(e.forest, p), e.probability);
    accumulate(out.bar, bar, e.probability);
    if (alpha) accumulate(*out.hat, estimate_hat(bar, p, *alpha), e.probability);
  }
  auto finish = [](ExactMoments& m) { m.variance = (m.variance - m.mean.cwiseAbs2()).cwiseMax(0.0); };
  finish(out.tilde);
  finish(out.bar);
  if (out.hat) finish(*out.hat);
  return out;
}

inline EstimatorMoments exact_estimator_moments(const ConnectionGraph& g, const NodeWeights& q,
                                                const ComplexSignal& signal) {
  return exact_estimator_moments(g, q, signal, enumerate_mtsfs(g, q));
}

/// CSV "weight,probability,roots,edges,cycles"; list fields are ';'-separated,
/// cycles are space-separated edge lists.
inline void write_catalog_csv(std::ostream& out, const MtsfCatalog& cat) {
  out << "weight,probability,roots,edges,cycles\n";
  for (const auto& e : cat.entries) {
    out << detail::format_real(e.weight) << ',' << detail::format_real(e.probability) << ',';
    for (std::size_t i = 0; i < e.forest.roots.size(); ++i) out << (i ? ";" : "") << e.forest.roots[i];
    out << ',';
    for (std::size_t i = 0; i < e.forest.edges.size(); ++i) out << (i ? ";" : "") << e.forest.edges[i];
    out << ',';
    bool first = true;
    for (const auto& c : e.forest.components) {
      if (c.is_tree()) continue;
      out << (first ? "" : ";");
      first = false;
      for (std::size_t i = 0; i < c.cycle_edges.size(); ++i) out << (i ? " " : "") << c.cycle_edges[i];
    }
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Fixture graphs used throughout the tests.

struct OracleFixture {
  std::string name;
  ConnectionGraph graph;
  NodeWeights q;
  ComplexSignal signal;
};

/// Triangle 0 -> 1 -> 2 -> 0 with `edge_theta` on each oriented edge, so the
/// cycle phase is 3 * edge_theta.
inline ConnectionGraph triangle_graph(double edge_theta) {
  return ConnectionGraph(3, {{0, 1, 1.0, edge_theta}, {1, 2, 1.0, edge_theta}, {2, 0, 1.0, edge_theta}});
}

inline std::vector<OracleFixture> oracle_fixtures() {
  using std::numbers::pi;
  auto signal = [](std::initializer_list<Complex> xs) {
    ComplexSignal s(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (auto x : xs) s[i++] = x;
    return s;
  };
  const Complex I{0.0, 1.0};
  std::vector<OracleFixture> f;
  f.push_back({"two_node", ConnectionGraph(2, {{0, 1, 1.0, 0.7}}), NodeWeights::uniform(2, 1.0),
               signal({1.0, I})});
  f.push_back({"triangle_phase_0", triangle_graph(0.0), NodeWeights::uniform(3, 1.0),
               signal({1.0, I, -1.0})});
  f.push_back({"triangle_phase_pi_3", triangle_graph(pi / 9), NodeWeights::uniform(3, 1.0),
               signal({1.0, I, -1.0})});
  f.push_back({"triangle_phase_pi_2", triangle_graph(pi / 6), NodeWeights::uniform(3, 1.0),
               signal({1.0, I, -1.0})});
  f.push_back({"four_cycle_chord",
               ConnectionGraph(4, {{0, 1, 1.0, 0.35},
                                   {1, 2, 2.0, 0.30},
                                   {2, 3, 0.5, -0.10},
                                   {3, 0, 1.5, 0.38},
                                   {0, 2, 1.0, 0.20}}),
               NodeWeights({0.5, 1.0, 2.0, 1.5}), signal({1.0, 2.0 * I, -0.5 + 0.5 * I, 0.3})});
  f.push_back({"k4",
               ConnectionGraph(4, {{0, 1, 1.0, 0.30},
                                   {0, 2, 1.0, -0.20},
                                   {0, 3, 1.0, 0.35},
                                   {1, 2, 1.0, 0.10},
                                   {1, 3, 1.0, -0.38},
                                   {2, 3, 1.0, 0.25}}),
               NodeWeights::uniform(4, 1.0), signal({1.0, -I, 0.5, 1.0 + I})});
  return f;
}

// ---------------------------------------------------------------------------
// Identity checks reported by the `oracle` subcommand and the acceptance suite.

struct OracleCheck {
  std::string name;
  double error = 0.0;
  double tolerance = 0.0;
  bool pass() const { return error <= tolerance; }
};

inline std::vector<OracleCheck> run_oracle_checks(const ConnectionGraph& g, const NodeWeights& q,
                                                  const ComplexSignal& signal) {
  std::vector<OracleCheck> checks;
  const auto cat = enumerate_mtsfs(g, q);
  const auto n = static_cast<Eigen::Index>(g.n_nodes());

  double prob_sum = 0.0;
  std::size_t bad_size = 0;
  for (const auto& e : cat.entries) {
    prob_sum += e.probability;
    if (e.forest.edges.size() + e.forest.roots.size() != g.n_nodes()) ++bad_size;
  }
  checks.push_back({"probabilities_sum_to_one", std::abs(prob_sum - 1.0), 1e-12});
  checks.push_back({"fixed_sample_size", static_cast<double>(bad_size), 0.0});

  const Eigen::Map<const Eigen::VectorXd> qv(q.values().data(), n);
  const HermitianMatrix lq = dense_magnetic_laplacian(g) + HermitianMatrix(qv.cast<Complex>().asDiagonal());
  const Complex det = lq.determinant();
  checks.push_back({"partition_equals_det", std::abs(cat.partition_value - det) / std::abs(det), 1e-10});

  const HermitianMatrix k = marginal_kernel(g, q);
  checks.push_back({"kernel_idempotent", (k * k - k).cwiseAbs().maxCoeff(), 1e-10});
  checks.push_back({"kernel_trace_is_n", std::abs(k.trace() - static_cast<double>(n)), 1e-10});

  const auto items = static_cast<std::size_t>(k.rows());
  double single = 0.0, pair = 0.0;
  for (std::size_t x = 0; x < items; ++x) {
    single = std::max(single, std::abs(inclusion_probability(g, cat, {x}) - k(x, x).real()));
    for (std::size_t y = x + 1; y < items; ++y) {
      const double minor = (k(x, x) * k(y, y) - k(x, y) * k(y, x)).real();
      pair = std::max(pair, std::abs(inclusion_probability(g, cat, {x, y}) - minor));
    }
  }
  checks.push_back({"singleton_inclusion_matches_kernel", single, 1e-10});
  checks.push_back({"pair_inclusion_matches_kernel_minor", pair, 1e-10});

  const auto moments = exact_estimator_moments(g, q, signal, cat);
  const ComplexSignal f_o = lq.llt().solve(signal.cwiseProduct(qv.cast<Complex>()));
  checks.push_back({"tilde_unbiased", (moments.tilde.mean - f_o).cwiseAbs().maxCoeff(), 1e-10});
  checks.push_back({"bar_unbiased", (moments.bar.mean - f_o).cwiseAbs().maxCoeff(), 1e-10});
  checks.push_back({"bar_variance_at_most_tilde",
                    std::max(0.0, (moments.bar.variance - moments.tilde.variance).maxCoeff()), 1e-12});
  if (moments.hat) {
    checks.push_back({"hat_unbiased", (moments.hat->mean - f_o).cwiseAbs().maxCoeff(), 1e-10});
  }
  return checks;
}

}  // namespace mtsf
