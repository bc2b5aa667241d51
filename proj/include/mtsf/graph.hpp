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

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mtsf {

using Complex = std::complex<double>;
using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;

/// Per-node complex signal. Length always equals the node count of the graph it lives on.
using ComplexSignal = Eigen::VectorXcd;
using HermitianSparseMatrix = Eigen::SparseMatrix<Complex>;
using HermitianMatrix = Eigen::MatrixXcd;

/// e^{i angle}
inline Complex unit_phase(double angle) { return std::polar(1.0, angle); }

struct Edge {
  NodeId u = 0;  // canonical orientation: u < v
  NodeId v = 0;
  double weight = 1.0;
  double theta = 0.0;  // phase for the traversal u -> v
};

struct Incidence {
  NodeId neighbor;
  EdgeId edge;
  double theta;  // phase picked up stepping from this node to `neighbor`
};

/// Weighted undirected multigraph carrying a unitary connection e^{i theta_e}.
///
/// Each edge is stored once with u < v; walking v -> u picks up the phase -theta.
/// Self-loops are rejected. Immutable after construction.
class ConnectionGraph {
 public:
  ConnectionGraph() = default;

  /// Edges may be given in either orientation; they are flipped (and their
  /// phase negated) to the canonical u < v form.
  ConnectionGraph(std::size_t n_nodes, std::vector<Edge> edges)
      : n_nodes_(n_nodes), edges_(std::move(edges)) {
    if (edges_.size() > std::numeric_limits<EdgeId>::max()) {
      throw std::invalid_argument("too many edges");
    }
    for (auto& e : edges_) {
      if (e.u >= n_nodes_ || e.v >= n_nodes_) {
        throw std::invalid_argument("edge endpoint out of range");
      }
      if (e.u == e.v) {
        throw std::invalid_argument("self-loop at node " + std::to_string(e.u));
      }
      if (!(e.weight > 0.0) || !std::isfinite(e.weight)) {
        throw std::invalid_argument("edge weight must be positive and finite");
      }
      if (!std::isfinite(e.theta)) {
        throw std::invalid_argument("edge phase must be finite");
      }
      if (e.u > e.v) {
        std::swap(e.u, e.v);
        e.theta = -e.theta;
      }
    }
    build_adjacency();
  }

  std::size_t n_nodes() const { return n_nodes_; }
  std::size_t n_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(EdgeId e) const { return edges_[e]; }

  std::span<const Incidence> neighbors(NodeId v) const {
    return {adjacency_.data() + offsets_[v], adjacency_.data() + offsets_[v + 1]};
  }
  /// Running sum of incident weights, aligned with neighbors(v).
  std::span<const double> cumulative_weights(NodeId v) const {
    return {cumulative_.data() + offsets_[v], cumulative_.data() + offsets_[v + 1]};
  }

  double degree(NodeId v) const { return degrees_[v]; }
  const std::vector<double>& weighted_degrees() const { return degrees_; }
  double max_degree() const {
    return degrees_.empty() ? 0.0 : *std::max_element(degrees_.begin(), degrees_.end());
  }

  /// Signed phase picked up when walking `e` starting from `from`.
  double directed_theta(EdgeId e, NodeId from) const {
    const Edge& ed = edges_[e];
    return from == ed.u ? ed.theta : -ed.theta;
  }
  NodeId other_end(EdgeId e, NodeId from) const {
    const Edge& ed = edges_[e];
    return from == ed.u ? ed.v : ed.u;
  }

 private:
  void build_adjacency() {
    offsets_.assign(n_nodes_ + 1, 0);
    for (const auto& e : edges_) {
      ++offsets_[e.u + 1];
      ++offsets_[e.v + 1];
    }
    for (std::size_t v = 0; v < n_nodes_; ++v) offsets_[v + 1] += offsets_[v];
    adjacency_.resize(offsets_[n_nodes_]);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (EdgeId id = 0; id < edges_.size(); ++id) {
      const auto& e = edges_[id];
      adjacency_[fill[e.u]++] = {e.v, id, e.theta};
      adjacency_[fill[e.v]++] = {e.u, id, -e.theta};
    }
    cumulative_.resize(adjacency_.size());
    degrees_.assign(n_nodes_, 0.0);
    for (std::size_t v = 0; v < n_nodes_; ++v) {
      double acc = 0.0;
      for (std::size_t k = offsets_[v]; k < offsets_[v + 1]; ++k) {
        acc += edges_[adjacency_[k].edge].weight;
        cumulative_[k] = acc;
      }
      degrees_[v] = acc;
    }
  }

  std::size_t n_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Incidence> adjacency_;
  std::vector<double> cumulative_;
  std::vector<double> degrees_;
};

/// Diagonal of Q. All entries strictly positive.
class NodeWeights {
 public:
  NodeWeights() = default;
  explicit NodeWeights(std::vector<double> q) : q_(std::move(q)) {
    for (double x : q_) {
      if (!(x > 0.0) || !std::isfinite(x)) {
        throw std::invalid_argument("node weights must be positive and finite");
      }
    }
    uniform_ = std::adjacent_find(q_.begin(), q_.end(), std::not_equal_to<>()) == q_.end();
  }
  static NodeWeights uniform(std::size_t n, double q) {
    return NodeWeights(std::vector<double>(n, q));
  }

  std::size_t size() const { return q_.size(); }
  double operator[](std::size_t v) const { return q_[v]; }
  const std::vector<double>& values() const { return q_; }
  bool is_uniform() const { return uniform_; }

 private:
  std::vector<double> q_;
  bool uniform_ = true;
};

/// L = D - A_theta with L[v,u] = -w e^{i theta} for an edge oriented u -> v.
inline HermitianSparseMatrix magnetic_laplacian(const ConnectionGraph& g) {
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(g.n_nodes() + 2 * g.n_edges());
  for (std::size_t v = 0; v < g.n_nodes(); ++v) {
    trips.emplace_back(v, v, g.degree(static_cast<NodeId>(v)));
  }
  for (const auto& e : g.edges()) {
    const Complex a = e.weight * unit_phase(e.theta);
    trips.emplace_back(e.v, e.u, -a);
    trips.emplace_back(e.u, e.v, -std::conj(a));
  }
  HermitianSparseMatrix L(n, n);
  L.setFromTriplets(trips.begin(), trips.end());
  return L;
}

/// Dense variant, for desk-scale oracles only.
inline HermitianMatrix dense_magnetic_laplacian(const ConnectionGraph& g) {
  return HermitianMatrix(magnetic_laplacian(g));
}

/// L f computed edge by edge, without assembling L.
inline ComplexSignal apply_laplacian(const ConnectionGraph& g, const ComplexSignal& f) {
  ComplexSignal out(f.size());
  for (std::size_t v = 0; v < g.n_nodes(); ++v) out[v] = g.degree(static_cast<NodeId>(v)) * f[v];
  for (const auto& e : g.edges()) {
    const Complex a = e.weight * unit_phase(e.theta);
    out[e.v] -= a * f[e.u];
    out[e.u] -= std::conj(a) * f[e.v];
  }
  return out;
}

inline void check_signal(const ConnectionGraph& g, const ComplexSignal& f) {
  if (static_cast<std::size_t>(f.size()) != g.n_nodes()) {
    throw std::invalid_argument("signal length " + std::to_string(f.size()) +
                                " does not match node count " + std::to_string(g.n_nodes()));
  }
}

/// sum_e w_e |f(v) - e^{i theta_e} f(u)|^2 over edges oriented u -> v.
inline double quadratic_form(const ConnectionGraph& g, const ComplexSignal& f) {
  check_signal(g, f);
  double acc = 0.0;
  for (const auto& e : g.edges()) {
    acc += e.weight * std::norm(f[e.v] - unit_phase(e.theta) * f[e.u]);
  }
  return acc;
}

struct PathStep {
  EdgeId edge;
  NodeId from;
};

/// Product of e^{+-i theta_e} along a walk; the sign follows the traversal direction.
inline Complex path_phase(const ConnectionGraph& g, std::span<const PathStep> path) {
  Complex acc{1.0, 0.0};
  NodeId at = path.empty() ? 0 : path.front().from;
  for (const auto& step : path) {
    if (step.edge >= g.n_edges()) throw std::invalid_argument("edge id out of range");
    const Edge& e = g.edge(step.edge);
    if (step.from != at || (step.from != e.u && step.from != e.v)) {
      throw std::invalid_argument("path is not contiguous at edge " + std::to_string(step.edge));
    }
    acc *= unit_phase(g.directed_theta(step.edge, step.from));
    at = g.other_end(step.edge, step.from);
  }
  return acc;
}

/// Sufficient test for cos(theta_gamma) >= 0 on every cycle: a simple cycle has at
/// most n_nodes edges, so max|theta_e| * n_nodes <= pi/2 is enough.
inline bool check_sampling_condition_bound(const ConnectionGraph& g, double per_edge_phase_bound) {
  double bound = std::abs(per_edge_phase_bound);
  for (const auto& e : g.edges()) bound = std::max(bound, std::abs(e.theta));
  return bound * static_cast<double>(g.n_nodes()) <= std::numbers::pi / 2 + 1e-12;
}

inline bool check_sampling_condition_bound(const ConnectionGraph& g) {
  return check_sampling_condition_bound(g, 0.0);
}

// ---------------------------------------------------------------------------
// Text formats.
//
// Graph:   "n_nodes n_edges" then one "u v weight theta" line per edge.
// Signal:  one "node re im" line per node.

namespace detail {
inline bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '#') continue;
    return true;
  }
  return false;
}

/// Shortest text that parses back to the same double.
inline std::string format_real(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}
}  // namespace detail

inline ConnectionGraph read_graph(std::istream& in) {
  std::string line;
  if (!detail::next_data_line(in, line)) throw std::invalid_argument("graph file: missing header");
  std::istringstream hdr(line);
  std::size_t n = 0, m = 0;
  if (!(hdr >> n >> m)) throw std::invalid_argument("graph file: bad header '" + line + "'");
  std::vector<Edge> edges;
  edges.reserve(m);
  for (std::size_t k = 0; k < m; ++k) {
    if (!detail::next_data_line(in, line)) {
      throw std::invalid_argument("graph file: expected " + std::to_string(m) + " edges, got " +
                                  std::to_string(k));
    }
    std::istringstream rec(line);
    long long u = 0, v = 0;
    Edge e;
    if (!(rec >> u >> v >> e.weight >> e.theta) || u < 0 || v < 0) {
      throw std::invalid_argument("graph file: bad edge record '" + line + "'");
    }
    e.u = static_cast<NodeId>(u);
    e.v = static_cast<NodeId>(v);
    edges.push_back(e);
  }
  return ConnectionGraph(n, std::move(edges));
}

inline void write_graph(std::ostream& out, const ConnectionGraph& g) {
  out << g.n_nodes() << ' ' << g.n_edges() << '\n';
  for (const auto& e : g.edges()) {
    out << e.u << ' ' << e.v << ' ' << detail::format_real(e.weight) << ' '
        << detail::format_real(e.theta) << '\n';
  }
}

inline ComplexSignal read_signal(std::istream& in, std::size_t n_nodes) {
  ComplexSignal f = ComplexSignal::Zero(static_cast<Eigen::Index>(n_nodes));
  std::vector<bool> seen(n_nodes, false);
  std::string line;
  while (detail::next_data_line(in, line)) {
    std::istringstream rec(line);
    long long v = 0;
    double re = 0, im = 0;
    if (!(rec >> v >> re >> im) || v < 0 || static_cast<std::size_t>(v) >= n_nodes) {
      throw std::invalid_argument("signal file: bad record '" + line + "'");
    }
    if (seen[v]) throw std::invalid_argument("signal file: duplicate node " + std::to_string(v));
    seen[v] = true;
    f[v] = {re, im};
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw std::invalid_argument("signal file: missing nodes");
  }
  return f;
}

inline void write_signal(std::ostream& out, const ComplexSignal& f) {
  for (Eigen::Index v = 0; v < f.size(); ++v) {
    out << v << ' ' << detail::format_real(f[v].real()) << ' ' << detail::format_real(f[v].imag())
        << '\n';
  }
}

}  // namespace mtsf
