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

#include "mtsf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtsf {

enum class ComponentKind { kRootedTree, kUnicycle };

struct Component {
  ComponentKind kind = ComponentKind::kRootedTree;
  NodeId root = 0;                  // trees only
  std::vector<EdgeId> cycle_edges;  // unicycles only, in walking order
  double cycle_phase = 0.0;         // unicycles only; sign depends on walking direction
  /// Trees: breadth-first from the root, so every parent precedes its children.
  std::vector<NodeId> nodes;
  std::vector<EdgeId> edges;

  bool is_tree() const { return kind == ComponentKind::kRootedTree; }
};

/// A rooted multi-type spanning forest: every component is either a tree with
/// exactly one root or a unicycle with no root.
struct Mtsf {
  std::vector<EdgeId> edges;  // sorted
  std::vector<NodeId> roots;  // sorted
  std::vector<Component> components;
  std::vector<std::uint32_t> node_component;
  /// psi_{r -> v} for v in a tree rooted at r; zero on unicycle nodes.
  std::vector<Complex> root_to_node_phase;
  /// Random-walk steps spent by the sampler (0 when built by other means).
  std::uint64_t walk_steps = 0;

  std::size_t n_nodes() const { return node_component.size(); }
  const Component& component_of(NodeId v) const { return components[node_component[v]]; }
  bool is_root(NodeId v) const { return std::binary_search(roots.begin(), roots.end(), v); }
  bool has_edge(EdgeId e) const { return std::binary_search(edges.begin(), edges.end(), e); }

  std::size_t n_unicycles() const {
    return static_cast<std::size_t>(std::count_if(components.begin(), components.end(),
                                                  [](const Component& c) { return !c.is_tree(); }));
  }

  /// Sorted edge ids, a separator, then sorted root ids. Equal keys <=> equal forests.
  std::vector<std::uint32_t> canonical_key() const {
    std::vector<std::uint32_t> key(edges.begin(), edges.end());
    key.push_back(~std::uint32_t{0});
    key.insert(key.end(), roots.begin(), roots.end());
    return key;
  }

  /// Builds and validates a forest from its edge and root sets. Throws
  /// std::invalid_argument unless every connected component is a tree with one
  /// root or a unicycle without roots.
  static Mtsf assemble(const ConnectionGraph& g, std::vector<EdgeId> edge_set,
                       std::vector<NodeId> root_set);
};

namespace detail {

struct LocalAdjacency {
  std::vector<std::size_t> offsets;
  std::vector<std::pair<NodeId, EdgeId>> entries;

  LocalAdjacency(const ConnectionGraph& g, const std::vector<EdgeId>& edges)
      : offsets(g.n_nodes() + 1, 0), entries(2 * edges.size()) {
    for (EdgeId e : edges) {
      ++offsets[g.edge(e).u + 1];
      ++offsets[g.edge(e).v + 1];
    }
    for (std::size_t v = 0; v < g.n_nodes(); ++v) offsets[v + 1] += offsets[v];
    std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
    for (EdgeId e : edges) {
      const auto& ed = g.edge(e);
      entries[fill[ed.u]++] = {ed.v, e};
      entries[fill[ed.v]++] = {ed.u, e};
    }
  }
  std::span<const std::pair<NodeId, EdgeId>> at(NodeId v) const {
    return {entries.data() + offsets[v], entries.data() + offsets[v + 1]};
  }
};

}  // namespace detail

inline Mtsf Mtsf::assemble(const ConnectionGraph& g, std::vector<EdgeId> edge_set,
                           std::vector<NodeId> root_set) {
  const std::size_t n = g.n_nodes();
  std::sort(edge_set.begin(), edge_set.end());
  std::sort(root_set.begin(), root_set.end());
  if (std::adjacent_find(edge_set.begin(), edge_set.end()) != edge_set.end()) {
    throw std::invalid_argument("forest: duplicate edge");
  }
  if (std::adjacent_find(root_set.begin(), root_set.end()) != root_set.end()) {
    throw std::invalid_argument("forest: duplicate root");
  }
  if (!edge_set.empty() && edge_set.back() >= g.n_edges()) {
    throw std::invalid_argument("forest: edge id out of range");
  }
  if (!root_set.empty() && root_set.back() >= n) {
    throw std::invalid_argument("forest: root id out of range");
  }

  Mtsf f;
  f.edges = std::move(edge_set);
  f.roots = std::move(root_set);
  f.node_component.assign(n, ~std::uint32_t{0});
  f.root_to_node_phase.assign(n, Complex{0.0, 0.0});

  const detail::LocalAdjacency adj(g, f.edges);
  std::vector<bool> is_root(n, false);
  for (NodeId r : f.roots) is_root[r] = true;

  std::vector<NodeId> stack;
  std::vector<std::size_t> local_degree(n, 0);
  for (NodeId start = 0; start < n; ++start) {
    if (f.node_component[start] != ~std::uint32_t{0}) continue;
    const auto cid = static_cast<std::uint32_t>(f.components.size());
    Component comp;
    std::vector<NodeId> roots_here;
    std::size_t edge_endpoints = 0;
    f.node_component[start] = cid;
    stack.assign(1, start);
    while (!stack.empty()) {
      const NodeId v = stack.back();
      stack.pop_back();
      comp.nodes.push_back(v);
      if (is_root[v]) roots_here.push_back(v);
      for (auto [w, e] : adj.at(v)) {
        ++edge_endpoints;
        if (v < w) comp.edges.push_back(e);
        if (f.node_component[w] == ~std::uint32_t{0}) {
          f.node_component[w] = cid;
          stack.push_back(w);
        }
      }
    }
    std::sort(comp.edges.begin(), comp.edges.end());
    const std::size_t k = comp.nodes.size();
    const std::size_t n_comp_edges = edge_endpoints / 2;

    if (n_comp_edges + 1 == k && roots_here.size() == 1) {
      comp.kind = ComponentKind::kRootedTree;
      comp.root = roots_here.front();
      // Breadth-first from the root, carrying psi_{root -> v}.
      comp.nodes.assign(1, comp.root);
      f.root_to_node_phase[comp.root] = Complex{1.0, 0.0};
      for (std::size_t head = 0; head < comp.nodes.size(); ++head) {
        const NodeId v = comp.nodes[head];
        for (auto [w, e] : adj.at(v)) {
          if (w == comp.root || f.root_to_node_phase[w] != Complex{0.0, 0.0}) continue;
          f.root_to_node_phase[w] = f.root_to_node_phase[v] * unit_phase(g.directed_theta(e, v));
          comp.nodes.push_back(w);
        }
      }
      if (comp.nodes.size() != k) throw std::logic_error("forest: tree traversal incomplete");
    } else if (n_comp_edges == k && roots_here.empty()) {
      comp.kind = ComponentKind::kUnicycle;
      // Peel leaves; what is left is the cycle.
      std::vector<NodeId> leaves;
      for (NodeId v : comp.nodes) {
        local_degree[v] = adj.at(v).size();
        if (local_degree[v] == 1) leaves.push_back(v);
      }
      while (!leaves.empty()) {
        const NodeId v = leaves.back();
        leaves.pop_back();
        local_degree[v] = 0;
        for (auto [w, e] : adj.at(v)) {
          if (local_degree[w] > 0 && --local_degree[w] == 1) leaves.push_back(w);
        }
      }
      NodeId cycle_start = comp.nodes.front();
      for (NodeId v : comp.nodes) {
        if (local_degree[v] >= 2) {
          cycle_start = v;
          break;
        }
      }
      NodeId at = cycle_start;
      EdgeId came_by = ~EdgeId{0};
      do {
        bool moved = false;
        for (auto [w, e] : adj.at(at)) {
          if (e == came_by || local_degree[w] < 2) continue;
          comp.cycle_edges.push_back(e);
          comp.cycle_phase += g.directed_theta(e, at);
          came_by = e;
          at = w;
          moved = true;
          break;
        }
        if (!moved || comp.cycle_edges.size() > k) {
          throw std::logic_error("forest: failed to walk unicycle cycle");
        }
      } while (at != cycle_start);
      for (NodeId v : comp.nodes) local_degree[v] = 0;
    } else {
      throw std::invalid_argument("forest: component of " + std::to_string(k) + " nodes with " +
                                  std::to_string(n_comp_edges) + " edges and " +
                                  std::to_string(roots_here.size()) +
                                  " roots is neither a rooted tree nor a unicycle");
    }
    f.components.push_back(std::move(comp));
  }
  return f;
}

/// One component per line:
///   tree root=<r> edges=<e1,e2,...>
///   unicycle cycle_phase=<theta_C> edges=<e1,e2,...>
inline void write_mtsf(std::ostream& out, const Mtsf& f) {
  for (const auto& c : f.components) {
    if (c.is_tree()) {
      out << "tree root=" << c.root;
    } else {
      out << "unicycle cycle_phase=" << detail::format_real(c.cycle_phase);
    }
    out << " edges=";
    for (std::size_t i = 0; i < c.edges.size(); ++i) out << (i ? "," : "") << c.edges[i];
    out << '\n';
  }
}

}  // namespace mtsf
