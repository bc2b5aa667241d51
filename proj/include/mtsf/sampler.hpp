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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mtsf {

struct SamplerConfig {
  std::uint64_t rng_seed = 0;
  NodeWeights q;
};

namespace detail {

/// Loop-erased random walks with unicycle acceptance. Scratch buffers are kept
/// between samples so repeated draws on one graph do not reallocate.
class ForestWalker {
 public:
  ForestWalker(const ConnectionGraph& g, const NodeWeights& q) : g_(g), q_(q) {
    if (q.size() != g.n_nodes()) {
      throw std::invalid_argument("node weights size does not match graph");
    }
  }

  Mtsf draw(Rng& rng) {
    const std::size_t n = g_.n_nodes();
    in_forest_.assign(n, false);
    path_pos_.assign(n, kNotOnPath);
    forest_edges_.clear();
    roots_.clear();
    std::uint64_t steps = 0;

    for (NodeId start = 0; start < n; ++start) {
      if (in_forest_[start]) continue;
      path_nodes_.assign(1, start);
      path_edges_.clear();
      path_angle_.assign(1, 0.0);
      path_pos_[start] = 0;

      while (true) {
        const NodeId u = path_nodes_.back();
        const double qu = q_[u];
        const double du = g_.degree(u);
        ++steps;
        if (rng.uniform() * (qu + du) < qu) {
          roots_.push_back(u);
          break;
        }
        const Incidence& step = pick_neighbor(u, rng);
        const NodeId x = step.neighbor;
        const EdgeId e = step.edge;
        const double angle_x = path_angle_.back() + step.theta;
        if (in_forest_[x]) {
          path_edges_.push_back(e);
          break;
        }
        if (path_pos_[x] != kNotOnPath) {
          const double cycle_phase = angle_x - path_angle_[path_pos_[x]];
          if (rng.uniform() < 1.0 - std::cos(cycle_phase)) {
            path_edges_.push_back(e);
            break;
          }
          truncate_path(path_pos_[x]);
          continue;
        }
        path_pos_[x] = path_nodes_.size();
        path_nodes_.push_back(x);
        path_edges_.push_back(e);
        path_angle_.push_back(angle_x);
      }

      for (NodeId v : path_nodes_) {
        in_forest_[v] = true;
        path_pos_[v] = kNotOnPath;
      }
      forest_edges_.insert(forest_edges_.end(), path_edges_.begin(), path_edges_.end());
    }

    Mtsf f = Mtsf::assemble(g_, forest_edges_, roots_);
    f.walk_steps = steps;
    return f;
  }

 private:
  static constexpr std::size_t kNotOnPath = ~std::size_t{0};

  const Incidence& pick_neighbor(NodeId u, Rng& rng) const {
    const auto nbrs = g_.neighbors(u);
    const auto cum = g_.cumulative_weights(u);
    const double target = rng.uniform() * cum.back();
    auto it = std::upper_bound(cum.begin(), cum.end(), target);
    if (it == cum.end()) --it;
    return nbrs[static_cast<std::size_t>(it - cum.begin())];
  }

  // Keeps path_nodes_[0..keep]; everything after is erased.
  void truncate_path(std::size_t keep) {
    for (std::size_t i = keep + 1; i < path_nodes_.size(); ++i) path_pos_[path_nodes_[i]] = kNotOnPath;
    path_nodes_.resize(keep + 1);
    path_edges_.resize(keep);
    path_angle_.resize(keep + 1);
  }

  const ConnectionGraph& g_;
  const NodeWeights& q_;
  std::vector<bool> in_forest_;
  std::vector<std::size_t> path_pos_;
  std::vector<NodeId> path_nodes_;
  std::vector<EdgeId> path_edges_;
  std::vector<double> path_angle_;  // summed signed phases from the walk start
  std::vector<EdgeId> forest_edges_;
  std::vector<NodeId> roots_;
};

/// Runs body(i, walker) for i in [0, count) across `workers` threads. Each
/// thread owns a walker; callers must write results by index.
template <typename Body>
void parallel_draws(const ConnectionGraph& g, const NodeWeights& q, std::size_t count,
                    unsigned workers, Body&& body) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (workers == 1) {
    ForestWalker walker(g, q);
    for (std::size_t i = 0; i < count; ++i) body(i, walker);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      try {
        ForestWalker walker(g, q);
        for (std::size_t i = next++; i < count; i = next++) body(i, walker);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// Draws one rooted multi-type spanning forest with probability proportional to
///   prod_roots q_r * prod_edges w_e * prod_cycles (2 - 2 cos theta_C).
/// Requires cos(theta_C) >= 0 on every cycle of the graph; this is not checked here.
inline Mtsf sample_mtsf(const ConnectionGraph& g, const NodeWeights& q, Rng& rng) {
  return detail::ForestWalker(g, q).draw(rng);
}

inline Mtsf sample_mtsf(const ConnectionGraph& g, const SamplerConfig& cfg) {
  Rng rng(cfg.rng_seed);
  return sample_mtsf(g, cfg.q, rng);
}

/// `m` independent forests; sample i uses derive_seed(cfg.rng_seed, i), so the
/// output does not depend on `workers`.
inline std::vector<Mtsf> sample_batch(const ConnectionGraph& g, const SamplerConfig& cfg,
                                      std::size_t m, unsigned workers = 1) {
  if (m == 0) throw std::invalid_argument("sample_batch: m must be at least 1");
  std::vector<Mtsf> out(m);
  detail::parallel_draws(g, cfg.q, m, workers, [&](std::size_t i, detail::ForestWalker& walker) {
    Rng rng(derive_seed(cfg.rng_seed, i));
    out[i] = walker.draw(rng);
  });
  return out;
}

}  // namespace mtsf
