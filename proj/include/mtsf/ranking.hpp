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
#include "mtsf/linalg.hpp"
#include "mtsf/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtsf {

/// rank[v] is the position of item v in the order (0 = first).
using Ranking = std::vector<std::size_t>;

struct Comparison {
  NodeId i;  // i < j
  NodeId j;
  int c;  // +1: j ranks after i, -1: j ranks before i
};

struct ComparisonSet {
  std::size_t n = 0;
  std::vector<Comparison> observed;  // sorted by (i, j)
  Ranking ground_truth;
  double s = 1.0;
  double p = 1.0;
  std::uint64_t seed = 0;
};

struct RankingOutcome {
  ComplexSignal embedding;
  Ranking ranking;
  double kendall_tau = 0.0;
  bool orientation_flipped = false;
  std::size_t cut_index = 0;
  double wall_time = 0.0;
};

inline bool is_permutation_of_iota(const Ranking& r) {
  std::vector<bool> seen(r.size(), false);
  for (auto x : r) {
    if (x >= r.size() || seen[x]) return false;
    seen[x] = true;
  }
  return true;
}

/// Ground-truth ranks of an ERO instance; the first draws from `seed`.
inline Ranking ground_truth_ranking(std::size_t n, Rng& rng) {
  Ranking r(n);
  std::iota(r.begin(), r.end(), 0);
  rng.shuffle(r);
  return r;
}

/// Erdos-Renyi outliers: each pair is observed with probability s; an observed
/// comparison agrees with the ground truth with probability p and is a fair
/// coin otherwise.
inline ComparisonSet generate_ero(std::size_t n, double s, double p, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("generate_ero: n must be at least 2");
  if (!(s > 0.0 && s <= 1.0)) throw std::invalid_argument("generate_ero: s must be in (0, 1]");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("generate_ero: p must be in [0, 1]");
  ComparisonSet cs;
  cs.n = n;
  cs.s = s;
  cs.p = p;
  cs.seed = seed;
  Rng rng(seed);
  cs.ground_truth = ground_truth_ranking(n, rng);
  for (NodeId i = 0; i < n; ++i) {
    for (NodeId j = i + 1; j < n; ++j) {
      if (!rng.bernoulli(s)) continue;
      int c;
      if (rng.bernoulli(p)) {
        c = cs.ground_truth[i] < cs.ground_truth[j] ? 1 : -1;
      } else {
        c = rng.bernoulli(0.5) ? 1 : -1;
      }
      cs.observed.push_back({i, j, c});
    }
  }
  return cs;
}

/// Unit-weight edge per observed pair with theta_{i->j} = pi delta C_ij / n.
inline ConnectionGraph comparison_graph(const ComparisonSet& cs, double delta = 0.25) {
  if (!(delta > 0.0 && delta < 1.0)) {
    throw std::invalid_argument("comparison_graph: delta must be in (0, 1)");
  }
  const double step = std::numbers::pi * delta / static_cast<double>(cs.n);
  std::vector<Edge> edges;
  edges.reserve(cs.observed.size());
  for (const auto& cmp : cs.observed) {
    edges.push_back({cmp.i, cmp.j, 1.0, step * cmp.c});
  }
  return ConnectionGraph(cs.n, std::move(edges));
}

struct ExtractedRanking {
  Ranking ranking;
  std::size_t cut_index = 0;  // position in the angle-sorted order where the line starts
};

/// Sorts by arg f(v) in [0, 2 pi) and cuts the circle at the widest gap
/// between consecutive angles. Ascending angle from the cut gives the order.
inline ExtractedRanking extract_ranking(const ComplexSignal& embedding) {
  const auto n = static_cast<std::size_t>(embedding.size());
  if (n == 0) throw std::invalid_argument("extract_ranking: empty embedding");
  std::vector<double> angle(n);
  for (std::size_t v = 0; v < n; ++v) {
    if (std::abs(embedding[v]) == 0.0) {
      throw std::invalid_argument("extract_ranking: zero entry at node " + std::to_string(v) +
                                  " has no angle");
    }
    double a = std::arg(embedding[v]);
    if (a < 0.0) a += 2.0 * std::numbers::pi;
    if (a >= 2.0 * std::numbers::pi) a = 0.0;
    angle[v] = a;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return angle[a] < angle[b]; });

  // Gap preceding sorted position k; position 0 sees the wrap-around gap.
  std::size_t cut = 0;
  double widest = angle[order[0]] + 2.0 * std::numbers::pi - angle[order[n - 1]];
  for (std::size_t k = 1; k < n; ++k) {
    const double gap = angle[order[k]] - angle[order[k - 1]];
    if (gap > widest) {
      widest = gap;
      cut = k;
    }
  }
  ExtractedRanking out;
  out.cut_index = cut;
  out.ranking.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.ranking[order[(cut + k) % n]] = k;
  return out;
}

namespace detail {
// Counts inversions of `seq` by merge sort.
inline std::uint64_t count_inversions(std::vector<std::size_t>& seq, std::vector<std::size_t>& buf,
                                      std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t inv = count_inversions(seq, buf, lo, mid) + count_inversions(seq, buf, mid, hi);
  std::size_t a = lo, b = mid, o = lo;
  while (a < mid && b < hi) {
    if (seq[b] < seq[a]) {
      inv += mid - a;
      buf[o++] = seq[b++];
    } else {
      buf[o++] = seq[a++];
    }
  }
  while (a < mid) buf[o++] = seq[a++];
  while (b < hi) buf[o++] = seq[b++];
  std::copy(buf.begin() + lo, buf.begin() + hi, seq.begin() + lo);
  return inv;
}
}  // namespace detail

/// (concordant - discordant) / (n(n-1)/2) between two tie-free rankings, O(n log n).
inline double kendall_tau(const Ranking& a, const Ranking& b) {
  if (a.size() != b.size()) throw std::invalid_argument("kendall_tau: length mismatch");
  if (!is_permutation_of_iota(a) || !is_permutation_of_iota(b)) {
    throw std::invalid_argument("kendall_tau: inputs must be permutations");
  }
  const std::size_t n = a.size();
  if (n < 2) return 1.0;
  // Items listed in a's order, then read off their positions in b.
  std::vector<std::size_t> seq(n), buf(n);
  for (std::size_t v = 0; v < n; ++v) seq[a[v]] = b[v];
  const double pairs = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  const auto discordant = static_cast<double>(detail::count_inversions(seq, buf, 0, n));
  return (pairs - 2.0 * discordant) / pairs;
}

inline Ranking reversed(const Ranking& r) {
  Ranking out(r.size());
  for (std::size_t v = 0; v < r.size(); ++v) out[v] = r.size() - 1 - r[v];
  return out;
}

struct TauResult {
  double tau = 0.0;      // best orientation
  double raw_tau = 0.0;  // as given
  bool flipped = false;
};

/// Kendall's tau for the better of the two orientations of `ranking`.
inline TauResult evaluate_tau(const Ranking& ranking, const Ranking& truth) {
  TauResult r;
  r.raw_tau = kendall_tau(ranking, truth);
  // Reversing one ranking negates tau exactly.
  r.flipped = r.raw_tau < 0.0;
  r.tau = std::abs(r.raw_tau);
  return r;
}

/// Comparison graph -> power method -> circular cut -> tau against the ground truth.
/// `pm.initial` defaults to initial_embedding(n, pm.seed) when empty.
inline RankingOutcome rank_pipeline(const ComparisonSet& cs, PowerMethodConfig pm,
                                    double delta = 0.25) {
  const auto t0 = std::chrono::steady_clock::now();
  const ConnectionGraph g = comparison_graph(cs, delta);
  if (pm.initial.size() == 0) pm.initial = initial_embedding(cs.n, pm.seed);
  RankingOutcome out;
  out.embedding = power_method(g, pm);
  const auto extracted = extract_ranking(out.embedding);
  const auto tau = evaluate_tau(extracted.ranking, cs.ground_truth);
  out.ranking = tau.flipped ? reversed(extracted.ranking) : extracted.ranking;
  out.kendall_tau = tau.tau;
  out.orientation_flipped = tau.flipped;
  out.cut_index = extracted.cut_index;
  out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Instance file: header "n s p seed", then one "i j c" line per observed pair.
// The ground truth is not stored; it is regenerated from (n, seed).

inline void write_instance(std::ostream& out, const ComparisonSet& cs) {
  out << cs.n << ' ' << detail::format_real(cs.s) << ' ' << detail::format_real(cs.p) << ' '
      << cs.seed << '\n';
  for (const auto& c : cs.observed) out << c.i << ' ' << c.j << ' ' << c.c << '\n';
}

inline ComparisonSet read_instance(std::istream& in) {
  std::string line;
  if (!detail::next_data_line(in, line)) throw std::invalid_argument("instance file: missing header");
  ComparisonSet cs;
  std::istringstream hdr(line);
  if (!(hdr >> cs.n >> cs.s >> cs.p >> cs.seed) || cs.n < 2) {
    throw std::invalid_argument("instance file: bad header '" + line + "'");
  }
  Rng rng(cs.seed);
  cs.ground_truth = ground_truth_ranking(cs.n, rng);
  while (detail::next_data_line(in, line)) {
    std::istringstream rec(line);
    long long i = 0, j = 0;
    int c = 0;
    if (!(rec >> i >> j >> c) || i < 0 || j < 0 || (c != 1 && c != -1) ||
        static_cast<std::size_t>(std::max(i, j)) >= cs.n || i == j) {
      throw std::invalid_argument("instance file: bad comparison '" + line + "'");
    }
    if (i > j) {
      std::swap(i, j);
      c = -c;
    }
    cs.observed.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j), c});
  }
  std::sort(cs.observed.begin(), cs.observed.end(),
            [](const Comparison& a, const Comparison& b) { return std::pair(a.i, a.j) < std::pair(b.i, b.j); });
  return cs;
}

}  // namespace mtsf
