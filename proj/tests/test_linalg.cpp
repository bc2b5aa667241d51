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


#include "mtsf/linalg.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numbers>
#include <set>

#include "mtsf/oracle.hpp"
#include "test_util.hpp"

namespace mtsf {
namespace {

using std::numbers::pi;

/// Connected random graph: a path through all nodes plus ER extras.
ConnectionGraph connected_graph(std::size_t n, double p, double max_phase, Rng& rng) {
  std::vector<Edge> edges = testing::random_graph(n, p, max_phase, rng).edges();
  for (NodeId v = 0; v + 1 < n; ++v) edges.push_back({v, v + 1, 1.0, max_phase * (2 * rng.uniform() - 1)});
  return ConnectionGraph(n, edges);
}

TEST(SolveExact, EdgelessReturnsSignal) {
  Rng rng(1);
  const ComplexSignal g = testing::random_signal(5, rng);
  const ConnectionGraph graph(5, {});
  EXPECT_LT((solve_exact(SmoothingProblem(graph, g, NodeWeights({1, 2, 3, 4, 5}))) - g).norm(), 1e-15);
}

TEST(SolveExact, LargeQApproachesSignal) {
  Rng rng(2);
  const auto graph = connected_graph(10, 0.4, pi, rng);
  const ComplexSignal g = testing::random_signal(10, rng);
  const ComplexSignal f = solve_exact(SmoothingProblem(graph, g, NodeWeights::uniform(10, 1e8)));
  EXPECT_LE((f - g).norm(), 1e-6 * g.norm());
}

TEST(SolveExact, ResidualBoundAndBackendsAgree) {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const auto graph = connected_graph(40, 0.2, pi, rng);
    std::vector<double> q(40);
    for (auto& x : q) x = 0.01 + rng.uniform();
    const SmoothingProblem p(graph, testing::random_signal(40, rng), NodeWeights(q));
    const ComplexSignal dense = solve_exact(p, HermitianSolver::Backend::kDense);
    const ComplexSignal sparse = solve_exact(p, HermitianSolver::Backend::kSparse);
    const Eigen::Map<const Eigen::VectorXd> qv(q.data(), 40);
    const ComplexSignal qg = p.signal().cwiseProduct(qv.cast<Complex>());
    const ComplexSignal residual = magnetic_laplacian(graph) * dense + dense.cwiseProduct(qv.cast<Complex>()) - qg;
    EXPECT_LE(residual.norm(), 1e-10 * qg.norm());
    EXPECT_LE((dense - sparse).norm(), 1e-10 * dense.norm());
  }
}

TEST(SolveExact, TriangleMatchesEnumeration) {
  const auto graph = triangle_graph(pi / 6);
  ComplexSignal g(3);
  g << 1.0, Complex(0, 1), -1.0;
  const auto q = NodeWeights::uniform(3, 1.0);
  const auto mom = exact_estimator_moments(graph, q, g);
  EXPECT_LT((solve_exact(SmoothingProblem(graph, g, q)) - mom.tilde.mean).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(HermitianSolver, RejectsIndefiniteMatrix) {
  const HermitianSparseMatrix L = magnetic_laplacian(triangle_graph(0.0));  // singular
  EXPECT_THROW(HermitianSolver(-L, HermitianSolver::Backend::kDense), std::runtime_error);
}

TEST(NormalizedLaplacian, SingleEdge) {
  const HermitianMatrix l(normalized_laplacian(ConnectionGraph(2, {{0, 1, 1.0, 0.0}})));
  HermitianMatrix expected(2, 2);
  expected << 1.0, -1.0, -1.0, 1.0;
  EXPECT_LT((l - expected).norm(), 1e-15);
}

TEST(NormalizedLaplacian, SpectrumWithinZeroTwo) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const auto graph = connected_graph(3 + rng.below(20), 0.4, pi, rng);
    const HermitianMatrix l(normalized_laplacian(graph));
    EXPECT_LT((l - l.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<HermitianMatrix> eig(l);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
    EXPECT_LE(eig.eigenvalues().maxCoeff(), 2.0 + 1e-10);
  }
}

TEST(NormalizedLaplacian, TriangleMatchesDenseProduct) {
  const ConnectionGraph graph(3, {{0, 1, 1.0, 0.3}, {1, 2, 2.0, -0.4}, {0, 2, 0.5, 1.1}});
  const HermitianMatrix L = dense_magnetic_laplacian(graph);
  Eigen::VectorXd d(3);
  d << 1.5, 3.0, 2.5;
  const HermitianMatrix s = d.cwiseSqrt().cwiseInverse().cast<Complex>().asDiagonal();
  EXPECT_LT((HermitianMatrix(normalized_laplacian(graph)) - s * L * s).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(NormalizedLaplacian, RejectsIsolatedNode) {
  EXPECT_THROW(normalized_laplacian(ConnectionGraph(3, {{0, 1, 1.0, 0.0}})), std::invalid_argument);
}

TEST(InitialEmbedding, Properties) {
  EXPECT_EQ(initial_embedding(1, 5), ComplexSignal::Constant(1, 1.0));
  const std::size_t n = 37;
  const ComplexSignal y = initial_embedding(n, 9);
  std::set<long> steps;
  for (Eigen::Index v = 0; v < y.size(); ++v) {
    EXPECT_NEAR(std::abs(y[v]), 1.0, 1e-15);
    const double k = std::arg(y[v]) * 2.0 * n / pi;
    EXPECT_NEAR(k, std::round(k), 1e-9);
    steps.insert(std::lround(k));
  }
  EXPECT_EQ(steps.size(), n);
  EXPECT_EQ(*steps.begin(), 0);
  EXPECT_EQ(*steps.rbegin(), static_cast<long>(n - 1));
  EXPECT_EQ(initial_embedding(n, 9), y);
  EXPECT_NE(initial_embedding(n, 10), y);
  EXPECT_THROW(initial_embedding(0, 1), std::invalid_argument);
}

struct Eigenpair {
  double value;
  ComplexSignal vector;
};

Eigenpair smallest_eigenpair(const ConnectionGraph& g) {
  Eigen::SelfAdjointEigenSolver<HermitianMatrix> eig{HermitianMatrix(normalized_laplacian(g))};
  return {eig.eigenvalues()[0], eig.eigenvectors().col(0)};
}

TEST(PowerMethod, ExactModeFindsSmallestEigenvector) {
  Rng rng(5);
  for (int t = 0; t < 5; ++t) {
    const auto g = connected_graph(20, 0.3, pi / 4, rng);
    PowerMethodConfig cfg;
    cfg.k = 500;
    cfg.q = 0.5;
    cfg.initial = initial_embedding(20, t);
    const ComplexSignal y = power_method(g, cfg);
    EXPECT_NEAR(y.norm(), 1.0, 1e-12);
    EXPECT_GE(std::abs(y.dot(smallest_eigenpair(g).vector)), 0.999);
  }
}

TEST(PowerMethod, EigenvectorIsFixedPoint) {
  Rng rng(6);
  const auto g = connected_graph(15, 0.4, pi / 3, rng);
  const auto [lambda, v] = smallest_eigenpair(g);
  for (std::size_t k : {1u, 4u, 30u}) {
    PowerMethodConfig cfg;
    cfg.k = k;
    cfg.initial = v;
    const ComplexSignal y = power_method(g, cfg);
    EXPECT_LT((align_global_phase(y) - align_global_phase(v)).norm(), 1e-9);
  }
}

TEST(PowerMethod, RayleighQuotientNonIncreasing) {
  Rng rng(7);
  for (int t = 0; t < 5; ++t) {
    const auto g = connected_graph(30, 0.3, pi / 2, rng);
    const HermitianSparseMatrix l = normalized_laplacian(g);
    PowerMethodConfig cfg;
    cfg.k = 60;
    cfg.q = 0.3;
    cfg.initial = testing::random_signal(30, rng);
    double previous = rayleigh_quotient(l, cfg.initial);
    power_method(g, cfg, [&](std::size_t, const ComplexSignal& y) {
      const double rq = rayleigh_quotient(l, y);
      EXPECT_LE(rq, previous + 1e-9);
      previous = rq;
    });
  }
}

TEST(PowerMethod, EstimatorModeTracksExactMode) {
  Rng rng(8);
  const auto g = connected_graph(50, 0.2, pi / 200, rng);
  PowerMethodConfig exact;
  exact.k = 3;
  exact.q = 0.5;
  exact.initial = initial_embedding(50, 3);
  const ComplexSignal reference = power_method(g, exact);
  for (auto kind : {EstimatorKind::kTilde, EstimatorKind::kBar, EstimatorKind::kHat}) {
    PowerMethodConfig mc = exact;
    mc.mode = ApplyMode::kEstimator;
    mc.kind = kind;
    mc.m = 10000;
    mc.seed = 17;
    EXPECT_LE((power_method(g, mc) - reference).norm(), 0.05) << to_string(kind);
  }
}

TEST(PowerMethod, SharedForestsMode) {
  Rng rng(9);
  const auto g = connected_graph(30, 0.3, pi / 120, rng);
  PowerMethodConfig cfg;
  cfg.k = 4;
  cfg.initial = initial_embedding(30, 1);
  cfg.mode = ApplyMode::kEstimator;
  cfg.m = 2000;
  cfg.fresh_samples = false;
  const ComplexSignal shared = power_method(g, cfg);
  EXPECT_EQ(power_method(g, cfg), shared);
  cfg.mode = ApplyMode::kExactDirect;
  EXPECT_LE((power_method(g, cfg) - shared).norm(), 0.1);
}

TEST(PowerMethod, RejectsBadConfig) {
  const auto g = triangle_graph(0.1);
  PowerMethodConfig cfg;
  cfg.initial = ComplexSignal::Zero(3);
  EXPECT_THROW(power_method(g, cfg), std::invalid_argument);
  cfg.initial = ComplexSignal::Ones(3);
  cfg.k = 0;
  EXPECT_THROW(power_method(g, cfg), std::invalid_argument);
  cfg.k = 1;
  cfg.initial = ComplexSignal::Ones(2);
  EXPECT_THROW(power_method(g, cfg), std::invalid_argument);
}

TEST(NormalizedResolvent, UnbiasedApplication) {
  Rng rng(10);
  const auto g = connected_graph(25, 0.3, pi / 100, rng);
  const double q = 0.2;
  const ComplexSignal x = testing::random_signal(25, rng);
  const HermitianSolver solver(add_diagonal(normalized_laplacian(g), Eigen::VectorXd::Constant(25, q)));
  const ComplexSignal exact = q * solver.solve(x);
  const NormalizedResolvent resolvent(g, q);
  const std::size_t m = 10000;
  for (auto kind : {EstimatorKind::kTilde, EstimatorKind::kBar, EstimatorKind::kHat}) {
    const auto r = resolvent.apply(x, kind, m, 31);
    for (Eigen::Index v = 0; v < 25; ++v) {
      const double se = std::sqrt(r.per_node_sample_variance[v] / static_cast<double>(m));
      EXPECT_LE(std::abs(r.estimate[v] - exact[v]), 4.0 * se + 1e-12) << to_string(kind) << " " << v;
    }
  }
}

TEST(AlignGlobalPhase, LargestEntryBecomesPositiveReal) {
  ComplexSignal v(3);
  v << Complex(0.1, 0.2), Complex(0.0, -3.0), Complex(1.0, 1.0);
  const ComplexSignal a = align_global_phase(v);
  EXPECT_NEAR(a[1].real(), 3.0, 1e-15);
  EXPECT_NEAR(a[1].imag(), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(a.dot(v)), v.squaredNorm(), 1e-12);
}

}  // namespace
}  // namespace mtsf
