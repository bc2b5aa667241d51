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


#include "mtsf/estimators.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <sstream>

#include "mtsf/linalg.hpp"
#include "mtsf/oracle.hpp"
#include "test_util.hpp"

namespace mtsf {
namespace {

using std::numbers::pi;
const Complex I{0.0, 1.0};

ComplexSignal triangle_signal() {
  ComplexSignal g(3);
  g << 1.0, I, -1.0;
  return g;
}

TEST(Tilde, EdgelessGraphReturnsSignal) {
  const ConnectionGraph g(4, {});
  Rng rng(1);
  const ComplexSignal sig = testing::random_signal(4, rng);
  const SmoothingProblem p(g, sig, NodeWeights::uniform(4, 0.5));
  const auto phi = sample_mtsf(g, p.q(), rng);
  EXPECT_EQ(estimate_tilde(phi, p), sig);
  EXPECT_EQ(estimate_bar(phi, p), sig);
}

TEST(Tilde, UnicycleNodesGetZero) {
  const auto g = triangle_graph(pi / 6);
  const SmoothingProblem p(g, triangle_signal(), NodeWeights::uniform(3, 1.0));
  const auto phi = Mtsf::assemble(g, {0, 1, 2}, {});
  EXPECT_TRUE(estimate_tilde(phi, p).isZero(0.0));
  EXPECT_TRUE(estimate_bar(phi, p).isZero(0.0));
}

TEST(Tilde, PropagatesRootValueWithPhase) {
  const ConnectionGraph g(3, {{0, 1, 1.0, 0.3}, {1, 2, 1.0, -0.5}});
  ComplexSignal sig(3);
  sig << 2.0, 5.0, 7.0;
  const SmoothingProblem p(g, sig, NodeWeights::uniform(3, 1.0));
  const auto phi = Mtsf::assemble(g, {0, 1}, {1});
  const ComplexSignal f = estimate_tilde(phi, p);
  EXPECT_LT(std::abs(f[0] - 5.0 * std::polar(1.0, -0.3)), 1e-15);
  EXPECT_LT(std::abs(f[1] - 5.0), 1e-15);
  EXPECT_LT(std::abs(f[2] - 5.0 * std::polar(1.0, -0.5)), 1e-15);
}

TEST(Tilde, TriangleExpectationIsSmoothedSignal) {
  const auto g = triangle_graph(pi / 6);
  const auto q = NodeWeights::uniform(3, 1.0);
  const SmoothingProblem p(g, triangle_signal(), q);
  ComplexSignal mean = ComplexSignal::Zero(3);
  for (const auto& e : enumerate_mtsfs(g, q).entries) mean += e.probability * estimate_tilde(e.forest, p);
  HermitianMatrix lq = dense_magnetic_laplacian(g) + HermitianMatrix::Identity(3, 3);
  EXPECT_LT((mean - lq.inverse() * triangle_signal()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Bar, SingletonTreeKeepsValue) {
  const ConnectionGraph g(2, {{0, 1, 1.0, 0.4}});
  ComplexSignal sig(2);
  sig << Complex(1.0, 2.0), Complex(-3.0, 0.5);
  const SmoothingProblem p(g, sig, NodeWeights({0.3, 2.0}));
  const auto phi = Mtsf::assemble(g, {}, {0, 1});
  EXPECT_EQ(estimate_bar(phi, p), sig);
}

TEST(Bar, ZeroPhasePathAveragesSignal) {
  const ConnectionGraph g(2, {{0, 1, 1.0, 0.0}});
  ComplexSignal sig(2);
  sig << 3.0, 8.0;
  const SmoothingProblem p(g, sig, NodeWeights::uniform(2, 0.7));
  for (NodeId root : {0u, 1u}) {
    const ComplexSignal f = estimate_bar(Mtsf::assemble(g, {0}, {root}), p);
    EXPECT_NEAR(std::abs(f[0] - 5.5), 0.0, 1e-14);
    EXPECT_NEAR(std::abs(f[1] - 5.5), 0.0, 1e-14);
  }
}

TEST(Bar, MatchesPairwiseDefinition) {
  // f_bar(v) = sum_w q_w psi_{w->v} g(w) / sum_w q_w, with psi from explicit paths.
  Rng rng(3);
  const auto g = testing::random_graph(9, 0.5, pi / 36, rng);
  std::vector<double> qv(9);
  for (auto& x : qv) x = 0.1 + rng.uniform();
  const SmoothingProblem p(g, testing::random_signal(9, rng), NodeWeights(qv));
  for (int t = 0; t < 20; ++t) {
    const auto phi = sample_mtsf(g, p.q(), rng);
    const ComplexSignal bar = estimate_bar(phi, p);
    for (const auto& c : phi.components) {
      if (!c.is_tree()) continue;
      for (NodeId v : c.nodes) {
        Complex num = 0.0;
        double den = 0.0;
        for (NodeId w : c.nodes) {
          // psi_{w -> v} = psi_{w -> r} psi_{r -> v}
          const Complex psi = std::conj(phi.root_to_node_phase[w]) * phi.root_to_node_phase[v];
          num += qv[w] * psi * p.signal()[w];
          den += qv[w];
        }
        EXPECT_LT(std::abs(bar[v] - num / den), 1e-12);
      }
    }
  }
}

TEST(Hat, FixedPointAndZeroAlpha) {
  Rng rng(5);
  const auto g = testing::random_graph(8, 0.6, pi / 32, rng);
  const SmoothingProblem p(g, testing::random_signal(8, rng), NodeWeights::uniform(8, 0.4));
  const ComplexSignal f_o = solve_exact(p);
  EXPECT_LT((estimate_hat(f_o, p, 0.7) - f_o).cwiseAbs().maxCoeff(), 1e-12);
  const ComplexSignal arbitrary = testing::random_signal(8, rng);
  EXPECT_EQ(estimate_hat(arbitrary, p, 0.0), arbitrary);
}

TEST(Hat, RejectsNonUniformWeightsUnlessAllowed) {
  const auto g = triangle_graph(0.1);
  const SmoothingProblem p(g, triangle_signal(), NodeWeights({1.0, 2.0, 1.0}));
  EXPECT_THROW(estimate_hat(triangle_signal(), p, 0.1), std::invalid_argument);
  EXPECT_NO_THROW(estimate_hat(triangle_signal(), p, 0.1, true));
  EXPECT_THROW(smooth(p, EstimatorKind::kHat, 4, 1), std::invalid_argument);
}

TEST(Hat, ExactVarianceBelowBarOnUniformFixtures) {
  for (const auto& fx : oracle_fixtures()) {
    if (!fx.q.is_uniform()) continue;
    const auto mom = exact_estimator_moments(fx.graph, fx.q, fx.signal);
    ASSERT_TRUE(mom.hat.has_value());
    for (Eigen::Index v = 0; v < fx.signal.size(); ++v) {
      EXPECT_LE(mom.hat->variance[v], mom.bar.variance[v] + 1e-12) << fx.name << " node " << v;
    }
  }
}

TEST(DefaultAlpha, Values) {
  EXPECT_DOUBLE_EQ(default_alpha(1.0, 2.0), 0.4);
  EXPECT_DOUBLE_EQ(default_alpha(3.0, 0.0), 2.0);
  EXPECT_NEAR(default_alpha(1e12, 5.0), 2.0, 1e-10);
  EXPECT_NEAR(default_alpha(0.1, 239.2), 0.2 / 478.5, 1e-15);
  EXPECT_NEAR(default_alpha(0.1, 239.2), 4.18e-4, 5e-7);
  EXPECT_THROW(default_alpha(0.0, 1.0), std::invalid_argument);
  EXPECT_THROW(default_alpha(1.0, -1.0), std::invalid_argument);
}

TEST(DefaultAlpha, ErInstanceUsesMeasuredMaxDegree) {
  // Dense ER graph, n = 300, s = 0.8: d_max comes from the instance itself.
  Rng rng(2023);
  const auto g = testing::random_graph(300, 0.8, 0.0, rng);
  const double d_max = g.max_degree();
  EXPECT_GT(d_max, 239.2);
  EXPECT_LT(d_max, 270.0);
  const double alpha = default_alpha(0.1, d_max);
  EXPECT_DOUBLE_EQ(alpha, 0.2 / (0.1 + 2.0 * d_max));
  EXPECT_GT(alpha, 3.5e-4);
  EXPECT_LT(alpha, 4.18e-4);
}

TEST(Smooth, SingleSampleEqualsEstimator) {
  Rng rng(6);
  const auto g = testing::random_graph(10, 0.5, pi / 40, rng);
  const SmoothingProblem p(g, testing::random_signal(10, rng), NodeWeights::uniform(10, 0.3));
  const auto phi = sample_mtsf(g, SamplerConfig{derive_seed(77, 0), p.q()});
  EXPECT_EQ(smooth(p, EstimatorKind::kTilde, 1, 77).estimate, estimate_tilde(phi, p));
  EXPECT_EQ(smooth(p, EstimatorKind::kBar, 1, 77).estimate, estimate_bar(phi, p));
  const auto hat = smooth(p, EstimatorKind::kHat, 1, 77);
  EXPECT_EQ(hat.estimate, estimate_hat(estimate_bar(phi, p), p, default_alpha(0.3, g.max_degree())));
  EXPECT_TRUE(hat.per_node_sample_variance.isZero(0.0));
  EXPECT_EQ(hat.m_used, 1u);
}

TEST(Smooth, ConstantSignalWithTrivialConnectionIsExact) {
  Rng rng(7);
  auto g = testing::random_graph(20, 0.3, 0.0, rng);
  std::vector<Edge> edges = g.edges();
  for (NodeId v = 0; v + 1 < 20; ++v) edges.push_back({v, v + 1, 1.0, 0.0});  // connected
  g = ConnectionGraph(20, edges);
  const Complex c{1.5, -0.5};
  const SmoothingProblem p(g, ComplexSignal::Constant(20, c), NodeWeights::uniform(20, 0.2));
  for (auto kind : {EstimatorKind::kTilde, EstimatorKind::kBar, EstimatorKind::kHat}) {
    for (std::size_t m : {1u, 7u, 40u}) {
      const auto r = smooth(p, kind, m, 3);
      EXPECT_LT((r.estimate.array() - c).abs().maxCoeff(), 1e-12) << to_string(kind) << " m=" << m;
    }
  }
}

TEST(Smooth, VarianceIsUnbiasedSampleVariance) {
  Rng rng(8);
  const auto g = testing::random_graph(12, 0.4, pi / 48, rng);
  const SmoothingProblem p(g, testing::random_signal(12, rng), NodeWeights::uniform(12, 0.5));
  const std::size_t m = 75;  // spans several reduction blocks
  const auto r = smooth(p, EstimatorKind::kBar, m, 21);
  const auto forests = sample_batch(g, SamplerConfig{21, p.q()}, m);
  ComplexSignal mean = ComplexSignal::Zero(12);
  for (const auto& f : forests) mean += estimate_bar(f, p);
  mean /= static_cast<double>(m);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(12);
  for (const auto& f : forests) var += (estimate_bar(f, p) - mean).cwiseAbs2();
  var /= static_cast<double>(m - 1);
  EXPECT_LT((r.estimate - mean).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((r.per_node_sample_variance - var).cwiseAbs().maxCoeff(), 1e-12);
  const auto again = smooth_with_forests(p, EstimatorKind::kBar, forests);
  EXPECT_LT((again.estimate - mean).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Smooth, DeterministicAcrossWorkerCounts) {
  Rng rng(9);
  const auto g = testing::random_graph(25, 0.3, pi / 100, rng);
  const SmoothingProblem p(g, testing::random_signal(25, rng), NodeWeights::uniform(25, 0.3));
  const auto base = smooth(p, EstimatorKind::kHat, 200, 5);
  for (unsigned w : {2u, 5u}) {
    SmoothOptions o;
    o.workers = w;
    const auto other = smooth(p, EstimatorKind::kHat, 200, 5, o);
    EXPECT_EQ(other.estimate, base.estimate);
    EXPECT_EQ(other.per_node_sample_variance, base.per_node_sample_variance);
  }
}

TEST(Smooth, ZeroSignalShortCircuits) {
  const auto g = triangle_graph(pi / 6);
  const SmoothingProblem p(g, ComplexSignal::Zero(3), NodeWeights::uniform(3, 1.0));
  const auto r = smooth(p, EstimatorKind::kTilde, 10, 1);
  EXPECT_TRUE(r.estimate.isZero(0.0));
  EXPECT_EQ(r.m_used, 0u);
  EXPECT_THROW(smooth(p, EstimatorKind::kTilde, 0, 1), std::invalid_argument);
}

TEST(Smooth, ConvergesToExactSolution) {
  Rng rng(10);
  const auto g = testing::random_graph(30, 0.3, pi / 120, rng);
  const SmoothingProblem p(g, testing::random_signal(30, rng), NodeWeights::uniform(30, 0.5));
  const ComplexSignal f_o = solve_exact(p);
  for (auto kind : {EstimatorKind::kTilde, EstimatorKind::kBar, EstimatorKind::kHat}) {
    const auto r = smooth(p, kind, 4000, 11);
    for (Eigen::Index v = 0; v < 30; ++v) {
      const double se = std::sqrt(r.per_node_sample_variance[v] / 4000.0);
      EXPECT_LE(std::abs(r.estimate[v] - f_o[v]), 5.0 * se + 1e-12) << to_string(kind) << " " << v;
    }
  }
}

TEST(Smooth, ErrorDecaysAtMonteCarloRate) {
  Rng rng(12);
  const auto g = testing::random_graph(60, 0.3, pi / 240, rng);
  const SmoothingProblem p(g, testing::random_signal(60, rng), NodeWeights::uniform(60, 0.5));
  const ComplexSignal f_o = solve_exact(p);
  const std::vector<double> ms{1, 10, 100, 1000};
  for (auto kind : {EstimatorKind::kTilde, EstimatorKind::kBar, EstimatorKind::kHat}) {
    std::vector<double> err;
    for (double m : ms) {
      double acc = 0.0;
      const int runs = 10;
      for (int r = 0; r < runs; ++r) {
        acc += (smooth(p, kind, static_cast<std::size_t>(m), 1000 + r).estimate - f_o).norm();
      }
      err.push_back(acc / runs);
    }
    const double slope = testing::loglog_slope(ms, err);
    EXPECT_NEAR(slope, -0.5, 0.1) << to_string(kind);
  }
}

TEST(NormalizedResolvent, RejectsIsolatedNodes) {
  const ConnectionGraph g(3, {{0, 1, 1.0, 0.0}});
  EXPECT_THROW(NormalizedResolvent(g, 0.1), std::invalid_argument);
  EXPECT_THROW(NormalizedResolvent(triangle_graph(0.0), 0.0), std::invalid_argument);
}

TEST(NormalizedResolvent, AlphaUsesSpectralBound) {
  const NormalizedResolvent r(triangle_graph(0.0), 0.1);
  EXPECT_DOUBLE_EQ(r.alpha(), 0.2 / 2.1);
  EXPECT_DOUBLE_EQ(r.node_weights()[1], 0.2);
}

TEST(EstimateCsv, Layout) {
  EstimateResult r;
  r.estimate = ComplexSignal(2);
  r.estimate << Complex(1.0, -2.0), Complex(0.5, 0.0);
  r.per_node_sample_variance = Eigen::VectorXd(2);
  r.per_node_sample_variance << 0.25, 0.0;
  std::ostringstream out;
  write_estimate_csv(out, r);
  EXPECT_EQ(out.str(), "node,re_estimate,im_estimate,variance\n0,1,-2,0.25\n1,0.5,0,0\n");
}

}  // namespace
}  // namespace mtsf
