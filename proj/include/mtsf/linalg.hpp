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
#include "mtsf/graph.hpp"
#include "mtsf/random.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <variant>
#include <vector>

namespace mtsf {

/// Factorization of a Hermitian positive-definite matrix. Dense Cholesky up to
/// `kDenseLimit` nodes, sparse Cholesky with AMD ordering above.
class HermitianSolver {
 public:
  static constexpr Eigen::Index kDenseLimit = 2000;
  enum class Backend { kAuto, kDense, kSparse };

  explicit HermitianSolver(const HermitianSparseMatrix& a, Backend backend = Backend::kAuto) {
    if (a.rows() != a.cols()) throw std::invalid_argument("solver: matrix is not square");
    n_ = a.rows();
    if (backend == Backend::kAuto) backend = n_ <= kDenseLimit ? Backend::kDense : Backend::kSparse;
    if (backend == Backend::kDense) {
      dense_ = std::make_unique<HermitianMatrix>(a);
      dense_llt_ = std::make_unique<Eigen::LLT<Eigen::Ref<HermitianMatrix>>>(*dense_);
      if (dense_llt_->info() != Eigen::Success) {
        throw std::runtime_error("solver: dense Cholesky failed (matrix not Hermitian PD)");
      }
    } else {
      sparse_ = std::make_unique<SparseLlt>(a);
      if (sparse_->info() != Eigen::Success) {
        throw std::runtime_error("solver: sparse Cholesky failed (matrix not Hermitian PD)");
      }
    }
  }

  ComplexSignal solve(const ComplexSignal& b) const {
    if (b.size() != n_) throw std::invalid_argument("solver: right-hand side has wrong size");
    if (dense_llt_) return dense_llt_->solve(b);
    return sparse_->solve(b);
  }

  bool is_dense() const { return static_cast<bool>(dense_llt_); }

 private:
  using SparseLlt =
      Eigen::SimplicialLLT<HermitianSparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;

  Eigen::Index n_ = 0;
  std::unique_ptr<HermitianMatrix> dense_;  // factored in place
  std::unique_ptr<Eigen::LLT<Eigen::Ref<HermitianMatrix>>> dense_llt_;
  std::unique_ptr<SparseLlt> sparse_;
};

inline HermitianSparseMatrix add_diagonal(HermitianSparseMatrix a, const Eigen::VectorXd& diag) {
  HermitianSparseMatrix d(a.rows(), a.cols());
  std::vector<Eigen::Triplet<Complex>> trips;
  for (Eigen::Index i = 0; i < diag.size(); ++i) trips.emplace_back(i, i, diag[i]);
  d.setFromTriplets(trips.begin(), trips.end());
  return a + d;
}

/// f_o = (L + Q)^{-1} Q g by Cholesky.
inline ComplexSignal solve_exact(const SmoothingProblem& p,
                                 HermitianSolver::Backend backend = HermitianSolver::Backend::kAuto) {
  const auto& q = p.q().values();
  const Eigen::Map<const Eigen::VectorXd> qv(q.data(), static_cast<Eigen::Index>(q.size()));
  const HermitianSolver solver(add_diagonal(magnetic_laplacian(p.graph()), qv), backend);
  return solver.solve(p.signal().cwiseProduct(qv.cast<Complex>()));
}

/// D^{-1/2} L D^{-1/2}. Every node needs a positive degree.
inline HermitianSparseMatrix normalized_laplacian(const ConnectionGraph& g) {
  Eigen::VectorXd inv_sqrt(static_cast<Eigen::Index>(g.n_nodes()));
  for (NodeId v = 0; v < g.n_nodes(); ++v) {
    if (!(g.degree(v) > 0.0)) {
      throw std::invalid_argument("normalized_laplacian: node " + std::to_string(v) +
                                  " is isolated");
    }
    inv_sqrt[v] = 1.0 / std::sqrt(g.degree(v));
  }
  const auto s = inv_sqrt.cast<Complex>().asDiagonal();
  return HermitianSparseMatrix(s * magnetic_laplacian(g) * s);
}

/// Rotates so the largest-modulus entry is real and positive.
inline ComplexSignal align_global_phase(const ComplexSignal& v) {
  if (v.size() == 0) return v;
  Eigen::Index best = 0;
  v.cwiseAbs().maxCoeff(&best);
  if (std::abs(v[best]) == 0.0) return v;
  return v * (std::abs(v[best]) / v[best]);
}

inline double rayleigh_quotient(const HermitianSparseMatrix& a, const ComplexSignal& y) {
  return (y.dot(a * y)).real() / y.squaredNorm();
}

enum class ApplyMode { kExactDirect, kEstimator };

struct PowerMethodConfig {
  std::size_t k = 10;
  double q = 0.1;
  ComplexSignal initial;
  ApplyMode mode = ApplyMode::kExactDirect;
  // Estimator mode only.
  EstimatorKind kind = EstimatorKind::kHat;
  std::size_t m = 5;
  bool fresh_samples = true;  // false: one batch of forests reused by every iteration
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

/// Iterates y <- M y / ||M y|| with M = q (L~ + qI)^{-1}, either by direct
/// solves or through the Monte-Carlo estimators. `observer(t, y_t)` is called
/// after each iteration when provided.
inline ComplexSignal power_method(
    const ConnectionGraph& g, const PowerMethodConfig& cfg,
    const std::function<void(std::size_t, const ComplexSignal&)>& observer = {}) {
  if (cfg.k == 0) throw std::invalid_argument("power_method: k must be at least 1");
  check_signal(g, cfg.initial);
  if (!(cfg.initial.norm() > 0.0)) throw std::invalid_argument("power_method: zero initial vector");
  if (!(cfg.q > 0.0)) throw std::invalid_argument("power_method: q must be positive");

  std::function<ComplexSignal(const ComplexSignal&, std::size_t)> apply;
  std::unique_ptr<HermitianSolver> solver;
  std::unique_ptr<NormalizedResolvent> resolvent;
  std::vector<Mtsf> shared_forests;

  if (cfg.mode == ApplyMode::kExactDirect) {
    const Eigen::VectorXd shift = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.n_nodes()), cfg.q);
    solver = std::make_unique<HermitianSolver>(add_diagonal(normalized_laplacian(g), shift));
    apply = [&](const ComplexSignal& x, std::size_t) -> ComplexSignal {
      return cfg.q * solver->solve(x);
    };
  } else {
    if (cfg.m == 0) throw std::invalid_argument("power_method: m must be at least 1");
    resolvent = std::make_unique<NormalizedResolvent>(g, cfg.q);
    if (!cfg.fresh_samples) shared_forests = resolvent->draw_forests(cfg.m, cfg.seed, cfg.workers);
    apply = [&](const ComplexSignal& x, std::size_t t) -> ComplexSignal {
      if (cfg.fresh_samples) {
        return resolvent->apply(x, cfg.kind, cfg.m, derive_seed(cfg.seed, t), cfg.workers).estimate;
      }
      return resolvent->apply(x, cfg.kind, shared_forests).estimate;
    };
  }

  ComplexSignal y = cfg.initial / cfg.initial.norm();
  for (std::size_t t = 0; t < cfg.k; ++t) {
    ComplexSignal next = apply(y, t);
    const double norm = next.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw std::runtime_error("power_method: iterate vanished at step " + std::to_string(t + 1));
    }
    y = next / norm;
    if (observer) observer(t + 1, y);
  }
  return y;
}

/// y_0(v) = exp(i pi sigma(v) / (2n)) for a seeded random permutation sigma.
inline ComplexSignal initial_embedding(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("initial_embedding: n must be at least 1");
  std::vector<std::size_t> sigma(n);
  std::iota(sigma.begin(), sigma.end(), 0);
  Rng rng(seed);
  rng.shuffle(sigma);
  ComplexSignal y(static_cast<Eigen::Index>(n));
  for (std::size_t v = 0; v < n; ++v) {
    y[v] = unit_phase(std::numbers::pi * static_cast<double>(sigma[v]) / (2.0 * static_cast<double>(n)));
  }
  return y;
}

}  // namespace mtsf
