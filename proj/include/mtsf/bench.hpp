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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "mtsf/estimators.hpp"
#include "mtsf/linalg.hpp"

namespace mtsf {

struct TimingStats {
  double mean_time = 0.0;
  double std_time = 0.0;
  double median_time = 0.0;
  std::size_t reps = 0;
};

/// Runs `fn` `warmup` times untimed, then `reps` times on the steady clock.
template <typename F>
TimingStats time_repeated(F&& fn, std::size_t reps = 100, std::size_t warmup = 5) {
  if (reps == 0) throw std::invalid_argument("time_repeated: reps must be at least 1");
  for (std::size_t i = 0; i < warmup; ++i) fn();
  std::vector<double> t(reps);
  for (auto& x : t) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    x = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  TimingStats s;
  s.reps = reps;
  for (double x : t) s.mean_time += x / static_cast<double>(reps);
  if (reps > 1) {
    double ss = 0.0;
    for (double x : t) ss += (x - s.mean_time) * (x - s.mean_time);
    s.std_time = std::sqrt(ss / static_cast<double>(reps - 1));
  }
  std::sort(t.begin(), t.end());
  s.median_time = reps % 2 ? t[reps / 2] : 0.5 * (t[reps / 2 - 1] + t[reps / 2]);
  return s;
}

struct ErrorCurvePoint {
  std::size_t m = 0;
  double err_tilde = 0.0;
  double err_bar = 0.0;
  double err_hat = 0.0;
};

/// Mean of ||estimate - q (L~ + qI)^{-1} x|| over `runs` independent batches
/// for each m. The three estimators share the forests of each batch.
inline std::vector<ErrorCurvePoint> error_vs_m(const ConnectionGraph& g, double q, const ComplexSignal& x,
                                               std::span<const std::size_t> ms, std::size_t runs,
                                               std::uint64_t seed, unsigned workers = 1) {
  if (runs == 0) throw std::invalid_argument("error_vs_m: runs must be at least 1");
  const NormalizedResolvent resolvent(g, q);
  const auto n = static_cast<Eigen::Index>(g.n_nodes());
  const HermitianSolver solver(add_diagonal(normalized_laplacian(g), Eigen::VectorXd::Constant(n, q)));
  const ComplexSignal exact = q * solver.solve(x);

  std::vector<ErrorCurvePoint> curve;
  for (std::size_t k = 0; k < ms.size(); ++k) {
    ErrorCurvePoint pt;
    pt.m = ms[k];
    for (std::size_t r = 0; r < runs; ++r) {
      const auto forests = resolvent.draw_forests(ms[k], derive_seed(derive_seed(seed, k), r), workers);
      const double w = 1.0 / static_cast<double>(runs);
      pt.err_tilde += w * (resolvent.apply(x, EstimatorKind::kTilde, forests).estimate - exact).norm();
      pt.err_bar += w * (resolvent.apply(x, EstimatorKind::kBar, forests).estimate - exact).norm();
      pt.err_hat += w * (resolvent.apply(x, EstimatorKind::kHat, forests).estimate - exact).norm();
    }
    curve.push_back(pt);
  }
  return curve;
}

inline void write_error_csv(std::ostream& out, std::span<const ErrorCurvePoint> curve) {
  out << "m,err_tilde,err_bar,err_hat\n";
  for (const auto& p : curve) {
    out << p.m << ',' << detail::format_real(p.err_tilde) << ',' << detail::format_real(p.err_bar) << ','
        << detail::format_real(p.err_hat) << '\n';
  }
}

inline void write_timing_header(std::ostream& out) { out << "method,n,mean_time,std_time,median_time\n"; }

inline void write_timing_row(std::ostream& out, std::string_view method, std::size_t n, const TimingStats& s) {
  out << method << ',' << n << ',' << detail::format_real(s.mean_time) << ','
      << detail::format_real(s.std_time) << ',' << detail::format_real(s.median_time) << '\n';
}

}  // namespace mtsf
