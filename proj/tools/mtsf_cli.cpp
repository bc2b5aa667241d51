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

// mtsf_cli: instance generation, sampling, smoothing, ranking, oracle
// checks and benchmarks. Exit codes: 0 success, 1 validation error,
// 2 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mtsf.hpp"

namespace {

using namespace mtsf;

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

/// Runs body(i) for i in [0, count) on up to `workers` threads.
template <typename Body>
void parallel_for(std::size_t count, unsigned workers, Body&& body) {
  const unsigned threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto run = [&] {
    for (std::size_t i; (i = next++) < count;) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(run);
  run();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::size_t n = 300;
  double s = 0.8;
  double p = 0.9;
  double delta = 0.25;
  std::uint64_t seed = 0;
  std::string output;
  std::string graph_out;
  std::string signal_out;
};

int cmd_gen(const GenArgs& a) {
  const auto cs = generate_ero(a.n, a.s, a.p, a.seed);
  auto out = open_out(a.output);
  write_instance(out, cs);
  if (!a.graph_out.empty()) {
    auto g = open_out(a.graph_out);
    write_graph(g, comparison_graph(cs, a.delta));
  }
  if (!a.signal_out.empty()) {
    auto s = open_out(a.signal_out);
    write_signal(s, initial_embedding(a.n, a.seed));
  }
  return 0;
}

struct SampleArgs {
  std::string graph;
  double q = 0.1;
  std::size_t m = 1;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string output;
};

int cmd_sample(const SampleArgs& a) {
  auto in = open_in(a.graph);
  const auto g = read_graph(in);
  const auto forests = sample_batch(g, SamplerConfig{a.seed, NodeWeights::uniform(g.n_nodes(), a.q)}, a.m, a.workers);
  std::ofstream file;
  if (!a.output.empty()) file = open_out(a.output);
  std::ostream& out = a.output.empty() ? std::cout : file;
  for (std::size_t i = 0; i < forests.size(); ++i) {
    out << "# forest " << i << '\n';
    write_mtsf(out, forests[i]);
  }
  return 0;
}

struct SmoothArgs {
  std::string graph;
  std::string signal;
  double q = 0.1;
  std::size_t m = 5;
  std::string estimator = "hat";
  std::optional<double> alpha;
  bool exact = false;
  bool normalized = false;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string output;
};

int cmd_smooth(const SmoothArgs& a) {
  auto gin = open_in(a.graph);
  const auto g = read_graph(gin);
  auto sin = open_in(a.signal);
  const ComplexSignal x = read_signal(sin, g.n_nodes());
  const auto kind = parse_estimator_kind(a.estimator);

  EstimateResult r;
  const auto t0 = std::chrono::steady_clock::now();
  if (a.exact) {
    if (a.normalized) {
      const HermitianSolver solver(add_diagonal(normalized_laplacian(g),
                                                Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.n_nodes()), a.q)));
      r.estimate = a.q * solver.solve(x);
    } else {
      r.estimate = solve_exact(SmoothingProblem(g, x, NodeWeights::uniform(g.n_nodes(), a.q)));
    }
    r.per_node_sample_variance = Eigen::VectorXd::Zero(r.estimate.size());
  } else if (a.normalized) {
    if (a.alpha) throw std::invalid_argument("--alpha is fixed to 2q/(q+2) in normalized mode");
    r = NormalizedResolvent(g, a.q).apply(x, kind, a.m, a.seed, a.workers);
  } else {
    SmoothOptions opts;
    opts.workers = a.workers;
    opts.alpha = a.alpha;
    r = smooth(SmoothingProblem(g, x, NodeWeights::uniform(g.n_nodes(), a.q)), kind, a.m, a.seed, opts);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  auto out = open_out(a.output);
  write_estimate_csv(out, r);
  nlohmann::ordered_json meta;
  meta["seed"] = a.seed;
  meta["q"] = a.q;
  meta["method"] = a.exact ? "exact" : std::string(to_string(kind));
  meta["normalized"] = a.normalized;
  meta["m"] = a.exact ? 0 : a.m;
  meta["m_used"] = r.m_used;
  meta["wall_time"] = wall;
  auto side = open_out(a.output + ".json");
  side << meta.dump(2) << '\n';
  return 0;
}

struct RankArgs {
  std::string instance;
  std::size_t n = 300;
  double s = 0.8;
  double p = 0.9;
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  double q = 0.1;
  std::size_t k = 10;
  std::size_t m = 5;
  std::string mode = "exact";
  std::string estimator = "hat";
  double delta = 0.25;
  bool reuse_forests = false;
  unsigned workers = 1;
  std::string output;
  std::string ranking_out;
};

int cmd_rank(const RankArgs& a) {
  if (a.seeds == 0) throw std::invalid_argument("--seeds must be at least 1");
  PowerMethodConfig base;
  base.q = a.q;
  base.k = a.k;
  base.m = a.m;
  base.fresh_samples = !a.reuse_forests;
  if (a.mode == "exact") {
    base.mode = ApplyMode::kExactDirect;
  } else if (a.mode == "estimator") {
    base.mode = ApplyMode::kEstimator;
    base.kind = parse_estimator_kind(a.estimator);
  } else {
    throw std::invalid_argument("--mode must be exact or estimator, got '" + a.mode + "'");
  }
  const std::string mode_label = a.mode == "exact" ? "exact" : "estimator_" + a.estimator;

  std::optional<ComparisonSet> fixed;
  if (!a.instance.empty()) {
    auto in = open_in(a.instance);
    fixed = read_instance(in);
  }

  std::vector<ComparisonSet> sets(a.seeds);
  std::vector<RankingOutcome> outcomes(a.seeds);
  parallel_for(a.seeds, a.workers, [&](std::size_t i) {
    const std::uint64_t seed = a.seed + i;
    sets[i] = fixed ? *fixed : generate_ero(a.n, a.s, a.p, seed);
    PowerMethodConfig pm = base;
    pm.seed = seed;
    outcomes[i] = rank_pipeline(sets[i], pm, a.delta);
  });

  std::ofstream file;
  if (!a.output.empty()) file = open_out(a.output);
  std::ostream& out = a.output.empty() ? std::cout : file;
  out << "seed,n,s,p,q,k,m,mode,tau,flipped,wall_time\n";
  double mean_tau = 0.0;
  for (std::size_t i = 0; i < a.seeds; ++i) {
    const auto& cs = sets[i];
    const auto& o = outcomes[i];
    out << a.seed + i << ',' << cs.n << ',' << detail::format_real(cs.s) << ',' << detail::format_real(cs.p) << ','
        << detail::format_real(a.q) << ',' << a.k << ',' << (base.mode == ApplyMode::kEstimator ? a.m : 0) << ','
        << mode_label << ',' << detail::format_real(o.kendall_tau) << ',' << (o.orientation_flipped ? 1 : 0) << ','
        << detail::format_real(o.wall_time) << '\n';
    mean_tau += o.kendall_tau / static_cast<double>(a.seeds);
  }
  if (!a.ranking_out.empty()) {
    auto r = open_out(a.ranking_out);
    r << "node,rank,ground_truth\n";
    for (std::size_t v = 0; v < sets[0].n; ++v) {
      r << v << ',' << outcomes[0].ranking[v] << ',' << sets[0].ground_truth[v] << '\n';
    }
  }
  if (!a.output.empty()) std::cout << "mean_tau " << detail::format_real(mean_tau) << " over " << a.seeds << " runs\n";
  return 0;
}

struct OracleArgs {
  std::string fixture;
  std::string graph;
  std::string signal;
  double q = 1.0;
  std::string catalog;
  bool list = false;
};

int cmd_oracle(const OracleArgs& a) {
  std::vector<OracleFixture> cases;
  if (!a.graph.empty()) {
    auto gin = open_in(a.graph);
    auto g = read_graph(gin);
    ComplexSignal x = ComplexSignal::Ones(static_cast<Eigen::Index>(g.n_nodes()));
    if (!a.signal.empty()) {
      auto sin = open_in(a.signal);
      x = read_signal(sin, g.n_nodes());
    }
    const auto n = g.n_nodes();
    cases.push_back({a.graph, std::move(g), NodeWeights::uniform(n, a.q), x});
  } else {
    for (auto& f : oracle_fixtures()) {
      if (a.list) {
        std::cout << f.name << '\n';
      } else if (a.fixture.empty() || a.fixture == f.name) {
        cases.push_back(std::move(f));
      }
    }
    if (a.list) return 0;
    if (cases.empty()) throw std::invalid_argument("unknown fixture '" + a.fixture + "' (see --list)");
  }
  if (!a.catalog.empty()) {
    if (cases.size() != 1) throw std::invalid_argument("--catalog needs a single fixture or --graph");
    auto out = open_out(a.catalog);
    write_catalog_csv(out, enumerate_mtsfs(cases[0].graph, cases[0].q));
  }

  std::size_t failures = 0;
  for (const auto& c : cases) {
    for (const auto& chk : run_oracle_checks(c.graph, c.q, c.signal)) {
      std::cout << (chk.pass() ? "PASS " : "FAIL ") << c.name << ' ' << chk.name << " error="
                << detail::format_real(chk.error) << " tol=" << chk.tolerance << '\n';
      failures += !chk.pass();
    }
  }
  if (failures) {
    std::cerr << failures << " oracle check(s) failed\n";
    return 2;
  }
  std::cout << "all oracle identities hold\n";
  return 0;
}

struct BenchTimingArgs {
  std::vector<std::size_t> sizes{10, 100, 1000};
  std::vector<std::string> methods{"estimator_hat", "direct_solve", "power_method_exact"};
  std::size_t reps = 100;
  std::size_t warmup = 5;
  double s = 0.8;
  double p = 0.9;
  double q = 0.1;
  std::size_t m = 5;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::string output;
};

int cmd_bench_timing(const BenchTimingArgs& a) {
  for (const auto& method : a.methods) {
    if (method != "direct_solve" && method != "power_method_exact" && method != "power_method_estimator" &&
        method.rfind("estimator_", 0) != 0) {
      throw std::invalid_argument("unknown bench method '" + method + "'");
    }
    if (method.rfind("estimator_", 0) == 0) parse_estimator_kind(method.substr(10));
  }
  std::ofstream file;
  if (!a.output.empty()) file = open_out(a.output);
  std::ostream& out = a.output.empty() ? std::cout : file;
  write_timing_header(out);

  for (std::size_t n : a.sizes) {
    const auto cs = generate_ero(n, a.s, a.p, a.seed);
    const auto g = comparison_graph(cs);
    const ComplexSignal x = initial_embedding(n, a.seed);
    for (const auto& method : a.methods) {
      std::uint64_t rep = 0;
      TimingStats st;
      if (method == "direct_solve") {
        const auto shifted = add_diagonal(normalized_laplacian(g), Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), a.q));
        st = time_repeated([&] { return a.q * HermitianSolver(shifted).solve(x); }, a.reps, a.warmup);
      } else if (method.rfind("power_method_", 0) == 0) {
        PowerMethodConfig pm;
        pm.q = a.q;
        pm.k = a.k;
        pm.m = a.m;
        pm.initial = x;
        pm.mode = method == "power_method_exact" ? ApplyMode::kExactDirect : ApplyMode::kEstimator;
        st = time_repeated([&] { pm.seed = rep++; return power_method(g, pm); }, a.reps, a.warmup);
      } else {
        const auto kind = parse_estimator_kind(method.substr(10));
        const NormalizedResolvent resolvent(g, a.q);
        st = time_repeated([&] { return resolvent.apply(x, kind, a.m, rep++); }, a.reps, a.warmup);
      }
      write_timing_row(out, method, n, st);
      out.flush();
    }
  }
  return 0;
}

struct BenchErrorArgs {
  std::size_t n = 300;
  double s = 0.8;
  double p = 0.6;
  double q = 0.1;
  std::vector<std::size_t> ms{1, 10, 100, 1000};
  std::size_t runs = 20;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string output;
};

int cmd_bench_error(const BenchErrorArgs& a) {
  const auto cs = generate_ero(a.n, a.s, a.p, a.seed);
  const auto g = comparison_graph(cs);
  const auto curve = error_vs_m(g, a.q, initial_embedding(a.n, a.seed), a.ms, a.runs, a.seed, a.workers);
  std::ofstream file;
  if (!a.output.empty()) file = open_out(a.output);
  write_error_csv(a.output.empty() ? std::cout : file, curve);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte-Carlo Tikhonov smoothing of complex graph signals with random spanning forests"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* sc_gen = app.add_subcommand("gen", "Generate an ERO comparison instance");
  sc_gen->add_option("--n", gen.n, "Number of items")->capture_default_str();
  sc_gen->add_option("--s", gen.s, "Observation probability")->capture_default_str();
  sc_gen->add_option("--p", gen.p, "Truthful-comparison probability")->capture_default_str();
  sc_gen->add_option("--delta", gen.delta, "Connection scale for --graph")->capture_default_str();
  sc_gen->add_option("--seed", gen.seed)->capture_default_str();
  sc_gen->add_option("-o,--output", gen.output, "Instance file")->required();
  sc_gen->add_option("--graph", gen.graph_out, "Also write the comparison graph edge list");
  sc_gen->add_option("--signal", gen.signal_out, "Also write the initial embedding as a signal");

  SampleArgs sample;
  auto* sc_sample = app.add_subcommand("sample", "Draw multi-type spanning forests");
  sc_sample->add_option("--graph", sample.graph)->required()->check(CLI::ExistingFile);
  sc_sample->add_option("--q", sample.q, "Uniform node weight")->capture_default_str();
  sc_sample->add_option("--m", sample.m, "Number of forests")->capture_default_str();
  sc_sample->add_option("--seed", sample.seed)->capture_default_str();
  sc_sample->add_option("--workers", sample.workers)->capture_default_str();
  sc_sample->add_option("-o,--output", sample.output, "Dump file (stdout when omitted)");

  SmoothArgs smooth_args;
  auto* sc_smooth = app.add_subcommand("smooth", "Estimate the Tikhonov-smoothed signal");
  sc_smooth->add_option("--graph", smooth_args.graph)->required()->check(CLI::ExistingFile);
  sc_smooth->add_option("--signal", smooth_args.signal)->required()->check(CLI::ExistingFile);
  sc_smooth->add_option("--q", smooth_args.q, "Uniform node weight")->capture_default_str();
  sc_smooth->add_option("--m", smooth_args.m, "Number of forests")->capture_default_str();
  sc_smooth->add_option("--estimator", smooth_args.estimator, "tilde, bar or hat")->capture_default_str();
  sc_smooth->add_option("--alpha", smooth_args.alpha, "Control-variate step for hat");
  sc_smooth->add_flag("--exact", smooth_args.exact, "Direct solve instead of Monte-Carlo");
  sc_smooth->add_flag("--normalized", smooth_args.normalized, "Apply q (L~ + qI)^{-1} instead");
  sc_smooth->add_option("--seed", smooth_args.seed)->capture_default_str();
  sc_smooth->add_option("--workers", smooth_args.workers)->capture_default_str();
  sc_smooth->add_option("-o,--output", smooth_args.output, "Estimate CSV; metadata goes to <output>.json")->required();

  RankArgs rank;
  auto* sc_rank = app.add_subcommand("rank", "Rank items by spectral angular synchronization");
  sc_rank->add_option("--instance", rank.instance, "Instance file (otherwise generated)")->check(CLI::ExistingFile);
  sc_rank->add_option("--n", rank.n)->capture_default_str();
  sc_rank->add_option("--s", rank.s)->capture_default_str();
  sc_rank->add_option("--p", rank.p)->capture_default_str();
  sc_rank->add_option("--seed", rank.seed, "First seed")->capture_default_str();
  sc_rank->add_option("--seeds", rank.seeds, "Number of consecutive seeds")->capture_default_str();
  sc_rank->add_option("--q", rank.q)->capture_default_str();
  sc_rank->add_option("--k", rank.k, "Power iterations")->capture_default_str();
  sc_rank->add_option("--m", rank.m, "Forests per iteration in estimator mode")->capture_default_str();
  sc_rank->add_option("--mode", rank.mode, "exact or estimator")->capture_default_str();
  sc_rank->add_option("--estimator", rank.estimator, "tilde, bar or hat")->capture_default_str();
  sc_rank->add_option("--delta", rank.delta)->capture_default_str();
  sc_rank->add_flag("--reuse-forests", rank.reuse_forests, "One forest batch for all iterations");
  sc_rank->add_option("--workers", rank.workers, "Seeds run in parallel")->capture_default_str();
  sc_rank->add_option("-o,--output", rank.output, "Outcome CSV (stdout when omitted)");
  sc_rank->add_option("--ranking-out", rank.ranking_out, "Recovered vs true ranks for the first seed");

  OracleArgs oracle;
  auto* sc_oracle = app.add_subcommand("oracle", "Check sampler identities by exhaustive enumeration");
  sc_oracle->add_option("--fixture", oracle.fixture, "Built-in fixture (all when omitted)");
  sc_oracle->add_flag("--list", oracle.list, "List built-in fixtures");
  sc_oracle->add_option("--graph", oracle.graph, "Small graph instead of the fixtures")->check(CLI::ExistingFile);
  sc_oracle->add_option("--signal", oracle.signal)->check(CLI::ExistingFile);
  sc_oracle->add_option("--q", oracle.q, "Uniform node weight with --graph")->capture_default_str();
  sc_oracle->add_option("--catalog", oracle.catalog, "Write the enumerated catalog CSV");

  auto* sc_bench = app.add_subcommand("bench", "Timing and error-curve benchmarks");
  sc_bench->require_subcommand(1);
  BenchTimingArgs timing;
  auto* sc_timing = sc_bench->add_subcommand("timing", "Mean running time per method and size");
  sc_timing->add_option("--sizes", timing.sizes)->delimiter(',')->capture_default_str();
  sc_timing->add_option("--methods", timing.methods,
                        "estimator_{tilde,bar,hat}, direct_solve, power_method_exact, power_method_estimator")
      ->delimiter(',')
      ->capture_default_str();
  sc_timing->add_option("--reps", timing.reps)->capture_default_str();
  sc_timing->add_option("--warmup", timing.warmup)->capture_default_str();
  sc_timing->add_option("--s", timing.s)->capture_default_str();
  sc_timing->add_option("--p", timing.p)->capture_default_str();
  sc_timing->add_option("--q", timing.q)->capture_default_str();
  sc_timing->add_option("--m", timing.m)->capture_default_str();
  sc_timing->add_option("--k", timing.k)->capture_default_str();
  sc_timing->add_option("--seed", timing.seed)->capture_default_str();
  sc_timing->add_option("-o,--output", timing.output);
  BenchErrorArgs error;
  auto* sc_error = sc_bench->add_subcommand("error", "Reconstruction error against m");
  sc_error->add_option("--n", error.n)->capture_default_str();
  sc_error->add_option("--s", error.s)->capture_default_str();
  sc_error->add_option("--p", error.p)->capture_default_str();
  sc_error->add_option("--q", error.q)->capture_default_str();
  sc_error->add_option("--ms", error.ms)->delimiter(',')->capture_default_str();
  sc_error->add_option("--runs", error.runs)->capture_default_str();
  sc_error->add_option("--seed", error.seed)->capture_default_str();
  sc_error->add_option("--workers", error.workers)->capture_default_str();
  sc_error->add_option("-o,--output", error.output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sc_gen) return cmd_gen(gen);
    if (*sc_sample) return cmd_sample(sample);
    if (*sc_smooth) return cmd_smooth(smooth_args);
    if (*sc_rank) return cmd_rank(rank);
    if (*sc_oracle) return cmd_oracle(oracle);
    if (*sc_timing) return cmd_bench_timing(timing);
    if (*sc_error) return cmd_bench_error(error);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
