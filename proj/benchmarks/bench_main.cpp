#include <benchmark/benchmark.h>

#include <random>

#include "dichotomy/correspondence.hpp"
#include "dichotomy/dichotomous_solver.hpp"
#include "dichotomy/error.hpp"
#include "dichotomy/graph_transform.hpp"
#include "dichotomy/linalg_splitting.hpp"
#include "dichotomy/problems.hpp"

using namespace dichotomy;

namespace {

void BM_SpectralSplit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat a(n, n);
  for (int i = 0; i < n * n; ++i) a(i) = g(rng);
  a.diagonal().array() += 0.5;  // keep the spectrum off the cut
  for (auto _ : state) {
    try {
      benchmark::DoNotOptimize(spectral_split(a, 0.0));
    } catch (const Error&) {
      state.SkipWithError("eigenvalue on the cut");
      break;
    }
  }
}
BENCHMARK(BM_SpectralSplit)->Arg(4)->Arg(16)->Arg(64);

void BM_TwoPointSolve(benchmark::State& state) {
  const auto d = instantiate("elliptic_cylinder", {{"modes", static_cast<double>(state.range(0))}});
  const Vec x1 = Vec::Constant(d.problem.splitting.dim_x(), 0.1);
  const Vec y2 = Vec::Constant(d.problem.splitting.dim_y(), 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(solve_two_point(d.problem, x1, y2, 0.0, 1.0, 200, 1e-12, 100));
}
BENCHMARK(BM_TwoPointSolve)->Arg(2)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_GraphTransformSaddle(benchmark::State& state) {
  const auto d = instantiate("scalar_saddle");
  SolverOptions so;
  so.steps_per_unit = 200;
  const auto p = d.problem;
  const auto cc = dual_cocycle(autonomous_cocycle(1, 1, [p, so](double t) { return cocycle_correspondence(p, t, 0.0, so); }));
  GraphOptions go;
  go.nodes_per_axis = static_cast<int>(state.range(0));
  go.tol = 1e-9;
  go.extra_residuals = false;
  go.threads = 1;
  const auto cert = d.certificate().dual();
  for (auto _ : state) benchmark::DoNotOptimize(invariant_graph(cc, {}, {cert}, go));
}
BENCHMARK(BM_GraphTransformSaddle)->Arg(41)->Arg(161)->Unit(benchmark::kMillisecond);

void BM_EmpiricalCheck(benchmark::State& state) {
  const auto d = instantiate("scalar_saddle");
  const auto h = d.correspondence(1.0);
  const auto k = d.certificate().constants_at(1.0);
  CheckOptions co;
  co.threads = 1;
  for (auto _ : state) {
    BallPairSampler s(1, 1, 0.5, 0.5, 3);
    benchmark::DoNotOptimize(empirical_ab_check(h, k, [&] { return s.next(); }, state.range(0), co));
  }
}
BENCHMARK(BM_EmpiricalCheck)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
