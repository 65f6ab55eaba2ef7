#include <benchmark/benchmark.h>

#include "relex/experiment.hpp"
#include "relex/harness.hpp"
#include "relex/learner.hpp"
#include "relex/representation.hpp"
#include "relex/rng.hpp"

namespace {

using namespace relex;

std::pair<MdpSpec, RepresentationClass> bench_instance() {
  ClusterParams params;
  params.num_states = 6;
  params.num_actions = 2;
  params.horizon = 3;
  params.num_clusters = 3;
  params.rotated_coarse_copies = 1;
  return make_cluster_instance(params, 7);
}

void BM_solve_optimal(benchmark::State& state) {
  const auto [spec, cls] = bench_instance();
  for (auto _ : state) benchmark::DoNotOptimize(solve_optimal(spec));
}
BENCHMARK(BM_solve_optimal);

void BM_backward_pass(benchmark::State& state) {
  const auto [spec, cls] = bench_instance();
  const BetaSchedule schedule = BetaSchedule::make(cls, 0.5, 0.1);
  LearnerState learner = init_state(cls);
  auto init_rng = named_stream(1, "init_state");
  auto trans_rng = named_stream(1, "transition");
  const OptimalSolution sol = solve_optimal(spec);
  for (int k = 1; k <= 50; ++k)
    update_regression(learner, cls, sample_episode(spec, sol.pi_star, init_rng, trans_rng, k));
  long k = 51;
  for (auto _ : state) benchmark::DoNotOptimize(backward_pass(learner, spec, cls, schedule, k));
}
BENCHMARK(BM_backward_pass);

void BM_update_regression(benchmark::State& state) {
  const auto [spec, cls] = bench_instance();
  LearnerState learner = init_state(cls);
  auto init_rng = named_stream(1, "init_state");
  auto trans_rng = named_stream(1, "transition");
  const OptimalSolution sol = solve_optimal(spec);
  const Trajectory trajectory = sample_episode(spec, sol.pi_star, init_rng, trans_rng, 1);
  for (auto _ : state) update_regression(learner, cls, trajectory);
}
BENCHMARK(BM_update_regression);

void BM_relex_episode(benchmark::State& state) {
  const auto [spec, cls] = bench_instance();
  RunConfig config;
  config.episodes = 200;
  config.audit_stride = 200;
  for (auto _ : state) benchmark::DoNotOptimize(run_experiment(spec, cls, config));
}
BENCHMARK(BM_relex_episode)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
