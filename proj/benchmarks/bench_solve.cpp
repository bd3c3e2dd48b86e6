#include <benchmark/benchmark.h>

#include "seqopt/backward.hpp"
#include "seqopt/evaluation.hpp"
#include "seqopt/monte_carlo.hpp"
#include "seqopt/stopping_rule.hpp"

namespace {

seqopt::Problem separated() {
  return seqopt::make_iid_problem({{0.8, 0.2}, {0.3, 0.7}}, seqopt::zero_one_loss(2), {0.5, 0.5}, {0.5, 0.5},
                                  0.02);
}

void BM_SolveCounts(benchmark::State& state) {
  const auto p = separated();
  const int N = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto t = seqopt::solve_truncated(p, N, {seqopt::Engine::count_vector});
    benchmark::DoNotOptimize(t.q0());
  }
}
BENCHMARK(BM_SolveCounts)->Arg(16)->Arg(64)->Arg(256)->Arg(1024);

void BM_SolveTree(benchmark::State& state) {
  const auto p = separated();
  const int N = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto t = seqopt::solve_truncated(p, N, {seqopt::Engine::history_tree});
    benchmark::DoNotOptimize(t.q0());
  }
}
BENCHMARK(BM_SolveTree)->Arg(8)->Arg(12)->Arg(16);

void BM_Evaluate(benchmark::State& state) {
  const auto p = separated();
  const auto rule = seqopt::extract_rule(seqopt::solve_truncated(p, static_cast<int>(state.range(0))));
  for (auto _ : state) {
    auto r = seqopt::evaluate(p, rule);
    benchmark::DoNotOptimize(r.R);
  }
}
BENCHMARK(BM_Evaluate)->Arg(16)->Arg(64);

void BM_Simulate(benchmark::State& state) {
  const auto p = separated();
  const auto rule = seqopt::extract_rule(seqopt::solve_truncated(p, 64));
  seqopt::SimConfig config;
  config.replications = 10000;
  config.threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto r = seqopt::simulate(p, rule, seqopt::DecisionStrategy::bayes(), config);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(config.replications));
}
BENCHMARK(BM_Simulate)->Arg(1)->Arg(4);

}  // namespace

BENCHMARK_MAIN();
