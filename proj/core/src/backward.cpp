#include "seqopt/backward.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "seqopt/error.hpp"
#include "seqopt/parallel.hpp"

namespace seqopt {

ValueTables solve_truncated(const Problem& p, int N, const SolveOptions& options) {
  if (N < 1) throw Error(ErrorKind::domain, "horizon must be at least 1");
  require_valid(p);
  ValueTables out;
  out.histories = HistoryTable::build(p, N, {options.engine, options.max_states, options.threads});
  out.horizon = N;
  out.cost = p.c();
  const auto& table = out.histories;
  const int K = table.alphabet();
  const double c = p.c();

  out.value.resize(static_cast<std::size_t>(N) + 1);
  out.continuation.resize(static_cast<std::size_t>(N));
  out.value[static_cast<std::size_t>(N)] = table.stage(N).loss;

  for (int n = N - 1; n >= 0; --n) {
    const auto& stage = table.stage(n);
    const auto& next_value = out.value[static_cast<std::size_t>(n) + 1];
    auto& q = out.continuation[static_cast<std::size_t>(n)];
    auto& v = out.value[static_cast<std::size_t>(n)];
    q.assign(stage.size, 0.0);
    v.assign(stage.size, 0.0);
    // Each stage-n entry depends only on stage n+1.
    const int workers = stage.size >= kParallelGrain ? options.threads : 1;
    parallel_for(stage.size, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
      for (std::size_t s = begin; s < end; ++s) {
        double sum = c * stage.f_mix[s];
        for (int x = 0; x < K; ++x) sum += next_value[table.child(n, s, x)];
        q[s] = sum;
        v[s] = std::min(stage.loss[s], sum);
      }
    });
  }
  out.convergence.horizons = {N};
  out.convergence.q0 = {out.q0()};
  return out;
}

ValueTables solve_limit(const Problem& p, int N_start, double tol, int N_cap,
                        const SolveOptions& options) {
  if (!(tol > 0.0)) throw Error(ErrorKind::domain, "tolerance must be positive");
  if (N_start < 1) throw Error(ErrorKind::domain, "starting horizon must be at least 1");
  int N = N_start;
  ValueTables current = solve_truncated(p, N, options);
  ConvergenceInfo info;
  info.limit_mode = true;
  info.horizons.push_back(N);
  info.q0.push_back(current.q0());
  info.achieved_tolerance = std::numeric_limits<double>::infinity();
  while (2 * N <= N_cap) {
    ValueTables doubled = solve_truncated(p, 2 * N, options);
    const double diff = std::abs(doubled.q0() - current.q0());
    info.horizons.push_back(2 * N);
    info.q0.push_back(doubled.q0());
    info.achieved_tolerance = diff;
    current = std::move(doubled);
    N *= 2;
    if (diff < tol) {
      info.converged = true;
      break;
    }
  }
  current.convergence = info;
  return current;
}

ObservationAdvice should_take_observations(const ValueTables& tables, double l0) {
  const double q0 = tables.q0();
  return {l0 >= q0, l0 - q0};
}

ObservationAdvice should_take_observations(const ValueTables& tables) {
  return should_take_observations(tables, tables.l0());
}

void write_value_tables_csv(const ValueTables& tables, std::ostream& out) {
  const auto& table = tables.histories;
  out.precision(17);
  out << "stage," << (table.engine() == Engine::count_vector ? "counts" : "history") << ",l,Q,V\n";
  for (int n = 0; n <= tables.horizon; ++n) {
    const auto& stage = table.stage(n);
    for (std::size_t s = 0; s < stage.size; ++s) {
      out << n << ',' << table.key(n, s) << ',' << stage.loss[s] << ',';
      if (n < tables.horizon) out << tables.continuation[static_cast<std::size_t>(n)][s];
      out << ',' << tables.value[static_cast<std::size_t>(n)][s] << '\n';
    }
  }
}

}  // namespace seqopt
