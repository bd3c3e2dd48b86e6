#pragma once

// Backward induction over a truncated horizon N:
//
//   V_N = l_N,   V_n = min{l_n, Q_n},   Q_n = c f^n + sum_x V_{n+1}(h, x)
//
// for n = N-1, ..., 0 with f^0 = 1. Q_0 is the minimal risk over rules
// truncated at N; V_0 = min{l_0, Q_0} also allows taking no observation.

#include <iosfwd>
#include <vector>

#include "seqopt/bayes.hpp"
#include "seqopt/model.hpp"

namespace seqopt {

struct SolveOptions {
  Engine engine = Engine::automatic;
  std::size_t max_states = std::size_t{1} << 24;
  int threads = 1;
};

struct ConvergenceInfo {
  std::vector<int> horizons;
  std::vector<double> q0;
  double achieved_tolerance = 0.0;
  bool converged = false;
  bool limit_mode = false;
};

struct ValueTables {
  HistoryTable histories;
  int horizon = 0;
  double cost = 0.0;
  std::vector<std::vector<double>> value;         // V_n, n = 0..N
  std::vector<std::vector<double>> continuation;  // Q_n, n = 0..N-1
  ConvergenceInfo convergence;

  double q0() const { return continuation.empty() ? value[0][0] : continuation[0][0]; }
  double v0() const { return value[0][0]; }
  double l0() const { return histories.stage(0).loss[0]; }
  Engine engine() const { return histories.engine(); }
};

ValueTables solve_truncated(const Problem& p, int N, const SolveOptions& options = {});

// Doubles the horizon from N_start until successive Q_0 values differ by
// less than tol, or the next horizon would exceed N_cap (then
// convergence.converged is false).
ValueTables solve_limit(const Problem& p, int N_start, double tol, int N_cap,
                        const SolveOptions& options = {});

struct ObservationAdvice {
  bool worthwhile = false;  // l_0 >= Q_0
  double margin = 0.0;      // l_0 - Q_0
};

ObservationAdvice should_take_observations(const ValueTables& tables, double l0);
ObservationAdvice should_take_observations(const ValueTables& tables);

// CSV with columns stage,history,l,Q,V (Q empty at the final stage).
void write_value_tables_csv(const ValueTables& tables, std::ostream& out);

}  // namespace seqopt
