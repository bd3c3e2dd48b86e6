#pragma once

// Constrained problems: minimise N(psi) subject to W_i(psi, delta) <= w_i
// for disjoint parameter groups. For multipliers lambda_i >= 0 the
// Lagrangian N + sum lambda_i W_i is minimised by the Bayes procedure of the
// problem with loss lambda_i c w on group i at cost c, so the search only
// ever solves unconstrained problems.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "seqopt/backward.hpp"
#include "seqopt/evaluation.hpp"
#include "seqopt/model.hpp"
#include "seqopt/stopping_rule.hpp"

namespace seqopt {

// Loss lambda_i w(theta, d) on group i and 0 outside every group; cost unchanged.
Problem weighted_problem(const Problem& p, std::span<const double> loss_multipliers);

// N(psi) + sum_i lambda_i W_i(psi, delta).
double lagrangian(const Problem& p, std::span<const double> lambda, const StoppingRule& rule,
                  const DecisionStrategy& decision = DecisionStrategy::bayes(),
                  const EvaluateOptions& options = {});

struct SearchConfig {
  int horizon = 20;
  double tol = 1e-6;
  int max_iterations = 200;
  double lambda_max = 1e6;
  double tie_tolerance = 1e-9;  // used when collapsing onto one tie-randomised rule
  Engine engine = Engine::automatic;
  std::size_t max_states = std::size_t{1} << 24;
  int threads = 1;
};

// Lagrangian minimisers at one multiplier vector: ties in the stopping
// comparison resolved towards stopping or continuing, and ties between
// decisions towards the lowest or highest index.
struct LagrangeCandidate {
  std::vector<double> lambda;
  TiePolicy stop_ties;
  double lowest_tie_weight = 1.0;
  StoppingRule rule;
  double N = 0.0;
  std::vector<double> W;
  double lagrangian = 0.0;
};

std::vector<LagrangeCandidate> solve_at_multipliers(const Problem& p, std::span<const double> lambda,
                                                    const SearchConfig& config = {});

enum class SearchStatus { converged, not_binding, infeasible, budget_exhausted };

const char* to_string(SearchStatus status) noexcept;

struct TraceEntry {
  int iteration = 0;
  std::vector<double> lambda;
  std::vector<double> W_low;   // smallest W_1 .. W_k among the minimisers at lambda
  std::vector<double> W_high;  // largest
  double N = 0.0;              // N of the stop-on-tie, lowest-decision minimiser
};

struct FrontierPoint {
  std::vector<double> lambda;
  std::vector<double> achieved;
  double N = 0.0;
  double weight = 0.0;  // share in the returned procedure
};

struct MultiplierSearchResult {
  SearchStatus status = SearchStatus::budget_exhausted;
  bool converged = false;
  int horizon = 0;
  std::vector<double> lambda;            // multipliers of N + sum lambda_i W_i
  std::vector<double> loss_multipliers;  // c lambda, the weights on the loss
  std::vector<double> targets;
  std::vector<double> achieved;
  std::vector<double> slack;  // target - achieved
  double N = 0.0;
  Procedure procedure;
  // Set when the procedure is a single rule; randomised on tied histories
  // with stopping probability gamma when tie_randomized.
  std::optional<StoppingRule> rule;
  bool tie_randomized = false;
  double gamma = 1.0;
  std::vector<TraceEntry> trace;
  int monotonicity_violations = 0;  // k = 1: W_1 increasing somewhere along lambda_1
  std::vector<FrontierPoint> frontier;
  int iterations = 0;
};

// Targets w_i for the constraint groups of p. Supports one or two groups.
MultiplierSearchResult match_constraints(const Problem& p, std::span<const double> targets,
                                         const SearchConfig& config = {});

struct OptimalityViolation {
  std::uint64_t mask = 0;
  double N = 0.0;
  std::vector<double> W;
  std::string reason;
};

struct OptimalityReport {
  int horizon = 0;
  std::size_t rules_checked = 0;
  std::size_t feasible_rules = 0;  // W_i <= achieved_i for all i
  double reference_N = 0.0;
  std::vector<OptimalityViolation> violations;
  bool ok() const { return violations.empty(); }
};

// Enumerates every deterministic rule truncated at N (Bayes decisions) and
// checks that none meeting the achieved constraint values has a smaller
// average sample number, nor an equal one when a constraint with a positive
// multiplier holds strictly.
OptimalityReport verify_conditional_optimality(const Problem& p, const MultiplierSearchResult& result, int N,
                                               int max_bits = 20, double tol = 1e-9);

void write_search_trace_csv(const MultiplierSearchResult& result, std::ostream& out);

}  // namespace seqopt
