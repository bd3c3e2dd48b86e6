#pragma once

// Exact evaluation of sequential procedures by a forward pass over the
// histories a rule can reach, plus the brute-force oracle over
// deterministic truncated rules and truncatability diagnostics.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqopt/model.hpp"
#include "seqopt/stopping_rule.hpp"

namespace seqopt {

// Terminal decision strategy. The Bayes strategy may use the weighted loss of
// a set of group multipliers and may split ties: the lowest-index minimiser is
// chosen with probability lowest_tie_weight, the highest-index one otherwise.
class DecisionStrategy {
 public:
  // Receives the history (by_history) or the symbol counts (by_counts).
  using Fn = std::function<std::optional<std::size_t>(int stage, std::span<const int> key)>;
  enum class Kind { bayes, by_history, by_counts };

  static DecisionStrategy bayes(std::vector<double> multipliers = {}, double lowest_tie_weight = 1.0);
  static DecisionStrategy by_history(Fn fn);
  static DecisionStrategy by_counts(Fn fn);

  Kind kind() const { return kind_; }
  const std::vector<double>& multipliers() const { return multipliers_; }
  double lowest_tie_weight() const { return lowest_tie_weight_; }
  const Fn& fn() const { return fn_; }

 private:
  Kind kind_ = Kind::bayes;
  std::vector<double> multipliers_;
  double lowest_tie_weight_ = 1.0;
  Fn fn_;
};

// stage,history,decision rows; histories absent from the file are undefined.
DecisionStrategy read_decision_csv(std::istream& in, const Problem& p);

struct RiskReport {
  int cap = 0;                     // last stage examined
  double N_psi = 0.0;              // average sample number under pi2
  std::vector<double> N_theta;     // E_theta tau (partial sums when mass is unstopped)
  double W = 0.0;                  // average loss under pi1
  std::vector<double> W_groups;    // loss restricted to each constraint group
  double R = 0.0;                  // c N_psi + W
  double R_bayes_form = 0.0;       // sum_n sum_h s_n (c n f^n + l_n)
  bool R_infinite = false;         // pi2 stopping mass below 1 - 1e-9 at the cap
  std::optional<double> L;         // N_psi + sum lambda_i W_i when multipliers are set
  std::vector<double> stop_dist;   // P^{pi2}(tau = n), index n-1
  std::vector<std::vector<double>> stop_dist_theta;  // [theta][n-1]
  std::vector<std::vector<double>> decision_probs;   // [theta][d] = P_theta(delta = d)
  std::vector<double> error_probs;                   // P_theta(w(theta, delta) > 0)
  double mass_stopped = 0.0;                         // sum_n P^{pi2}(tau = n)
  std::vector<double> mass_stopped_theta;
  double unstopped_mass = 0.0;                       // 1 - mass_stopped under pi2
  std::size_t nodes_visited = 0;
};

struct EvaluateOptions {
  int cap = 0;              // 0: the rule's truncation horizon, else default_cap
  int default_cap = 200;
  std::size_t max_nodes = std::size_t{1} << 26;
  double prune = 1e-300;    // nodes whose largest t_n f_theta^n is below this are dropped
};

RiskReport evaluate(const Problem& p, const StoppingRule& rule,
                    const DecisionStrategy& decision = DecisionStrategy::bayes(),
                    const EvaluateOptions& options = {});

// A procedure that first picks one component with probability `weight` and
// then follows it. Every functional is linear in the weights.
struct ProcedureComponent {
  StoppingRule rule;
  DecisionStrategy decision;
  double weight = 1.0;
};

struct Procedure {
  std::vector<ProcedureComponent> components;

  static Procedure single(StoppingRule rule, DecisionStrategy decision = DecisionStrategy::bayes());
};

RiskReport evaluate(const Problem& p, const Procedure& procedure, const EvaluateOptions& options = {});

// N_psi + sum_i lambda_i W_i.
double lagrangian_value(const RiskReport& report, std::span<const double> lambda);

struct BruteForceOptions {
  int max_bits = 20;
  int threads = 1;
};

struct BruteForceResult {
  int horizon = 0;
  int alphabet = 2;
  double min_risk = 0.0;
  std::vector<std::uint64_t> minimizers;  // bit b set: stop at entries[b]
  std::vector<RuleEntry> entries;         // non-terminal histories, stage-major
  std::size_t rules_evaluated = 0;

  StoppingRule rule(std::uint64_t mask) const;
};

// Minimum of R over all 2^H deterministic rules truncated at N, with H the
// number of histories of stages 1..N-1.
BruteForceResult brute_force_optimum(const Problem& p, int N, const BruteForceOptions& options = {});

struct TailPoint {
  int horizon = 0;
  double tail_loss = 0.0;       // sum_h t_N l_N
  double bayes_risk = 0.0;      // sum_h l_N
  double loss_bound = 0.0;      // M P^{pi1}(tau >= N)
  double truncated_risk = 0.0;  // R_N(psi)
};

struct TruncatabilityReport {
  std::vector<TailPoint> points;
  double max_loss = 0.0;  // M
  bool tail_decreasing = false;
  bool bayes_risk_decreasing = false;
};

TruncatabilityReport truncatability_diagnostic(const Problem& p, const StoppingRule& rule,
                                               std::span<const int> horizons,
                                               const EvaluateOptions& options = {});

std::string risk_report_json(const RiskReport& report, const Problem& p);
void write_risk_report_csv(const RiskReport& report, const Problem& p, std::ostream& out);

}  // namespace seqopt
