#pragma once

// Randomized stopping rules psi = (psi_1, psi_2, ...), psi_n(h) in [0, 1]
// being the conditional probability of stopping at stage n after history h.

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "seqopt/backward.hpp"
#include "seqopt/history.hpp"

namespace seqopt {

enum class RuleIndex { history, counts };

const char* to_string(RuleIndex index) noexcept;

struct TiePolicy {
  enum class Kind { stop, proceed, randomize };
  Kind kind = Kind::stop;
  double gamma = 1.0;  // stopping probability on ties when kind == randomize

  static TiePolicy stop() { return {Kind::stop, 1.0}; }
  static TiePolicy proceed() { return {Kind::proceed, 0.0}; }
  static TiePolicy randomize(double gamma) { return {Kind::randomize, gamma}; }
  double value() const;
};

struct RuleEntry {
  int stage = 0;
  std::size_t index = 0;
};

class StoppingRule {
 public:
  StoppingRule() = default;
  // rows[n-1] holds psi_n for every native index of stage n; stages past
  // rows.size() use `tail`. Count-indexed rules need the lattice.
  StoppingRule(RuleIndex index, int alphabet, std::vector<std::vector<double>> rows, double tail,
               std::shared_ptr<const CountLattice> lattice = {});

  // psi_n == value at every stage.
  static StoppingRule constant(int alphabet, double value);

  RuleIndex index() const { return index_; }
  int alphabet() const { return K_; }
  int stored_stages() const { return static_cast<int>(rows_.size()); }
  double tail() const { return tail_; }
  // Truncated rules stop with probability one at stage stored_stages() + 1.
  bool truncated() const { return tail_ == 1.0; }
  int truncation_horizon() const { return truncated() ? stored_stages() + 1 : 0; }

  std::size_t row_size(int n) const { return rows_.at(static_cast<std::size_t>(n) - 1).size(); }
  double psi(int n, std::size_t native_index) const;
  double psi_at(int n, std::span<const Symbol> h) const;
  void set(int n, std::size_t native_index, double value);

  const CountLattice* lattice() const { return lattice_.get(); }
  std::shared_ptr<const CountLattice> shared_lattice() const { return lattice_; }
  std::string key(int n, std::size_t native_index) const;

  // Entries where l_n and Q_n tie, recorded by extract_rule.
  const std::vector<RuleEntry>& ties() const { return ties_; }
  void set_ties(std::vector<RuleEntry> ties) { ties_ = std::move(ties); }

 private:
  RuleIndex index_ = RuleIndex::history;
  int K_ = 2;
  std::vector<std::vector<double>> rows_;
  double tail_ = 1.0;
  std::shared_ptr<const CountLattice> lattice_;
  std::vector<RuleEntry> ties_;
};

// t_n(h) = prod_{j<n} (1 - psi_j) and s_n(h) = t_n(h) psi_n(h) over every
// history of stages 1..N (history-tree indexing, index 0 of each vector is stage 1).
struct ReachWeights {
  std::vector<std::vector<double>> t;
  std::vector<std::vector<double>> s;
};

ReachWeights reach_weights(const StoppingRule& rule, int N,
                           std::size_t max_states = std::size_t{1} << 24);

// psi_n = 1 where l_n < Q_n, 0 where l_n > Q_n, the tie policy where they
// agree within tie_tolerance (relative), and psi_N = 1.
StoppingRule extract_rule(const ValueTables& tables, TiePolicy policy = TiePolicy::stop(),
                          double tie_tolerance = kTieTolerance);

// (psi_1, ..., psi_{N-1}, 1, 1, ...).
StoppingRule truncate_rule(const StoppingRule& rule, int N);

struct SandwichViolation {
  int stage = 0;
  std::string history;
  double psi = 0.0;
  double loss = 0.0;
  double continuation = 0.0;
};

struct SandwichReport {
  std::vector<SandwichViolation> violations;
  bool ok() const { return violations.empty(); }
};

// Checks I{l_n < Q_n} <= psi_n <= I{l_n <= Q_n} on the reach set {t_n > 0}
// for n < N, and psi_N = 1 on the reach set.
SandwichReport sandwich_check(const StoppingRule& rule, const ValueTables& tables,
                              double tie_tolerance = kTieTolerance);

// Tabular text format: a "# seqopt-rule" header line, then
// stage,history|counts,psi rows.
void write_rule_csv(const StoppingRule& rule, std::ostream& out);
StoppingRule read_rule_csv(std::istream& in);

}  // namespace seqopt
