#pragma once

// Stagewise Bayes decisions. For a stage-n history h the Bayes loss is
//
//   l_n(h) = min_d sum_theta w(theta, d) f_theta^n(h) pi1(theta)
//
// and the Bayes decision attains it. The empty history has f^0 = 1, so the
// stage-0 entry is the no-observation loss l_0.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "seqopt/history.hpp"
#include "seqopt/model.hpp"

namespace seqopt {

// Relative tolerance for classifying two losses (or l_n against Q_n) as tied.
inline constexpr double kTieTolerance = 1e-12;

bool nearly_equal(double a, double b, double rel_tol = kTieTolerance);

struct BayesDecision {
  std::size_t decision = 0;  // lowest-index minimiser
  double loss = 0.0;         // l_n(h)
  std::vector<std::size_t> ties;  // every minimiser, ascending
};

// Weighted loss w'(theta, d) = lambda_i w(theta, d) for theta in group i and
// 0 outside every group. Requires constraint groups when multipliers are given.
std::vector<std::vector<double>> effective_loss(const Problem& p,
                                                std::span<const double> multipliers);

// Minimises sum_theta w(theta, d) weight[theta] over d.
BayesDecision minimize_loss(const std::vector<std::vector<double>>& w,
                            std::span<const double> weight);

BayesDecision bayes_decide(const Problem& p, std::span<const Symbol> h,
                           std::span<const double> multipliers = {});

// sum over all K^n stage-n histories of l_n(h).
double stagewise_bayes_risk(const Problem& p, int n);
// Values for stages 1..N (index 0 holds stage 1).
std::vector<double> stagewise_bayes_risks(const Problem& p, int N);

// Posterior over Theta under pi1. Throws Error(domain) on zero-probability histories.
std::vector<double> posterior(const Problem& p, std::span<const Symbol> h);
// Posterior expected loss of the Bayes decision: l_n / sum_theta f_theta^n pi1(theta).
double posterior_risk(const Problem& p, std::span<const Symbol> h);

enum class Engine { automatic, history_tree, count_vector };

const char* to_string(Engine engine) noexcept;

struct StageTable {
  std::size_t size = 0;
  std::vector<double> f_theta;  // [state * m + theta], per-history density
  std::vector<double> f_mix;    // mixture under pi2
  std::vector<double> loss;     // l_n
  std::vector<std::uint32_t> decision;
  std::vector<std::uint8_t> tie;
};

struct TableOptions {
  Engine engine = Engine::automatic;
  std::size_t max_states = std::size_t{1} << 24;
  int threads = 1;
};

// Per-stage cache of densities and Bayes quantities for stages 0..N. The
// history-tree engine stores every history; the count-vector engine (iid
// models only) stores one representative per symbol-count vector.
class HistoryTable {
 public:
  static HistoryTable build(const Problem& p, int horizon, const TableOptions& options = {});

  Engine engine() const { return engine_; }
  int horizon() const { return horizon_; }
  int alphabet() const { return K_; }
  std::size_t num_params() const { return m_; }
  double cost() const { return cost_; }

  const StageTable& stage(int n) const { return stages_.at(static_cast<std::size_t>(n)); }
  std::size_t size(int n) const { return stage(n).size; }
  std::size_t child(int n, std::size_t index, Symbol x) const;
  double multiplicity(int n, std::size_t index) const;
  // Native index of a history (its counts, for the count engine).
  std::size_t index_of(std::span<const Symbol> h) const;
  // Text key: the history for the tree engine, the counts for the count engine.
  std::string key(int n, std::size_t index) const;
  const CountLattice* lattice() const { return lattice_.get(); }
  std::shared_ptr<const CountLattice> shared_lattice() const { return lattice_; }

 private:
  Engine engine_ = Engine::history_tree;
  int horizon_ = 0;
  int K_ = 2;
  std::size_t m_ = 0;
  double cost_ = 0.0;
  std::vector<StageTable> stages_;
  std::shared_ptr<const CountLattice> lattice_;
};

Engine resolve_engine(const Problem& p, Engine requested);

}  // namespace seqopt
