#pragma once

// Decision problem: finite parameter set, finite observation alphabet,
// loss matrix, the two priors (loss weighting and sample-size weighting),
// observation cost and optional constraint groups.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace seqopt {

using Symbol = int;
using History = std::vector<Symbol>;

inline constexpr double kNormalizationTolerance = 1e-9;

struct ParameterSpace {
  std::vector<std::string> labels;

  std::size_t size() const { return labels.size(); }
};

enum class ModelKind { iid, dependent };

// Conditional pmf of the next symbol given the parameter index and the
// history observed so far. Writes alphabet_size values into `pmf` and
// returns false when the kernel is undefined for that history.
using KernelFn =
    std::function<bool(std::size_t theta, std::span<const Symbol> history, std::span<double> pmf)>;

struct ObservationModel {
  int alphabet_size = 2;
  ModelKind kind = ModelKind::iid;
  std::vector<std::vector<double>> iid_pmf;  // [theta][symbol]
  KernelFn kernel;
  // Largest n for which f_theta^n is defined; 0 means unbounded.
  int kernel_horizon = 0;
};

struct LossSpec {
  std::vector<std::string> decisions;
  std::vector<std::vector<double>> w;  // [theta][decision]
};

struct Priors {
  std::vector<double> pi1;  // weights the decision loss
  std::vector<double> pi2;  // weights the sample size
};

struct CostSpec {
  double c = 0.0;
};

struct ConstraintSpec {
  std::vector<std::vector<std::size_t>> groups;  // disjoint parameter index sets
  std::vector<double> bounds;
  std::vector<double> multipliers;  // optional, one per group
};

struct Problem {
  ParameterSpace params;
  ObservationModel obs;
  LossSpec loss;
  Priors priors;
  CostSpec cost;
  std::optional<ConstraintSpec> constraints;

  std::size_t num_params() const { return params.size(); }
  std::size_t num_decisions() const { return loss.decisions.size(); }
  int alphabet() const { return obs.alphabet_size; }
  double c() const { return cost.c; }
  bool iid() const { return obs.kind == ModelKind::iid; }
};

enum class ViolationCode {
  empty_parameter_space,
  duplicate_label,
  bad_alphabet,
  dimension_mismatch,
  negative_probability,
  pmf_not_normalized,
  kernel_undefined,
  missing_kernel,
  negative_loss,
  no_decisions,
  prior_not_normalized,
  nonpositive_cost,
  overlapping_groups,
  group_index_out_of_range,
  nonpositive_bound,
  negative_multiplier,
};

const char* to_string(ViolationCode code) noexcept;

struct Violation {
  ViolationCode code;
  std::string message;
};

// Complete list of invariant violations; empty means the problem is valid.
std::vector<Violation> validate_problem(const Problem& p);

// Throws Error(validation) listing every violation.
const Problem& require_valid(const Problem& p);

// f_theta^n(h): product of the conditional pmf values along h. The empty
// history has density 1.
double joint_density(const Problem& p, std::size_t theta, std::span<const Symbol> h);

enum class PriorSelect { pi1, pi2 };

// f^n(h) = sum_theta f_theta^n(h) pi(theta).
double mixture_density(const Problem& p, std::span<const Symbol> h,
                       PriorSelect prior = PriorSelect::pi2);

const std::vector<double>& prior(const Problem& p, PriorSelect select);

// Conditional pmf of the next observation after `history` under theta.
// Throws Error(domain) when the kernel is undefined there.
void next_symbol_pmf(const Problem& p, std::size_t theta, std::span<const Symbol> history,
                     std::span<double> pmf);

// History-indexed kernel table: for every parameter, a map from history to
// the conditional pmf of the next symbol.
class TabularKernel {
 public:
  TabularKernel(std::size_t num_params, int alphabet_size);

  void set(std::size_t theta, const History& history, std::vector<double> pmf);
  bool lookup(std::size_t theta, std::span<const Symbol> history, std::span<double> pmf) const;
  // Longest stored history length plus one.
  int horizon() const;

  KernelFn as_function() const;

 private:
  int alphabet_size_;
  std::vector<std::map<History, std::vector<double>>> tables_;
};

// First-order Markov chain per parameter: initial pmf and a transition matrix.
KernelFn markov_kernel(std::vector<std::vector<double>> initial,
                       std::vector<std::vector<std::vector<double>>> transition);

// Convenience builders used by tests, examples and benchmarks.
Problem make_iid_problem(std::vector<std::vector<double>> pmf, std::vector<std::vector<double>> loss,
                         std::vector<double> pi1, std::vector<double> pi2, double cost);
std::vector<std::vector<double>> zero_one_loss(std::size_t n);

}  // namespace seqopt
