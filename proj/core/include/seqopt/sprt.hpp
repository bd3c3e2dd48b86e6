#pragma once

// Sequential probability ratio test for two simple hypotheses of an iid
// finite-alphabet model, with exact operating characteristics computed on
// the reachable log-likelihood-ratio lattice.

#include <cstddef>
#include <limits>
#include <vector>

#include "seqopt/evaluation.hpp"
#include "seqopt/model.hpp"
#include "seqopt/stopping_rule.hpp"

namespace seqopt {

struct SprtSpec {
  double A = 0.0;  // stop and accept the alternative when LLR >= A
  double B = 0.0;  // stop and accept the null when LLR <= B
  std::size_t null_index = 0;
  std::size_t alt_index = 1;
  int cap = 200;
  // Truncated: at the cap a test still inside (B, A) decides by LLR >= (A + B) / 2.
  // Otherwise continuing mass at the cap is reported as unstopped.
  bool truncate = true;
  double max_tail = 1e-6;  // untruncated OC fails when more mass than this is unstopped
};

// log f_alt(x) - f_null(x) per symbol (+-inf where one pmf vanishes).
std::vector<double> llr_increments(const Problem& p, const SprtSpec& spec);

struct SprtProcedure {
  StoppingRule rule;          // count-indexed
  DecisionStrategy decision;  // count-indexed
  Procedure procedure() const { return Procedure::single(rule, decision); }
};

SprtProcedure sprt_rule(const Problem& p, const SprtSpec& spec);

struct SprtOperatingCharacteristics {
  double alpha = 0.0;                 // P_null(accept alternative)
  double beta = 0.0;                  // P_alt(accept null)
  std::vector<double> expected_tau;   // E_theta tau for every parameter
  std::vector<double> accept_alt;     // P_theta(accept alternative)
  std::vector<double> unstopped;      // P_theta(tau > cap) for untruncated tests
  std::size_t lattice_states = 0;     // distinct LLR values visited
};

SprtOperatingCharacteristics sprt_operating_characteristics(const Problem& p, const SprtSpec& spec);

struct SprtMatch {
  SprtSpec spec;
  SprtOperatingCharacteristics oc;
  int iterations = 0;
};

// Thresholds with alpha <= alpha_target and beta <= beta_target, found by
// alternating bisection from the Wald approximations. The OC of a discrete
// model is a step function of the thresholds, so targets are generally met
// with inequality; the returned thresholds sit midway between adjacent
// reachable LLR values where that keeps both bounds.
SprtMatch match_sprt_errors(const Problem& p, double alpha_target, double beta_target, int cap,
                            std::size_t null_index = 0, std::size_t alt_index = 1);

// True when, at every stage up to the rule's stored stages, the continuation
// states of the rule form one contiguous block in LLR order (iid models,
// count-indexed or constant rules).
struct IntervalCheck {
  bool interval = true;
  std::vector<int> exception_stages;
};

IntervalCheck continuation_is_interval(const Problem& p, const StoppingRule& rule, const SprtSpec& hypotheses,
                                       double prune = 1e-300);

}  // namespace seqopt
