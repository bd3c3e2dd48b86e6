#pragma once

// JSON problem configuration, schema version 1:
//
//   {
//     "schema_version": 1,
//     "parameters": ["theta1", "theta2"],
//     "alphabet_size": 2,
//     "model": {"kind": "iid", "pmf": [[0.8, 0.2], [0.3, 0.7]]},
//     "decisions": ["accept1", "accept2"],          optional, default d1..dD
//     "loss": [[0, 1], [1, 0]],
//     "pi1": [0.5, 0.5],
//     "pi2": [0.5, 0.5],                            optional, default pi1
//     "cost": 0.02,
//     "constraints": {"groups": [["theta1"], ["theta2"]], "bounds": [0.1, 0.1],
//                     "multipliers": [1, 1]}       optional
//   }
//
// Dependent models: {"kind": "dependent", "horizon": N, "kernel": {label:
// {"": pmf, "1": pmf, "1:0": pmf, ...}}} with histories as colon-joined
// symbols, or {"kind": "markov", "initial": [pmf per parameter],
// "transition": [[pmf per previous symbol] per parameter]}.

#include <string>

#include "seqopt/model.hpp"

namespace seqopt {

inline constexpr int kConfigSchemaVersion = 1;

// Throws Error(validation) listing every structural problem and every
// violated invariant.
Problem parse_problem_json(const std::string& text);
Problem load_problem_file(const std::string& path);

}  // namespace seqopt
