#pragma once

// Monte Carlo simulation of sequential procedures. Each stage draws a fresh
// uniform U_n in [0, 1) and stops iff U_n < psi_n(h); the first stage where this
// happens is tau.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "seqopt/evaluation.hpp"
#include "seqopt/model.hpp"
#include "seqopt/stopping_rule.hpp"

namespace seqopt {

// xoshiro256** seeded through splitmix64. Replication r of a run with seed s
// uses the substream seeded by splitmix64 applied to s and r, so results do
// not depend on how replications are spread over threads.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  static Rng substream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next();
  double uniform();  // in [0, 1), 53 random bits
  std::size_t categorical(const double* pmf, std::size_t n);

 private:
  std::uint64_t s_[4];
};

std::uint64_t splitmix64(std::uint64_t& state);

enum class ThetaMode {
  split,  // theta ~ pi2 for sample-size estimates, an independent theta ~ pi1 for loss estimates
  pi1,
  pi2,
  fixed,
};

const char* to_string(ThetaMode mode) noexcept;
ThetaMode parse_theta_mode(const std::string& text);

struct SimConfig {
  std::size_t replications = 100000;
  std::uint64_t seed = 1;
  int cap = 0;  // 0: the rule's truncation horizon, else default_cap
  int default_cap = 200;
  ThetaMode theta_mode = ThetaMode::split;
  std::size_t fixed_theta = 0;
  int threads = 1;
  double cap_hit_threshold = 0.01;
  bool trace = false;
};

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

struct ThetaEstimates {
  std::size_t episodes = 0;
  Estimate tau;
  Estimate error;  // w(theta, delta) > 0
};

struct TraceRow {
  std::size_t replication = 0;
  char stream = 'A';  // 'A': sample-size episode, 'B': loss episode
  std::size_t theta = 0;
  int tau = 0;
  std::size_t decision = 0;
  double loss = 0.0;
  bool cap_hit = false;
};

struct SimResult {
  std::size_t replications = 0;
  int cap = 0;
  ThetaMode theta_mode = ThetaMode::split;
  Estimate tau;                          // estimates N_psi (or E_theta tau when fixed)
  Estimate loss;                         // estimates W (or the loss at the fixed theta)
  Estimate risk;                         // c tau + loss
  std::vector<Estimate> group_loss;      // estimates W_i
  std::vector<Estimate> decision_freq;   // P(delta = d) over the loss episodes
  std::vector<ThetaEstimates> per_theta;
  std::size_t episodes = 0;
  std::size_t cap_hits = 0;
  double cap_hit_fraction = 0.0;
  bool flagged = false;  // cap_hit_fraction above the configured threshold
  std::vector<TraceRow> trace;
};

SimResult simulate(const Problem& p, const Procedure& procedure, const SimConfig& config);
SimResult simulate(const Problem& p, const StoppingRule& rule,
                   const DecisionStrategy& decision = DecisionStrategy::bayes(),
                   const SimConfig& config = {});

std::string sim_result_json(const SimResult& result, const Problem& p);
void write_sim_trace_csv(const SimResult& result, const Problem& p, std::ostream& out);

}  // namespace seqopt
