#include "seqopt/monte_carlo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "seqopt/bayes.hpp"
#include "seqopt/error.hpp"
#include "seqopt/history.hpp"
#include "seqopt/parallel.hpp"

namespace seqopt {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t state = seed;
  for (auto& s : s_) s = splitmix64(state);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t state = seed;
  const std::uint64_t base = splitmix64(state);
  std::uint64_t mix = stream;
  return Rng(base ^ splitmix64(mix));
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
}  // namespace

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::size_t Rng::categorical(const double* pmf, std::size_t n) {
  const double u = uniform();
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (pmf[i] <= 0.0) continue;
    acc += pmf[i];
    last = i;
    if (u < acc) return i;
  }
  return last;  // rounding left a sliver above the cumulative sum
}

const char* to_string(ThetaMode mode) noexcept {
  switch (mode) {
    case ThetaMode::split: return "split";
    case ThetaMode::pi1: return "pi1";
    case ThetaMode::pi2: return "pi2";
    case ThetaMode::fixed: return "fixed";
  }
  return "?";
}

ThetaMode parse_theta_mode(const std::string& text) {
  for (auto mode : {ThetaMode::split, ThetaMode::pi1, ThetaMode::pi2, ThetaMode::fixed}) {
    if (text == to_string(mode)) return mode;
  }
  throw Error(ErrorKind::validation, "unknown theta mode '" + text + "'");
}

namespace {

struct Episode {
  std::size_t theta = 0;
  int tau = 0;
  std::size_t decision = 0;
  double loss = 0.0;
  bool cap_hit = false;
};

struct RepOutcome {
  Episode a;
  Episode b;
};

class Runner {
 public:
  Runner(const Problem& p, const Procedure& proc, int cap)
      : p_(p), proc_(proc), cap_(cap), K_(static_cast<std::size_t>(p.alphabet())), m_(p.num_params()) {
    for (const auto& comp : proc.components) {
      w_decide_.push_back(effective_loss(p, comp.decision.multipliers()));
    }
    cumulative_.reserve(proc.components.size());
    double acc = 0.0;
    for (const auto& comp : proc.components) cumulative_.push_back(acc += comp.weight);
  }

  Episode run(std::size_t theta, Rng& rng) const {
    std::size_t k = 0;
    if (proc_.components.size() > 1) {
      const double u = rng.uniform() * cumulative_.back();
      while (k + 1 < cumulative_.size() && u >= cumulative_[k]) ++k;
    }
    const auto& comp = proc_.components[k];
    const auto& rule = comp.rule;
    const CountLattice* lattice = rule.index() == RuleIndex::counts ? rule.lattice() : nullptr;

    History h;
    std::vector<int> counts(K_, 0);
    std::vector<double> logf(m_, 0.0);
    std::vector<double> pmf(K_);
    std::vector<double> other(K_);
    std::size_t lattice_idx = 0;
    Episode ep;
    ep.theta = theta;
    for (int n = 1;; ++n) {
      if (p_.iid()) {
        std::copy(p_.obs.iid_pmf[theta].begin(), p_.obs.iid_pmf[theta].end(), pmf.begin());
      } else {
        next_symbol_pmf(p_, theta, h, pmf);
      }
      const std::size_t x = rng.categorical(pmf.data(), K_);
      for (std::size_t t = 0; t < m_; ++t) {
        if (logf[t] == -std::numeric_limits<double>::infinity()) continue;
        double px = 0.0;
        if (p_.iid()) {
          px = p_.obs.iid_pmf[t][x];
        } else if (t == theta) {
          px = pmf[x];
        } else {
          next_symbol_pmf(p_, t, h, other);
          px = other[x];
        }
        logf[t] += px > 0.0 ? std::log(px) : -std::numeric_limits<double>::infinity();
      }
      h.push_back(static_cast<Symbol>(x));
      ++counts[x];
      double psi = rule.tail();
      if (n <= rule.stored_stages()) {
        if (lattice) {
          lattice_idx = lattice->child(n - 1, lattice_idx, static_cast<Symbol>(x));
          psi = rule.psi(n, lattice_idx);
        } else {
          psi = rule.psi_at(n, h);
        }
      }
      const bool stop = rng.uniform() < psi;
      if (stop || n >= cap_) {
        ep.tau = n;
        ep.cap_hit = !stop;
        break;
      }
    }
    ep.decision = decide(comp, k, ep.tau, h, counts, logf, rng);
    ep.loss = p_.loss.w[theta][ep.decision];
    return ep;
  }

 private:
  std::size_t decide(const ProcedureComponent& comp, std::size_t k, int n, const History& h,
                     const std::vector<int>& counts, const std::vector<double>& logf, Rng& rng) const {
    const auto& strategy = comp.decision;
    if (strategy.kind() != DecisionStrategy::Kind::bayes) {
      const bool by_counts = strategy.kind() == DecisionStrategy::Kind::by_counts;
      const auto d = by_counts ? strategy.fn()(n, counts) : strategy.fn()(n, h);
      if (!d || *d >= p_.num_decisions()) {
        throw Error(ErrorKind::validation, "decision undefined at stage " + std::to_string(n) + " history " +
                                               format_history(h));
      }
      return *d;
    }
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < m_; ++t) {
      if (p_.priors.pi1[t] > 0.0) top = std::max(top, logf[t]);
    }
    std::vector<double> weight(m_, 0.0);
    if (top > -std::numeric_limits<double>::infinity()) {
      for (std::size_t t = 0; t < m_; ++t) {
        if (p_.priors.pi1[t] > 0.0) weight[t] = std::exp(logf[t] - top) * p_.priors.pi1[t];
      }
    }
    const auto chosen = minimize_loss(w_decide_[k], weight);
    const double low = strategy.lowest_tie_weight();
    if (chosen.ties.size() <= 1 || low == 1.0) return chosen.decision;
    return rng.uniform() < low ? chosen.ties.front() : chosen.ties.back();
  }

  const Problem& p_;
  const Procedure& proc_;
  int cap_;
  std::size_t K_;
  std::size_t m_;
  std::vector<std::vector<std::vector<double>>> w_decide_;
  std::vector<double> cumulative_;
};

// Welford accumulator, fed in replication order.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  Estimate estimate() const {
    Estimate e;
    e.count = n;
    e.mean = mean;
    e.se = n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1) / static_cast<double>(n)) : 0.0;
    return e;
  }
};

}  // namespace

SimResult simulate(const Problem& p, const Procedure& procedure, const SimConfig& config) {
  require_valid(p);
  if (config.replications < 1) throw Error(ErrorKind::validation, "replications must be at least 1");
  if (procedure.components.empty()) throw Error(ErrorKind::domain, "procedure has no components");
  if (config.theta_mode == ThetaMode::fixed && config.fixed_theta >= p.num_params()) {
    throw Error(ErrorKind::validation, "fixed theta index out of range");
  }
  int cap = config.cap;
  if (cap <= 0) {
    cap = 0;
    for (const auto& comp : procedure.components) {
      if (comp.rule.alphabet() != p.alphabet()) {
        throw Error(ErrorKind::validation, "rule alphabet does not match the problem alphabet");
      }
      cap = std::max(cap, comp.rule.truncated() ? comp.rule.truncation_horizon() : config.default_cap);
    }
  }
  if (cap < 1) throw Error(ErrorKind::validation, "cap must be at least 1");

  const Runner runner(p, procedure, cap);
  const auto& pi1 = p.priors.pi1;
  const auto& pi2 = p.priors.pi2;
  const bool split = config.theta_mode == ThetaMode::split;
  std::vector<RepOutcome> outcomes(config.replications);
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(std::max(config.threads, 1)));

  parallel_for(config.replications, config.threads, [&](std::size_t begin, std::size_t end, std::size_t worker) {
    try {
      for (std::size_t r = begin; r < end; ++r) {
        Rng rng = Rng::substream(config.seed, r);
        auto draw = [&](const std::vector<double>& prior) { return rng.categorical(prior.data(), prior.size()); };
        auto& out = outcomes[r];
        switch (config.theta_mode) {
          case ThetaMode::split:
            out.a = runner.run(draw(pi2), rng);
            out.b = runner.run(draw(pi1), rng);
            break;
          case ThetaMode::pi1:
            out.a = runner.run(draw(pi1), rng);
            break;
          case ThetaMode::pi2:
            out.a = runner.run(draw(pi2), rng);
            break;
          case ThetaMode::fixed:
            out.a = runner.run(config.fixed_theta, rng);
            break;
        }
        if (!split) out.b = out.a;
      }
    } catch (...) {
      failures[worker] = std::current_exception();
    }
  });
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }

  SimResult res;
  res.replications = config.replications;
  res.cap = cap;
  res.theta_mode = config.theta_mode;
  const std::size_t groups = p.constraints ? p.constraints->groups.size() : 0;
  std::vector<int> group_of(p.num_params(), -1);
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t t : p.constraints->groups[g]) group_of[t] = static_cast<int>(g);
  }
  Moments tau, loss, risk;
  std::vector<Moments> group_loss(groups), decision(p.num_decisions());
  std::vector<Moments> theta_tau(p.num_params()), theta_err(p.num_params());
  auto per_theta = [&](const Episode& e) {
    theta_tau[e.theta].add(e.tau);
    theta_err[e.theta].add(p.loss.w[e.theta][e.decision] > 0.0 ? 1.0 : 0.0);
    ++res.episodes;
    if (e.cap_hit) ++res.cap_hits;
  };
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const auto& o = outcomes[r];
    tau.add(o.a.tau);
    loss.add(o.b.loss);
    risk.add(p.c() * o.a.tau + o.b.loss);
    for (std::size_t g = 0; g < groups; ++g) {
      group_loss[g].add(group_of[o.b.theta] == static_cast<int>(g) ? o.b.loss : 0.0);
    }
    for (std::size_t d = 0; d < decision.size(); ++d) decision[d].add(o.b.decision == d ? 1.0 : 0.0);
    per_theta(o.a);
    if (split) per_theta(o.b);
    if (config.trace) {
      res.trace.push_back({r, 'A', o.a.theta, o.a.tau, o.a.decision, o.a.loss, o.a.cap_hit});
      if (split) res.trace.push_back({r, 'B', o.b.theta, o.b.tau, o.b.decision, o.b.loss, o.b.cap_hit});
    }
  }
  res.tau = tau.estimate();
  res.loss = loss.estimate();
  res.risk = risk.estimate();
  for (const auto& g : group_loss) res.group_loss.push_back(g.estimate());
  for (const auto& d : decision) res.decision_freq.push_back(d.estimate());
  for (std::size_t t = 0; t < p.num_params(); ++t) {
    ThetaEstimates te;
    te.episodes = theta_tau[t].n;
    te.tau = theta_tau[t].estimate();
    te.error = theta_err[t].estimate();
    res.per_theta.push_back(te);
  }
  res.cap_hit_fraction = static_cast<double>(res.cap_hits) / static_cast<double>(res.episodes);
  res.flagged = res.cap_hit_fraction > config.cap_hit_threshold;
  return res;
}

SimResult simulate(const Problem& p, const StoppingRule& rule, const DecisionStrategy& decision,
                   const SimConfig& config) {
  return simulate(p, Procedure::single(rule, decision), config);
}

namespace {
nlohmann::ordered_json to_json(const Estimate& e) {
  return {{"mean", e.mean}, {"se", e.se}, {"count", e.count}};
}
}  // namespace

std::string sim_result_json(const SimResult& r, const Problem& p) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["replications"] = r.replications;
  j["cap"] = r.cap;
  j["theta_mode"] = to_string(r.theta_mode);
  j["tau"] = to_json(r.tau);
  j["loss"] = to_json(r.loss);
  j["risk"] = to_json(r.risk);
  ordered_json groups = ordered_json::array();
  for (const auto& g : r.group_loss) groups.push_back(to_json(g));
  j["group_loss"] = groups;
  ordered_json decisions = ordered_json::object();
  for (std::size_t d = 0; d < r.decision_freq.size(); ++d) decisions[p.loss.decisions[d]] = to_json(r.decision_freq[d]);
  j["decision_freq"] = decisions;
  ordered_json per_theta = ordered_json::object();
  for (std::size_t t = 0; t < r.per_theta.size(); ++t) {
    per_theta[p.params.labels[t]] = {{"episodes", r.per_theta[t].episodes},
                                     {"tau", to_json(r.per_theta[t].tau)},
                                     {"error", to_json(r.per_theta[t].error)}};
  }
  j["per_theta"] = per_theta;
  j["episodes"] = r.episodes;
  j["cap_hits"] = r.cap_hits;
  j["cap_hit_fraction"] = r.cap_hit_fraction;
  j["flagged"] = r.flagged;
  return j.dump(2);
}

void write_sim_trace_csv(const SimResult& r, const Problem& p, std::ostream& out) {
  out.precision(17);
  out << "replication,stream,theta,tau,decision,loss,cap_hit\n";
  for (const auto& row : r.trace) {
    out << row.replication << ',' << row.stream << ',' << p.params.labels[row.theta] << ',' << row.tau << ','
        << p.loss.decisions[row.decision] << ',' << row.loss << ',' << (row.cap_hit ? 1 : 0) << '\n';
  }
}

}  // namespace seqopt
