#include "seqopt/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqopt/error.hpp"
#include "seqopt/parallel.hpp"

namespace seqopt {

bool nearly_equal(double a, double b, double rel_tol) {
  if (a == b) return true;
  return std::abs(a - b) <= rel_tol * std::max(std::abs(a), std::abs(b));
}

const char* to_string(Engine engine) noexcept {
  switch (engine) {
    case Engine::automatic: return "auto";
    case Engine::history_tree: return "history-tree";
    case Engine::count_vector: return "count-vector";
  }
  return "unknown";
}

std::vector<std::vector<double>> effective_loss(const Problem& p,
                                                std::span<const double> multipliers) {
  if (multipliers.empty()) return p.loss.w;
  if (!p.constraints || p.constraints->groups.size() != multipliers.size()) {
    throw Error(ErrorKind::validation, "multipliers require one constraint group each");
  }
  std::vector<std::vector<double>> w(p.num_params(),
                                     std::vector<double>(p.num_decisions(), 0.0));
  const auto& groups = p.constraints->groups;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t theta : groups[g]) {
      for (std::size_t d = 0; d < p.num_decisions(); ++d) {
        w[theta][d] = multipliers[g] * p.loss.w[theta][d];
      }
    }
  }
  return w;
}

BayesDecision minimize_loss(const std::vector<std::vector<double>>& w,
                            std::span<const double> weight) {
  const std::size_t decisions = w.empty() ? 0 : w.front().size();
  std::vector<double> totals(decisions, 0.0);
  for (std::size_t theta = 0; theta < weight.size(); ++theta) {
    if (weight[theta] == 0.0) continue;
    for (std::size_t d = 0; d < decisions; ++d) totals[d] += w[theta][d] * weight[theta];
  }
  BayesDecision out;
  out.loss = std::numeric_limits<double>::infinity();
  for (std::size_t d = 0; d < decisions; ++d) {
    if (totals[d] < out.loss) {
      out.loss = totals[d];
      out.decision = d;
    }
  }
  for (std::size_t d = 0; d < decisions; ++d) {
    if (nearly_equal(totals[d], out.loss)) out.ties.push_back(d);
  }
  // Ties that exist in exact arithmetic can round either way; settle them by
  // index so that every evaluation path agrees.
  if (!out.ties.empty()) out.decision = out.ties.front();
  return out;
}

BayesDecision bayes_decide(const Problem& p, std::span<const Symbol> h,
                           std::span<const double> multipliers) {
  const auto w = effective_loss(p, multipliers);
  std::vector<double> weight(p.num_params());
  for (std::size_t theta = 0; theta < p.num_params(); ++theta) {
    weight[theta] = p.priors.pi1[theta] == 0.0
                        ? 0.0
                        : joint_density(p, theta, h) * p.priors.pi1[theta];
  }
  return minimize_loss(w, weight);
}

double stagewise_bayes_risk(const Problem& p, int n) {
  if (n < 1) throw Error(ErrorKind::domain, "stage must be at least 1");
  const auto table = HistoryTable::build(p, n);
  const auto& stage = table.stage(n);
  double total = 0.0;
  for (std::size_t s = 0; s < stage.size; ++s) total += table.multiplicity(n, s) * stage.loss[s];
  return total;
}

std::vector<double> stagewise_bayes_risks(const Problem& p, int N) {
  const auto table = HistoryTable::build(p, N);
  std::vector<double> out;
  for (int n = 1; n <= N; ++n) {
    const auto& stage = table.stage(n);
    double total = 0.0;
    for (std::size_t s = 0; s < stage.size; ++s) total += table.multiplicity(n, s) * stage.loss[s];
    out.push_back(total);
  }
  return out;
}

std::vector<double> posterior(const Problem& p, std::span<const Symbol> h) {
  std::vector<double> post(p.num_params());
  double total = 0.0;
  for (std::size_t theta = 0; theta < p.num_params(); ++theta) {
    post[theta] = p.priors.pi1[theta] == 0.0 ? 0.0 : joint_density(p, theta, h) * p.priors.pi1[theta];
    total += post[theta];
  }
  if (!(total > 0.0)) {
    throw Error(ErrorKind::domain, "history (" + format_history(h) + ") has zero probability");
  }
  for (double& v : post) v /= total;
  return post;
}

double posterior_risk(const Problem& p, std::span<const Symbol> h) {
  const double f = mixture_density(p, h, PriorSelect::pi1);
  if (!(f > 0.0)) {
    throw Error(ErrorKind::domain, "history (" + format_history(h) + ") has zero probability");
  }
  return bayes_decide(p, h).loss / f;
}

Engine resolve_engine(const Problem& p, Engine requested) {
  if (requested == Engine::automatic) return p.iid() ? Engine::count_vector : Engine::history_tree;
  if (requested == Engine::count_vector && !p.iid()) {
    throw Error(ErrorKind::validation, "the count-vector engine requires an iid model");
  }
  return requested;
}

namespace {

void fill_bayes(const Problem& p, StageTable& stage, int threads) {
  const std::size_t m = p.num_params();
  stage.f_mix.assign(stage.size, 0.0);
  stage.loss.assign(stage.size, 0.0);
  stage.decision.assign(stage.size, 0);
  stage.tie.assign(stage.size, 0);
  const int workers = stage.size >= kParallelGrain ? threads : 1;
  parallel_for(stage.size, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    std::vector<double> weight(m);
    for (std::size_t s = begin; s < end; ++s) {
      const double* f = &stage.f_theta[s * m];
      double mix = 0.0;
      for (std::size_t theta = 0; theta < m; ++theta) {
        mix += f[theta] * p.priors.pi2[theta];
        weight[theta] = f[theta] * p.priors.pi1[theta];
      }
      const auto best = minimize_loss(p.loss.w, weight);
      stage.f_mix[s] = mix;
      stage.loss[s] = best.loss;
      stage.decision[s] = static_cast<std::uint32_t>(best.decision);
      stage.tie[s] = best.ties.size() > 1 ? 1 : 0;
    }
  });
}

}  // namespace

HistoryTable HistoryTable::build(const Problem& p, int horizon, const TableOptions& options) {
  if (horizon < 0) throw Error(ErrorKind::domain, "horizon must be non-negative");
  HistoryTable table;
  table.engine_ = resolve_engine(p, options.engine);
  table.horizon_ = horizon;
  table.K_ = p.alphabet();
  table.m_ = p.num_params();
  table.cost_ = p.c();
  const std::size_t m = table.m_;
  const auto K = static_cast<std::size_t>(table.K_);
  table.stages_.resize(static_cast<std::size_t>(horizon) + 1);

  if (table.engine_ == Engine::count_vector) {
    const auto total = CountLattice::state_count(table.K_, horizon);
    if (!total || *total > options.max_states) {
      throw Error(ErrorKind::budget, "count lattice for horizon " + std::to_string(horizon) +
                                         " exceeds the state budget");
    }
    table.lattice_ = std::make_shared<const CountLattice>(table.K_, horizon);
  } else {
    std::size_t total = 0;
    for (int n = 0; n <= horizon; ++n) {
      const auto count = history_count(table.K_, n);
      if (!count || *count > options.max_states || total + *count > options.max_states) {
        throw Error(ErrorKind::budget, "history tree for horizon " + std::to_string(horizon) +
                                           " exceeds the state budget");
      }
      total += *count;
    }
  }

  auto& root = table.stages_[0];
  root.size = 1;
  root.f_theta.assign(m, 1.0);
  fill_bayes(p, root, options.threads);

  std::vector<double> pmf(K);
  for (int n = 0; n < horizon; ++n) {
    const auto& cur = table.stages_[static_cast<std::size_t>(n)];
    auto& next = table.stages_[static_cast<std::size_t>(n) + 1];
    if (table.engine_ == Engine::count_vector) {
      next.size = table.lattice_->size(n + 1);
      next.f_theta.assign(next.size * m, 0.0);
      std::vector<std::uint8_t> written(next.size, 0);
      for (std::size_t s = 0; s < cur.size; ++s) {
        for (std::size_t x = 0; x < K; ++x) {
          const std::size_t c = table.lattice_->child(n, s, static_cast<Symbol>(x));
          if (written[c]) continue;
          written[c] = 1;
          for (std::size_t theta = 0; theta < m; ++theta) {
            next.f_theta[c * m + theta] = cur.f_theta[s * m + theta] * p.obs.iid_pmf[theta][x];
          }
        }
      }
    } else {
      next.size = cur.size * K;
      next.f_theta.assign(next.size * m, 0.0);
      for (std::size_t s = 0; s < cur.size; ++s) {
        const History h = p.iid() ? History{} : decode_history(s, n, table.K_);
        for (std::size_t theta = 0; theta < m; ++theta) {
          const double f = cur.f_theta[s * m + theta];
          if (p.iid()) {
            std::copy(p.obs.iid_pmf[theta].begin(), p.obs.iid_pmf[theta].end(), pmf.begin());
          } else if (f == 0.0) {
            std::fill(pmf.begin(), pmf.end(), 0.0);
          } else {
            next_symbol_pmf(p, theta, h, pmf);
          }
          for (std::size_t x = 0; x < K; ++x) next.f_theta[(s * K + x) * m + theta] = f * pmf[x];
        }
      }
    }
    fill_bayes(p, next, options.threads);
  }
  return table;
}

std::size_t HistoryTable::child(int n, std::size_t index, Symbol x) const {
  if (engine_ == Engine::count_vector) return lattice_->child(n, index, x);
  return index * static_cast<std::size_t>(K_) + static_cast<std::size_t>(x);
}

double HistoryTable::multiplicity(int n, std::size_t index) const {
  return engine_ == Engine::count_vector ? lattice_->multiplicity(n, index) : 1.0;
}

std::size_t HistoryTable::index_of(std::span<const Symbol> h) const {
  if (static_cast<int>(h.size()) > horizon_) throw Error(ErrorKind::domain, "history longer than horizon");
  for (Symbol x : h) {
    if (x < 0 || x >= K_) throw Error(ErrorKind::domain, "symbol outside alphabet");
  }
  if (engine_ == Engine::count_vector) return *lattice_->find(symbol_counts(h, K_));
  return history_index(h, K_);
}

std::string HistoryTable::key(int n, std::size_t index) const {
  if (engine_ == Engine::count_vector) return format_counts(lattice_->counts(n, index));
  return format_history(decode_history(index, n, K_));
}

}  // namespace seqopt
