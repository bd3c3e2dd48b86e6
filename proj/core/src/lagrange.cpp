#include "seqopt/lagrange.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <utility>

#include "seqopt/error.hpp"
#include "seqopt/history.hpp"

namespace seqopt {

Problem weighted_problem(const Problem& p, std::span<const double> loss_multipliers) {
  if (!p.constraints || p.constraints->groups.empty()) {
    throw Error(ErrorKind::validation, "weighted problem needs constraint groups");
  }
  for (double v : loss_multipliers) {
    if (!(v >= 0.0)) throw Error(ErrorKind::domain, "multipliers must be non-negative");
  }
  Problem out = p;
  out.loss.w = effective_loss(p, loss_multipliers);
  out.constraints->multipliers.clear();
  return out;
}

double lagrangian(const Problem& p, std::span<const double> lambda, const StoppingRule& rule,
                  const DecisionStrategy& decision, const EvaluateOptions& options) {
  return lagrangian_value(evaluate(p, rule, decision, options), lambda);
}

const char* to_string(SearchStatus status) noexcept {
  switch (status) {
    case SearchStatus::converged: return "converged";
    case SearchStatus::not_binding: return "not-binding";
    case SearchStatus::infeasible: return "infeasible";
    case SearchStatus::budget_exhausted: return "budget-exhausted";
  }
  return "?";
}

namespace {

std::vector<double> scaled(std::span<const double> lambda, double c) {
  std::vector<double> out(lambda.begin(), lambda.end());
  for (auto& v : out) v *= c;
  return out;
}

void require_groups(const Problem& p, std::size_t k) {
  if (!p.constraints || p.constraints->groups.empty()) {
    throw Error(ErrorKind::validation, "constraint groups are required");
  }
  if (p.constraints->groups.size() != k) {
    throw Error(ErrorKind::validation, "expected one value per constraint group (" +
                                           std::to_string(p.constraints->groups.size()) + ")");
  }
}

ValueTables solve_weighted(const Problem& p, std::span<const double> lambda, const SearchConfig& config) {
  const auto wp = weighted_problem(p, scaled(lambda, p.c()));
  return solve_truncated(wp, config.horizon, {config.engine, config.max_states, config.threads});
}

LagrangeCandidate make_candidate(const Problem& p, std::span<const double> lambda, StoppingRule rule,
                                 TiePolicy policy, double lowest) {
  LagrangeCandidate cand;
  cand.lambda.assign(lambda.begin(), lambda.end());
  cand.stop_ties = policy;
  cand.lowest_tie_weight = lowest;
  const auto report = evaluate(p, rule, DecisionStrategy::bayes(scaled(lambda, p.c()), lowest));
  cand.rule = std::move(rule);
  cand.N = report.N_psi;
  cand.W = report.W_groups;
  cand.lagrangian = lagrangian_value(report, lambda);
  return cand;
}

// Dense simplex for min c'x, Ax = b, x >= 0 with an identity starting basis
// given by `basis`. Bland's rule; problems here have at most three rows.
struct LpResult {
  std::vector<double> x;
  std::vector<double> y;  // duals c_B B^-1
  bool ok = false;
};

LpResult simplex(std::vector<std::vector<double>> A, std::vector<double> b, const std::vector<double>& cost,
                 std::vector<std::size_t> basis) {
  const std::size_t rows = A.size();
  const std::size_t cols = cost.size();
  const std::vector<std::size_t> initial = basis;
  LpResult out;
  for (int iter = 0; iter < 5000; ++iter) {
    std::vector<double> y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t i = 0; i < rows; ++i) y[r] += cost[basis[i]] * A[i][initial[r]];
    }
    std::size_t enter = cols;
    for (std::size_t j = 0; j < cols; ++j) {
      if (std::find(basis.begin(), basis.end(), j) != basis.end()) continue;
      double rc = cost[j];
      // Column j of the original matrix is B A_j with B^-1 tracked in the initial columns.
      for (std::size_t i = 0; i < rows; ++i) rc -= cost[basis[i]] * A[i][j];
      if (rc < -1e-10 * std::max(1.0, std::abs(cost[j]))) {
        enter = j;
        break;
      }
    }
    if (enter == cols) {
      out.x.assign(cols, 0.0);
      for (std::size_t i = 0; i < rows; ++i) out.x[basis[i]] = b[i];
      out.y = y;
      out.ok = true;
      return out;
    }
    std::size_t leave = rows;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < rows; ++i) {
      if (A[i][enter] <= 1e-12) continue;
      const double ratio = b[i] / A[i][enter];
      if (ratio < best - 1e-15 || (ratio <= best + 1e-15 && leave < rows && basis[i] < basis[leave])) {
        best = ratio;
        leave = i;
      }
    }
    if (leave == rows) return out;  // unbounded; cannot happen with the convexity row
    const double pivot = A[leave][enter];
    for (auto& v : A[leave]) v /= pivot;
    b[leave] /= pivot;
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == leave || A[i][enter] == 0.0) continue;
      const double f = A[i][enter];
      for (std::size_t j = 0; j < cols; ++j) A[i][j] -= f * A[leave][j];
      b[i] -= f * b[leave];
      if (std::abs(b[i]) < 1e-15) b[i] = 0.0;
    }
    basis[leave] = enter;
  }
  return out;
}

}  // namespace

std::vector<LagrangeCandidate> solve_at_multipliers(const Problem& p, std::span<const double> lambda,
                                                    const SearchConfig& config) {
  require_groups(p, lambda.size());
  const auto tables = solve_weighted(p, lambda, config);
  std::vector<LagrangeCandidate> out;
  for (auto policy : {TiePolicy::stop(), TiePolicy::proceed()}) {
    const auto rule = extract_rule(tables, policy);
    for (double lowest : {1.0, 0.0}) {
      auto cand = make_candidate(p, lambda, rule, policy, lowest);
      const bool duplicate = std::any_of(out.begin(), out.end(), [&](const LagrangeCandidate& o) {
        return o.N == cand.N && o.W == cand.W;
      });
      if (!duplicate) out.push_back(std::move(cand));
    }
  }
  return out;
}

MultiplierSearchResult match_constraints(const Problem& p, std::span<const double> targets,
                                         const SearchConfig& config) {
  require_valid(p);
  const std::size_t k = targets.size();
  require_groups(p, k);
  if (k > 2) {
    throw Error(ErrorKind::validation, "multiplier search supports one or two groups; evaluate fixed multipliers instead");
  }
  for (double t : targets) {
    if (!(t >= 0.0)) throw Error(ErrorKind::domain, "targets must be non-negative");
  }
  MultiplierSearchResult res;
  res.horizon = config.horizon;
  res.targets.assign(targets.begin(), targets.end());
  const double M = config.lambda_max;

  // Columns 0..2k: slack s_i, elastic e_i per constraint row, then the convexity artificial.
  const std::size_t fixed_cols = 2 * k + 1;
  std::vector<LagrangeCandidate> columns;
  LpResult lp;
  std::vector<double> lambda(k, 0.0);
  bool optimal = false;
  for (res.iterations = 1; res.iterations <= config.max_iterations; ++res.iterations) {
    std::vector<std::vector<double>> A(k + 1, std::vector<double>(fixed_cols + columns.size(), 0.0));
    std::vector<double> cost(fixed_cols + columns.size(), 0.0);
    std::vector<double> b(k + 1, 1.0);
    std::vector<std::size_t> basis;
    for (std::size_t i = 0; i < k; ++i) {
      A[i][2 * i] = 1.0;
      A[i][2 * i + 1] = -1.0;
      cost[2 * i + 1] = M;
      b[i] = targets[i];
      basis.push_back(2 * i);
    }
    A[k][2 * k] = 1.0;
    cost[2 * k] = M;
    basis.push_back(2 * k);
    for (std::size_t j = 0; j < columns.size(); ++j) {
      for (std::size_t i = 0; i < k; ++i) A[i][fixed_cols + j] = columns[j].W[i];
      A[k][fixed_cols + j] = 1.0;
      cost[fixed_cols + j] = columns[j].N;
    }
    lp = simplex(A, b, cost, basis);
    if (!lp.ok) throw Error(ErrorKind::budget, "master problem did not solve");
    for (std::size_t i = 0; i < k; ++i) lambda[i] = std::clamp(-lp.y[i], 0.0, M);

    auto cands = solve_at_multipliers(p, lambda, config);
    TraceEntry entry;
    entry.iteration = res.iterations;
    entry.lambda = lambda;
    entry.W_low.assign(k, std::numeric_limits<double>::infinity());
    entry.W_high.assign(k, -std::numeric_limits<double>::infinity());
    entry.N = cands.front().N;
    for (const auto& c : cands) {
      for (std::size_t i = 0; i < k; ++i) {
        entry.W_low[i] = std::min(entry.W_low[i], c.W[i]);
        entry.W_high[i] = std::max(entry.W_high[i], c.W[i]);
      }
    }
    res.trace.push_back(entry);

    bool added = false;
    double best_rc = std::numeric_limits<double>::infinity();
    for (auto& c : cands) {
      double rc = c.N - lp.y[k];
      for (std::size_t i = 0; i < k; ++i) rc -= lp.y[i] * c.W[i];
      best_rc = std::min(best_rc, rc);
      const bool known = std::any_of(columns.begin(), columns.end(), [&](const LagrangeCandidate& o) {
        if (std::abs(o.N - c.N) > 1e-14 * std::max(1.0, c.N)) return false;
        for (std::size_t i = 0; i < k; ++i) {
          if (std::abs(o.W[i] - c.W[i]) > 1e-15) return false;
        }
        return true;
      });
      if (!known) {
        columns.push_back(std::move(c));
        added = true;
      }
    }
    // Columns already in the master cannot price out negatively except by rounding.
    if (!added) {
      optimal = best_rc >= -1e-8 * std::max(1.0, std::abs(lp.y[k]));
      break;
    }
  }

  res.lambda = lambda;
  res.loss_multipliers = scaled(lambda, p.c());
  double infeasibility = lp.x.empty() ? 1.0 : lp.x[2 * k];
  for (std::size_t i = 0; i < k && !lp.x.empty(); ++i) infeasibility += lp.x[2 * i + 1];

  std::vector<std::pair<std::size_t, double>> active;
  double total = 0.0;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    const double x = lp.x.empty() ? 0.0 : lp.x[fixed_cols + j];
    if (x > 1e-14) {
      active.emplace_back(j, x);
      total += x;
    }
  }
  res.achieved.assign(k, 0.0);
  for (auto& [j, x] : active) {
    x /= total;
    const auto& col = columns[j];
    res.N += x * col.N;
    for (std::size_t i = 0; i < k; ++i) res.achieved[i] += x * col.W[i];
    res.procedure.components.push_back(
        {col.rule, DecisionStrategy::bayes(scaled(col.lambda, p.c()), col.lowest_tie_weight), x});
    res.frontier.push_back({col.lambda, col.W, col.N, x});
  }

  // Two minimisers at the same multipliers: replace the mixture by one rule.
  if (active.size() == 1) {
    res.rule = columns[active[0].first].rule;
  } else if (active.size() == 2) {
    const auto& a = columns[active[0].first];
    const auto& b = columns[active[1].first];
    const double xa = active[0].second;
    if (a.lambda == b.lambda && a.stop_ties.kind == b.stop_ties.kind) {
      // Decisions split on ties: linear in the split weight.
      const double lowest = a.lowest_tie_weight * xa + b.lowest_tie_weight * (1.0 - xa);
      res.procedure = Procedure::single(a.rule, DecisionStrategy::bayes(scaled(a.lambda, p.c()), lowest));
      res.rule = a.rule;
    } else if (k == 1 && a.lowest_tie_weight == b.lowest_tie_weight && a.W[0] != b.W[0]) {
      // Both columns minimise N + lambda W at the multiplier where their
      // Lagrangians meet; the states tied there carry the randomisation.
      std::vector<double> meet = a.lambda;
      if (a.lambda != b.lambda) meet[0] = (a.N - b.N) / (b.W[0] - a.W[0]);
      const auto tables = solve_weighted(p, meet, config);
      const auto decision = DecisionStrategy::bayes(scaled(meet, p.c()), a.lowest_tie_weight);
      auto W_at = [&](double gamma) {
        const auto rule = extract_rule(tables, TiePolicy::randomize(gamma), config.tie_tolerance);
        const auto report = evaluate(p, rule, decision);
        return std::make_pair(rule, report);
      };
      double lo = 0.0, hi = 1.0;
      auto at_lo = W_at(lo), at_hi = W_at(hi);
      const double target = targets[0];
      const bool increasing = at_hi.second.W_groups[0] >= at_lo.second.W_groups[0];
      const double w_min = std::min(at_lo.second.W_groups[0], at_hi.second.W_groups[0]);
      const double w_max = std::max(at_lo.second.W_groups[0], at_hi.second.W_groups[0]);
      if (target >= w_min - config.tol && target <= w_max + config.tol) {
        auto mid = at_lo;
        double gamma = 0.0;
        for (int i = 0; i < 200; ++i) {
          gamma = 0.5 * (lo + hi);
          mid = W_at(gamma);
          const double w = mid.second.W_groups[0];
          if (std::abs(w - target) <= 0.01 * config.tol) break;
          if ((w < target) == increasing) lo = gamma; else hi = gamma;
        }
        if (std::abs(mid.second.W_groups[0] - target) <= config.tol) {
          res.procedure = Procedure::single(mid.first, decision);
          res.rule = mid.first;
          res.tie_randomized = true;
          res.gamma = gamma;
          res.N = mid.second.N_psi;
          res.achieved = mid.second.W_groups;
        }
      }
    }
  }

  res.slack.resize(k);
  bool all_close = true;
  for (std::size_t i = 0; i < k; ++i) {
    res.slack[i] = res.targets[i] - res.achieved[i];
    all_close = all_close && std::abs(res.slack[i]) <= config.tol;
  }
  if (infeasibility > 1e-10) {
    res.status = SearchStatus::infeasible;
  } else if (!optimal) {
    res.status = SearchStatus::budget_exhausted;
  } else if (all_close) {
    res.status = SearchStatus::converged;
  } else {
    res.status = SearchStatus::not_binding;
  }
  res.converged = res.status == SearchStatus::converged;

  if (k == 1) {
    auto sorted = res.trace;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const TraceEntry& a, const TraceEntry& b) { return a.lambda[0] < b.lambda[0]; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      if (sorted[i].lambda[0] > sorted[i - 1].lambda[0] &&
          sorted[i].W_low[0] > sorted[i - 1].W_high[0] + 1e-12) {
        ++res.monotonicity_violations;
      }
    }
  }
  return res;
}

OptimalityReport verify_conditional_optimality(const Problem& p, const MultiplierSearchResult& result, int N,
                                               int max_bits, double tol) {
  require_valid(p);
  if (!p.constraints || p.constraints->groups.empty()) {
    throw Error(ErrorKind::validation, "constraint groups are required");
  }
  const std::size_t k = p.constraints->groups.size();
  if (result.achieved.size() != k) throw Error(ErrorKind::validation, "result does not match the constraint groups");
  const int K = p.alphabet();
  std::size_t H = 0;
  for (int n = 1; n < N; ++n) {
    const auto count = history_count(K, n);
    if (!count || H + *count > static_cast<std::size_t>(std::min(max_bits, 62))) {
      throw Error(ErrorKind::budget, "enumeration needs more than 2^" + std::to_string(max_bits) + " rules");
    }
    H += *count;
  }
  const auto table = HistoryTable::build(p, N, {Engine::history_tree, std::size_t{1} << 24, 1});
  const std::size_t m = p.num_params();
  std::vector<int> group_of(m, -1);
  for (std::size_t g = 0; g < k; ++g) {
    for (std::size_t t : p.constraints->groups[g]) group_of[t] = static_cast<int>(g);
  }
  // Per node: n f^n under pi2 and the group losses of the Bayes decision when stopping there.
  const std::size_t width = k + 1;
  std::vector<std::vector<double>> node(static_cast<std::size_t>(N) + 1);
  std::vector<std::size_t> first_bit(static_cast<std::size_t>(N) + 1, 0);
  std::size_t bits = 0;
  for (int n = 1; n <= N; ++n) {
    const auto& stage = table.stage(n);
    auto& v = node[static_cast<std::size_t>(n)];
    v.assign(stage.size * width, 0.0);
    for (std::size_t s = 0; s < stage.size; ++s) {
      v[s * width] = n * stage.f_mix[s];
      const std::size_t d = stage.decision[s];
      for (std::size_t t = 0; t < m; ++t) {
        if (group_of[t] < 0) continue;
        v[s * width + 1 + static_cast<std::size_t>(group_of[t])] +=
            p.loss.w[t][d] * stage.f_theta[s * m + t] * p.priors.pi1[t];
      }
    }
    if (n < N) {
      first_bit[static_cast<std::size_t>(n)] = bits;
      bits += stage.size;
    }
  }

  OptimalityReport report;
  report.horizon = N;
  report.reference_N = result.N;
  std::vector<double> acc(width);
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << H); ++mask) {
    std::fill(acc.begin(), acc.end(), 0.0);
    auto walk = [&](auto&& self, int n, std::size_t s) -> void {
      if (n == N || (mask >> (first_bit[static_cast<std::size_t>(n)] + s) & 1u)) {
        const auto& v = node[static_cast<std::size_t>(n)];
        for (std::size_t i = 0; i < width; ++i) acc[i] += v[s * width + i];
        return;
      }
      for (int x = 0; x < K; ++x) self(self, n + 1, s * static_cast<std::size_t>(K) + static_cast<std::size_t>(x));
    };
    for (int x = 0; x < K; ++x) walk(walk, 1, static_cast<std::size_t>(x));
    ++report.rules_checked;
    bool feasible = true;
    for (std::size_t i = 0; i < k; ++i) feasible = feasible && acc[1 + i] <= result.achieved[i] + tol;
    if (!feasible) continue;
    ++report.feasible_rules;
    OptimalityViolation v{mask, acc[0], std::vector<double>(acc.begin() + 1, acc.end()), ""};
    if (acc[0] < result.N - tol) {
      v.reason = "smaller average sample number";
    } else if (result.lambda.size() == k) {
      // N* + sum lambda w <= N + sum lambda W_i, with w the achieved values.
      double lhs = result.N;
      double rhs = acc[0];
      for (std::size_t i = 0; i < k; ++i) {
        lhs += result.lambda[i] * result.achieved[i];
        rhs += result.lambda[i] * acc[1 + i];
      }
      if (rhs < lhs - tol * std::max(1.0, std::abs(lhs))) v.reason = "strict constraint without a larger sample number";
    }
    if (!v.reason.empty()) report.violations.push_back(std::move(v));
  }
  return report;
}

void write_search_trace_csv(const MultiplierSearchResult& result, std::ostream& out) {
  out.precision(17);
  const std::size_t k = result.targets.size();
  out << "iteration";
  for (std::size_t i = 0; i < k; ++i) out << ",lambda_" << i + 1;
  for (std::size_t i = 0; i < k; ++i) out << ",W_" << i + 1 << "_low,W_" << i + 1 << "_high";
  out << ",N\n";
  for (const auto& e : result.trace) {
    out << e.iteration;
    for (double v : e.lambda) out << ',' << v;
    for (std::size_t i = 0; i < k; ++i) out << ',' << e.W_low[i] << ',' << e.W_high[i];
    out << ',' << e.N << '\n';
  }
}

}  // namespace seqopt
