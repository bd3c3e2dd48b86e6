#include "seqopt/sprt.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <utility>

#include "forward_walk.hpp"
#include "seqopt/error.hpp"
#include "seqopt/history.hpp"

namespace seqopt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_spec(const Problem& p, const SprtSpec& spec) {
  if (!p.iid()) throw Error(ErrorKind::validation, "the SPRT needs an iid model");
  if (spec.null_index >= p.num_params() || spec.alt_index >= p.num_params()) {
    throw Error(ErrorKind::validation, "hypothesis index out of range");
  }
  if (spec.null_index == spec.alt_index) throw Error(ErrorKind::validation, "hypotheses must be distinct");
  if (!(spec.B < spec.A)) throw Error(ErrorKind::validation, "thresholds need B < A");
  if (spec.cap < 1) throw Error(ErrorKind::validation, "cap must be at least 1");
}

double threshold_tol(double t) { return std::isfinite(t) ? 1e-10 * std::max(1.0, std::abs(t)) : 0.0; }

// +1: accept the alternative, -1: accept the null, 0: continue.
int classify(double llr, const SprtSpec& spec) {
  if (llr >= spec.A - threshold_tol(spec.A)) return 1;
  if (llr <= spec.B + threshold_tol(spec.B)) return -1;
  return 0;
}

int classify_at_cap(double llr, const SprtSpec& spec) {
  const int c = classify(llr, spec);
  if (c != 0) return c;
  double mid = 0.5 * (spec.A + spec.B);
  if (!std::isfinite(mid)) mid = std::isfinite(spec.A) ? spec.A : (std::isfinite(spec.B) ? spec.B : 0.0);
  return llr >= mid ? 1 : -1;
}

double llr_of(std::span<const int> counts, const std::vector<double>& inc) {
  double llr = 0.0;
  for (std::size_t k = 0; k < inc.size(); ++k) {
    if (counts[k] != 0) llr += counts[k] * inc[k];
  }
  return llr;
}

std::size_t decision_for(const Problem& p, std::size_t theta) {
  const auto& row = p.loss.w[theta];
  return static_cast<std::size_t>(std::min_element(row.begin(), row.end()) - row.begin());
}

bool same_llr(double a, double b) {
  if (a == b) return true;
  if (!std::isfinite(a) || !std::isfinite(b)) return false;
  return std::abs(a - b) <= 1e-10 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

struct OcRun {
  SprtOperatingCharacteristics oc;
  std::vector<double> values;  // every reachable LLR value
};

OcRun run_oc(const Problem& p, const SprtSpec& spec, bool collect) {
  check_spec(p, spec);
  const auto inc = llr_increments(p, spec);
  const std::size_t m = p.num_params();
  const std::size_t K = static_cast<std::size_t>(p.alphabet());
  OcRun run;
  auto& oc = run.oc;
  oc.expected_tau.assign(m, 0.0);
  oc.accept_alt.assign(m, 0.0);
  oc.unstopped.assign(m, 0.0);

  struct State {
    double llr;
    std::vector<double> prob;
  };
  std::vector<State> current{{0.0, std::vector<double>(m, 1.0)}};
  std::vector<State> next;
  std::vector<double> seen{0.0};
  for (int n = 1; n <= spec.cap; ++n) {
    next.clear();
    for (const auto& s : current) {
      for (std::size_t x = 0; x < K; ++x) {
        State child{s.llr + inc[x], std::vector<double>(m)};
        bool any = false;
        for (std::size_t t = 0; t < m; ++t) {
          child.prob[t] = s.prob[t] * p.obs.iid_pmf[t][x];
          any = any || child.prob[t] > 0.0;
        }
        if (any) next.push_back(std::move(child));
      }
    }
    std::sort(next.begin(), next.end(), [](const State& a, const State& b) { return a.llr < b.llr; });
    current.clear();
    for (auto& s : next) {
      if (!current.empty() && same_llr(current.back().llr, s.llr)) {
        for (std::size_t t = 0; t < m; ++t) current.back().prob[t] += s.prob[t];
      } else {
        current.push_back(std::move(s));
      }
    }
    for (const auto& s : current) seen.push_back(s.llr);
    std::vector<State> survivors;
    for (auto& s : current) {
      if (collect) run.values.push_back(s.llr);
      const int c = (n == spec.cap && spec.truncate) ? classify_at_cap(s.llr, spec) : classify(s.llr, spec);
      if (c == 0) {
        survivors.push_back(std::move(s));
        continue;
      }
      for (std::size_t t = 0; t < m; ++t) {
        oc.expected_tau[t] += n * s.prob[t];
        if (c > 0) oc.accept_alt[t] += s.prob[t];
      }
    }
    current = std::move(survivors);
    if (current.empty()) break;
  }
  for (const auto& s : current) {
    for (std::size_t t = 0; t < m; ++t) {
      oc.unstopped[t] += s.prob[t];
      oc.expected_tau[t] += spec.cap * s.prob[t];  // partial sum: tau counted as the cap
    }
  }
  std::sort(seen.begin(), seen.end());
  oc.lattice_states = static_cast<std::size_t>(
      std::unique(seen.begin(), seen.end(), [](double a, double b) { return same_llr(a, b); }) - seen.begin());
  oc.alpha = oc.accept_alt[spec.null_index];
  oc.beta = 1.0 - oc.accept_alt[spec.alt_index] - oc.unstopped[spec.alt_index];
  if (!spec.truncate) {
    for (auto t : {spec.null_index, spec.alt_index}) {
      if (oc.unstopped[t] > spec.max_tail) {
        throw Error(ErrorKind::cap_hit, "SPRT leaves " + std::to_string(oc.unstopped[t]) +
                                            " of the mass unstopped at the cap");
      }
    }
  }
  return run;
}

}  // namespace

std::vector<double> llr_increments(const Problem& p, const SprtSpec& spec) {
  const auto& f0 = p.obs.iid_pmf.at(spec.null_index);
  const auto& f1 = p.obs.iid_pmf.at(spec.alt_index);
  std::vector<double> inc(f0.size());
  for (std::size_t k = 0; k < f0.size(); ++k) {
    if (f0[k] == 0.0 && f1[k] == 0.0) {
      inc[k] = 0.0;  // never observed under either hypothesis
    } else if (f0[k] == 0.0) {
      inc[k] = kInf;
    } else if (f1[k] == 0.0) {
      inc[k] = -kInf;
    } else {
      inc[k] = std::log(f1[k]) - std::log(f0[k]);
    }
  }
  return inc;
}

SprtProcedure sprt_rule(const Problem& p, const SprtSpec& spec) {
  check_spec(p, spec);
  const auto inc = llr_increments(p, spec);
  const int stored = spec.truncate ? spec.cap - 1 : spec.cap;
  auto lattice = std::make_shared<const CountLattice>(p.alphabet(), std::max(stored, 0));
  std::vector<std::vector<double>> rows;
  for (int n = 1; n <= stored; ++n) {
    std::vector<double> row(lattice->size(n));
    for (std::size_t s = 0; s < row.size(); ++s) {
      row[s] = classify(llr_of(lattice->counts(n, s), inc), spec) != 0 ? 1.0 : 0.0;
    }
    rows.push_back(std::move(row));
  }
  StoppingRule rule(RuleIndex::counts, p.alphabet(), std::move(rows), spec.truncate ? 1.0 : 0.0, lattice);
  const std::size_t d_alt = decision_for(p, spec.alt_index);
  const std::size_t d_null = decision_for(p, spec.null_index);
  auto decision = DecisionStrategy::by_counts(
      [inc, spec, d_alt, d_null](int n, std::span<const int> counts) -> std::optional<std::size_t> {
        const double llr = llr_of(counts, inc);
        const int c = n >= spec.cap ? classify_at_cap(llr, spec) : classify(llr, spec);
        // Inside (B, A) before the cap the test never stops; pick by sign for completeness.
        if (c == 0) return llr >= 0.0 ? d_alt : d_null;
        return c > 0 ? d_alt : d_null;
      });
  return {std::move(rule), std::move(decision)};
}

SprtOperatingCharacteristics sprt_operating_characteristics(const Problem& p, const SprtSpec& spec) {
  return run_oc(p, spec, false).oc;
}

SprtMatch match_sprt_errors(const Problem& p, double alpha_target, double beta_target, int cap,
                            std::size_t null_index, std::size_t alt_index) {
  if (!(alpha_target > 0.0 && alpha_target < 1.0 && beta_target > 0.0 && beta_target < 1.0)) {
    throw Error(ErrorKind::domain, "error targets must lie in (0, 1)");
  }
  SprtSpec spec;
  spec.null_index = null_index;
  spec.alt_index = alt_index;
  spec.cap = cap;
  spec.truncate = true;
  spec.A = 1.0;
  spec.B = -1.0;
  check_spec(p, spec);
  double step = 0.0;
  for (double v : llr_increments(p, spec)) {
    if (std::isfinite(v)) step = std::max(step, std::abs(v));
  }
  const double bound = cap * step + 1.0;
  spec.A = std::clamp(std::log((1.0 - beta_target) / alpha_target), -bound + 1.0, bound);
  spec.B = std::clamp(std::log(beta_target / (1.0 - alpha_target)), -bound, spec.A - 1e-9);

  auto alpha_at = [&](double A, double B) {
    SprtSpec s = spec;
    s.A = A;
    s.B = B;
    return run_oc(p, s, false).oc.alpha;
  };
  auto beta_at = [&](double A, double B) {
    SprtSpec s = spec;
    s.A = A;
    s.B = B;
    return run_oc(p, s, false).oc.beta;
  };

  SprtMatch out;
  for (out.iterations = 1; out.iterations <= 100; ++out.iterations) {
    const double prev_A = spec.A;
    const double prev_B = spec.B;
    // Smallest A with alpha <= target; alpha is non-increasing in A.
    double lo = spec.B, hi = bound;
    for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(hi)); ++i) {
      const double mid = 0.5 * (lo + hi);
      if (alpha_at(mid, spec.B) <= alpha_target) hi = mid; else lo = mid;
    }
    spec.A = hi;
    // Largest B with beta <= target; beta is non-decreasing in B.
    lo = -bound;
    hi = spec.A;
    for (int i = 0; i < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++i) {
      const double mid = 0.5 * (lo + hi);
      if (beta_at(spec.A, mid) <= beta_target) lo = mid; else hi = mid;
    }
    spec.B = lo;
    if (spec.A == prev_A && spec.B == prev_B) break;
    if (std::abs(spec.A - prev_A) < 1e-12 && std::abs(spec.B - prev_B) < 1e-12) break;
  }
  if (out.iterations > 100) throw Error(ErrorKind::budget, "SPRT threshold search did not settle");

  auto run = run_oc(p, spec, true);
  if (run.oc.alpha > alpha_target + 1e-12 || run.oc.beta > beta_target + 1e-12) {
    throw Error(ErrorKind::infeasible, "error targets unreachable within the cap");
  }
  // Move each threshold to the middle of its gap in the reachable LLR values.
  auto& values = run.values;
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end(), same_llr), values.end());
  SprtSpec snapped = spec;
  const auto a_it = std::lower_bound(values.begin(), values.end(), spec.A - threshold_tol(spec.A));
  if (a_it != values.begin() && a_it != values.end()) snapped.A = 0.5 * (*std::prev(a_it) + *a_it);
  const auto b_it = std::upper_bound(values.begin(), values.end(), spec.B + threshold_tol(spec.B));
  if (b_it != values.begin() && b_it != values.end()) snapped.B = 0.5 * (*std::prev(b_it) + *b_it);
  if (snapped.B < snapped.A) {
    const auto check = run_oc(p, snapped, false).oc;
    if (check.alpha <= alpha_target + 1e-12 && check.beta <= beta_target + 1e-12) {
      spec = snapped;
      run.oc = check;
    }
  }
  out.spec = spec;
  out.oc = run.oc;
  return out;
}

IntervalCheck continuation_is_interval(const Problem& p, const StoppingRule& rule, const SprtSpec& hypotheses,
                                       double prune) {
  if (!p.iid()) throw Error(ErrorKind::validation, "interval check needs an iid model");
  const auto inc = llr_increments(p, hypotheses);
  const int stages = rule.truncated() ? rule.truncation_horizon() - 1 : std::max(rule.stored_stages(), 1);
  IntervalCheck out;
  if (stages < 1) return out;

  struct Point {
    double llr;
    double psi;
  };
  std::vector<std::vector<Point>> points(static_cast<std::size_t>(stages));
  detail::WalkSettings settings;
  settings.cap = stages;
  settings.prune = prune;
  detail::forward_walk(p, rule, settings, [&](const detail::WalkNode& node) {
    if (node.f_theta[hypotheses.null_index] == 0.0 && node.f_theta[hypotheses.alt_index] == 0.0) return;
    const auto counts = node.counts_key ? std::vector<int>(node.key.begin(), node.key.end())
                                        : symbol_counts(node.key, p.alphabet());
    points[static_cast<std::size_t>(node.stage) - 1].push_back({llr_of(counts, inc), node.psi});
  });
  for (int n = 1; n <= stages; ++n) {
    auto& pts = points[static_cast<std::size_t>(n) - 1];
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) { return a.llr < b.llr; });
    // Group equal LLR values; a group continues when any member has psi < 1.
    std::vector<bool> continues;
    for (std::size_t i = 0; i < pts.size();) {
      std::size_t j = i;
      bool cont = false;
      for (; j < pts.size() && same_llr(pts[i].llr, pts[j].llr); ++j) {
        if (pts[j].psi < 1.0) cont = true;
      }
      continues.push_back(cont);
      i = j;
    }
    const auto first = std::find(continues.begin(), continues.end(), true);
    const auto last = std::find(continues.rbegin(), continues.rend(), true);
    if (first == continues.end()) continue;
    const auto end = last.base();
    if (std::find(first, end, false) != end) {
      out.interval = false;
      out.exception_stages.push_back(n);
    }
  }
  return out;
}

}  // namespace seqopt
