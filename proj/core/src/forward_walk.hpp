#pragma once

// Forward pass over the histories a stopping rule reaches. Every visited
// node carries its reach weight t_n (summed over histories sharing a count
// vector on the count path), its per-history densities and psi_n.

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "seqopt/error.hpp"
#include "seqopt/history.hpp"
#include "seqopt/model.hpp"
#include "seqopt/stopping_rule.hpp"

namespace seqopt::detail {

struct WalkNode {
  int stage = 0;
  double reach = 0.0;
  std::span<const double> f_theta;
  double psi = 0.0;
  std::span<const int> key;  // history, or symbol counts on the count path
  bool counts_key = false;
};

struct WalkSettings {
  int cap = 1;
  bool need_history = false;
  std::size_t max_nodes = std::size_t{1} << 26;
  double prune = 1e-300;
};

inline bool count_path_applies(const Problem& p, const StoppingRule& rule, bool need_history) {
  return p.iid() && !need_history &&
         (rule.index() == RuleIndex::counts || rule.stored_stages() == 0);
}

inline double max_weighted(std::span<const double> f, double reach) {
  double best = 0.0;
  for (double v : f) best = std::max(best, v * reach);
  return best;
}

// Returns the number of nodes visited.
template <typename Visit>
std::size_t forward_walk(const Problem& p, const StoppingRule& rule, const WalkSettings& settings,
                         Visit&& visit) {
  const int K = p.alphabet();
  const std::size_t m = p.num_params();
  const int cap = settings.cap;
  std::size_t visited = 0;

  if (count_path_applies(p, rule, settings.need_history)) {
    const auto states = CountLattice::state_count(K, cap);
    if (!states || *states > settings.max_nodes) {
      throw Error(ErrorKind::budget, "count lattice for cap " + std::to_string(cap) + " exceeds the node budget");
    }
    const CountLattice lattice(K, cap);
    std::vector<double> reach{1.0};
    std::vector<double> continue_mass{1.0};  // (1 - psi) * reach; stage 0 always continues
    std::vector<double> f(m, 1.0);
    for (int n = 1; n <= cap; ++n) {
      const std::size_t size = lattice.size(n);
      std::vector<double> next_reach(size, 0.0);
      std::vector<double> next_f(size * m, 0.0);
      std::vector<std::uint8_t> has_f(size, 0);
      for (std::size_t s = 0; s < reach.size(); ++s) {
        if (continue_mass[s] == 0.0) continue;
        for (int x = 0; x < K; ++x) {
          const std::size_t c = lattice.child(n - 1, s, x);
          next_reach[c] += continue_mass[s];
          if (!has_f[c]) {
            has_f[c] = 1;
            for (std::size_t t = 0; t < m; ++t) {
              next_f[c * m + t] = f[s * m + t] * p.obs.iid_pmf[t][static_cast<std::size_t>(x)];
            }
          }
        }
      }
      std::vector<double> next_continue(size, 0.0);
      bool any = false;
      for (std::size_t s = 0; s < size; ++s) {
        const std::span<const double> fs(&next_f[s * m], m);
        if (next_reach[s] == 0.0 || max_weighted(fs, next_reach[s]) <= settings.prune) continue;
        const double psi = rule.psi(n, s);
        ++visited;
        visit(WalkNode{n, next_reach[s], fs, psi, lattice.counts(n, s), true});
        next_continue[s] = next_reach[s] * (1.0 - psi);
        any = any || next_continue[s] > 0.0;
      }
      reach = std::move(next_reach);
      continue_mass = std::move(next_continue);
      f = std::move(next_f);
      if (!any) break;
    }
    return visited;
  }

  // Depth-first over the history tree.
  History h;
  h.reserve(static_cast<std::size_t>(cap));
  std::vector<std::vector<double>> f_stack(static_cast<std::size_t>(cap) + 1, std::vector<double>(m, 1.0));
  std::vector<std::vector<double>> pmf(m, std::vector<double>(static_cast<std::size_t>(K)));

  auto recurse = [&](auto&& self, int n, double reach) -> void {
    // Node (n, h) with densities f_stack[n] has already been visited; expand its children.
    const auto& f = f_stack[static_cast<std::size_t>(n)];
    for (std::size_t t = 0; t < m; ++t) {
      if (f[t] == 0.0) {
        std::fill(pmf[t].begin(), pmf[t].end(), 0.0);
      } else {
        next_symbol_pmf(p, t, h, pmf[t]);
      }
    }
    for (int x = 0; x < K; ++x) {
      auto& child_f = f_stack[static_cast<std::size_t>(n) + 1];
      for (std::size_t t = 0; t < m; ++t) child_f[t] = f[t] * pmf[t][static_cast<std::size_t>(x)];
      if (max_weighted(child_f, reach) <= settings.prune) continue;
      h.push_back(x);
      const double psi = rule.psi_at(n + 1, h);
      if (++visited > settings.max_nodes) {
        throw Error(ErrorKind::budget, "forward pass exceeds the node budget");
      }
      visit(WalkNode{n + 1, reach, child_f, psi, h, false});
      const double carry = reach * (1.0 - psi);
      if (n + 1 < cap && carry > 0.0) {
        // child_f is overwritten by deeper calls only at deeper levels.
        self(self, n + 1, carry);
      }
      h.pop_back();
    }
  };
  if (cap >= 1) recurse(recurse, 0, 1.0);
  return visited;
}

}  // namespace seqopt::detail
