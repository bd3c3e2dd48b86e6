#include "seqopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <sstream>

#include "seqopt/error.hpp"
#include "seqopt/history.hpp"

namespace seqopt {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::domain: return "domain";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::budget: return "budget";
    case ErrorKind::cap_hit: return "cap-hit";
  }
  return "unknown";
}

const char* to_string(ViolationCode code) noexcept {
  switch (code) {
    case ViolationCode::empty_parameter_space: return "empty-parameter-space";
    case ViolationCode::duplicate_label: return "duplicate-label";
    case ViolationCode::bad_alphabet: return "bad-alphabet";
    case ViolationCode::dimension_mismatch: return "dimension-mismatch";
    case ViolationCode::negative_probability: return "negative-probability";
    case ViolationCode::pmf_not_normalized: return "pmf-not-normalized";
    case ViolationCode::kernel_undefined: return "kernel-undefined";
    case ViolationCode::missing_kernel: return "missing-kernel";
    case ViolationCode::negative_loss: return "negative-loss";
    case ViolationCode::no_decisions: return "no-decisions";
    case ViolationCode::prior_not_normalized: return "prior-not-normalized";
    case ViolationCode::nonpositive_cost: return "nonpositive-cost";
    case ViolationCode::overlapping_groups: return "overlapping-groups";
    case ViolationCode::group_index_out_of_range: return "group-index-out-of-range";
    case ViolationCode::nonpositive_bound: return "nonpositive-bound";
    case ViolationCode::negative_multiplier: return "negative-multiplier";
  }
  return "unknown";
}

namespace {

void check_pmf(std::span<const double> pmf, const std::string& where, std::vector<Violation>& out) {
  double sum = 0.0;
  bool negative = false;
  for (double v : pmf) {
    if (!(v >= 0.0)) negative = true;
    sum += v;
  }
  if (negative) {
    out.push_back({ViolationCode::negative_probability, where + ": negative probability"});
  }
  if (std::abs(sum - 1.0) > kNormalizationTolerance) {
    std::ostringstream os;
    os << where << ": pmf sums to " << sum;
    out.push_back({ViolationCode::pmf_not_normalized, os.str()});
  }
}

void check_prior(const std::vector<double>& pi, std::size_t m, const char* name,
                 std::vector<Violation>& out) {
  if (pi.size() != m) {
    std::ostringstream os;
    os << name << " has " << pi.size() << " entries, expected " << m;
    out.push_back({ViolationCode::dimension_mismatch, os.str()});
    return;
  }
  double sum = 0.0;
  for (double v : pi) {
    if (!(v >= 0.0)) {
      out.push_back({ViolationCode::negative_probability, std::string(name) + ": negative weight"});
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kNormalizationTolerance) {
    std::ostringstream os;
    os << name << " sums to " << sum;
    out.push_back({ViolationCode::prior_not_normalized, os.str()});
  }
}

// Histories of length < depth are probed for the kernel; large trees are cut off.
constexpr std::size_t kKernelProbeBudget = 1u << 20;

void check_kernel(const Problem& p, std::vector<Violation>& out) {
  const auto& obs = p.obs;
  if (!obs.kernel) {
    out.push_back({ViolationCode::missing_kernel, "dependent model without kernel"});
    return;
  }
  const int depth = obs.kernel_horizon > 0 ? obs.kernel_horizon : 2;
  std::vector<double> pmf(static_cast<std::size_t>(obs.alphabet_size));
  std::size_t probed = 0;
  for (int n = 0; n < depth; ++n) {
    const auto count = history_count(obs.alphabet_size, n);
    if (!count || probed + *count > kKernelProbeBudget) break;
    probed += *count;
    for (std::size_t idx = 0; idx < *count; ++idx) {
      const History h = decode_history(idx, n, obs.alphabet_size);
      for (std::size_t theta = 0; theta < p.num_params(); ++theta) {
        const std::string where =
            "kernel[" + std::to_string(theta) + "](" + format_history(h) + ")";
        if (!obs.kernel(theta, h, pmf)) {
          out.push_back({ViolationCode::kernel_undefined, where + " undefined"});
          continue;
        }
        check_pmf(pmf, where, out);
      }
    }
  }
}

}  // namespace

std::vector<Violation> validate_problem(const Problem& p) {
  std::vector<Violation> out;
  const std::size_t m = p.num_params();
  if (m == 0) out.push_back({ViolationCode::empty_parameter_space, "no parameters"});
  {
    std::set<std::string> seen;
    for (const auto& label : p.params.labels) {
      if (!seen.insert(label).second) {
        out.push_back({ViolationCode::duplicate_label, "duplicate parameter label '" + label + "'"});
      }
    }
  }
  const int K = p.obs.alphabet_size;
  if (K < 2) out.push_back({ViolationCode::bad_alphabet, "alphabet_size must be at least 2"});

  if (p.obs.kind == ModelKind::iid) {
    if (p.obs.iid_pmf.size() != m) {
      out.push_back({ViolationCode::dimension_mismatch,
                     "model.pmf has " + std::to_string(p.obs.iid_pmf.size()) + " rows, expected " +
                         std::to_string(m)});
    }
    for (std::size_t t = 0; t < p.obs.iid_pmf.size(); ++t) {
      const auto& row = p.obs.iid_pmf[t];
      const std::string where = "model.pmf[" + std::to_string(t) + "]";
      if (static_cast<int>(row.size()) != K) {
        out.push_back({ViolationCode::dimension_mismatch,
                       where + " has " + std::to_string(row.size()) + " entries, expected " +
                           std::to_string(K)});
        continue;
      }
      check_pmf(row, where, out);
    }
  } else if (K >= 2 && m > 0) {
    check_kernel(p, out);
  }

  if (p.loss.decisions.empty()) out.push_back({ViolationCode::no_decisions, "no decisions"});
  if (p.loss.w.size() != m) {
    out.push_back({ViolationCode::dimension_mismatch,
                   "loss has " + std::to_string(p.loss.w.size()) + " rows, expected " +
                       std::to_string(m)});
  }
  for (std::size_t t = 0; t < p.loss.w.size(); ++t) {
    if (p.loss.w[t].size() != p.loss.decisions.size()) {
      out.push_back({ViolationCode::dimension_mismatch,
                     "loss row " + std::to_string(t) + " has wrong length"});
    }
    for (double v : p.loss.w[t]) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        out.push_back({ViolationCode::negative_loss,
                       "loss row " + std::to_string(t) + " has a negative or non-finite entry"});
        break;
      }
    }
  }

  check_prior(p.priors.pi1, m, "pi1", out);
  check_prior(p.priors.pi2, m, "pi2", out);
  if (!(p.cost.c > 0.0) || !std::isfinite(p.cost.c)) {
    out.push_back({ViolationCode::nonpositive_cost, "cost must be positive"});
  }

  if (p.constraints) {
    const auto& cs = *p.constraints;
    std::vector<int> owner(m, -1);
    for (std::size_t g = 0; g < cs.groups.size(); ++g) {
      for (std::size_t theta : cs.groups[g]) {
        if (theta >= m) {
          out.push_back({ViolationCode::group_index_out_of_range,
                         "group " + std::to_string(g) + " references parameter " +
                             std::to_string(theta)});
          continue;
        }
        if (owner[theta] >= 0) {
          out.push_back({ViolationCode::overlapping_groups,
                         "parameter '" + p.params.labels[theta] + "' is in groups " +
                             std::to_string(owner[theta]) + " and " + std::to_string(g)});
        }
        owner[theta] = static_cast<int>(g);
      }
    }
    if (!cs.bounds.empty() && cs.bounds.size() != cs.groups.size()) {
      out.push_back({ViolationCode::dimension_mismatch, "constraints.bounds length differs from groups"});
    }
    for (double b : cs.bounds) {
      if (!(b > 0.0)) out.push_back({ViolationCode::nonpositive_bound, "constraint bound must be positive"});
    }
    if (!cs.multipliers.empty() && cs.multipliers.size() != cs.groups.size()) {
      out.push_back({ViolationCode::dimension_mismatch, "constraints.multipliers length differs from groups"});
    }
    for (double l : cs.multipliers) {
      if (!(l >= 0.0)) out.push_back({ViolationCode::negative_multiplier, "multiplier must be >= 0"});
    }
  }
  return out;
}

const Problem& require_valid(const Problem& p) {
  const auto violations = validate_problem(p);
  if (!violations.empty()) {
    std::ostringstream os;
    os << "invalid problem:";
    for (const auto& v : violations) os << "\n  [" << to_string(v.code) << "] " << v.message;
    throw Error(ErrorKind::validation, os.str());
  }
  return p;
}

const std::vector<double>& prior(const Problem& p, PriorSelect select) {
  return select == PriorSelect::pi1 ? p.priors.pi1 : p.priors.pi2;
}

void next_symbol_pmf(const Problem& p, std::size_t theta, std::span<const Symbol> history,
                     std::span<double> pmf) {
  if (p.obs.kind == ModelKind::iid) {
    std::copy(p.obs.iid_pmf[theta].begin(), p.obs.iid_pmf[theta].end(), pmf.begin());
    return;
  }
  const int n = static_cast<int>(history.size());
  if (p.obs.kernel_horizon > 0 && n >= p.obs.kernel_horizon) {
    throw Error(ErrorKind::domain, "history (" + format_history(history) +
                                       ") exceeds the kernel horizon " +
                                       std::to_string(p.obs.kernel_horizon));
  }
  if (!p.obs.kernel(theta, history, pmf)) {
    throw Error(ErrorKind::domain, "kernel undefined for history (" + format_history(history) + ")");
  }
}

double joint_density(const Problem& p, std::size_t theta, std::span<const Symbol> h) {
  const int K = p.alphabet();
  if (theta >= p.num_params()) throw Error(ErrorKind::domain, "parameter index out of range");
  for (Symbol x : h) {
    if (x < 0 || x >= K) {
      throw Error(ErrorKind::domain, "symbol " + std::to_string(x) + " outside alphabet");
    }
  }
  if (p.obs.kind == ModelKind::iid) {
    double f = 1.0;
    for (Symbol x : h) f *= p.obs.iid_pmf[theta][static_cast<std::size_t>(x)];
    return f;
  }
  std::vector<double> pmf(static_cast<std::size_t>(K));
  double f = 1.0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    next_symbol_pmf(p, theta, h.first(i), pmf);
    f *= pmf[static_cast<std::size_t>(h[i])];
  }
  return f;
}

double mixture_density(const Problem& p, std::span<const Symbol> h, PriorSelect select) {
  const auto& pi = prior(p, select);
  double f = 0.0;
  for (std::size_t theta = 0; theta < p.num_params(); ++theta) {
    if (pi[theta] == 0.0) continue;
    f += joint_density(p, theta, h) * pi[theta];
  }
  return f;
}

TabularKernel::TabularKernel(std::size_t num_params, int alphabet_size)
    : alphabet_size_(alphabet_size), tables_(num_params) {}

void TabularKernel::set(std::size_t theta, const History& history, std::vector<double> pmf) {
  tables_.at(theta)[history] = std::move(pmf);
}

bool TabularKernel::lookup(std::size_t theta, std::span<const Symbol> history,
                           std::span<double> pmf) const {
  if (theta >= tables_.size()) return false;
  const auto it = tables_[theta].find(History(history.begin(), history.end()));
  if (it == tables_[theta].end() || static_cast<int>(it->second.size()) != alphabet_size_) {
    return false;
  }
  std::copy(it->second.begin(), it->second.end(), pmf.begin());
  return true;
}

int TabularKernel::horizon() const {
  int longest = -1;
  for (const auto& table : tables_) {
    for (const auto& [h, pmf] : table) longest = std::max(longest, static_cast<int>(h.size()));
  }
  return longest + 1;
}

KernelFn TabularKernel::as_function() const {
  auto shared = std::make_shared<const TabularKernel>(*this);
  return [shared](std::size_t theta, std::span<const Symbol> history, std::span<double> pmf) {
    return shared->lookup(theta, history, pmf);
  };
}

KernelFn markov_kernel(std::vector<std::vector<double>> initial,
                       std::vector<std::vector<std::vector<double>>> transition) {
  struct Chain {
    std::vector<std::vector<double>> initial;
    std::vector<std::vector<std::vector<double>>> transition;
  };
  auto chain = std::make_shared<const Chain>(Chain{std::move(initial), std::move(transition)});
  return [chain](std::size_t theta, std::span<const Symbol> history, std::span<double> pmf) {
    if (theta >= chain->initial.size() || theta >= chain->transition.size()) return false;
    const std::vector<double>* row = &chain->initial[theta];
    if (!history.empty()) {
      const auto prev = static_cast<std::size_t>(history.back());
      if (prev >= chain->transition[theta].size()) return false;
      row = &chain->transition[theta][prev];
    }
    if (row->size() != pmf.size()) return false;
    std::copy(row->begin(), row->end(), pmf.begin());
    return true;
  };
}

Problem make_iid_problem(std::vector<std::vector<double>> pmf, std::vector<std::vector<double>> loss,
                         std::vector<double> pi1, std::vector<double> pi2, double cost) {
  Problem p;
  for (std::size_t i = 0; i < pmf.size(); ++i) p.params.labels.push_back("theta" + std::to_string(i + 1));
  p.obs.alphabet_size = pmf.empty() ? 2 : static_cast<int>(pmf.front().size());
  p.obs.kind = ModelKind::iid;
  p.obs.iid_pmf = std::move(pmf);
  const std::size_t decisions = loss.empty() ? 0 : loss.front().size();
  for (std::size_t d = 0; d < decisions; ++d) p.loss.decisions.push_back("d" + std::to_string(d + 1));
  p.loss.w = std::move(loss);
  p.priors.pi1 = std::move(pi1);
  p.priors.pi2 = std::move(pi2);
  p.cost.c = cost;
  return p;
}

std::vector<std::vector<double>> zero_one_loss(std::size_t n) {
  std::vector<std::vector<double>> w(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i) w[i][i] = 0.0;
  return w;
}

}  // namespace seqopt
