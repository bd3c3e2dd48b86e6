#include "seqopt/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "forward_walk.hpp"
#include "seqopt/bayes.hpp"
#include "seqopt/error.hpp"
#include "seqopt/history.hpp"
#include "seqopt/parallel.hpp"

namespace seqopt {

DecisionStrategy DecisionStrategy::bayes(std::vector<double> multipliers, double lowest_tie_weight) {
  if (!(lowest_tie_weight >= 0.0 && lowest_tie_weight <= 1.0)) {
    throw Error(ErrorKind::domain, "tie weight outside [0, 1]");
  }
  DecisionStrategy out;
  out.kind_ = Kind::bayes;
  out.multipliers_ = std::move(multipliers);
  out.lowest_tie_weight_ = lowest_tie_weight;
  return out;
}

DecisionStrategy DecisionStrategy::by_history(Fn fn) {
  DecisionStrategy out;
  out.kind_ = Kind::by_history;
  out.fn_ = std::move(fn);
  return out;
}

DecisionStrategy DecisionStrategy::by_counts(Fn fn) {
  DecisionStrategy out;
  out.kind_ = Kind::by_counts;
  out.fn_ = std::move(fn);
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::size_t resolve_decision(const std::string& text, const Problem& p) {
  for (std::size_t d = 0; d < p.num_decisions(); ++d) {
    if (p.loss.decisions[d] == text) return d;
  }
  std::size_t pos = 0;
  long value = -1;
  try {
    value = std::stol(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || value < 0 || static_cast<std::size_t>(value) >= p.num_decisions()) {
    throw Error(ErrorKind::validation, "unknown decision '" + text + "'");
  }
  return static_cast<std::size_t>(value);
}

}  // namespace

DecisionStrategy read_decision_csv(std::istream& in, const Problem& p) {
  auto table = std::make_shared<std::map<std::pair<int, History>, std::size_t>>();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (cells.size() != 3) {
      throw Error(ErrorKind::validation, "decision file line " + std::to_string(line_no) + ": expected 3 columns");
    }
    if (cells[0] == "stage") continue;
    int stage = 0;
    try {
      stage = std::stoi(cells[0]);
    } catch (const std::exception&) {
      throw Error(ErrorKind::validation, "decision file line " + std::to_string(line_no) + ": bad stage");
    }
    History h = parse_history(cells[1]);
    if (stage < 1 || static_cast<int>(h.size()) != stage) {
      throw Error(ErrorKind::validation,
                  "decision file line " + std::to_string(line_no) + ": history length does not match stage");
    }
    for (Symbol x : h) {
      if (x < 0 || x >= p.alphabet()) {
        throw Error(ErrorKind::validation, "decision file line " + std::to_string(line_no) + ": unknown symbol index");
      }
    }
    (*table)[{stage, std::move(h)}] = resolve_decision(cells[2], p);
  }
  return DecisionStrategy::by_history(
      [table](int stage, std::span<const int> key) -> std::optional<std::size_t> {
        const auto it = table->find({stage, History(key.begin(), key.end())});
        if (it == table->end()) return std::nullopt;
        return it->second;
      });
}

namespace {

int resolve_cap(const StoppingRule& rule, const EvaluateOptions& options) {
  if (options.cap > 0) return options.cap;
  if (rule.truncated()) return rule.truncation_horizon();
  return options.default_cap;
}

void finish_report(RiskReport& r, const Problem& p) {
  const auto& pi2 = p.priors.pi2;
  r.N_psi = 0.0;
  r.mass_stopped = 0.0;
  for (std::size_t t = 0; t < p.num_params(); ++t) {
    r.N_psi += pi2[t] * r.N_theta[t];
    r.mass_stopped += pi2[t] * r.mass_stopped_theta[t];
  }
  r.unstopped_mass = std::max(0.0, 1.0 - r.mass_stopped);
  r.R_infinite = r.mass_stopped < 1.0 - 1e-9;
  r.R = p.c() * r.N_psi + r.W;
  if (p.constraints && !p.constraints->multipliers.empty() &&
      p.constraints->multipliers.size() == r.W_groups.size()) {
    r.L = lagrangian_value(r, p.constraints->multipliers);
  } else {
    r.L.reset();
  }
}

RiskReport empty_report(const Problem& p, int cap) {
  RiskReport r;
  const std::size_t m = p.num_params();
  r.cap = cap;
  r.N_theta.assign(m, 0.0);
  r.W_groups.assign(p.constraints ? p.constraints->groups.size() : 0, 0.0);
  r.stop_dist.assign(static_cast<std::size_t>(cap), 0.0);
  r.stop_dist_theta.assign(m, std::vector<double>(static_cast<std::size_t>(cap), 0.0));
  r.decision_probs.assign(m, std::vector<double>(p.num_decisions(), 0.0));
  r.error_probs.assign(m, 0.0);
  r.mass_stopped_theta.assign(m, 0.0);
  return r;
}

}  // namespace

RiskReport evaluate(const Problem& p, const StoppingRule& rule, const DecisionStrategy& decision,
                    const EvaluateOptions& options) {
  require_valid(p);
  if (rule.alphabet() != p.alphabet()) {
    throw Error(ErrorKind::validation, "rule alphabet " + std::to_string(rule.alphabet()) +
                                           " does not match the problem alphabet " + std::to_string(p.alphabet()));
  }
  if (decision.kind() == DecisionStrategy::Kind::by_counts && !p.iid()) {
    throw Error(ErrorKind::validation, "count-indexed decisions need an iid model");
  }
  const int cap = resolve_cap(rule, options);
  const std::size_t m = p.num_params();
  const std::size_t D = p.num_decisions();
  const double c = p.c();
  const auto& w = p.loss.w;
  const auto& pi1 = p.priors.pi1;
  const auto& pi2 = p.priors.pi2;
  const auto w_decide = effective_loss(p, decision.multipliers());
  std::vector<int> group_of(m, -1);
  if (p.constraints) {
    for (std::size_t g = 0; g < p.constraints->groups.size(); ++g) {
      for (std::size_t t : p.constraints->groups[g]) group_of[t] = static_cast<int>(g);
    }
  }

  RiskReport r = empty_report(p, cap);
  std::vector<double> weight(m);
  std::vector<std::pair<std::size_t, double>> choices;
  std::vector<int> counts_buffer;

  detail::WalkSettings settings;
  settings.cap = cap;
  settings.need_history = decision.kind() == DecisionStrategy::Kind::by_history;
  settings.max_nodes = options.max_nodes;
  settings.prune = options.prune;

  r.nodes_visited = detail::forward_walk(p, rule, settings, [&](const detail::WalkNode& node) {
    const double s = node.reach * node.psi;
    if (s == 0.0) return;
    const std::size_t n_idx = static_cast<std::size_t>(node.stage) - 1;
    double f_mix = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
      weight[t] = node.f_theta[t] * pi1[t];
      f_mix += node.f_theta[t] * pi2[t];
    }
    const auto bayes = minimize_loss(w, weight);
    r.R_bayes_form += s * (c * node.stage * f_mix + bayes.loss);

    choices.clear();
    if (decision.kind() == DecisionStrategy::Kind::bayes) {
      const auto chosen = decision.multipliers().empty() ? bayes : minimize_loss(w_decide, weight);
      const double low = decision.lowest_tie_weight();
      if (chosen.ties.size() <= 1 || low == 1.0) {
        choices.emplace_back(chosen.decision, 1.0);
      } else {
        if (low > 0.0) choices.emplace_back(chosen.ties.front(), low);
        choices.emplace_back(chosen.ties.back(), 1.0 - low);
      }
    } else {
      std::span<const int> key = node.key;
      if (decision.kind() == DecisionStrategy::Kind::by_counts && !node.counts_key) {
        counts_buffer = symbol_counts(node.key, p.alphabet());
        key = counts_buffer;
      }
      const auto d = decision.fn()(node.stage, key);
      if (!d || *d >= D) {
        bool positive = false;
        for (std::size_t t = 0; t < m; ++t) positive = positive || node.f_theta[t] > 0.0;
        if (!positive) return;
        throw Error(ErrorKind::validation, "decision undefined at stage " + std::to_string(node.stage) +
                                               " history " +
                                               (node.counts_key ? format_counts(node.key) : format_history(node.key)));
      }
      choices.emplace_back(*d, 1.0);
    }

    for (std::size_t t = 0; t < m; ++t) {
      const double mass = s * node.f_theta[t];
      if (mass == 0.0) continue;
      r.stop_dist_theta[t][n_idx] += mass;
      r.mass_stopped_theta[t] += mass;
      r.N_theta[t] += node.stage * mass;
      for (const auto& [d, prob] : choices) {
        const double md = mass * prob;
        r.decision_probs[t][d] += md;
        if (w[t][d] > 0.0) r.error_probs[t] += md;
        const double loss = md * w[t][d] * pi1[t];
        r.W += loss;
        if (group_of[t] >= 0) r.W_groups[static_cast<std::size_t>(group_of[t])] += loss;
      }
    }
    r.stop_dist[n_idx] += s * f_mix;
  });
  finish_report(r, p);
  return r;
}

Procedure Procedure::single(StoppingRule rule, DecisionStrategy decision) {
  Procedure out;
  out.components.push_back({std::move(rule), std::move(decision), 1.0});
  return out;
}

RiskReport evaluate(const Problem& p, const Procedure& procedure, const EvaluateOptions& options) {
  if (procedure.components.empty()) throw Error(ErrorKind::domain, "procedure has no components");
  double total = 0.0;
  for (const auto& comp : procedure.components) {
    if (!(comp.weight >= 0.0)) throw Error(ErrorKind::domain, "negative procedure weight");
    total += comp.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::domain, "procedure weights must sum to one");
  if (procedure.components.size() == 1) {
    return evaluate(p, procedure.components[0].rule, procedure.components[0].decision, options);
  }
  std::vector<RiskReport> parts;
  int cap = 0;
  for (const auto& comp : procedure.components) {
    parts.push_back(evaluate(p, comp.rule, comp.decision, options));
    cap = std::max(cap, parts.back().cap);
  }
  RiskReport r = empty_report(p, cap);
  auto add = [](std::vector<double>& into, const std::vector<double>& from, double a) {
    for (std::size_t i = 0; i < from.size(); ++i) into[i] += a * from[i];
  };
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const double a = procedure.components[k].weight;
    const auto& q = parts[k];
    add(r.N_theta, q.N_theta, a);
    add(r.W_groups, q.W_groups, a);
    add(r.stop_dist, q.stop_dist, a);
    add(r.error_probs, q.error_probs, a);
    add(r.mass_stopped_theta, q.mass_stopped_theta, a);
    for (std::size_t t = 0; t < p.num_params(); ++t) {
      add(r.stop_dist_theta[t], q.stop_dist_theta[t], a);
      add(r.decision_probs[t], q.decision_probs[t], a);
    }
    r.W += a * q.W;
    r.R_bayes_form += a * q.R_bayes_form;
    r.nodes_visited += q.nodes_visited;
  }
  finish_report(r, p);
  return r;
}

double lagrangian_value(const RiskReport& report, std::span<const double> lambda) {
  if (lambda.size() != report.W_groups.size()) {
    throw Error(ErrorKind::validation, "one multiplier per constraint group is required");
  }
  double L = report.N_psi;
  for (std::size_t i = 0; i < lambda.size(); ++i) L += lambda[i] * report.W_groups[i];
  return L;
}

StoppingRule BruteForceResult::rule(std::uint64_t mask) const {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(std::max(horizon - 1, 0)));
  for (int n = 1; n < horizon; ++n) {
    rows[static_cast<std::size_t>(n) - 1].assign(*history_count(alphabet, n), 0.0);
  }
  for (std::size_t b = 0; b < entries.size(); ++b) {
    if (mask >> b & 1u) rows[static_cast<std::size_t>(entries[b].stage) - 1][entries[b].index] = 1.0;
  }
  return StoppingRule(RuleIndex::history, alphabet, std::move(rows), 1.0);
}

BruteForceResult brute_force_optimum(const Problem& p, int N, const BruteForceOptions& options) {
  if (N < 1) throw Error(ErrorKind::domain, "horizon must be at least 1");
  require_valid(p);
  const int K = p.alphabet();
  BruteForceResult out;
  out.horizon = N;
  out.alphabet = K;
  std::size_t H = 0;
  for (int n = 1; n < N; ++n) {
    const auto count = history_count(K, n);
    if (!count || H + *count > static_cast<std::size_t>(options.max_bits)) {
      throw Error(ErrorKind::budget, "brute force needs more than 2^" + std::to_string(options.max_bits) + " rules");
    }
    H += *count;
  }
  if (options.max_bits > 62) throw Error(ErrorKind::budget, "brute force limited to 62 bits");
  const auto table = HistoryTable::build(p, N, {Engine::history_tree, std::size_t{1} << 24, 1});

  // Stopping contribution a_n(h) = c n f^n(h) + l_n(h) per node.
  std::vector<std::vector<double>> stop_value(static_cast<std::size_t>(N) + 1);
  std::vector<std::size_t> first_bit(static_cast<std::size_t>(N) + 1, 0);
  for (int n = 1; n <= N; ++n) {
    const auto& stage = table.stage(n);
    auto& a = stop_value[static_cast<std::size_t>(n)];
    a.resize(stage.size);
    for (std::size_t s = 0; s < stage.size; ++s) a[s] = p.c() * n * stage.f_mix[s] + stage.loss[s];
    if (n < N) {
      first_bit[static_cast<std::size_t>(n)] = out.entries.size();
      for (std::size_t s = 0; s < stage.size; ++s) out.entries.push_back({n, s});
    }
  }
  const std::uint64_t total = std::uint64_t{1} << H;
  out.rules_evaluated = static_cast<std::size_t>(total);

  auto risk_of = [&](std::uint64_t mask) {
    auto node = [&](auto&& self, int n, std::size_t s) -> double {
      if (n == N || (mask >> (first_bit[static_cast<std::size_t>(n)] + s) & 1u)) {
        return stop_value[static_cast<std::size_t>(n)][s];
      }
      double sum = 0.0;
      for (int x = 0; x < K; ++x) sum += self(self, n + 1, s * static_cast<std::size_t>(K) + static_cast<std::size_t>(x));
      return sum;
    };
    double r = 0.0;
    for (int x = 0; x < K; ++x) r += node(node, 1, static_cast<std::size_t>(x));
    return r;
  };
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };

  const int workers = std::max(1, options.threads);
  struct Partial {
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::uint64_t> masks;
  };
  std::vector<Partial> partials(static_cast<std::size_t>(workers));
  // Chunks are contiguous and merged in worker order, so the result does not depend on scheduling.
  parallel_for(static_cast<std::size_t>(total), workers, [&](std::size_t begin, std::size_t end, std::size_t worker) {
    auto& part = partials[worker];
    for (std::size_t mask = begin; mask < end; ++mask) {
      const double r = risk_of(mask);
      if (r < part.best && !close(r, part.best)) {
        part.best = r;
        part.masks.assign(1, mask);
      } else if (close(r, part.best)) {
        part.best = std::min(part.best, r);
        part.masks.push_back(mask);
      }
    }
  });
  out.min_risk = std::numeric_limits<double>::infinity();
  for (const auto& part : partials) out.min_risk = std::min(out.min_risk, part.best);
  for (const auto& part : partials) {
    for (auto mask : part.masks) {
      if (close(risk_of(mask), out.min_risk)) out.minimizers.push_back(mask);
    }
  }
  return out;
}

TruncatabilityReport truncatability_diagnostic(const Problem& p, const StoppingRule& rule,
                                               std::span<const int> horizons, const EvaluateOptions& options) {
  require_valid(p);
  TruncatabilityReport out;
  for (const auto& row : p.loss.w) {
    for (double v : row) out.max_loss = std::max(out.max_loss, v);
  }
  const std::size_t m = p.num_params();
  const auto& pi1 = p.priors.pi1;
  const auto bayes = stagewise_bayes_risks(p, horizons.empty() ? 1 : *std::max_element(horizons.begin(), horizons.end()));
  std::vector<double> weight(m);
  for (int N : horizons) {
    if (N < 1) throw Error(ErrorKind::domain, "horizons must be at least 1");
    TailPoint point;
    point.horizon = N;
    point.bayes_risk = bayes[static_cast<std::size_t>(N) - 1];
    detail::WalkSettings settings;
    settings.cap = N;
    settings.max_nodes = options.max_nodes;
    settings.prune = options.prune;
    double reach_pi1 = 0.0;
    detail::forward_walk(p, rule, settings, [&](const detail::WalkNode& node) {
      if (node.stage != N) return;
      double f1 = 0.0;
      for (std::size_t t = 0; t < m; ++t) {
        weight[t] = node.f_theta[t] * pi1[t];
        f1 += weight[t];
      }
      point.tail_loss += node.reach * minimize_loss(p.loss.w, weight).loss;
      reach_pi1 += node.reach * f1;
    });
    point.loss_bound = out.max_loss * reach_pi1;
    point.truncated_risk = evaluate(p, truncate_rule(rule, N), DecisionStrategy::bayes(), options).R;
    out.points.push_back(point);
  }
  auto decreasing = [&](auto get) {
    if (out.points.size() < 2) return false;
    for (std::size_t i = 1; i < out.points.size(); ++i) {
      const double prev = get(out.points[i - 1]);
      const double cur = get(out.points[i]);
      if (cur > prev || (cur == prev && cur != 0.0)) return false;
    }
    return true;
  };
  out.tail_decreasing = decreasing([](const TailPoint& t) { return t.tail_loss; });
  out.bayes_risk_decreasing = decreasing([](const TailPoint& t) { return t.bayes_risk; });
  return out;
}

std::string risk_report_json(const RiskReport& r, const Problem& p) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["cap"] = r.cap;
  j["N_psi"] = r.N_psi;
  ordered_json n_theta = ordered_json::object();
  for (std::size_t t = 0; t < p.num_params(); ++t) n_theta[p.params.labels[t]] = r.N_theta[t];
  j["N_theta"] = n_theta;
  j["W"] = r.W;
  j["W_groups"] = r.W_groups;
  if (r.R_infinite) {
    j["R"] = "inf";
  } else {
    j["R"] = r.R;
  }
  j["R_truncated_at_cap"] = r.R;
  j["R_bayes_form"] = r.R_bayes_form;
  j["R_infinite"] = r.R_infinite;
  j["L"] = r.L ? ordered_json(*r.L) : ordered_json(nullptr);
  j["stop_dist"] = r.stop_dist;
  ordered_json per_theta = ordered_json::object();
  ordered_json decisions = ordered_json::object();
  ordered_json errors = ordered_json::object();
  ordered_json stopped = ordered_json::object();
  for (std::size_t t = 0; t < p.num_params(); ++t) {
    const auto& label = p.params.labels[t];
    per_theta[label] = r.stop_dist_theta[t];
    ordered_json dec = ordered_json::object();
    for (std::size_t d = 0; d < p.num_decisions(); ++d) dec[p.loss.decisions[d]] = r.decision_probs[t][d];
    decisions[label] = dec;
    errors[label] = r.error_probs[t];
    stopped[label] = r.mass_stopped_theta[t];
  }
  j["stop_dist_theta"] = per_theta;
  j["decision_probs"] = decisions;
  j["error_probs"] = errors;
  j["mass_stopped"] = r.mass_stopped;
  j["mass_stopped_theta"] = stopped;
  j["unstopped_mass"] = r.unstopped_mass;
  j["nodes_visited"] = r.nodes_visited;
  return j.dump(2);
}

void write_risk_report_csv(const RiskReport& r, const Problem& p, std::ostream& out) {
  out.precision(17);
  out << "quantity,parameter,index,value\n";
  out << "cap,,," << r.cap << '\n';
  out << "N_psi,,," << r.N_psi << '\n';
  out << "W,,," << r.W << '\n';
  out << "R,,," << r.R << '\n';
  out << "R_bayes_form,,," << r.R_bayes_form << '\n';
  out << "R_infinite,,," << (r.R_infinite ? 1 : 0) << '\n';
  if (r.L) out << "L,,," << *r.L << '\n';
  out << "mass_stopped,,," << r.mass_stopped << '\n';
  out << "unstopped_mass,,," << r.unstopped_mass << '\n';
  for (std::size_t g = 0; g < r.W_groups.size(); ++g) out << "W_group,," << g << ',' << r.W_groups[g] << '\n';
  for (std::size_t n = 0; n < r.stop_dist.size(); ++n) out << "stop_dist,," << n + 1 << ',' << r.stop_dist[n] << '\n';
  for (std::size_t t = 0; t < p.num_params(); ++t) {
    const auto& label = p.params.labels[t];
    out << "N_theta," << label << ",," << r.N_theta[t] << '\n';
    out << "error_prob," << label << ",," << r.error_probs[t] << '\n';
    out << "mass_stopped_theta," << label << ",," << r.mass_stopped_theta[t] << '\n';
    for (std::size_t d = 0; d < p.num_decisions(); ++d) {
      out << "decision_prob," << label << ',' << p.loss.decisions[d] << ',' << r.decision_probs[t][d] << '\n';
    }
    for (std::size_t n = 0; n < r.stop_dist_theta[t].size(); ++n) {
      out << "stop_dist_theta," << label << ',' << n + 1 << ',' << r.stop_dist_theta[t][n] << '\n';
    }
  }
}

}  // namespace seqopt
