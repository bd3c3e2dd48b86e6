#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "seqopt/backward.hpp"
#include "seqopt/config.hpp"
#include "seqopt/error.hpp"
#include "seqopt/evaluation.hpp"
#include "seqopt/lagrange.hpp"
#include "seqopt/monte_carlo.hpp"
#include "seqopt/sprt.hpp"
#include "seqopt/stopping_rule.hpp"

namespace seqopt::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

constexpr const char* kVersion = "0.1.0";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::validation, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

json num(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
}

// Output directory named by a hash of the config bytes, every input file and
// every parameter, so distinct runs never share a directory and identical
// runs land in the same one.
class RunDir {
 public:
  RunDir(const std::string& root, const std::string& command, const std::string& config_path,
         const std::string& config_bytes, json parameters, std::vector<std::pair<std::string, std::string>> inputs)
      : command_(command), config_path_(config_path), parameters_(std::move(parameters)) {
    config_hash_ = hex64(fnv1a64(config_bytes));
    std::uint64_t h = fnv1a64(config_bytes);
    h = fnv1a64(command, h);
    h = fnv1a64(parameters_.dump(), h);
    for (const auto& [path, bytes] : inputs) {
      inputs_.push_back({{"path", path}, {"fnv1a64", hex64(fnv1a64(bytes))}});
      h = fnv1a64(bytes, h);
    }
    run_hash_ = hex64(h);
    dir_ = fs::path(root) / (command + "-" + run_hash_);
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    atomic_write(dir_ / name, content);
    outputs_.push_back(name);
  }

  void finish(const std::string& status, int exit_code) {
    json m;
    m["tool"] = "seqopt";
    m["version"] = kVersion;
    m["command"] = command_;
    m["config"] = {{"path", config_path_}, {"fnv1a64", config_hash_}};
    m["inputs"] = inputs_.empty() ? json::array() : json(inputs_);
    m["parameters"] = parameters_;
    m["run_hash"] = run_hash_;
    m["status"] = status;
    m["exit_code"] = exit_code;
    m["outputs"] = outputs_;
    atomic_write(dir_ / "manifest.json", m.dump(2) + "\n");
  }

 private:
  static void atomic_write(const fs::path& target, const std::string& content) {
    fs::path tmp = target;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorKind::validation, "cannot write " + tmp.string());
      out << content;
      if (!out.flush()) throw Error(ErrorKind::validation, "write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
  }

  std::string command_;
  std::string config_path_;
  json parameters_;
  std::string config_hash_;
  std::string run_hash_;
  std::vector<json> inputs_;
  std::vector<std::string> outputs_;
  fs::path dir_;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation:
    case ErrorKind::domain:
      return kValidation;
    case ErrorKind::infeasible:
      return kInfeasible;
    case ErrorKind::budget:
      return kBudget;
    case ErrorKind::cap_hit:
      return kCapHit;
  }
  return kUsage;
}

TiePolicy parse_tie(const std::string& text) {
  if (text == "stop") return TiePolicy::stop();
  if (text == "continue") return TiePolicy::proceed();
  const std::string prefix = "randomize:";
  if (text.rfind(prefix, 0) == 0) {
    double g = 0.0;
    try {
      g = std::stod(text.substr(prefix.size()));
    } catch (const std::exception&) {
      throw Error(ErrorKind::validation, "bad tie policy '" + text + "'");
    }
    if (!(g >= 0.0 && g <= 1.0)) throw Error(ErrorKind::validation, "tie gamma must lie in [0, 1]");
    return TiePolicy::randomize(g);
  }
  throw Error(ErrorKind::validation, "tie policy must be stop, continue or randomize:GAMMA");
}

Engine parse_engine(const std::string& text) {
  if (text == "auto") return Engine::automatic;
  if (text == "tree") return Engine::history_tree;
  if (text == "counts") return Engine::count_vector;
  throw Error(ErrorKind::validation, "engine must be auto, tree or counts");
}

StoppingRule load_rule(const std::string& path, const std::string& bytes, const Problem& p) {
  std::istringstream in(bytes);
  StoppingRule rule;
  try {
    rule = read_rule_csv(in);
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
  if (rule.alphabet() != p.alphabet())
    throw Error(ErrorKind::validation, path + ": rule alphabet " + std::to_string(rule.alphabet()) +
                                           " does not match config alphabet " + std::to_string(p.alphabet()));
  if (rule.index() == RuleIndex::counts && !p.iid())
    throw Error(ErrorKind::validation, path + ": count-indexed rules need an iid model");
  return rule;
}

std::string rule_csv(const StoppingRule& rule) {
  std::ostringstream ss;
  write_rule_csv(rule, ss);
  return ss.str();
}

struct Globals {
  int threads = 1;
  std::string out = "out";
  std::string config;
};

// ---- solve ----------------------------------------------------------------

struct SolveArgs {
  int horizon = 0;
  bool limit = false;
  double tol = 1e-6;
  int cap = 1024;
  int start = 1;
  std::string tie = "stop";
  std::string engine = "auto";
  std::size_t max_states = std::size_t{1} << 24;
};

int cmd_solve(const Globals& g, const SolveArgs& a, std::ostream& out, std::ostream& err) {
  const std::string bytes = read_file(g.config);
  const Problem p = parse_problem_json(bytes);
  if (!a.limit && a.horizon < 1) throw Error(ErrorKind::validation, "solve needs --horizon N or --limit");
  const TiePolicy tie = parse_tie(a.tie);
  SolveOptions opts{parse_engine(a.engine), a.max_states, g.threads};

  json params{{"mode", a.limit ? "limit" : "truncated"}, {"tie", a.tie}, {"engine", a.engine},
              {"max_states", a.max_states}, {"threads", g.threads}};
  if (a.limit) {
    params["tol"] = a.tol;
    params["cap"] = a.cap;
    params["start"] = a.start;
  } else {
    params["horizon"] = a.horizon;
  }
  RunDir run(g.out, "solve", g.config, bytes, params, {});

  const ValueTables t = a.limit ? solve_limit(p, a.start, a.tol, a.cap, opts) : solve_truncated(p, a.horizon, opts);
  const StoppingRule rule = extract_rule(t, tie);
  const ObservationAdvice adv = should_take_observations(t);

  std::ostringstream tables;
  write_value_tables_csv(t, tables);
  run.write("value_tables.csv", tables.str());
  run.write("rule.csv", rule_csv(rule));

  std::ostringstream summary;
  summary << "horizon=" << t.horizon << "\n"
          << "engine=" << to_string(t.engine()) << "\n"
          << "Q0=" << fmt(t.q0()) << "\n"
          << "l0=" << fmt(t.l0()) << "\n"
          << "V0=" << fmt(t.v0()) << "\n"
          << "margin=" << fmt(adv.margin) << "\n"
          << "observe=" << (adv.worthwhile ? "true" : "false") << "\n"
          << "ties=" << rule.ties().size() << "\n";
  if (a.limit) {
    summary << "converged=" << (t.convergence.converged ? "true" : "false") << "\n"
            << "achieved_tolerance=" << fmt(t.convergence.achieved_tolerance) << "\n";
  }
  run.write("summary.txt", summary.str());

  json s{{"horizon", t.horizon},   {"engine", to_string(t.engine())}, {"Q0", num(t.q0())},
         {"l0", num(t.l0())},      {"V0", num(t.v0())},               {"margin", num(adv.margin)},
         {"observe", adv.worthwhile}, {"ties", rule.ties().size()}};
  if (a.limit) {
    json seq = json::array();
    for (std::size_t i = 0; i < t.convergence.horizons.size(); ++i)
      seq.push_back({{"horizon", t.convergence.horizons[i]}, {"Q0", num(t.convergence.q0[i])}});
    s["convergence"] = {{"converged", t.convergence.converged},
                        {"achieved_tolerance", num(t.convergence.achieved_tolerance)},
                        {"sequence", seq}};
  }
  run.write("solve.json", s.dump(2) + "\n");

  int code = kOk;
  std::string status = "ok";
  if (a.limit && !t.convergence.converged) {
    code = kBudget;
    status = "not-converged";
    err << "warning: horizon cap " << a.cap << " reached before |dQ0| < " << a.tol << "\n";
  }
  run.finish(status, code);
  out << summary.str() << "output=" << run.dir().string() << "\n";
  return code;
}

// ---- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string rule;
  std::string decisions;
  int cap = 0;
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  const std::string bytes = read_file(g.config);
  const Problem p = parse_problem_json(bytes);
  const std::string rule_bytes = read_file(a.rule);
  std::vector<std::pair<std::string, std::string>> inputs{{a.rule, rule_bytes}};
  std::string dec_bytes;
  if (!a.decisions.empty()) {
    dec_bytes = read_file(a.decisions);
    inputs.emplace_back(a.decisions, dec_bytes);
  }
  const StoppingRule rule = load_rule(a.rule, rule_bytes, p);
  DecisionStrategy decision = DecisionStrategy::bayes();
  if (!a.decisions.empty()) {
    std::istringstream in(dec_bytes);
    decision = read_decision_csv(in, p);
  }

  json params{{"cap", a.cap}, {"decisions", a.decisions.empty() ? "bayes" : "file"}};
  RunDir run(g.out, "evaluate", g.config, bytes, params, inputs);

  EvaluateOptions opts;
  opts.cap = a.cap;
  const RiskReport r = evaluate(p, rule, decision, opts);
  run.write("risk_report.json", risk_report_json(r, p) + "\n");
  std::ostringstream csv;
  write_risk_report_csv(r, p, csv);
  run.write("risk_report.csv", csv.str());

  std::ostringstream summary;
  summary << "cap=" << r.cap << "\n"
          << "N=" << fmt(r.N_psi) << "\n"
          << "W=" << fmt(r.W) << "\n"
          << "R=" << (r.R_infinite ? std::string("inf") : fmt(r.R)) << "\n"
          << "unstopped_mass=" << fmt(r.unstopped_mass) << "\n";
  for (std::size_t i = 0; i < r.W_groups.size(); ++i) summary << "W" << i + 1 << "=" << fmt(r.W_groups[i]) << "\n";
  if (r.L) summary << "L=" << fmt(*r.L) << "\n";
  run.write("summary.txt", summary.str());
  if (r.R_infinite)
    err << "warning: " << fmt(r.unstopped_mass) << " of the pi2 mass is still running at stage " << r.cap << "\n";
  run.finish("ok", kOk);
  out << summary.str() << "output=" << run.dir().string() << "\n";
  return kOk;
}

// ---- search -----------------------------------------------------------------

struct SearchArgs {
  std::vector<double> targets;
  std::string mode = "lagrange";
  int horizon = 20;
  double tol = 1e-6;
  int max_iterations = 200;
  double lambda_max = 1e6;
  int cap = 0;
  bool compare = false;
  std::vector<std::size_t> hypotheses{0, 1};
  std::string engine = "auto";
};

json oc_json(const SprtMatch& m, const Problem& p) {
  json per = json::array();
  for (std::size_t t = 0; t < p.num_params(); ++t)
    per.push_back({{"theta", p.params.labels[t]},
                   {"E_tau", num(m.oc.expected_tau[t])},
                   {"accept_alternative", num(m.oc.accept_alt[t])}});
  return {{"A", m.spec.A},
          {"B", m.spec.B},
          {"null", p.params.labels[m.spec.null_index]},
          {"alternative", p.params.labels[m.spec.alt_index]},
          {"cap", m.spec.cap},
          {"alpha", num(m.oc.alpha)},
          {"beta", num(m.oc.beta)},
          {"iterations", m.iterations},
          {"per_theta", per}};
}

std::string compare_csv(const Problem& p, const std::vector<double>& opt, const std::vector<double>& sprt) {
  std::ostringstream ss;
  ss.precision(12);
  ss << "theta,E_tau_optimal,E_tau_sprt,difference\n";
  for (std::size_t t = 0; t < p.num_params(); ++t)
    ss << p.params.labels[t] << ',' << opt[t] << ',' << sprt[t] << ',' << opt[t] - sprt[t] << '\n';
  return ss.str();
}

void write_search_result(RunDir& run, const MultiplierSearchResult& r, const Problem& p, json& s) {
  std::ostringstream trace;
  write_search_trace_csv(r, trace);
  run.write("search_trace.csv", trace.str());
  if (r.rule) {
    run.write("rule.csv", rule_csv(*r.rule));
  }
  json comps = json::array();
  for (std::size_t i = 0; i < r.procedure.components.size(); ++i) {
    const auto& c = r.procedure.components[i];
    const std::string name = "component_" + std::to_string(i + 1) + ".csv";
    run.write(name, rule_csv(c.rule));
    comps.push_back({{"file", name},
                     {"weight", c.weight},
                     {"decision_multipliers", c.decision.multipliers()},
                     {"lowest_tie_weight", c.decision.lowest_tie_weight()}});
  }
  json lam = json::array(), lm = json::array(), ach = json::array(), slk = json::array();
  for (double v : r.lambda) lam.push_back(num(v));
  for (double v : r.loss_multipliers) lm.push_back(num(v));
  for (double v : r.achieved) ach.push_back(num(v));
  for (double v : r.slack) slk.push_back(num(v));
  s["status"] = to_string(r.status);
  s["horizon"] = r.horizon;
  s["lambda"] = lam;
  s["loss_multipliers"] = lm;
  s["targets"] = r.targets;
  s["achieved"] = ach;
  s["slack"] = slk;
  s["N"] = num(r.N);
  s["single_rule"] = r.rule.has_value();
  s["tie_randomized"] = r.tie_randomized;
  s["gamma"] = r.gamma;
  s["components"] = comps;
  s["iterations"] = r.iterations;
  s["monotonicity_violations"] = r.monotonicity_violations;
  (void)p;
}

int search_status_code(SearchStatus st) {
  switch (st) {
    case SearchStatus::infeasible:
      return kInfeasible;
    case SearchStatus::budget_exhausted:
      return kBudget;
    default:
      return kOk;
  }
}

int cmd_search(const Globals& g, const SearchArgs& a, std::ostream& out, std::ostream& err) {
  const std::string bytes = read_file(g.config);
  const Problem p = parse_problem_json(bytes);
  if (a.mode != "lagrange" && a.mode != "sprt") throw Error(ErrorKind::validation, "mode must be lagrange or sprt");
  if (a.hypotheses.size() != 2 || a.hypotheses[0] == a.hypotheses[1] || a.hypotheses[0] >= p.num_params() ||
      a.hypotheses[1] >= p.num_params())
    throw Error(ErrorKind::validation, "--hypotheses needs two distinct parameter indices");
  const bool need_groups = a.mode == "lagrange" || a.compare;
  if (need_groups && (!p.constraints || p.constraints->groups.empty()))
    throw Error(ErrorKind::validation, "search in " + std::string(a.compare ? "compare" : "lagrange") +
                                           " mode needs constraint groups in the config");
  if (a.mode == "sprt" && a.targets.size() != 2)
    throw Error(ErrorKind::validation, "sprt mode takes two targets: alpha,beta");
  if (a.mode == "lagrange" && a.targets.size() != p.constraints->groups.size())
    throw Error(ErrorKind::validation, "need one target per constraint group");

  SearchConfig sc;
  sc.horizon = a.horizon;
  sc.tol = a.tol;
  sc.max_iterations = a.max_iterations;
  sc.lambda_max = a.lambda_max;
  sc.engine = parse_engine(a.engine);
  sc.threads = g.threads;
  const int sprt_cap = a.cap > 0 ? a.cap : a.horizon;
  const std::size_t h0 = a.hypotheses[0], h1 = a.hypotheses[1];

  json params{{"mode", a.mode},       {"targets", a.targets},     {"horizon", a.horizon},
              {"tol", a.tol},         {"max_iterations", a.max_iterations}, {"lambda_max", a.lambda_max},
              {"sprt_cap", sprt_cap}, {"compare", a.compare},     {"hypotheses", a.hypotheses},
              {"engine", a.engine},   {"threads", g.threads}};
  RunDir run(g.out, "search", g.config, bytes, params, {});

  json s;
  int code = kOk;
  std::ostringstream summary;
  std::optional<std::vector<double>> opt_tau, sprt_tau;

  if (a.mode == "lagrange") {
    const MultiplierSearchResult r = match_constraints(p, a.targets, sc);
    write_search_result(run, r, p, s);
    code = search_status_code(r.status);
    summary << "status=" << to_string(r.status) << "\nN=" << fmt(r.N) << "\n";
    for (std::size_t i = 0; i < r.lambda.size(); ++i)
      summary << "lambda" << i + 1 << "=" << fmt(r.lambda[i]) << "\nW" << i + 1 << "=" << fmt(r.achieved[i]) << "\n";
    if (a.compare && code == kOk) {
      EvaluateOptions eo;
      eo.cap = a.horizon;
      const RiskReport rep = evaluate(p, r.procedure, eo);
      opt_tau = rep.N_theta;
      const SprtMatch m = match_sprt_errors(p, rep.error_probs[h0], rep.error_probs[h1], sprt_cap, h0, h1);
      s["sprt"] = oc_json(m, p);
      sprt_tau = m.oc.expected_tau;
    }
  } else {
    const SprtMatch m = match_sprt_errors(p, a.targets[0], a.targets[1], sprt_cap, h0, h1);
    s = oc_json(m, p);
    const SprtProcedure proc = sprt_rule(p, m.spec);
    run.write("rule.csv", rule_csv(proc.rule));
    summary << "A=" << fmt(m.spec.A) << "\nB=" << fmt(m.spec.B) << "\nalpha=" << fmt(m.oc.alpha)
            << "\nbeta=" << fmt(m.oc.beta) << "\n";
    if (a.compare) {
      // The optimiser gets the SPRT's own group losses as targets.
      EvaluateOptions eo;
      eo.cap = sprt_cap;
      const RiskReport rep = evaluate(p, proc.procedure(), eo);
      SearchConfig oc = sc;
      oc.horizon = sprt_cap;
      const MultiplierSearchResult r = match_constraints(p, rep.W_groups, oc);
      json os;
      write_search_result(run, r, p, os);
      s["optimal"] = os;
      code = search_status_code(r.status);
      if (code == kOk) {
        EvaluateOptions eo2;
        eo2.cap = sprt_cap;
        opt_tau = evaluate(p, r.procedure, eo2).N_theta;
        sprt_tau = m.oc.expected_tau;
      }
    }
  }
  if (opt_tau && sprt_tau) {
    run.write("compare.csv", compare_csv(p, *opt_tau, *sprt_tau));
    for (std::size_t t = 0; t < p.num_params(); ++t)
      summary << "E_tau[" << p.params.labels[t] << "] optimal=" << fmt((*opt_tau)[t])
              << " sprt=" << fmt((*sprt_tau)[t]) << "\n";
  }
  run.write("search.json", s.dump(2) + "\n");
  run.write("summary.txt", summary.str());
  const std::string status = code == kOk ? "ok" : code == kInfeasible ? "infeasible" : "budget-exhausted";
  if (code != kOk) err << "error[" << status << "]: multiplier search did not meet the targets\n";
  run.finish(status, code);
  out << summary.str() << "output=" << run.dir().string() << "\n";
  return code;
}

// ---- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string rule;
  std::string decisions;
  std::size_t reps = 100000;
  std::uint64_t seed = 1;
  int cap = 0;
  std::string theta = "split";
  double cap_threshold = 0.01;
  bool trace = false;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  const std::string bytes = read_file(g.config);
  const Problem p = parse_problem_json(bytes);
  const std::string rule_bytes = read_file(a.rule);
  std::vector<std::pair<std::string, std::string>> inputs{{a.rule, rule_bytes}};
  std::string dec_bytes;
  if (!a.decisions.empty()) {
    dec_bytes = read_file(a.decisions);
    inputs.emplace_back(a.decisions, dec_bytes);
  }
  const StoppingRule rule = load_rule(a.rule, rule_bytes, p);
  DecisionStrategy decision = DecisionStrategy::bayes();
  if (!a.decisions.empty()) {
    std::istringstream in(dec_bytes);
    decision = read_decision_csv(in, p);
  }

  SimConfig sc;
  sc.replications = a.reps;
  sc.seed = a.seed;
  sc.cap = a.cap;
  sc.threads = g.threads;
  sc.cap_hit_threshold = a.cap_threshold;
  sc.trace = a.trace;
  const std::string fixed = "fixed:";
  if (a.theta.rfind(fixed, 0) == 0) {
    sc.theta_mode = ThetaMode::fixed;
    const std::string which = a.theta.substr(fixed.size());
    auto it = std::find(p.params.labels.begin(), p.params.labels.end(), which);
    if (it != p.params.labels.end()) {
      sc.fixed_theta = static_cast<std::size_t>(it - p.params.labels.begin());
    } else {
      try {
        sc.fixed_theta = std::stoul(which);
      } catch (const std::exception&) {
        throw Error(ErrorKind::validation, "unknown parameter '" + which + "'");
      }
      if (sc.fixed_theta >= p.num_params()) throw Error(ErrorKind::validation, "parameter index out of range");
    }
  } else {
    sc.theta_mode = parse_theta_mode(a.theta);
  }

  // Thread count is left out of the hash: results do not depend on it.
  json params{{"replications", a.reps}, {"seed", a.seed},         {"cap", a.cap},
              {"theta", a.theta},       {"cap_threshold", a.cap_threshold}, {"trace", a.trace},
              {"decisions", a.decisions.empty() ? "bayes" : "file"}};
  RunDir run(g.out, "simulate", g.config, bytes, params, inputs);

  const SimResult r = simulate(p, rule, decision, sc);
  run.write("estimates.json", sim_result_json(r, p) + "\n");
  if (a.trace) {
    std::ostringstream tr;
    write_sim_trace_csv(r, p, tr);
    run.write("trace.csv", tr.str());
  }
  std::ostringstream summary;
  summary << "replications=" << r.replications << "\nseed=" << a.seed << "\ncap=" << r.cap
          << "\ntau=" << fmt(r.tau.mean) << " se=" << fmt(r.tau.se) << "\nloss=" << fmt(r.loss.mean)
          << " se=" << fmt(r.loss.se) << "\nrisk=" << fmt(r.risk.mean) << " se=" << fmt(r.risk.se)
          << "\ncap_hit_fraction=" << fmt(r.cap_hit_fraction) << "\n";
  run.write("summary.txt", summary.str());
  int code = kOk;
  std::string status = "ok";
  if (r.flagged) {
    code = kCapHit;
    status = "cap-hit";
    err << "error[cap-hit]: " << fmt(r.cap_hit_fraction) << " of episodes reached the cap " << r.cap
        << " (threshold " << fmt(a.cap_threshold) << "); estimates are partial\n";
  }
  run.finish(status, code);
  out << summary.str() << "output=" << run.dir().string() << "\n";
  return code;
}

std::vector<double> split_doubles(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::validation, "bad number '" + item + "' in --targets");
    }
  }
  return v;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Optimal sequential decision procedures", "seqopt"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "Worker thread cap")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output root directory");
  app.set_version_flag("--version", kVersion);

  SolveArgs sa;
  auto* solve = app.add_subcommand("solve", "Backward induction and optimal stopping rule");
  solve->add_option("--config", g.config, "Problem config (JSON)")->required();
  auto* h_opt = solve->add_option("--horizon", sa.horizon, "Truncation horizon N");
  auto* l_opt = solve->add_flag("--limit", sa.limit, "Double N until Q0 converges");
  h_opt->excludes(l_opt);
  solve->add_option("--tol", sa.tol, "Limit-mode tolerance on successive Q0");
  solve->add_option("--cap", sa.cap, "Limit-mode horizon cap");
  solve->add_option("--start", sa.start, "Limit-mode starting horizon");
  solve->add_option("--tie", sa.tie, "Tie policy: stop, continue or randomize:GAMMA");
  solve->add_option("--engine", sa.engine, "auto, tree or counts");
  solve->add_option("--max-states", sa.max_states, "State budget");

  EvaluateArgs ea;
  auto* eval = app.add_subcommand("evaluate", "Exact risk report of a stopping rule");
  eval->add_option("--config", g.config, "Problem config (JSON)")->required();
  eval->add_option("--rule", ea.rule, "Rule file")->required();
  eval->add_option("--decisions", ea.decisions, "Decision file (default: Bayes decisions)");
  eval->add_option("--cap", ea.cap, "Last stage examined for non-truncated rules");

  SearchArgs ra;
  std::string targets;
  std::string hyp;
  auto* search = app.add_subcommand("search", "Constrained optimum or error-matched SPRT");
  search->add_option("--config", g.config, "Problem config (JSON)")->required();
  search->add_option("--targets", targets, "Comma-separated targets")->required();
  search->add_option("--mode", ra.mode, "lagrange or sprt");
  search->add_option("--horizon", ra.horizon, "Truncation horizon of the optimiser");
  search->add_option("--tol", ra.tol, "Constraint tolerance");
  search->add_option("--max-iter", ra.max_iterations, "Iteration budget");
  search->add_option("--lambda-max", ra.lambda_max, "Largest multiplier tried");
  search->add_option("--cap", ra.cap, "SPRT truncation stage (default: horizon)");
  search->add_flag("--compare", ra.compare, "Side-by-side E tau table, optimal against SPRT");
  search->add_option("--hypotheses", hyp, "Null and alternative parameter indices, e.g. 0,1");
  search->add_option("--engine", ra.engine, "auto, tree or counts");

  SimulateArgs ma;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo estimates of a stopping rule");
  sim->add_option("--config", g.config, "Problem config (JSON)")->required();
  sim->add_option("--rule", ma.rule, "Rule file")->required();
  sim->add_option("--decisions", ma.decisions, "Decision file (default: Bayes decisions)");
  sim->add_option("--reps", ma.reps, "Replications");
  sim->add_option("--seed", ma.seed, "Seed");
  sim->add_option("--cap", ma.cap, "Stage cap for non-truncated rules");
  sim->add_option("--theta", ma.theta, "split, pi1, pi2 or fixed:LABEL");
  sim->add_option("--cap-threshold", ma.cap_threshold, "Largest tolerated fraction of capped episodes");
  sim->add_flag("--trace", ma.trace, "Write per-episode trace.csv");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error[usage]: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*solve) return cmd_solve(g, sa, out, err);
    if (*eval) return cmd_evaluate(g, ea, out, err);
    if (*search) {
      ra.targets = split_doubles(targets);
      if (!hyp.empty()) {
        ra.hypotheses.clear();
        for (double v : split_doubles(hyp)) {
          if (v < 0 || v != std::floor(v)) throw Error(ErrorKind::validation, "bad --hypotheses");
          ra.hypotheses.push_back(static_cast<std::size_t>(v));
        }
      }
      return cmd_search(g, ra, out, err);
    }
    if (*sim) return cmd_simulate(g, ma, out, err);
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace seqopt::cli
