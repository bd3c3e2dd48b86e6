#include "seqopt/stopping_rule.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "seqopt/error.hpp"

namespace seqopt {

const char* to_string(RuleIndex index) noexcept {
  return index == RuleIndex::history ? "history" : "counts";
}

double TiePolicy::value() const {
  switch (kind) {
    case Kind::stop: return 1.0;
    case Kind::proceed: return 0.0;
    case Kind::randomize: return gamma;
  }
  return 1.0;
}

StoppingRule::StoppingRule(RuleIndex index, int alphabet, std::vector<std::vector<double>> rows,
                           double tail, std::shared_ptr<const CountLattice> lattice)
    : index_(index), K_(alphabet), rows_(std::move(rows)), tail_(tail), lattice_(std::move(lattice)) {
  if (!(tail_ >= 0.0 && tail_ <= 1.0)) throw Error(ErrorKind::validation, "tail value outside [0, 1]");
  if (index_ == RuleIndex::counts && !rows_.empty()) {
    if (!lattice_ || lattice_->max_stage() < stored_stages() || lattice_->alphabet() != K_) {
      throw Error(ErrorKind::validation, "count-indexed rule needs a lattice covering its stages");
    }
  }
  for (std::size_t n = 1; n <= rows_.size(); ++n) {
    const auto expected = index_ == RuleIndex::history
                              ? history_count(K_, static_cast<int>(n))
                              : std::optional<std::size_t>(lattice_->size(static_cast<int>(n)));
    if (!expected || rows_[n - 1].size() != *expected) {
      throw Error(ErrorKind::validation, "rule row " + std::to_string(n) + " has the wrong size");
    }
    for (double v : rows_[n - 1]) {
      if (!(v >= 0.0 && v <= 1.0)) {
        throw Error(ErrorKind::validation, "rule value outside [0, 1] at stage " + std::to_string(n));
      }
    }
  }
}

StoppingRule StoppingRule::constant(int alphabet, double value) {
  return StoppingRule(RuleIndex::history, alphabet, {}, value);
}

double StoppingRule::psi(int n, std::size_t native_index) const {
  if (n > stored_stages()) return tail_;
  return rows_[static_cast<std::size_t>(n) - 1][native_index];
}

double StoppingRule::psi_at(int n, std::span<const Symbol> h) const {
  if (n > stored_stages()) return tail_;
  if (index_ == RuleIndex::history) return psi(n, history_index(h, K_));
  const auto counts = symbol_counts(h, K_);
  const auto found = lattice_->find(counts);
  if (!found) throw Error(ErrorKind::domain, "counts outside the rule lattice");
  return psi(n, *found);
}

void StoppingRule::set(int n, std::size_t native_index, double value) {
  if (!(value >= 0.0 && value <= 1.0)) throw Error(ErrorKind::domain, "rule value outside [0, 1]");
  rows_.at(static_cast<std::size_t>(n) - 1).at(native_index) = value;
}

std::string StoppingRule::key(int n, std::size_t native_index) const {
  if (index_ == RuleIndex::counts) return format_counts(lattice_->counts(n, native_index));
  return format_history(decode_history(native_index, n, K_));
}

ReachWeights reach_weights(const StoppingRule& rule, int N, std::size_t max_states) {
  ReachWeights out;
  const int K = rule.alphabet();
  std::vector<double> t_prev{1.0};
  std::vector<double> psi_prev{0.0};  // the root always continues to stage 1
  std::size_t total = 0;
  for (int n = 1; n <= N; ++n) {
    const auto count = history_count(K, n);
    if (!count || total + *count > max_states) {
      throw Error(ErrorKind::budget, "reach weights exceed the state budget");
    }
    total += *count;
    std::vector<double> t(*count), s(*count), psi(*count);
    for (std::size_t idx = 0; idx < *count; ++idx) {
      const std::size_t parent = idx / static_cast<std::size_t>(K);
      t[idx] = t_prev[parent] * (1.0 - psi_prev[parent]);
      psi[idx] = rule.index() == RuleIndex::history || n > rule.stored_stages()
                     ? rule.psi(n, idx)
                     : rule.psi_at(n, decode_history(idx, n, K));
      s[idx] = t[idx] * psi[idx];
    }
    out.t.push_back(t);
    out.s.push_back(s);
    t_prev = std::move(t);
    psi_prev = std::move(psi);
  }
  return out;
}

StoppingRule extract_rule(const ValueTables& tables, TiePolicy policy, double tie_tolerance) {
  const auto& table = tables.histories;
  const int N = tables.horizon;
  const double tie_value = policy.value();
  if (!(tie_value >= 0.0 && tie_value <= 1.0)) throw Error(ErrorKind::domain, "tie gamma outside [0, 1]");
  std::vector<std::vector<double>> rows;
  std::vector<RuleEntry> ties;
  for (int n = 1; n < N; ++n) {
    const auto& stage = table.stage(n);
    const auto& q = tables.continuation[static_cast<std::size_t>(n)];
    std::vector<double> row(stage.size);
    for (std::size_t s = 0; s < stage.size; ++s) {
      const double l = stage.loss[s];
      if (nearly_equal(l, q[s], tie_tolerance)) {
        row[s] = tie_value;
        ties.push_back({n, s});
      } else {
        row[s] = l < q[s] ? 1.0 : 0.0;
      }
    }
    rows.push_back(std::move(row));
  }
  const auto index = table.engine() == Engine::count_vector ? RuleIndex::counts : RuleIndex::history;
  StoppingRule rule(index, table.alphabet(), std::move(rows), 1.0, table.shared_lattice());
  rule.set_ties(std::move(ties));
  return rule;
}

StoppingRule truncate_rule(const StoppingRule& rule, int N) {
  if (N < 1) throw Error(ErrorKind::domain, "truncation horizon must be at least 1");
  if (rule.truncated() && rule.truncation_horizon() <= N) return rule;
  const int K = rule.alphabet();
  const int keep = std::min(rule.stored_stages(), N - 1);
  // Constant rules are materialised on the count lattice, which stays polynomial in N.
  const RuleIndex index = rule.stored_stages() == 0 ? RuleIndex::counts : rule.index();
  std::shared_ptr<const CountLattice> lattice = rule.shared_lattice();
  if (index == RuleIndex::counts && (!lattice || lattice->max_stage() < N - 1)) {
    lattice = std::make_shared<const CountLattice>(K, std::max(N - 1, 0));
  }
  std::vector<std::vector<double>> rows;
  for (int n = 1; n <= N - 1; ++n) {
    std::size_t size = 0;
    if (index == RuleIndex::counts) {
      size = lattice->size(n);
    } else {
      const auto count = history_count(K, n);
      if (!count || *count > (std::size_t{1} << 26)) {
        throw Error(ErrorKind::budget, "truncated rule too large to materialise");
      }
      size = *count;
    }
    std::vector<double> row(size, rule.tail());
    if (n <= keep) {
      for (std::size_t i = 0; i < size; ++i) row[i] = rule.psi(n, i);
    }
    rows.push_back(std::move(row));
  }
  StoppingRule out(index, K, std::move(rows), 1.0, index == RuleIndex::counts ? lattice : nullptr);
  std::vector<RuleEntry> ties;
  for (const auto& e : rule.ties()) {
    if (e.stage < N) ties.push_back(e);
  }
  out.set_ties(std::move(ties));
  return out;
}

namespace {

void classify(const StoppingRule& rule, int n, std::size_t rule_index, const std::string& key,
              double l, double q, bool final_stage, double tol, SandwichReport& report) {
  const double psi = rule.psi(n, rule_index);
  bool bad = false;
  if (final_stage) {
    bad = psi != 1.0;
  } else if (!nearly_equal(l, q, tol)) {
    bad = l < q ? psi != 1.0 : psi != 0.0;
  }
  if (bad) report.violations.push_back({n, key, psi, l, final_stage ? std::nan("") : q});
}

}  // namespace

SandwichReport sandwich_check(const StoppingRule& rule, const ValueTables& tables,
                              double tie_tolerance) {
  SandwichReport report;
  const auto& table = tables.histories;
  const int N = tables.horizon;
  const int K = table.alphabet();
  if (rule.alphabet() != K) throw Error(ErrorKind::validation, "rule alphabet differs from tables");

  if (table.engine() == Engine::count_vector) {
    if (rule.index() != RuleIndex::counts && rule.stored_stages() > 0) {
      throw Error(ErrorKind::validation, "count-vector tables need a count-indexed rule");
    }
    // Aggregated reach: sum of t_n over the histories sharing each count vector.
    std::vector<double> reach{1.0};
    std::vector<double> psi_prev{0.0};
    for (int n = 1; n <= N; ++n) {
      const auto& stage = table.stage(n);
      std::vector<double> next(stage.size, 0.0);
      for (std::size_t s = 0; s < reach.size(); ++s) {
        const double carry = reach[s] * (1.0 - psi_prev[s]);
        if (carry == 0.0) continue;
        for (int x = 0; x < K; ++x) next[table.child(n - 1, s, x)] += carry;
      }
      std::vector<double> psi(stage.size);
      for (std::size_t s = 0; s < stage.size; ++s) {
        psi[s] = rule.psi(n, s);
        if (next[s] <= 0.0) continue;
        const double q = n < N ? tables.continuation[static_cast<std::size_t>(n)][s] : 0.0;
        classify(rule, n, s, table.key(n, s), stage.loss[s], q, n == N, tie_tolerance, report);
      }
      reach = std::move(next);
      psi_prev = std::move(psi);
    }
    return report;
  }

  const auto weights = reach_weights(rule, N);
  for (int n = 1; n <= N; ++n) {
    const auto& stage = table.stage(n);
    const auto& t = weights.t[static_cast<std::size_t>(n) - 1];
    for (std::size_t s = 0; s < stage.size; ++s) {
      if (t[s] <= 0.0) continue;
      const History h = decode_history(s, n, K);
      const std::size_t rule_index =
          rule.index() == RuleIndex::history || n > rule.stored_stages()
              ? s
              : *rule.lattice()->find(symbol_counts(h, K));
      const double q = n < N ? tables.continuation[static_cast<std::size_t>(n)][s] : 0.0;
      classify(rule, n, rule_index, format_history(h), stage.loss[s], q, n == N, tie_tolerance,
               report);
    }
  }
  return report;
}

void write_rule_csv(const StoppingRule& rule, std::ostream& out) {
  out.precision(17);
  out << "# seqopt-rule v1 index=" << to_string(rule.index()) << " alphabet=" << rule.alphabet()
      << " stages=" << rule.stored_stages() << " tail=" << rule.tail() << '\n';
  out << "stage," << to_string(rule.index()) << ",psi\n";
  for (int n = 1; n <= rule.stored_stages(); ++n) {
    for (std::size_t i = 0; i < rule.row_size(n); ++i) {
      out << n << ',' << rule.key(n, i) << ',' << rule.psi(n, i) << '\n';
    }
  }
}

StoppingRule read_rule_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# seqopt-rule v1", 0) != 0) {
    throw Error(ErrorKind::validation, "missing '# seqopt-rule v1' header");
  }
  std::map<std::string, std::string> fields;
  {
    std::istringstream is(line.substr(16));
    std::string token;
    while (is >> token) {
      const auto eq = token.find('=');
      if (eq != std::string::npos) fields[token.substr(0, eq)] = token.substr(eq + 1);
    }
  }
  for (const char* required : {"index", "alphabet", "stages", "tail"}) {
    if (!fields.count(required)) {
      throw Error(ErrorKind::validation, std::string("rule header lacks '") + required + "'");
    }
  }
  const RuleIndex index = fields["index"] == "counts" ? RuleIndex::counts : RuleIndex::history;
  if (fields["index"] != "counts" && fields["index"] != "history") {
    throw Error(ErrorKind::validation, "unknown rule index '" + fields["index"] + "'");
  }
  int K = 0, stages = 0;
  double tail = 0.0;
  try {
    K = std::stoi(fields["alphabet"]);
    stages = std::stoi(fields["stages"]);
    tail = std::stod(fields["tail"]);
  } catch (const std::exception&) {
    throw Error(ErrorKind::validation, "malformed rule header");
  }
  if (K < 2 || stages < 0) throw Error(ErrorKind::validation, "malformed rule header");

  std::shared_ptr<const CountLattice> lattice;
  std::vector<std::vector<double>> rows;
  for (int n = 1; n <= stages; ++n) {
    std::size_t size = 0;
    if (index == RuleIndex::counts) {
      if (!lattice) lattice = std::make_shared<const CountLattice>(K, stages);
      size = lattice->size(n);
    } else {
      const auto count = history_count(K, n);
      if (!count || *count > (std::size_t{1} << 26)) throw Error(ErrorKind::budget, "rule file too large");
      size = *count;
    }
    rows.emplace_back(size, std::numeric_limits<double>::quiet_NaN());
  }

  std::getline(in, line);  // column header
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string stage_text, key_text, psi_text;
    std::getline(is, stage_text, ',');
    std::getline(is, key_text, ',');
    std::getline(is, psi_text, ',');
    const std::string where = "rule line " + std::to_string(line_no);
    int n = 0;
    double value = 0.0;
    try {
      n = std::stoi(stage_text);
      value = std::stod(psi_text);
    } catch (const std::exception&) {
      throw Error(ErrorKind::validation, where + ": malformed");
    }
    if (n < 1 || n > stages) throw Error(ErrorKind::validation, where + ": stage out of range");
    std::size_t idx = 0;
    if (index == RuleIndex::counts) {
      const auto counts = parse_counts(key_text);
      const auto found = lattice->find(counts);
      int total = 0;
      for (int c : counts) total += c;
      if (!found || total != n) throw Error(ErrorKind::validation, where + ": bad counts '" + key_text + "'");
      idx = *found;
    } else {
      const auto h = parse_history(key_text);
      if (static_cast<int>(h.size()) != n) throw Error(ErrorKind::validation, where + ": history length differs from stage");
      for (Symbol x : h) {
        if (x < 0 || x >= K) {
          throw Error(ErrorKind::validation, where + ": unknown symbol index " + std::to_string(x));
        }
      }
      idx = history_index(h, K);
    }
    rows[static_cast<std::size_t>(n) - 1][idx] = value;
  }
  for (int n = 1; n <= stages; ++n) {
    for (double v : rows[static_cast<std::size_t>(n) - 1]) {
      if (std::isnan(v)) throw Error(ErrorKind::validation, "rule file misses entries at stage " + std::to_string(n));
    }
  }
  return StoppingRule(index, K, std::move(rows), tail, lattice);
}

}  // namespace seqopt
