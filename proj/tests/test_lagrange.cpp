#include <doctest.h>

#include <random>
#include <sstream>

#include "oracle.hpp"
#include "seqopt/error.hpp"
#include "seqopt/lagrange.hpp"

using namespace seqopt;

namespace {

Problem grouped_b() {
  Problem p = oracle::instance_b();
  p.constraints = ConstraintSpec{{{0}, {1}}, {0.05, 0.05}, {}};
  return p;
}

SearchConfig horizon(int N) {
  SearchConfig c;
  c.horizon = N;
  return c;
}

}  // namespace

TEST_CASE("weighted problem scales group losses and keeps the cost") {
  Problem p = make_iid_problem({{0.5, 0.5}, {0.4, 0.6}, {0.2, 0.8}}, zero_one_loss(3), {0.3, 0.3, 0.4},
                               {0.3, 0.3, 0.4}, 0.1);
  p.constraints = ConstraintSpec{{{0}, {2}}, {0.1, 0.1}, {}};
  const std::vector<double> lm{2.0, 0.5};
  const Problem w = weighted_problem(p, lm);
  CHECK(w.loss.w[0] == std::vector<double>{0.0, 2.0, 2.0});
  CHECK(w.loss.w[1] == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(w.loss.w[2] == std::vector<double>{0.5, 0.5, 0.0});
  CHECK(w.c() == 0.1);
  CHECK_THROWS_AS(weighted_problem(p, std::vector<double>{1.0, -1.0}), Error);
}

TEST_CASE("Lagrangian of instance B at unit multipliers") {
  const Problem p = grouped_b();
  const auto rule = extract_rule(solve_truncated(p, 2));
  const std::vector<double> lam{1.0, 1.0};
  CHECK(lagrangian(p, lam, rule) == doctest::Approx(1.775));
}

TEST_CASE("candidates minimise the Lagrangian over every truncated rule (property)") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 8; ++trial) {
    Problem p = oracle::random_problem(rng, 2 + trial % 2, 2, 0.02 + 0.01 * trial);
    p.constraints = ConstraintSpec{{{0}, {1}}, {0.1, 0.1}, {}};
    std::uniform_real_distribution<double> u(0.0, 40.0);
    const std::vector<double> lam{u(rng), u(rng)};
    const int N = 1 + trial % 3;
    const auto cands = solve_at_multipliers(p, lam, horizon(N));
    REQUIRE_FALSE(cands.empty());
    const std::vector<double> lm{p.c() * lam[0], p.c() * lam[1]};
    const auto bf = brute_force_optimum(weighted_problem(p, lm), N);
    for (const auto& c : cands) {
      CHECK(c.lagrangian == doctest::Approx(c.N + lam[0] * c.W[0] + lam[1] * c.W[1]).epsilon(1e-12));
      // c L = c N + sum c lambda_i W_i is the weighted problem's risk.
      CHECK(p.c() * c.lagrangian == doctest::Approx(bf.min_risk).epsilon(1e-10));
    }
  }
}

TEST_CASE("two-group search on instance B meets both targets") {
  const Problem p = grouped_b();
  const std::vector<double> targets{0.05, 0.05};
  const auto r = match_constraints(p, targets, horizon(6));
  CHECK(r.status == SearchStatus::converged);
  CHECK(r.converged);
  CHECK(r.achieved[0] == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(r.achieved[1] == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(r.lambda[0] > 0.0);
  CHECK(r.lambda[1] > 0.0);
  CHECK(r.loss_multipliers[0] == doctest::Approx(p.c() * r.lambda[0]));
  // The returned procedure really has these values.
  const auto rep = evaluate(p, r.procedure);
  CHECK(rep.N_psi == doctest::Approx(r.N).epsilon(1e-10));
  CHECK(rep.W_groups[0] == doctest::Approx(r.achieved[0]).epsilon(1e-10));
  CHECK(rep.W_groups[1] == doctest::Approx(r.achieved[1]).epsilon(1e-10));
  std::ostringstream trace;
  write_search_trace_csv(r, trace);
  CHECK(trace.str().rfind("iteration,lambda_1,lambda_2,", 0) == 0);
}

TEST_CASE("one group: monotone trace and an exact single rule") {
  // a lone {theta1} group never binds (announce theta1 at once), so pool both
  Problem p = oracle::instance_b();
  p.constraints = ConstraintSpec{{{0, 1}}, {0.05}, {}};
  const std::vector<double> target{0.08};
  const auto r = match_constraints(p, target, horizon(8));
  CHECK(r.status == SearchStatus::converged);
  CHECK(r.achieved[0] == doctest::Approx(0.08).epsilon(1e-7));
  CHECK(r.monotonicity_violations == 0);
  REQUIRE(r.rule.has_value());
  const auto rep = evaluate(p, r.procedure);
  CHECK(rep.W_groups[0] == doctest::Approx(0.08).epsilon(1e-6));
}

TEST_CASE("symmetric problems give symmetric multipliers") {
  Problem p = make_iid_problem({{0.7, 0.3}, {0.3, 0.7}}, zero_one_loss(2), {0.5, 0.5}, {0.5, 0.5}, 0.01);
  p.constraints = ConstraintSpec{{{0}, {1}}, {0.03, 0.03}, {}};
  const std::vector<double> targets{0.03, 0.03};
  const auto r = match_constraints(p, targets, horizon(30));
  CHECK(r.status == SearchStatus::converged);
  CHECK(r.achieved[0] == doctest::Approx(r.achieved[1]).epsilon(1e-9));
  CHECK(r.lambda[0] == doctest::Approx(r.lambda[1]).epsilon(1e-6));
}

TEST_CASE("search statuses and argument errors") {
  const Problem p = grouped_b();
  const std::vector<double> tiny{1e-9, 1e-9};
  CHECK(match_constraints(p, tiny, horizon(2)).status == SearchStatus::infeasible);
  const std::vector<double> loose{0.9, 0.9};
  const auto nb = match_constraints(p, loose, horizon(4));
  CHECK(nb.status == SearchStatus::not_binding);
  CHECK(nb.N == doctest::Approx(1.0));

  CHECK_THROWS_AS(match_constraints(oracle::instance_b(), loose, horizon(4)), Error);
  Problem three = make_iid_problem({{0.5, 0.5}, {0.4, 0.6}, {0.2, 0.8}}, zero_one_loss(3), {0.3, 0.3, 0.4},
                                   {0.3, 0.3, 0.4}, 0.1);
  three.constraints = ConstraintSpec{{{0}, {1}, {2}}, {0.1, 0.1, 0.1}, {}};
  const std::vector<double> t3{0.1, 0.1, 0.1};
  CHECK_THROWS_AS(match_constraints(three, t3, horizon(3)), Error);
}

TEST_CASE("conditional optimality by enumeration") {
  const Problem p = grouped_b();
  const std::vector<double> targets{0.12, 0.1};
  const auto r = match_constraints(p, targets, horizon(3));
  REQUIRE(r.status == SearchStatus::converged);
  const auto report = verify_conditional_optimality(p, r, 3);
  CHECK(report.rules_checked == 64);
  CHECK(report.feasible_rules > 0);
  CHECK(report.ok());

  // Negative control: claim the never-stop-early rule is optimal for its own losses.
  const auto bad = evaluate(p, truncate_rule(StoppingRule::constant(2, 0.0), 3));
  MultiplierSearchResult fake;
  fake.N = bad.N_psi;
  fake.achieved = bad.W_groups;
  const auto flagged = verify_conditional_optimality(p, fake, 3);
  CHECK_FALSE(flagged.ok());

  CHECK_THROWS_AS(verify_conditional_optimality(p, r, 8, 20), Error);
}
