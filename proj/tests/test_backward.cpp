#include <doctest.h>

#include <random>
#include <sstream>

#include "oracle.hpp"
#include "seqopt/backward.hpp"
#include "seqopt/error.hpp"

using namespace seqopt;

namespace {

double q_at(const ValueTables& t, int n, const History& h) {
  return t.continuation[static_cast<std::size_t>(n)][t.histories.index_of(h)];
}
double v_at(const ValueTables& t, int n, const History& h) {
  return t.value[static_cast<std::size_t>(n)][t.histories.index_of(h)];
}

}  // namespace

TEST_CASE("instance B, N = 2") {
  const Problem p = oracle::instance_b();
  for (Engine e : {Engine::history_tree, Engine::count_vector}) {
    const auto t = solve_truncated(p, 2, {e});
    CHECK(q_at(t, 1, {0}) == doctest::Approx(0.136).epsilon(1e-12));
    CHECK(q_at(t, 1, {1}) == doctest::Approx(0.109).epsilon(1e-12));
    CHECK(t.q0() == doctest::Approx(0.256).epsilon(1e-12));
    CHECK(t.l0() == doctest::Approx(0.5));
    CHECK(t.v0() == doctest::Approx(0.256).epsilon(1e-12));
    const auto adv = should_take_observations(t);
    CHECK(adv.worthwhile);
    CHECK(adv.margin == doctest::Approx(0.244));
  }
}

TEST_CASE("value tables match naive recursion (property)") {
  std::mt19937_64 rng(21);
  const double costs[] = {0.005, 0.02, 0.05, 0.1, 0.2};
  for (int trial = 0; trial < 12; ++trial) {
    const Problem p = oracle::random_problem(rng, 2 + trial % 2, 2 + (trial % 4 == 3), costs[trial % 5]);
    const int N = 1 + trial % 4;
    const auto t = solve_truncated(p, N, {Engine::history_tree});
    CHECK(t.q0() == doctest::Approx(oracle::q0(p, N)).epsilon(1e-12));
    for (int n = 1; n <= N; ++n) {
      for (const auto& h : oracle::histories(p.alphabet(), n)) {
        CHECK(v_at(t, n, h) == doctest::Approx(oracle::value(p, h, N)).epsilon(1e-12));
        if (n < N) CHECK(q_at(t, n, h) == doctest::Approx(oracle::continuation(p, h, N)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("longer horizons never raise values (property)") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 6; ++trial) {
    const Problem p = oracle::random_problem(rng, 2 + trial % 2, 2, 0.01 + 0.03 * trial);
    double prev_q0 = std::numeric_limits<double>::infinity();
    for (int N = 1; N <= 8; ++N) {
      const auto a = solve_truncated(p, N, {Engine::history_tree});
      const auto b = solve_truncated(p, N + 1, {Engine::history_tree});
      for (int n = 0; n <= N; ++n)
        for (std::size_t s = 0; s < a.histories.size(n); ++s)
          CHECK(a.value[static_cast<std::size_t>(n)][s] >= b.value[static_cast<std::size_t>(n)][s] - 1e-15);
      CHECK(a.q0() <= prev_q0 + 1e-15);
      prev_q0 = a.q0();
    }
  }
}

TEST_CASE("identical pmfs: observing is never worthwhile") {
  const Problem p =
      make_iid_problem({{0.4, 0.6}, {0.4, 0.6}}, zero_one_loss(2), {0.5, 0.5}, {0.5, 0.5}, 0.01);
  const auto t = solve_truncated(p, 6);
  CHECK(t.q0() == doctest::Approx(0.51));
  CHECK_FALSE(should_take_observations(t).worthwhile);
}

TEST_CASE("dependent model matches the recursion") {
  Problem p = oracle::instance_b();
  p.obs.kind = ModelKind::dependent;
  p.obs.kernel = markov_kernel({{0.5, 0.5}, {0.2, 0.8}}, {{{0.9, 0.1}, {0.3, 0.7}}, {{0.6, 0.4}, {0.1, 0.9}}});
  for (int N = 1; N <= 5; ++N) CHECK(solve_truncated(p, N).q0() == doctest::Approx(oracle::q0(p, N)).epsilon(1e-12));
}

TEST_CASE("limit mode doubles the horizon until Q0 settles") {
  const Problem p = oracle::instance_b();
  const auto t = solve_limit(p, 1, 1e-8, 1024);
  CHECK(t.convergence.converged);
  CHECK(t.convergence.limit_mode);
  CHECK(t.convergence.achieved_tolerance < 1e-8);
  for (std::size_t i = 1; i < t.convergence.horizons.size(); ++i) {
    CHECK(t.convergence.horizons[i] == 2 * t.convergence.horizons[i - 1]);
    CHECK(t.convergence.q0[i] <= t.convergence.q0[i - 1] + 1e-15);
  }
  const auto capped = solve_limit(p, 1, 1e-14, 4);
  CHECK_FALSE(capped.convergence.converged);
  CHECK(capped.horizon == 4);
  CHECK_THROWS_AS(solve_limit(p, 1, 0.0, 8), Error);
}

TEST_CASE("thread count does not change results") {
  std::mt19937_64 rng(23);
  const Problem p = oracle::random_problem(rng, 3, 2, 0.003);
  const auto one = solve_truncated(p, 16, {Engine::history_tree, std::size_t{1} << 24, 1});
  const auto four = solve_truncated(p, 16, {Engine::history_tree, std::size_t{1} << 24, 4});
  CHECK(one.q0() == four.q0());
  CHECK(one.value[8] == four.value[8]);
}

TEST_CASE("value table CSV") {
  const auto t = solve_truncated(oracle::instance_b(), 2, {Engine::history_tree});
  std::ostringstream out;
  write_value_tables_csv(t, out);
  const std::string s = out.str();
  CHECK(s.rfind("stage,history,l,Q,V\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 1 + 2 + 4);
  CHECK_THROWS_AS(solve_truncated(oracle::instance_b(), 0), Error);
}
