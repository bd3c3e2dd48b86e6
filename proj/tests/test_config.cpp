#include <doctest.h>

#include <string>

#include "oracle.hpp"
#include "seqopt/config.hpp"
#include "seqopt/error.hpp"

using namespace seqopt;

namespace {

const char* kInstanceB = R"({
  "schema_version": 1,
  "parameters": ["theta1", "theta2"],
  "alphabet_size": 2,
  "model": {"kind": "iid", "pmf": [[0.8, 0.2], [0.3, 0.7]]},
  "loss": [[0, 1], [1, 0]],
  "pi1": [0.5, 0.5],
  "cost": 0.02,
  "constraints": {"groups": [["theta1"], [1]], "bounds": [0.1, 0.2]}
})";

std::string error_of(const std::string& text) {
  try {
    parse_problem_json(text);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("instance B config parses with defaults") {
  const Problem p = parse_problem_json(kInstanceB);
  CHECK(p.num_params() == 2);
  CHECK(p.alphabet() == 2);
  CHECK(p.iid());
  CHECK(p.obs.iid_pmf[1][1] == 0.7);
  CHECK(p.priors.pi2 == p.priors.pi1);
  CHECK(p.loss.decisions == std::vector<std::string>{"d1", "d2"});
  REQUIRE(p.constraints.has_value());
  CHECK(p.constraints->groups == std::vector<std::vector<std::size_t>>{{0}, {1}});
  CHECK(p.constraints->bounds == std::vector<double>{0.1, 0.2});
  CHECK(p.c() == 0.02);
}

TEST_CASE("malformed configs list every problem") {
  const std::string msg = error_of(R"({"parameters": ["a", "a"], "alphabet_size": 2,
    "model": {"kind": "iid", "pmf": [[0.5, 0.5], [0.5, 0.6]]}, "loss": [[0, 1], [1, 0]],
    "pi1": [0.5, 0.5], "cost": -1})");
  CHECK(msg.find("duplicate") != std::string::npos);
  CHECK(msg.find("cost") != std::string::npos);
  CHECK(msg.find("pmf") != std::string::npos);

  const std::string missing = error_of(R"({"parameters": ["a"]})");
  for (const char* key : {"alphabet_size", "model", "loss", "pi1", "cost"})
    CHECK(missing.find(key) != std::string::npos);

  CHECK(error_of("{not json").find("JSON") != std::string::npos);
  CHECK(error_of("[1, 2]").find("object") != std::string::npos);
  CHECK(error_of(R"({"schema_version": 7})").find("schema_version") != std::string::npos);
  CHECK(error_of(R"({"parameters": ["a", "b"], "alphabet_size": 2, "model": {"kind": "iid",
    "pmf": [[0.5, 0.5], [0.5, 0.5]]}, "loss": [[0, 1], [1, 0]], "pi1": [0.5, 0.5], "cost": 1,
    "constraints": {"groups": [["zeta"]], "bounds": [0.1]}})")
            .find("zeta") != std::string::npos);
  CHECK(error_of(R"({"parameters": ["a"], "alphabet_size": 2, "model": {"kind": "poisson"},
    "loss": [[0]], "pi1": [1], "cost": 1})")
            .find("poisson") != std::string::npos);
}

TEST_CASE("dependent config with a history-keyed kernel") {
  const Problem p = parse_problem_json(R"({
    "parameters": ["a", "b"], "alphabet_size": 2,
    "model": {"kind": "dependent", "horizon": 2, "kernel": {
      "a": {"": [0.5, 0.5], "0": [0.9, 0.1], "1": [0.2, 0.8]},
      "b": {"": [0.3, 0.7], "0": [0.4, 0.6], "1": [0.5, 0.5]}}},
    "loss": [[0, 1], [1, 0]], "pi1": [0.5, 0.5], "cost": 0.01})");
  CHECK_FALSE(p.iid());
  CHECK(p.obs.kernel_horizon == 2);
  CHECK(oracle::density(p, 0, {1, 1}) == doctest::Approx(0.4));
  CHECK(joint_density(p, 1, History{0, 1}) == doctest::Approx(0.18));
}

TEST_CASE("markov config") {
  const Problem p = parse_problem_json(R"({
    "parameters": ["a", "b"], "alphabet_size": 2,
    "model": {"kind": "markov", "initial": [[0.5, 0.5], [0.2, 0.8]],
              "transition": [[[0.9, 0.1], [0.3, 0.7]], [[0.6, 0.4], [0.1, 0.9]]]},
    "loss": [[0, 1], [1, 0]], "pi1": [0.5, 0.5], "cost": 0.01})");
  CHECK(joint_density(p, 0, History{0, 1, 1}) == doctest::Approx(0.5 * 0.1 * 0.7));
}

TEST_CASE("load_problem_file reports unreadable paths") {
  CHECK_THROWS_AS(load_problem_file("/nonexistent/config.json"), Error);
}
