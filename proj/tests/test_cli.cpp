#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <unistd.h>

#include "cli.hpp"

namespace fs = std::filesystem;
using seqopt::cli::run;

namespace {

const std::string kExamples = SEQOPT_EXAMPLES_DIR;

std::string example(const std::string& name) { return kExamples + "/" + name; }

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code = -1;
  std::string out, err;
  fs::path dir;
};

struct Sandbox {
  fs::path root;
  Sandbox() {
    root = fs::temp_directory_path() / ("seqopt-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Sandbox() { fs::remove_all(root); }
  static int& counter() {
    static int c = 0;
    return c;
  }

  Run exec(std::vector<std::string> args) const {
    args.insert(args.begin(), {"--out", (root / "out").string()});
    std::ostringstream out, err;
    Run r;
    r.code = run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    const auto pos = r.out.find("output=");
    if (pos != std::string::npos) r.dir = r.out.substr(pos + 7, r.out.find('\n', pos) - pos - 7);
    return r;
  }

  fs::path write(const std::string& name, const std::string& text) const {
    const auto path = root / name;
    std::ofstream(path) << text;
    return path;
  }
};

}  // namespace

TEST_CASE("fnv1a64 reference values") {
  CHECK(seqopt::cli::fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(seqopt::cli::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(seqopt::cli::hex64(0xabcull) == "0000000000000abc");
}

TEST_CASE("solve: instance B summary, files and manifest") {
  Sandbox sb;
  const auto r = sb.exec({"solve", "--config", example("instance_b.json"), "--horizon", "2"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("Q0=0.256\n") != std::string::npos);
  CHECK(r.out.find("l0=0.5\n") != std::string::npos);
  CHECK(r.out.find("observe=true\n") != std::string::npos);
  for (const char* f : {"value_tables.csv", "rule.csv", "summary.txt", "solve.json", "manifest.json"})
    CHECK(fs::exists(r.dir / f));
  for (const auto& e : fs::directory_iterator(r.dir)) CHECK(e.path().extension() != ".tmp");
  const auto m = nlohmann::json::parse(slurp(r.dir / "manifest.json"));
  const std::string hash = seqopt::cli::hex64(seqopt::cli::fnv1a64(slurp(example("instance_b.json"))));
  CHECK(m["config"]["fnv1a64"] == hash);
  CHECK(m["command"] == "solve");
  CHECK(m["parameters"]["horizon"] == 2);
  CHECK(m["exit_code"] == 0);
  CHECK(r.dir.filename().string().rfind("solve-", 0) == 0);

  // Same inputs, same directory, same bytes.
  const auto again = sb.exec({"solve", "--config", example("instance_b.json"), "--horizon", "2"});
  CHECK(again.dir == r.dir);
  CHECK(slurp(again.dir / "manifest.json") == slurp(r.dir / "manifest.json"));
  const auto other = sb.exec({"solve", "--config", example("instance_b.json"), "--horizon", "3"});
  CHECK(other.dir != r.dir);
}

TEST_CASE("solve: identical pmfs never observe, limit mode converges") {
  Sandbox sb;
  const auto r = sb.exec({"solve", "--config", example("identical_pmf.json"), "--horizon", "5"});
  CHECK(r.code == 0);
  CHECK(r.out.find("observe=false") != std::string::npos);
  const auto lim = sb.exec({"solve", "--config", example("instance_b.json"), "--limit", "--tol", "1e-9"});
  CHECK(lim.code == 0);
  CHECK(lim.out.find("converged=true") != std::string::npos);
  const auto dep = sb.exec({"solve", "--config", example("dependent.json"), "--horizon", "3", "--tie", "randomize:0.5"});
  CHECK(dep.code == 0);
  CHECK(dep.out.find("engine=history-tree") != std::string::npos);
}

TEST_CASE("solve: malformed config and usage errors") {
  Sandbox sb;
  const auto bad = sb.write("bad.json", R"({"parameters": ["a", "a"], "alphabet_size": 2, "cost": -1})");
  const auto r = sb.exec({"solve", "--config", bad.string(), "--horizon", "2"});
  CHECK(r.code == 2);
  CHECK(r.err.find("error[validation]") != std::string::npos);
  CHECK(r.err.find("model") != std::string::npos);
  CHECK(r.err.find("loss") != std::string::npos);
  CHECK(sb.exec({"solve", "--config", example("instance_b.json")}).code == 2);
  CHECK(sb.exec({"solve", "--horizon", "2"}).code == 1);
  CHECK(sb.exec({"frobnicate"}).code == 1);
  CHECK(sb.exec({"solve", "--config", example("instance_b.json"), "--horizon", "2", "--tie", "maybe"}).code == 2);
  CHECK(sb.exec({"--help"}).code == 0);
}

TEST_CASE("evaluate: extracted and always-stop rules") {
  Sandbox sb;
  const auto s = sb.exec({"solve", "--config", example("instance_b.json"), "--horizon", "2"});
  REQUIRE(s.code == 0);
  const auto e = sb.exec({"evaluate", "--config", example("instance_b.json"), "--rule", (s.dir / "rule.csv").string()});
  REQUIRE(e.code == 0);
  CHECK(e.out.find("R=0.256\n") != std::string::npos);
  const auto report = nlohmann::json::parse(slurp(e.dir / "risk_report.json"));
  CHECK(report["W"].get<double>() == doctest::Approx(0.225));
  CHECK(fs::exists(e.dir / "risk_report.csv"));
  CHECK(nlohmann::json::parse(slurp(e.dir / "manifest.json"))["inputs"].size() == 1);

  const auto always = sb.write("always.csv",
                               "# seqopt-rule v1 index=history alphabet=2 stages=1 tail=1\nstage,history,psi\n"
                               "1,0,1\n1,1,1\n");
  const auto a = sb.exec({"evaluate", "--config", example("instance_b.json"), "--rule", always.string()});
  CHECK(a.code == 0);
  CHECK(a.out.find("R=0.27\n") != std::string::npos);

  const auto bad = sb.write("bad.csv",
                            "# seqopt-rule v1 index=history alphabet=2 stages=1 tail=1\nstage,history,psi\n"
                            "1,0,1\n1,1,1\n1,5,1\n");
  const auto b = sb.exec({"evaluate", "--config", example("instance_b.json"), "--rule", bad.string()});
  CHECK(b.code == 2);
  CHECK(b.err.find("symbol") != std::string::npos);
  const auto wide = sb.write("wide.csv",
                             "# seqopt-rule v1 index=history alphabet=3 stages=0 tail=1\nstage,history,psi\n");
  CHECK(sb.exec({"evaluate", "--config", example("instance_b.json"), "--rule", wide.string()}).code == 2);
}

TEST_CASE("search: symmetric multipliers, compare table and missing groups") {
  Sandbox sb;
  const auto s = sb.exec({"search", "--config", example("symmetric.json"), "--targets", "0.03,0.03", "--horizon", "30"});
  REQUIRE(s.code == 0);
  const auto j = nlohmann::json::parse(slurp(s.dir / "search.json"));
  CHECK(j["status"] == "converged");
  CHECK(j["lambda"][0].get<double>() == doctest::Approx(j["lambda"][1].get<double>()).epsilon(1e-6));
  CHECK(fs::exists(s.dir / "search_trace.csv"));

  const auto kw = sb.exec({"search", "--config", example("kiefer_weiss.json"), "--targets", "0.025,0.025",
                           "--horizon", "40", "--compare", "--hypotheses", "0,2"});
  REQUIRE(kw.code == 0);
  std::istringstream table(slurp(kw.dir / "compare.csv"));
  std::string line;
  std::getline(table, line);
  CHECK(line == "theta,E_tau_optimal,E_tau_sprt,difference");
  bool seen = false;
  while (std::getline(table, line)) {
    if (line.rfind("theta0,", 0) != 0) continue;
    seen = true;
    const double diff = std::stod(line.substr(line.rfind(',') + 1));
    CHECK(diff <= 1e-6);
  }
  CHECK(seen);

  const auto sprt = sb.exec({"search", "--config", example("instance_b.json"), "--targets", "0.05,0.05", "--mode",
                             "sprt", "--cap", "100"});
  CHECK(sprt.code == 0);
  const auto sj = nlohmann::json::parse(slurp(sprt.dir / "search.json"));
  CHECK(sj["alpha"].get<double>() <= 0.05);
  CHECK(sj["beta"].get<double>() <= 0.05);

  const auto missing = sb.exec({"search", "--config", example("identical_pmf.json"), "--targets", "0.1,0.1"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("groups") != std::string::npos);
  const auto infeasible =
      sb.exec({"search", "--config", example("instance_b.json"), "--targets", "1e-9,1e-9", "--horizon", "2"});
  CHECK(infeasible.code == 3);
  CHECK(fs::exists(infeasible.dir / "manifest.json"));
}

TEST_CASE("simulate: replay, accuracy and cap hits") {
  Sandbox sb;
  const auto s = sb.exec({"solve", "--config", example("instance_b.json"), "--horizon", "2"});
  REQUIRE(s.code == 0);
  const std::string rule = (s.dir / "rule.csv").string();
  const auto a = sb.exec({"simulate", "--config", example("instance_b.json"), "--rule", rule, "--reps", "100000",
                          "--seed", "17"});
  REQUIRE(a.code == 0);
  const std::string first = slurp(a.dir / "estimates.json");
  fs::remove_all(a.dir);
  const auto b = sb.exec({"--threads", "3", "simulate", "--config", example("instance_b.json"), "--rule", rule,
                          "--reps", "100000", "--seed", "17"});
  REQUIRE(b.code == 0);
  CHECK(slurp(b.dir / "estimates.json") == first);
  const auto est = nlohmann::json::parse(first);
  const double tau = est["tau"]["mean"].get<double>(), se = est["tau"]["se"].get<double>();
  CHECK(std::abs(tau - 1.55) <= 4 * se);
  CHECK(nlohmann::json::parse(slurp(b.dir / "manifest.json"))["parameters"]["seed"] == 17);

  const auto never = sb.write("never.csv", "# seqopt-rule v1 index=history alphabet=2 stages=0 tail=0\nstage,history,psi\n");
  const auto c = sb.exec({"simulate", "--config", example("instance_b.json"), "--rule", never.string(), "--reps",
                          "1000", "--cap", "1"});
  CHECK(c.code == 5);
  CHECK(c.err.find("cap-hit") != std::string::npos);
  CHECK(fs::exists(c.dir / "estimates.json"));
  CHECK(nlohmann::json::parse(slurp(c.dir / "manifest.json"))["status"] == "cap-hit");
}
