#include "seqopt/config.hpp"

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "seqopt/error.hpp"
#include "seqopt/history.hpp"

namespace seqopt {

namespace {

using nlohmann::json;

class Reader {
 public:
  std::vector<std::string> errors;

  void fail(const std::string& where, const std::string& what) { errors.push_back(where + ": " + what); }

  bool has(const json& j, const char* key) { return j.is_object() && j.contains(key); }

  double number(const json& j, const std::string& where) {
    if (!j.is_number()) {
      fail(where, "expected a number");
      return 0.0;
    }
    return j.get<double>();
  }

  std::vector<double> vec(const json& j, const std::string& where) {
    std::vector<double> out;
    if (!j.is_array()) {
      fail(where, "expected an array of numbers");
      return out;
    }
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::vector<std::vector<double>> matrix(const json& j, const std::string& where) {
    std::vector<std::vector<double>> out;
    if (!j.is_array()) {
      fail(where, "expected an array of arrays");
      return out;
    }
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vec(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::vector<std::string> labels(const json& j, const std::string& where) {
    std::vector<std::string> out;
    if (!j.is_array()) {
      fail(where, "expected an array of strings");
      return out;
    }
    for (std::size_t i = 0; i < j.size(); ++i) {
      if (!j[i].is_string()) {
        fail(where + "[" + std::to_string(i) + "]", "expected a string");
        continue;
      }
      out.push_back(j[i].get<std::string>());
    }
    return out;
  }

  std::optional<std::size_t> param_index(const json& j, const Problem& p, const std::string& where) {
    if (j.is_string()) {
      const auto& names = p.params.labels;
      const auto it = std::find(names.begin(), names.end(), j.get<std::string>());
      if (it == names.end()) {
        fail(where, "unknown parameter '" + j.get<std::string>() + "'");
        return std::nullopt;
      }
      return static_cast<std::size_t>(it - names.begin());
    }
    if (j.is_number_unsigned() || (j.is_number_integer() && j.get<long long>() >= 0)) {
      return j.get<std::size_t>();  // range checked by validation
    }
    fail(where, "expected a parameter label or index");
    return std::nullopt;
  }
};

void read_model(Reader& r, const json& model, Problem& p) {
  if (!model.is_object()) {
    r.fail("model", "expected an object");
    return;
  }
  if (!r.has(model, "kind") || !model["kind"].is_string()) {
    r.fail("model.kind", "missing (iid, dependent or markov)");
    return;
  }
  const auto kind = model["kind"].get<std::string>();
  if (kind == "iid") {
    p.obs.kind = ModelKind::iid;
    if (!r.has(model, "pmf")) {
      r.fail("model.pmf", "missing");
      return;
    }
    p.obs.iid_pmf = r.matrix(model["pmf"], "model.pmf");
  } else if (kind == "dependent") {
    p.obs.kind = ModelKind::dependent;
    if (!r.has(model, "horizon") || !model["horizon"].is_number_integer() || model["horizon"].get<int>() < 1) {
      r.fail("model.horizon", "expected a positive integer");
      return;
    }
    p.obs.kernel_horizon = model["horizon"].get<int>();
    if (!r.has(model, "kernel") || !model["kernel"].is_object()) {
      r.fail("model.kernel", "expected an object keyed by parameter label");
      return;
    }
    TabularKernel table(p.num_params(), p.obs.alphabet_size);
    for (auto it = model["kernel"].begin(); it != model["kernel"].end(); ++it) {
      const auto theta = r.param_index(json(it.key()), p, "model.kernel");
      if (!theta) continue;
      if (*theta >= p.num_params()) continue;
      if (!it.value().is_object()) {
        r.fail("model.kernel." + it.key(), "expected an object keyed by history");
        continue;
      }
      for (auto h = it.value().begin(); h != it.value().end(); ++h) {
        const std::string where = "model.kernel." + it.key() + "[\"" + h.key() + "\"]";
        try {
          table.set(*theta, parse_history(h.key()), r.vec(h.value(), where));
        } catch (const Error& e) {
          r.fail(where, e.what());
        }
      }
    }
    p.obs.kernel = table.as_function();
  } else if (kind == "markov") {
    p.obs.kind = ModelKind::dependent;
    p.obs.kernel_horizon = 0;
    if (!r.has(model, "initial") || !r.has(model, "transition")) {
      r.fail("model", "markov models need 'initial' and 'transition'");
      return;
    }
    auto initial = r.matrix(model["initial"], "model.initial");
    std::vector<std::vector<std::vector<double>>> transition;
    if (!model["transition"].is_array()) {
      r.fail("model.transition", "expected one matrix per parameter");
      return;
    }
    for (std::size_t t = 0; t < model["transition"].size(); ++t) {
      transition.push_back(r.matrix(model["transition"][t], "model.transition[" + std::to_string(t) + "]"));
    }
    if (initial.size() != p.num_params() || transition.size() != p.num_params()) {
      r.fail("model", "markov tables need one entry per parameter");
    }
    const auto K = static_cast<std::size_t>(p.obs.alphabet_size);
    for (std::size_t t = 0; t < transition.size(); ++t) {
      if (transition[t].size() != K) {
        r.fail("model.transition[" + std::to_string(t) + "]", "needs one row per symbol");
      }
    }
    p.obs.kernel = markov_kernel(std::move(initial), std::move(transition));
  } else {
    r.fail("model.kind", "unknown kind '" + kind + "'");
  }
}

}  // namespace

Problem parse_problem_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::validation, std::string("config is not valid JSON: ") + e.what());
  }
  Reader r;
  Problem p;
  if (!j.is_object()) throw Error(ErrorKind::validation, "config must be a JSON object");
  if (r.has(j, "schema_version")) {
    if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != kConfigSchemaVersion) {
      r.fail("schema_version", "unsupported (expected " + std::to_string(kConfigSchemaVersion) + ")");
    }
  }
  for (const char* key : {"parameters", "alphabet_size", "model", "loss", "pi1", "cost"}) {
    if (!r.has(j, key)) r.fail(key, "missing");
  }
  if (r.has(j, "parameters")) p.params.labels = r.labels(j["parameters"], "parameters");
  if (r.has(j, "alphabet_size")) {
    if (!j["alphabet_size"].is_number_integer()) {
      r.fail("alphabet_size", "expected an integer");
    } else {
      p.obs.alphabet_size = j["alphabet_size"].get<int>();
    }
  }
  if (r.has(j, "model")) read_model(r, j["model"], p);
  if (r.has(j, "loss")) p.loss.w = r.matrix(j["loss"], "loss");
  if (r.has(j, "decisions")) {
    p.loss.decisions = r.labels(j["decisions"], "decisions");
  } else {
    const std::size_t D = p.loss.w.empty() ? 0 : p.loss.w.front().size();
    for (std::size_t d = 0; d < D; ++d) p.loss.decisions.push_back("d" + std::to_string(d + 1));
  }
  if (r.has(j, "pi1")) p.priors.pi1 = r.vec(j["pi1"], "pi1");
  p.priors.pi2 = r.has(j, "pi2") ? r.vec(j["pi2"], "pi2") : p.priors.pi1;
  if (r.has(j, "cost")) p.cost.c = r.number(j["cost"], "cost");
  if (r.has(j, "constraints")) {
    const auto& cs = j["constraints"];
    ConstraintSpec spec;
    if (!r.has(cs, "groups") || !cs["groups"].is_array()) {
      r.fail("constraints.groups", "expected an array of parameter lists");
    } else {
      for (std::size_t g = 0; g < cs["groups"].size(); ++g) {
        const auto& group = cs["groups"][g];
        const std::string where = "constraints.groups[" + std::to_string(g) + "]";
        std::vector<std::size_t> members;
        if (!group.is_array()) {
          r.fail(where, "expected an array");
        } else {
          for (const auto& item : group) {
            if (auto idx = r.param_index(item, p, where)) members.push_back(*idx);
          }
        }
        spec.groups.push_back(std::move(members));
      }
    }
    if (r.has(cs, "bounds")) spec.bounds = r.vec(cs["bounds"], "constraints.bounds");
    if (r.has(cs, "multipliers")) spec.multipliers = r.vec(cs["multipliers"], "constraints.multipliers");
    p.constraints = std::move(spec);
  }

  if (r.errors.empty()) {
    for (const auto& v : validate_problem(p)) r.errors.push_back(std::string("[") + to_string(v.code) + "] " + v.message);
  }
  if (!r.errors.empty()) {
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& e : r.errors) os << "\n  " << e;
    throw Error(ErrorKind::validation, os.str());
  }
  return p;
}

Problem load_problem_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::validation, "cannot read config '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_problem_json(buffer.str());
}

}  // namespace seqopt
