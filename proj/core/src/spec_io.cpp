#include "frl/spec_io.hpp"

#include <fstream>
#include <set>

#include "frl/error.hpp"

namespace frl::mdp {

using nlohmann::json;

namespace {

const std::set<std::string> kSpecKeys = {
    "state_vars", "action_blocks", "eff_map",  "pre_map",         "sigma",          "noop_dynamics",
    "reward",     "init_dist",     "discount", "assume_positive", "terminal_states"};

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("spec is missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("spec field '") + key + "': " + e.what());
  }
}

}  // namespace

void to_json(json& j, const FactoredMdpSpec& spec) {
  j = json::object();
  json vars = json::array();
  for (const auto& v : spec.state_vars) vars.push_back({{"name", v.name}, {"cardinality", v.cardinality}});
  j["state_vars"] = vars;

  json blocks = json::array();
  for (const auto& b : spec.action_blocks) {
    json jb = {{"name", b.name}, {"cardinalities", b.cardinalities}};
    jb["noop_action"] = b.noop_action ? json(*b.noop_action) : json(nullptr);
    blocks.push_back(jb);
  }
  j["action_blocks"] = blocks;
  j["eff_map"] = spec.eff_map;
  j["pre_map"] = spec.pre_map;
  j["sigma"] = spec.sigma;

  json cpts = json::array();
  for (const auto& c : spec.noop_dynamics) {
    cpts.push_back({{"parents", c.parents}, {"next_parents", c.next_parents}, {"table", c.table}});
  }
  j["noop_dynamics"] = cpts;

  json reward = json::object();
  if (!spec.reward.next_state.empty()) reward["next_state"] = spec.reward.next_state;
  if (!spec.reward.state_next.empty()) reward["state_next"] = spec.reward.state_next;
  if (!spec.reward.block_cost.empty()) reward["block_cost"] = spec.reward.block_cost;
  j["reward"] = reward;
  j["init_dist"] = spec.init_dist;
  j["discount"] = spec.discount;
  j["assume_positive"] = spec.assume_positive;
  j["terminal_states"] = spec.terminal_states;
}

void from_json(const json& j, FactoredMdpSpec& spec) {
  if (!j.is_object()) throw ConfigError("spec must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kSpecKeys.contains(key)) throw ConfigError("unknown spec field '" + key + "'");
  }
  spec = FactoredMdpSpec{};
  try {
    for (const auto& jv : required<json>(j, "state_vars")) {
      spec.state_vars.push_back({jv.value("name", std::string{}), jv.at("cardinality").get<int>()});
    }
    for (const auto& jb : required<json>(j, "action_blocks")) {
      ActionBlock b;
      b.name = jb.value("name", std::string{});
      b.cardinalities = jb.at("cardinalities").get<std::vector<int>>();
      if (jb.contains("noop_action") && !jb.at("noop_action").is_null()) {
        b.noop_action = jb.at("noop_action").get<int>();
      }
      spec.action_blocks.push_back(std::move(b));
    }
    for (const auto& jc : required<json>(j, "noop_dynamics")) {
      ConditionalTable c;
      c.parents = jc.value("parents", std::vector<int>{});
      c.next_parents = jc.value("next_parents", std::vector<int>{});
      c.table = jc.at("table").get<std::vector<std::vector<double>>>();
      spec.noop_dynamics.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed spec: ") + e.what());
  }
  spec.eff_map = required<std::vector<std::vector<int>>>(j, "eff_map");
  spec.pre_map = required<std::vector<std::vector<int>>>(j, "pre_map");
  spec.sigma = required<std::vector<InterventionTable>>(j, "sigma");
  const json reward = required<json>(j, "reward");
  try {
    if (reward.contains("next_state")) spec.reward.next_state = reward.at("next_state").get<std::vector<double>>();
    if (reward.contains("state_next")) {
      spec.reward.state_next = reward.at("state_next").get<std::vector<std::vector<double>>>();
    }
    if (reward.contains("block_cost")) {
      spec.reward.block_cost = reward.at("block_cost").get<std::vector<std::vector<double>>>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed reward: ") + e.what());
  }
  spec.init_dist = required<std::vector<double>>(j, "init_dist");
  spec.discount = required<double>(j, "discount");
  spec.assume_positive = j.value("assume_positive", false);
  if (j.contains("terminal_states")) {
    spec.terminal_states = required<std::vector<StateIndex>>(j, "terminal_states");
  }
}

FactoredMdpSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open spec file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("spec file " + path.string() + " is not valid JSON: " + e.what());
  }
  return j.get<FactoredMdpSpec>();
}

void save_spec(const FactoredMdpSpec& spec, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write spec file " + path.string());
  out << dump_spec(spec) << '\n';
}

std::string dump_spec(const FactoredMdpSpec& spec) {
  return json(spec).dump();
}

}  // namespace frl::mdp
