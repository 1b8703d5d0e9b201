#include <doctest.h>

#include <filesystem>

#include "fixtures.hpp"
#include "frl/envs/synthetic.hpp"
#include "frl/error.hpp"
#include "frl/spec_io.hpp"

using namespace frl;
using namespace frl::mdp;

TEST_CASE("round trip through JSON") {
  auto spec = frl::testing::two_switch();
  spec.action_blocks[1].noop_action = 0;
  spec.reward.block_cost = {{0.0, -0.1}, {0.0, -0.2}};
  nlohmann::json j = spec;
  CHECK(j.at("action_blocks")[0].at("noop_action").is_null());
  CHECK(j.get<FactoredMdpSpec>() == spec);
  CHECK(dump_spec(nlohmann::json::parse(dump_spec(spec)).get<FactoredMdpSpec>()) == dump_spec(spec));
}

TEST_CASE("synthetic specs survive save and load") {
  for (auto st : {envs::Structure::fully_separable, envs::Structure::separable_effects,
                  envs::Structure::non_separable}) {
    envs::SyntheticSpec s;
    s.structure = st;
    s.seed = 3;
    auto spec = envs::generate_synthetic(s);
    auto path = std::filesystem::temp_directory_path() / "frl_spec_io_test.json";
    save_spec(spec, path);
    CHECK(load_spec(path) == spec);
    std::filesystem::remove(path);
  }
}

TEST_CASE("unknown keys are rejected") {
  nlohmann::json j = frl::testing::two_switch();
  j["colour"] = "blue";
  CHECK_THROWS_AS(j.get<FactoredMdpSpec>(), ConfigError);
}

TEST_CASE("missing file") {
  CHECK_THROWS_AS(load_spec("/nonexistent/spec.json"), ConfigError);
}
