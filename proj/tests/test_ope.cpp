#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

#include "frl/error.hpp"
#include "frl/ope.hpp"
#include "frl/rng.hpp"

using namespace frl;
using namespace frl::ope;

namespace {

EpisodeLog episode(std::vector<double> rewards, std::vector<double> propensities, std::vector<int> actions = {}) {
  EpisodeLog e;
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    e.steps.push_back({{static_cast<double>(t)}, t, {actions.empty() ? 0 : actions[t]}, rewards[t], propensities[t]});
  }
  return e;
}

PolicyProbability ratio_policy(std::vector<double> per_episode_target) {
  // Target probability keyed by the step's state feature 0 and action 0 (episode id).
  return [per_episode_target](const EpisodeStep& s) { return per_episode_target[static_cast<std::size_t>(s.action[0])]; };
}

}  // namespace

TEST_CASE("softening") {
  CHECK(softened_probability(true, 0.0, 5) == 1.0);
  CHECK(softened_probability(false, 0.0, 5) == 0.0);
  CHECK(softened_probability(false, 0.01, 25) == doctest::Approx(0.01 / 24).epsilon(1e-12));
  CHECK(softened_probability(true, 0.01, 25) + 24 * softened_probability(false, 0.01, 25) == doctest::Approx(1.0));
  CHECK(softened_probability(true, 0.8, 5) == doctest::Approx(0.2));
  CHECK(softened_probability(false, 0.8, 5) == doctest::Approx(0.2));
  CHECK_THROWS_AS(softened_probability(true, 0.01, 1), DomainError);
  auto pi = soften([](const EpisodeStep&) { return JointAction{1, 2}; }, 25);
  EpisodeStep st{{}, std::nullopt, {1, 2}, 0.0, 1.0};
  CHECK(pi(st) == doctest::Approx(0.99));
}

TEST_CASE("hand-computed two-episode example") {
  // Final weights 1 and 3, terminal-only rewards 10 and 20.
  std::vector<EpisodeLog> eps{episode({10.0}, {0.5}, {0}), episode({20.0}, {0.25}, {1})};
  auto res = wis_ess(eps, ratio_policy({0.5, 0.75}));
  CHECK(res.final_ratios == std::vector<double>{1.0, 3.0});
  CHECK(res.w[0] == 2.0);
  CHECK(res.wis == 17.5);
  CHECK(res.ess == doctest::Approx(1.6).epsilon(1e-15));
}

TEST_CASE("on-policy evaluation is the mean return") {
  Rng rng(5);
  std::vector<EpisodeLog> eps;
  double total = 0.0;
  for (int j = 0; j < 1000; ++j) {
    std::vector<double> r, p;
    const std::size_t len = 1 + uniform_index(rng, 20);
    for (std::size_t t = 0; t < len; ++t) {
      r.push_back(t + 1 == len ? (uniform01(rng) < 0.5 ? 100.0 : -100.0) : 0.0);
      p.push_back(0.05 + 0.9 * uniform01(rng));
    }
    eps.push_back(episode(r, p));
    total += episode_return(eps.back(), 1.0);
  }
  auto res = wis_ess(eps, [](const EpisodeStep& s) { return s.propensity; });
  CHECK(std::abs(res.wis - total / 1000.0) <= 1e-12);
  CHECK(res.ess == doctest::Approx(1000.0).epsilon(1e-12));
}

TEST_CASE("clipping equalizes huge weights") {
  std::vector<EpisodeLog> eps{episode({1.0, 2.0}, {1e-3, 1e-3}), episode({0.0, 7.0}, {1e-4, 1e-2})};
  auto res = wis_ess(eps, [](const EpisodeStep&) { return 1.0; });
  CHECK(res.clipped == 2);
  CHECK(res.wis == doctest::Approx((3.0 + 7.0) / 2.0));
  CHECK(res.ess == doctest::Approx(2.0));
}

TEST_CASE("WIS invariants") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EpisodeLog> eps;
    std::vector<double> returns;
    for (int j = 0; j < 12; ++j) {
      std::vector<double> r, p;
      for (int t = 0; t < 5; ++t) {
        r.push_back(uniform01(rng) * 10 - 5);
        p.push_back(0.1 + 0.8 * uniform01(rng));
      }
      eps.push_back(episode(r, p));
      returns.push_back(episode_return(eps.back(), 0.9));
    }
    auto target = [](const EpisodeStep& s) { return 0.2 + 0.1 * s.state[0]; };
    WisOptions o;
    o.discount = 0.9;
    auto res = wis_ess(eps, target, o);
    CHECK(res.wis >= *std::min_element(returns.begin(), returns.end()) - 1e-12);
    CHECK(res.wis <= *std::max_element(returns.begin(), returns.end()) + 1e-12);
    CHECK(res.ess > 0.0);
    CHECK(res.ess <= 12.0 + 1e-12);
    // Uniformly rescaled propensities leave WIS unchanged (absent clipping).
    o.clip = std::numeric_limits<double>::infinity();
    res = wis_ess(eps, target, o);
    auto scaled = eps;
    for (auto& e : scaled) {
      for (auto& s : e.steps) s.propensity *= 0.5;
    }
    CHECK(wis_ess(scaled, target, o).wis == doctest::Approx(res.wis).epsilon(1e-12));
  }
}

TEST_CASE("per-step ESS variant") {
  std::vector<EpisodeLog> eps{episode({10.0}, {0.5}, {0}), episode({20.0}, {0.25}, {1})};
  WisOptions o;
  o.per_step_ess = true;
  auto res = wis_ess(eps, ratio_policy({0.5, 0.75}), o);
  CHECK(res.ess == doctest::Approx(1.0));
  CHECK(res.ess_per_step == doctest::Approx(1.6));
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(wis_ess({}, [](const EpisodeStep&) { return 1.0; }), DomainError);
  std::vector<EpisodeLog> eps{episode({1.0, 2.0}, {0.5, 0.0})};
  try {
    wis_ess(eps, [](const EpisodeStep&) { return 1.0; });
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("episode 0 step 1") != std::string::npos);
  }
}

TEST_CASE("model selection") {
  CHECK(select_model({{"A", 80, 50}, {"B", 90, 10}}, 20) == "A");
  CHECK(select_model({{"A", 80, 50}}, 20) == "A");
  CHECK(select_model({{"b", 80, 50}, {"a", 80, 50}, {"c", 80, 60}}, 20) == "c");
  CHECK(select_model({{"b", 80, 50}, {"a", 80, 50}}, 20) == "a");
  try {
    select_model({{"A", 80, 5}, {"B", 90, 12.5}}, 20);
    FAIL("expected SelectionError");
  } catch (const SelectionError& e) {
    CHECK(std::string(e.what()).find("12.5") != std::string::npos);
  }
  // Raising the cutoff never grows the feasible set.
  Rng rng(2);
  std::vector<Candidate> cands;
  for (int i = 0; i < 30; ++i) cands.push_back({std::to_string(i), uniform01(rng), 100 * uniform01(rng)});
  std::size_t prev = cands.size() + 1;
  for (double cut = 0; cut <= 100; cut += 5) {
    const auto n = static_cast<std::size_t>(std::count_if(cands.begin(), cands.end(), [&](const auto& c) { return c.ess >= cut; }));
    CHECK(n <= prev);
    prev = n;
  }
}

TEST_CASE("episode files round trip") {
  std::vector<EpisodeLog> eps{episode({0.0, 100.0}, {0.04, 0.5}, {3, 1}), episode({1.0}, {0.2}, {0})};
  eps[0].final_state = {0.5, -1.0};
  eps[0].final_state_index = 7;
  eps[0].terminal = true;
  auto path = std::filesystem::temp_directory_path() / "frl_episodes_test.jsonl";
  save_episodes(eps, path);
  CHECK(load_episodes(path) == eps);
  std::filesystem::remove(path);
}
