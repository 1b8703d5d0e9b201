#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "frl/envs/synthetic.hpp"
#include "frl/error.hpp"
#include "oracles.hpp"

using namespace frl;
using namespace frl::mdp;
using frl::testing::two_switch;

namespace {

std::vector<FactoredMdpSpec> random_specs() {
  std::vector<FactoredMdpSpec> out;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    for (auto st : {envs::Structure::fully_separable, envs::Structure::separable_effects}) {
      envs::SyntheticSpec s;
      s.structure = st;
      s.seed = seed;
      s.num_blocks = 2;
      s.cardinality = 2;
      s.actions_per_block = 3;
      s.num_uncontrolled = 2;
      out.push_back(envs::generate_synthetic(s));
    }
    envs::SyntheticSpec s;
    s.seed = seed;
    s.num_blocks = 3;
    s.cardinality = 3;
    s.reward = envs::RewardKind::xor_nonmonotonic;
    out.push_back(envs::generate_synthetic(s));
  }
  return out;
}

FactoredPolicy random_policy(const FactoredMdp& m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FactoredPolicy pi;
  pi.actions.resize(m.num_blocks());
  for (std::size_t k = 0; k < m.num_blocks(); ++k) {
    for (std::size_t s = 0; s < m.num_states(); ++s) {
      pi.actions[k].push_back(static_cast<int>(rng() % m.block_size(k)));
    }
  }
  return pi;
}

std::vector<JointAction> joint_of(const FactoredMdp& m, const FactoredPolicy& pi) {
  std::vector<JointAction> out;
  for (std::size_t s = 0; s < m.num_states(); ++s) out.push_back(pi.joint(s));
  return out;
}

}  // namespace

TEST_CASE("two-switch interventional transition") {
  FactoredMdp m(two_switch());
  // From (0,0,0) under (set s1=1, set s2=1): s3 stays with 0.7, flips with 0.3.
  auto p = interventional_transition(m, 0, {1, 1});
  CHECK(p[0b110] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(p[0b111] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
}

TEST_CASE("two-switch projected transition") {
  FactoredMdp m(two_switch());
  auto p = projected_transition(m, 0, 0, 1);
  CHECK(p[0b100] == doctest::Approx(0.63).epsilon(1e-12));
  CHECK(p[0b101] == doctest::Approx(0.27).epsilon(1e-12));
  CHECK(p[0b110] == doctest::Approx(0.07).epsilon(1e-12));
  CHECK(p[0b111] == doctest::Approx(0.03).epsilon(1e-12));
  // The intervened block lands on its forced value with certainty.
  double s1_one = 0.0;
  for (std::size_t sn = 0; sn < p.size(); ++sn) {
    if (sn & 0b100) s1_one += p[sn];
  }
  CHECK(s1_one == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("transition matches brute-force product on random specs") {
  for (const auto& spec : random_specs()) {
    FactoredMdp m(spec);
    const auto radices = frl::testing::state_radices(spec);
    for (std::size_t s = 0; s < m.num_states(); ++s) {
      const auto sv = frl::testing::decode_row_major(s, radices);
      for (std::size_t a = 0; a < m.num_joint_actions(); ++a) {
        const auto ja = m.decode_action(a);
        auto p = interventional_transition(m, s, ja);
        double sum = 0.0;
        for (std::size_t sn = 0; sn < m.num_states(); ++sn) {
          const double want =
              frl::testing::oracle_transition(spec, sv, ja, frl::testing::decode_row_major(sn, radices));
          CHECK(std::abs(p[sn] - want) <= 1e-12);
          CHECK(std::abs(transition_factors(m, s, ja, sn).product() - want) <= 1e-12);
          sum += p[sn];
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("deterministic spec gives one-hot rows") {
  auto spec = two_switch({.flip_s1 = 0.0, .flip_s2 = 0.0, .noise_flip = 0.0});
  spec.assume_positive = false;
  FactoredMdp m(spec);
  for (std::size_t s = 0; s < m.num_states(); ++s) {
    for (std::size_t a = 0; a < m.num_joint_actions(); ++a) {
      auto row = transition_support(m, s, m.decode_action(a));
      REQUIRE(row.size() == 1);
      CHECK(row[0].second == 1.0);
    }
  }
}

TEST_CASE("single block: projected equals interventional") {
  envs::SyntheticSpec s;
  s.num_blocks = 1;
  s.seed = 4;
  FactoredMdp m(envs::generate_synthetic(s));
  for (std::size_t st = 0; st < m.num_states(); ++st) {
    for (int a = 0; a < static_cast<int>(m.block_size(0)); ++a) {
      CHECK(projected_transition(m, 0, st, a) == interventional_transition(m, st, {a}));
      for (std::size_t sn = 0; sn < m.num_states(); ++sn) {
        if (interventional_transition(m, st, {a})[sn] > 0) {
          CHECK(noop_propensity(m, 0, st, sn, {a}) == 1.0);
        }
      }
    }
  }
}

TEST_CASE("no-op propensity") {
  FactoredMdp m(two_switch());
  // Block A2 forces s2'=1 from s2=0; its no-op would have done so with 0.1.
  CHECK(noop_propensity(m, 0, 0, 0b110, {1, 1}) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(noop_propensity(m, 0, 0, 0b100, {1, 0}) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK_THROWS_AS(noop_propensity(m, 0, 0, 0b100, {1, 1}), DomainError);

  auto det = two_switch({.flip_s1 = 0.0, .flip_s2 = 0.0});
  det.assume_positive = false;
  FactoredMdp md(det);
  CHECK_THROWS_AS(noop_propensity(md, 0, 0, 0b110, {1, 1}), NumericError);
}

TEST_CASE("reweighting identity holds pointwise") {
  for (const auto& spec : random_specs()) {
    FactoredMdp m(spec);
    for (std::size_t s = 0; s < m.num_states(); ++s) {
      for (std::size_t ai = 0; ai < m.num_joint_actions(); ++ai) {
        const auto a = m.decode_action(ai);
        const auto full = interventional_transition(m, s, a);
        for (std::size_t k = 0; k < m.num_blocks(); ++k) {
          const auto proj = projected_transition(m, k, s, a[k]);
          for (std::size_t sn = 0; sn < m.num_states(); ++sn) {
            if (full[sn] == 0.0) continue;
            const double rho = noop_propensity(m, k, s, sn, a);
            CHECK(std::abs(full[sn] - proj[sn] / rho) <= 1e-10);
          }
        }
      }
    }
  }
}

TEST_CASE("expected reward") {
  FactoredMdp m(two_switch());
  CHECK(expected_reward(m, 0, {1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(expected_reward(m, 0, {0, 0}) == 0.0);
  CHECK(expected_reward(m, 0, {kNoOp, kNoOp}) == doctest::Approx(0.01).epsilon(1e-12));

  auto spec = two_switch();
  spec.reward.next_state.assign(8, 2.5);
  FactoredMdp c(spec);
  for (std::size_t s = 0; s < 8; ++s) CHECK(expected_reward(c, s, {0, 1}) == doctest::Approx(2.5));
}

TEST_CASE("exact values match dense solve") {
  auto specs = random_specs();
  specs.push_back(two_switch());
  std::uint64_t seed = 11;
  for (const auto& spec : specs) {
    FactoredMdp m(spec);
    const auto pi = random_policy(m, seed++);
    const auto ja = joint_of(m, pi);
    const auto want = frl::testing::oracle_values(spec, ja);
    const auto v = evaluate_joint_policy(m, ja);
    for (std::size_t s = 0; s < m.num_states(); ++s) CHECK(std::abs(v[s] - want(static_cast<long>(s))) <= 1e-8);

    // Joint Q and every weighted projected Q reproduce V_pi on-policy.
    const auto qj = exact_q(m, pi, QMode::joint());
    const auto vj = state_values(qj, m, pi);
    for (std::size_t k = 0; k < m.num_blocks(); ++k) {
      const auto vk = state_values(exact_q(m, pi, QMode::weighted(k)), m, pi);
      for (std::size_t s = 0; s < m.num_states(); ++s) CHECK(std::abs(vk[s] - vj[s]) <= 1e-8);
    }
    for (std::size_t s = 0; s < m.num_states(); ++s) CHECK(std::abs(vj[s] - want(static_cast<long>(s))) <= 1e-8);

    // Off-policy joint entries follow the one-step backup.
    const auto radices = frl::testing::state_radices(spec);
    for (std::size_t s = 0; s < m.num_states(); ++s) {
      for (std::size_t a = 0; a < m.num_joint_actions(); ++a) {
        const auto act = m.decode_action(a);
        double q = 0.0;
        for (std::size_t sn = 0; sn < m.num_states(); ++sn) {
          const double p = frl::testing::oracle_transition(spec, frl::testing::decode_row_major(s, radices), act,
                                                           frl::testing::decode_row_major(sn, radices));
          q += p * (frl::testing::oracle_reward(spec, s, act, sn) + spec.discount * want(static_cast<long>(sn)));
        }
        CHECK(std::abs(qj.at(s, a) - q) <= 1e-8);
      }
    }
  }
}

TEST_CASE("zero reward gives zero Q") {
  auto spec = two_switch();
  spec.reward.next_state.assign(8, 0.0);
  FactoredMdp m(spec);
  auto pi = FactoredPolicy::constant(m, {0, 1});
  for (auto mode : {QMode::joint(), QMode::projected(0), QMode::weighted(1)}) {
    for (double x : exact_q(m, pi, mode).values) CHECK(x == 0.0);
  }
}

TEST_CASE("single state geometric value") {
  for (double g : {0.0, 0.5, 0.9, 0.99}) {
    FactoredMdp m(frl::testing::single_state(2.0, g));
    auto pi = FactoredPolicy::constant(m, {0});
    auto q = exact_q(m, pi, QMode::joint());
    CHECK(std::abs(q.at(0, 0) - 2.0 / (1.0 - g)) <= 1e-8);
  }
}

TEST_CASE("projected Q uses no-op dynamics for the other blocks") {
  auto spec = two_switch();
  FactoredMdp m(spec);
  auto pi = FactoredPolicy::constant(m, {1, 1});
  auto qp = exact_q(m, pi, QMode::projected(0));
  // Oracle: projected MDP where block 1 is padded with kNoOp everywhere.
  std::vector<JointAction> padded(8, JointAction{1, kNoOp});
  auto v = frl::testing::oracle_values(spec, padded);
  for (std::size_t s = 0; s < 8; ++s) CHECK(std::abs(qp.at(s, 1) - v(static_cast<long>(s))) <= 1e-8);
}

TEST_CASE("terminal states are absorbing with zero value") {
  auto spec = two_switch({.discount = 1.0});
  spec.noop_dynamics[0] = {{0}, {}, {{0.5, 0.5}, {0.0, 1.0}}};
  spec.noop_dynamics[1] = {{1}, {}, {{0.5, 0.5}, {0.0, 1.0}}};
  spec.assume_positive = false;
  spec.terminal_states = {0b110, 0b111};
  FactoredMdp m(spec);
  auto pi = FactoredPolicy::constant(m, {1, 1});
  auto v = state_values(exact_q(m, pi, QMode::joint()), m, pi);
  CHECK(v[0b110] == 0.0);
  CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("validation") {
  SUBCASE("undefined sigma entry names block and Pre values") {
    auto spec = two_switch();
    spec.pre_map[0] = {2};
    spec.sigma[0] = {{{0}, {0}}, {{1}, {}}};
    try {
      FactoredMdp m(spec);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      std::string msg = e.what();
      CHECK(msg.find("A1") != std::string::npos);
      CHECK(msg.find("Pre") != std::string::npos);
    }
  }
  SUBCASE("rows must sum to one") {
    auto spec = two_switch();
    spec.noop_dynamics[2].table[0] = {0.5, 0.4};
    CHECK_THROWS_AS(FactoredMdp{spec}, ConfigError);
  }
  SUBCASE("positivity is enforced when assumed") {
    auto spec = two_switch({.flip_s1 = 0.0});
    CHECK_THROWS_AS(FactoredMdp{spec}, ConfigError);
    spec.assume_positive = false;
    CHECK_NOTHROW(FactoredMdp{spec});
  }
  SUBCASE("undiscounted needs terminal states") {
    auto spec = two_switch({.discount = 1.0});
    CHECK_THROWS_AS(FactoredMdp{spec}, ConfigError);
  }
  SUBCASE("overlapping effects are rejected by name") {
    envs::SyntheticSpec s;
    s.structure = envs::Structure::non_separable;
    auto spec = envs::generate_synthetic(s);
    REQUIRE(partition_violation(spec).has_value());
    CHECK(structural_issues(spec).empty());
    try {
      FactoredMdp m(spec);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(spec.state_vars[1].name) != std::string::npos);
    }
  }
  SUBCASE("actions out of range") {
    FactoredMdp m(two_switch());
    CHECK_THROWS_AS(m.check_action({2, 0}, false), DomainError);
    CHECK_THROWS_AS(m.check_action({kNoOp, 0}, false), DomainError);
    CHECK_NOTHROW(m.check_action({kNoOp, 0}, true));
  }
}

TEST_CASE("declared no-op action behaves like padding") {
  auto spec = two_switch();
  spec.action_blocks[0].cardinalities = {3};
  spec.action_blocks[0].noop_action = 0;
  spec.sigma[0] = {{{0}}, {{0}}, {{1}}};
  FactoredMdp m(spec);
  CHECK_FALSE(m.intervenes(0, 0));
  CHECK(m.intervenes(0, 1));
  for (std::size_t s = 0; s < 8; ++s) {
    CHECK(interventional_transition(m, s, {0, 1}) == interventional_transition(m, s, {kNoOp, 1}));
  }
}
