#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "frl/envs/synthetic.hpp"
#include "frl/error.hpp"
#include "frl/tabular.hpp"
#include "oracles.hpp"

using namespace frl;
using namespace frl::mdp;
using namespace frl::tabular;

namespace {

FactoredPolicy zeros(const FactoredMdp& m) { return FactoredPolicy::constant(m, JointAction(m.num_blocks(), 0)); }

/// Plain value iteration with lowest-index greedy extraction.
std::vector<ActionIndex> value_iteration_policy(const FactoredMdp& m) {
  std::vector<double> v(m.num_states(), 0.0);
  std::vector<ActionIndex> pi(m.num_states(), 0);
  for (int it = 0; it < 5000; ++it) {
    std::vector<double> nv(m.num_states());
    for (StateIndex s = 0; s < m.num_states(); ++s) {
      double best = -1e300;
      for (ActionIndex a = 0; a < m.num_joint_actions(); ++a) {
        auto p = interventional_transition(m, s, m.decode_action(a));
        double q = 0.0;
        for (StateIndex sn = 0; sn < m.num_states(); ++sn) {
          q += p[sn] * (m.reward(s, m.decode_action(a), sn) + m.discount() * v[sn]);
        }
        if (q > best + 1e-9) {
          best = q;
          pi[s] = a;
        }
      }
      nv[s] = best;
    }
    v = nv;
  }
  return pi;
}

std::vector<JointAction> as_joint(const FactoredMdp& m, const FactoredPolicy& pi) {
  std::vector<JointAction> out;
  for (StateIndex s = 0; s < m.num_states(); ++s) out.push_back(pi.joint(s));
  return out;
}

}  // namespace

TEST_CASE("fully separable: factored policy is the product of part optima") {
  for (std::uint64_t seed : {1, 2, 3}) {
    envs::SyntheticSpec s;
    s.structure = envs::Structure::fully_separable;
    s.num_uncontrolled = 2;
    s.actions_per_block = 3;
    s.seed = seed;
    auto parts = envs::generate_fully_separable_parts(s);
    FactoredMdp whole(envs::compose_product(parts));
    auto trace = mbfpi(whole, zeros(whole));
    REQUIRE(trace.converged);
    std::vector<std::vector<ActionIndex>> part_pi;
    std::vector<FactoredMdp> pm;
    for (const auto& p : parts) {
      pm.emplace_back(p);
      part_pi.push_back(value_iteration_policy(pm.back()));
    }
    for (StateIndex st = 0; st < whole.num_states(); ++st) {
      auto v = whole.decode_state(st);
      std::size_t off = 0;
      for (std::size_t k = 0; k < pm.size(); ++k) {
        std::vector<int> sub(v.begin() + static_cast<long>(off), v.begin() + static_cast<long>(off + pm[k].num_vars()));
        off += pm[k].num_vars();
        CHECK(trace.policy.actions[k][st] == static_cast<int>(part_pi[k][pm[k].encode_state(sub)]));
      }
    }
  }
}

TEST_CASE("monotonic two-switch: MB-FPI matches joint policy iteration") {
  std::vector<double> r(8);
  for (std::size_t i = 0; i < 8; ++i) r[i] = 0.7 * ((i >> 2) & 1) + 1.3 * ((i >> 1) & 1);
  FactoredMdp m(frl::testing::two_switch({.next_state_reward = r}));
  auto trace = mbfpi(m, zeros(m));
  auto joint = joint_policy_iteration(m);
  for (StateIndex s = 0; s < 8; ++s) {
    CHECK(m.encode_action(trace.policy.joint(s)) == joint.policy[s]);
    CHECK(std::abs(trace.values[s] - joint.values[s]) <= 1e-8);
  }
}

TEST_CASE("optimal start stops after one quiet sweep") {
  FactoredMdp m(frl::testing::two_switch());
  auto joint = joint_policy_iteration(m);
  FactoredPolicy init;
  init.actions.assign(2, std::vector<int>(8));
  for (StateIndex s = 0; s < 8; ++s) {
    auto a = m.decode_action(joint.policy[s]);
    init.actions[0][s] = a[0];
    init.actions[1][s] = a[1];
  }
  auto trace = mbfpi(m, init);
  CHECK(trace.converged);
  CHECK(trace.iterations.size() == 2);
  for (const auto& it : trace.iterations) CHECK(it.changed == 0);
  CHECK(trace.policy == init);
}

TEST_CASE("monotone improvement and finite termination") {
  std::vector<FactoredMdpSpec> specs{frl::testing::xor_switches(), frl::testing::two_switch()};
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    for (auto rk : {envs::RewardKind::additive_monotonic, envs::RewardKind::xor_nonmonotonic}) {
      envs::SyntheticSpec s;
      s.seed = seed;
      s.reward = rk;
      s.num_blocks = 2;
      s.actions_per_block = 3;
      s.cardinality = 3;
      specs.push_back(envs::generate_synthetic(s));
    }
  }
  for (const auto& spec : specs) {
    FactoredMdp m(spec);
    for (auto order : {BlockOrder::round_robin, BlockOrder::random}) {
      auto trace = mbfpi(m, zeros(m), {.order = order, .seed = 5});
      REQUIRE(trace.converged);
      std::size_t budget = 0;
      for (std::size_t k = 0; k < m.num_blocks(); ++k) budget += m.block_size(k);
      budget *= m.num_states();
      CHECK(trace.iterations.size() <= budget * m.num_blocks());
      for (std::size_t i = 1; i < trace.iterations.size(); ++i) {
        for (StateIndex s = 0; s < m.num_states(); ++s) {
          CHECK(trace.iterations[i].values[s] >= trace.iterations[i - 1].values[s] - 1e-9);
        }
      }
      // Every block's tilde-Q reproduces V on-policy.
      const auto& last = trace.iterations.back();
      for (std::size_t k = 0; k < m.num_blocks(); ++k) {
        for (StateIndex s = 0; s < m.num_states(); ++s) {
          CHECK(std::abs(last.q[k].at(s, static_cast<std::size_t>(last.policy.actions[k][s])) - last.values[s]) <= 1e-8);
        }
      }
    }
  }
}

TEST_CASE("xor switches stall at a local optimum") {
  FactoredMdp m(frl::testing::xor_switches());
  auto trace = mbfpi(m, zeros(m));
  auto joint = joint_policy_iteration(m);
  for (StateIndex s = 0; s < 8; ++s) {
    CHECK(trace.values[s] == doctest::Approx(10.0).epsilon(1e-8));
    CHECK(joint.values[s] == doctest::Approx(20.0).epsilon(1e-8));
  }
}

TEST_CASE("joint policy iteration") {
  SUBCASE("myopic when gamma is zero") {
    auto spec = frl::testing::two_switch({.discount = 0.0});
    spec.reward.block_cost = {{0.0, -0.05}, {0.0, -0.4}};
    FactoredMdp m(spec);
    auto sol = joint_policy_iteration(m);
    for (StateIndex s = 0; s < 8; ++s) {
      ActionIndex best = 0;
      for (ActionIndex a = 1; a < 4; ++a) {
        if (expected_reward(m, s, m.decode_action(a)) > expected_reward(m, s, m.decode_action(best)) + 1e-12) best = a;
      }
      CHECK(sol.policy[s] == best);
    }
  }
  SUBCASE("matches exhaustive enumeration on four states") {
    auto spec = frl::testing::two_switch();
    // Drop the noise variable: 4 states, 4 joint actions, 256 policies.
    spec.state_vars.pop_back();
    spec.noop_dynamics.pop_back();
    spec.reward.next_state = {0.0, 0.2, -0.1, 1.0};
    spec.reward.block_cost = {{0.0, -0.3}, {-0.05, 0.0}};
    spec.init_dist.assign(4, 0.25);
    FactoredMdp m(spec);
    auto sol = joint_policy_iteration(m);
    std::vector<double> best(4, -1e300);
    for (std::size_t code = 0; code < 256; ++code) {
      std::vector<JointAction> pi;
      for (StateIndex s = 0; s < 4; ++s) pi.push_back(m.decode_action((code >> (2 * s)) & 3));
      auto v = frl::testing::oracle_values(spec, pi);
      for (StateIndex s = 0; s < 4; ++s) best[s] = std::max(best[s], v(static_cast<long>(s)));
    }
    for (StateIndex s = 0; s < 4; ++s) CHECK(std::abs(sol.values[s] - best[s]) <= 1e-9);
  }
  SUBCASE("invariant to the starting policy") {
    envs::SyntheticSpec s;
    s.seed = 8;
    s.actions_per_block = 3;
    FactoredMdp m(envs::generate_synthetic(s));
    auto a = joint_policy_iteration(m);
    auto b = joint_policy_iteration(m, std::vector<ActionIndex>(m.num_states(), m.num_joint_actions() - 1));
    CHECK(a.policy == b.policy);
  }
}

TEST_CASE("learned model of a deterministic MDP is exact") {
  auto spec = frl::testing::two_switch({.flip_s1 = 0.0, .flip_s2 = 0.0, .noise_flip = 0.0});
  spec.assume_positive = false;
  FactoredMdp m(spec);
  std::vector<TabularTransition> samples;
  for (StateIndex s = 0; s < 8; ++s) {
    for (int a0 = -1; a0 < 2; ++a0) {
      for (int a1 = -1; a1 < 2; ++a1) {
        JointAction a{a0, a1};
        auto row = transition_support(m, s, a);
        samples.push_back({s, a, m.reward(s, a, row[0].first), row[0].first});
      }
    }
  }
  auto model = learn_model(samples, spec);
  CHECK(model.zero_count_cells().empty());
  CHECK(model.spec.sigma == spec.sigma);
  CHECK(model.spec.noop_dynamics == spec.noop_dynamics);
  for (StateIndex s = 0; s < 8; ++s) {
    for (const auto& t : samples) CHECK(model.spec.reward.state_next[t.s][t.s_next] == t.r);
  }
}

TEST_CASE("empty sample set flags every cell") {
  auto spec = frl::testing::two_switch();
  auto model = learn_model({}, spec);
  // sigma: 2 blocks x 2 actions x 1 Pre row; noop: 3 variables x 2 rows.
  CHECK(model.zero_count_cells().size() == 4 + 6);
  CHECK(mdp::structural_issues(model.spec).empty());
}

TEST_CASE("Hoeffding bound for a Bernoulli factor") {
  // One controlled switch and one uncontrolled Bernoulli(0.3) variable.
  FactoredMdpSpec spec;
  spec.state_vars = {{"x", 2}, {"u", 2}};
  spec.action_blocks = {{"a", {1}, std::nullopt}};
  spec.eff_map = {{0}};
  spec.pre_map = {{}};
  spec.sigma = {{{{1}}}};
  spec.noop_dynamics = {{{0}, {}, {{0.5, 0.5}, {0.5, 0.5}}}, {{1}, {}, {{0.7, 0.3}, {0.7, 0.3}}}};
  spec.init_dist = {0.25, 0.25, 0.25, 0.25};
  spec.assume_positive = true;
  FactoredMdp m(spec);
  const double delta = 0.1;
  const std::size_t n = 200;
  const double bound = std::sqrt(std::log(2.0 * 2 / delta) / (2.0 * n));
  Rng rng(17);
  int within = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TabularTransition> samples;
    for (StateIndex s : {StateIndex{0}, StateIndex{1}}) {
      for (std::size_t i = 0; i < n; ++i) samples.push_back({s, {0}, 0.0, sample_next(m, s, {0}, rng)});
    }
    auto model = learn_model(samples, spec);
    double err = 0.0;
    for (std::size_t r = 0; r < 2; ++r) err = std::max(err, std::abs(model.spec.noop_dynamics[1].table[r][1] - 0.3));
    within += err <= bound;
  }
  CHECK(within >= 180);
}

TEST_CASE("MB-FPI refuses incomplete learned models") {
  auto spec = frl::testing::two_switch();
  FactoredMdp m(spec);
  std::vector<TabularTransition> samples;
  Rng rng(3);
  for (int i = 0; i < 5; ++i) samples.push_back({0, {1, 1}, 0.0, sample_next(m, 0, {1, 1}, rng)});
  auto model = learn_model(samples, spec);
  CHECK_THROWS_AS(mbfpi(model, zeros(m)), ModelCoverageError);
  try {
    mbfpi(model, zeros(m));
  } catch (const ModelCoverageError& e) {
    CHECK(std::string(e.what()).find("sigma[A1] action 0") != std::string::npos);
  }

  for (int i = 0; i < 20000; ++i) {
    const StateIndex s = uniform_index(rng, 8);
    const JointAction a = m.decode_action(uniform_index(rng, 4));
    const auto sn = sample_next(m, s, a, rng);
    samples.push_back({s, a, m.reward(s, a, sn), sn});
  }
  auto full = learn_model(samples, spec);
  CHECK(reachable_missing_cells(full).empty());
  CHECK_FALSE(full.zero_count_cells().empty());  // controlled no-op rows are never needed
  auto trace = mbfpi(full, zeros(m));
  CHECK(trace.converged);
  CHECK(trace.policy == mbfpi(m, zeros(m)).policy);
}

TEST_CASE("sample-complexity bounds") {
  FactoredMdp m(frl::testing::two_switch());
  CHECK(n_p_bound(m, 0.1, 0.1) == doctest::Approx(6400.0 * std::log(640.0)).epsilon(1e-12));
  CHECK(n_p_bound(m, 0.1, 0.1) == doctest::Approx(41361.0).epsilon(1e-3));
  // No Pre: |Eff| = 2 outcomes, one conditioning cell.
  CHECK(n_sigma_bound(m, 0, 0.1, 0.1) == doctest::Approx(200.0 * std::log(20.0)).epsilon(1e-12));
  CHECK(error_bound(2, 32, n_p_bound(m, 0.1, 0.1), 0.1) == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("sample-complexity experiment") {
  FactoredMdp m(frl::testing::two_switch());
  SampleComplexityOptions o;
  o.trials = 60;
  o.seed = 4;
  auto res = sample_complexity_experiment(m, o);
  REQUIRE(res.rows.size() == 3);
  CHECK(res.trials.size() == 180);
  for (const auto& row : res.rows) CHECK(row.upper_quantile < row.bound);
  CHECK(res.rows[1].median < res.rows[0].median);
  CHECK(res.rows[2].median < res.rows[1].median);

  o.threads = 3;
  auto again = sample_complexity_experiment(m, o);
  for (std::size_t i = 0; i < res.trials.size(); ++i) {
    CHECK(res.trials[i].dynamics_error == again.trials[i].dynamics_error);
  }
}

TEST_CASE("finite-horizon values") {
  FactoredMdp m(frl::testing::single_state(1.0, 0.5));
  auto v = finite_horizon_values(m, {{0}}, 3);
  CHECK(v[0] == doctest::Approx(1.0 + 0.5 + 0.25));
  CHECK(finite_horizon_optimum(m, 3)[0] == doctest::Approx(1.75));

  FactoredMdp t(frl::testing::two_switch());
  auto opt = finite_horizon_optimum(t, 200);
  auto joint = joint_policy_iteration(t);
  for (StateIndex s = 0; s < 8; ++s) CHECK(std::abs(opt[s] - joint.values[s]) <= 1e-8);
}
