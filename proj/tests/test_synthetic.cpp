#include <doctest.h>

#include "frl/envs/synthetic.hpp"
#include "frl/error.hpp"
#include "frl/spec_io.hpp"

using namespace frl;
using namespace frl::envs;

TEST_CASE("deterministic in seed") {
  SyntheticSpec s;
  s.seed = 9;
  CHECK(generate_synthetic(s) == generate_synthetic(s));
  auto t = s;
  t.seed = 10;
  CHECK_FALSE(generate_synthetic(s) == generate_synthetic(t));
}

TEST_CASE("every structure validates as expected") {
  for (int k : {1, 2, 3}) {
    for (auto st : {Structure::fully_separable, Structure::separable_effects, Structure::non_separable}) {
      if (st == Structure::non_separable && k < 2) continue;
      SyntheticSpec s;
      s.structure = st;
      s.num_blocks = k;
      s.seed = 2;
      auto spec = generate_synthetic(s);
      CHECK(mdp::structural_issues(spec).empty());
      CHECK(mdp::partition_violation(spec).has_value() == (st == Structure::non_separable));
    }
  }
}

TEST_CASE("fully separable equals product of parts") {
  SyntheticSpec s;
  s.structure = Structure::fully_separable;
  s.num_blocks = 2;
  s.num_uncontrolled = 2;
  s.seed = 5;
  auto parts = generate_fully_separable_parts(s);
  REQUIRE(parts.size() == 2);
  auto whole = compose_product(parts);
  CHECK(mdp::structural_issues(whole).empty());
  mdp::FactoredMdp m(whole);
  std::vector<mdp::FactoredMdp> pm;
  for (const auto& p : parts) pm.emplace_back(p);
  // P(s'|s,a) factorizes over the parts' variable groups.
  auto split = [&](std::size_t s_idx) {
    auto v = m.decode_state(s_idx);
    std::vector<std::size_t> out;
    std::size_t off = 0;
    for (const auto& p : pm) {
      std::vector<int> sub(v.begin() + static_cast<long>(off), v.begin() + static_cast<long>(off + p.num_vars()));
      out.push_back(p.encode_state(sub));
      off += p.num_vars();
    }
    return out;
  };
  for (std::size_t st = 0; st < m.num_states(); ++st) {
    for (std::size_t a = 0; a < m.num_joint_actions(); ++a) {
      auto ja = m.decode_action(a);
      auto p = mdp::interventional_transition(m, st, ja);
      auto ss = split(st);
      for (std::size_t sn = 0; sn < m.num_states(); ++sn) {
        auto sns = split(sn);
        double want = 1.0, r = 0.0;
        for (std::size_t k = 0; k < pm.size(); ++k) {
          want *= mdp::interventional_transition(pm[k], ss[k], {ja[k]})[sns[k]];
          r += pm[k].reward(ss[k], {ja[k]}, sns[k]);
        }
        CHECK(std::abs(p[sn] - want) <= 1e-12);
        CHECK(std::abs(m.reward(st, ja, sn) - r) <= 1e-12);
      }
    }
  }
}

TEST_CASE("configuration errors") {
  SyntheticSpec s;
  s.structure = Structure::fully_separable;
  s.reward = RewardKind::xor_nonmonotonic;
  CHECK_THROWS_AS(generate_synthetic(s), ConfigError);
  SyntheticSpec t;
  t.structure = Structure::non_separable;
  t.num_blocks = 1;
  CHECK_THROWS_AS(generate_synthetic(t), ConfigError);
  SyntheticSpec u;
  u.cardinalities = {2, 2};
  CHECK_THROWS_AS(generate_synthetic(u), ConfigError);
  SyntheticSpec g;
  g.discount = 1.0;
  CHECK_THROWS_AS(generate_synthetic(g), ConfigError);
}
