#pragma once

// Hand-built MDPs shared by the unit and acceptance suites.

#include <vector>

#include "frl/factored_mdp.hpp"

namespace frl::testing {

struct TwoSwitchOptions {
  double flip_s1 = 0.1;   // no-op flip probability of s1
  double flip_s2 = 0.1;   // no-op flip probability of s2
  double noise_flip = 0.3;
  double discount = 0.9;
  std::vector<double> next_state_reward;  // over (s1', s2', s3'); empty = 1 iff s1' and s2'
};

/// Two binary switches (one per block, "set 0"/"set 1" actions, no Pre)
/// plus one binary noise variable that flips with `noise_flip`.
inline mdp::FactoredMdpSpec two_switch(const TwoSwitchOptions& o = {}) {
  mdp::FactoredMdpSpec spec;
  spec.state_vars = {{"s1", 2}, {"s2", 2}, {"s3", 2}};
  spec.action_blocks = {{"A1", {2}, std::nullopt}, {"A2", {2}, std::nullopt}};
  spec.eff_map = {{0}, {1}};
  spec.pre_map = {{}, {}};
  spec.sigma = {{{{0}}, {{1}}}, {{{0}}, {{1}}}};
  auto flip_cpt = [](int var, double p) {
    return mdp::ConditionalTable{{var}, {}, {{1.0 - p, p}, {p, 1.0 - p}}};
  };
  spec.noop_dynamics = {flip_cpt(0, o.flip_s1), flip_cpt(1, o.flip_s2), flip_cpt(2, o.noise_flip)};
  spec.reward.next_state = o.next_state_reward;
  if (spec.reward.next_state.empty()) {
    spec.reward.next_state.assign(8, 0.0);
    spec.reward.next_state[0b110] = 1.0;
    spec.reward.next_state[0b111] = 1.0;
  }
  spec.init_dist.assign(8, 0.125);
  spec.discount = o.discount;
  spec.assume_positive = true;
  return spec;
}

/// Single-state, single-action MDP with constant reward r.
inline mdp::FactoredMdpSpec single_state(double r, double discount) {
  mdp::FactoredMdpSpec spec;
  spec.state_vars = {{"x", 1}};
  spec.action_blocks = {{"a", {1}, std::nullopt}};
  spec.eff_map = {{0}};
  spec.pre_map = {{}};
  spec.sigma = {{{{0}}}};
  spec.noop_dynamics = {{{}, {}, {{1.0}}}};
  spec.reward.next_state = {r};
  spec.init_dist = {1.0};
  spec.discount = discount;
  return spec;
}

/// Two binary "set" switches paying 1 + s1' when they agree, 0 otherwise.
/// From the all-zero policy, changing one block alone only loses reward, so
/// block-wise improvement stalls at value 1/(1-gamma) while the optimum is 2/(1-gamma).
inline mdp::FactoredMdpSpec xor_switches(double discount = 0.9) {
  auto spec = two_switch({.flip_s1 = 0.2, .flip_s2 = 0.2, .noise_flip = 0.3, .discount = discount});
  for (std::size_t idx = 0; idx < 8; ++idx) {
    const int s1 = (idx >> 2) & 1, s2 = (idx >> 1) & 1;
    spec.reward.next_state[idx] = s1 == s2 ? 1.0 + s1 : 0.0;
  }
  return spec;
}

}  // namespace frl::testing
