#pragma once

#include <optional>
#include <vector>

#include "frl/approx/qnet.hpp"
#include "frl/rng.hpp"

namespace frl::agents {

struct Selection {
  mdp::JointAction action;
  std::optional<std::size_t> block_tag;  ///< projected exploratory action
  bool explored = false;
};

/// Epsilon-greedy over the decomposed net. Draw order: one uniform for
/// epsilon; when exploring and p > 0, one uniform for p; then either
/// (block, action) for a projected action (other blocks at no-op 0) or one
/// index per block for a uniform joint action. Greedy uses coordinate ascent.
Selection select_action(const approx::DecomposedQNet& net, const std::vector<double>& state, double epsilon, double p,
                        Rng& rng);

/// Greedy joint action at one state.
mdp::JointAction greedy_action(const approx::DecomposedQNet& net, const std::vector<double>& state);

/// Linear decay from `start` to `end` over the first `fraction` of `total`.
double linear_schedule(double start, double end, double fraction, std::size_t t, std::size_t total);

}  // namespace frl::agents
