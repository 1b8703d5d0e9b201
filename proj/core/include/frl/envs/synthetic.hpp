#pragma once

#include <cstdint>
#include <vector>

#include "frl/factored_mdp.hpp"

namespace frl::envs {

/// The three decomposition structures of factored MDPs.
enum class Structure {
  fully_separable,    ///< product of independent sub-MDPs
  separable_effects,  ///< disjoint Eff sets, shared uncontrolled block
  non_separable,      ///< one variable is an effect of two blocks
};

enum class RewardKind {
  additive_monotonic,  ///< sum_k w_k f_k(Eff'_k) with w_k > 0
  xor_nonmonotonic,    ///< pays only when all blocks' lead variables agree
};

struct SyntheticSpec {
  Structure structure = Structure::separable_effects;
  int num_blocks = 2;
  int vars_per_block = 1;
  int num_uncontrolled = 1;
  /// Uniform cardinality, unless `cardinalities` lists one entry per variable.
  int cardinality = 2;
  std::vector<int> cardinalities;
  int actions_per_block = 2;
  double discount = 0.9;
  RewardKind reward = RewardKind::additive_monotonic;
  std::uint64_t seed = 0;

  int num_vars() const { return num_blocks * vars_per_block + num_uncontrolled; }
};

/// Deterministic in `spec.seed`. Throws ConfigError on inconsistent sizes.
mdp::FactoredMdpSpec generate_synthetic(const SyntheticSpec& spec);

/// For fully-separable specs: the K single-block sub-MDPs whose product
/// generate_synthetic returns. Each part owns its block's controlled
/// variables followed by the uncontrolled variables assigned to it.
std::vector<mdp::FactoredMdpSpec> generate_fully_separable_parts(const SyntheticSpec& spec);

/// Product MDP of independent parts: variables and blocks concatenated,
/// rewards summed, initial distribution multiplied.
mdp::FactoredMdpSpec compose_product(const std::vector<mdp::FactoredMdpSpec>& parts);

}  // namespace frl::envs
