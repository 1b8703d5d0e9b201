#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "frl/factored_mdp.hpp"
#include "frl/ope.hpp"
#include "frl/rng.hpp"
#include "frl/tabular.hpp"

namespace frl::envs {

/// Small treatment-style task: each block steers one "vital" variable, an
/// uncontrolled status variable moves to discharged (+100) or dead (-100)
/// depending on how many vitals sit at their targets. Action 0 of every block
/// is the no-op.
struct OfflineTaskOptions {
  int num_blocks = 2;
  int actions_per_block = 5;
  int vital_levels = 4;
  std::uint64_t seed = 0;
};

mdp::FactoredMdpSpec offline_task(const OfflineTaskOptions& opts);

/// Status variable values of offline_task.
enum class Status : int { alive = 0, discharged = 1, dead = 2 };

/// One-hot encoding of every state variable, concatenated.
std::vector<double> one_hot_features(const mdp::FactoredMdp& mdp, mdp::StateIndex s);

/// Stochastic behavior over joint actions: probabilities indexed like
/// mdp.joint_action_codec().
using BehaviorPolicy = std::function<std::vector<double>(mdp::StateIndex)>;

/// Product of per-block softenings of a deterministic policy: block k plays
/// policy[s][k] with probability 1 - eps_block, the others share eps_block.
BehaviorPolicy product_softened(const mdp::FactoredMdp& mdp, std::vector<mdp::JointAction> policy, double eps_block);

BehaviorPolicy uniform_behavior(const mdp::FactoredMdp& mdp);

/// Optimal joint policy (joint policy iteration) with `block` forced to its
/// no-op 0 on a seeded `fraction` of the states.
std::vector<mdp::JointAction> degraded_optimal_policy(const mdp::FactoredMdp& mdp, double fraction,
                                                      std::size_t block, std::uint64_t seed);

/// Logged steps as tabular transitions (needs state indices in the logs).
std::vector<tabular::TabularTransition> tabular_transitions(const std::vector<ope::EpisodeLog>& episodes);

/// Rolls out `behavior` from init_dist for up to `horizon` steps (stopping on
/// terminal states), recording features, state indices and true propensities.
std::vector<ope::EpisodeLog> generate_offline_dataset(const mdp::FactoredMdp& mdp, const BehaviorPolicy& behavior,
                                                      std::size_t episodes, std::uint64_t seed,
                                                      std::size_t horizon = 20);

}  // namespace frl::envs
