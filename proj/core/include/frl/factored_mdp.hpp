#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "frl/indexing.hpp"

namespace frl::mdp {

/// Marks a block that takes no action at all (padding for projected actions).
inline constexpr int kNoOp = -1;

using StateIndex = std::size_t;
using ActionIndex = std::size_t;

/// One entry per action block: the projected action index, or kNoOp.
using JointAction = std::vector<int>;

struct StateVar {
  std::string name;
  int cardinality = 2;
  friend bool operator==(const StateVar&, const StateVar&) = default;
};

/// A block of action variables; its projected action space is the product of
/// `cardinalities`. When `noop_action` is set, that projected action leaves
/// Eff(block) to the no-op dynamics instead of intervening.
struct ActionBlock {
  std::string name;
  std::vector<int> cardinalities;
  std::optional<int> noop_action;
  friend bool operator==(const ActionBlock&, const ActionBlock&) = default;
};

/// P(S'_m | parents): rows indexed row-major over `parents` (current state)
/// followed by `next_parents` (next-state Eff variables).
struct ConditionalTable {
  std::vector<int> parents;
  std::vector<int> next_parents;
  std::vector<std::vector<double>> table;
  friend bool operator==(const ConditionalTable&, const ConditionalTable&) = default;
};

/// R(s, a, s') = next_state[s'] + state_next[s][s'] + sum_k block_cost[k][a_k].
/// Absent components are empty. Blocks padded with kNoOp contribute nothing.
struct RewardSpec {
  std::vector<double> next_state;
  std::vector<std::vector<double>> state_next;
  std::vector<std::vector<double>> block_cost;
  friend bool operator==(const RewardSpec&, const RewardSpec&) = default;
};

/// sigma[a_k][pre_config] = values of Eff(A_k), ordered like eff_map[k].
/// An empty innermost vector means "undefined" and fails validation.
using InterventionTable = std::vector<std::vector<std::vector<int>>>;

/// Full tabular description of a factored MDP with intervention semantics.
struct FactoredMdpSpec {
  std::vector<StateVar> state_vars;
  std::vector<ActionBlock> action_blocks;
  std::vector<std::vector<int>> eff_map;
  std::vector<std::vector<int>> pre_map;
  std::vector<InterventionTable> sigma;
  std::vector<ConditionalTable> noop_dynamics;
  RewardSpec reward;
  std::vector<double> init_dist;
  double discount = 0.9;
  bool assume_positive = false;
  /// Absorbing states: their value is zero and episodes stop on entry.
  std::vector<StateIndex> terminal_states;

  friend bool operator==(const FactoredMdpSpec&, const FactoredMdpSpec&) = default;
};

/// Structural problems with a spec (shapes, normalization, totality). Empty
/// when the spec is well formed. Does not check Assumption 1.
std::vector<std::string> structural_issues(const FactoredMdpSpec& spec);

/// Names the first state variable that breaks the Eff partition (a variable
/// claimed by two blocks), or nullopt when the partition is valid.
std::optional<std::string> partition_violation(const FactoredMdpSpec& spec);

/// Validated, immutable factored MDP with precomputed codecs.
class FactoredMdp {
 public:
  /// Throws ConfigError if the spec is malformed or the Eff sets overlap.
  explicit FactoredMdp(FactoredMdpSpec spec);

  const FactoredMdpSpec& spec() const { return spec_; }
  double discount() const { return spec_.discount; }

  std::size_t num_vars() const { return spec_.state_vars.size(); }
  std::size_t num_states() const { return states_.size(); }
  std::size_t num_blocks() const { return spec_.action_blocks.size(); }
  std::size_t block_size(std::size_t k) const { return blocks_[k].size(); }
  std::size_t num_joint_actions() const { return joint_actions_.size(); }

  const MixedRadix& state_codec() const { return states_; }
  const MixedRadix& joint_action_codec() const { return joint_actions_; }

  std::vector<int> decode_state(StateIndex s) const { return states_.decode(s); }
  StateIndex encode_state(std::span<const int> values) const { return states_.encode(values); }
  JointAction decode_action(ActionIndex a) const;
  ActionIndex encode_action(const JointAction& a) const;

  /// Block owning a state variable through eff_map, or -1 if uncontrolled.
  int owner_block(int var) const { return owner_[static_cast<std::size_t>(var)]; }
  const std::vector<int>& uncontrolled_vars() const { return uncontrolled_; }

  /// False for kNoOp and for the block's declared no-op action.
  bool intervenes(std::size_t k, int a_k) const;

  /// sigma_{A_k}(Pre(A_k)) evaluated at the given current-state values.
  const std::vector<int>& forced_effect(std::size_t k, int a_k,
                                        std::span<const int> state) const;

  /// No-op CPT entry P(S'_var = next[var] | parents) for a full assignment.
  double noop_probability(int var, std::span<const int> state,
                          std::span<const int> next) const;

  /// Row of the no-op CPT for `var` given current and (partially filled)
  /// next-state values; only next_parents of `var` are read from `next`.
  const std::vector<double>& noop_row(int var, std::span<const int> state,
                                      std::span<const int> next) const;

  double reward(StateIndex s, const JointAction& a, StateIndex s_next) const;
  bool is_terminal(StateIndex s) const { return terminal_[s] != 0; }

  /// Checks block count and index ranges; kNoOp is allowed when `allow_noop`.
  void check_action(const JointAction& a, bool allow_noop) const;

 private:
  FactoredMdpSpec spec_;
  MixedRadix states_;
  MixedRadix joint_actions_;
  std::vector<MixedRadix> blocks_;
  std::vector<MixedRadix> pre_codecs_;
  std::vector<MixedRadix> cpt_codecs_;
  std::vector<int> owner_;
  std::vector<int> uncontrolled_;
  std::vector<char> terminal_;
};

/// Sparse next-state distribution: (next state, probability) with p > 0.
using SparseRow = std::vector<std::pair<StateIndex, double>>;

/// P(S' | s, do(a)) restricted to its support. Blocks set to kNoOp (or to
/// their no-op action) follow the no-op dynamics.
SparseRow transition_support(const FactoredMdp& mdp, StateIndex s, const JointAction& a);

/// Dense P(S' | s, do(a)) over all joint next states.
std::vector<double> interventional_transition(const FactoredMdp& mdp, StateIndex s,
                                              const JointAction& a);

/// Joint action with block k set to a_k and every other block padded with kNoOp.
JointAction pad_projected(const FactoredMdp& mdp, std::size_t k, int a_k);

/// Dense transition of the projected-action MDP for block k.
std::vector<double> projected_transition(const FactoredMdp& mdp, std::size_t k, StateIndex s,
                                         int a_k);

/// rho_{-k}(s, s'): no-op propensity of the blocks other than k, i.e. the
/// probability that the no-op dynamics would have produced what a_{-k} forced.
double noop_propensity(const FactoredMdp& mdp, std::size_t k, StateIndex s, StateIndex s_next,
                       const JointAction& a);

/// sum_{s'} P(s' | s, do(a)) R(s, a, s').
double expected_reward(const FactoredMdp& mdp, StateIndex s, const JointAction& a);

/// Per-factor terms of the interventional transition at one (s, a, s').
struct TransitionFactors {
  double uncontrolled = 1.0;     ///< P(S'_{K+1} | s, Eff(A)).
  std::vector<double> blocks;    ///< P(S'_k | s, do(a_k)) per block.
  double product() const;
};
TransitionFactors transition_factors(const FactoredMdp& mdp, StateIndex s, const JointAction& a,
                                     StateIndex s_next);

/// Deterministic factored policy: actions[k][s] is block k's projected action.
struct FactoredPolicy {
  std::vector<std::vector<int>> actions;

  static FactoredPolicy constant(const FactoredMdp& mdp, const JointAction& a);
  JointAction joint(StateIndex s) const;
  friend bool operator==(const FactoredPolicy&, const FactoredPolicy&) = default;
};

/// Dense action-value table. `block` is set for projected/weighted tables.
struct QTable {
  std::optional<std::size_t> block;
  std::size_t num_states = 0;
  std::size_t num_actions = 0;
  std::vector<double> values;

  QTable() = default;
  QTable(std::optional<std::size_t> block, std::size_t num_states, std::size_t num_actions);

  double& at(StateIndex s, std::size_t a) { return values[s * num_actions + a]; }
  double at(StateIndex s, std::size_t a) const { return values[s * num_actions + a]; }
  /// Lowest-index argmax within `tie_tol` of the row maximum.
  std::size_t argmax(StateIndex s, double tie_tol = 0.0) const;
};

enum class QKind { joint, projected, weighted };

struct QMode {
  QKind kind = QKind::joint;
  std::size_t block = 0;

  static QMode joint() { return {QKind::joint, 0}; }
  /// Q_{pi_k} of the projected-action MDP: other blocks follow no-op dynamics.
  static QMode projected(std::size_t k) { return {QKind::projected, k}; }
  /// Weighted projected Q: projected transition reweighted by 1/rho_{-k} on the
  /// support consistent with pi_{-k}; matches the joint-policy value.
  static QMode weighted(std::size_t k) { return {QKind::weighted, k}; }
};

struct EvalOptions {
  double tol = 1e-10;
  std::size_t max_iters = 1'000'000;
};

/// V_pi for the joint policy given as one joint action per state, by
/// Gauss-Seidel sweeps. Terminal states have value zero.
std::vector<double> evaluate_joint_policy(const FactoredMdp& mdp,
                                          std::span<const JointAction> policy,
                                          const EvalOptions& opts = {});

QTable exact_q(const FactoredMdp& mdp, const FactoredPolicy& policy, QMode mode,
               const EvalOptions& opts = {});

/// V(s) = Q(s, policy action at s) for a table produced by exact_q.
std::vector<double> state_values(const QTable& q, const FactoredMdp& mdp,
                                 const FactoredPolicy& policy);

}  // namespace frl::mdp
