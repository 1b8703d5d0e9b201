#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frl/agents/models.hpp"
#include "frl/agents/replay.hpp"
#include "frl/approx/checkpoint.hpp"
#include "frl/approx/optimizer.hpp"
#include "frl/approx/qnet.hpp"
#include "frl/ope.hpp"

namespace frl::agents {

/// The paper's threshold grid.
inline const std::vector<double> kBcqThresholds{0.0, 0.01, 0.05, 0.1, 0.3, 0.5, 0.75, 0.9999};

struct BcqConfig {
  std::string preset = "AD-BCQ";
  approx::QNetConfig net;        ///< state_dim and block_sizes come from the data
  bool flat = false;             ///< one block over the joint action space
  bool augmentation = true;
  double threshold = 0.3;
  double discount = 0.99;
  std::size_t steps = 5000;
  std::size_t batch = 100;
  double polyak = 0.005;
  approx::OptimizerConfig opt{approx::OptimizerKind::adam, 3e-4, 0.9, 0.999, 1e-8, 1e-3};
  std::size_t checkpoint_every = 500;  ///< steps between candidate snapshots; 0 = final only
  std::uint64_t seed = 1;
};

/// "AD-BCQ" (decomposed, augmented, relu-mlp mixer) and "BCQ" (flat).
BcqConfig offline_preset(const std::string& name);
void to_json(nlohmann::json& j, const BcqConfig& c);
void from_json(const nlohmann::json& j, BcqConfig& c);

/// Q network plus per-block generative heads G_k(a_k | s) (softmax of one
/// logit vector segment per block). The joint G is the product over blocks.
class BcqHeads {
 public:
  BcqHeads(const approx::QNetConfig& cfg, double threshold, Rng& rng);

  approx::DecomposedQNet q, q_target;
  approx::Mlp g;
  double threshold;
  /// Factored block sizes when the Q net runs over one flattened block;
  /// act() then returns factored actions. Empty otherwise.
  std::vector<int> env_blocks;

  const approx::QNetConfig& config() const { return q.config(); }
  /// log G_k per block, stacked like the Q heads (sum |A_k| x n).
  approx::Matrix log_g(const approx::Matrix& states) const;
  /// Joint actions admitted at each state: G(a|s) / max_a' G(a'|s) >= threshold.
  /// A state with nothing admitted gets every action; `fallbacks` counts those.
  std::vector<std::vector<mdp::JointAction>> candidates(const approx::Matrix& states,
                                                        std::size_t* fallbacks = nullptr) const;
  /// Best admitted action under the online Q at each state.
  std::vector<mdp::JointAction> act(const approx::Matrix& states) const;
  mdp::JointAction act(const std::vector<double>& state) const;
  /// Maps a flattened action back to the factored one (identity when not flat).
  mdp::JointAction unflatten(const mdp::JointAction& a) const;

  nlohmann::json to_json() const;
  static BcqHeads from_json(const nlohmann::json& j);

 private:
  BcqHeads() = default;
};

/// Dataset transitions from episode logs (state indices kept when present).
std::vector<TransitionRecord> episode_transitions(const std::vector<ope::EpisodeLog>& episodes);

struct BcqSnapshot {
  std::size_t step = 0;
  nlohmann::json heads;  ///< BcqHeads::to_json
};

struct BcqResult {
  std::unique_ptr<BcqHeads> heads;
  std::vector<BcqSnapshot> snapshots;
  std::vector<nlohmann::json> metrics;
  std::size_t fallbacks = 0;  ///< target states where the filter admitted nothing
};

/// Offline training on factored actions with the given block sizes.
/// `augmenter` may be null when augmentation is off; it is ignored when flat.
BcqResult ad_bcq_train(const std::vector<ope::EpisodeLog>& dataset, const std::vector<int>& block_sizes,
                       const BcqConfig& config, const Augmenter* augmenter,
                       const std::function<void(const nlohmann::json&)>& on_metrics = {});

/// Joint action count of a block list.
std::size_t joint_size(const std::vector<int>& block_sizes);
/// Row-major joint index of a factored action, and back.
std::size_t flatten_action(const mdp::JointAction& a, const std::vector<int>& block_sizes);
mdp::JointAction unflatten_action(std::size_t a, const std::vector<int>& block_sizes);

}  // namespace frl::agents
