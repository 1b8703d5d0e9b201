#pragma once

#include <memory>
#include <string>
#include <vector>

#include "frl/agents/replay.hpp"
#include "frl/approx/mlp.hpp"
#include "frl/approx/optimizer.hpp"
#include "frl/factored_mdp.hpp"

namespace frl::agents {

struct ModelConfig {
  int hidden = 64;
  int dynamics_layers = 3;           ///< linear layers, no activation by default
  bool dynamics_relu = false;
  int reward_layers = 4;             ///< ReLU MLP
  double noise_variance = 1e-4;      ///< multiplicative noise on predicted deltas
  approx::OptimizerConfig opt{approx::OptimizerKind::adam, 1e-3};
  std::size_t batch = 64;
  std::size_t steps = 50;            ///< gradient steps per fit() call
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Per-block delta models f_k(s, a_k) -> Delta s[eff_k] and a reward model
/// R(s, a, s') over one-hot actions.
class DynamicsModel {
 public:
  DynamicsModel(int state_dim, std::vector<int> block_sizes, std::vector<std::vector<int>> eff_dims,
                const ModelConfig& cfg, Rng& rng);

  /// Trains block k on D_k; returns the mean loss, or nullopt when D_k is empty.
  std::optional<double> fit_block(std::size_t k, const RingBuffer& data, Rng& rng);
  std::optional<double> fit_reward(const RingBuffer& data, Rng& rng);

  /// Predicted deltas for Eff(k) dims (|eff_k| x n).
  approx::Matrix predict_delta(std::size_t k, const approx::Matrix& states, const std::vector<int>& actions) const;
  approx::RowVector predict_reward(const approx::Matrix& states, const std::vector<JointAction>& actions,
                                   const approx::Matrix& next_states) const;

  bool block_trained(std::size_t k) const { return trained_[k] != 0; }
  bool reward_trained() const { return reward_trained_; }
  const std::vector<std::vector<int>>& eff_dims() const { return eff_; }
  const ModelConfig& config() const { return cfg_; }
  int state_dim() const { return state_dim_; }
  approx::Mlp& block_net(std::size_t k) { return blocks_.at(k); }
  approx::Mlp& reward_net() { return reward_; }

  nlohmann::json to_json() const;

 private:
  approx::Matrix block_input(std::size_t k, const approx::Matrix& states, const std::vector<int>& actions) const;
  approx::Matrix reward_input(const approx::Matrix& states, const std::vector<JointAction>& actions,
                              const approx::Matrix& next_states) const;

  int state_dim_;
  std::vector<int> sizes_;
  std::vector<std::vector<int>> eff_;
  ModelConfig cfg_;
  std::vector<approx::Mlp> blocks_;
  std::vector<approx::Optimizer> block_opt_;
  approx::Mlp reward_;
  approx::Optimizer reward_opt_;
  std::vector<char> trained_;
  bool reward_trained_ = false;
};

/// Produces B_k from B: actions projected to block k (others at no-op 0),
/// next states and rewards re-drawn under do(a_k).
class Augmenter {
 public:
  virtual ~Augmenter() = default;
  virtual bool ready() const = 0;
  /// Throws StateError when not ready.
  virtual Batch augment(const Batch& b, std::size_t k, Rng& rng) const = 0;
  /// Refits models from the buffers; appends human-readable warnings.
  virtual void fit(const ReplayBuffers&, Rng&, std::vector<std::string>*) {}
};

/// Projects a joint action onto block k: a_k kept, every other block at 0.
JointAction project_action(const JointAction& a, std::size_t k);

class NeuralAugmenter final : public Augmenter {
 public:
  explicit NeuralAugmenter(DynamicsModel model) : model_(std::move(model)) {}
  bool ready() const override;
  Batch augment(const Batch& b, std::size_t k, Rng& rng) const override;
  void fit(const ReplayBuffers& buffers, Rng& rng, std::vector<std::string>* warnings) override;
  const DynamicsModel& model() const { return model_; }
  DynamicsModel& model() { return model_; }
  /// Loss of the last fit, per block then reward; negative when skipped.
  const std::vector<double>& last_losses() const { return losses_; }

 private:
  DynamicsModel model_;
  std::vector<double> losses_;
};

/// Samples s~' from the projected transition of a (learned or exact) tabular
/// model and rewards from its reward tables. Needs state indices in batches.
class TabularAugmenter final : public Augmenter {
 public:
  explicit TabularAugmenter(std::shared_ptr<const mdp::FactoredMdp> model) : model_(std::move(model)) {}
  bool ready() const override { return model_ != nullptr; }
  Batch augment(const Batch& b, std::size_t k, Rng& rng) const override;
  const mdp::FactoredMdp& model() const { return *model_; }

 private:
  std::shared_ptr<const mdp::FactoredMdp> model_;
};

}  // namespace frl::agents
