#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frl/agents/environment.hpp"
#include "frl/agents/models.hpp"
#include "frl/approx/checkpoint.hpp"
#include "frl/approx/optimizer.hpp"
#include "frl/approx/qnet.hpp"

namespace frl::agents {

struct AdDqnConfig {
  std::string preset = "AD-DQN-2y";
  /// state_dim and block_sizes are taken from the environment.
  approx::QNetConfig net;
  bool flat = false;          ///< train over the flattened joint action space
  bool augmentation = true;
  /// Switch augmentation off for good once the moving average of evaluation
  /// returns reaches this value (scaled by mode_switch_scale).
  std::optional<double> mode_switch_return;
  double mode_switch_scale = 1.0;
  std::size_t mode_switch_window = 3;
  double discount = 0.99;
  std::size_t episodes = 500;
  std::size_t batch = 128;
  std::size_t buffer_capacity = 100'000;
  std::size_t learning_starts = 20;   ///< episodes of pure collection
  std::size_t train_every = 1;        ///< env steps per update
  std::size_t target_period = 100;    ///< env steps between target updates
  double target_tau = 1.0;
  double epsilon_start = 1.0;
  double epsilon_end = 0.1;
  double epsilon_fraction = 0.5;      ///< of the episode budget
  double projected_p = 0.1;
  approx::OptimizerConfig opt{approx::OptimizerKind::adam, 1e-4};
  ModelConfig model;
  std::size_t eval_every = 10;        ///< episodes; 0 disables
  std::size_t eval_episodes = 10;
  std::optional<double> success_return;  ///< records episodes-to-threshold
  bool stop_on_success = false;
  std::size_t checkpoint_every = 0;   ///< episodes; 0 disables
  std::uint64_t seed = 1;
};

/// Table 1 rows (DECQN, DECQN-y, AD-DQN-1y, -1n, -2y, -2n, -3n, AD-DQN-4)
/// plus DQN, the flat joint-action baseline. Throws ConfigError otherwise.
AdDqnConfig online_preset(const std::string& name);
std::vector<std::string> online_preset_names();

void to_json(nlohmann::json& j, const AdDqnConfig& c);
/// Overrides fields of `c`; rejects unknown keys.
void from_json(const nlohmann::json& j, AdDqnConfig& c);

struct TrainHooks {
  std::function<void(const nlohmann::json&)> on_metrics;
  std::function<void(std::size_t episode, const approx::Checkpoint&)> on_checkpoint;
  std::function<void(std::size_t update, double loss)> on_update;
};

struct AdDqnResult {
  approx::DecomposedQNet net;
  std::vector<nlohmann::json> metrics;
  std::optional<std::size_t> episodes_to_success;
  std::size_t episodes_run = 0;
  std::size_t updates = 0;
  std::vector<std::string> warnings;
};

/// Online training loop. Deterministic in config.seed.
AdDqnResult ad_dqn_train(const Environment& env, const AdDqnConfig& config, const TrainHooks& hooks = {});

/// Mean greedy return over `episodes` resets drawn from fixed per-episode seeds.
double evaluate_greedy(const approx::DecomposedQNet& net, const Environment& env, std::size_t episodes,
                       std::uint64_t seed);

/// RNG stream tags used by the trainers.
enum Stream : std::uint64_t { kInit = 0, kEnv = 1, kExplore = 2, kReplay = 3, kAugment = 4, kModel = 5, kEval = 1000 };

}  // namespace frl::agents
