#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "frl/approx/mlp.hpp"

namespace frl::approx {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  ///< decoupled, applied as p -= lr * wd * p
};

/// Partial objects override the defaults; unknown keys throw ConfigError.
void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(const OptimizerConfig& config) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }
  std::size_t steps() const { return steps_; }

  /// One update from the accumulated gradients. Throws NumericError (and
  /// leaves every parameter untouched) if any gradient is not finite.
  void step(const std::vector<ParamView>& params);

  friend void to_json(nlohmann::json& j, const Optimizer& o);
  friend void from_json(const nlohmann::json& j, Optimizer& o);

 private:
  OptimizerConfig config_;
  std::size_t steps_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace frl::approx
