#pragma once

#include <optional>
#include <string>
#include <vector>

#include "frl/approx/mlp.hpp"
#include "frl/factored_mdp.hpp"

namespace frl::approx {

using mdp::JointAction;

enum class MixerKind {
  average,        ///< mean of the selected head values; no parameters
  linear_2layer,  ///< Linear -> Linear
  relu_mlp,       ///< Linear -> ReLU -> ... -> Linear
};

std::string to_string(MixerKind k);
MixerKind mixer_from_string(const std::string& s);

struct QNetConfig {
  int state_dim = 4;
  std::vector<int> block_sizes{9, 9};
  std::vector<int> hidden{512, 512};
  bool shared = true;
  MixerKind mixer = MixerKind::average;
  int mixer_hidden = 64;
  int mixer_layers = 3;  ///< relu_mlp depth (number of Linear layers)
  friend bool operator==(const QNetConfig&, const QNetConfig&) = default;
};

/// K per-block heads Q_k(s, .) and a mixer F over the one-hot-masked heads.
///
/// Training uses the split interface: heads_forward on a state batch,
/// mix_forward on those head values and a joint-action batch, then
/// mix_backward and heads_backward. Head outputs are stacked block-major:
/// rows [offset(k), offset(k) + |A_k|) belong to block k.
class DecomposedQNet {
 public:
  DecomposedQNet() = default;
  DecomposedQNet(const QNetConfig& config, Rng& rng);

  const QNetConfig& config() const { return config_; }
  std::size_t num_blocks() const { return config_.block_sizes.size(); }
  int total_actions() const { return offsets_.back(); }
  int offset(std::size_t k) const { return offsets_[k]; }
  std::size_t num_parameters() const;

  const Matrix& heads_forward(const Matrix& states);
  void heads_backward(const Matrix& d_heads);
  Matrix head_values(const Matrix& states) const;

  /// tilde-Q for each column; records the batch for mix_backward.
  RowVector mix_forward(const Matrix& heads, const std::vector<JointAction>& actions);
  /// Accumulates mixer gradients and returns the adjoint w.r.t. the heads.
  Matrix mix_backward(const RowVector& d_q);
  RowVector mix_values(const Matrix& heads, const std::vector<JointAction>& actions) const;

  /// Greedy joint action per column: per-head argmax, then `passes` rounds of
  /// per-block coordinate ascent on the mixer output (skipped for average).
  std::vector<JointAction> greedy(const Matrix& heads, int passes = 2) const;

  struct Output {
    double q = 0.0;
    std::vector<double> heads;  ///< Q_k(s, a_k)
  };
  Output forward(const Vector& state, const JointAction& action) const;

  void zero_grad();
  std::vector<ParamView> parameters();
  std::vector<ParamView> head_parameters();

  friend void to_json(nlohmann::json& j, const DecomposedQNet& n);
  friend void from_json(const nlohmann::json& j, DecomposedQNet& n);

  /// One-hot selection matrix (sum |A_k| x batch) for a batch of joint actions.
  Matrix mask(const std::vector<JointAction>& actions) const;

 private:
  void check_actions(const std::vector<JointAction>& actions, Eigen::Index batch) const;

  QNetConfig config_;
  std::vector<int> offsets_{0};
  std::optional<Mlp> trunk_;          // shared
  std::optional<Mlp> head_layer_;     // shared: hidden -> sum |A_k|
  std::vector<Mlp> heads_;            // not shared
  std::optional<Mlp> mixer_;          // absent for average
  Matrix heads_out_;
  Matrix mask_;
  bool heads_recorded_ = false;
  bool mix_recorded_ = false;
};

/// Overwrites (hard) or blends (Polyak) target parameters from online ones.
void target_update(DecomposedQNet& target, DecomposedQNet& online, double tau);
void target_update(std::vector<ParamView> target, std::vector<ParamView> online, double tau);

}  // namespace frl::approx
