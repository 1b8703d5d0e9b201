#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <vector>

#include "frl/rng.hpp"

namespace frl::approx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class Activation { identity, relu };

/// A contiguous block of parameters and its gradient accumulator.
struct ParamView {
  double* value = nullptr;
  double* grad = nullptr;
  std::size_t size = 0;
};

struct Layer {
  Matrix weight;  ///< out x in
  Vector bias;
  Activation activation = Activation::identity;
  Matrix grad_weight;
  Vector grad_bias;
};

/// Fully connected network over column batches (one sample per column).
class Mlp {
 public:
  Mlp() = default;
  /// sizes = {in, h1, ..., out}; one activation per layer. Glorot-uniform
  /// weights, zero biases.
  Mlp(const std::vector<int>& sizes, const std::vector<Activation>& activations, Rng& rng);

  int input_dim() const;
  int output_dim() const;
  std::size_t num_parameters() const;
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Records activations for a later backward().
  const Matrix& forward(const Matrix& x);
  /// Stateless evaluation.
  Matrix predict(const Matrix& x) const;
  /// Accumulates parameter gradients for the recorded batch and returns the
  /// adjoint of the input. Throws StateError without a recorded forward.
  Matrix backward(const Matrix& d_out);

  void zero_grad();
  void append_params(std::vector<ParamView>& out);

  friend void to_json(nlohmann::json& j, const Mlp& m);
  friend void from_json(const nlohmann::json& j, Mlp& m);

 private:
  std::vector<Layer> layers_;
  std::vector<Matrix> inputs_;  // input of each layer
  std::vector<Matrix> pre_;     // pre-activation of each layer
  Matrix output_;
  bool recorded_ = false;
};

/// Mean Huber loss (delta = 1) and its gradient w.r.t. predictions.
double huber_loss(const RowVector& pred, const RowVector& target, RowVector* grad);

}  // namespace frl::approx
