#include "frl/approx/mlp.hpp"

#include <cmath>

#include "frl/error.hpp"

namespace frl::approx {

Mlp::Mlp(const std::vector<int>& sizes, const std::vector<Activation>& activations, Rng& rng) {
  if (sizes.size() < 2 || activations.size() != sizes.size() - 1) {
    throw ShapeError("an MLP needs one activation per layer and at least one layer");
  }
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const int in = sizes[i], out = sizes[i + 1];
    if (in < 1 || out < 1) throw ShapeError("MLP layer sizes must be positive");
    Layer l;
    const double limit = std::sqrt(6.0 / (in + out));
    l.weight.resize(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) l.weight(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
    }
    l.bias = Vector::Zero(out);
    l.activation = activations[i];
    l.grad_weight = Matrix::Zero(out, in);
    l.grad_bias = Vector::Zero(out);
    layers_.push_back(std::move(l));
  }
}

int Mlp::input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().weight.cols()); }
int Mlp::output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().weight.rows()); }

std::size_t Mlp::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

const Matrix& Mlp::forward(const Matrix& x) {
  if (x.rows() != input_dim()) {
    throw ShapeError("MLP input has " + std::to_string(x.rows()) + " rows, expected " + std::to_string(input_dim()));
  }
  inputs_.resize(layers_.size());
  pre_.resize(layers_.size());
  const Matrix* cur = &x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    inputs_[i] = *cur;
    pre_[i].noalias() = l.weight * inputs_[i];
    pre_[i].colwise() += l.bias;
    if (i + 1 < layers_.size()) {
      output_ = l.activation == Activation::relu ? Matrix(pre_[i].cwiseMax(0.0)) : pre_[i];
      cur = &output_;
    }
  }
  const auto& last = layers_.back();
  output_ = last.activation == Activation::relu ? Matrix(pre_.back().cwiseMax(0.0)) : pre_.back();
  recorded_ = true;
  return output_;
}

Matrix Mlp::predict(const Matrix& x) const {
  if (x.rows() != input_dim()) throw ShapeError("MLP input dimension mismatch");
  Matrix cur = x;
  for (const auto& l : layers_) {
    Matrix z = l.weight * cur;
    z.colwise() += l.bias;
    cur = l.activation == Activation::relu ? Matrix(z.cwiseMax(0.0)) : z;
  }
  return cur;
}

Matrix Mlp::backward(const Matrix& d_out) {
  if (!recorded_) throw StateError("backward called without a recorded forward pass");
  if (d_out.rows() != output_dim() || d_out.cols() != output_.cols()) throw ShapeError("MLP adjoint shape mismatch");
  Matrix d = d_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    auto& l = layers_[i];
    if (l.activation == Activation::relu) d = d.cwiseProduct((pre_[i].array() > 0.0).cast<double>().matrix());
    l.grad_weight.noalias() += d * inputs_[i].transpose();
    l.grad_bias += d.rowwise().sum();
    d = l.weight.transpose() * d;
  }
  recorded_ = false;
  return d;
}

void Mlp::zero_grad() {
  for (auto& l : layers_) {
    l.grad_weight.setZero();
    l.grad_bias.setZero();
  }
}

void Mlp::append_params(std::vector<ParamView>& out) {
  for (auto& l : layers_) {
    out.push_back({l.weight.data(), l.grad_weight.data(), static_cast<std::size_t>(l.weight.size())});
    out.push_back({l.bias.data(), l.grad_bias.data(), static_cast<std::size_t>(l.bias.size())});
  }
}

void to_json(nlohmann::json& j, const Mlp& m) {
  j = nlohmann::json::array();
  for (const auto& l : m.layers_) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    j.push_back({{"in", l.weight.cols()},
                 {"out", l.weight.rows()},
                 {"activation", l.activation == Activation::relu ? "relu" : "identity"},
                 {"weight", w},
                 {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
}

void from_json(const nlohmann::json& j, Mlp& m) {
  m = Mlp();
  for (const auto& jl : j) {
    Layer l;
    const auto in = jl.at("in").get<Eigen::Index>();
    const auto out = jl.at("out").get<Eigen::Index>();
    const auto w = jl.at("weight").get<std::vector<double>>();
    const auto b = jl.at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out) {
      throw ShapeError("checkpoint layer arrays do not match their declared shape");
    }
    l.weight.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) l.weight(r, c) = w[static_cast<std::size_t>(r * in + c)];
    }
    l.bias = Eigen::Map<const Vector>(b.data(), out);
    const auto act = jl.at("activation").get<std::string>();
    if (act != "relu" && act != "identity") throw ShapeError("unknown activation '" + act + "'");
    l.activation = act == "relu" ? Activation::relu : Activation::identity;
    l.grad_weight = Matrix::Zero(out, in);
    l.grad_bias = Vector::Zero(out);
    if (!m.layers_.empty() && m.layers_.back().weight.rows() != in) throw ShapeError("checkpoint layers do not chain");
    m.layers_.push_back(std::move(l));
  }
}

double huber_loss(const RowVector& pred, const RowVector& target, RowVector* grad) {
  if (pred.size() != target.size() || pred.size() == 0) throw ShapeError("loss needs equal, non-empty batches");
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  if (grad) grad->resize(pred.size());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double d = pred(i) - target(i);
    const double a = std::abs(d);
    loss += a <= 1.0 ? 0.5 * d * d : a - 0.5;
    if (grad) (*grad)(i) = (a <= 1.0 ? d : (d > 0 ? 1.0 : -1.0)) / n;
  }
  return loss / n;
}

}  // namespace frl::approx
