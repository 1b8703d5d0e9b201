#include "frl/agents/models.hpp"

#include <cmath>

#include "frl/envs/offline.hpp"
#include "frl/error.hpp"
#include "frl/tabular.hpp"

namespace frl::agents {

using approx::Matrix;
using approx::RowVector;

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"hidden", c.hidden},
       {"dynamics_layers", c.dynamics_layers},
       {"dynamics_relu", c.dynamics_relu},
       {"reward_layers", c.reward_layers},
       {"noise_variance", c.noise_variance},
       {"lr", c.opt.lr},
       {"batch", c.batch},
       {"steps", c.steps}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  for (const auto& [key, _] : j.items()) {
    static const std::vector<std::string> known{"hidden",         "dynamics_layers", "dynamics_relu", "reward_layers",
                                                "noise_variance", "lr",              "batch",         "steps"};
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ConfigError("unknown model key '" + key + "'");
  }
  c.hidden = j.value("hidden", c.hidden);
  c.dynamics_layers = j.value("dynamics_layers", c.dynamics_layers);
  c.dynamics_relu = j.value("dynamics_relu", c.dynamics_relu);
  c.reward_layers = j.value("reward_layers", c.reward_layers);
  c.noise_variance = j.value("noise_variance", c.noise_variance);
  c.opt.lr = j.value("lr", c.opt.lr);
  c.batch = j.value("batch", c.batch);
  c.steps = j.value("steps", c.steps);
}

namespace {

approx::Mlp make_mlp(int in, int hidden, int out, int layers, approx::Activation act, Rng& rng) {
  if (layers < 1) throw ConfigError("model depth must be positive");
  std::vector<int> sizes{in};
  for (int i = 0; i + 1 < layers; ++i) sizes.push_back(hidden);
  sizes.push_back(out);
  std::vector<approx::Activation> acts(static_cast<std::size_t>(layers), act);
  acts.back() = approx::Activation::identity;
  return approx::Mlp(sizes, acts, rng);
}

/// Mean squared error over all entries; gradient w.r.t. pred.
double mse(const Matrix& pred, const Matrix& target, Matrix& grad) {
  const Matrix d = pred - target;
  const double n = static_cast<double>(d.cols());
  grad = 2.0 * d / n;
  return d.squaredNorm() / n;
}

}  // namespace

DynamicsModel::DynamicsModel(int state_dim, std::vector<int> block_sizes, std::vector<std::vector<int>> eff_dims,
                             const ModelConfig& cfg, Rng& rng)
    : state_dim_(state_dim), sizes_(std::move(block_sizes)), eff_(std::move(eff_dims)), cfg_(cfg),
      reward_opt_(cfg.opt) {
  if (eff_.size() != sizes_.size()) throw ShapeError("one Eff dimension list per block is required");
  const auto act = cfg.dynamics_relu ? approx::Activation::relu : approx::Activation::identity;
  for (std::size_t k = 0; k < sizes_.size(); ++k) {
    if (eff_[k].empty()) throw ShapeError("block " + std::to_string(k) + " drives no state dimension");
    blocks_.push_back(make_mlp(state_dim_ + sizes_[k], cfg.hidden, static_cast<int>(eff_[k].size()),
                               cfg.dynamics_layers, act, rng));
    block_opt_.emplace_back(cfg.opt);
  }
  int total = 0;
  for (int n : sizes_) total += n;
  reward_ = make_mlp(2 * state_dim_ + total, cfg.hidden, 1, cfg.reward_layers, approx::Activation::relu, rng);
  trained_.assign(sizes_.size(), 0);
}

Matrix DynamicsModel::block_input(std::size_t k, const Matrix& states, const std::vector<int>& actions) const {
  Matrix x = Matrix::Zero(state_dim_ + sizes_[k], states.cols());
  x.topRows(state_dim_) = states;
  for (Eigen::Index i = 0; i < states.cols(); ++i) x(state_dim_ + actions[static_cast<std::size_t>(i)], i) = 1.0;
  return x;
}

Matrix DynamicsModel::reward_input(const Matrix& states, const std::vector<JointAction>& actions,
                                   const Matrix& next_states) const {
  int total = 0;
  for (int n : sizes_) total += n;
  Matrix x = Matrix::Zero(2 * state_dim_ + total, states.cols());
  x.topRows(state_dim_) = states;
  x.middleRows(state_dim_, state_dim_) = next_states;
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    int off = 2 * state_dim_;
    for (std::size_t k = 0; k < sizes_.size(); ++k) {
      x(off + actions[static_cast<std::size_t>(i)][k], i) = 1.0;
      off += sizes_[k];
    }
  }
  return x;
}

std::optional<double> DynamicsModel::fit_block(std::size_t k, const RingBuffer& data, Rng& rng) {
  if (data.empty()) return std::nullopt;
  double total = 0.0;
  for (std::size_t step = 0; step < cfg_.steps; ++step) {
    const auto b = make_batch(data, data.sample_indices(cfg_.batch, rng));
    std::vector<int> a;
    for (const auto& ja : b.actions) a.push_back(ja[k]);
    Matrix target(static_cast<Eigen::Index>(eff_[k].size()), b.states.cols());
    for (std::size_t d = 0; d < eff_[k].size(); ++d) {
      target.row(static_cast<Eigen::Index>(d)) = b.next_states.row(eff_[k][d]) - b.states.row(eff_[k][d]);
    }
    auto& net = blocks_[k];
    net.zero_grad();
    Matrix grad;
    total += mse(net.forward(block_input(k, b.states, a)), target, grad);
    net.backward(grad);
    std::vector<approx::ParamView> params;
    net.append_params(params);
    block_opt_[k].step(params);
  }
  trained_[k] = 1;
  return total / static_cast<double>(cfg_.steps);
}

std::optional<double> DynamicsModel::fit_reward(const RingBuffer& data, Rng& rng) {
  if (data.empty()) return std::nullopt;
  double total = 0.0;
  for (std::size_t step = 0; step < cfg_.steps; ++step) {
    const auto b = make_batch(data, data.sample_indices(cfg_.batch, rng));
    reward_.zero_grad();
    Matrix grad;
    total += mse(reward_.forward(reward_input(b.states, b.actions, b.next_states)), b.rewards, grad);
    reward_.backward(grad);
    std::vector<approx::ParamView> params;
    reward_.append_params(params);
    reward_opt_.step(params);
  }
  reward_trained_ = true;
  return total / static_cast<double>(cfg_.steps);
}

Matrix DynamicsModel::predict_delta(std::size_t k, const Matrix& states, const std::vector<int>& actions) const {
  return blocks_[k].predict(block_input(k, states, actions));
}

RowVector DynamicsModel::predict_reward(const Matrix& states, const std::vector<JointAction>& actions,
                                        const Matrix& next_states) const {
  return reward_.predict(reward_input(states, actions, next_states));
}

nlohmann::json DynamicsModel::to_json() const {
  nlohmann::json j{{"blocks", blocks_}, {"reward", reward_}, {"config", cfg_}};
  return j;
}

JointAction project_action(const JointAction& a, std::size_t k) {
  if (k >= a.size()) throw DomainError("projection block out of range");
  JointAction out(a.size(), 0);
  out[k] = a[k];
  return out;
}

bool NeuralAugmenter::ready() const {
  for (std::size_t k = 0; k < model_.eff_dims().size(); ++k) {
    if (!model_.block_trained(k)) return false;
  }
  return model_.reward_trained();
}

Batch NeuralAugmenter::augment(const Batch& b, std::size_t k, Rng& rng) const {
  if (!ready()) throw StateError("augmentation requested before the dynamics and reward models were trained");
  Batch out = b;
  out.block = k;
  for (auto& a : out.actions) a = project_action(a, k);
  // Dimensions outside every Eff set have no model and are carried over.
  out.next_states = b.states;
  const auto n = b.states.cols();
  std::normal_distribution<double> noise(0.0, std::sqrt(model_.config().noise_variance));
  std::vector<double> scale(static_cast<std::size_t>(n));
  for (auto& s : scale) s = 1.0 + (model_.config().noise_variance > 0.0 ? noise(rng) : 0.0);
  for (std::size_t j = 0; j < model_.eff_dims().size(); ++j) {
    std::vector<int> aj;
    for (const auto& a : out.actions) aj.push_back(a[j]);
    const Matrix delta = model_.predict_delta(j, b.states, aj);
    const auto& dims = model_.eff_dims()[j];
    for (std::size_t d = 0; d < dims.size(); ++d) {
      for (Eigen::Index i = 0; i < n; ++i) {
        out.next_states(dims[d], i) += delta(static_cast<Eigen::Index>(d), i) * scale[static_cast<std::size_t>(i)];
      }
    }
  }
  out.rewards = model_.predict_reward(b.states, out.actions, out.next_states);
  out.dones.setZero();
  for (auto& s : out.next_state_index) s.reset();
  return out;
}

void NeuralAugmenter::fit(const ReplayBuffers& buffers, Rng& rng, std::vector<std::string>* warnings) {
  losses_.clear();
  for (std::size_t k = 0; k < buffers.num_blocks(); ++k) {
    const auto loss = model_.fit_block(k, buffers.block(k), rng);
    if (!loss && warnings) warnings->push_back("D_" + std::to_string(k) + " is empty; dynamics training skipped");
    losses_.push_back(loss.value_or(-1.0));
  }
  const auto r = model_.fit_reward(buffers.global(), rng);
  if (!r && warnings) warnings->push_back("D is empty; reward training skipped");
  losses_.push_back(r.value_or(-1.0));
}

Batch TabularAugmenter::augment(const Batch& b, std::size_t k, Rng& rng) const {
  if (!ready()) throw StateError("tabular augmenter has no model");
  Batch out = b;
  out.block = k;
  const auto& m = *model_;
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (!b.state_index[i]) throw DataError("tabular augmentation needs state indices");
    const auto s = *b.state_index[i];
    const int ak = b.actions[i][k];
    const auto padded = mdp::pad_projected(m, k, ak);
    const auto sn = tabular::sample_next(m, s, padded, rng);
    out.actions[i] = project_action(b.actions[i], k);
    const auto c = static_cast<Eigen::Index>(i);
    const auto f = envs::one_hot_features(m, sn);
    out.next_states.col(c) = Eigen::Map<const approx::Vector>(f.data(), static_cast<Eigen::Index>(f.size()));
    out.rewards(c) = m.reward(s, padded, sn);
    out.dones(c) = m.is_terminal(sn) ? 1.0 : 0.0;
    out.next_state_index[i] = sn;
  }
  return out;
}

}  // namespace frl::agents
