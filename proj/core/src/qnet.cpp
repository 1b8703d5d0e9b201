#include "frl/approx/qnet.hpp"

#include "frl/error.hpp"

namespace frl::approx {

std::string to_string(MixerKind k) {
  switch (k) {
    case MixerKind::average: return "average";
    case MixerKind::linear_2layer: return "linear-2-layer";
    case MixerKind::relu_mlp: return "relu-mlp";
  }
  return "average";
}

MixerKind mixer_from_string(const std::string& s) {
  if (s == "average") return MixerKind::average;
  if (s == "linear-2-layer") return MixerKind::linear_2layer;
  if (s == "relu-mlp") return MixerKind::relu_mlp;
  throw ConfigError("unknown mixer kind '" + s + "' (expected average, linear-2-layer or relu-mlp)");
}

DecomposedQNet::DecomposedQNet(const QNetConfig& config, Rng& rng) : config_(config) {
  if (config.block_sizes.empty()) throw ConfigError("a Q-network needs at least one action block");
  if (config.hidden.empty()) throw ConfigError("a Q-network needs at least one hidden layer");
  for (int n : config.block_sizes) {
    if (n < 1) throw ConfigError("action blocks must be non-empty");
    offsets_.push_back(offsets_.back() + n);
  }
  std::vector<int> sizes{config.state_dim};
  sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
  if (config.shared) {
    trunk_.emplace(sizes, std::vector<Activation>(config.hidden.size(), Activation::relu), rng);
    head_layer_.emplace(std::vector<int>{config.hidden.back(), total_actions()},
                        std::vector<Activation>{Activation::identity}, rng);
  } else {
    for (int n : config.block_sizes) {
      auto s = sizes;
      s.push_back(n);
      std::vector<Activation> acts(config.hidden.size(), Activation::relu);
      acts.push_back(Activation::identity);
      heads_.emplace_back(s, acts, rng);
    }
  }
  if (config.mixer == MixerKind::linear_2layer) {
    mixer_.emplace(std::vector<int>{total_actions(), config.mixer_hidden, 1},
                   std::vector<Activation>{Activation::identity, Activation::identity}, rng);
  } else if (config.mixer == MixerKind::relu_mlp) {
    if (config.mixer_layers < 2) throw ConfigError("relu-mlp mixer needs at least two layers");
    std::vector<int> ms{total_actions()};
    std::vector<Activation> acts;
    for (int i = 0; i + 1 < config.mixer_layers; ++i) {
      ms.push_back(config.mixer_hidden);
      acts.push_back(Activation::relu);
    }
    ms.push_back(1);
    acts.push_back(Activation::identity);
    mixer_.emplace(ms, acts, rng);
  }
}

std::size_t DecomposedQNet::num_parameters() const {
  std::size_t n = 0;
  if (trunk_) n += trunk_->num_parameters() + head_layer_->num_parameters();
  for (const auto& h : heads_) n += h.num_parameters();
  if (mixer_) n += mixer_->num_parameters();
  return n;
}

const Matrix& DecomposedQNet::heads_forward(const Matrix& states) {
  if (states.rows() != config_.state_dim) {
    throw ShapeError("state has dimension " + std::to_string(states.rows()) + ", expected " +
                     std::to_string(config_.state_dim));
  }
  if (trunk_) {
    heads_out_ = head_layer_->forward(trunk_->forward(states));
  } else {
    heads_out_.resize(total_actions(), states.cols());
    for (std::size_t k = 0; k < heads_.size(); ++k) {
      heads_out_.middleRows(offsets_[k], config_.block_sizes[k]) = heads_[k].forward(states);
    }
  }
  heads_recorded_ = true;
  return heads_out_;
}

void DecomposedQNet::heads_backward(const Matrix& d_heads) {
  if (!heads_recorded_) throw StateError("heads_backward called without heads_forward");
  if (trunk_) {
    trunk_->backward(head_layer_->backward(d_heads));
  } else {
    for (std::size_t k = 0; k < heads_.size(); ++k) {
      heads_[k].backward(d_heads.middleRows(offsets_[k], config_.block_sizes[k]));
    }
  }
  heads_recorded_ = false;
}

Matrix DecomposedQNet::head_values(const Matrix& states) const {
  if (states.rows() != config_.state_dim) throw ShapeError("state dimension mismatch");
  if (trunk_) return head_layer_->predict(trunk_->predict(states));
  Matrix out(total_actions(), states.cols());
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    out.middleRows(offsets_[k], config_.block_sizes[k]) = heads_[k].predict(states);
  }
  return out;
}

void DecomposedQNet::check_actions(const std::vector<JointAction>& actions, Eigen::Index batch) const {
  if (static_cast<Eigen::Index>(actions.size()) != batch) throw ShapeError("action batch does not match head batch");
  for (const auto& a : actions) {
    if (a.size() != num_blocks()) throw ShapeError("joint action has the wrong number of blocks");
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k] < 0 || a[k] >= config_.block_sizes[k]) {
        throw DomainError("action " + std::to_string(a[k]) + " out of range for block " + std::to_string(k));
      }
    }
  }
}

Matrix DecomposedQNet::mask(const std::vector<JointAction>& actions) const {
  Matrix m = Matrix::Zero(total_actions(), static_cast<Eigen::Index>(actions.size()));
  for (std::size_t i = 0; i < actions.size(); ++i) {
    for (std::size_t k = 0; k < num_blocks(); ++k) m(offsets_[k] + actions[i][k], static_cast<Eigen::Index>(i)) = 1.0;
  }
  return m;
}

RowVector DecomposedQNet::mix_forward(const Matrix& heads, const std::vector<JointAction>& actions) {
  check_actions(actions, heads.cols());
  mask_ = mask(actions);
  const Matrix z = heads.cwiseProduct(mask_);
  mix_recorded_ = true;
  if (!mixer_) return z.colwise().sum() / static_cast<double>(num_blocks());
  return mixer_->forward(z);
}

Matrix DecomposedQNet::mix_backward(const RowVector& d_q) {
  if (!mix_recorded_) throw StateError("mix_backward called without mix_forward");
  if (d_q.size() != mask_.cols()) throw ShapeError("mixer adjoint shape mismatch");
  mix_recorded_ = false;
  if (!mixer_) return (mask_.array().rowwise() * d_q.array()).matrix() / static_cast<double>(num_blocks());
  return mixer_->backward(d_q).cwiseProduct(mask_);
}

RowVector DecomposedQNet::mix_values(const Matrix& heads, const std::vector<JointAction>& actions) const {
  check_actions(actions, heads.cols());
  const Matrix z = heads.cwiseProduct(mask(actions));
  if (!mixer_) return z.colwise().sum() / static_cast<double>(num_blocks());
  return mixer_->predict(z);
}

std::vector<JointAction> DecomposedQNet::greedy(const Matrix& heads, int passes) const {
  const auto batch = heads.cols();
  std::vector<JointAction> best(static_cast<std::size_t>(batch), JointAction(num_blocks(), 0));
  for (Eigen::Index i = 0; i < batch; ++i) {
    for (std::size_t k = 0; k < num_blocks(); ++k) {
      Eigen::Index arg = 0;
      heads.col(i).segment(offsets_[k], config_.block_sizes[k]).maxCoeff(&arg);
      best[static_cast<std::size_t>(i)][k] = static_cast<int>(arg);
    }
  }
  if (!mixer_) return best;
  for (int pass = 0; pass < passes; ++pass) {
    for (std::size_t k = 0; k < num_blocks(); ++k) {
      const int n = config_.block_sizes[k];
      // Evaluate every candidate a_k for every column in one mixer call.
      std::vector<JointAction> cand;
      cand.reserve(static_cast<std::size_t>(batch * n));
      Matrix rep(heads.rows(), batch * n);
      for (Eigen::Index i = 0; i < batch; ++i) {
        for (int a = 0; a < n; ++a) {
          auto ja = best[static_cast<std::size_t>(i)];
          ja[k] = a;
          cand.push_back(std::move(ja));
          rep.col(i * n + a) = heads.col(i);
        }
      }
      const RowVector q = mix_values(rep, cand);
      for (Eigen::Index i = 0; i < batch; ++i) {
        Eigen::Index arg = 0;
        q.segment(i * n, n).maxCoeff(&arg);
        best[static_cast<std::size_t>(i)][k] = static_cast<int>(arg);
      }
    }
  }
  return best;
}

DecomposedQNet::Output DecomposedQNet::forward(const Vector& state, const JointAction& action) const {
  const Matrix h = head_values(state);
  Output out;
  out.q = mix_values(h, {action})(0);
  for (std::size_t k = 0; k < num_blocks(); ++k) out.heads.push_back(h(offsets_[k] + action[k], 0));
  return out;
}

void DecomposedQNet::zero_grad() {
  if (trunk_) {
    trunk_->zero_grad();
    head_layer_->zero_grad();
  }
  for (auto& h : heads_) h.zero_grad();
  if (mixer_) mixer_->zero_grad();
}

std::vector<ParamView> DecomposedQNet::head_parameters() {
  std::vector<ParamView> out;
  if (trunk_) {
    trunk_->append_params(out);
    head_layer_->append_params(out);
  }
  for (auto& h : heads_) h.append_params(out);
  return out;
}

std::vector<ParamView> DecomposedQNet::parameters() {
  auto out = head_parameters();
  if (mixer_) mixer_->append_params(out);
  return out;
}

void to_json(nlohmann::json& j, const DecomposedQNet& n) {
  const auto& c = n.config_;
  j = nlohmann::json{{"state_dim", c.state_dim},       {"block_sizes", c.block_sizes},
                     {"hidden", c.hidden},             {"shared", c.shared},
                     {"mixer", to_string(c.mixer)},    {"mixer_hidden", c.mixer_hidden},
                     {"mixer_layers", c.mixer_layers}};
  if (n.trunk_) {
    j["trunk"] = *n.trunk_;
    j["head_layer"] = *n.head_layer_;
  } else {
    j["heads"] = n.heads_;
  }
  if (n.mixer_) j["mixer_net"] = *n.mixer_;
}

void from_json(const nlohmann::json& j, DecomposedQNet& n) {
  QNetConfig c;
  c.state_dim = j.at("state_dim").get<int>();
  c.block_sizes = j.at("block_sizes").get<std::vector<int>>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.shared = j.at("shared").get<bool>();
  c.mixer = mixer_from_string(j.at("mixer").get<std::string>());
  c.mixer_hidden = j.at("mixer_hidden").get<int>();
  c.mixer_layers = j.at("mixer_layers").get<int>();
  Rng rng(0);
  n = DecomposedQNet(c, rng);
  if (n.trunk_) {
    *n.trunk_ = j.at("trunk").get<Mlp>();
    *n.head_layer_ = j.at("head_layer").get<Mlp>();
  } else {
    n.heads_ = j.at("heads").get<std::vector<Mlp>>();
  }
  if (n.mixer_) *n.mixer_ = j.at("mixer_net").get<Mlp>();
  // Shapes must agree with the declared configuration.
  Rng check_rng(0);
  DecomposedQNet fresh(c, check_rng);
  auto a = n.parameters();
  auto b = fresh.parameters();
  if (a.size() != b.size()) throw ShapeError("checkpoint network does not match its configuration");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size != b[i].size) throw ShapeError("checkpoint network does not match its configuration");
  }
}

void target_update(std::vector<ParamView> target, std::vector<ParamView> online, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("target update rate must lie in [0, 1]");
  if (target.size() != online.size()) throw ShapeError("target and online networks differ in structure");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].size != online[i].size) throw ShapeError("target and online parameter shapes differ");
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    for (std::size_t j = 0; j < target[i].size; ++j) {
      target[i].value[j] = tau == 1.0 ? online[i].value[j] : tau * online[i].value[j] + (1.0 - tau) * target[i].value[j];
    }
  }
}

void target_update(DecomposedQNet& target, DecomposedQNet& online, double tau) {
  target_update(target.parameters(), online.parameters(), tau);
}

}  // namespace frl::approx
