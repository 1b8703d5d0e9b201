#include "frl/approx/optimizer.hpp"

#include <cmath>

#include "frl/error.hpp"

namespace frl::approx {

void Optimizer::step(const std::vector<ParamView>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size; ++j) {
      if (!std::isfinite(params[i].grad[j])) {
        throw NumericError("non-finite gradient in parameter block " + std::to_string(i) + "; step refused");
      }
    }
  }
  if (config_.kind == OptimizerKind::adam) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size, 0.0);
        v_.emplace_back(p.size, 0.0);
      }
    }
    if (m_.size() != params.size()) throw ShapeError("optimizer state does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (m_[i].size() != params[i].size) throw ShapeError("optimizer moment shape mismatch");
    }
  }
  ++steps_;
  const double lr = config_.lr;
  const double wd = config_.weight_decay;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* p = params[i].value;
    const double* g = params[i].grad;
    for (std::size_t j = 0; j < params[i].size; ++j) {
      if (wd != 0.0) p[j] -= lr * wd * p[j];
      if (config_.kind == OptimizerKind::sgd) {
        p[j] -= lr * g[j];
        continue;
      }
      double& m = m_[i][j];
      double& v = v_[i][j];
      m = config_.beta1 * m + (1.0 - config_.beta1) * g[j];
      v = config_.beta2 * v + (1.0 - config_.beta2) * g[j] * g[j];
      p[j] -= lr * (m / bc1) / (std::sqrt(v / bc2) + config_.eps);
    }
  }
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{{"kind", c.kind == OptimizerKind::adam ? "adam" : "sgd"},
                     {"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"weight_decay", c.weight_decay}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  for (const auto& [key, _] : j.items()) {
    if (key != "kind" && key != "lr" && key != "beta1" && key != "beta2" && key != "eps" && key != "weight_decay") {
      throw ConfigError("unknown optimizer key '" + key + "'");
    }
  }
  if (j.contains("kind")) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "adam" && kind != "sgd") throw ConfigError("unknown optimizer kind '" + kind + "'");
    c.kind = kind == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
  }
  c.lr = j.value("lr", c.lr);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
}

void to_json(nlohmann::json& j, const Optimizer& o) {
  const auto& c = o.config_;
  j = nlohmann::json{{"kind", c.kind == OptimizerKind::adam ? "adam" : "sgd"},
                     {"lr", c.lr},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"weight_decay", c.weight_decay},
                     {"steps", o.steps_},
                     {"m", o.m_},
                     {"v", o.v_}};
}

void from_json(const nlohmann::json& j, Optimizer& o) {
  OptimizerConfig c;
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "adam" && kind != "sgd") throw ConfigError("unknown optimizer kind '" + kind + "'");
  c.kind = kind == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
  c.lr = j.at("lr").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  o = Optimizer(c);
  o.steps_ = j.at("steps").get<std::size_t>();
  o.m_ = j.at("m").get<std::vector<std::vector<double>>>();
  o.v_ = j.at("v").get<std::vector<std::vector<double>>>();
}

}  // namespace frl::approx
