#pragma once

// Central finite-difference check of DecomposedQNet gradients.

#include <algorithm>
#include <cmath>

#include "frl/approx/qnet.hpp"

namespace frl::testing {

/// Smallest |pre-activation| over ReLU units of a JSON-exported MLP; returns
/// the network output through `out`.
inline double relu_margin(const nlohmann::json& layers, approx::Matrix x, approx::Matrix* out = nullptr) {
  double margin = 1e300;
  for (const auto& l : layers) {
    const int in = l["in"], n = l["out"];
    const auto w = l["weight"].get<std::vector<double>>();
    const auto b = l["bias"].get<std::vector<double>>();
    approx::Matrix z(n, x.cols());
    for (int r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) {
        double acc = b[static_cast<std::size_t>(r)];
        for (int q = 0; q < in; ++q) acc += w[static_cast<std::size_t>(r * in + q)] * x(q, c);
        z(r, c) = acc;
      }
    }
    if (l["activation"] == "relu") {
      margin = std::min(margin, z.cwiseAbs().minCoeff());
      z = z.cwiseMax(0.0);
    }
    x = z;
  }
  if (out) *out = x;
  return margin;
}

struct GradCheckResult {
  double worst_rel = 0.0;
  std::size_t checked = 0;
  std::size_t params = 0;
};

/// Scalar loss L = sum_i c_i tilde_q_i + sum_i d_i . heads_i over a fixed
/// batch, so both the mixer path and the direct head path are exercised.
inline GradCheckResult grad_check(const approx::QNetConfig& cfg, std::uint64_t seed, int batch = 3, double h = 1e-5) {
  using namespace approx;
  Rng rng(seed);
  DecomposedQNet net(cfg, rng);
  // Zero biases put dead-layer successors exactly on a ReLU kink, where the
  // central difference is meaningless; nudge them off it.
  auto views = net.parameters();
  for (std::size_t i = 1; i < views.size(); i += 2) {
    for (std::size_t j = 0; j < views[i].size; ++j) views[i].value[j] = 0.2 * uniform01(rng) - 0.1;
  }
  // Redraw the batch until no ReLU sits within the step of its kink.
  const nlohmann::json exported = net;
  Matrix states(cfg.state_dim, batch);
  std::vector<JointAction> actions;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (Eigen::Index i = 0; i < states.size(); ++i) states(i) = 2.0 * uniform01(rng) - 1.0;
    actions.clear();
    for (int i = 0; i < batch; ++i) {
      JointAction a;
      for (int n : cfg.block_sizes) a.push_back(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n))));
      actions.push_back(a);
    }
    double margin = 1e300;
    if (cfg.shared) {
      Matrix feat;
      margin = relu_margin(exported["trunk"], states, &feat);
    } else {
      for (const auto& h : exported["heads"]) margin = std::min(margin, relu_margin(h, states));
    }
    if (exported.contains("mixer_net")) {
      const Matrix z = net.head_values(states).cwiseProduct(net.mask(actions));
      margin = std::min(margin, relu_margin(exported["mixer_net"], z));
    }
    if (margin >= 100.0 * h) break;
  }
  RowVector c(batch);
  for (int i = 0; i < batch; ++i) c(i) = 2.0 * uniform01(rng) - 1.0;
  Matrix d(net.total_actions(), batch);
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = 2.0 * uniform01(rng) - 1.0;

  auto loss = [&]() {
    const Matrix hv = net.head_values(states);
    return (net.mix_values(hv, actions).array() * c.array()).sum() + (hv.array() * d.array()).sum();
  };

  net.zero_grad();
  const Matrix hv = net.heads_forward(states);
  net.mix_forward(hv, actions);
  net.heads_backward(net.mix_backward(c) + d);

  GradCheckResult res;
  for (const auto& p : net.parameters()) {
    res.params += p.size;
    for (std::size_t j = 0; j < p.size; ++j) {
      const double orig = p.value[j];
      p.value[j] = orig + h;
      const double up = loss();
      p.value[j] = orig - h;
      const double down = loss();
      p.value[j] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double g = p.grad[j];
      const double scale = std::max({std::abs(fd), std::abs(g), 1e-6});
      res.worst_rel = std::max(res.worst_rel, std::abs(fd - g) / scale);
      ++res.checked;
    }
  }
  return res;
}

/// Small random configuration (<= ~200 parameters) cycling through mixers.
inline approx::QNetConfig small_config(std::uint64_t i) {
  approx::QNetConfig c;
  Rng rng(1000 + i);
  c.state_dim = 2 + static_cast<int>(uniform_index(rng, 2));
  c.block_sizes.clear();
  const int k = 1 + static_cast<int>(uniform_index(rng, 3));
  for (int b = 0; b < k; ++b) c.block_sizes.push_back(2 + static_cast<int>(uniform_index(rng, 2)));
  c.hidden = {3 + static_cast<int>(uniform_index(rng, 3))};
  if (uniform_index(rng, 2)) c.hidden.push_back(3);
  c.shared = (i / 3) % 2 == 0;
  c.mixer = static_cast<approx::MixerKind>(i % 3);
  c.mixer_hidden = 3;
  c.mixer_layers = 3;
  return c;
}

}  // namespace frl::testing
