#include "frl/agents/action_selection.hpp"

#include <algorithm>

namespace frl::agents {

mdp::JointAction greedy_action(const approx::DecomposedQNet& net, const std::vector<double>& state) {
  const auto s = Eigen::Map<const approx::Vector>(state.data(), static_cast<Eigen::Index>(state.size()));
  return net.greedy(net.head_values(s)).front();
}

Selection select_action(const approx::DecomposedQNet& net, const std::vector<double>& state, double epsilon, double p,
                        Rng& rng) {
  Selection out;
  const auto& sizes = net.config().block_sizes;
  if (uniform01(rng) < epsilon) {
    out.explored = true;
    if (p > 0.0 && uniform01(rng) < p) {
      const auto k = static_cast<std::size_t>(uniform_index(rng, sizes.size()));
      out.action.assign(sizes.size(), 0);
      out.action[k] = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(sizes[k])));
      out.block_tag = k;
    } else {
      for (int n : sizes) out.action.push_back(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n))));
    }
    return out;
  }
  out.action = greedy_action(net, state);
  return out;
}

double linear_schedule(double start, double end, double fraction, std::size_t t, std::size_t total) {
  const double horizon = fraction * static_cast<double>(total);
  if (horizon <= 0.0) return end;
  const double x = std::min(1.0, static_cast<double>(t) / horizon);
  return start + (end - start) * x;
}

}  // namespace frl::agents
