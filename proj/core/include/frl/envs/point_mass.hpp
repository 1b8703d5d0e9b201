#pragma once

#include <array>
#include <vector>

#include "frl/factored_mdp.hpp"
#include "frl/rng.hpp"

namespace frl::envs {

/// Position (x, y) and velocity (vx, vy).
struct PointMassState {
  double x = 0.0, y = 0.0, vx = 0.0, vy = 0.0;
  std::vector<double> features() const { return {x, y, vx, vy}; }
  friend bool operator==(const PointMassState&, const PointMassState&) = default;
};

struct PointMassConfig {
  int bins_per_axis = 9;
  double dt = 0.02;
  double damping = 0.95;
  double force_scale = 1.0;
  double box = 0.3;
  std::array<double, 2> goal{0.1, 0.1};
  double goal_radius = 0.05;
  double shaping = 0.1;       ///< weight of the exp(-d^2 / (2 * 0.1^2)) bonus
  int max_steps = 1000;
};

struct PointMassStep {
  PointMassState next;
  double reward = 0.0;
  bool done = false;  ///< true only when the step cap is reached
};

/// Force in [-1, 1] for a bin. Bin 0 is zero force (the no-op); bins
/// 1..(n-1)/2 are the positive grid points in increasing order, the rest the
/// negative ones from -1 upward. Throws DomainError when out of range or n is
/// even or < 3.
double bin_force(int bin, int bins_per_axis);
/// Inverse of bin_force on grid points.
int force_bin(double force, int bins_per_axis);

/// One semi-implicit Euler step: v' = damping v + dt force_scale f, p' = p + dt v',
/// then p' is clamped to the box and that axis' velocity zeroed on contact.
PointMassStep point_mass_step(const PointMassState& s, int ix, int iy, const PointMassConfig& cfg, int step_index = 0);

double point_mass_reward(const PointMassState& s, const PointMassConfig& cfg);

/// Episodic wrapper: random start in the box at rest, fixed goal.
class PointMassEnv {
 public:
  explicit PointMassEnv(PointMassConfig cfg = {});
  const PointMassConfig& config() const { return cfg_; }

  std::vector<double> reset(Rng& rng);
  std::vector<double> reset(const PointMassState& s);
  PointMassStep step(const mdp::JointAction& a);
  const PointMassState& state() const { return state_; }

  static constexpr int state_dim() { return 4; }
  std::vector<int> block_sizes() const { return {cfg_.bins_per_axis, cfg_.bins_per_axis}; }
  /// State dimensions each block drives: x block -> {x, vx}, y block -> {y, vy}.
  static std::vector<std::vector<int>> eff_dims() { return {{0, 2}, {1, 3}}; }

 private:
  PointMassConfig cfg_;
  PointMassState state_;
  int t_ = 0;
};

/// Saturated PD controller snapped to the action grid; the reference policy
/// for return thresholds.
mdp::JointAction pd_controller(const PointMassState& s, const PointMassConfig& cfg, double kp = 40.0, double kd = 8.0);

/// Mean undiscounted return over `starts`, calling `policy` on feature vectors.
template <class Policy>
double point_mass_return(const PointMassConfig& cfg, const std::vector<PointMassState>& starts, Policy&& policy) {
  double total = 0.0;
  PointMassEnv env(cfg);
  for (const auto& s0 : starts) {
    auto obs = env.reset(s0);
    for (;;) {
      const auto r = env.step(policy(obs));
      total += r.reward;
      obs = r.next.features();
      if (r.done) break;
    }
  }
  return starts.empty() ? 0.0 : total / static_cast<double>(starts.size());
}

/// Deterministic start states for evaluation.
std::vector<PointMassState> evaluation_starts(const PointMassConfig& cfg, std::size_t n, std::uint64_t seed);

}  // namespace frl::envs
