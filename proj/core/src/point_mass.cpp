#include "frl/envs/point_mass.hpp"

#include <algorithm>
#include <cmath>

#include "frl/error.hpp"

namespace frl::envs {

namespace {

void check_bins(int n) {
  if (n < 3 || n % 2 == 0) throw DomainError("bins_per_axis must be odd and at least 3");
}

double axis_step(double& p, double& v, double force, const PointMassConfig& cfg) {
  v = cfg.damping * v + cfg.dt * cfg.force_scale * force;
  p += cfg.dt * v;
  if (p > cfg.box) {
    p = cfg.box;
    v = 0.0;
  } else if (p < -cfg.box) {
    p = -cfg.box;
    v = 0.0;
  }
  return p;
}

}  // namespace

double bin_force(int bin, int n) {
  check_bins(n);
  if (bin < 0 || bin >= n) throw DomainError("force bin " + std::to_string(bin) + " outside [0, " + std::to_string(n) + ")");
  const int half = (n - 1) / 2;
  // Grid point g_j = -1 + 2j/(n-1); bin 0 is the middle one.
  const int j = (bin + half) % n;
  return -1.0 + 2.0 * j / (n - 1);
}

int force_bin(double force, int n) {
  check_bins(n);
  const int half = (n - 1) / 2;
  const int j = static_cast<int>(std::lround((std::clamp(force, -1.0, 1.0) + 1.0) * (n - 1) / 2.0));
  return (j - half + n) % n;
}

double point_mass_reward(const PointMassState& s, const PointMassConfig& cfg) {
  const double dx = s.x - cfg.goal[0], dy = s.y - cfg.goal[1];
  const double d2 = dx * dx + dy * dy;
  const double inside = d2 <= cfg.goal_radius * cfg.goal_radius ? 1.0 : 0.0;
  return inside + cfg.shaping * std::exp(-d2 / (2.0 * 0.1 * 0.1));
}

PointMassStep point_mass_step(const PointMassState& s, int ix, int iy, const PointMassConfig& cfg, int step_index) {
  const double fx = bin_force(ix, cfg.bins_per_axis);
  const double fy = bin_force(iy, cfg.bins_per_axis);
  PointMassStep out;
  out.next = s;
  axis_step(out.next.x, out.next.vx, fx, cfg);
  axis_step(out.next.y, out.next.vy, fy, cfg);
  out.reward = point_mass_reward(out.next, cfg);
  out.done = step_index + 1 >= cfg.max_steps;
  return out;
}

PointMassEnv::PointMassEnv(PointMassConfig cfg) : cfg_(cfg) {
  check_bins(cfg_.bins_per_axis);
  if (!(cfg_.dt > 0.0) || cfg_.max_steps < 1 || !(cfg_.box > 0.0)) throw ConfigError("invalid point-mass constants");
}

std::vector<double> PointMassEnv::reset(Rng& rng) {
  PointMassState s;
  s.x = (2.0 * uniform01(rng) - 1.0) * cfg_.box;
  s.y = (2.0 * uniform01(rng) - 1.0) * cfg_.box;
  return reset(s);
}

std::vector<double> PointMassEnv::reset(const PointMassState& s) {
  state_ = s;
  t_ = 0;
  return state_.features();
}

PointMassStep PointMassEnv::step(const mdp::JointAction& a) {
  if (a.size() != 2) throw DomainError("point-mass actions have two blocks");
  auto r = point_mass_step(state_, a[0], a[1], cfg_, t_);
  state_ = r.next;
  ++t_;
  return r;
}

mdp::JointAction pd_controller(const PointMassState& s, const PointMassConfig& cfg, double kp, double kd) {
  const double fx = std::clamp(kp * (cfg.goal[0] - s.x) - kd * s.vx, -1.0, 1.0);
  const double fy = std::clamp(kp * (cfg.goal[1] - s.y) - kd * s.vy, -1.0, 1.0);
  return {force_bin(fx, cfg.bins_per_axis), force_bin(fy, cfg.bins_per_axis)};
}

std::vector<PointMassState> evaluation_starts(const PointMassConfig& cfg, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<PointMassState> out(n);
  for (auto& s : out) {
    s.x = (2.0 * uniform01(rng) - 1.0) * cfg.box;
    s.y = (2.0 * uniform01(rng) - 1.0) * cfg.box;
  }
  return out;
}

}  // namespace frl::envs
