#include "frl/agents/environment.hpp"

#include <numeric>

#include "frl/envs/offline.hpp"
#include "frl/error.hpp"
#include "frl/tabular.hpp"

namespace frl::agents {

EnvStep PointMassTask::step(const JointAction& a) {
  const auto r = env_.step(a);
  return {r.next.features(), r.reward, false, r.done};
}

TabularTask::TabularTask(std::shared_ptr<const mdp::FactoredMdp> mdp, std::size_t horizon)
    : mdp_(std::move(mdp)), horizon_(horizon) {
  if (horizon_ == 0) throw ConfigError("tabular task horizon must be positive");
  for (const auto& b : mdp_->spec().action_blocks) {
    if (b.noop_action && *b.noop_action != 0) throw ConfigError("tabular tasks need action 0 as the declared no-op");
  }
}

std::vector<double> TabularTask::reset(Rng& rng) {
  rng_.seed(rng());
  s_ = sample_categorical(rng_, mdp_->spec().init_dist);
  t_ = 0;
  return envs::one_hot_features(*mdp_, s_);
}

EnvStep TabularTask::step(const JointAction& a) {
  mdp_->check_action(a, false);
  const auto sn = tabular::sample_next(*mdp_, s_, a, rng_);
  EnvStep out;
  out.reward = mdp_->reward(s_, a, sn);
  s_ = sn;
  ++t_;
  out.next_state = envs::one_hot_features(*mdp_, s_);
  out.terminal = mdp_->is_terminal(s_);
  out.truncated = !out.terminal && t_ >= horizon_;
  return out;
}

int TabularTask::state_dim() const {
  int n = 0;
  for (const auto& v : mdp_->spec().state_vars) n += v.cardinality;
  return n;
}

std::vector<int> TabularTask::block_sizes() const {
  std::vector<int> out;
  for (std::size_t k = 0; k < mdp_->num_blocks(); ++k) out.push_back(static_cast<int>(mdp_->block_size(k)));
  return out;
}

std::vector<std::vector<int>> TabularTask::eff_dims() const {
  std::vector<int> start{0};
  for (const auto& v : mdp_->spec().state_vars) start.push_back(start.back() + v.cardinality);
  std::vector<std::vector<int>> out;
  for (const auto& eff : mdp_->spec().eff_map) {
    std::vector<int> dims;
    for (int var : eff) {
      for (int d = start[static_cast<std::size_t>(var)]; d < start[static_cast<std::size_t>(var) + 1]; ++d) dims.push_back(d);
    }
    out.push_back(std::move(dims));
  }
  return out;
}

FlatActions::FlatActions(std::unique_ptr<Environment> inner) : inner_(std::move(inner)), sizes_(inner_->block_sizes()) {
  for (int n : sizes_) size_ *= n;
}

JointAction FlatActions::unflatten(int a) const {
  if (a < 0 || a >= size_) throw DomainError("flat action out of range");
  JointAction out(sizes_.size());
  for (std::size_t k = sizes_.size(); k-- > 0;) {
    out[k] = a % sizes_[k];
    a /= sizes_[k];
  }
  return out;
}

EnvStep FlatActions::step(const JointAction& a) {
  if (a.size() != 1) throw DomainError("flat environments take one action");
  return inner_->step(unflatten(a[0]));
}

std::vector<std::vector<int>> FlatActions::eff_dims() const {
  std::vector<int> all;
  for (const auto& e : inner_->eff_dims()) all.insert(all.end(), e.begin(), e.end());
  std::sort(all.begin(), all.end());
  return {all};
}

}  // namespace frl::agents
