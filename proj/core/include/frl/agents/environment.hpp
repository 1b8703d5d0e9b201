#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "frl/envs/point_mass.hpp"
#include "frl/factored_mdp.hpp"
#include "frl/rng.hpp"

namespace frl::agents {

using mdp::JointAction;

struct EnvStep {
  std::vector<double> next_state;
  double reward = 0.0;
  bool terminal = false;   ///< absorbing; no bootstrap
  bool truncated = false;  ///< step cap reached; bootstrap as usual
};

/// Episodic environment with factored discrete actions. Action index 0 of
/// every block is the no-op.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual std::vector<double> reset(Rng& rng) = 0;
  virtual EnvStep step(const JointAction& a) = 0;
  virtual int state_dim() const = 0;
  virtual std::vector<int> block_sizes() const = 0;
  /// Feature dimensions each block's effects live in (disjoint).
  virtual std::vector<std::vector<int>> eff_dims() const = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
  /// Current tabular state, for environments that have one.
  virtual std::optional<std::size_t> state_index() const { return std::nullopt; }
};

class PointMassTask final : public Environment {
 public:
  explicit PointMassTask(envs::PointMassConfig cfg = {}) : env_(cfg) {}
  std::vector<double> reset(Rng& rng) override { return env_.reset(rng); }
  EnvStep step(const JointAction& a) override;
  int state_dim() const override { return envs::PointMassEnv::state_dim(); }
  std::vector<int> block_sizes() const override { return env_.block_sizes(); }
  std::vector<std::vector<int>> eff_dims() const override { return envs::PointMassEnv::eff_dims(); }
  std::unique_ptr<Environment> clone() const override { return std::make_unique<PointMassTask>(env_.config()); }
  const envs::PointMassEnv& env() const { return env_; }

 private:
  envs::PointMassEnv env_;
};

/// A FactoredMdp seen through one-hot features, cut at `horizon` steps.
class TabularTask final : public Environment {
 public:
  TabularTask(std::shared_ptr<const mdp::FactoredMdp> mdp, std::size_t horizon);
  std::vector<double> reset(Rng& rng) override;
  EnvStep step(const JointAction& a) override;
  int state_dim() const override;
  std::vector<int> block_sizes() const override;
  std::vector<std::vector<int>> eff_dims() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<TabularTask>(mdp_, horizon_); }
  std::optional<std::size_t> state_index() const override { return s_; }
  const mdp::FactoredMdp& mdp() const { return *mdp_; }

 private:
  std::shared_ptr<const mdp::FactoredMdp> mdp_;
  std::size_t horizon_;
  std::size_t s_ = 0;
  std::size_t t_ = 0;
  Rng rng_;
};

/// Presents a factored environment as one block over the row-major product
/// of its blocks (the flat joint-action baseline).
class FlatActions final : public Environment {
 public:
  explicit FlatActions(std::unique_ptr<Environment> inner);
  std::vector<double> reset(Rng& rng) override { return inner_->reset(rng); }
  EnvStep step(const JointAction& a) override;
  int state_dim() const override { return inner_->state_dim(); }
  std::vector<int> block_sizes() const override { return {size_}; }
  std::vector<std::vector<int>> eff_dims() const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<FlatActions>(inner_->clone()); }
  std::optional<std::size_t> state_index() const override { return inner_->state_index(); }
  JointAction unflatten(int a) const;

 private:
  std::unique_ptr<Environment> inner_;
  std::vector<int> sizes_;
  int size_ = 1;
};

}  // namespace frl::agents
