#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "frl/factored_mdp.hpp"
#include "frl/rng.hpp"

namespace frl::tabular {

using mdp::FactoredMdp;
using mdp::FactoredMdpSpec;
using mdp::FactoredPolicy;
using mdp::JointAction;
using mdp::QTable;
using mdp::StateIndex;

/// One logged step over joint-state indices. Blocks may be kNoOp.
struct TabularTransition {
  StateIndex s = 0;
  JointAction a;
  double r = 0.0;
  StateIndex s_next = 0;
};

/// A conditioning cell of a learned table.
struct ModelCell {
  enum class Kind { sigma, noop } kind = Kind::sigma;
  std::size_t index = 0;  ///< block for sigma cells, state variable for noop cells
  int action = 0;         ///< projected action (sigma cells only)
  std::size_t row = 0;    ///< Pre configuration or CPT row
  std::string describe(const FactoredMdpSpec& spec) const;
  friend bool operator==(const ModelCell&, const ModelCell&) = default;
};

/// Empirical model. `spec` holds the estimates; rows without data carry a
/// uniform placeholder so the spec stays well formed, and are listed by
/// zero_count_cells(). Reward is a mean per (s, s') pair, 0 where unseen.
struct LearnedModel {
  FactoredMdpSpec spec;
  std::vector<std::vector<std::vector<std::size_t>>> sigma_counts;  ///< [k][a_k][pre]
  std::vector<std::vector<std::size_t>> noop_counts;                ///< [var][row]
  std::vector<std::vector<std::size_t>> reward_counts;              ///< [s][s']
  std::size_t num_samples = 0;

  std::vector<ModelCell> zero_count_cells() const;
  bool is_zero(const ModelCell& c) const;
};

struct LearnOptions {
  /// When false the skeleton's reward tables are kept as known.
  bool learn_reward = true;
};

/// Fits sigma (majority vote), no-op CPTs (frequencies) and reward (means).
/// The skeleton supplies variables, blocks, Eff/Pre maps, CPT parent lists,
/// init_dist, discount and terminal states; its tables are ignored.
LearnedModel learn_model(const std::vector<TabularTransition>& samples, const FactoredMdpSpec& skeleton,
                         const LearnOptions& opts = {});

enum class BlockOrder { round_robin, random };

struct MbfpiOptions {
  BlockOrder order = BlockOrder::round_robin;
  std::uint64_t seed = 0;  ///< for BlockOrder::random
  double eval_tol = 1e-10;
  std::size_t max_iters = 10'000;
  double tie_tol = 1e-9;
};

struct MbfpiIteration {
  std::size_t block = 0;              ///< block improved in this iteration
  FactoredPolicy policy;              ///< policy that was evaluated
  std::vector<QTable> q;              ///< tilde-Q_k for every block
  std::vector<double> values;         ///< V of the evaluated policy
  std::size_t changed = 0;            ///< states whose action changed
};

struct PolicyIterationTrace {
  std::vector<MbfpiIteration> iterations;
  FactoredPolicy policy;              ///< final policy
  std::vector<double> values;         ///< V of the final policy
  bool converged = false;             ///< false when max_iters ran out
};

/// Model-based factored policy iteration on an exact model.
PolicyIterationTrace mbfpi(const FactoredMdp& mdp, const FactoredPolicy& init, const MbfpiOptions& opts = {});

/// Same on a learned model; throws ModelCoverageError listing zero-count
/// cells that are needed from states reachable under init_dist.
PolicyIterationTrace mbfpi(const LearnedModel& model, const FactoredPolicy& init, const MbfpiOptions& opts = {});

/// Zero-count cells touched by some joint action at a reachable state.
std::vector<ModelCell> reachable_missing_cells(const LearnedModel& model);

struct JointSolution {
  std::vector<mdp::ActionIndex> policy;
  std::vector<double> values;
  QTable q;
  std::size_t iterations = 0;
};

/// Howard policy iteration over the flat joint action space with dense solves.
JointSolution joint_policy_iteration(const FactoredMdp& mdp, const std::vector<mdp::ActionIndex>& init = {},
                                     double tie_tol = 1e-9, std::size_t max_iters = 1000);

/// V^pi_0 of a stationary joint policy over `horizon` steps (terminals absorb).
std::vector<double> finite_horizon_values(const FactoredMdp& mdp, const std::vector<JointAction>& policy,
                                          std::size_t horizon);

/// Optimal (time-dependent) finite-horizon values; `allowed[s][a]` masks actions.
std::vector<double> finite_horizon_optimum(const FactoredMdp& mdp, std::size_t horizon,
                                           const std::vector<std::vector<char>>& allowed = {});

/// Draws s' ~ P(.|s, do(a)).
StateIndex sample_next(const FactoredMdp& mdp, StateIndex s, const JointAction& a, Rng& rng);

struct SampleComplexityOptions {
  std::vector<std::size_t> sample_sizes{100, 400, 1600};
  std::size_t trials = 200;
  double delta = 0.1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct SampleComplexityTrial {
  std::size_t n = 0;
  std::size_t trial = 0;
  double dynamics_error = 0.0;     ///< sup-norm over uncontrolled CPT entries
  double sigma_error_rate = 0.0;   ///< fraction of sigma cells mislearned or empty
  std::size_t zero_cells = 0;
};

struct SampleComplexityRow {
  std::size_t n = 0;
  double median = 0.0;
  double upper_quantile = 0.0;     ///< (1 - delta) quantile
  double bound = 0.0;              ///< epsilon that N samples buy at confidence 1 - delta
  double sigma_error_median = 0.0;
};

struct SampleComplexityResult {
  std::vector<SampleComplexityTrial> trials;  ///< sorted by (n, trial)
  std::vector<SampleComplexityRow> rows;
  double x_size = 0.0;  ///< |S_{K+1}|
  double y_size = 0.0;  ///< |S| |S \ S_{K+1}|
};

/// Epsilon reached with N samples for |X| outcomes and |Y| conditioning cells.
double error_bound(double x_size, double y_size, double n, double delta);
/// Samples needed to learn the uncontrolled dynamics to epsilon.
double n_p_bound(const FactoredMdp& mdp, double epsilon, double delta);
/// Samples needed to learn sigma of block k to epsilon.
double n_sigma_bound(const FactoredMdp& mdp, std::size_t k, double epsilon, double delta);

/// Generative-model sampling (uniform s, uniform joint a), model fit, error
/// per trial. Requires at least one uncontrolled variable.
SampleComplexityResult sample_complexity_experiment(const FactoredMdp& mdp, const SampleComplexityOptions& opts);

/// Linear-interpolated quantile of unsorted data, q in [0, 1].
double quantile(std::vector<double> xs, double q);

}  // namespace frl::tabular
