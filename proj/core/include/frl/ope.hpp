#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "frl/factored_mdp.hpp"

namespace frl::ope {

using mdp::JointAction;

struct EpisodeStep {
  std::vector<double> state;               ///< features seen by learners
  std::optional<std::size_t> state_index;  ///< tabular state, when known
  JointAction action;
  double reward = 0.0;
  double propensity = 1.0;                 ///< pi_b(a_t | s_t)
  friend bool operator==(const EpisodeStep&, const EpisodeStep&) = default;
};

struct EpisodeLog {
  std::vector<EpisodeStep> steps;
  /// State reached after the last step, and whether it is absorbing (as
  /// opposed to the episode being cut at the horizon).
  std::vector<double> final_state;
  std::optional<std::size_t> final_state_index;
  bool terminal = false;
  friend bool operator==(const EpisodeLog&, const EpisodeLog&) = default;
};

/// pi(a_t | s_t) of the target policy at a logged step.
using PolicyProbability = std::function<double(const EpisodeStep&)>;
/// Greedy action of a deterministic policy at a logged step.
using GreedyPolicy = std::function<JointAction(const EpisodeStep&)>;

/// (1 - eps) on the greedy action, eps / (|A| - 1) on each other action.
double softened_probability(bool greedy, double epsilon, std::size_t num_actions);
PolicyProbability soften(GreedyPolicy greedy, std::size_t num_actions, double epsilon = 0.01);

struct WisOptions {
  double discount = 1.0;
  double clip = 1000.0;
  /// Treat shorter episodes as absorbing (ratio 1, reward 0) up to the longest
  /// length, so every episode is normalized by the same w.
  bool pad_to_horizon = true;
  /// ESS from the per-step averages w_t instead of per-episode final weights.
  bool per_step_ess = false;
};

struct OpeResult {
  double wis = 0.0;
  double ess = 0.0;
  double ess_per_step = 0.0;
  std::vector<double> final_ratios;  ///< clipped rho_{1:L} per episode
  std::vector<double> w;             ///< w_t for t = 1..H
  std::size_t clipped = 0;           ///< episodes whose weight hit the clip
};

/// Throws DomainError for m = 0 and DataError for a non-positive propensity.
OpeResult wis_ess(const std::vector<EpisodeLog>& episodes, const PolicyProbability& target,
                  const WisOptions& opts = {});

struct Candidate {
  std::string id;
  double wis = 0.0;
  double ess = 0.0;
};

/// Max WIS among candidates with ESS >= cutoff; ties by higher ESS then lower id.
/// Throws SelectionError when none qualifies.
std::string select_model(const std::vector<Candidate>& candidates, double ess_cutoff);

/// Discounted return of one episode.
double episode_return(const EpisodeLog& e, double discount);

inline constexpr const char* kEpisodeSchema = "frl-episode/1";

void to_json(nlohmann::json& j, const EpisodeLog& e);
void from_json(const nlohmann::json& j, EpisodeLog& e);
void to_json(nlohmann::json& j, const OpeResult& r);

/// JSON-lines, one episode per line.
void save_episodes(const std::vector<EpisodeLog>& episodes, const std::filesystem::path& path);
std::vector<EpisodeLog> load_episodes(const std::filesystem::path& path);

}  // namespace frl::ope
