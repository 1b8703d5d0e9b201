#include "frl/envs/offline.hpp"

#include <algorithm>

#include "frl/error.hpp"
#include "frl/tabular.hpp"

namespace frl::envs {

mdp::FactoredMdpSpec offline_task(const OfflineTaskOptions& o) {
  if (o.num_blocks < 1 || o.actions_per_block < 2 || o.vital_levels < 2) {
    throw ConfigError("offline task needs >= 1 block, >= 2 actions and >= 2 vital levels");
  }
  Rng rng(o.seed);
  const auto K = static_cast<std::size_t>(o.num_blocks);
  const int L = o.vital_levels;
  mdp::FactoredMdpSpec spec;
  for (std::size_t k = 0; k < K; ++k) {
    spec.state_vars.push_back({"vital" + std::to_string(k), L});
    spec.action_blocks.push_back({"treat" + std::to_string(k), {o.actions_per_block}, 0});
    spec.eff_map.push_back({static_cast<int>(k)});
    spec.pre_map.push_back({static_cast<int>(k)});
  }
  const int status = static_cast<int>(K);
  spec.state_vars.push_back({"status", 3});

  std::vector<int> target(K);
  for (auto& t : target) t = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(L)));

  // Treatments: action 1 raises, 2 lowers, the rest jump to a fixed level.
  // Action 0 is declared the no-op; its row is a placeholder.
  for (std::size_t k = 0; k < K; ++k) {
    mdp::InterventionTable sig(static_cast<std::size_t>(o.actions_per_block));
    std::vector<int> jump(static_cast<std::size_t>(o.actions_per_block));
    for (auto& j : jump) j = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(L)));
    for (int a = 0; a < o.actions_per_block; ++a) {
      for (int v = 0; v < L; ++v) {
        int next = v;
        if (a == 1) next = std::min(v + 1, L - 1);
        else if (a == 2) next = std::max(v - 1, 0);
        else if (a >= 3) next = jump[static_cast<std::size_t>(a)];
        sig[static_cast<std::size_t>(a)].push_back({next});
      }
    }
    spec.sigma.push_back(std::move(sig));
  }

  // Untreated vitals drift away from the target.
  for (std::size_t k = 0; k < K; ++k) {
    mdp::ConditionalTable c;
    c.parents = {static_cast<int>(k)};
    for (int v = 0; v < L; ++v) {
      std::vector<double> row(static_cast<std::size_t>(L), 0.0);
      const int away = v >= target[k] ? std::min(v + 1, L - 1) : std::max(v - 1, 0);
      row[static_cast<std::size_t>(v)] += 0.7;
      row[static_cast<std::size_t>(away)] += 0.3;
      c.table.push_back(row);
    }
    spec.noop_dynamics.push_back(std::move(c));
  }

  // Status given current status and next vitals.
  {
    mdp::ConditionalTable c;
    c.parents = {status};
    for (std::size_t k = 0; k < K; ++k) c.next_parents.push_back(static_cast<int>(k));
    std::vector<int> radices{3};
    for (std::size_t k = 0; k < K; ++k) radices.push_back(L);
    MixedRadix codec(radices);
    for (std::size_t row = 0; row < codec.size(); ++row) {
      const auto d = codec.decode(row);
      std::vector<double> p(3, 0.0);
      if (d[0] != 0) {
        p[static_cast<std::size_t>(d[0])] = 1.0;
      } else {
        int off = 0;
        for (std::size_t k = 0; k < K; ++k) off += std::abs(d[k + 1] - target[k]);
        const double frac = static_cast<double>(off) / static_cast<double>(K * static_cast<std::size_t>(L - 1));
        p[1] = off == 0 ? 0.3 : 0.02 * (1.0 - frac);
        p[2] = 0.02 + 0.25 * frac * frac;
        p[0] = 1.0 - p[1] - p[2];
      }
      c.table.push_back(p);
    }
    spec.noop_dynamics.push_back(std::move(c));
  }

  std::vector<int> radices;
  for (const auto& v : spec.state_vars) radices.push_back(v.cardinality);
  MixedRadix states(radices);
  spec.reward.next_state.assign(states.size(), 0.0);
  spec.init_dist.assign(states.size(), 0.0);
  std::size_t alive = 0;
  for (std::size_t s = 0; s < states.size(); ++s) {
    const int st = states.decode(s)[static_cast<std::size_t>(status)];
    if (st == 1) spec.reward.next_state[s] = 100.0;
    if (st == 2) spec.reward.next_state[s] = -100.0;
    if (st != 0) spec.terminal_states.push_back(s);
    else ++alive;
  }
  for (std::size_t s = 0; s < states.size(); ++s) {
    if (states.decode(s)[static_cast<std::size_t>(status)] == 0) spec.init_dist[s] = 1.0 / static_cast<double>(alive);
  }
  spec.discount = 1.0;
  return spec;
}

std::vector<double> one_hot_features(const mdp::FactoredMdp& mdp, mdp::StateIndex s) {
  const auto vals = mdp.decode_state(s);
  std::vector<double> out;
  for (std::size_t m = 0; m < vals.size(); ++m) {
    const int card = mdp.spec().state_vars[m].cardinality;
    for (int v = 0; v < card; ++v) out.push_back(v == vals[m] ? 1.0 : 0.0);
  }
  return out;
}

BehaviorPolicy product_softened(const mdp::FactoredMdp& mdp, std::vector<mdp::JointAction> policy, double eps) {
  if (policy.size() != mdp.num_states()) throw ShapeError("behavior policy needs one action per state");
  if (!(eps >= 0.0 && eps <= 1.0)) throw DomainError("softening must lie in [0, 1]");
  return [&mdp, policy = std::move(policy), eps](mdp::StateIndex s) {
    std::vector<double> p(mdp.num_joint_actions());
    for (std::size_t a = 0; a < p.size(); ++a) {
      const auto ja = mdp.decode_action(a);
      double prob = 1.0;
      for (std::size_t k = 0; k < ja.size(); ++k) {
        const auto n = static_cast<double>(mdp.block_size(k));
        prob *= ja[k] == policy[s][k] ? 1.0 - eps : eps / (n - 1.0);
      }
      p[a] = prob;
    }
    return p;
  };
}

BehaviorPolicy uniform_behavior(const mdp::FactoredMdp& mdp) {
  return [&mdp](mdp::StateIndex) {
    return std::vector<double>(mdp.num_joint_actions(), 1.0 / static_cast<double>(mdp.num_joint_actions()));
  };
}

std::vector<mdp::JointAction> degraded_optimal_policy(const mdp::FactoredMdp& mdp, double fraction,
                                                      std::size_t block, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw DomainError("degraded fraction must lie in [0, 1]");
  if (block >= mdp.num_blocks()) throw DomainError("no action block " + std::to_string(block));
  const auto sol = tabular::joint_policy_iteration(mdp);
  Rng rng(seed);
  std::vector<mdp::JointAction> out(mdp.num_states());
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s] = mdp.decode_action(sol.policy[s]);
    if (uniform01(rng) < fraction) out[s][block] = 0;
  }
  return out;
}

std::vector<tabular::TabularTransition> tabular_transitions(const std::vector<ope::EpisodeLog>& episodes) {
  std::vector<tabular::TabularTransition> out;
  for (std::size_t j = 0; j < episodes.size(); ++j) {
    const auto& e = episodes[j];
    for (std::size_t t = 0; t < e.steps.size(); ++t) {
      const auto& next = t + 1 < e.steps.size() ? e.steps[t + 1].state_index : e.final_state_index;
      if (!e.steps[t].state_index || !next) {
        throw DataError("episode " + std::to_string(j) + " step " + std::to_string(t) + " has no state index");
      }
      out.push_back({*e.steps[t].state_index, e.steps[t].action, e.steps[t].reward, *next});
    }
  }
  return out;
}

std::vector<ope::EpisodeLog> generate_offline_dataset(const mdp::FactoredMdp& mdp, const BehaviorPolicy& behavior,
                                                      std::size_t episodes, std::uint64_t seed, std::size_t horizon) {
  Rng rng(seed);
  std::vector<ope::EpisodeLog> out(episodes);
  const auto& init = mdp.spec().init_dist;
  for (auto& ep : out) {
    auto s = static_cast<mdp::StateIndex>(sample_categorical(rng, init));
    for (std::size_t t = 0; t < horizon && !mdp.is_terminal(s); ++t) {
      const auto probs = behavior(s);
      const auto a = sample_categorical(rng, probs);
      ope::EpisodeStep step;
      step.state = one_hot_features(mdp, s);
      step.state_index = s;
      step.action = mdp.decode_action(a);
      step.propensity = probs[a];
      const auto sn = tabular::sample_next(mdp, s, step.action, rng);
      step.reward = mdp.reward(s, step.action, sn);
      ep.steps.push_back(std::move(step));
      s = sn;
    }
    ep.final_state = one_hot_features(mdp, s);
    ep.final_state_index = s;
    ep.terminal = mdp.is_terminal(s);
  }
  return out;
}

}  // namespace frl::envs
