#pragma once

// Independent reference computations used to freeze expected values.
// Deliberately written against the raw spec tables, not the library's
// transition code.

#include <Eigen/Dense>
#include <vector>

#include "frl/factored_mdp.hpp"

namespace frl::testing {

inline std::vector<int> decode_row_major(std::size_t idx, const std::vector<int>& radices) {
  std::vector<int> out(radices.size());
  for (std::size_t i = radices.size(); i-- > 0;) {
    out[i] = static_cast<int>(idx % static_cast<std::size_t>(radices[i]));
    idx /= static_cast<std::size_t>(radices[i]);
  }
  return out;
}

inline std::size_t encode_row_major(const std::vector<int>& digits, const std::vector<int>& radices) {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < digits.size(); ++i) idx = idx * static_cast<std::size_t>(radices[i]) + static_cast<std::size_t>(digits[i]);
  return idx;
}

inline std::vector<int> state_radices(const mdp::FactoredMdpSpec& spec) {
  std::vector<int> r;
  for (const auto& v : spec.state_vars) r.push_back(v.cardinality);
  return r;
}

/// P(s' | s, do(a)) as a product of one factor per state variable.
inline double oracle_transition(const mdp::FactoredMdpSpec& spec, const std::vector<int>& s,
                                const mdp::JointAction& a, const std::vector<int>& sn) {
  double p = 1.0;
  for (std::size_t m = 0; m < spec.state_vars.size(); ++m) {
    int owner = -1;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < spec.eff_map.size(); ++k) {
      for (std::size_t j = 0; j < spec.eff_map[k].size(); ++j) {
        if (spec.eff_map[k][j] == static_cast<int>(m)) {
          owner = static_cast<int>(k);
          pos = j;
        }
      }
    }
    bool intervened = false;
    if (owner >= 0) {
      const auto k = static_cast<std::size_t>(owner);
      const auto& noop = spec.action_blocks[k].noop_action;
      intervened = a[k] != mdp::kNoOp && !(noop && *noop == a[k]);
      if (intervened) {
        std::vector<int> pre_vals, pre_cards;
        for (int v : spec.pre_map[k]) {
          pre_vals.push_back(s[static_cast<std::size_t>(v)]);
          pre_cards.push_back(spec.state_vars[static_cast<std::size_t>(v)].cardinality);
        }
        const auto& eff = spec.sigma[k][static_cast<std::size_t>(a[k])][encode_row_major(pre_vals, pre_cards)];
        p *= (sn[m] == eff[pos]) ? 1.0 : 0.0;
      }
    }
    if (!intervened) {
      const auto& cpt = spec.noop_dynamics[m];
      std::vector<int> digits, radices;
      for (int v : cpt.parents) {
        digits.push_back(s[static_cast<std::size_t>(v)]);
        radices.push_back(spec.state_vars[static_cast<std::size_t>(v)].cardinality);
      }
      for (int v : cpt.next_parents) {
        digits.push_back(sn[static_cast<std::size_t>(v)]);
        radices.push_back(spec.state_vars[static_cast<std::size_t>(v)].cardinality);
      }
      p *= cpt.table[encode_row_major(digits, radices)][static_cast<std::size_t>(sn[m])];
    }
  }
  return p;
}

/// Dense |S| x |S| transition matrix for a fixed action per state.
inline Eigen::MatrixXd oracle_matrix(const mdp::FactoredMdpSpec& spec,
                                     const std::vector<mdp::JointAction>& action_per_state) {
  const auto radices = state_radices(spec);
  const std::size_t n = action_per_state.size();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(static_cast<long>(n), static_cast<long>(n));
  for (std::size_t s = 0; s < n; ++s) {
    const auto sv = decode_row_major(s, radices);
    for (std::size_t sn = 0; sn < n; ++sn) {
      p(static_cast<long>(s), static_cast<long>(sn)) =
          oracle_transition(spec, sv, action_per_state[s], decode_row_major(sn, radices));
    }
  }
  return p;
}

inline double oracle_reward(const mdp::FactoredMdpSpec& spec, std::size_t s, const mdp::JointAction& a,
                            std::size_t sn) {
  double r = 0.0;
  if (!spec.reward.next_state.empty()) r += spec.reward.next_state[sn];
  if (!spec.reward.state_next.empty()) r += spec.reward.state_next[s][sn];
  if (!spec.reward.block_cost.empty()) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k] != mdp::kNoOp) r += spec.reward.block_cost[k][static_cast<std::size_t>(a[k])];
    }
  }
  return r;
}

/// V = (I - gamma P_pi)^{-1} r_pi by a dense LU solve (terminal rows pinned to 0).
inline Eigen::VectorXd oracle_values(const mdp::FactoredMdpSpec& spec,
                                     const std::vector<mdp::JointAction>& pi) {
  const std::size_t n = pi.size();
  Eigen::MatrixXd p = oracle_matrix(spec, pi);
  Eigen::VectorXd r = Eigen::VectorXd::Zero(static_cast<long>(n));
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t sn = 0; sn < n; ++sn) {
      r(static_cast<long>(s)) += p(static_cast<long>(s), static_cast<long>(sn)) * oracle_reward(spec, s, pi[s], sn);
    }
  }
  for (auto t : spec.terminal_states) {
    p.row(static_cast<long>(t)).setZero();
    r(static_cast<long>(t)) = 0.0;
  }
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(static_cast<long>(n), static_cast<long>(n)) - spec.discount * p;
  return lhs.partialPivLu().solve(r);
}

}  // namespace frl::testing
