#include "frl/tabular.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>
#include <thread>

#include "frl/error.hpp"

namespace frl::tabular {

using mdp::ActionIndex;
using mdp::kNoOp;

namespace {

std::vector<int> cards_of(const FactoredMdpSpec& spec, const std::vector<int>& vars) {
  std::vector<int> out;
  for (int v : vars) out.push_back(spec.state_vars[static_cast<std::size_t>(v)].cardinality);
  return out;
}

std::vector<int> values_of(const std::vector<int>& state, const std::vector<int>& vars) {
  std::vector<int> out;
  for (int v : vars) out.push_back(state[static_cast<std::size_t>(v)]);
  return out;
}

/// Codecs for the conditioning cells of a spec's tables.
struct CellCodecs {
  std::vector<MixedRadix> pre;   // per block
  std::vector<MixedRadix> eff;   // per block
  std::vector<MixedRadix> cpt;   // per variable: parents then next_parents
  std::vector<int> owner;        // per variable, -1 if uncontrolled

  explicit CellCodecs(const FactoredMdpSpec& spec) {
    for (std::size_t k = 0; k < spec.action_blocks.size(); ++k) {
      pre.emplace_back(cards_of(spec, spec.pre_map[k]));
      eff.emplace_back(cards_of(spec, spec.eff_map[k]));
    }
    owner.assign(spec.state_vars.size(), -1);
    for (std::size_t k = 0; k < spec.eff_map.size(); ++k) {
      for (int v : spec.eff_map[k]) owner[static_cast<std::size_t>(v)] = static_cast<int>(k);
    }
    for (const auto& c : spec.noop_dynamics) {
      auto vars = c.parents;
      vars.insert(vars.end(), c.next_parents.begin(), c.next_parents.end());
      cpt.emplace_back(cards_of(spec, vars));
    }
  }

  std::size_t cpt_row(const FactoredMdpSpec& spec, std::size_t m, const std::vector<int>& s,
                      const std::vector<int>& sn) const {
    auto digits = values_of(s, spec.noop_dynamics[m].parents);
    const auto nx = values_of(sn, spec.noop_dynamics[m].next_parents);
    digits.insert(digits.end(), nx.begin(), nx.end());
    return cpt[m].encode(digits);
  }
};

bool block_intervenes(const FactoredMdpSpec& spec, std::size_t k, int a_k) {
  if (a_k == kNoOp) return false;
  const auto& noop = spec.action_blocks[k].noop_action;
  return !(noop && *noop == a_k);
}

std::size_t block_size(const FactoredMdpSpec& spec, std::size_t k) {
  std::size_t n = 1;
  for (int c : spec.action_blocks[k].cardinalities) n *= static_cast<std::size_t>(c);
  return n;
}

std::vector<double> state_values_for(const FactoredMdp& mdp, const FactoredPolicy& policy, double tol) {
  std::vector<JointAction> joint(mdp.num_states());
  for (StateIndex s = 0; s < mdp.num_states(); ++s) joint[s] = policy.joint(s);
  return mdp::evaluate_joint_policy(mdp, joint, {tol, 1'000'000});
}

double backup(const FactoredMdp& mdp, StateIndex s, const JointAction& a, const std::vector<double>& v) {
  double q = 0.0;
  for (const auto& [sn, p] : mdp::transition_support(mdp, s, a)) {
    q += p * (mdp.reward(s, a, sn) + mdp.discount() * v[sn]);
  }
  return q;
}

/// Alg. 1 evaluation: tilde-Q_k(s, a_k) with every other block pinned to pi.
QTable pinned_q(const FactoredMdp& mdp, const FactoredPolicy& policy, std::size_t k,
                const std::vector<double>& v) {
  QTable q(k, mdp.num_states(), mdp.block_size(k));
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    auto a = policy.joint(s);
    for (std::size_t ak = 0; ak < q.num_actions; ++ak) {
      a[k] = static_cast<int>(ak);
      q.at(s, ak) = backup(mdp, s, a, v);
    }
  }
  return q;
}

}  // namespace

std::string ModelCell::describe(const FactoredMdpSpec& spec) const {
  if (kind == Kind::sigma) {
    return "sigma[" + spec.action_blocks[index].name + "] action " + std::to_string(action) + " pre-row " +
           std::to_string(row);
  }
  return "noop[" + spec.state_vars[index].name + "] row " + std::to_string(row);
}

bool LearnedModel::is_zero(const ModelCell& c) const {
  if (c.kind == ModelCell::Kind::sigma) return sigma_counts[c.index][static_cast<std::size_t>(c.action)][c.row] == 0;
  return noop_counts[c.index][c.row] == 0;
}

std::vector<ModelCell> LearnedModel::zero_count_cells() const {
  std::vector<ModelCell> out;
  for (std::size_t k = 0; k < sigma_counts.size(); ++k) {
    for (std::size_t a = 0; a < sigma_counts[k].size(); ++a) {
      for (std::size_t r = 0; r < sigma_counts[k][a].size(); ++r) {
        if (sigma_counts[k][a][r] == 0) out.push_back({ModelCell::Kind::sigma, k, static_cast<int>(a), r});
      }
    }
  }
  for (std::size_t m = 0; m < noop_counts.size(); ++m) {
    for (std::size_t r = 0; r < noop_counts[m].size(); ++r) {
      if (noop_counts[m][r] == 0) out.push_back({ModelCell::Kind::noop, m, 0, r});
    }
  }
  return out;
}

LearnedModel learn_model(const std::vector<TabularTransition>& samples, const FactoredMdpSpec& skeleton,
                         const LearnOptions& opts) {
  const CellCodecs codecs(skeleton);
  const MixedRadix states(cards_of(skeleton, [&] {
    std::vector<int> all(skeleton.state_vars.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return all;
  }()));
  const std::size_t n_states = states.size();
  const std::size_t n_blocks = skeleton.action_blocks.size();

  // Tallies: sigma[k][a][pre][eff code], noop[m][row][value].
  std::vector<std::vector<std::vector<std::vector<std::size_t>>>> sigma_tally(n_blocks);
  for (std::size_t k = 0; k < n_blocks; ++k) {
    sigma_tally[k].assign(block_size(skeleton, k),
                          std::vector<std::vector<std::size_t>>(codecs.pre[k].size(),
                                                                std::vector<std::size_t>(codecs.eff[k].size(), 0)));
  }
  std::vector<std::vector<std::vector<std::size_t>>> noop_tally(skeleton.state_vars.size());
  for (std::size_t m = 0; m < noop_tally.size(); ++m) {
    noop_tally[m].assign(codecs.cpt[m].size(),
                         std::vector<std::size_t>(static_cast<std::size_t>(skeleton.state_vars[m].cardinality), 0));
  }
  std::vector<std::vector<double>> reward_sum(n_states, std::vector<double>(n_states, 0.0));

  LearnedModel model;
  model.reward_counts.assign(n_states, std::vector<std::size_t>(n_states, 0));
  model.num_samples = samples.size();

  for (const auto& t : samples) {
    if (t.s >= n_states || t.s_next >= n_states || t.a.size() != n_blocks) {
      throw DomainError("sample outside the skeleton's state or action space");
    }
    const auto s = states.decode(t.s);
    const auto sn = states.decode(t.s_next);
    for (std::size_t k = 0; k < n_blocks; ++k) {
      if (!block_intervenes(skeleton, k, t.a[k])) continue;
      if (t.a[k] < 0 || static_cast<std::size_t>(t.a[k]) >= block_size(skeleton, k)) {
        throw DomainError("sample action out of range for block " + skeleton.action_blocks[k].name);
      }
      const auto pre = codecs.pre[k].encode(values_of(s, skeleton.pre_map[k]));
      const auto eff = codecs.eff[k].encode(values_of(sn, skeleton.eff_map[k]));
      ++sigma_tally[k][static_cast<std::size_t>(t.a[k])][pre][eff];
    }
    for (std::size_t m = 0; m < skeleton.state_vars.size(); ++m) {
      const int owner = codecs.owner[m];
      if (owner >= 0 && block_intervenes(skeleton, static_cast<std::size_t>(owner), t.a[static_cast<std::size_t>(owner)])) {
        continue;
      }
      ++noop_tally[m][codecs.cpt_row(skeleton, m, s, sn)][static_cast<std::size_t>(sn[m])];
    }
    reward_sum[t.s][t.s_next] += t.r;
    ++model.reward_counts[t.s][t.s_next];
  }

  model.spec = skeleton;
  model.spec.assume_positive = false;
  model.sigma_counts.resize(n_blocks);
  for (std::size_t k = 0; k < n_blocks; ++k) {
    auto& table = model.spec.sigma[k];
    table.assign(sigma_tally[k].size(), {});
    model.sigma_counts[k].assign(sigma_tally[k].size(), std::vector<std::size_t>(codecs.pre[k].size(), 0));
    for (std::size_t a = 0; a < sigma_tally[k].size(); ++a) {
      table[a].resize(codecs.pre[k].size());
      for (std::size_t pre = 0; pre < codecs.pre[k].size(); ++pre) {
        const auto& tally = sigma_tally[k][a][pre];
        std::size_t total = 0, best = 0;
        for (std::size_t e = 0; e < tally.size(); ++e) {
          total += tally[e];
          if (tally[e] > tally[best]) best = e;
        }
        model.sigma_counts[k][a][pre] = total;
        table[a][pre] = codecs.eff[k].decode(best);  // placeholder 0...0 when empty
      }
    }
  }
  model.noop_counts.resize(skeleton.state_vars.size());
  for (std::size_t m = 0; m < skeleton.state_vars.size(); ++m) {
    auto& table = model.spec.noop_dynamics[m].table;
    const std::size_t card = static_cast<std::size_t>(skeleton.state_vars[m].cardinality);
    table.assign(noop_tally[m].size(), std::vector<double>(card, 1.0 / static_cast<double>(card)));
    model.noop_counts[m].assign(noop_tally[m].size(), 0);
    for (std::size_t r = 0; r < noop_tally[m].size(); ++r) {
      std::size_t total = 0;
      for (auto c : noop_tally[m][r]) total += c;
      model.noop_counts[m][r] = total;
      if (total == 0) continue;
      double partial = 0.0;
      for (std::size_t v = 0; v < card; ++v) {
        table[r][v] = static_cast<double>(noop_tally[m][r][v]) / static_cast<double>(total);
        if (v + 1 < card) partial += table[r][v];
      }
      table[r][card - 1] = std::max(0.0, 1.0 - partial);
    }
  }
  if (opts.learn_reward) {
    model.spec.reward = {};
    model.spec.reward.state_next.assign(n_states, std::vector<double>(n_states, 0.0));
    for (std::size_t s = 0; s < n_states; ++s) {
      for (std::size_t sn = 0; sn < n_states; ++sn) {
        if (model.reward_counts[s][sn] > 0) {
          model.spec.reward.state_next[s][sn] = reward_sum[s][sn] / static_cast<double>(model.reward_counts[s][sn]);
        }
      }
    }
  }
  return model;
}

std::vector<ModelCell> reachable_missing_cells(const LearnedModel& model) {
  const FactoredMdp mdp(model.spec);
  const auto& spec = mdp.spec();
  const CellCodecs codecs(spec);
  std::set<std::tuple<int, std::size_t, int, std::size_t>> missing;
  std::vector<char> seen(mdp.num_states(), 0);
  std::deque<StateIndex> frontier;
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    if (spec.init_dist[s] > 0.0) {
      seen[s] = 1;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const StateIndex s = frontier.front();
    frontier.pop_front();
    if (mdp.is_terminal(s)) continue;
    const auto sv = mdp.decode_state(s);
    for (ActionIndex ai = 0; ai < mdp.num_joint_actions(); ++ai) {
      const auto a = mdp.decode_action(ai);
      for (std::size_t k = 0; k < mdp.num_blocks(); ++k) {
        if (!mdp.intervenes(k, a[k])) continue;
        ModelCell c{ModelCell::Kind::sigma, k, a[k], codecs.pre[k].encode(values_of(sv, spec.pre_map[k]))};
        if (model.is_zero(c)) missing.insert({0, c.index, c.action, c.row});
      }
      for (const auto& [sn, p] : mdp::transition_support(mdp, s, a)) {
        const auto nv = mdp.decode_state(sn);
        for (std::size_t m = 0; m < mdp.num_vars(); ++m) {
          const int owner = codecs.owner[m];
          if (owner >= 0 && mdp.intervenes(static_cast<std::size_t>(owner), a[static_cast<std::size_t>(owner)])) continue;
          ModelCell c{ModelCell::Kind::noop, m, 0, codecs.cpt_row(spec, m, sv, nv)};
          if (model.is_zero(c)) missing.insert({1, c.index, 0, c.row});
        }
        if (!seen[sn]) {
          seen[sn] = 1;
          frontier.push_back(sn);
        }
      }
    }
  }
  std::vector<ModelCell> out;
  for (const auto& [kind, index, action, row] : missing) {
    out.push_back({kind == 0 ? ModelCell::Kind::sigma : ModelCell::Kind::noop, index, action, row});
  }
  return out;
}

PolicyIterationTrace mbfpi(const FactoredMdp& mdp, const FactoredPolicy& init, const MbfpiOptions& opts) {
  const std::size_t n_blocks = mdp.num_blocks();
  if (init.actions.size() != n_blocks) throw ShapeError("initial policy has the wrong number of blocks");
  for (std::size_t k = 0; k < n_blocks; ++k) {
    if (init.actions[k].size() != mdp.num_states()) throw ShapeError("initial policy is not total");
    for (int a : init.actions[k]) {
      if (a < 0 || static_cast<std::size_t>(a) >= mdp.block_size(k)) {
        throw DomainError("initial policy emits action " + std::to_string(a) + " for block " + std::to_string(k));
      }
    }
  }
  PolicyIterationTrace trace;
  trace.policy = init;
  Rng rng(opts.seed);
  std::vector<char> confirmed(n_blocks, 0);
  std::size_t n_confirmed = 0;

  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    MbfpiIteration rec;
    rec.policy = trace.policy;
    rec.values = state_values_for(mdp, trace.policy, opts.eval_tol);
    for (std::size_t k = 0; k < n_blocks; ++k) rec.q.push_back(pinned_q(mdp, trace.policy, k, rec.values));
    rec.block = opts.order == BlockOrder::round_robin ? it % n_blocks
                                                      : static_cast<std::size_t>(uniform_index(rng, n_blocks));
    const auto& q = rec.q[rec.block];
    for (StateIndex s = 0; s < mdp.num_states(); ++s) {
      if (mdp.is_terminal(s)) continue;
      const int best = static_cast<int>(q.argmax(s, opts.tie_tol));
      if (best != trace.policy.actions[rec.block][s]) {
        trace.policy.actions[rec.block][s] = best;
        ++rec.changed;
      }
    }
    const bool changed = rec.changed > 0;
    trace.iterations.push_back(std::move(rec));
    if (changed) {
      std::fill(confirmed.begin(), confirmed.end(), 0);
      n_confirmed = 0;
    } else if (!confirmed[trace.iterations.back().block]) {
      confirmed[trace.iterations.back().block] = 1;
      if (++n_confirmed == n_blocks) {
        trace.converged = true;
        trace.values = trace.iterations.back().values;
        return trace;
      }
    }
  }
  trace.values = state_values_for(mdp, trace.policy, opts.eval_tol);
  return trace;
}

PolicyIterationTrace mbfpi(const LearnedModel& model, const FactoredPolicy& init, const MbfpiOptions& opts) {
  const auto missing = reachable_missing_cells(model);
  if (!missing.empty()) {
    std::string msg = "learned model has " + std::to_string(missing.size()) + " reachable zero-count cells:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i].describe(model.spec) + ";";
    if (missing.size() > 20) msg += " ...";
    throw ModelCoverageError(msg);
  }
  return mbfpi(FactoredMdp(model.spec), init, opts);
}

JointSolution joint_policy_iteration(const FactoredMdp& mdp, const std::vector<ActionIndex>& init, double tie_tol,
                                     std::size_t max_iters) {
  const std::size_t n = mdp.num_states();
  const std::size_t n_actions = mdp.num_joint_actions();
  const double gamma = mdp.discount();
  JointSolution sol;
  sol.policy = init.empty() ? std::vector<ActionIndex>(n, 0) : init;
  if (sol.policy.size() != n) throw ShapeError("joint policy is not total");

  // Dense P[a] rows and expected rewards, built once.
  std::vector<Eigen::MatrixXd> p(n_actions, Eigen::MatrixXd::Zero(static_cast<long>(n), static_cast<long>(n)));
  std::vector<Eigen::VectorXd> r(n_actions, Eigen::VectorXd::Zero(static_cast<long>(n)));
  for (ActionIndex a = 0; a < n_actions; ++a) {
    const auto ja = mdp.decode_action(a);
    for (StateIndex s = 0; s < n; ++s) {
      if (mdp.is_terminal(s)) continue;
      for (const auto& [sn, pr] : mdp::transition_support(mdp, s, ja)) {
        p[a](static_cast<long>(s), static_cast<long>(sn)) = pr;
        r[a](static_cast<long>(s)) += pr * mdp.reward(s, ja, sn);
      }
    }
  }

  for (sol.iterations = 1; sol.iterations <= max_iters; ++sol.iterations) {
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(static_cast<long>(n), static_cast<long>(n));
    Eigen::VectorXd rhs(static_cast<long>(n));
    for (StateIndex s = 0; s < n; ++s) {
      const auto a = sol.policy[s];
      lhs.row(static_cast<long>(s)) -= gamma * p[a].row(static_cast<long>(s));
      rhs(static_cast<long>(s)) = r[a](static_cast<long>(s));
    }
    const Eigen::VectorXd v = lhs.partialPivLu().solve(rhs);
    const double residual = (lhs * v - rhs).cwiseAbs().maxCoeff();
    if (!v.allFinite() || residual > 1e-6) {
      throw NumericError("joint policy evaluation is singular (residual " + std::to_string(residual) + ")");
    }
    sol.values.assign(v.data(), v.data() + n);
    sol.q = QTable(std::nullopt, n, n_actions);
    for (ActionIndex a = 0; a < n_actions; ++a) {
      const Eigen::VectorXd qa = r[a] + gamma * p[a] * v;
      for (StateIndex s = 0; s < n; ++s) sol.q.at(s, a) = qa(static_cast<long>(s));
    }
    bool stable = true;
    for (StateIndex s = 0; s < n; ++s) {
      if (mdp.is_terminal(s)) continue;
      const auto best = sol.q.argmax(s, tie_tol);
      if (best != sol.policy[s]) {
        sol.policy[s] = best;
        stable = false;
      }
    }
    if (stable) return sol;
  }
  throw NumericError("joint policy iteration did not converge within " + std::to_string(max_iters) + " iterations");
}

std::vector<double> finite_horizon_values(const FactoredMdp& mdp, const std::vector<JointAction>& policy,
                                          std::size_t horizon) {
  const std::size_t n = mdp.num_states();
  if (policy.size() != n) throw ShapeError("joint policy is not total");
  std::vector<double> v(n, 0.0), next(n, 0.0);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (StateIndex s = 0; s < n; ++s) next[s] = mdp.is_terminal(s) ? 0.0 : backup(mdp, s, policy[s], v);
    std::swap(v, next);
  }
  return v;
}

std::vector<double> finite_horizon_optimum(const FactoredMdp& mdp, std::size_t horizon,
                                           const std::vector<std::vector<char>>& allowed) {
  const std::size_t n = mdp.num_states();
  if (!allowed.empty() && allowed.size() != n) throw ShapeError("action mask is not total");
  std::vector<std::vector<mdp::SparseRow>> rows(n, std::vector<mdp::SparseRow>(mdp.num_joint_actions()));
  for (StateIndex s = 0; s < n; ++s) {
    for (ActionIndex a = 0; a < mdp.num_joint_actions(); ++a) {
      rows[s][a] = mdp::transition_support(mdp, s, mdp.decode_action(a));
    }
  }
  std::vector<double> v(n, 0.0), next(n, 0.0);
  for (std::size_t t = 0; t < horizon; ++t) {
    for (StateIndex s = 0; s < n; ++s) {
      if (mdp.is_terminal(s)) {
        next[s] = 0.0;
        continue;
      }
      double best = -std::numeric_limits<double>::infinity();
      for (ActionIndex a = 0; a < mdp.num_joint_actions(); ++a) {
        if (!allowed.empty() && !allowed[s][a]) continue;
        const auto ja = mdp.decode_action(a);
        double q = 0.0;
        for (const auto& [sn, p] : rows[s][a]) q += p * (mdp.reward(s, ja, sn) + mdp.discount() * v[sn]);
        best = std::max(best, q);
      }
      if (!std::isfinite(best)) throw DomainError("state " + std::to_string(s) + " has no allowed action");
      next[s] = best;
    }
    std::swap(v, next);
  }
  return v;
}

StateIndex sample_next(const FactoredMdp& mdp, StateIndex s, const JointAction& a, Rng& rng) {
  const auto row = mdp::transition_support(mdp, s, a);
  double u = uniform01(rng);
  for (const auto& [sn, p] : row) {
    if (u < p) return sn;
    u -= p;
  }
  return row.back().first;
}

double error_bound(double x_size, double y_size, double n, double delta) {
  if (n <= 0.0) throw DomainError("sample size must be positive");
  return std::sqrt(x_size * y_size * std::log(2.0 * y_size / delta) / n);
}

double n_p_bound(const FactoredMdp& mdp, double epsilon, double delta) {
  double x = 1.0, rest = 1.0;
  for (std::size_t m = 0; m < mdp.num_vars(); ++m) {
    const double c = mdp.spec().state_vars[m].cardinality;
    (mdp.owner_block(static_cast<int>(m)) < 0 ? x : rest) *= c;
  }
  const double y = static_cast<double>(mdp.num_states()) * rest;
  return x * y / (epsilon * epsilon) * std::log(2.0 * y / delta);
}

double n_sigma_bound(const FactoredMdp& mdp, std::size_t k, double epsilon, double delta) {
  const auto& spec = mdp.spec();
  double eff = 1.0, pre = 1.0;
  for (int v : spec.eff_map.at(k)) eff *= spec.state_vars[static_cast<std::size_t>(v)].cardinality;
  for (int v : spec.pre_map.at(k)) pre *= spec.state_vars[static_cast<std::size_t>(v)].cardinality;
  return eff * pre / (epsilon * epsilon) * std::log(2.0 * pre / delta);
}

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw DomainError("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

SampleComplexityResult sample_complexity_experiment(const FactoredMdp& mdp, const SampleComplexityOptions& opts) {
  const auto& truth = mdp.spec();
  if (mdp.uncontrolled_vars().empty()) throw ConfigError("sample-complexity needs an uncontrolled state variable");
  if (!(opts.delta > 0.0 && opts.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
  if (opts.trials == 0 || opts.sample_sizes.empty()) throw ConfigError("need at least one trial and one sample size");

  SampleComplexityResult result;
  result.x_size = 1.0;
  double rest = 1.0;
  for (std::size_t m = 0; m < mdp.num_vars(); ++m) {
    (mdp.owner_block(static_cast<int>(m)) < 0 ? result.x_size : rest) *= truth.state_vars[m].cardinality;
  }
  result.y_size = static_cast<double>(mdp.num_states()) * rest;

  const std::size_t jobs = opts.sample_sizes.size() * opts.trials;
  result.trials.resize(jobs);
  auto run = [&](std::size_t job) {
    const std::size_t n = opts.sample_sizes[job / opts.trials];
    const std::size_t trial = job % opts.trials;
    Rng rng(derive_seed(opts.seed, job));
    std::vector<TabularTransition> samples(n);
    for (auto& t : samples) {
      t.s = uniform_index(rng, mdp.num_states());
      t.a = mdp.decode_action(uniform_index(rng, mdp.num_joint_actions()));
      t.s_next = sample_next(mdp, t.s, t.a, rng);
      t.r = mdp.reward(t.s, t.a, t.s_next);
    }
    const auto model = learn_model(samples, truth);
    SampleComplexityTrial rec{n, trial, 0.0, 0.0, model.zero_count_cells().size()};
    for (int m : mdp.uncontrolled_vars()) {
      const auto mu = static_cast<std::size_t>(m);
      const auto& want = truth.noop_dynamics[mu].table;
      for (std::size_t r = 0; r < want.size(); ++r) {
        if (model.noop_counts[mu][r] == 0) {
          rec.dynamics_error = std::max(rec.dynamics_error, 1.0);
          continue;
        }
        for (std::size_t v = 0; v < want[r].size(); ++v) {
          rec.dynamics_error =
              std::max(rec.dynamics_error, std::abs(model.spec.noop_dynamics[mu].table[r][v] - want[r][v]));
        }
      }
    }
    std::size_t cells = 0, wrong = 0;
    for (std::size_t k = 0; k < mdp.num_blocks(); ++k) {
      for (std::size_t a = 0; a < truth.sigma[k].size(); ++a) {
        for (std::size_t pre = 0; pre < truth.sigma[k][a].size(); ++pre) {
          ++cells;
          if (model.sigma_counts[k][a][pre] == 0 || model.spec.sigma[k][a][pre] != truth.sigma[k][a][pre]) ++wrong;
        }
      }
    }
    rec.sigma_error_rate = cells ? static_cast<double>(wrong) / static_cast<double>(cells) : 0.0;
    result.trials[job] = rec;
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(opts.threads, jobs));
  if (threads == 1) {
    for (std::size_t j = 0; j < jobs; ++j) run(j);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t j = w; j < jobs; j += threads) run(j);
      });
    }
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < opts.sample_sizes.size(); ++i) {
    std::vector<double> errs, sig;
    for (std::size_t t = 0; t < opts.trials; ++t) {
      errs.push_back(result.trials[i * opts.trials + t].dynamics_error);
      sig.push_back(result.trials[i * opts.trials + t].sigma_error_rate);
    }
    const auto n = opts.sample_sizes[i];
    result.rows.push_back({n, quantile(errs, 0.5), quantile(errs, 1.0 - opts.delta),
                           error_bound(result.x_size, result.y_size, static_cast<double>(n), opts.delta),
                           quantile(sig, 0.5)});
  }
  return result;
}

}  // namespace frl::tabular
