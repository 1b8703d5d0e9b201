#include "frl/factored_mdp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "frl/error.hpp"

namespace frl::mdp {
namespace {

constexpr double kRowSumTol = 1e-12;
constexpr std::size_t kMaxStates = 10'000'000;

std::string join_values(std::span<const int> values) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << (i ? "," : "") << values[i];
  }
  os << ")";
  return os.str();
}

std::string block_label(const FactoredMdpSpec& spec, std::size_t k) {
  const auto& name = spec.action_blocks[k].name;
  return "block " + std::to_string(k) + (name.empty() ? "" : " '" + name + "'");
}

std::string var_label(const FactoredMdpSpec& spec, int m) {
  const auto& name = spec.state_vars[static_cast<std::size_t>(m)].name;
  return "state variable " + std::to_string(m) + (name.empty() ? "" : " '" + name + "'");
}

std::size_t product_of(std::span<const int> radices) {
  std::size_t n = 1;
  for (int r : radices) n *= static_cast<std::size_t>(std::max(r, 0));
  return n;
}

std::vector<int> cards_of(const FactoredMdpSpec& spec, std::span<const int> vars) {
  std::vector<int> out;
  out.reserve(vars.size());
  for (int v : vars) out.push_back(spec.state_vars[static_cast<std::size_t>(v)].cardinality);
  return out;
}

bool indices_ok(std::span<const int> vars, std::size_t m) {
  std::vector<int> sorted(vars.begin(), vars.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) return false;
  return std::all_of(vars.begin(), vars.end(),
                     [m](int v) { return v >= 0 && static_cast<std::size_t>(v) < m; });
}

bool row_is_distribution(const std::vector<double>& row, bool strictly_positive) {
  double sum = 0.0;
  for (double p : row) {
    if (!std::isfinite(p) || p < 0.0) return false;
    if (strictly_positive && p <= 0.0) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= kRowSumTol;
}

}  // namespace

std::vector<std::string> structural_issues(const FactoredMdpSpec& spec) {
  std::vector<std::string> issues;
  const std::size_t m = spec.state_vars.size();
  const std::size_t k_blocks = spec.action_blocks.size();
  if (m == 0) issues.push_back("state_vars is empty");
  if (k_blocks == 0) issues.push_back("action_blocks is empty");
  for (std::size_t i = 0; i < m; ++i) {
    if (spec.state_vars[i].cardinality < 1) {
      issues.push_back(var_label(spec, static_cast<int>(i)) + " has cardinality < 1");
    }
  }
  for (std::size_t k = 0; k < k_blocks; ++k) {
    const auto& blk = spec.action_blocks[k];
    if (blk.cardinalities.empty() ||
        std::any_of(blk.cardinalities.begin(), blk.cardinalities.end(),
                    [](int c) { return c < 1; })) {
      issues.push_back(block_label(spec, k) + " has an empty or non-positive action space");
    } else if (blk.noop_action &&
               (*blk.noop_action < 0 ||
                static_cast<std::size_t>(*blk.noop_action) >= product_of(blk.cardinalities))) {
      issues.push_back(block_label(spec, k) + " noop_action out of range");
    }
  }
  if (!issues.empty()) return issues;

  std::vector<int> all_cards = cards_of(spec, [&] {
    std::vector<int> v(m);
    std::iota(v.begin(), v.end(), 0);
    return v;
  }());
  double state_count = 1.0;
  for (int c : all_cards) state_count *= c;
  if (state_count > static_cast<double>(kMaxStates)) {
    issues.push_back("joint state space too large for dense tables");
    return issues;
  }
  const std::size_t n_states = product_of(all_cards);

  if (spec.eff_map.size() != k_blocks) issues.push_back("eff_map must have one entry per block");
  if (spec.pre_map.size() != k_blocks) issues.push_back("pre_map must have one entry per block");
  if (spec.sigma.size() != k_blocks) issues.push_back("sigma must have one table per block");
  if (spec.noop_dynamics.size() != m) {
    issues.push_back("noop_dynamics must have one table per state variable");
  }
  if (!issues.empty()) return issues;

  std::vector<char> controlled(m, 0);
  for (std::size_t k = 0; k < k_blocks; ++k) {
    if (spec.eff_map[k].empty()) issues.push_back(block_label(spec, k) + " has an empty Eff set");
    if (!indices_ok(spec.eff_map[k], m)) {
      issues.push_back(block_label(spec, k) + " eff_map has invalid or duplicate indices");
      continue;
    }
    if (!indices_ok(spec.pre_map[k], m)) {
      issues.push_back(block_label(spec, k) + " pre_map has invalid or duplicate indices");
      continue;
    }
    for (int v : spec.eff_map[k]) controlled[static_cast<std::size_t>(v)] = 1;

    const auto& blk = spec.action_blocks[k];
    const std::size_t n_actions = product_of(blk.cardinalities);
    const auto pre_cards = cards_of(spec, spec.pre_map[k]);
    const auto eff_cards = cards_of(spec, spec.eff_map[k]);
    const MixedRadix pre_codec(pre_cards);
    const auto& table = spec.sigma[k];
    if (table.size() != n_actions) {
      issues.push_back(block_label(spec, k) + " sigma has " + std::to_string(table.size()) +
                       " action rows, expected " + std::to_string(n_actions));
      continue;
    }
    for (std::size_t a = 0; a < n_actions; ++a) {
      const bool is_noop = blk.noop_action && static_cast<std::size_t>(*blk.noop_action) == a;
      if (table[a].size() != pre_codec.size()) {
        if (is_noop && table[a].empty()) continue;
        issues.push_back(block_label(spec, k) + " sigma action " + std::to_string(a) + " has " +
                         std::to_string(table[a].size()) + " Pre rows, expected " +
                         std::to_string(pre_codec.size()));
        continue;
      }
      for (std::size_t p = 0; p < table[a].size(); ++p) {
        const auto& eff = table[a][p];
        if (eff.empty() && is_noop) continue;
        if (eff.empty()) {
          issues.push_back("sigma undefined for " + block_label(spec, k) + " action " +
                           std::to_string(a) + " at Pre values " +
                           join_values(pre_codec.decode(p)));
          continue;
        }
        bool ok = eff.size() == eff_cards.size();
        for (std::size_t j = 0; ok && j < eff.size(); ++j) {
          ok = eff[j] >= 0 && eff[j] < eff_cards[j];
        }
        if (!ok) {
          issues.push_back("sigma entry out of range for " + block_label(spec, k) + " action " +
                           std::to_string(a) + " at Pre values " +
                           join_values(pre_codec.decode(p)));
        }
      }
    }
  }
  if (!issues.empty()) return issues;

  for (std::size_t i = 0; i < m; ++i) {
    const auto& cpt = spec.noop_dynamics[i];
    const int var = static_cast<int>(i);
    if (!indices_ok(cpt.parents, m) || !indices_ok(cpt.next_parents, m)) {
      issues.push_back(var_label(spec, var) + " CPT has invalid parent indices");
      continue;
    }
    if (controlled[i] && !cpt.next_parents.empty()) {
      issues.push_back(var_label(spec, var) +
                       " is controlled; its no-op CPT may only read the current state");
      continue;
    }
    bool bad_next = false;
    for (int p : cpt.next_parents) {
      if (!controlled[static_cast<std::size_t>(p)]) bad_next = true;
    }
    if (bad_next) {
      issues.push_back(var_label(spec, var) + " CPT next_parents must be Eff variables");
      continue;
    }
    std::vector<int> radices = cards_of(spec, cpt.parents);
    const auto next_cards = cards_of(spec, cpt.next_parents);
    radices.insert(radices.end(), next_cards.begin(), next_cards.end());
    const std::size_t rows = product_of(radices);
    if (cpt.table.size() != rows) {
      issues.push_back(var_label(spec, var) + " CPT has " + std::to_string(cpt.table.size()) +
                       " rows, expected " + std::to_string(rows));
      continue;
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const auto& row = cpt.table[r];
      if (row.size() != static_cast<std::size_t>(spec.state_vars[i].cardinality)) {
        issues.push_back(var_label(spec, var) + " CPT row " + std::to_string(r) +
                         " has wrong width");
        break;
      }
      if (!row_is_distribution(row, spec.assume_positive)) {
        issues.push_back(var_label(spec, var) + " CPT row " + std::to_string(r) +
                         (spec.assume_positive ? " is not a strictly positive distribution"
                                               : " is not a probability distribution"));
        break;
      }
    }
  }

  const auto& rw = spec.reward;
  auto finite = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
  };
  if (!rw.next_state.empty() && (rw.next_state.size() != n_states || !finite(rw.next_state))) {
    issues.push_back("reward.next_state must have one finite entry per joint state");
  }
  if (!rw.state_next.empty()) {
    bool ok = rw.state_next.size() == n_states;
    for (std::size_t s = 0; ok && s < n_states; ++s) {
      ok = rw.state_next[s].size() == n_states && finite(rw.state_next[s]);
    }
    if (!ok) issues.push_back("reward.state_next must be a finite |S| x |S| table");
  }
  if (!rw.block_cost.empty()) {
    bool ok = rw.block_cost.size() == k_blocks;
    for (std::size_t k = 0; ok && k < k_blocks; ++k) {
      ok = rw.block_cost[k].size() == product_of(spec.action_blocks[k].cardinalities) &&
           finite(rw.block_cost[k]);
    }
    if (!ok) issues.push_back("reward.block_cost must have one finite entry per block action");
  }

  if (spec.init_dist.size() != n_states || !row_is_distribution(spec.init_dist, false)) {
    issues.push_back("init_dist must be a probability vector over " + std::to_string(n_states) +
                     " joint states");
  }
  if (!(spec.discount >= 0.0 && spec.discount <= 1.0)) {
    issues.push_back("discount must lie in [0, 1]");
  } else if (spec.discount == 1.0 && spec.terminal_states.empty()) {
    issues.push_back("discount = 1 requires absorbing terminal_states");
  }
  for (StateIndex t : spec.terminal_states) {
    if (t >= n_states) issues.push_back("terminal state " + std::to_string(t) + " out of range");
  }
  return issues;
}

std::optional<std::string> partition_violation(const FactoredMdpSpec& spec) {
  std::vector<int> owner(spec.state_vars.size(), -1);
  for (std::size_t k = 0; k < spec.eff_map.size(); ++k) {
    for (int v : spec.eff_map[k]) {
      if (v < 0 || static_cast<std::size_t>(v) >= owner.size()) continue;
      auto& o = owner[static_cast<std::size_t>(v)];
      if (o >= 0 && o != static_cast<int>(k)) {
        return var_label(spec, v) + " is in Eff of " +
               block_label(spec, static_cast<std::size_t>(o)) + " and " + block_label(spec, k);
      }
      o = static_cast<int>(k);
    }
  }
  return std::nullopt;
}

FactoredMdp::FactoredMdp(FactoredMdpSpec spec) : spec_(std::move(spec)) {
  auto issues = structural_issues(spec_);
  if (!issues.empty()) {
    std::string msg = "invalid factored MDP spec: " + issues.front();
    if (issues.size() > 1) msg += " (+" + std::to_string(issues.size() - 1) + " more)";
    throw ConfigError(msg);
  }
  if (auto violation = partition_violation(spec_)) {
    throw ConfigError("Eff sets do not partition the controlled variables: " + *violation);
  }

  const std::size_t m = spec_.state_vars.size();
  std::vector<int> cards;
  for (const auto& v : spec_.state_vars) cards.push_back(v.cardinality);
  states_ = MixedRadix(cards);

  std::vector<int> block_sizes;
  for (const auto& blk : spec_.action_blocks) {
    blocks_.emplace_back(blk.cardinalities);
    block_sizes.push_back(static_cast<int>(blocks_.back().size()));
  }
  joint_actions_ = MixedRadix(block_sizes);

  for (const auto& pre : spec_.pre_map) pre_codecs_.emplace_back(cards_of(spec_, pre));
  for (const auto& cpt : spec_.noop_dynamics) {
    auto radices = cards_of(spec_, cpt.parents);
    auto next = cards_of(spec_, cpt.next_parents);
    radices.insert(radices.end(), next.begin(), next.end());
    cpt_codecs_.emplace_back(std::move(radices));
  }

  owner_.assign(m, -1);
  for (std::size_t k = 0; k < spec_.eff_map.size(); ++k) {
    for (int v : spec_.eff_map[k]) owner_[static_cast<std::size_t>(v)] = static_cast<int>(k);
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (owner_[i] < 0) uncontrolled_.push_back(static_cast<int>(i));
  }
  terminal_.assign(states_.size(), 0);
  for (StateIndex t : spec_.terminal_states) terminal_[t] = 1;
}

JointAction FactoredMdp::decode_action(ActionIndex a) const {
  return joint_actions_.decode(a);
}

ActionIndex FactoredMdp::encode_action(const JointAction& a) const {
  for (std::size_t k = 0; k < a.size() && k < num_blocks(); ++k) {
    if (a[k] == kNoOp) throw DomainError("encode_action: block " + std::to_string(k) + " is padded");
  }
  return joint_actions_.encode(a);
}

bool FactoredMdp::intervenes(std::size_t k, int a_k) const {
  if (a_k == kNoOp) return false;
  const auto& noop = spec_.action_blocks[k].noop_action;
  return !(noop && *noop == a_k);
}

void FactoredMdp::check_action(const JointAction& a, bool allow_noop) const {
  if (a.size() != num_blocks()) {
    throw ShapeError("joint action has " + std::to_string(a.size()) + " blocks, expected " +
                     std::to_string(num_blocks()));
  }
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] == kNoOp && allow_noop) continue;
    if (a[k] < 0 || static_cast<std::size_t>(a[k]) >= blocks_[k].size()) {
      throw DomainError("action " + std::to_string(a[k]) + " out of range for " +
                        block_label(spec_, k));
    }
  }
}

const std::vector<int>& FactoredMdp::forced_effect(std::size_t k, int a_k,
                                                   std::span<const int> state) const {
  const auto& pre = spec_.pre_map[k];
  std::vector<int> pre_values(pre.size());
  for (std::size_t j = 0; j < pre.size(); ++j) pre_values[j] = state[static_cast<std::size_t>(pre[j])];
  const auto& eff = spec_.sigma[k][static_cast<std::size_t>(a_k)][pre_codecs_[k].encode(pre_values)];
  if (eff.empty()) {
    throw ConfigError("sigma undefined for " + block_label(spec_, k) + " action " +
                      std::to_string(a_k) + " at Pre values " + join_values(pre_values));
  }
  return eff;
}

const std::vector<double>& FactoredMdp::noop_row(int var, std::span<const int> state,
                                                 std::span<const int> next) const {
  const auto& cpt = spec_.noop_dynamics[static_cast<std::size_t>(var)];
  const auto& codec = cpt_codecs_[static_cast<std::size_t>(var)];
  std::vector<int> digits;
  digits.reserve(codec.digits());
  for (int p : cpt.parents) digits.push_back(state[static_cast<std::size_t>(p)]);
  for (int p : cpt.next_parents) digits.push_back(next[static_cast<std::size_t>(p)]);
  return cpt.table[codec.encode(digits)];
}

double FactoredMdp::noop_probability(int var, std::span<const int> state,
                                     std::span<const int> next) const {
  return noop_row(var, state, next)[static_cast<std::size_t>(next[static_cast<std::size_t>(var)])];
}

double FactoredMdp::reward(StateIndex s, const JointAction& a, StateIndex s_next) const {
  const auto& rw = spec_.reward;
  double r = 0.0;
  if (!rw.next_state.empty()) r += rw.next_state[s_next];
  if (!rw.state_next.empty()) r += rw.state_next[s][s_next];
  if (!rw.block_cost.empty()) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (a[k] != kNoOp) r += rw.block_cost[k][static_cast<std::size_t>(a[k])];
    }
  }
  return r;
}

SparseRow transition_support(const FactoredMdp& mdp, StateIndex s, const JointAction& a) {
  mdp.check_action(a, /*allow_noop=*/true);
  const auto state = mdp.decode_state(s);
  const std::size_t m = mdp.num_vars();
  const auto& spec = mdp.spec();

  std::vector<int> forced(m, -1);
  for (std::size_t k = 0; k < mdp.num_blocks(); ++k) {
    if (!mdp.intervenes(k, a[k])) continue;
    const auto& eff = mdp.forced_effect(k, a[k], state);
    for (std::size_t j = 0; j < eff.size(); ++j) {
      forced[static_cast<std::size_t>(spec.eff_map[k][j])] = eff[j];
    }
  }

  // Controlled variables first so that uncontrolled CPTs can read Eff'.
  std::vector<int> order;
  for (std::size_t i = 0; i < m; ++i) {
    if (mdp.owner_block(static_cast<int>(i)) >= 0) order.push_back(static_cast<int>(i));
  }
  for (int u : mdp.uncontrolled_vars()) order.push_back(u);

  SparseRow out;
  std::vector<int> next(m, 0);
  std::function<void(std::size_t, double)> expand = [&](std::size_t pos, double prob) {
    if (pos == order.size()) {
      out.emplace_back(mdp.encode_state(next), prob);
      return;
    }
    const int var = order[pos];
    const auto vi = static_cast<std::size_t>(var);
    if (forced[vi] >= 0) {
      next[vi] = forced[vi];
      expand(pos + 1, prob);
      return;
    }
    const auto& row = mdp.noop_row(var, state, next);
    for (std::size_t v = 0; v < row.size(); ++v) {
      if (row[v] <= 0.0) continue;
      next[vi] = static_cast<int>(v);
      expand(pos + 1, prob * row[v]);
    }
  };
  expand(0, 1.0);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<double> interventional_transition(const FactoredMdp& mdp, StateIndex s,
                                              const JointAction& a) {
  std::vector<double> dense(mdp.num_states(), 0.0);
  for (const auto& [sn, p] : transition_support(mdp, s, a)) dense[sn] += p;
  return dense;
}

JointAction pad_projected(const FactoredMdp& mdp, std::size_t k, int a_k) {
  if (k >= mdp.num_blocks()) {
    throw DomainError("block index " + std::to_string(k) + " out of range");
  }
  JointAction a(mdp.num_blocks(), kNoOp);
  a[k] = a_k;
  return a;
}

std::vector<double> projected_transition(const FactoredMdp& mdp, std::size_t k, StateIndex s,
                                         int a_k) {
  auto a = pad_projected(mdp, k, a_k);
  if (a_k == kNoOp) throw DomainError("projected action for block " + std::to_string(k) + " is kNoOp");
  return interventional_transition(mdp, s, a);
}

double noop_propensity(const FactoredMdp& mdp, std::size_t k, StateIndex s, StateIndex s_next,
                       const JointAction& a) {
  if (k >= mdp.num_blocks()) throw DomainError("block index " + std::to_string(k) + " out of range");
  mdp.check_action(a, /*allow_noop=*/true);
  const auto state = mdp.decode_state(s);
  const auto next = mdp.decode_state(s_next);
  const auto& spec = mdp.spec();
  double rho = 1.0;
  for (std::size_t i = 0; i < mdp.num_blocks(); ++i) {
    if (i == k || !mdp.intervenes(i, a[i])) continue;
    const auto& eff = mdp.forced_effect(i, a[i], state);
    for (std::size_t j = 0; j < eff.size(); ++j) {
      const int var = spec.eff_map[i][j];
      if (next[static_cast<std::size_t>(var)] != eff[j]) {
        throw DomainError("next state is inconsistent with the intervention of " +
                          block_label(spec, i) + " on " + var_label(spec, var));
      }
      const double p = mdp.noop_probability(var, state, next);
      if (p <= 0.0) {
        throw NumericError("zero no-op probability for " + var_label(spec, var) + " (factor of " +
                           block_label(spec, i) + ")");
      }
      rho *= p;
    }
  }
  return rho;
}

double expected_reward(const FactoredMdp& mdp, StateIndex s, const JointAction& a) {
  double total = 0.0;
  for (const auto& [sn, p] : transition_support(mdp, s, a)) total += p * mdp.reward(s, a, sn);
  return total;
}

double TransitionFactors::product() const {
  double p = uncontrolled;
  for (double b : blocks) p *= b;
  return p;
}

TransitionFactors transition_factors(const FactoredMdp& mdp, StateIndex s, const JointAction& a,
                                     StateIndex s_next) {
  mdp.check_action(a, /*allow_noop=*/true);
  const auto state = mdp.decode_state(s);
  const auto next = mdp.decode_state(s_next);
  const auto& spec = mdp.spec();
  TransitionFactors f;
  f.blocks.assign(mdp.num_blocks(), 1.0);
  for (std::size_t k = 0; k < mdp.num_blocks(); ++k) {
    if (mdp.intervenes(k, a[k])) {
      const auto& eff = mdp.forced_effect(k, a[k], state);
      for (std::size_t j = 0; j < eff.size(); ++j) {
        if (next[static_cast<std::size_t>(spec.eff_map[k][j])] != eff[j]) f.blocks[k] = 0.0;
      }
    } else {
      for (int var : spec.eff_map[k]) f.blocks[k] *= mdp.noop_probability(var, state, next);
    }
  }
  for (int var : mdp.uncontrolled_vars()) f.uncontrolled *= mdp.noop_probability(var, state, next);
  return f;
}

FactoredPolicy FactoredPolicy::constant(const FactoredMdp& mdp, const JointAction& a) {
  mdp.check_action(a, /*allow_noop=*/false);
  FactoredPolicy pi;
  for (std::size_t k = 0; k < mdp.num_blocks(); ++k) {
    pi.actions.emplace_back(mdp.num_states(), a[k]);
  }
  return pi;
}

JointAction FactoredPolicy::joint(StateIndex s) const {
  JointAction a(actions.size());
  for (std::size_t k = 0; k < actions.size(); ++k) a[k] = actions[k][s];
  return a;
}

QTable::QTable(std::optional<std::size_t> blk, std::size_t n_states, std::size_t n_actions)
    : block(blk), num_states(n_states), num_actions(n_actions), values(n_states * n_actions, 0.0) {}

std::size_t QTable::argmax(StateIndex s, double tie_tol) const {
  const double* row = values.data() + s * num_actions;
  const double best = *std::max_element(row, row + num_actions);
  for (std::size_t a = 0; a < num_actions; ++a) {
    if (row[a] >= best - tie_tol) return a;
  }
  return 0;
}

namespace {

/// One backup term: probability-like weight, immediate reward, successor.
struct Term {
  StateIndex next;
  double weight;
  double reward;
};
using Backup = std::vector<Term>;

void check_policy(const FactoredMdp& mdp, const FactoredPolicy& policy) {
  if (policy.actions.size() != mdp.num_blocks()) {
    throw ShapeError("factored policy has " + std::to_string(policy.actions.size()) +
                     " blocks, expected " + std::to_string(mdp.num_blocks()));
  }
  for (std::size_t k = 0; k < policy.actions.size(); ++k) {
    if (policy.actions[k].size() != mdp.num_states()) {
      throw ShapeError("factored policy block " + std::to_string(k) + " is not total");
    }
    for (int a : policy.actions[k]) {
      if (a < 0 || static_cast<std::size_t>(a) >= mdp.block_size(k)) {
        throw DomainError("factored policy block " + std::to_string(k) + " emits action " +
                          std::to_string(a));
      }
    }
  }
}

Backup plain_backup(const FactoredMdp& mdp, StateIndex s, const JointAction& a,
                    const JointAction& reward_action) {
  Backup b;
  for (const auto& [sn, p] : transition_support(mdp, s, a)) {
    b.push_back({sn, p, mdp.reward(s, reward_action, sn)});
  }
  return b;
}

/// Projected transition of block k reweighted by 1/rho_{-k} on the support
/// consistent with the other blocks' actions in `pinned`.
Backup weighted_backup(const FactoredMdp& mdp, std::size_t k, StateIndex s, int a_k,
                       const JointAction& pinned) {
  JointAction full = pinned;
  full[k] = a_k;
  const auto state = mdp.decode_state(s);
  const auto& spec = mdp.spec();
  Backup b;
  for (const auto& [sn, p] : transition_support(mdp, s, pad_projected(mdp, k, a_k))) {
    const auto next = mdp.decode_state(sn);
    bool consistent = true;
    for (std::size_t i = 0; i < mdp.num_blocks() && consistent; ++i) {
      if (i == k || !mdp.intervenes(i, full[i])) continue;
      const auto& eff = mdp.forced_effect(i, full[i], state);
      for (std::size_t j = 0; j < eff.size(); ++j) {
        if (next[static_cast<std::size_t>(spec.eff_map[i][j])] != eff[j]) consistent = false;
      }
    }
    if (!consistent) continue;
    const double rho = noop_propensity(mdp, k, s, sn, full);
    b.push_back({sn, p / rho, mdp.reward(s, full, sn)});
  }
  return b;
}

std::vector<double> solve_values(const FactoredMdp& mdp, const std::vector<Backup>& backups,
                                 const EvalOptions& opts) {
  const double gamma = mdp.discount();
  const std::size_t n = backups.size();
  std::vector<double> v(n, 0.0);
  // Sup-norm step that guarantees |V - V*| <= tol for a gamma-contraction.
  const double step_tol = gamma < 1.0 && gamma > 0.0 ? opts.tol * (1.0 - gamma) / gamma : opts.tol;
  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    residual = 0.0;
    for (StateIndex s = 0; s < n; ++s) {
      if (mdp.is_terminal(s)) continue;
      double nv = 0.0;
      for (const auto& t : backups[s]) nv += t.weight * (t.reward + gamma * v[t.next]);
      residual = std::max(residual, std::abs(nv - v[s]));
      v[s] = nv;
    }
    if (!std::isfinite(residual)) break;
    if (residual <= step_tol) return v;
  }
  throw NumericError("policy evaluation did not converge within " +
                     std::to_string(opts.max_iters) + " sweeps (residual " +
                     std::to_string(residual) + ")");
}

double backup_value(const Backup& b, const std::vector<double>& v, double gamma) {
  double q = 0.0;
  for (const auto& t : b) q += t.weight * (t.reward + gamma * v[t.next]);
  return q;
}

}  // namespace

std::vector<double> evaluate_joint_policy(const FactoredMdp& mdp,
                                          std::span<const JointAction> policy,
                                          const EvalOptions& opts) {
  if (policy.size() != mdp.num_states()) throw ShapeError("joint policy is not total");
  std::vector<Backup> backups(mdp.num_states());
  for (StateIndex s = 0; s < mdp.num_states(); ++s) {
    if (mdp.is_terminal(s)) continue;
    mdp.check_action(policy[s], /*allow_noop=*/false);
    backups[s] = plain_backup(mdp, s, policy[s], policy[s]);
  }
  return solve_values(mdp, backups, opts);
}

QTable exact_q(const FactoredMdp& mdp, const FactoredPolicy& policy, QMode mode,
               const EvalOptions& opts) {
  check_policy(mdp, policy);
  const std::size_t n = mdp.num_states();
  const double gamma = mdp.discount();

  if (mode.kind == QKind::joint) {
    std::vector<JointAction> joint(n);
    for (StateIndex s = 0; s < n; ++s) joint[s] = policy.joint(s);
    const auto v = evaluate_joint_policy(mdp, joint, opts);
    QTable q(std::nullopt, n, mdp.num_joint_actions());
    for (StateIndex s = 0; s < n; ++s) {
      if (mdp.is_terminal(s)) continue;
      for (ActionIndex a = 0; a < q.num_actions; ++a) {
        const auto ja = mdp.decode_action(a);
        q.at(s, a) = backup_value(plain_backup(mdp, s, ja, ja), v, gamma);
      }
    }
    return q;
  }

  const std::size_t k = mode.block;
  if (k >= mdp.num_blocks()) throw DomainError("block index " + std::to_string(k) + " out of range");
  const std::size_t n_actions = mdp.block_size(k);

  auto backup_for = [&](StateIndex s, int a_k) {
    if (mode.kind == QKind::projected) {
      const auto padded = pad_projected(mdp, k, a_k);
      return plain_backup(mdp, s, padded, padded);
    }
    return weighted_backup(mdp, k, s, a_k, policy.joint(s));
  };

  std::vector<Backup> on_policy(n);
  for (StateIndex s = 0; s < n; ++s) {
    if (!mdp.is_terminal(s)) on_policy[s] = backup_for(s, policy.actions[k][s]);
  }
  const auto v = solve_values(mdp, on_policy, opts);
  QTable q(k, n, n_actions);
  for (StateIndex s = 0; s < n; ++s) {
    if (mdp.is_terminal(s)) continue;
    for (std::size_t a = 0; a < n_actions; ++a) {
      q.at(s, a) = backup_value(backup_for(s, static_cast<int>(a)), v, gamma);
    }
  }
  return q;
}

std::vector<double> state_values(const QTable& q, const FactoredMdp& mdp,
                                 const FactoredPolicy& policy) {
  std::vector<double> v(q.num_states);
  for (StateIndex s = 0; s < q.num_states; ++s) {
    const std::size_t a = q.block ? static_cast<std::size_t>(policy.actions[*q.block][s])
                                  : mdp.encode_action(policy.joint(s));
    v[s] = q.at(s, a);
  }
  return v;
}

}  // namespace frl::mdp
