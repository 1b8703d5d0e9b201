#include "frl/envs/synthetic.hpp"

#include <algorithm>
#include <random>
#include <string>

#include "frl/error.hpp"

namespace frl::envs {
namespace {

using mdp::ConditionalTable;
using mdp::FactoredMdpSpec;
using Rng = std::mt19937_64;

std::vector<double> positive_distribution(Rng& rng, int n) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> p(static_cast<std::size_t>(n));
  double total = 0.0;
  for (auto& x : p) total += (x = u(rng));
  double partial = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) partial += (p[i] /= total);
  p.back() = 1.0 - partial;
  return p;
}

std::size_t radix_product(const FactoredMdpSpec& spec, const std::vector<int>& vars) {
  std::size_t n = 1;
  for (int v : vars) n *= static_cast<std::size_t>(spec.state_vars[static_cast<std::size_t>(v)].cardinality);
  return n;
}

ConditionalTable random_cpt(Rng& rng, const FactoredMdpSpec& spec, int var, std::vector<int> parents,
                            std::vector<int> next_parents) {
  ConditionalTable c;
  c.parents = std::move(parents);
  c.next_parents = std::move(next_parents);
  const std::size_t rows = radix_product(spec, c.parents) * radix_product(spec, c.next_parents);
  const int card = spec.state_vars[static_cast<std::size_t>(var)].cardinality;
  for (std::size_t r = 0; r < rows; ++r) c.table.push_back(positive_distribution(rng, card));
  return c;
}

mdp::InterventionTable random_sigma(Rng& rng, const FactoredMdpSpec& spec, int n_actions,
                                    const std::vector<int>& pre, const std::vector<int>& eff) {
  mdp::InterventionTable t(static_cast<std::size_t>(n_actions));
  const std::size_t pre_rows = radix_product(spec, pre);
  for (auto& per_action : t) {
    per_action.resize(pre_rows);
    for (auto& values : per_action) {
      for (int v : eff) {
        const int card = spec.state_vars[static_cast<std::size_t>(v)].cardinality;
        values.push_back(std::uniform_int_distribution<int>(0, card - 1)(rng));
      }
    }
  }
  return t;
}

double scaled_value(int value, int card) {
  return card > 1 ? static_cast<double>(value) / (card - 1) : 0.0;
}

std::vector<int> cardinalities_of(const SyntheticSpec& s) {
  if (s.cardinalities.empty()) return std::vector<int>(static_cast<std::size_t>(s.num_vars()), s.cardinality);
  return s.cardinalities;
}

void check_sizes(const SyntheticSpec& s) {
  if (s.num_blocks < 1) throw ConfigError("synthetic spec needs at least one block");
  if (s.vars_per_block < 1) throw ConfigError("synthetic spec needs vars_per_block >= 1");
  if (s.num_uncontrolled < 0) throw ConfigError("num_uncontrolled must be non-negative");
  if (s.actions_per_block < 1) throw ConfigError("actions_per_block must be positive");
  if (!s.cardinalities.empty() && static_cast<int>(s.cardinalities.size()) != s.num_vars()) {
    throw ConfigError("cardinalities lists " + std::to_string(s.cardinalities.size()) +
                      " variables but the structure has " + std::to_string(s.num_vars()));
  }
  for (int c : cardinalities_of(s)) {
    if (c < 1) throw ConfigError("variable cardinalities must be positive");
  }
  if (!(s.discount >= 0.0 && s.discount < 1.0)) {
    throw ConfigError("synthetic specs use a discount in [0, 1)");
  }
  if (s.structure == Structure::non_separable && s.num_blocks < 2) {
    throw ConfigError("a non-separable structure needs at least two blocks");
  }
  if (s.structure == Structure::fully_separable && s.reward == RewardKind::xor_nonmonotonic) {
    throw ConfigError("xor reward couples blocks; it cannot be fully separable");
  }
}

void fill_init(Rng& rng, FactoredMdpSpec& spec) {
  std::size_t n = 1;
  for (const auto& v : spec.state_vars) n *= static_cast<std::size_t>(v.cardinality);
  spec.init_dist = positive_distribution(rng, static_cast<int>(n));
}

}  // namespace

std::vector<FactoredMdpSpec> generate_fully_separable_parts(const SyntheticSpec& s) {
  check_sizes(s);
  if (s.structure != Structure::fully_separable) {
    throw ConfigError("sub-MDP parts exist only for fully-separable structures");
  }
  const auto cards = cardinalities_of(s);
  const int k_blocks = s.num_blocks;
  const int controlled = k_blocks * s.vars_per_block;
  Rng rng(s.seed);
  std::uniform_real_distribution<double> weight(0.5, 1.5);

  std::vector<FactoredMdpSpec> parts;
  for (int k = 0; k < k_blocks; ++k) {
    FactoredMdpSpec part;
    part.discount = s.discount;
    part.assume_positive = true;
    std::vector<int> own;
    for (int j = 0; j < s.vars_per_block; ++j) {
      const int global = k * s.vars_per_block + j;
      part.state_vars.push_back({"x" + std::to_string(global), cards[static_cast<std::size_t>(global)]});
      own.push_back(j);
    }
    std::vector<int> noise;
    for (int u = 0; u < s.num_uncontrolled; ++u) {
      if (u % k_blocks != k) continue;
      const int global = controlled + u;
      noise.push_back(static_cast<int>(part.state_vars.size()));
      part.state_vars.push_back({"u" + std::to_string(u), cards[static_cast<std::size_t>(global)]});
    }
    part.action_blocks.push_back({"a" + std::to_string(k), {s.actions_per_block}, std::nullopt});
    part.eff_map = {own};
    part.pre_map = {own};
    part.sigma = {random_sigma(rng, part, s.actions_per_block, own, own)};
    for (int v : own) part.noop_dynamics.push_back(random_cpt(rng, part, v, own, {}));
    for (int v : noise) part.noop_dynamics.push_back(random_cpt(rng, part, v, {v}, own));

    const double w = weight(rng);
    const MixedRadix codec([&] {
      std::vector<int> r;
      for (const auto& sv : part.state_vars) r.push_back(sv.cardinality);
      return r;
    }());
    part.reward.next_state.resize(codec.size());
    for (std::size_t idx = 0; idx < codec.size(); ++idx) {
      const auto values = codec.decode(idx);
      double r = 0.0;
      for (int v : own) r += scaled_value(values[static_cast<std::size_t>(v)], part.state_vars[static_cast<std::size_t>(v)].cardinality);
      part.reward.next_state[idx] = w * r;
    }
    fill_init(rng, part);
    parts.push_back(std::move(part));
  }
  return parts;
}

FactoredMdpSpec compose_product(const std::vector<FactoredMdpSpec>& parts) {
  if (parts.empty()) throw ConfigError("compose_product needs at least one part");
  FactoredMdpSpec joint;
  joint.discount = parts.front().discount;
  joint.assume_positive = true;
  std::vector<int> offsets;
  for (const auto& part : parts) {
    if (part.discount != joint.discount) throw ConfigError("parts must share a discount");
    if (!part.terminal_states.empty()) throw ConfigError("parts must not have terminal states");
    joint.assume_positive = joint.assume_positive && part.assume_positive;
    const int off = static_cast<int>(joint.state_vars.size());
    offsets.push_back(off);
    auto shift = [off](std::vector<int> v) {
      for (auto& x : v) x += off;
      return v;
    };
    joint.state_vars.insert(joint.state_vars.end(), part.state_vars.begin(), part.state_vars.end());
    joint.action_blocks.insert(joint.action_blocks.end(), part.action_blocks.begin(),
                               part.action_blocks.end());
    for (const auto& e : part.eff_map) joint.eff_map.push_back(shift(e));
    for (const auto& p : part.pre_map) joint.pre_map.push_back(shift(p));
    joint.sigma.insert(joint.sigma.end(), part.sigma.begin(), part.sigma.end());
    for (const auto& c : part.noop_dynamics) {
      joint.noop_dynamics.push_back({shift(c.parents), shift(c.next_parents), c.table});
    }
  }

  std::vector<MixedRadix> part_codecs;
  for (const auto& part : parts) {
    std::vector<int> r;
    for (const auto& sv : part.state_vars) r.push_back(sv.cardinality);
    part_codecs.emplace_back(std::move(r));
  }
  std::vector<int> all;
  for (const auto& sv : joint.state_vars) all.push_back(sv.cardinality);
  const MixedRadix codec(all);

  auto split = [&](std::size_t idx) {
    const auto values = codec.decode(idx);
    std::vector<std::size_t> local;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto begin = values.begin() + offsets[p];
      std::vector<int> sub(begin, begin + static_cast<long>(parts[p].state_vars.size()));
      local.push_back(part_codecs[p].encode(sub));
    }
    return local;
  };

  const bool any_next = std::any_of(parts.begin(), parts.end(),
                                    [](const auto& p) { return !p.reward.next_state.empty(); });
  const bool any_pair = std::any_of(parts.begin(), parts.end(),
                                    [](const auto& p) { return !p.reward.state_next.empty(); });
  const bool any_cost = std::any_of(parts.begin(), parts.end(),
                                    [](const auto& p) { return !p.reward.block_cost.empty(); });
  std::vector<std::vector<std::size_t>> locals(codec.size());
  for (std::size_t idx = 0; idx < codec.size(); ++idx) locals[idx] = split(idx);

  joint.init_dist.assign(codec.size(), 1.0);
  if (any_next) joint.reward.next_state.assign(codec.size(), 0.0);
  if (any_pair) joint.reward.state_next.assign(codec.size(), std::vector<double>(codec.size(), 0.0));
  for (std::size_t idx = 0; idx < codec.size(); ++idx) {
    for (std::size_t p = 0; p < parts.size(); ++p) {
      joint.init_dist[idx] *= parts[p].init_dist[locals[idx][p]];
      if (!parts[p].reward.next_state.empty()) {
        joint.reward.next_state[idx] += parts[p].reward.next_state[locals[idx][p]];
      }
    }
  }
  if (any_pair) {
    for (std::size_t s = 0; s < codec.size(); ++s) {
      for (std::size_t sn = 0; sn < codec.size(); ++sn) {
        for (std::size_t p = 0; p < parts.size(); ++p) {
          if (parts[p].reward.state_next.empty()) continue;
          joint.reward.state_next[s][sn] += parts[p].reward.state_next[locals[s][p]][locals[sn][p]];
        }
      }
    }
  }
  if (any_cost) {
    for (const auto& part : parts) {
      for (std::size_t k = 0; k < part.action_blocks.size(); ++k) {
        if (part.reward.block_cost.empty()) {
          std::size_t n = 1;
          for (int c : part.action_blocks[k].cardinalities) n *= static_cast<std::size_t>(c);
          joint.reward.block_cost.emplace_back(n, 0.0);
        } else {
          joint.reward.block_cost.push_back(part.reward.block_cost[k]);
        }
      }
    }
  }
  // Renormalize so the product distribution sums to one within rounding.
  double partial = 0.0;
  for (std::size_t i = 0; i + 1 < joint.init_dist.size(); ++i) partial += joint.init_dist[i];
  joint.init_dist.back() = 1.0 - partial;
  return joint;
}

FactoredMdpSpec generate_synthetic(const SyntheticSpec& s) {
  check_sizes(s);
  if (s.structure == Structure::fully_separable) {
    return compose_product(generate_fully_separable_parts(s));
  }
  const auto cards = cardinalities_of(s);
  const int k_blocks = s.num_blocks;
  const int controlled = k_blocks * s.vars_per_block;
  Rng rng(s.seed);

  FactoredMdpSpec spec;
  spec.discount = s.discount;
  spec.assume_positive = true;
  for (int v = 0; v < s.num_vars(); ++v) {
    const std::string name = v < controlled ? "x" + std::to_string(v) : "u" + std::to_string(v - controlled);
    spec.state_vars.push_back({name, cards[static_cast<std::size_t>(v)]});
  }
  std::vector<std::vector<int>> own(static_cast<std::size_t>(k_blocks));
  std::vector<int> leads;
  for (int k = 0; k < k_blocks; ++k) {
    for (int j = 0; j < s.vars_per_block; ++j) own[static_cast<std::size_t>(k)].push_back(k * s.vars_per_block + j);
    leads.push_back(k * s.vars_per_block);
  }
  std::vector<int> noise;
  for (int u = 0; u < s.num_uncontrolled; ++u) noise.push_back(controlled + u);

  for (int k = 0; k < k_blocks; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    spec.action_blocks.push_back({"a" + std::to_string(k), {s.actions_per_block}, std::nullopt});
    auto eff = own[ku];
    if (s.structure == Structure::non_separable && k == 0) eff.push_back(leads[1]);
    spec.eff_map.push_back(eff);
    auto pre = own[ku];
    if (s.reward == RewardKind::xor_nonmonotonic && !noise.empty()) pre.push_back(noise.front());
    spec.pre_map.push_back(pre);
  }
  for (int k = 0; k < k_blocks; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    spec.sigma.push_back(random_sigma(rng, spec, s.actions_per_block, spec.pre_map[ku], spec.eff_map[ku]));
  }
  for (int v = 0; v < s.num_vars(); ++v) {
    if (v < controlled) {
      auto parents = own[static_cast<std::size_t>(v / s.vars_per_block)];
      if (!noise.empty()) parents.push_back(noise.front());
      spec.noop_dynamics.push_back(random_cpt(rng, spec, v, parents, {}));
    } else {
      spec.noop_dynamics.push_back(random_cpt(rng, spec, v, {v}, leads));
    }
  }

  std::uniform_real_distribution<double> weight(0.5, 1.5);
  std::vector<double> w(static_cast<std::size_t>(k_blocks));
  for (auto& x : w) x = weight(rng);
  const MixedRadix codec([&] {
    std::vector<int> r;
    for (const auto& sv : spec.state_vars) r.push_back(sv.cardinality);
    return r;
  }());
  spec.reward.next_state.resize(codec.size());
  for (std::size_t idx = 0; idx < codec.size(); ++idx) {
    const auto values = codec.decode(idx);
    double r = 0.0;
    if (s.reward == RewardKind::additive_monotonic) {
      for (int k = 0; k < k_blocks; ++k) {
        for (int v : own[static_cast<std::size_t>(k)]) {
          r += w[static_cast<std::size_t>(k)] * scaled_value(values[static_cast<std::size_t>(v)], cards[static_cast<std::size_t>(v)]);
        }
      }
    } else {
      const int first = values[static_cast<std::size_t>(leads.front())];
      const bool agree = std::all_of(leads.begin(), leads.end(),
                                     [&](int v) { return values[static_cast<std::size_t>(v)] == first; });
      r = agree ? 1.0 + first : 0.0;
    }
    spec.reward.next_state[idx] = r;
  }
  fill_init(rng, spec);
  return spec;
}

}  // namespace frl::envs
