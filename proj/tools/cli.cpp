#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include "frl/agents/ad_bcq.hpp"
#include "frl/agents/ad_dqn.hpp"
#include "frl/envs/offline.hpp"
#include "frl/envs/point_mass.hpp"
#include "frl/envs/synthetic.hpp"
#include "frl/error.hpp"
#include "frl/ope.hpp"
#include "frl/spec_io.hpp"
#include "frl/tabular.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace frl::envs {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PointMassConfig, bins_per_axis, dt, damping, force_scale, box, goal,
                                    goal_radius, shaping, max_steps)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OfflineTaskOptions, num_blocks, actions_per_block, vital_levels, seed)

void to_json(json& j, Structure s) {
  j = s == Structure::fully_separable ? "fully_separable" : s == Structure::separable_effects ? "separable_effects"
                                                                                             : "non_separable";
}
void from_json(const json& j, Structure& s) {
  const auto v = j.get<std::string>();
  if (v == "fully_separable") s = Structure::fully_separable;
  else if (v == "separable_effects") s = Structure::separable_effects;
  else if (v == "non_separable") s = Structure::non_separable;
  else throw ConfigError("unknown structure '" + v + "'");
}
void to_json(json& j, RewardKind r) { j = r == RewardKind::additive_monotonic ? "additive_monotonic" : "xor_nonmonotonic"; }
void from_json(const json& j, RewardKind& r) {
  const auto v = j.get<std::string>();
  if (v == "additive_monotonic") r = RewardKind::additive_monotonic;
  else if (v == "xor_nonmonotonic") r = RewardKind::xor_nonmonotonic;
  else throw ConfigError("unknown reward kind '" + v + "'");
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SyntheticSpec, structure, num_blocks, vars_per_block, num_uncontrolled,
                                    cardinality, cardinalities, actions_per_block, discount, reward, seed)

}  // namespace frl::envs

namespace frl::cli {
namespace {

// ---------------------------------------------------------------- plumbing

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void check_keys(const json& j, const json& allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown " + what + " key '" + key + "'");
  }
}

/// Overrides the fields of `base` present in `j`; unknown keys are errors.
template <class T>
T merge(const json& j, T base, const std::string& what) {
  json b = base;
  check_keys(j, b, what);
  b.update(j);
  try {
    return b.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad " + what + " value: " + e.what());
  }
}

std::size_t env_threads() {
  const char* v = std::getenv("FRL_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("FRL_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

fs::path out_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* v = std::getenv("FRL_OUT"); v && *v) return v;
  return "runs";
}

/// "1-10", "1,2,5" or a mix.
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) {
      const auto dash = part.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoull(part));
      } else {
        const auto a = std::stoull(part.substr(0, dash)), b = std::stoull(part.substr(dash + 1));
        if (b < a) throw ConfigError("empty seed range '" + part + "'");
        for (auto x = a; x <= b; ++x) out.push_back(x);
      }
    }
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse seeds '" + s + "'");
  }
  if (out.empty()) throw ConfigError("no seeds given");
  return out;
}

std::string fmt(double x) {
  std::ostringstream o;
  o.precision(17);
  o << x;
  return o.str();
}

/// One run directory: config.json, metrics.jsonl (header line first),
/// checkpoints/, summary.csv. INCOMPLETE stays behind if the run fails.
class RunDir {
 public:
  RunDir(fs::path dir, const json& config) : dir_(std::move(dir)) {
    fs::create_directories(dir_ / "checkpoints");
    std::ofstream(dir_ / "INCOMPLETE") << "run did not finish\n";
    std::ofstream(dir_ / "config.json") << config.dump(2) << "\n";
    metrics_.open(dir_ / "metrics.jsonl", std::ios::trunc);
    metrics_ << json{{"header", config}}.dump() << "\n";
  }
  void metric(const json& m) { metrics_ << m.dump() << "\n"; }
  const fs::path& path() const { return dir_; }
  fs::path checkpoint(const std::string& name) const { return dir_ / "checkpoints" / (name + ".json"); }
  void summary(const std::string& csv) { std::ofstream(dir_ / "summary.csv") << csv; }
  void finish() {
    metrics_.close();
    fs::remove(dir_ / "INCOMPLETE");
  }

 private:
  fs::path dir_;
  std::ofstream metrics_;
};

/// Runs `fn(i)` for every item on FRL_THREADS workers; each call owns its
/// outputs. The first failure by item order is rethrown.
void fan_out(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min(env_threads(), std::max<std::size_t>(n, 1));
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  try {
    while (std::getline(ss, part, ',')) out.push_back(std::stod(part));
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse number list '" + s + "'");
  }
  return out;
}

// ---------------------------------------------------------------- validate

int cmd_validate(const std::string& path, bool require_a1, std::ostream& out, std::ostream& err) {
  const auto spec = mdp::load_spec(path);
  const auto issues = mdp::structural_issues(spec);
  for (const auto& i : issues) err << "error: " << i << "\n";
  if (!issues.empty()) return 2;
  if (const auto v = mdp::partition_violation(spec)) {
    if (require_a1) {
      err << "error: separable effects violated: " << *v << "\n";
      return 2;
    }
    out << "warning: separable effects violated: " << *v << "\n";
    return 0;
  }
  const mdp::FactoredMdp m(spec);
  out << "ok: " << spec.state_vars.size() << " variables, " << m.num_states() << " states, " << m.num_blocks()
      << " blocks, " << m.num_joint_actions() << " joint actions\n";
  return 0;
}

// ---------------------------------------------------------------- gen

struct DataOptions {
  std::size_t episodes = 5000;
  std::string behavior = "degraded";  ///< degraded | uniform
  double softening = 0.1;
  double degrade_fraction = 0.25;
  std::size_t degrade_block = 1;
  std::uint64_t degrade_seed = 7;
  std::size_t horizon = 20;
  std::uint64_t seed = 1;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DataOptions, episodes, behavior, softening, degrade_fraction,
                                    degrade_block, degrade_seed, horizon, seed)

int cmd_gen(const std::string& kind, const std::string& config, const std::string& spec_path,
            std::optional<std::uint64_t> seed, const std::string& output, std::ostream& out) {
  const json cfg = config.empty() ? json::object() : read_json_file(config);
  if (kind == "synthetic" || kind == "offline-task") {
    mdp::FactoredMdpSpec spec;
    if (kind == "synthetic") {
      auto s = merge(cfg, envs::SyntheticSpec{}, "synthetic");
      if (seed) s.seed = *seed;
      spec = envs::generate_synthetic(s);
    } else {
      auto o = merge(cfg, envs::OfflineTaskOptions{}, "offline-task");
      if (seed) o.seed = *seed;
      spec = envs::offline_task(o);
    }
    mdp::save_spec(spec, output);
    out << "wrote " << output << "\n";
    return 0;
  }
  if (kind == "offline-data") {
    if (spec_path.empty()) throw ConfigError("offline-data needs --spec");
    auto o = merge(cfg, DataOptions{}, "offline-data");
    if (seed) o.seed = *seed;
    const mdp::FactoredMdp m(mdp::load_spec(spec_path));
    envs::BehaviorPolicy beh;
    if (o.behavior == "uniform") {
      beh = envs::uniform_behavior(m);
    } else if (o.behavior == "degraded") {
      beh = envs::product_softened(m, envs::degraded_optimal_policy(m, o.degrade_fraction, o.degrade_block, o.degrade_seed),
                                   o.softening);
    } else {
      throw ConfigError("unknown behavior '" + o.behavior + "' (expected degraded or uniform)");
    }
    ope::save_episodes(envs::generate_offline_dataset(m, beh, o.episodes, o.seed, o.horizon), output);
    out << "wrote " << o.episodes << " episodes to " << output << "\n";
    return 0;
  }
  throw ConfigError("unknown --kind '" + kind + "' (expected synthetic, offline-task or offline-data)");
}

// ---------------------------------------------------------------- mbfpi

int cmd_mbfpi(const std::string& path, const std::string& order, std::uint64_t seed, const std::string& out_flag,
              std::ostream& out) {
  tabular::MbfpiOptions o;
  if (order == "random") o.order = tabular::BlockOrder::random;
  else if (order != "round_robin") throw ConfigError("unknown --order '" + order + "'");
  o.seed = seed;
  const mdp::FactoredMdp m(mdp::load_spec(path));
  const json config{{"command", "mbfpi"}, {"spec", path}, {"order", order}, {"seed", seed}};
  RunDir run(out_root(out_flag) / "mbfpi", config);
  const auto init = mdp::FactoredPolicy::constant(m, mdp::JointAction(m.num_blocks(), 0));
  const auto trace = tabular::mbfpi(m, init, o);
  const auto& init_dist = m.spec().init_dist;
  auto start_value = [&](const std::vector<double>& v) {
    double t = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) t += init_dist[s] * v[s];
    return t;
  };
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const auto& it = trace.iterations[i];
    run.metric({{"iteration", i + 1}, {"block", it.block}, {"changed", it.changed}, {"value", start_value(it.values)}});
  }
  const auto joint = tabular::joint_policy_iteration(m);
  std::ostringstream csv;
  csv << "state,mbfpi_value,joint_value\n";
  double gap = 0.0;
  for (std::size_t s = 0; s < m.num_states(); ++s) {
    csv << s << "," << fmt(trace.values[s]) << "," << fmt(joint.values[s]) << "\n";
    gap = std::max(gap, joint.values[s] - trace.values[s]);
  }
  run.summary(csv.str());
  run.finish();
  out << "mbfpi: " << trace.iterations.size() << " iterations, converged " << (trace.converged ? "yes" : "no")
      << ", start value " << fmt(start_value(trace.values)) << ", joint optimum " << fmt(start_value(joint.values))
      << ", max gap " << fmt(gap) << "\n";
  return 0;
}

// ---------------------------------------------------------------- sample-complexity

int cmd_sample_complexity(const std::string& path, const std::string& sizes, std::size_t trials, double delta,
                          std::uint64_t seed, const std::string& out_flag, std::ostream& out) {
  tabular::SampleComplexityOptions o;
  o.sample_sizes.clear();
  for (double n : parse_list(sizes)) {
    if (n < 1 || n != static_cast<double>(static_cast<std::size_t>(n))) throw ConfigError("sample sizes must be positive integers");
    o.sample_sizes.push_back(static_cast<std::size_t>(n));
  }
  o.trials = trials;
  o.delta = delta;
  o.seed = seed;
  o.threads = env_threads();
  const mdp::FactoredMdp m(mdp::load_spec(path));
  const json config{{"command", "sample-complexity"}, {"spec", path}, {"sizes", o.sample_sizes},
                    {"trials", trials}, {"delta", delta}, {"seed", seed}};
  RunDir run(out_root(out_flag) / "sample-complexity", config);
  const auto res = tabular::sample_complexity_experiment(m, o);
  for (const auto& t : res.trials) {
    run.metric({{"n", t.n}, {"trial", t.trial}, {"dynamics_error", t.dynamics_error},
                {"sigma_error_rate", t.sigma_error_rate}, {"zero_cells", t.zero_cells}});
  }
  std::ostringstream csv;
  csv << "n,median,upper_quantile,bound,sigma_error_median\n";
  for (const auto& r : res.rows) {
    csv << r.n << "," << fmt(r.median) << "," << fmt(r.upper_quantile) << "," << fmt(r.bound) << ","
        << fmt(r.sigma_error_median) << "\n";
    out << "N=" << r.n << " median " << r.median << " q" << 1 - delta << " " << r.upper_quantile << " bound "
        << r.bound << (r.upper_quantile <= r.bound ? "" : "  (above bound)") << "\n";
  }
  run.summary(csv.str());
  run.finish();
  return 0;
}

// ---------------------------------------------------------------- train-online

std::unique_ptr<agents::Environment> make_env(const json& env) {
  const auto kind = env.value("kind", std::string("point-mass"));
  if (kind == "point-mass") {
    json rest = env;
    rest.erase("kind");
    return std::make_unique<agents::PointMassTask>(merge(rest, envs::PointMassConfig{}, "point-mass env"));
  }
  if (kind == "tabular") {
    check_keys(env, json{{"kind", 0}, {"spec", 0}, {"horizon", 0}}, "tabular env");
    if (!env.contains("spec")) throw ConfigError("tabular env needs a spec path");
    auto m = std::make_shared<const mdp::FactoredMdp>(mdp::load_spec(env.at("spec").get<std::string>()));
    return std::make_unique<agents::TabularTask>(std::move(m), env.value("horizon", std::size_t{20}));
  }
  throw ConfigError("unknown env kind '" + kind + "'");
}

struct Experiment {
  std::string preset;
  std::vector<std::uint64_t> seeds;
  json env = json::object();
  json agent = json::object();
};

Experiment read_experiment(const std::string& config, const json& extra_allowed) {
  Experiment e;
  if (config.empty()) return e;
  const json j = read_json_file(config);
  json allowed{{"preset", 0}, {"seeds", 0}, {"env", 0}, {"agent", 0}};
  allowed.update(extra_allowed);
  check_keys(j, allowed, "experiment config");
  try {
    e.preset = j.value("preset", std::string());
    if (j.contains("seeds")) e.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    e.env = j.value("env", json::object());
    e.agent = j.value("agent", json::object());
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad experiment config: ") + ex.what());
  }
  return e;
}

int cmd_train_online(const std::string& config, const std::string& preset_flag, const std::string& seeds_flag,
                     std::optional<std::size_t> episodes, const std::string& out_flag, std::ostream& out) {
  auto e = read_experiment(config, json::object());
  if (!preset_flag.empty()) e.preset = preset_flag;
  if (e.preset.empty()) e.preset = e.agent.value("preset", std::string("DECQN"));
  if (!seeds_flag.empty()) e.seeds = parse_seeds(seeds_flag);
  if (e.seeds.empty()) e.seeds = {1};
  auto base = agents::online_preset(e.preset);
  agents::from_json(e.agent, base);
  if (episodes) base.episodes = *episodes;
  const auto env = make_env(e.env);  // validates before any run starts
  const fs::path root = out_root(out_flag) / e.preset;

  std::vector<std::string> lines(e.seeds.size());
  fan_out(e.seeds.size(), [&](std::size_t i) {
    auto cfg = base;
    cfg.seed = e.seeds[i];
    const json resolved{{"preset", e.preset}, {"seeds", {cfg.seed}}, {"env", e.env}, {"agent", cfg}};
    RunDir run(root / ("seed-" + std::to_string(cfg.seed)), resolved);
    std::ostringstream csv;
    csv << "episode,return,eval_return,epsilon,loss_full\n";
    agents::TrainHooks hooks;
    hooks.on_metrics = [&](const json& m) {
      run.metric(m);
      csv << m.at("episode") << "," << fmt(m.at("return")) << ","
          << (m.contains("eval_return") ? fmt(m.at("eval_return")) : "") << "," << fmt(m.at("epsilon")) << ","
          << fmt(m.at("loss_full")) << "\n";
    };
    hooks.on_checkpoint = [&](std::size_t ep, const approx::Checkpoint& c) {
      approx::save_checkpoint(c, run.checkpoint("episode-" + std::to_string(ep)));
    };
    const auto env_i = env->clone();
    const auto res = agents::ad_dqn_train(*env_i, cfg, hooks);
    approx::Checkpoint final_ck;
    final_ck.sections["q"] = res.net;
    final_ck.sections["config"] = cfg;
    approx::save_checkpoint(final_ck, run.checkpoint("final"));
    run.summary(csv.str());
    run.finish();
    std::ostringstream line;
    line << e.preset << " seed " << cfg.seed << ": " << res.episodes_run << " episodes";
    if (!res.metrics.empty() && res.metrics.back().contains("eval_return")) {
      line << ", last eval " << res.metrics.back().at("eval_return").get<double>();
    }
    if (cfg.success_return) {
      line << ", episodes to threshold "
           << (res.episodes_to_success ? std::to_string(*res.episodes_to_success) : std::string("not reached"));
    }
    for (const auto& w : res.warnings) line << "\n  warning: " << w;
    lines[i] = line.str();
  });
  for (const auto& l : lines) out << l << "\n";
  return 0;
}

// ---------------------------------------------------------------- train-offline

std::string tau_name(double t) {
  std::ostringstream o;
  o << t;
  return o.str();
}

int cmd_train_offline(const std::string& config, const std::string& preset_flag, const std::string& seeds_flag,
                      const std::string& spec_flag, const std::string& data_flag, const std::string& thresholds_flag,
                      std::optional<std::size_t> steps, const std::string& out_flag, std::ostream& out) {
  const json extra{{"spec", 0}, {"data", 0}, {"thresholds", 0}};
  auto e = read_experiment(config, extra);
  const json raw = config.empty() ? json::object() : read_json_file(config);
  std::string spec_path = raw.value("spec", std::string()), data_path = raw.value("data", std::string());
  std::vector<double> taus = raw.value("thresholds", agents::kBcqThresholds);
  if (!preset_flag.empty()) e.preset = preset_flag;
  if (e.preset.empty()) e.preset = e.agent.value("preset", std::string("AD-BCQ"));
  if (!seeds_flag.empty()) e.seeds = parse_seeds(seeds_flag);
  if (e.seeds.empty()) e.seeds = {1};
  if (!spec_flag.empty()) spec_path = spec_flag;
  if (!data_flag.empty()) data_path = data_flag;
  if (!thresholds_flag.empty()) taus = parse_list(thresholds_flag);
  if (!e.env.empty()) throw ConfigError("train-offline takes no env section");
  if (spec_path.empty() || data_path.empty()) throw ConfigError("train-offline needs --spec and --data");
  auto base = agents::offline_preset(e.preset);
  agents::from_json(e.agent, base);
  if (steps) base.steps = *steps;
  for (double t : taus) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("thresholds must lie in [0, 1]");
  }

  const mdp::FactoredMdp m(mdp::load_spec(spec_path));
  const auto data = ope::load_episodes(data_path);
  std::vector<int> sizes;
  for (std::size_t k = 0; k < m.num_blocks(); ++k) sizes.push_back(m.block_size(k));
  std::unique_ptr<agents::TabularAugmenter> aug;
  if (base.augmentation && !base.flat) {
    const auto model = tabular::learn_model(envs::tabular_transitions(data), m.spec());
    aug = std::make_unique<agents::TabularAugmenter>(std::make_shared<const mdp::FactoredMdp>(model.spec));
  }
  const fs::path root = out_root(out_flag) / e.preset;

  struct Job {
    double tau;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double t : taus) {
    for (auto s : e.seeds) jobs.push_back({t, s});
  }
  std::vector<std::string> lines(jobs.size());
  fan_out(jobs.size(), [&](std::size_t i) {
    auto cfg = base;
    cfg.threshold = jobs[i].tau;
    cfg.seed = jobs[i].seed;
    const json resolved{{"preset", e.preset}, {"seeds", {cfg.seed}}, {"thresholds", {cfg.threshold}},
                        {"spec", spec_path}, {"data", data_path}, {"agent", cfg}};
    RunDir run(root / ("tau-" + tau_name(cfg.threshold)) / ("seed-" + std::to_string(cfg.seed)), resolved);
    std::ostringstream csv;
    csv << "step,loss_q,loss_g\n";
    const auto res = agents::ad_bcq_train(data, sizes, cfg, aug.get(), [&](const json& mt) {
      run.metric(mt);
      csv << mt.at("step") << "," << fmt(mt.at("loss_q")) << "," << fmt(mt.at("loss_g")) << "\n";
    });
    for (const auto& snap : res.snapshots) {
      approx::Checkpoint ck;
      ck.sections["heads"] = snap.heads;
      ck.sections["step"] = snap.step;
      approx::save_checkpoint(ck, run.checkpoint("step-" + std::to_string(snap.step)));
    }
    run.summary(csv.str());
    run.finish();
    lines[i] = e.preset + " tau " + tau_name(cfg.threshold) + " seed " + std::to_string(cfg.seed) + ": " +
               std::to_string(res.snapshots.size()) + " checkpoints";
  });
  for (const auto& l : lines) out << l << "\n";
  return 0;
}

// ---------------------------------------------------------------- ope / select

int cmd_ope(const std::string& runs, const std::string& data_path, double epsilon, double discount,
            const std::string& spec_path, std::size_t horizon, const std::string& output, std::ostream& out) {
  const auto data = ope::load_episodes(data_path);
  if (data.empty()) throw ConfigError(data_path + " holds no episodes");
  std::optional<mdp::FactoredMdp> m;
  if (!spec_path.empty()) m.emplace(mdp::load_spec(spec_path));
  std::vector<fs::path> files;
  if (!fs::exists(runs)) throw ConfigError("no such run directory " + runs);
  for (const auto& entry : fs::recursive_directory_iterator(runs)) {
    const auto& p = entry.path();
    if (entry.is_regular_file() && p.parent_path().filename() == "checkpoints" &&
        p.filename().string().rfind("step-", 0) == 0) {
      files.push_back(p);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no offline checkpoints under " + runs);

  std::ostringstream csv;
  csv << "id,wis,ess,clipped" << (m ? ",true_value" : "") << "\n";
  for (const auto& f : files) {
    const auto heads = agents::BcqHeads::from_json(approx::load_checkpoint(f).sections.at("heads"));
    const auto num_actions = agents::joint_size(heads.env_blocks.empty() ? heads.config().block_sizes : heads.env_blocks);
    ope::WisOptions o;
    o.discount = discount;
    const auto res = ope::wis_ess(data, ope::soften([&](const ope::EpisodeStep& st) { return heads.act(st.state); },
                                                    num_actions, epsilon), o);
    csv << fs::relative(f, runs).generic_string() << "," << fmt(res.wis) << "," << fmt(res.ess) << "," << res.clipped;
    if (m) {
      std::vector<mdp::JointAction> pol(m->num_states());
      for (std::size_t s = 0; s < pol.size(); ++s) pol[s] = heads.act(envs::one_hot_features(*m, s));
      const auto v = tabular::finite_horizon_values(*m, pol, horizon);
      double t = 0.0;
      for (std::size_t s = 0; s < v.size(); ++s) t += m->spec().init_dist[s] * v[s];
      csv << "," << fmt(t);
    }
    csv << "\n";
  }
  if (output.empty()) {
    out << csv.str();
  } else {
    std::ofstream(output) << csv.str();
    out << "wrote " << files.size() << " candidates to " << output << "\n";
  }
  return 0;
}

std::vector<ope::Candidate> read_candidates(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  std::getline(in, line);
  std::vector<ope::Candidate> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string id, wis, ess;
    std::getline(ss, id, ',');
    std::getline(ss, wis, ',');
    std::getline(ss, ess, ',');
    try {
      out.push_back({id, std::stod(wis), std::stod(ess)});
    } catch (const std::logic_error&) {
      throw DataError(path + ": malformed candidate line '" + line + "'");
    }
  }
  return out;
}

int cmd_select(const std::string& path, std::optional<double> cutoff, std::optional<double> fraction,
               std::optional<std::size_t> episodes, std::ostream& out) {
  if (cutoff.has_value() == fraction.has_value()) throw ConfigError("give exactly one of --cutoff and --cutoff-fraction");
  double c = cutoff.value_or(0.0);
  if (fraction) {
    if (!episodes) throw ConfigError("--cutoff-fraction needs --episodes");
    c = *fraction * static_cast<double>(*episodes);
  }
  out << ope::select_model(read_candidates(path), c) << "\n";
  return 0;
}

// ---------------------------------------------------------------- report

int cmd_report(const std::vector<std::string>& roots, const std::string& metric, const std::string& x_key,
               const std::string& output, std::ostream& out) {
  // preset -> x -> seed -> value
  std::map<std::string, std::map<double, std::map<std::uint64_t, double>>> table;
  std::size_t runs = 0;
  for (const auto& root : roots) {
    if (!fs::exists(root)) throw ConfigError("no such directory " + root);
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.path().filename() != "metrics.jsonl") continue;
      const auto dir = entry.path().parent_path();
      if (fs::exists(dir / "INCOMPLETE")) continue;
      const json cfg = read_json_file(dir / "config.json");
      const auto preset = cfg.value("preset", cfg.value("command", std::string("run")));
      const auto seeds = cfg.value("seeds", std::vector<std::uint64_t>{0});
      std::ifstream in(entry.path());
      std::string line;
      while (std::getline(in, line)) {
        const json m = json::parse(line);
        if (m.contains("header") || !m.contains(metric) || !m.contains(x_key)) continue;
        table[preset][m.at(x_key).get<double>()][seeds.front()] = m.at(metric).get<double>();
      }
      ++runs;
    }
  }
  if (table.empty()) throw ConfigError("no finished runs with metric '" + metric + "'");
  std::ostringstream csv;
  csv << "preset," << x_key << ",seeds,mean,q25,median,q75\n";
  for (const auto& [preset, rows] : table) {
    for (const auto& [x, by_seed] : rows) {
      std::vector<double> v;
      for (const auto& [seed, value] : by_seed) v.push_back(value);
      double mean = 0.0;
      for (double y : v) mean += y / static_cast<double>(v.size());
      csv << preset << "," << x << "," << v.size() << "," << fmt(mean) << "," << fmt(tabular::quantile(v, 0.25)) << ","
          << fmt(tabular::quantile(v, 0.5)) << "," << fmt(tabular::quantile(v, 0.75)) << "\n";
    }
  }
  if (output.empty()) {
    out << csv.str();
  } else {
    std::ofstream(output) << csv.str();
    out << "aggregated " << runs << " runs into " << output << "\n";
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Factored-action reinforcement learning experiments", "frl"};
  app.require_subcommand(1);
  std::string out_dir;

  auto* validate = app.add_subcommand("validate", "Check a factored MDP spec");
  std::string v_spec;
  bool require_a1 = false;
  validate->add_option("spec", v_spec, "Spec JSON")->required();
  validate->add_flag("--require-assumption-1", require_a1, "Fail unless every state variable has at most one acting block");

  auto* gen = app.add_subcommand("gen", "Generate specs and offline datasets");
  std::string g_kind = "synthetic", g_config, g_spec, g_output;
  std::optional<std::uint64_t> g_seed;
  gen->add_option("--kind", g_kind, "synthetic | offline-task | offline-data")->capture_default_str();
  gen->add_option("--config", g_config, "JSON with generator options");
  gen->add_option("--spec", g_spec, "Spec to sample episodes from (offline-data)");
  gen->add_option("--seed", g_seed);
  gen->add_option("-o,--output", g_output)->required();

  auto* mbfpi = app.add_subcommand("mbfpi", "Model-based factored policy iteration against joint policy iteration");
  std::string m_spec, m_order = "round_robin";
  std::uint64_t m_seed = 0;
  mbfpi->add_option("spec", m_spec)->required();
  mbfpi->add_option("--order", m_order, "round_robin | random")->capture_default_str();
  mbfpi->add_option("--seed", m_seed);
  mbfpi->add_option("--out", out_dir);

  auto* sc = app.add_subcommand("sample-complexity", "Model-learning error against the sample-size bound");
  std::string s_spec, s_sizes = "100,400,1600";
  std::size_t s_trials = 200;
  double s_delta = 0.1;
  std::uint64_t s_seed = 0;
  sc->add_option("spec", s_spec)->required();
  sc->add_option("--sizes", s_sizes)->capture_default_str();
  sc->add_option("--trials", s_trials)->capture_default_str();
  sc->add_option("--delta", s_delta)->capture_default_str();
  sc->add_option("--seed", s_seed);
  sc->add_option("--out", out_dir);

  auto* online = app.add_subcommand("train-online", "Train an online agent (AD-DQN family)");
  std::string o_config, o_preset, o_seeds;
  std::optional<std::size_t> o_episodes;
  online->add_option("--config", o_config, "Experiment JSON: preset, seeds, env, agent");
  online->add_option("--preset", o_preset);
  online->add_option("--seeds", o_seeds, "e.g. 1-10 or 1,3,5");
  online->add_option("--episodes", o_episodes);
  online->add_option("--out", out_dir);

  auto* offline = app.add_subcommand("train-offline", "Train offline agents (AD-BCQ, BCQ) over a threshold grid");
  std::string f_config, f_preset, f_seeds, f_spec, f_data, f_taus;
  std::optional<std::size_t> f_steps;
  offline->add_option("--config", f_config, "Experiment JSON: preset, seeds, spec, data, thresholds, agent");
  offline->add_option("--preset", f_preset);
  offline->add_option("--seeds", f_seeds);
  offline->add_option("--spec", f_spec);
  offline->add_option("--data", f_data);
  offline->add_option("--thresholds", f_taus, "Comma-separated list");
  offline->add_option("--steps", f_steps);
  offline->add_option("--out", out_dir);

  auto* opec = app.add_subcommand("ope", "WIS/ESS of every offline checkpoint under a directory");
  std::string e_runs, e_data, e_spec, e_output;
  double e_eps = 0.01, e_discount = 1.0;
  std::size_t e_horizon = 20;
  opec->add_option("--runs", e_runs)->required();
  opec->add_option("--data", e_data, "Validation episodes")->required();
  opec->add_option("--epsilon", e_eps, "Softening of the greedy policy")->capture_default_str();
  opec->add_option("--discount", e_discount)->capture_default_str();
  opec->add_option("--spec", e_spec, "Adds the exact finite-horizon value of each policy");
  opec->add_option("--horizon", e_horizon)->capture_default_str();
  opec->add_option("-o,--output", e_output);

  auto* sel = app.add_subcommand("select", "Pick the best candidate above an ESS cutoff");
  std::string c_path;
  std::optional<double> c_cutoff, c_fraction;
  std::optional<std::size_t> c_episodes;
  sel->add_option("--candidates", c_path)->required();
  sel->add_option("--cutoff", c_cutoff);
  sel->add_option("--cutoff-fraction", c_fraction);
  sel->add_option("--episodes", c_episodes, "Validation episode count for --cutoff-fraction");

  auto* report = app.add_subcommand("report", "Aggregate metrics across seeds into CSV");
  std::vector<std::string> r_roots;
  std::string r_metric = "eval_return", r_x = "episode", r_output;
  report->add_option("runs", r_roots)->required();
  report->add_option("--metric", r_metric)->capture_default_str();
  report->add_option("--x", r_x)->capture_default_str();
  report->add_option("-o,--output", r_output);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*validate) return cmd_validate(v_spec, require_a1, out, err);
    if (*gen) return cmd_gen(g_kind, g_config, g_spec, g_seed, g_output, out);
    if (*mbfpi) return cmd_mbfpi(m_spec, m_order, m_seed, out_dir, out);
    if (*sc) return cmd_sample_complexity(s_spec, s_sizes, s_trials, s_delta, s_seed, out_dir, out);
    if (*online) return cmd_train_online(o_config, o_preset, o_seeds, o_episodes, out_dir, out);
    if (*offline) return cmd_train_offline(f_config, f_preset, f_seeds, f_spec, f_data, f_taus, f_steps, out_dir, out);
    if (*opec) return cmd_ope(e_runs, e_data, e_eps, e_discount, e_spec, e_horizon, e_output, out);
    if (*sel) return cmd_select(c_path, c_cutoff, c_fraction, c_episodes, out);
    if (*report) return cmd_report(r_roots, r_metric, r_x, r_output, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace frl::cli
