#include "frl/agents/ad_dqn.hpp"

#include <cmath>
#include <deque>
#include <numeric>

#include "frl/agents/action_selection.hpp"
#include "frl/error.hpp"

namespace frl::agents {

using approx::Matrix;
using approx::RowVector;

std::vector<std::string> online_preset_names() {
  return {"DECQN", "DECQN-y", "AD-DQN-1y", "AD-DQN-1n", "AD-DQN-2y", "AD-DQN-2n", "AD-DQN-3n", "AD-DQN-4", "DQN"};
}

AdDqnConfig online_preset(const std::string& name) {
  AdDqnConfig c;
  c.preset = name;
  c.net.hidden = {512, 512};
  auto set = [&](bool shared, approx::MixerKind mixer, bool aug) {
    c.net.shared = shared;
    c.net.mixer = mixer;
    c.augmentation = aug;
  };
  using approx::MixerKind;
  if (name == "DECQN") set(true, MixerKind::average, false);
  else if (name == "DECQN-y") set(true, MixerKind::average, true);
  else if (name == "AD-DQN-1y") set(true, MixerKind::relu_mlp, true);
  else if (name == "AD-DQN-1n") set(true, MixerKind::relu_mlp, false);
  else if (name == "AD-DQN-2y") set(true, MixerKind::linear_2layer, true);
  else if (name == "AD-DQN-2n") set(true, MixerKind::linear_2layer, false);
  else if (name == "AD-DQN-3n") set(false, MixerKind::linear_2layer, false);
  else if (name == "AD-DQN-4") {
    set(true, MixerKind::linear_2layer, true);
    c.mode_switch_return = 500.0;
  } else if (name == "DQN") {
    set(true, MixerKind::average, false);
    c.flat = true;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

void to_json(nlohmann::json& j, const AdDqnConfig& c) {
  j = {{"preset", c.preset},
       {"hidden", c.net.hidden},
       {"shared", c.net.shared},
       {"mixer", approx::to_string(c.net.mixer)},
       {"mixer_hidden", c.net.mixer_hidden},
       {"mixer_layers", c.net.mixer_layers},
       {"flat", c.flat},
       {"augmentation", c.augmentation},
       {"mode_switch_return", c.mode_switch_return ? nlohmann::json(*c.mode_switch_return) : nlohmann::json()},
       {"mode_switch_scale", c.mode_switch_scale},
       {"mode_switch_window", c.mode_switch_window},
       {"discount", c.discount},
       {"episodes", c.episodes},
       {"batch", c.batch},
       {"buffer_capacity", c.buffer_capacity},
       {"learning_starts", c.learning_starts},
       {"train_every", c.train_every},
       {"target_period", c.target_period},
       {"target_tau", c.target_tau},
       {"epsilon_start", c.epsilon_start},
       {"epsilon_end", c.epsilon_end},
       {"epsilon_fraction", c.epsilon_fraction},
       {"projected_p", c.projected_p},
       {"optimizer", c.opt},
       {"model", c.model},
       {"eval_every", c.eval_every},
       {"eval_episodes", c.eval_episodes},
       {"success_return", c.success_return ? nlohmann::json(*c.success_return) : nlohmann::json()},
       {"stop_on_success", c.stop_on_success},
       {"checkpoint_every", c.checkpoint_every},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, AdDqnConfig& c) {
  if (!j.is_object()) throw ConfigError("online config must be a JSON object");
  if (j.contains("preset")) {
    const auto seed = c.seed;
    c = online_preset(j.at("preset").get<std::string>());
    c.seed = seed;
  }
  nlohmann::json base = c;
  for (const auto& [key, value] : j.items()) {
    if (!base.contains(key)) throw ConfigError("unknown online config key '" + key + "'");
  }
  try {
    if (j.contains("hidden")) c.net.hidden = j.at("hidden").get<std::vector<int>>();
    c.net.shared = j.value("shared", c.net.shared);
    if (j.contains("mixer")) c.net.mixer = approx::mixer_from_string(j.at("mixer").get<std::string>());
    c.net.mixer_hidden = j.value("mixer_hidden", c.net.mixer_hidden);
    c.net.mixer_layers = j.value("mixer_layers", c.net.mixer_layers);
    c.flat = j.value("flat", c.flat);
    c.augmentation = j.value("augmentation", c.augmentation);
    if (j.contains("mode_switch_return")) {
      const auto& v = j.at("mode_switch_return");
      c.mode_switch_return = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    c.mode_switch_scale = j.value("mode_switch_scale", c.mode_switch_scale);
    c.mode_switch_window = j.value("mode_switch_window", c.mode_switch_window);
    c.discount = j.value("discount", c.discount);
    c.episodes = j.value("episodes", c.episodes);
    c.batch = j.value("batch", c.batch);
    c.buffer_capacity = j.value("buffer_capacity", c.buffer_capacity);
    c.learning_starts = j.value("learning_starts", c.learning_starts);
    c.train_every = j.value("train_every", c.train_every);
    c.target_period = j.value("target_period", c.target_period);
    c.target_tau = j.value("target_tau", c.target_tau);
    c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
    c.epsilon_end = j.value("epsilon_end", c.epsilon_end);
    c.epsilon_fraction = j.value("epsilon_fraction", c.epsilon_fraction);
    c.projected_p = j.value("projected_p", c.projected_p);
    if (j.contains("optimizer")) approx::from_json(j.at("optimizer"), c.opt);
    if (j.contains("model")) from_json(j.at("model"), c.model);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    if (j.contains("success_return")) {
      const auto& v = j.at("success_return");
      c.success_return = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    c.stop_on_success = j.value("stop_on_success", c.stop_on_success);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad online config value: ") + e.what());
  }
  if (!(c.discount >= 0.0 && c.discount <= 1.0)) throw ConfigError("discount must lie in [0, 1]");
  if (c.batch == 0 || c.episodes == 0 || c.train_every == 0 || c.target_period == 0) {
    throw ConfigError("batch, episodes, train_every and target_period must be positive");
  }
  if (!(c.projected_p >= 0.0 && c.projected_p <= 1.0)) throw ConfigError("projected_p must lie in [0, 1]");
}

double evaluate_greedy(const approx::DecomposedQNet& net, const Environment& env, std::size_t episodes,
                       std::uint64_t seed) {
  auto e = env.clone();
  double total = 0.0;
  for (std::size_t i = 0; i < episodes; ++i) {
    Rng rng(derive_seed(seed, kEval + i));
    auto s = e->reset(rng);
    for (;;) {
      const auto r = e->step(greedy_action(net, s));
      total += r.reward;
      s = r.next_state;
      if (r.terminal || r.truncated) break;
    }
  }
  return episodes ? total / static_cast<double>(episodes) : 0.0;
}

namespace {

struct UpdateLoss {
  double full = 0.0;
  double heads = 0.0;
};

void check_finite(double loss, std::size_t episode, std::size_t update, const char* what) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string(what) + " loss is not finite at episode " + std::to_string(episode) + ", update " +
                       std::to_string(update));
  }
}

}  // namespace

AdDqnResult ad_dqn_train(const Environment& env_in, const AdDqnConfig& cfg, const TrainHooks& hooks) {
  std::unique_ptr<Environment> env = cfg.flat ? std::make_unique<FlatActions>(env_in.clone()) : env_in.clone();
  auto net_cfg = cfg.net;
  net_cfg.state_dim = env->state_dim();
  net_cfg.block_sizes = env->block_sizes();
  const std::size_t K = net_cfg.block_sizes.size();

  Rng init_rng(derive_seed(cfg.seed, kInit));
  Rng env_rng(derive_seed(cfg.seed, kEnv));
  Rng explore_rng(derive_seed(cfg.seed, kExplore));
  Rng replay_rng(derive_seed(cfg.seed, kReplay));
  Rng aug_rng(derive_seed(cfg.seed, kAugment));
  Rng model_rng(derive_seed(cfg.seed, kModel));

  AdDqnResult res{approx::DecomposedQNet(net_cfg, init_rng), {}, std::nullopt, 0, 0, {}};
  auto& net = res.net;
  approx::DecomposedQNet target = net;
  approx::Optimizer opt(cfg.opt);
  ReplayBuffers buffers(K, cfg.buffer_capacity);

  std::unique_ptr<NeuralAugmenter> aug;
  if (cfg.augmentation) {
    aug = std::make_unique<NeuralAugmenter>(
        DynamicsModel(env->state_dim(), net_cfg.block_sizes, env->eff_dims(), cfg.model, model_rng));
  }
  bool augmenting = cfg.augmentation;
  const bool parametric_mixer = net_cfg.mixer != approx::MixerKind::average;
  std::deque<double> recent_evals;
  std::size_t env_steps = 0;

  auto update = [&](std::size_t episode) {
    const auto idx = buffers.global().sample_indices(cfg.batch, replay_rng);
    const Batch b = make_batch(buffers.global(), idx);
    net.zero_grad();
    UpdateLoss loss;
    const bool use_aug = augmenting && aug && aug->ready();
    if (use_aug) {
      for (std::size_t k = 0; k < K; ++k) {
        const Batch bk = aug->augment(b, k, aug_rng);
        const Eigen::Index off = net.offset(k), n_k = net_cfg.block_sizes[k];
        const Matrix ht = target.head_values(bk.next_states);
        const Matrix& h = net.heads_forward(bk.states);
        RowVector pred(static_cast<Eigen::Index>(bk.size())), y(pred.size());
        for (Eigen::Index i = 0; i < pred.size(); ++i) {
          pred(i) = h(off + bk.actions[static_cast<std::size_t>(i)][k], i);
          y(i) = bk.rewards(i) + cfg.discount * (1.0 - bk.dones(i)) * ht.col(i).segment(off, n_k).maxCoeff();
        }
        RowVector g;
        loss.heads += approx::huber_loss(pred, y, &g);
        Matrix dh = Matrix::Zero(h.rows(), h.cols());
        for (Eigen::Index i = 0; i < pred.size(); ++i) dh(off + bk.actions[static_cast<std::size_t>(i)][k], i) = g(i);
        net.heads_backward(dh);
      }
      check_finite(loss.heads, episode, res.updates, "head");
    }
    const Matrix ht = target.head_values(b.next_states);
    const RowVector qt = target.mix_values(ht, target.greedy(ht));
    const RowVector y = b.rewards.array() + cfg.discount * (1.0 - b.dones.array()) * qt.array();
    const Matrix& h = net.heads_forward(b.states);
    RowVector g;
    loss.full = approx::huber_loss(net.mix_forward(h, b.actions), y, &g);
    check_finite(loss.full, episode, res.updates, "full");
    const Matrix dh = net.mix_backward(g);
    if (!(use_aug && parametric_mixer)) net.heads_backward(dh);
    opt.step(net.parameters());
    ++res.updates;
    if (hooks.on_update) hooks.on_update(res.updates, loss.full);
    return loss;
  };

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = linear_schedule(cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_fraction, ep, cfg.episodes);
    auto s = env->reset(env_rng);
    double ret = 0.0, full_sum = 0.0, heads_sum = 0.0;
    std::size_t updates = 0, steps = 0;
    for (;;) {
      const auto sel = select_action(net, s, eps, K > 1 ? cfg.projected_p : 0.0, explore_rng);
      const auto si = env->state_index();
      const auto r = env->step(sel.action);
      ++steps;
      ++env_steps;
      ret += r.reward;
      TransitionRecord rec;
      rec.state = s;
      rec.action = sel.action;
      rec.reward = r.reward;
      rec.next_state = r.next_state;
      rec.done = r.terminal;
      rec.block_tag = sel.block_tag;
      rec.state_index = si;
      rec.next_state_index = env->state_index();
      buffers.add(std::move(rec));
      s = r.next_state;
      if (ep >= cfg.learning_starts && env_steps % cfg.train_every == 0) {
        const auto l = update(ep);
        full_sum += l.full;
        heads_sum += l.heads;
        ++updates;
      }
      if (env_steps % cfg.target_period == 0) approx::target_update(target, net, cfg.target_tau);
      if (r.terminal || r.truncated) break;
    }
    if (augmenting && aug) aug->fit(buffers, aug_rng, &res.warnings);

    nlohmann::json m{{"episode", ep + 1},
                     {"step", env_steps},
                     {"return", ret},
                     {"epsilon", eps},
                     {"loss_full", updates ? full_sum / static_cast<double>(updates) : 0.0},
                     {"loss_heads", updates ? heads_sum / static_cast<double>(updates) : 0.0},
                     {"augmenting", augmenting}};
    if (augmenting && aug) m["model_losses"] = aug->last_losses();
    bool stop = false;
    if (cfg.eval_every && (ep + 1) % cfg.eval_every == 0) {
      const double ev = evaluate_greedy(net, *env, cfg.eval_episodes, cfg.seed);
      m["eval_return"] = ev;
      recent_evals.push_back(ev);
      if (recent_evals.size() > cfg.mode_switch_window) recent_evals.pop_front();
      if (augmenting && cfg.mode_switch_return && recent_evals.size() == cfg.mode_switch_window) {
        const double avg = std::accumulate(recent_evals.begin(), recent_evals.end(), 0.0) /
                           static_cast<double>(recent_evals.size());
        if (avg >= *cfg.mode_switch_return * cfg.mode_switch_scale) {
          augmenting = false;
          m["mode_switch"] = true;
        }
      }
      if (cfg.success_return && !res.episodes_to_success && ev >= *cfg.success_return) {
        res.episodes_to_success = ep + 1;
        stop = cfg.stop_on_success;
      }
    }
    res.metrics.push_back(m);
    if (hooks.on_metrics) hooks.on_metrics(m);
    res.episodes_run = ep + 1;
    if (cfg.checkpoint_every && (ep + 1) % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      approx::Checkpoint ck;
      ck.sections["q"] = net;
      ck.sections["target"] = target;
      ck.sections["optimizer"] = opt;
      ck.sections["config"] = cfg;
      ck.sections["episode"] = ep + 1;
      hooks.on_checkpoint(ep + 1, ck);
    }
    if (stop) break;
  }
  return res;
}

}  // namespace frl::agents
