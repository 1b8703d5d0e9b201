#include "frl/agents/ad_bcq.hpp"

#include <cmath>

#include "frl/agents/ad_dqn.hpp"
#include "frl/error.hpp"
#include "frl/indexing.hpp"

namespace frl::agents {

using approx::Matrix;
using approx::RowVector;

std::size_t joint_size(const std::vector<int>& sizes) {
  std::size_t n = 1;
  for (int s : sizes) n *= static_cast<std::size_t>(s);
  return n;
}

std::size_t flatten_action(const mdp::JointAction& a, const std::vector<int>& sizes) {
  return MixedRadix(sizes).encode(a);
}

mdp::JointAction unflatten_action(std::size_t a, const std::vector<int>& sizes) {
  return MixedRadix(sizes).decode(a);
}

BcqConfig offline_preset(const std::string& name) {
  BcqConfig c;
  c.preset = name;
  c.net.hidden = {128};
  c.net.shared = true;
  if (name == "AD-BCQ") {
    c.net.mixer = approx::MixerKind::relu_mlp;
    c.net.mixer_hidden = 128;
    c.augmentation = true;
  } else if (name == "BCQ") {
    c.net.mixer = approx::MixerKind::average;
    c.flat = true;
    c.augmentation = false;
  } else {
    throw ConfigError("unknown offline preset '" + name + "'");
  }
  return c;
}

void to_json(nlohmann::json& j, const BcqConfig& c) {
  j = {{"preset", c.preset},
       {"hidden", c.net.hidden},
       {"shared", c.net.shared},
       {"mixer", approx::to_string(c.net.mixer)},
       {"mixer_hidden", c.net.mixer_hidden},
       {"mixer_layers", c.net.mixer_layers},
       {"flat", c.flat},
       {"augmentation", c.augmentation},
       {"threshold", c.threshold},
       {"discount", c.discount},
       {"steps", c.steps},
       {"batch", c.batch},
       {"polyak", c.polyak},
       {"optimizer", c.opt},
       {"checkpoint_every", c.checkpoint_every},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, BcqConfig& c) {
  if (!j.is_object()) throw ConfigError("offline config must be a JSON object");
  if (j.contains("preset")) {
    const auto seed = c.seed;
    c = offline_preset(j.at("preset").get<std::string>());
    c.seed = seed;
  }
  nlohmann::json base = c;
  for (const auto& [key, value] : j.items()) {
    if (!base.contains(key)) throw ConfigError("unknown offline config key '" + key + "'");
  }
  try {
    if (j.contains("hidden")) c.net.hidden = j.at("hidden").get<std::vector<int>>();
    c.net.shared = j.value("shared", c.net.shared);
    if (j.contains("mixer")) c.net.mixer = approx::mixer_from_string(j.at("mixer").get<std::string>());
    c.net.mixer_hidden = j.value("mixer_hidden", c.net.mixer_hidden);
    c.net.mixer_layers = j.value("mixer_layers", c.net.mixer_layers);
    c.flat = j.value("flat", c.flat);
    c.augmentation = j.value("augmentation", c.augmentation);
    c.threshold = j.value("threshold", c.threshold);
    c.discount = j.value("discount", c.discount);
    c.steps = j.value("steps", c.steps);
    c.batch = j.value("batch", c.batch);
    c.polyak = j.value("polyak", c.polyak);
    if (j.contains("optimizer")) approx::from_json(j.at("optimizer"), c.opt);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad offline config value: ") + e.what());
  }
  if (!(c.threshold >= 0.0 && c.threshold <= 1.0)) throw ConfigError("BCQ threshold must lie in [0, 1]");
  if (!(c.discount >= 0.0 && c.discount <= 1.0)) throw ConfigError("discount must lie in [0, 1]");
  if (c.batch == 0 || c.steps == 0) throw ConfigError("steps and batch must be positive");
}

namespace {

approx::Mlp make_g(const approx::QNetConfig& cfg, Rng& rng) {
  std::vector<int> sizes{cfg.state_dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  int total = 0;
  for (int n : cfg.block_sizes) total += n;
  sizes.push_back(total);
  std::vector<approx::Activation> acts(cfg.hidden.size(), approx::Activation::relu);
  acts.push_back(approx::Activation::identity);
  return approx::Mlp(sizes, acts, rng);
}

/// In-place log-softmax over each block segment of every column.
void segment_log_softmax(Matrix& logits, const std::vector<int>& sizes) {
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    int off = 0;
    for (int n : sizes) {
      auto seg = logits.col(c).segment(off, n);
      const double m = seg.maxCoeff();
      const double lse = m + std::log((seg.array() - m).exp().sum());
      seg.array() -= lse;
      off += n;
    }
  }
}

}  // namespace

BcqHeads::BcqHeads(const approx::QNetConfig& cfg, double thr, Rng& rng)
    : q(cfg, rng), q_target(q), g(make_g(cfg, rng)), threshold(thr) {
  if (!(thr >= 0.0 && thr <= 1.0)) throw ConfigError("BCQ threshold must lie in [0, 1]");
  if (joint_size(cfg.block_sizes) > 65'536) throw ConfigError("joint action space too large for exact BCQ filtering");
}

Matrix BcqHeads::log_g(const Matrix& states) const {
  Matrix lg = g.predict(states);
  segment_log_softmax(lg, config().block_sizes);
  return lg;
}

std::vector<std::vector<mdp::JointAction>> BcqHeads::candidates(const Matrix& states, std::size_t* fallbacks) const {
  const auto& sizes = config().block_sizes;
  const Matrix lg = log_g(states);
  const double log_thr = threshold > 0.0 ? std::log(threshold) : -INFINITY;
  const MixedRadix codec(sizes);
  std::vector<std::vector<mdp::JointAction>> out(static_cast<std::size_t>(states.cols()));
  for (Eigen::Index c = 0; c < states.cols(); ++c) {
    std::vector<double> best(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k) best[k] = lg.col(c).segment(q.offset(k), sizes[k]).maxCoeff();
    for (std::size_t a = 0; a < codec.size(); ++a) {
      const auto ja = codec.decode(a);
      double ratio = 0.0;
      for (std::size_t k = 0; k < sizes.size(); ++k) ratio += lg(q.offset(k) + ja[k], c) - best[k];
      if (ratio >= log_thr - 1e-12) out[static_cast<std::size_t>(c)].push_back(ja);
    }
    auto& admitted = out[static_cast<std::size_t>(c)];
    if (admitted.empty()) {
      if (fallbacks) ++*fallbacks;
      for (std::size_t a = 0; a < codec.size(); ++a) admitted.push_back(codec.decode(a));
    }
  }
  return out;
}

namespace {

/// argmax of `net` over each state's candidate list.
std::vector<mdp::JointAction> best_candidates(const approx::DecomposedQNet& net, const Matrix& heads,
                                              const std::vector<std::vector<mdp::JointAction>>& cands) {
  std::vector<mdp::JointAction> flat;
  Matrix rep(heads.rows(), 0);
  std::size_t total = 0;
  for (const auto& c : cands) total += c.size();
  rep.resize(heads.rows(), static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    for (const auto& a : cands[i]) {
      rep.col(col++) = heads.col(static_cast<Eigen::Index>(i));
      flat.push_back(a);
    }
  }
  const RowVector v = net.mix_values(rep, flat);
  std::vector<mdp::JointAction> out;
  col = 0;
  for (const auto& c : cands) {
    Eigen::Index arg = 0;
    v.segment(col, static_cast<Eigen::Index>(c.size())).maxCoeff(&arg);
    out.push_back(c[static_cast<std::size_t>(arg)]);
    col += static_cast<Eigen::Index>(c.size());
  }
  return out;
}

}  // namespace

std::vector<mdp::JointAction> BcqHeads::act(const Matrix& states) const {
  auto out = best_candidates(q, q.head_values(states), candidates(states));
  for (auto& a : out) a = unflatten(a);
  return out;
}

mdp::JointAction BcqHeads::unflatten(const mdp::JointAction& a) const {
  if (env_blocks.empty()) return a;
  return unflatten_action(static_cast<std::size_t>(a.at(0)), env_blocks);
}

mdp::JointAction BcqHeads::act(const std::vector<double>& state) const {
  return act(Matrix(Eigen::Map<const approx::Vector>(state.data(), static_cast<Eigen::Index>(state.size())))).front();
}

nlohmann::json BcqHeads::to_json() const {
  return {{"q", q}, {"q_target", q_target}, {"g", g}, {"threshold", threshold}, {"env_blocks", env_blocks}};
}

BcqHeads BcqHeads::from_json(const nlohmann::json& j) {
  BcqHeads h;
  h.q = j.at("q").get<approx::DecomposedQNet>();
  h.q_target = j.at("q_target").get<approx::DecomposedQNet>();
  h.g = j.at("g").get<approx::Mlp>();
  h.threshold = j.at("threshold").get<double>();
  h.env_blocks = j.value("env_blocks", std::vector<int>{});
  if (h.g.output_dim() != h.q.total_actions()) throw ShapeError("G head width does not match the Q heads");
  return h;
}

std::vector<TransitionRecord> episode_transitions(const std::vector<ope::EpisodeLog>& episodes) {
  std::vector<TransitionRecord> out;
  for (const auto& e : episodes) {
    for (std::size_t t = 0; t < e.steps.size(); ++t) {
      const auto& st = e.steps[t];
      TransitionRecord r;
      r.state = st.state;
      r.action = st.action;
      r.reward = st.reward;
      r.state_index = st.state_index;
      const bool last = t + 1 == e.steps.size();
      if (last) {
        if (e.final_state.empty()) throw DataError("episode is missing its final state");
        r.next_state = e.final_state;
        r.next_state_index = e.final_state_index;
        r.done = e.terminal;
      } else {
        r.next_state = e.steps[t + 1].state;
        r.next_state_index = e.steps[t + 1].state_index;
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

namespace {

/// NLL of the logged actions under the per-block softmax; accumulates G grads.
double g_step(approx::Mlp& g, const std::vector<int>& sizes, const Batch& b) {
  Matrix lg = g.forward(b.states);
  segment_log_softmax(lg, sizes);
  const auto n = static_cast<double>(b.size());
  Matrix d = lg.array().exp() / n;
  double nll = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    int off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      const auto r = static_cast<Eigen::Index>(off + b.actions[i][k]);
      const auto c = static_cast<Eigen::Index>(i);
      nll -= lg(r, c);
      d(r, c) -= 1.0 / n;
      off += sizes[k];
    }
  }
  g.backward(d);
  return nll / n;
}

}  // namespace

BcqResult ad_bcq_train(const std::vector<ope::EpisodeLog>& dataset, const std::vector<int>& block_sizes,
                       const BcqConfig& cfg, const Augmenter* augmenter,
                       const std::function<void(const nlohmann::json&)>& on_metrics) {
  auto records = episode_transitions(dataset);
  if (records.empty()) throw DataError("offline dataset has no transitions");
  for (const auto& r : records) (void)flatten_action(r.action, block_sizes);  // validates every action
  const bool augment = cfg.augmentation && !cfg.flat && block_sizes.size() > 1;
  if (augment && (augmenter == nullptr || !augmenter->ready())) throw StateError("AD-BCQ needs a ready augmenter");

  auto net_cfg = cfg.net;
  net_cfg.state_dim = static_cast<int>(records.front().state.size());
  net_cfg.block_sizes = cfg.flat ? std::vector<int>{static_cast<int>(joint_size(block_sizes))} : block_sizes;
  const auto& sizes = net_cfg.block_sizes;
  const std::size_t K = sizes.size();

  // Flattened copies for the network; factored actions stay in `records` for augmentation.
  RingBuffer data(records.size());
  for (auto r : records) {
    if (cfg.flat) r.action = {static_cast<int>(flatten_action(r.action, block_sizes))};
    data.push(std::move(r));
  }

  Rng init_rng(derive_seed(cfg.seed, kInit));
  Rng replay_rng(derive_seed(cfg.seed, kReplay));
  Rng aug_rng(derive_seed(cfg.seed, kAugment));

  BcqResult res;
  res.heads = std::make_unique<BcqHeads>(net_cfg, cfg.threshold, init_rng);
  auto& H = *res.heads;
  if (cfg.flat) H.env_blocks = block_sizes;
  approx::Optimizer q_opt(cfg.opt), g_opt(cfg.opt);
  const bool parametric_mixer = net_cfg.mixer != approx::MixerKind::average;
  const double log_thr = cfg.threshold > 0.0 ? std::log(cfg.threshold) : -INFINITY;

  std::vector<approx::ParamView> g_params;
  H.g.append_params(g_params);

  double q_sum = 0.0, h_sum = 0.0, g_sum = 0.0;
  std::size_t window = 0;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    const Batch b = make_batch(data, data.sample_indices(cfg.batch, replay_rng));
    const auto n = static_cast<Eigen::Index>(b.size());

    H.g.zero_grad();
    g_sum += g_step(H.g, sizes, b);
    g_opt.step(g_params);

    H.q.zero_grad();
    if (augment) {
      for (std::size_t k = 0; k < K; ++k) {
        const Batch bk = augmenter->augment(b, k, aug_rng);
        const Eigen::Index off = H.q.offset(k), n_k = sizes[k];
        const Matrix lg = H.log_g(bk.next_states);
        const Matrix hn = H.q.head_values(bk.next_states);
        const Matrix ht = H.q_target.head_values(bk.next_states);
        const Matrix& h = H.q.heads_forward(bk.states);
        RowVector pred(n), y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
          const auto seg = lg.col(i).segment(off, n_k);
          const double best = seg.maxCoeff();
          Eigen::Index arg = -1;
          for (Eigen::Index a = 0; a < n_k; ++a) {
            if (seg(a) - best < log_thr - 1e-12) continue;
            if (arg < 0 || hn(off + a, i) > hn(off + arg, i)) arg = a;
          }
          pred(i) = h(off + bk.actions[static_cast<std::size_t>(i)][k], i);
          y(i) = bk.rewards(i) + cfg.discount * (1.0 - bk.dones(i)) * ht(off + arg, i);
        }
        RowVector g;
        const double l = approx::huber_loss(pred, y, &g);
        if (!std::isfinite(l)) throw NumericError("head loss is not finite at step " + std::to_string(step));
        h_sum += l;
        Matrix dh = Matrix::Zero(h.rows(), h.cols());
        for (Eigen::Index i = 0; i < n; ++i) dh(off + bk.actions[static_cast<std::size_t>(i)][k], i) = g(i);
        H.q.heads_backward(dh);
      }
    }
    const auto next_actions = best_candidates(H.q, H.q.head_values(b.next_states), H.candidates(b.next_states, &res.fallbacks));
    const RowVector qt = H.q_target.mix_values(H.q_target.head_values(b.next_states), next_actions);
    const RowVector y = b.rewards.array() + cfg.discount * (1.0 - b.dones.array()) * qt.array();
    const Matrix& h = H.q.heads_forward(b.states);
    RowVector g;
    const double l = approx::huber_loss(H.q.mix_forward(h, b.actions), y, &g);
    if (!std::isfinite(l)) throw NumericError("Q loss is not finite at step " + std::to_string(step));
    q_sum += l;
    const Matrix dh = H.q.mix_backward(g);
    if (!(augment && parametric_mixer)) H.q.heads_backward(dh);
    q_opt.step(H.q.parameters());
    approx::target_update(H.q_target, H.q, cfg.polyak);
    ++window;

    const bool snap = cfg.checkpoint_every ? step % cfg.checkpoint_every == 0 : step == cfg.steps;
    if (snap || step == cfg.steps) {
      const double w = static_cast<double>(window);
      nlohmann::json m{{"step", step}, {"loss_q", q_sum / w}, {"loss_g", g_sum / w}, {"fallbacks", res.fallbacks}};
      if (augment) m["loss_heads"] = h_sum / (w * static_cast<double>(K));
      res.metrics.push_back(m);
      if (on_metrics) on_metrics(m);
      q_sum = h_sum = g_sum = 0.0;
      window = 0;
      if (res.snapshots.empty() || res.snapshots.back().step != step) res.snapshots.push_back({step, H.to_json()});
    }
  }
  return res;
}

}  // namespace frl::agents
