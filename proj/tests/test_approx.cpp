#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "frl/approx/checkpoint.hpp"
#include "frl/approx/optimizer.hpp"
#include "frl/approx/qnet.hpp"
#include "frl/error.hpp"
#include "gradcheck.hpp"

using namespace frl;
using namespace frl::approx;

namespace {

/// Straight-line forward pass reading weights from the JSON export.
std::vector<double> dense(const nlohmann::json& layers, std::vector<double> x) {
  for (const auto& l : layers) {
    const int in = l["in"], out = l["out"];
    std::vector<double> y(static_cast<std::size_t>(out));
    for (int r = 0; r < out; ++r) {
      double acc = l["bias"][static_cast<std::size_t>(r)];
      for (int c = 0; c < in; ++c) acc += double(l["weight"][static_cast<std::size_t>(r * in + c)]) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = l["activation"] == "relu" ? std::max(acc, 0.0) : acc;
    }
    x = y;
  }
  return x;
}

double reference_q(const DecomposedQNet& net, const std::vector<double>& s, const JointAction& a) {
  const nlohmann::json j = net;
  std::vector<double> heads;
  if (j["shared"]) {
    heads = dense(j["head_layer"], dense(j["trunk"], s));
  } else {
    for (const auto& h : j["heads"]) {
      auto part = dense(h, s);
      heads.insert(heads.end(), part.begin(), part.end());
    }
  }
  std::vector<double> z(heads.size(), 0.0);
  double avg = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto idx = static_cast<std::size_t>(net.offset(k) + a[k]);
    z[idx] = heads[idx];
    avg += heads[idx];
  }
  if (j["mixer"] == "average") return avg / static_cast<double>(a.size());
  return dense(j["mixer_net"], z)[0];
}

}  // namespace

TEST_CASE("average mixer is the mean of selected heads") {
  QNetConfig c;
  c.state_dim = 1;
  c.block_sizes = {2, 2};
  c.hidden = {3};
  Rng rng(1);
  DecomposedQNet net(c, rng);
  Matrix h(4, 1);
  h << -7.0, 2.0, 4.0, 9.0;
  CHECK(net.mix_values(h, {{1, 0}})(0) == 3.0);
  CHECK(net.num_parameters() == (1 * 3 + 3) + (3 * 4 + 4));
}

TEST_CASE("zeroed linear mixer outputs zero") {
  QNetConfig c;
  c.state_dim = 3;
  c.block_sizes = {3, 2};
  c.hidden = {5};
  c.mixer = MixerKind::linear_2layer;
  Rng rng(2);
  DecomposedQNet net(c, rng);
  auto all = net.parameters();
  auto heads = net.head_parameters();
  for (std::size_t i = heads.size(); i < all.size(); ++i) std::fill(all[i].value, all[i].value + all[i].size, 0.0);
  Vector s = Vector::Random(3);
  CHECK(net.forward(s, {2, 1}).q == 0.0);
}

TEST_CASE("forward matches a straight-line reimplementation") {
  for (std::uint64_t i = 0; i < 24; ++i) {
    auto cfg = frl::testing::small_config(i);
    cfg.hidden = {7, 5};
    Rng rng(i);
    DecomposedQNet net(cfg, rng);
    std::vector<double> s(static_cast<std::size_t>(cfg.state_dim));
    for (auto& x : s) x = 2.0 * uniform01(rng) - 1.0;
    JointAction a;
    for (int n : cfg.block_sizes) a.push_back(static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n))));
    const auto out = net.forward(Eigen::Map<const Vector>(s.data(), cfg.state_dim), a);
    CHECK(std::abs(out.q - reference_q(net, s, a)) <= 1e-12);
  }
}

TEST_CASE("linear 1-1 chain rule base case") {
  Rng rng(3);
  Mlp m({1, 1}, {Activation::identity}, rng);
  Matrix x(1, 1);
  x << 2.5;
  m.forward(x);
  m.backward(Matrix::Ones(1, 1));
  CHECK(m.layers()[0].grad_weight(0, 0) == 2.5);
  CHECK(m.layers()[0].grad_bias(0) == 1.0);
  CHECK_THROWS_AS(m.backward(Matrix::Ones(1, 1)), StateError);
}

TEST_CASE("ReLU subgradient at zero is zero") {
  Rng rng(4);
  Mlp m({1, 1}, {Activation::relu}, rng);
  m.layers()[0].weight(0, 0) = 1.0;
  m.forward(Matrix::Zero(1, 1));
  m.backward(Matrix::Ones(1, 1));
  CHECK(m.layers()[0].grad_weight(0, 0) == 0.0);
  CHECK(m.layers()[0].grad_bias(0) == 0.0);
}

TEST_CASE("finite-difference gradients for every mixer kind") {
  for (std::uint64_t i = 0; i < 30; ++i) {
    auto cfg = frl::testing::small_config(i);
    auto res = frl::testing::grad_check(cfg, i);
    CHECK(res.params <= 200);
    CHECK(res.worst_rel <= 1e-4);
  }
}

TEST_CASE("shape errors") {
  QNetConfig c;
  c.state_dim = 2;
  c.block_sizes = {2};
  c.hidden = {3};
  Rng rng(5);
  DecomposedQNet net(c, rng);
  CHECK_THROWS_AS(net.heads_forward(Matrix::Zero(3, 1)), ShapeError);
  CHECK_THROWS_AS(net.mix_values(Matrix::Zero(2, 1), {{2}}), DomainError);
  CHECK_THROWS_AS(net.mix_backward(RowVector::Zero(1)), StateError);
}

TEST_CASE("optimizer steps") {
  std::vector<double> p{0.0}, g{1.0};
  std::vector<ParamView> views{{p.data(), g.data(), 1}};
  SUBCASE("sgd") {
    Optimizer o({OptimizerKind::sgd, 0.1});
    o.step(views);
    CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-15));
  }
  SUBCASE("adam first step") {
    p[0] = 0.3;
    g[0] = -0.02;
    Optimizer o({OptimizerKind::adam, 1e-3});
    o.step(views);
    CHECK(std::abs(p[0] - (0.3 - 1e-3 * g[0] / (std::sqrt(g[0] * g[0]) + 1e-8))) <= 1e-10);
  }
  SUBCASE("zero gradient and no decay leaves parameters alone") {
    g[0] = 0.0;
    p[0] = 1.25;
    Optimizer o({OptimizerKind::adam, 1e-3});
    for (int i = 0; i < 3; ++i) o.step(views);
    CHECK(p[0] == 1.25);
  }
  SUBCASE("decoupled weight decay") {
    g[0] = 0.0;
    p[0] = 2.0;
    Optimizer o({OptimizerKind::adam, 0.1, 0.9, 0.999, 1e-8, 0.5});
    o.step(views);
    CHECK(p[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
  }
  SUBCASE("non-finite gradient refused") {
    std::vector<double> q{1.0, 2.0}, gq{0.5, std::nan("")};
    std::vector<ParamView> v2{{p.data(), g.data(), 1}, {q.data(), gq.data(), 2}};
    Optimizer o({OptimizerKind::adam, 0.1});
    CHECK_THROWS_AS(o.step(v2), NumericError);
    CHECK(p[0] == 0.0);
    CHECK(q[0] == 1.0);
    CHECK(o.steps() == 0);
  }
}

TEST_CASE("target updates") {
  std::vector<double> t{0.0}, o{2.0}, gt{0}, go{0};
  auto tv = std::vector<ParamView>{{t.data(), gt.data(), 1}};
  auto ov = std::vector<ParamView>{{o.data(), go.data(), 1}};
  target_update(tv, ov, 0.0);
  CHECK(t[0] == 0.0);
  target_update(tv, ov, 0.5);
  CHECK(t[0] == 1.0);
  target_update(tv, ov, 1.0);
  CHECK(t[0] == 2.0);

  auto cfg = frl::testing::small_config(4);
  Rng r1(1), r2(2);
  DecomposedQNet a(cfg, r1), b(cfg, r2);
  target_update(b, a, 1.0);
  CHECK(nlohmann::json(a) == nlohmann::json(b));
  auto other = cfg;
  other.block_sizes.push_back(2);
  DecomposedQNet c(other, r1);
  CHECK_THROWS_AS(target_update(c, a, 1.0), ShapeError);
}

TEST_CASE("average mixer greedy equals per-head argmax and the joint max") {
  QNetConfig c;
  c.state_dim = 3;
  c.block_sizes = {4, 3};
  c.hidden = {6};
  Rng rng(6);
  DecomposedQNet net(c, rng);
  Matrix s = Matrix::Random(3, 20);
  const Matrix h = net.head_values(s);
  const auto g = net.greedy(h);
  for (Eigen::Index i = 0; i < 20; ++i) {
    double best = -1e300;
    JointAction arg;
    for (int a0 = 0; a0 < 4; ++a0) {
      for (int a1 = 0; a1 < 3; ++a1) {
        const double q = net.mix_values(h.col(i), {{a0, a1}})(0);
        if (q > best) {
          best = q;
          arg = {a0, a1};
        }
      }
    }
    CHECK(g[static_cast<std::size_t>(i)] == arg);
  }
}

TEST_CASE("coordinate ascent never lowers the mixer value") {
  for (auto kind : {MixerKind::linear_2layer, MixerKind::relu_mlp}) {
    QNetConfig c;
    c.state_dim = 3;
    c.block_sizes = {5, 5};
    c.hidden = {8};
    c.mixer = kind;
    Rng rng(7);
    DecomposedQNet net(c, rng);
    const Matrix h = net.head_values(Matrix::Random(3, 10));
    const auto start = net.greedy(h, 0);
    const auto refined = net.greedy(h, 2);
    for (Eigen::Index i = 0; i < 10; ++i) {
      const auto u = static_cast<std::size_t>(i);
      CHECK(net.mix_values(h.col(i), {refined[u]})(0) >= net.mix_values(h.col(i), {start[u]})(0) - 1e-12);
    }
  }
}

TEST_CASE("identical seeds give identical training trajectories") {
  auto run = [] {
    QNetConfig c;
    c.state_dim = 2;
    c.block_sizes = {3, 3};
    c.hidden = {8};
    c.mixer = MixerKind::relu_mlp;
    Rng rng(9);
    DecomposedQNet net(c, rng);
    Optimizer opt({OptimizerKind::adam, 1e-2});
    for (int step = 0; step < 20; ++step) {
      Matrix s(2, 4);
      for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = uniform01(rng);
      std::vector<JointAction> a(4, JointAction{1, 2});
      net.zero_grad();
      const Matrix h = net.heads_forward(s);
      RowVector grad;
      huber_loss(net.mix_forward(h, a), RowVector::Ones(4), &grad);
      net.heads_backward(net.mix_backward(grad));
      opt.step(net.parameters());
    }
    return nlohmann::json(net).dump();
  };
  CHECK(run() == run());
}

TEST_CASE("huber loss") {
  RowVector p(3), t(3), g;
  p << 0.0, 3.0, -0.5;
  t << 0.5, 0.0, -0.5;
  CHECK(huber_loss(p, t, &g) == doctest::Approx((0.125 + 2.5 + 0.0) / 3.0));
  CHECK(g(0) == doctest::Approx(-0.5 / 3.0));
  CHECK(g(1) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("checkpoint round trip") {
  auto cfg = frl::testing::small_config(5);
  Rng rng(10);
  DecomposedQNet net(cfg, rng);
  Optimizer opt({OptimizerKind::adam, 3e-4, 0.9, 0.999, 1e-8, 1e-3});
  net.zero_grad();
  opt.step(net.parameters());
  Checkpoint ck;
  ck.sections["q"] = net;
  ck.sections["opt"] = opt;
  const auto path = std::filesystem::temp_directory_path() / "frl_ckpt_test.json";
  save_checkpoint(ck, path);
  auto back = load_checkpoint(path);
  CHECK(back.sections.at("q").get<DecomposedQNet>().config() == cfg);
  CHECK(nlohmann::json(back.sections.at("q").get<DecomposedQNet>()) == nlohmann::json(net));
  CHECK(nlohmann::json(back.sections.at("opt").get<Optimizer>()) == nlohmann::json(opt));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
}
