#include <benchmark/benchmark.h>

#include "frl/agents/ad_bcq.hpp"
#include "frl/approx/qnet.hpp"
#include "frl/envs/offline.hpp"
#include "frl/envs/synthetic.hpp"
#include "frl/ope.hpp"
#include "frl/tabular.hpp"

using namespace frl;

namespace {

approx::QNetConfig net_config(approx::MixerKind mixer) {
  approx::QNetConfig c;
  c.state_dim = 4;
  c.block_sizes = {9, 9};
  c.hidden = {256, 256};
  c.mixer = mixer;
  return c;
}

void BM_QNetForwardBackward(benchmark::State& st) {
  Rng rng(1);
  approx::DecomposedQNet net(net_config(static_cast<approx::MixerKind>(st.range(0))), rng);
  const approx::Matrix s = approx::Matrix::Random(4, 128);
  std::vector<mdp::JointAction> a(128, {3, 5});
  for (auto _ : st) {
    net.zero_grad();
    const auto& h = net.heads_forward(s);
    const approx::RowVector q = net.mix_forward(h, a);
    net.heads_backward(net.mix_backward(approx::RowVector::Ones(q.size())));
    benchmark::DoNotOptimize(q.data());
  }
  st.SetItemsProcessed(st.iterations() * 128);
}
BENCHMARK(BM_QNetForwardBackward)->Arg(0)->Arg(1)->Arg(2);

void BM_Greedy(benchmark::State& st) {
  Rng rng(1);
  approx::DecomposedQNet net(net_config(static_cast<approx::MixerKind>(st.range(0))), rng);
  const approx::Matrix h = net.head_values(approx::Matrix::Random(4, 128));
  for (auto _ : st) benchmark::DoNotOptimize(net.greedy(h));
  st.SetItemsProcessed(st.iterations() * 128);
}
BENCHMARK(BM_Greedy)->Arg(0)->Arg(1)->Arg(2);

void BM_Mbfpi(benchmark::State& st) {
  envs::SyntheticSpec s;
  s.num_blocks = 3;
  s.cardinality = 3;
  s.actions_per_block = 3;
  const mdp::FactoredMdp m(envs::generate_synthetic(s));
  const auto init = mdp::FactoredPolicy::constant(m, {0, 0, 0});
  for (auto _ : st) benchmark::DoNotOptimize(tabular::mbfpi(m, init));
}
BENCHMARK(BM_Mbfpi)->Unit(benchmark::kMillisecond);

void BM_WisEss(benchmark::State& st) {
  const mdp::FactoredMdp m(envs::offline_task({}));
  const auto data = envs::generate_offline_dataset(m, envs::uniform_behavior(m), 1000, 3);
  const auto target = ope::soften([](const ope::EpisodeStep&) { return mdp::JointAction{1, 1}; }, 25);
  for (auto _ : st) benchmark::DoNotOptimize(ope::wis_ess(data, target));
}
BENCHMARK(BM_WisEss)->Unit(benchmark::kMicrosecond);

void BM_BcqCandidates(benchmark::State& st) {
  Rng rng(1);
  approx::QNetConfig c;
  c.state_dim = 11;
  c.block_sizes = {5, 5};
  c.hidden = {128};
  agents::BcqHeads heads(c, 0.3, rng);
  const approx::Matrix s = approx::Matrix::Random(11, 100);
  for (auto _ : st) benchmark::DoNotOptimize(heads.candidates(s));
}
BENCHMARK(BM_BcqCandidates)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
