#include <benchmark/benchmark.h>

#include "logtriage/classifier.hpp"
#include "logtriage/corpus.hpp"
#include "logtriage/doc_embed.hpp"
#include "logtriage/nn/layers.hpp"
#include "logtriage/rng.hpp"
#include "logtriage/synlog.hpp"

using namespace logtriage;

namespace {

nn::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  nn::Tensor t(std::move(shape));
  auto rng = make_rng(seed, "bench");
  nn::init_uniform(t, -0.5, 0.5, rng);
  return t;
}

void BM_Conv1dForward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({len, 64}, 1);
  const auto w = random_tensor({7, 64, 64}, 2);
  const auto b = random_tensor({64}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv1d(x, w, b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv1dForward)->Arg(500)->Arg(5000);

void BM_Conv1dBackward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({len, 64}, 1);
  const auto w = random_tensor({7, 64, 64}, 2);
  const auto g = random_tensor({len, 64}, 4);
  nn::Tensor wg({7, 64, 64}), bg({64});
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv1d_backward(x, w, g, wg, bg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Conv1dBackward)->Arg(500)->Arg(5000);

void BM_LstmForwardBackward(benchmark::State& state) {
  const auto units = static_cast<std::size_t>(state.range(0));
  nn::Lstm<float> lstm("lstm", 64, units);
  auto rng = make_rng(5, "bench");
  lstm.init(rng);
  const auto x = random_tensor({32, 32, 64}, 6);
  const auto g = random_tensor({32, 32, units}, 7);
  for (auto _ : state) {
    nn::Lstm<float>::Cache cache;
    lstm.forward(x, &cache);
    benchmark::DoNotOptimize(lstm.backward(cache, g));
  }
}
BENCHMARK(BM_LstmForwardBackward)->Arg(64)->Arg(256);

void BM_ClassifierSample(benchmark::State& state) {
  ArchConfig arch;
  arch.max_len = 5000;
  ResidualCnn<float> model(arch, 99, 8);
  std::vector<TokenId> ids(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(2 + i % 90);
  for (auto _ : state) benchmark::DoNotOptimize(model.accumulate_gradients(ids, 1, 1.0, 1.0));
}
BENCHMARK(BM_ClassifierSample)->Arg(1000)->Arg(5000)->Unit(benchmark::kMillisecond);

void BM_EmbedDocument(benchmark::State& state) {
  MockProvider provider(256, 9);
  std::vector<TokenId> ids(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<TokenId>(2 + i % 90);
  for (auto _ : state) benchmark::DoNotOptimize(embed_document(ids, provider, 4096, 256));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EmbedDocument)->Arg(10'000)->Arg(100'000);

void BM_PreprocessLog(benchmark::State& state) {
  SynConfig cfg;
  cfg.mean_blocks_per_log = static_cast<std::size_t>(state.range(0));
  auto rng = make_rng(10, "bench");
  const auto text = generate_log(Label::kL2, cfg, rng);
  const PpuConfig ppu;
  for (auto _ : state) benchmark::DoNotOptimize(preprocess_log(text, ppu));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_PreprocessLog)->Arg(30)->Arg(300);

}  // namespace

BENCHMARK_MAIN();
