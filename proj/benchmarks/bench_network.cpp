#include <vector>

#include <benchmark/benchmark.h>

#include "coldetect/layers.hpp"
#include "coldetect/loss.hpp"
#include "coldetect/network.hpp"
#include "coldetect/trainer.hpp"

namespace coldetect {
namespace {

Tensor random_tensor(int n, int c, int side, std::uint64_t seed) {
  Tensor t(n, c, side, side);
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

// Args: in channels, out channels, kernel, side. Batch of 20.
void BM_ConvForward(benchmark::State& state) {
  const int cin = state.range(0), cout = state.range(1), k = state.range(2), side = state.range(3);
  Conv2d conv(cin, cout, k, k / 2);
  Rng rng(1);
  conv.init(rng);
  const Tensor in = random_tensor(20, cin, side, 2);
  Tensor out;
  for (auto _ : state) {
    conv.forward(in, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["MAC/s"] = benchmark::Counter(20.0 * cin * cout * k * k * side * side, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvBackward(benchmark::State& state) {
  const int cin = state.range(0), cout = state.range(1), k = state.range(2), side = state.range(3);
  Conv2d conv(cin, cout, k, k / 2);
  Rng rng(1);
  conv.init(rng);
  const Tensor in = random_tensor(20, cin, side, 2);
  const Tensor dout = random_tensor(20, cout, side, 3);
  Tensor din;
  for (auto _ : state) {
    conv.backward(in, dout, &din);
    benchmark::DoNotOptimize(din.data());
  }
}

#define CONV_SHAPES                                                                                      \
  Args({3, 8, 3, 256})->Args({8, 16, 3, 256})->Args({16, 32, 3, 127})->Args({32, 64, 3, 63})->Args(     \
      {8, 16, 1, 256})->Unit(benchmark::kMillisecond)
BENCHMARK(BM_ConvForward)->CONV_SHAPES;
BENCHMARK(BM_ConvBackward)->CONV_SHAPES;

void BM_BatchNormTrain(benchmark::State& state) {
  BatchNorm2d bn(16);
  Tensor x = random_tensor(20, 16, 256, 4), y, dx;
  const Tensor dy = random_tensor(20, 16, 256, 5);
  for (auto _ : state) {
    Tensor work = x;
    bn.forward_train(work, y);
    bn.backward_train(work, dy, dx);
    benchmark::DoNotOptimize(dx.data());
  }
}
BENCHMARK(BM_BatchNormTrain)->Unit(benchmark::kMillisecond);

void BM_MaxPool(benchmark::State& state) {
  const Tensor in = random_tensor(20, 16, 256, 6);
  Tensor out, din(20, 16, 256, 256);
  std::vector<std::int32_t> argmax;
  for (auto _ : state) {
    max_pool_forward(in, out, &argmax);
    max_pool_backward(argmax, out, din);
    benchmark::DoNotOptimize(din.data());
  }
}
BENCHMARK(BM_MaxPool)->Unit(benchmark::kMillisecond);

ModelConfig bench_config(double width) {
  ModelConfig config;
  config.width_multiplier = width;
  config.seed = 1;
  return config;
}

// One SGD step on a balanced batch of 20 at the given width (x1000).
void BM_TrainStep(benchmark::State& state) {
  Network net(bench_config(state.range(0) / 1000.0));
  SgdMomentum optimizer(net, 0.9, 1e-4);
  const Tensor batch = random_tensor(2 * kHalfBatch, 3, 256, 7);
  std::vector<int> labels(2 * kHalfBatch);
  for (int i = 0; i < kHalfBatch; ++i) labels[i] = kNatural;
  for (auto _ : state) {
    net.zero_grad();
    const auto loss = cross_entropy(net.forward(batch, Mode::Train), labels);
    net.backward(loss.grad);
    optimizer.step(1e-3);
  }
  state.SetItemsProcessed(state.iterations() * batch.batch());
}
BENCHMARK(BM_TrainStep)->Arg(125)->Arg(250)->Unit(benchmark::kMillisecond);

void BM_Inference(benchmark::State& state) {
  const Network net(bench_config(state.range(0) / 1000.0));
  const Tensor batch = random_tensor(2 * kHalfBatch, 3, 256, 8);
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(batch));
  state.SetItemsProcessed(state.iterations() * batch.batch());
}
BENCHMARK(BM_Inference)->Arg(250)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace coldetect

BENCHMARK_MAIN();
