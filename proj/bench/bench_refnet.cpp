// Naive tensor loops vs the vectorized engine, serial and OpenMP.
#include <benchmark/benchmark.h>

#include <random>

#include "asv/refnet.hpp"

using namespace asv;

namespace {

LayerSpec conv3(int out) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.kernel = {3, 3};
  l.padding = {1, 1};
  l.out_channels = out;
  return l;
}

// Width-scaled toy net: two padded 3x3 convs with max and average pooling, GAP, FC-10.
struct Fixture {
  std::shared_ptr<const Topology> topo;
  VectorNet net;
  std::vector<double> z0, top;

  explicit Fixture(int channels) {
    Architecture a;
    a.name = "bench";
    a.input = {32, 32, 3};
    LayerSpec l1 = conv3(channels), l2 = conv3(channels), l3 = conv3(channels);
    l1.pool = PoolSpec{PoolKind::Max, {2, 2}, {2, 2}, {0, 0}};
    l2.pool = PoolSpec{PoolKind::Average, {2, 2}, {2, 2}, {0, 0}};
    l3.pool = PoolSpec{PoolKind::GlobalAverage, {0, 0}, {0, 0}, {0, 0}};
    LayerSpec fc;
    fc.kind = LayerKind::FullyConnected;
    fc.out_channels = 10;
    fc.activation = Activation::Identity;
    a.layers = {l1, l2, l3, fc};
    topo = Topology::build(a);
    net = sample_parameters(topo, init_plan(Method::AsvForward, topo->shapes), 1);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    z0.resize(static_cast<std::size_t>(a.input.size()));
    for (double& x : z0) x = nd(rng);
    top.assign(10, 1.0);
  }
};

void BM_NaiveForward(benchmark::State& st) {
  const Fixture f(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(naive::forward(f.topo->arch, f.net.params, f.z0));
}

void BM_Forward(benchmark::State& st, Exec exec) {
  const Fixture f(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(forward(f.net, f.z0, exec));
}

void BM_ForwardBackward(benchmark::State& st, Exec exec) {
  const Fixture f(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    SignalTrace t = forward(f.net, f.z0, exec);
    backward(f.net, t, f.top, exec);
    benchmark::DoNotOptimize(t);
  }
}

}  // namespace

BENCHMARK(BM_NaiveForward)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_Forward, serial, Exec::Serial)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_Forward, parallel, Exec::Parallel)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_ForwardBackward, serial, Exec::Serial)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(BM_ForwardBackward, parallel, Exec::Parallel)->Arg(8)->Arg(32)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
