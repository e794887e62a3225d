#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <tuple>

#include "asv/arch.hpp"

namespace asv::testing {

// Hand-rolled generator for property tests; the seed is printed on failure by the callers.
struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  bool coin() { return uniform(0, 1) == 1; }
};

// A random conv layer that fits its input: kernel <= padded extent, padding < kernel.
inline LayerSpec random_conv(Gen& g, Shape3 in, int max_channels = 4) {
  LayerSpec s;
  s.kind = LayerKind::Conv;
  for (auto [n, k, st, p] : {std::tie(in.w, s.kernel.w, s.stride.w, s.padding.w),
                             std::tie(in.h, s.kernel.h, s.stride.h, s.padding.h)}) {
    k = g.uniform(1, std::min(5, n + 2));
    p = g.uniform(0, k - 1);
    if (n + 2 * p < k) p = k - 1;
    st = g.uniform(1, 3);
  }
  s.out_channels = g.uniform(1, max_channels);
  return s;
}

inline Shape3 random_input(Gen& g, int max_extent = 9, int max_depth = 3) {
  return {g.uniform(1, max_extent), g.uniform(1, max_extent), g.uniform(1, max_depth)};
}

inline LayerSpec fc(int out) {
  LayerSpec s;
  s.kind = LayerKind::FullyConnected;
  s.activation = Activation::Identity;
  s.out_channels = out;
  return s;
}

inline LayerSpec conv(int k, int pad, int stride, int out) {
  LayerSpec s;
  s.kernel = {k, k};
  s.padding = {pad, pad};
  s.stride = {stride, stride};
  s.out_channels = out;
  return s;
}

inline PoolSpec pool(PoolKind kind, int size, int stride, int pad = 0) {
  PoolSpec p;
  p.kind = kind;
  p.size = {size, size};
  p.stride = {stride, stride};
  p.padding = {pad, pad};
  return p;
}

inline PoolSpec gap() {
  PoolSpec p;
  p.kind = PoolKind::GlobalAverage;
  p.size = {0, 0};
  p.stride = {0, 0};
  return p;
}

// The toy network used by the variance experiments, built in code so tests do
// not depend on the working directory.
inline Architecture toy_net(int channels = 32) {
  Architecture a;
  a.name = "toy";
  a.input = {16, 16, 3};
  LayerSpec l1 = conv(3, 1, 1, channels);
  l1.pool = pool(PoolKind::Max, 2, 2);
  LayerSpec l2 = conv(3, 1, 1, channels);
  l2.pool = pool(PoolKind::Average, 2, 2);
  LayerSpec l3 = conv(1, 0, 1, channels);
  l3.pool = gap();
  a.layers = {l1, l2, l3, fc(10)};
  return a;
}

}  // namespace asv::testing
