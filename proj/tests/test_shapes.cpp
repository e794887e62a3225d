#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "asv/shapes.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace asv;
using asv::testing::Brute;
using asv::testing::brute_force;
using asv::testing::Gen;

namespace {

Architecture single_layer(Shape3 in, LayerSpec spec) {
  Architecture a;
  a.name = "single";
  a.input = in;
  a.layers = {spec, asv::testing::fc(2)};
  return a;
}

}  // namespace

TEST_CASE("vectorization is a bijection, first axis fastest") {
  const std::vector<int> dims{3, 4, 5};
  std::set<std::size_t> seen;
  for (int c = 0; c < 5; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 3; ++x) {
        const std::vector<int> idx{x, y, c};
        const std::size_t lin = vec_index(dims, idx);
        CHECK(lin == static_cast<std::size_t>(x + 3 * (y + 4 * c)));
        CHECK(vec_unindex(dims, lin) == idx);
        seen.insert(lin);
      }
  CHECK(seen.size() == 60);
  CHECK(*seen.rbegin() == 59);
  CHECK_THROWS_AS(vec_index(dims, std::vector<int>{3, 0, 0}), OutOfBounds);
  CHECK_THROWS_AS(vec_index(dims, std::vector<int>{0, -1, 0}), OutOfBounds);
  CHECK_THROWS_AS(vec_unindex(dims, 60), OutOfBounds);
}

TEST_CASE("4x4 input, 3x3 kernel, padding 1: epsilon = 100") {
  const LayerSpec spec = asv::testing::conv(3, 1, 1, 1);
  const ConnectionCount cc = connection_count(spec, {4, 4, 1});
  CHECK(cc.fwd == 100);
  CHECK(cc.bwd == 100);

  const ShapeReport rep = infer_shapes(single_layer({4, 4, 1}, spec));
  const ForwardMaps fm = build_forward_maps(spec, rep.layers[0]);
  CHECK(fm.s[0].size() == 4);   // corner
  CHECK(fm.s[1].size() == 6);   // edge
  CHECK(fm.s[5].size() == 9);   // interior
  CHECK(fm.s[15].size() == 4);  // opposite corner
  CHECK(fm.s.total() == 100);
}

TEST_CASE("closed-form count matches brute-force enumeration on random configs") {
  Gen g(7);
  for (int trial = 0; trial < 200; ++trial) {
    const Shape3 in = asv::testing::random_input(g);
    const LayerSpec spec = asv::testing::random_conv(g, in);
    CAPTURE(trial);
    const ShapeReport rep = infer_shapes(single_layer(in, spec));
    const LayerShape& ls = rep.layers[0];
    const Brute b = brute_force(spec, in, ls.conv_out);
    const long long expected = b.pairs * in.d * spec.out_channels;

    CHECK(ls.eps_fwd == expected);
    CHECK(ls.eps_bwd == expected);

    const ForwardMaps fm = build_forward_maps(spec, ls);
    const BackwardMaps bm = build_backward_maps(spec, ls);
    CHECK(fm.s.total() == expected);
    CHECK(bm.j.total() == expected);

    // the sets themselves, projected to spatial positions
    const int plane_in = in.w * in.h, plane_out = ls.conv_out.w * ls.conv_out.h;
    for (std::size_t i = 0; i < fm.s.count(); ++i) {
      std::set<int> spatial;
      for (auto s : fm.s[i]) spatial.insert(s % plane_in);
      REQUIRE(spatial == b.fwd[i % static_cast<std::size_t>(plane_out)]);
      CHECK(fm.s[i].size() == b.fwd[i % static_cast<std::size_t>(plane_out)].size() * static_cast<std::size_t>(in.d));
    }
    for (std::size_t i = 0; i < bm.j.count(); ++i) {
      std::set<int> spatial;
      for (auto j : bm.j[i]) spatial.insert(j % plane_out);
      REQUIRE(spatial == b.bwd[i % static_cast<std::size_t>(plane_in)]);
    }
  }
}

TEST_CASE("without padding every output sees the whole kernel: epsilon = M' S") {
  Gen g(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Shape3 in = asv::testing::random_input(g);
    LayerSpec spec = asv::testing::random_conv(g, in);
    spec.padding = {0, 0};
    spec.kernel = {std::min(spec.kernel.w, in.w), std::min(spec.kernel.h, in.h)};
    CAPTURE(trial);
    const ShapeReport rep = infer_shapes(single_layer(in, spec));
    CHECK(rep.layers[0].eps_fwd == rep.layers[0].M_prime * rep.layers[0].S);
  }
}

TEST_CASE("fully connected layers are dense") {
  const ShapeReport rep = infer_shapes(single_layer({3, 2, 2}, asv::testing::conv(1, 0, 1, 5)));
  const LayerShape& fc = rep.layers[1];
  CHECK(fc.M_prev == 30);
  CHECK(fc.eps_fwd == 60);
  CHECK(fc.eps_bwd == 60);
  CHECK(fc.S == 30);
  CHECK(fc.J == 2);
  CHECK(fc.params == 62);
}

TEST_CASE("forward and backward maps are dual") {
  Gen g(5);
  for (int trial = 0; trial < 60; ++trial) {
    const Shape3 in = asv::testing::random_input(g, 7, 3);
    const LayerSpec spec = asv::testing::random_conv(g, in, 3);
    CAPTURE(trial);
    const ShapeReport rep = infer_shapes(single_layer(in, spec));
    const LayerShape& ls = rep.layers[0];
    const ForwardMaps fm = build_forward_maps(spec, ls);
    const BackwardMaps bm = build_backward_maps(spec, ls);
    const int kw = spec.kernel.w, kh = spec.kernel.h;
    for (std::size_t i = 0; i < fm.s.count(); ++i) {
      const auto s = fm.s[i];
      const auto a = fm.a[i];
      for (std::size_t k = 0; k < s.size(); ++k) {
        const int tap = a[k];
        const int xi1 = tap % kw, xi2 = (tap / kw) % kh, xi3 = tap / (kw * kh);
        CHECK(xi3 == bm.c_tilde[static_cast<std::size_t>(s[k])]);
        const int h_expected = xi1 + kw * (xi2 + kh * fm.c[i]);
        const auto j = bm.j[static_cast<std::size_t>(s[k])];
        const auto h = bm.h[static_cast<std::size_t>(s[k])];
        bool found = false;
        for (std::size_t m = 0; m < j.size(); ++m)
          if (j[m] == static_cast<std::int32_t>(i)) found = h[m] == h_expected;
        CHECK(found);
      }
    }
  }
}

TEST_CASE("non-overlapping pools partition the feature map") {
  Architecture a = single_layer({8, 6, 1}, asv::testing::conv(1, 0, 1, 2));
  a.layers[0].pool = asv::testing::pool(PoolKind::Max, 2, 2);
  const ShapeReport rep = infer_shapes(a);
  const PoolMaps pm = build_pool_maps(rep.layers[0]);
  CHECK(rep.layers[0].out == Shape3{4, 3, 2});
  CHECK(rep.layers[0].T == 4);
  std::vector<int> hits(static_cast<std::size_t>(rep.layers[0].M_prime), 0);
  for (std::size_t t = 0; t < pm.t.count(); ++t) {
    CHECK(pm.t[t].size() == 4);
    for (auto u : pm.t[t]) ++hits[static_cast<std::size_t>(u)];
  }
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  for (std::size_t u = 0; u < pm.d.count(); ++u) {
    REQUIRE(pm.d[u].size() == 1);
    const auto owner = pm.t[static_cast<std::size_t>(pm.d[u][0])];
    CHECK(std::find(owner.begin(), owner.end(), static_cast<std::int32_t>(u)) != owner.end());
  }
}

TEST_CASE("floor-truncated and overlapping pools") {
  SUBCASE("odd extent leaves the last row and column unvisited") {
    Architecture a = single_layer({5, 5, 1}, asv::testing::conv(1, 0, 1, 1));
    a.layers[0].pool = asv::testing::pool(PoolKind::Average, 2, 2);
    const ShapeReport rep = infer_shapes(a);
    const PoolMaps pm = build_pool_maps(rep.layers[0]);
    CHECK(rep.layers[0].out == Shape3{2, 2, 1});
    int empty = 0;
    for (std::size_t u = 0; u < pm.d.count(); ++u) empty += pm.d[u].empty();
    CHECK(empty == 9);
  }
  SUBCASE("3x3 stride 2 padding 1, the input-block pool") {
    Architecture a = single_layer({6, 6, 1}, asv::testing::conv(1, 0, 1, 1));
    a.layers[0].pool = asv::testing::pool(PoolKind::Max, 3, 2, 1);
    const ShapeReport rep = infer_shapes(a);
    const PoolMaps pm = build_pool_maps(rep.layers[0]);
    CHECK(rep.layers[0].out == Shape3{3, 3, 1});
    CHECK(rep.layers[0].T == 9);
    CHECK(pm.t[0].size() == 4);  // padded corner window keeps only real units
    CHECK(pm.t[4].size() == 9);
    CHECK(pm.d[0].size() == 1);
    CHECK(pm.d[2 + 6 * 2].size() == 1);
    CHECK(pm.d[1 + 6 * 1].size() == 4);  // odd rows and columns sit in two windows per axis
  }
  SUBCASE("window override changes T only") {
    Architecture a = single_layer({6, 6, 1}, asv::testing::conv(1, 0, 1, 1));
    a.layers[0].pool = asv::testing::pool(PoolKind::Max, 3, 2, 1);
    a.layers[0].pool->window = 4;
    const ShapeReport rep = infer_shapes(a);
    CHECK(rep.layers[0].T == 4);
    CHECK(rep.layers[0].out == Shape3{3, 3, 1});
  }
}

TEST_CASE("no pool: identity t and d") {
  const ShapeReport rep = infer_shapes(single_layer({3, 3, 1}, asv::testing::conv(3, 1, 1, 2)));
  const PoolMaps pm = build_pool_maps(rep.layers[0]);
  for (std::size_t i = 0; i < pm.t.count(); ++i) {
    REQUIRE(pm.t[i].size() == 1);
    CHECK(pm.t[i][0] == static_cast<std::int32_t>(i));
    CHECK(pm.d[i][0] == static_cast<std::int32_t>(i));
  }
}

TEST_CASE("global average pooling resolves to the full map") {
  const ShapeReport rep = infer_shapes(asv::testing::toy_net());
  const LayerShape& l3 = rep.layers[2];
  CHECK(l3.pool == PoolKind::GlobalAverage);
  CHECK(l3.pool_size == Extent2{4, 4});
  CHECK(l3.T == 16);
  CHECK(l3.out == Shape3{1, 1, 32});
}

TEST_CASE("arch34 shapes follow the published table") {
  const ShapeReport rep = infer_shapes(builtin("arch34"));
  REQUIRE(rep.layers.size() == 34);
  CHECK(rep.layers[0].conv_out == Shape3{112, 112, 64});
  CHECK(rep.layers[0].out == Shape3{56, 56, 64});
  CHECK(rep.layers[0].T == 9);
  const auto range = [&](int a, int b, Shape3 s) {
    for (int l = a; l <= b; ++l) {
      CAPTURE(l);
      CHECK(rep.layers[static_cast<std::size_t>(l - 1)].conv_out == s);
    }
  };
  range(2, 7, {56, 56, 64});
  range(8, 15, {28, 28, 128});
  range(16, 27, {14, 14, 256});
  range(28, 33, {7, 7, 512});
  CHECK(rep.layers[32].out == Shape3{1, 1, 512});
  CHECK(rep.layers[32].T == 49);
  CHECK(rep.layers[33].out == Shape3{1, 1, 10});
  CHECK(rep.total_params() == doctest::Approx(2.11e7).epsilon(0.02));
}

TEST_CASE("arch50 shapes follow the published table") {
  const ShapeReport rep = infer_shapes(builtin("arch50"));
  REQUIRE(rep.layers.size() == 50);
  CHECK(rep.layers[0].conv_out == Shape3{112, 112, 64});
  // each block range ends on the listed shape; the stride sits on the block's 3x3 conv
  const auto block_end = [&](int last, Shape3 s) { CHECK(rep.layers[static_cast<std::size_t>(last - 1)].conv_out == s); };
  block_end(10, {56, 56, 256});
  block_end(22, {28, 28, 512});
  block_end(40, {14, 14, 1024});
  block_end(49, {7, 7, 2048});
  CHECK(rep.layers[11].conv_out.w == 28);
  CHECK(rep.layers[48].out == Shape3{1, 1, 2048});
  CHECK(rep.layers[49].out == Shape3{1, 1, 10});
  CHECK(rep.total_params() == doctest::Approx(2.07e7).epsilon(0.02));
}

TEST_CASE("arch34 layer 1 count by direct enumeration") {
  const Architecture a = builtin("arch34");
  const ShapeReport rep = infer_shapes(a);
  const LayerShape& ls = rep.layers[0];
  const Brute b = brute_force(a.layers[0], ls.in, ls.conv_out, false);
  CHECK(b.pairs * ls.in.d * ls.conv_out.d == ls.eps_fwd);
  CHECK(ls.eps_fwd == ls.eps_bwd);
}

TEST_CASE("oversized layers refuse to materialize") {
  Architecture a;
  a.name = "wide";
  a.input = {50000, 1, 1};
  a.layers = {asv::testing::fc(50000)};
  const ShapeReport rep = infer_shapes(a);
  CHECK_THROWS_AS(build_forward_maps(a.layers[0], rep.layers[0]), Error);
}
