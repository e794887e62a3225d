#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include "asv/variance.hpp"
#include "support.hpp"

using namespace asv;
using asv::testing::Gen;
using std::numbers::pi;

namespace {

// tau(Max, T) at 40 significant digits (mpmath, adaptive quadrature on the half line).
constexpr std::pair<int, double> kTauMax[] = {
    {2, 0.90915494309189533577}, {3, 1.251564638493291016},  {4, 1.54378501158570437},
    {9, 2.5625591277423720664},  {16, 3.4137352499826324708}, {64, 5.6965730231783300992},
};

// Same constants over the whole line (identity activation).
constexpr std::pair<int, double> kTauMaxIdentity[] = {
    {2, 1.0}, {3, 1.2756644477108960248}, {4, 1.5513288954217920495}, {9, 2.5626174182924910044}};

Architecture chain(Shape3 input, std::vector<LayerSpec> convs) {
  Architecture a;
  a.name = "chain";
  a.input = input;
  a.layers = std::move(convs);
  a.layers.push_back(asv::testing::fc(10));
  return a;
}

}  // namespace

TEST_CASE("quadrature") {
  const auto r = integrate([](double x) { return x * x * x * x * x; }, 0.0, 2.0);
  CHECK(r.value == doctest::Approx(64.0 / 6.0).epsilon(1e-14));
  CHECK(integrate([](double x) { return std::exp(-x); }, 0.0, 12.0).value ==
        doctest::Approx(-std::expm1(-12.0)).epsilon(1e-13));
  // a jump converges only linearly in the panel width, far too slowly
  CHECK_THROWS_AS(integrate([](double x) { return x < 1.0 / 3.0 ? 1.0 : 0.0; }, 0.0, 1.0), QuadratureFailure);
}

TEST_CASE("closed-form constants") {
  CHECK(std::abs(tau(PoolClass::Average, 4) - (1.0 + 3.0 / pi) / 8.0) < 1e-12);
  CHECK(tau(PoolClass::Average, 1) == 0.5);
  CHECK(gamma(PoolClass::Average, 1) == 0.5);
  CHECK(std::abs(gamma(PoolClass::Average, 7) - 1.0 / 98.0) < 1e-15);
  CHECK(std::abs(tau(PoolClass::Max, 1) - 0.5) < 1e-9);
  CHECK(std::abs(gamma(PoolClass::Max, 1) - 0.5) < 1e-15);
  CHECK(tau(PoolClass::NoPool, 1) == 0.5);
  CHECK(gamma(PoolClass::NoPool, 1) == 0.5);
  for (int T = 1; T <= 40; ++T) {
    CAPTURE(T);
    CHECK(gamma(PoolClass::Max, T) == doctest::Approx((std::pow(2.0, T) - 1.0) / (T * std::pow(2.0, T))).epsilon(1e-14));
  }
  CHECK(std::abs(tau(PoolClass::Max, 2) - (0.75 + 0.5 / pi)) < 1e-12);
}

TEST_CASE("tau(Max, T) against high-precision values") {
  for (auto [T, v] : kTauMax) {
    CAPTURE(T);
    CHECK(std::abs(tau(PoolClass::Max, T) - v) < 1e-11);
  }
  for (auto [T, v] : kTauMaxIdentity) {
    CAPTURE(T);
    CHECK(std::abs(tau(PoolClass::Max, T, Activation::Identity) - v) < 1e-11);
  }
}

TEST_CASE("tau(Max, T) against a Monte Carlo oracle") {
  std::mt19937_64 rng(424242);
  std::normal_distribution<double> n01;
  constexpr int N = 1'000'000;
  for (int T : {2, 3, 4, 9}) {
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < N; ++i) {
      double m = 0.0;  // max(0, X_1, ..., X_T)
      for (int t = 0; t < T; ++t) m = std::max(m, n01(rng));
      const double x = m * m;
      sum += x;
      sum2 += x * x;
    }
    const double mean = sum / N;
    const double se = std::sqrt((sum2 / N - mean * mean) / (N - 1));
    CAPTURE(T);
    CAPTURE(mean);
    CAPTURE(se);
    CHECK(std::abs(tau(PoolClass::Max, T) - mean) < 3.0 * se);
  }
}

TEST_CASE("monotonicity in the window size") {
  for (int T = 1; T < 64; ++T) {
    CAPTURE(T);
    CHECK(tau(PoolClass::Max, T + 1) > tau(PoolClass::Max, T));
    CHECK(gamma(PoolClass::Max, T + 1) < gamma(PoolClass::Max, T));
    CHECK(gamma(PoolClass::Average, T + 1) < gamma(PoolClass::Average, T));
    if (T >= 2) CHECK(tau(PoolClass::Average, T + 1) < tau(PoolClass::Average, T));
  }
  // average of many units: E[mean^2] -> E[relu]^2 = 1/(2 pi)
  CHECK(tau(PoolClass::Average, 100000) == doctest::Approx(1.0 / (2.0 * pi)).epsilon(1e-4));
}

TEST_CASE("identity activation drops the half factor") {
  CHECK(tau(PoolClass::NoPool, 1, Activation::Identity) == 1.0);
  CHECK(gamma(PoolClass::NoPool, 1, Activation::Identity) == 1.0);
  CHECK(tau(PoolClass::Average, 4, Activation::Identity) == 0.25);
  CHECK(gamma(PoolClass::Average, 4, Activation::Identity) == 1.0 / 16.0);
  CHECK(gamma(PoolClass::Max, 4, Activation::Identity) == 0.25);
  CHECK(tau(PoolClass::Max, 4, Activation::ReLU) == tau(PoolClass::Max, 4));
}

TEST_CASE("memoized constants are safe under concurrent lookups") {
  std::vector<std::thread> pool;
  std::vector<double> got(8 * 30);
  for (int w = 0; w < 8; ++w)
    pool.emplace_back([&, w] {
      for (int T = 1; T <= 30; ++T) got[static_cast<std::size_t>(w * 30 + T - 1)] = tau(PoolClass::Max, T + 100);
    });
  for (auto& t : pool) t.join();
  for (int w = 1; w < 8; ++w)
    for (int T = 0; T < 30; ++T) CHECK(got[static_cast<std::size_t>(w * 30 + T)] == got[static_cast<std::size_t>(T)]);
}

TEST_CASE("method names") {
  for (Method m : kAllMethods) CHECK(parse_method(to_string(m)) == m);
  CHECK(to_string(Method::AsvBackward) == "asv-backward");
  CHECK_THROWS_AS(parse_method("lecun"), UnknownName);
}

TEST_CASE("single padded conv with average pool, by hand") {
  // 16x16x1 -> conv 3x3 p1 c channels + avg 2x2 -> FC 10
  const int c = 6;
  LayerSpec l1 = asv::testing::conv(3, 1, 1, c);
  l1.pool = asv::testing::pool(PoolKind::Average, 2, 2);
  const ShapeReport rep = infer_shapes(chain({16, 16, 1}, {l1}));
  CHECK(rep.layers[0].eps_fwd == c * 46 * 46);
  CHECK(rep.layers[0].M_prime == 256 * c);

  InitPlan plan = init_plan(Method::Xavier, rep);
  override_sigmas(plan, {0.3, 0.05});
  const auto q = predict_forward(rep, plan, 1.0);
  const double q1 = 0.09 * 2116.0 / 256.0;
  CHECK(q[0] == doctest::Approx(q1).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(0.0025 * q1 * tau(PoolClass::Average, 4) * 64.0 * c).epsilon(1e-14));
}

TEST_CASE("kaiming reduction without padding or pooling") {
  Gen g(99);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<LayerSpec> convs;
    Shape3 in{g.uniform(6, 12), g.uniform(6, 12), g.uniform(1, 4)};
    const Shape3 input = in;
    const int depth = g.uniform(1, 3);
    for (int l = 0; l < depth; ++l) {
      const int k = g.uniform(1, 3);
      if (k > in.w || k > in.h) break;
      convs.push_back(asv::testing::conv(k, 0, 1, g.uniform(1, 6)));
      in = {in.w - k + 1, in.h - k + 1, convs.back().out_channels};
    }
    const ShapeReport rep = infer_shapes(chain(input, convs));
    CAPTURE(trial);

    // forward: exact for every layer fed by a ReLU output; the input layer too
    // once the input is given the ReLU constant
    const InitPlan kf = init_plan(Method::KaimingForward, rep);
    const InitPlan af = init_plan(Method::AsvForward, rep);
    InitOptions relu_input;
    relu_input.tau0 = 0.5;
    const InitPlan af_relu = init_plan(Method::AsvForward, rep, relu_input);
    for (std::size_t l = 0; l < rep.layers.size(); ++l) {
      const double kv = kf.layers[l].sigma_w * kf.layers[l].sigma_w;
      CHECK(std::abs(af_relu.layers[l].sigma_w * af_relu.layers[l].sigma_w - kv) < 1e-12 * kv);
      if (l > 0) CHECK(std::abs(af.layers[l].sigma_w * af.layers[l].sigma_w - kv) < 1e-12 * kv);
    }
    // default input constant: layer 1 gets half the Kaiming variance
    CHECK(af.layers[0].sigma_w * af.layers[0].sigma_w ==
          doctest::Approx(0.5 * kf.layers[0].sigma_w * kf.layers[0].sigma_w).epsilon(1e-12));

    // backward: border inputs feed fewer outputs, so the exact census gives
    // Kaiming scaled by M_prev*J/eps (>= 1), never below it
    InitOptions unclamped;
    unclamped.clamp_factor = std::nullopt;
    const InitPlan kb = init_plan(Method::KaimingBackward, rep);
    const InitPlan ab = init_plan(Method::AsvBackward, rep, unclamped);
    for (std::size_t l = 0; l + 1 < rep.layers.size(); ++l) {
      const auto& ls = rep.layers[l];
      const double ratio = static_cast<double>(ls.M_prev * ls.J) / static_cast<double>(ls.eps_bwd);
      const double kv = kb.layers[l].sigma_w * kb.layers[l].sigma_w;
      CHECK(ratio >= 1.0);
      CHECK(ab.layers[l].sigma_w * ab.layers[l].sigma_w == doctest::Approx(kv * ratio).epsilon(1e-12));
    }
  }
}

TEST_CASE("kaiming backward reduction is exact when every input has a full fan-out") {
  // padding k-1, stride 1: every input unit is covered by k*k output positions
  const ShapeReport rep = infer_shapes(chain({6, 6, 3}, {asv::testing::conv(3, 2, 1, 5), asv::testing::conv(3, 2, 1, 7)}));
  InitOptions unclamped;
  unclamped.clamp_factor = std::nullopt;
  const InitPlan kb = init_plan(Method::KaimingBackward, rep);
  const InitPlan ab = init_plan(Method::AsvBackward, rep, unclamped);
  for (std::size_t l = 0; l < 2; ++l) {
    const double kv = kb.layers[l].sigma_w * kb.layers[l].sigma_w;
    CHECK(std::abs(ab.layers[l].sigma_w * ab.layers[l].sigma_w - kv) < 1e-12 * kv);
    CHECK(kv == doctest::Approx(2.0 / (9.0 * (l == 0 ? 5 : 7))).epsilon(1e-14));
  }
}

TEST_CASE("padding raises the ASV variance above Kaiming") {
  const ShapeReport rep = infer_shapes(chain({8, 8, 4}, {asv::testing::conv(3, 1, 1, 8), asv::testing::conv(3, 1, 1, 8)}));
  const InitPlan kf = init_plan(Method::KaimingForward, rep);
  const InitPlan af = init_plan(Method::AsvForward, rep);
  CHECK(af.layers[1].sigma_w > kf.layers[1].sigma_w);
}

TEST_CASE("self-consistency of the ASV plans") {
  for (const Architecture& a : {asv::testing::toy_net(), builtin("arch34"), builtin("arch50")}) {
    const ShapeReport rep = infer_shapes(a);
    CAPTURE(a.name);
    const auto q = predict_forward(rep, init_plan(Method::AsvForward, rep), 1.0);
    for (double v : q) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    InitOptions unclamped;
    unclamped.clamp_factor = std::nullopt;
    const auto r = predict_backward(rep, init_plan(Method::AsvBackward, rep, unclamped), 1.0);
    for (double v : r) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("variance scales with q0 and rL") {
  const ShapeReport rep = infer_shapes(asv::testing::toy_net());
  const InitPlan plan = init_plan(Method::Xavier, rep);
  const auto a = predict(rep, plan, 1.0, 1.0);
  const auto b = predict(rep, plan, 3.0, 5.0);
  for (std::size_t l = 0; l < a.q.size(); ++l) {
    CHECK(b.q[l] == doctest::Approx(3.0 * a.q[l]).epsilon(1e-14));
    CHECK(b.r[l] == doctest::Approx(5.0 * a.r[l]).epsilon(1e-14));
  }
}

TEST_CASE("ASV-backward clamp") {
  const ShapeReport rep = infer_shapes(builtin("arch34"));
  const auto& l1 = rep.layers[0];
  InitOptions unclamped;
  unclamped.clamp_factor = std::nullopt;
  const InitPlan raw = init_plan(Method::AsvBackward, rep, unclamped);
  const InitPlan def = init_plan(Method::AsvBackward, rep);
  const double unpooled = static_cast<double>(l1.M_prev) / (0.5 * static_cast<double>(l1.eps_fwd));

  CHECK_FALSE(raw.layers[0].clamped);
  CHECK(def.layers[0].clamped);
  CHECK(def.layers[0].sigma_w * def.layers[0].sigma_w == doctest::Approx(3.0 * unpooled).epsilon(1e-14));
  CHECK(raw.layers[0].sigma_w > def.layers[0].sigma_w);

  InitOptions sd;
  sd.clamp_mode = ClampMode::StdDev;
  const InitPlan sdp = init_plan(Method::AsvBackward, rep, sd);
  // the 3x std-dev ceiling is 9x in variance, which this layer stays under
  CHECK_FALSE(sdp.layers[0].clamped);
  CHECK(sdp.layers[0].sigma_w == raw.layers[0].sigma_w);
  CHECK(raw.layers[0].sigma_w * raw.layers[0].sigma_w < 9.0 * unpooled);
  sd.clamp_factor = 1.5;
  const InitPlan tight = init_plan(Method::AsvBackward, rep, sd);
  CHECK(tight.layers[0].clamped);
  CHECK(tight.layers[0].sigma_w * tight.layers[0].sigma_w == doctest::Approx(2.25 * unpooled).epsilon(1e-14));

  // layers without pooling never hit the ceiling
  for (std::size_t l = 1; l + 2 < rep.layers.size(); ++l) CHECK_FALSE(def.layers[l].clamped);
  // the method keeps at least the unpooled value at pooled layers
  CHECK(def.layers[0].sigma_w * def.layers[0].sigma_w > unpooled);
}

TEST_CASE("fan-based methods") {
  const ShapeReport rep = infer_shapes(builtin("arch34"));
  const auto& l = rep.layers[4];
  const InitPlan x = init_plan(Method::Xavier, rep);
  CHECK(x.layers[4].sigma_w * x.layers[4].sigma_w == doctest::Approx(2.0 / static_cast<double>(l.S + l.J)).epsilon(1e-14));
  for (Method m : kAllMethods)
    for (const auto& li : init_plan(m, rep).layers) CHECK(li.sigma_b == 0.0);
}

TEST_CASE("override_sigmas checks its input") {
  const ShapeReport rep = infer_shapes(asv::testing::toy_net());
  InitPlan plan = init_plan(Method::Xavier, rep);
  CHECK_THROWS_AS(override_sigmas(plan, {1.0, 1.0}), ShapeMismatch);
  CHECK_THROWS_AS(override_sigmas(plan, {1.0, -1.0, 1.0, 1.0}), Error);
  override_sigmas(plan, {0.0, 0.0, 0.0, 0.0});
  const auto r = predict_backward(rep, plan, 1.0);
  CHECK(r[0] == 0.0);
}
