#include "asv/refnet.hpp"

#include <random>

namespace asv {

std::shared_ptr<const Topology> Topology::build(const Architecture& arch) {
  auto topo = std::make_shared<Topology>();
  topo->arch = arch;
  topo->shapes = infer_shapes(arch);
  const std::size_t L = arch.layers.size();
  topo->maps.resize(L);
  topo->channel_begin.resize(L);

  // Layers are independent of each other.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t l = 0; l < L; ++l)
    topo->maps[l] = build_layer_maps(arch.layers[l], topo->shapes.layers[l]);

  for (std::size_t l = 0; l < L; ++l) {
    const auto& c = topo->maps[l].fwd.c;
    auto& begin = topo->channel_begin[l];
    begin.assign(static_cast<std::size_t>(topo->shapes.layers[l].C) + 1, 0);
    for (std::int32_t ch : c) ++begin[static_cast<std::size_t>(ch) + 1];
    for (std::size_t k = 1; k < begin.size(); ++k) begin[k] += begin[k - 1];
  }
  return topo;
}

std::vector<double> backward_kernel(const LayerSpec& spec, const LayerShape& shape, std::span<const double> W) {
  std::vector<double> Wt(static_cast<std::size_t>(shape.C_tilde * shape.J));
  if (spec.kind == LayerKind::FullyConnected) {
    for (long long i = 0; i < shape.C_tilde; ++i)
      for (long long j = 0; j < shape.J; ++j)
        Wt[static_cast<std::size_t>(i * shape.J + j)] = W[static_cast<std::size_t>(j * shape.S + i)];
    return Wt;
  }
  const long long kw = spec.kernel.w, kh = spec.kernel.h;
  const long long d = shape.in.d, d_out = shape.conv_out.d;
  for (long long n = 0; n < d; ++n)
    for (long long k = 0; k < d_out; ++k)
      for (long long z2 = 0; z2 < kh; ++z2)
        for (long long z1 = 0; z1 < kw; ++z1)
          Wt[static_cast<std::size_t>(n * shape.J + z1 + kw * (z2 + kh * k))] =
              W[static_cast<std::size_t>(k * shape.S + z1 + kw * (z2 + kh * n))];
  return Wt;
}

void VectorNet::refresh_backward_kernels() {
  for (std::size_t l = 0; l < params.size(); ++l)
    params[l].W_tilde = backward_kernel(topo->arch.layers[l], topo->shapes.layers[l], params[l].W);
}

VectorNet sample_parameters(std::shared_ptr<const Topology> topo, const InitPlan& plan, std::uint64_t seed) {
  if (plan.layers.size() != topo->shapes.layers.size()) throw ShapeMismatch("plan does not cover every layer");
  VectorNet net;
  net.topo = std::move(topo);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t l = 0; l < plan.layers.size(); ++l) {
    const auto& ls = net.topo->shapes.layers[l];
    const auto& li = plan.layers[l];
    LayerParams p;
    p.W.resize(static_cast<std::size_t>(ls.C * ls.S));
    p.b.assign(static_cast<std::size_t>(ls.C), 0.0);
    for (double& w : p.W) w = li.sigma_w * normal(rng);
    if (li.sigma_b != 0.0)
      for (double& b : p.b) b = li.sigma_b * normal(rng);
    net.params.push_back(std::move(p));
  }
  net.refresh_backward_kernels();
  return net;
}

namespace {

bool parallel(Exec e) { return e == Exec::Parallel; }

void conv_forward(const ForwardMaps& m, const LayerParams& p, long long S, std::span<const double> z_in,
                  std::vector<double>& u, Exec exec) {
  const auto n = static_cast<std::int64_t>(m.c.size());
  u.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static) if (parallel(exec))
  for (std::int64_t i = 0; i < n; ++i) {
    const auto s = m.s[static_cast<std::size_t>(i)];
    const auto a = m.a[static_cast<std::size_t>(i)];
    const std::int32_t c = m.c[static_cast<std::size_t>(i)];
    const double* w = p.W.data() + static_cast<std::ptrdiff_t>(c) * S;
    double acc = p.b[static_cast<std::size_t>(c)];
    for (std::size_t k = 0; k < s.size(); ++k) acc += w[a[k]] * z_in[static_cast<std::size_t>(s[k])];
    u[static_cast<std::size_t>(i)] = acc;
  }
}

void pool_forward(const LayerShape& ls, const PoolMaps& m, const std::vector<double>& v, std::vector<double>& z,
                  std::vector<std::int32_t>& winner, Exec exec) {
  if (!ls.pool) {
    z = v;
    return;
  }
  const auto n = static_cast<std::int64_t>(m.t.count());
  z.resize(static_cast<std::size_t>(n));
  const bool is_max = *ls.pool == PoolKind::Max;
  if (is_max) winner.resize(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(static) if (parallel(exec))
  for (std::int64_t o = 0; o < n; ++o) {
    const auto t = m.t[static_cast<std::size_t>(o)];
    if (is_max) {
      std::int32_t best = t[0];
      for (std::size_t k = 1; k < t.size(); ++k)
        if (v[static_cast<std::size_t>(t[k])] > v[static_cast<std::size_t>(best)]) best = t[k];
      winner[static_cast<std::size_t>(o)] = best;
      z[static_cast<std::size_t>(o)] = v[static_cast<std::size_t>(best)];
    } else {
      double acc = 0.0;
      for (std::int32_t unit : t) acc += v[static_cast<std::size_t>(unit)];
      z[static_cast<std::size_t>(o)] = acc / static_cast<double>(t.size());
    }
  }
}

}  // namespace

SignalTrace forward(const VectorNet& net, std::span<const double> z0, Exec exec) {
  const Topology& topo = *net.topo;
  if (static_cast<long long>(z0.size()) != topo.arch.input.size())
    throw ShapeMismatch("input has " + std::to_string(z0.size()) + " entries, expected " +
                        std::to_string(topo.arch.input.size()));
  SignalTrace tr;
  tr.input.assign(z0.begin(), z0.end());
  tr.layers.resize(topo.shapes.layers.size());

  std::span<const double> cur = tr.input;
  for (std::size_t l = 0; l < tr.layers.size(); ++l) {
    const auto& ls = topo.shapes.layers[l];
    auto& sig = tr.layers[l];
    conv_forward(topo.maps[l].fwd, net.params[l], ls.S, cur, sig.u, exec);
    sig.v = sig.u;
    if (ls.activation == Activation::ReLU)
      for (double& x : sig.v) x = x > 0.0 ? x : 0.0;
    pool_forward(ls, topo.maps[l].pool, sig.v, sig.z, sig.winner, exec);
    cur = sig.z;
  }
  return tr;
}

void backward(const VectorNet& net, SignalTrace& trace, std::span<const double> delta_uL, Exec exec) {
  const Topology& topo = *net.topo;
  const std::size_t L = topo.shapes.layers.size();
  if (trace.layers.size() != L || trace.input.size() != static_cast<std::size_t>(topo.arch.input.size()))
    throw MissingForwardTrace("backward needs the forward trace of this network");
  for (std::size_t l = 0; l < L; ++l)
    if (trace.layers[l].u.size() != static_cast<std::size_t>(topo.shapes.layers[l].M_prime))
      throw MissingForwardTrace("forward trace is incomplete at layer " + std::to_string(l + 1));
  if (delta_uL.size() != static_cast<std::size_t>(topo.shapes.layers.back().M_prime))
    throw ShapeMismatch("top gradient has " + std::to_string(delta_uL.size()) + " entries, expected " +
                        std::to_string(topo.shapes.layers.back().M_prime));

  for (std::size_t l = L; l-- > 0;) {
    const auto& ls = topo.shapes.layers[l];
    const auto& maps = topo.maps[l];
    const auto& p = net.params[l];
    auto& sig = trace.layers[l];

    if (l + 1 == L) {
      sig.dz.assign(delta_uL.begin(), delta_uL.end());
    }
    // sig.dz holds dE/dz^(l) here.
    const auto n_units = static_cast<std::int64_t>(ls.M_prime);
    sig.dv.assign(static_cast<std::size_t>(n_units), 0.0);
    if (!ls.pool) {
      sig.dv = sig.dz;
    } else {
      const bool is_max = *ls.pool == PoolKind::Max;
#pragma omp parallel for schedule(static) if (parallel(exec))
      for (std::int64_t i = 0; i < n_units; ++i) {
        double acc = 0.0;
        for (std::int32_t o : maps.pool.d[static_cast<std::size_t>(i)]) {
          const auto oi = static_cast<std::size_t>(o);
          if (is_max) {
            if (sig.winner[oi] == i) acc += sig.dz[oi];
          } else {
            acc += sig.dz[oi] / static_cast<double>(maps.pool.t[oi].size());
          }
        }
        sig.dv[static_cast<std::size_t>(i)] = acc;
      }
    }
    sig.du = sig.dv;
    if (ls.activation == Activation::ReLU)
      for (std::size_t i = 0; i < sig.du.size(); ++i)
        if (sig.u[i] < 0.0) sig.du[i] = 0.0;

    // Parameter gradients: each channel owns a contiguous run of output units.
    const std::vector<double>& z_in = l == 0 ? trace.input : trace.layers[l - 1].z;
    sig.grad_W.assign(static_cast<std::size_t>(ls.C * ls.S), 0.0);
    sig.grad_b.assign(static_cast<std::size_t>(ls.C), 0.0);
    const auto& begin = topo.channel_begin[l];
    const auto n_channels = static_cast<std::int64_t>(ls.C);
#pragma omp parallel for schedule(static) if (parallel(exec))
    for (std::int64_t c = 0; c < n_channels; ++c) {
      double* gw = sig.grad_W.data() + c * ls.S;
      double gb = 0.0;
      for (std::int64_t i = begin[static_cast<std::size_t>(c)]; i < begin[static_cast<std::size_t>(c) + 1]; ++i) {
        const double g = sig.du[static_cast<std::size_t>(i)];
        if (g == 0.0) continue;
        gb += g;
        const auto s = maps.fwd.s[static_cast<std::size_t>(i)];
        const auto a = maps.fwd.a[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < s.size(); ++k) gw[a[k]] += g * z_in[static_cast<std::size_t>(s[k])];
      }
      sig.grad_b[static_cast<std::size_t>(c)] = gb;
    }

    // dE/dz^(l-1) through the backward kernel.
    const auto n_in = static_cast<std::int64_t>(ls.M_prev);
    std::vector<double> dz_prev(static_cast<std::size_t>(n_in));
#pragma omp parallel for schedule(static) if (parallel(exec))
    for (std::int64_t i = 0; i < n_in; ++i) {
      const auto j = maps.bwd.j[static_cast<std::size_t>(i)];
      const auto h = maps.bwd.h[static_cast<std::size_t>(i)];
      const double* wt = p.W_tilde.data() + static_cast<std::ptrdiff_t>(maps.bwd.c_tilde[static_cast<std::size_t>(i)]) * ls.J;
      double acc = 0.0;
      for (std::size_t k = 0; k < j.size(); ++k) acc += wt[h[k]] * sig.du[static_cast<std::size_t>(j[k])];
      dz_prev[static_cast<std::size_t>(i)] = acc;
    }
    if (l == 0) trace.dinput = std::move(dz_prev);
    else trace.layers[l - 1].dz = std::move(dz_prev);
  }
  trace.has_backward = true;
}

}  // namespace asv
