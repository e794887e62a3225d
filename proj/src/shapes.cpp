#include "asv/shapes.hpp"

#include <algorithm>
#include <limits>

#include "asv/geometry.hpp"

namespace asv {

std::size_t vec_index(std::span<const int> dims, std::span<const int> idx) {
  if (dims.size() != idx.size()) throw OutOfBounds("index rank does not match shape rank");
  std::size_t linear = 0;
  std::size_t stride = 1;
  for (std::size_t axis = 0; axis < dims.size(); ++axis) {
    if (idx[axis] < 0 || idx[axis] >= dims[axis])
      throw OutOfBounds("index " + std::to_string(idx[axis]) + " outside axis " + std::to_string(axis) +
                        " of extent " + std::to_string(dims[axis]));
    linear += stride * static_cast<std::size_t>(idx[axis]);
    stride *= static_cast<std::size_t>(dims[axis]);
  }
  return linear;
}

std::vector<int> vec_unindex(std::span<const int> dims, std::size_t linear) {
  std::size_t total = 1;
  for (int n : dims) total *= static_cast<std::size_t>(n);
  if (linear >= total) throw OutOfBounds("linear index " + std::to_string(linear) + " >= " + std::to_string(total));
  std::vector<int> idx(dims.size());
  for (std::size_t axis = 0; axis < dims.size(); ++axis) {
    idx[axis] = static_cast<int>(linear % dims[axis]);
    linear /= dims[axis];
  }
  return idx;
}

long long ShapeReport::total_params() const {
  long long n = 0;
  for (const auto& l : layers) n += l.params;
  return n;
}

namespace {

// Sum over output positions of the number of kernel taps landing inside the input.
long long axis_forward_census(int n, int k, int s, int p, int n_out) {
  long long total = 0;
  for (int i = 0; i < n_out; ++i) {
    const int lo = std::max(0, p - s * i);
    const int hi = std::min(k, n + p - s * i);
    if (hi > lo) total += hi - lo;
  }
  return total;
}

// Sum over input positions of the number of output positions whose window covers it.
long long axis_backward_census(int n, int k, int s, int p, int n_out) {
  long long total = 0;
  for (int l = 0; l < n; ++l) {
    // l + p - s*i in [0, k)  <=>  (l + p - k) < s*i <= l + p
    const int num = l + p - k + 1;
    const int i_lo = std::max(0, num <= 0 ? 0 : (num + s - 1) / s);
    const int i_hi = std::min(n_out - 1, (l + p) / s);
    if (i_hi >= i_lo) total += i_hi - i_lo + 1;
  }
  return total;
}

}  // namespace

ConnectionCount connection_count(const LayerSpec& spec, Shape3 in) {
  if (spec.kind == LayerKind::FullyConnected) {
    const long long n = in.size() * spec.out_channels;
    return {n, n};
  }
  const int w_out = window_out_extent(in.w, spec.kernel.w, spec.stride.w, spec.padding.w);
  const int h_out = window_out_extent(in.h, spec.kernel.h, spec.stride.h, spec.padding.h);
  const long long channels = 1LL * in.d * spec.out_channels;
  ConnectionCount c;
  c.fwd = channels * axis_forward_census(in.w, spec.kernel.w, spec.stride.w, spec.padding.w, w_out) *
          axis_forward_census(in.h, spec.kernel.h, spec.stride.h, spec.padding.h, h_out);
  c.bwd = channels * axis_backward_census(in.w, spec.kernel.w, spec.stride.w, spec.padding.w, w_out) *
          axis_backward_census(in.h, spec.kernel.h, spec.stride.h, spec.padding.h, h_out);
  return c;
}

ShapeReport infer_shapes(const Architecture& arch) {
  validate(arch);
  ShapeReport rep;
  rep.arch_name = arch.name;
  rep.input = arch.input;
  Shape3 cur = arch.input;
  int layer = 0;
  for (const auto& spec : arch.layers) {
    LayerShape ls;
    ls.layer = ++layer;
    ls.kind = spec.kind;
    ls.activation = spec.activation;
    ls.in = cur;
    ls.M_prev = cur.size();

    if (spec.kind == LayerKind::Conv) {
      ls.conv_out = {window_out_extent(cur.w, spec.kernel.w, spec.stride.w, spec.padding.w),
                     window_out_extent(cur.h, spec.kernel.h, spec.stride.h, spec.padding.h), spec.out_channels};
      ls.S = 1LL * spec.kernel.w * spec.kernel.h * cur.d;
      ls.J = 1LL * spec.kernel.w * spec.kernel.h * spec.out_channels;
      ls.C = spec.out_channels;
      ls.C_tilde = cur.d;
    } else {
      ls.conv_out = {1, 1, spec.out_channels};
      ls.S = ls.M_prev;
      ls.J = spec.out_channels;
      ls.C = spec.out_channels;
      ls.C_tilde = ls.M_prev;
    }
    ls.M_prime = ls.conv_out.size();

    ls.out = ls.conv_out;
    if (spec.pool) {
      const PoolSpec& p = *spec.pool;
      ls.pool = p.kind;
      if (p.kind == PoolKind::GlobalAverage) {
        ls.pool_size = {ls.conv_out.w, ls.conv_out.h};
        ls.pool_stride = ls.pool_size;
        ls.pool_padding = {0, 0};
      } else {
        ls.pool_size = p.size;
        ls.pool_stride = p.stride;
        ls.pool_padding = p.padding;
      }
      ls.out = {window_out_extent(ls.conv_out.w, ls.pool_size.w, ls.pool_stride.w, ls.pool_padding.w),
                window_out_extent(ls.conv_out.h, ls.pool_size.h, ls.pool_stride.h, ls.pool_padding.h),
                ls.conv_out.d};
      ls.T = p.window.value_or(ls.pool_size.w * ls.pool_size.h);
    }
    ls.M = ls.out.size();

    const ConnectionCount cc = connection_count(spec, cur);
    ls.eps_fwd = cc.fwd;
    ls.eps_bwd = cc.bwd;
    ls.params = ls.C * ls.S + ls.C;

    rep.layers.push_back(ls);
    cur = ls.out;
  }
  return rep;
}

std::vector<ConnectionCount> connection_counts(const Architecture& arch) {
  const ShapeReport rep = infer_shapes(arch);
  std::vector<ConnectionCount> out;
  out.reserve(rep.layers.size());
  for (const auto& l : rep.layers) out.push_back({l.eps_fwd, l.eps_bwd});
  return out;
}

namespace {

void require_materializable(const LayerShape& shape, long long entries) {
  constexpr long long limit = std::numeric_limits<std::int32_t>::max();
  if (shape.M_prev > limit || shape.M_prime > limit || entries > (1LL << 31))
    throw Error("layer " + std::to_string(shape.layer) + " is too large to materialize index maps");
}

}  // namespace

ForwardMaps build_forward_maps(const LayerSpec& spec, const LayerShape& shape) {
  require_materializable(shape, shape.eps_fwd);
  ForwardMaps m;
  m.s.items.reserve(static_cast<std::size_t>(shape.eps_fwd));
  m.a.items.reserve(static_cast<std::size_t>(shape.eps_fwd));
  m.c.reserve(static_cast<std::size_t>(shape.M_prime));
  m.s.offsets.reserve(static_cast<std::size_t>(shape.M_prime) + 1);
  m.a.offsets.reserve(static_cast<std::size_t>(shape.M_prime) + 1);

  if (spec.kind == LayerKind::FullyConnected) {
    for (long long i = 0; i < shape.M_prime; ++i) {
      for (long long k = 0; k < shape.M_prev; ++k) {
        m.s.items.push_back(static_cast<std::int32_t>(k));
        m.a.items.push_back(static_cast<std::int32_t>(k));
      }
      m.s.close_set();
      m.a.close_set();
      m.c.push_back(static_cast<std::int32_t>(i));
    }
    return m;
  }

  const Shape3 in = shape.in;
  const Shape3 out = shape.conv_out;
  const int kw = spec.kernel.w, kh = spec.kernel.h;
  // Output units enumerated in vectorized order: x fastest, then y, then channel.
  for (int ch = 0; ch < out.d; ++ch) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        for (int xi3 = 0; xi3 < in.d; ++xi3) {
          for (int xi2 = 0; xi2 < kh; ++xi2) {
            const int lh = spec.stride.h * y + xi2 - spec.padding.h;
            if (lh < 0 || lh >= in.h) continue;
            for (int xi1 = 0; xi1 < kw; ++xi1) {
              const int lw = spec.stride.w * x + xi1 - spec.padding.w;
              if (lw < 0 || lw >= in.w) continue;
              m.a.items.push_back(xi1 + kw * (xi2 + kh * xi3));
              m.s.items.push_back(lw + in.w * (lh + in.h * xi3));
            }
          }
        }
        m.s.close_set();
        m.a.close_set();
        m.c.push_back(ch);
      }
    }
  }
  return m;
}

BackwardMaps build_backward_maps(const LayerSpec& spec, const LayerShape& shape) {
  require_materializable(shape, shape.eps_bwd);
  BackwardMaps m;
  m.j.items.reserve(static_cast<std::size_t>(shape.eps_bwd));
  m.h.items.reserve(static_cast<std::size_t>(shape.eps_bwd));
  m.c_tilde.reserve(static_cast<std::size_t>(shape.M_prev));

  if (spec.kind == LayerKind::FullyConnected) {
    for (long long i = 0; i < shape.M_prev; ++i) {
      for (long long k = 0; k < shape.M_prime; ++k) {
        m.j.items.push_back(static_cast<std::int32_t>(k));
        m.h.items.push_back(static_cast<std::int32_t>(k));
      }
      m.j.close_set();
      m.h.close_set();
      m.c_tilde.push_back(static_cast<std::int32_t>(i));
    }
    return m;
  }

  const Shape3 in = shape.in;
  const Shape3 out = shape.conv_out;
  const int kw = spec.kernel.w, kh = spec.kernel.h;
  for (int n = 0; n < in.d; ++n) {
    for (int l2 = 0; l2 < in.h; ++l2) {
      for (int l1 = 0; l1 < in.w; ++l1) {
        for (int k = 0; k < out.d; ++k) {
          for (int j2 = 0; j2 < out.h; ++j2) {
            const int zeta2 = l2 + spec.padding.h - spec.stride.h * j2;
            if (zeta2 < 0 || zeta2 >= kh) continue;
            for (int j1 = 0; j1 < out.w; ++j1) {
              const int zeta1 = l1 + spec.padding.w - spec.stride.w * j1;
              if (zeta1 < 0 || zeta1 >= kw) continue;
              m.j.items.push_back(j1 + out.w * (j2 + out.h * k));
              m.h.items.push_back(zeta1 + kw * (zeta2 + kh * k));
            }
          }
        }
        m.j.close_set();
        m.h.close_set();
        m.c_tilde.push_back(n);
      }
    }
  }
  return m;
}

PoolMaps build_pool_maps(const LayerShape& shape) {
  PoolMaps m;
  const Shape3 in = shape.conv_out;
  const Shape3 out = shape.out;
  if (!shape.pool) {
    for (long long i = 0; i < shape.M_prime; ++i) {
      m.t.items.push_back(static_cast<std::int32_t>(i));
      m.t.close_set();
      m.d.items.push_back(static_cast<std::int32_t>(i));
      m.d.close_set();
    }
    return m;
  }

  std::vector<std::vector<std::int32_t>> owners(static_cast<std::size_t>(shape.M_prime));
  for (int ch = 0; ch < out.d; ++ch) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        const std::int32_t pooled = x + out.w * (y + out.h * ch);
        for (int e2 = 0; e2 < shape.pool_size.h; ++e2) {
          const int py = shape.pool_stride.h * y + e2 - shape.pool_padding.h;
          if (py < 0 || py >= in.h) continue;
          for (int e1 = 0; e1 < shape.pool_size.w; ++e1) {
            const int px = shape.pool_stride.w * x + e1 - shape.pool_padding.w;
            if (px < 0 || px >= in.w) continue;
            const std::int32_t unit = px + in.w * (py + in.h * ch);
            m.t.items.push_back(unit);
            owners[static_cast<std::size_t>(unit)].push_back(pooled);
          }
        }
        m.t.close_set();
      }
    }
  }
  for (const auto& o : owners) {
    m.d.items.insert(m.d.items.end(), o.begin(), o.end());
    m.d.close_set();
  }
  return m;
}

LayerMaps build_layer_maps(const LayerSpec& spec, const LayerShape& shape) {
  return {build_forward_maps(spec, shape), build_pool_maps(shape), build_backward_maps(spec, shape)};
}

}  // namespace asv
