// Serial tensor-loop reference: explicit zero-padded input, explicit nested sums.
#include <algorithm>
#include <limits>

#include "asv/refnet.hpp"

namespace asv::naive {

namespace {

struct Tensor3 {
  int w = 0, h = 0, d = 0;
  std::vector<double> data;

  Tensor3(int w_, int h_, int d_) : w(w_), h(h_), d(d_), data(static_cast<std::size_t>(w_) * h_ * d_, 0.0) {}
  double& at(int x, int y, int c) { return data[static_cast<std::size_t>(x + w * (y + h * c))]; }
  double at(int x, int y, int c) const { return data[static_cast<std::size_t>(x + w * (y + h * c))]; }
};

Tensor3 pad(const Tensor3& z, int pw, int ph) {
  Tensor3 p(z.w + 2 * pw, z.h + 2 * ph, z.d);
  for (int c = 0; c < z.d; ++c)
    for (int y = 0; y < z.h; ++y)
      for (int x = 0; x < z.w; ++x) p.at(x + pw, y + ph, c) = z.at(x, y, c);
  return p;
}

Tensor3 convolve(const LayerSpec& spec, const LayerParams& prm, const Tensor3& z) {
  const int kw = spec.kernel.w, kh = spec.kernel.h;
  const Tensor3 P = pad(z, spec.padding.w, spec.padding.h);
  const int w_out = (z.w + 2 * spec.padding.w - kw) / spec.stride.w + 1;
  const int h_out = (z.h + 2 * spec.padding.h - kh) / spec.stride.h + 1;
  const int S = kw * kh * z.d;
  Tensor3 U(w_out, h_out, spec.out_channels);
  for (int k = 0; k < spec.out_channels; ++k) {
    for (int j = 0; j < h_out; ++j) {
      for (int i = 0; i < w_out; ++i) {
        double acc = prm.b[static_cast<std::size_t>(k)];
        for (int x3 = 0; x3 < z.d; ++x3)
          for (int x2 = 0; x2 < kh; ++x2)
            for (int x1 = 0; x1 < kw; ++x1)
              acc += prm.W[static_cast<std::size_t>(k * S + x1 + kw * (x2 + kh * x3))] *
                     P.at(spec.stride.w * i + x1, spec.stride.h * j + x2, x3);
        U.at(i, j, k) = acc;
      }
    }
  }
  return U;
}

Tensor3 fully_connected(const LayerSpec& spec, const LayerParams& prm, const Tensor3& z) {
  const int n_in = z.w * z.h * z.d;
  Tensor3 U(1, 1, spec.out_channels);
  for (int k = 0; k < spec.out_channels; ++k) {
    double acc = prm.b[static_cast<std::size_t>(k)];
    for (int m = 0; m < n_in; ++m) acc += prm.W[static_cast<std::size_t>(k * n_in + m)] * z.data[static_cast<std::size_t>(m)];
    U.at(0, 0, k) = acc;
  }
  return U;
}

Tensor3 pool(const PoolSpec& ps, const Tensor3& v) {
  int tw = ps.size.w, th = ps.size.h, sw = ps.stride.w, sh = ps.stride.h, pw = ps.padding.w, ph = ps.padding.h;
  if (ps.kind == PoolKind::GlobalAverage) {
    tw = sw = v.w;
    th = sh = v.h;
    pw = ph = 0;
  }
  const int w_out = (v.w + 2 * pw - tw) / sw + 1;
  const int h_out = (v.h + 2 * ph - th) / sh + 1;
  Tensor3 Z(w_out, h_out, v.d);
  for (int c = 0; c < v.d; ++c) {
    for (int j = 0; j < h_out; ++j) {
      for (int i = 0; i < w_out; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        double sum = 0.0;
        int count = 0;
        for (int e2 = 0; e2 < th; ++e2) {
          for (int e1 = 0; e1 < tw; ++e1) {
            const int x = sw * i + e1 - pw, y = sh * j + e2 - ph;
            if (x < 0 || x >= v.w || y < 0 || y >= v.h) continue;
            best = std::max(best, v.at(x, y, c));
            sum += v.at(x, y, c);
            ++count;
          }
        }
        Z.at(i, j, c) = ps.kind == PoolKind::Max ? best : sum / count;
      }
    }
  }
  return Z;
}

}  // namespace

Trace forward(const Architecture& arch, const std::vector<LayerParams>& params, std::span<const double> z0) {
  Tensor3 z(arch.input.w, arch.input.h, arch.input.d);
  if (z0.size() != z.data.size()) throw ShapeMismatch("naive forward: input size mismatch");
  std::copy(z0.begin(), z0.end(), z.data.begin());

  Trace tr;
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const LayerSpec& spec = arch.layers[l];
    Tensor3 U = spec.kind == LayerKind::Conv ? convolve(spec, params[l], z) : fully_connected(spec, params[l], z);
    Tensor3 V = U;
    if (spec.activation == Activation::ReLU)
      for (double& x : V.data) x = std::max(x, 0.0);
    Tensor3 Z = spec.pool ? pool(*spec.pool, V) : V;
    tr.u.push_back(U.data);
    tr.v.push_back(V.data);
    tr.z.push_back(Z.data);
    z = std::move(Z);
  }
  return tr;
}

}  // namespace asv::naive
