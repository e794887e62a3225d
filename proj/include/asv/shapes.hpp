#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asv/arch.hpp"

namespace asv {

// Vectorization bijection between multi-indices and linear positions, first axis
// fastest (0-based on both sides). Throws OutOfBounds.
std::size_t vec_index(std::span<const int> dims, std::span<const int> idx);
std::vector<int> vec_unindex(std::span<const int> dims, std::size_t linear);

/// Everything shape inference knows about one Conv+Pool layer.
struct LayerShape {
  int layer = 0;  // 1-based
  LayerKind kind = LayerKind::Conv;
  Activation activation = Activation::ReLU;
  std::optional<PoolKind> pool;  // GlobalAverage is kept as its own tag

  Shape3 in;        // z^(l-1) as a tensor
  Shape3 conv_out;  // u^(l), v^(l)
  Shape3 out;       // z^(l)

  Extent2 pool_size{1, 1};  // resolved window (GlobalAverage -> full map)
  Extent2 pool_stride{1, 1};
  Extent2 pool_padding{0, 0};

  long long M_prev = 0;   // |z^(l-1)|
  long long M_prime = 0;  // |u^(l)|
  long long M = 0;        // |z^(l)|
  long long S = 0;        // forward kernel length
  long long J = 0;        // backward kernel length
  long long C = 0;        // forward kernels
  long long C_tilde = 0;  // backward kernels
  int T = 1;              // window cardinality used by the variance constants

  long long eps_fwd = 0;
  long long eps_bwd = 0;
  long long params = 0;  // C*S weights + C biases

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

struct ShapeReport {
  std::string arch_name;
  Shape3 input;
  std::vector<LayerShape> layers;

  long long total_params() const;
  friend bool operator==(const ShapeReport&, const ShapeReport&) = default;
};

ShapeReport infer_shapes(const Architecture& arch);

struct ConnectionCount {
  long long fwd = 0;  // sum over conv outputs of |s(l,i)|
  long long bwd = 0;  // sum over layer inputs of |j(l,i)|
  friend bool operator==(const ConnectionCount&, const ConnectionCount&) = default;
};

/// Closed-form border census; no index sets are materialized.
ConnectionCount connection_count(const LayerSpec& spec, Shape3 in);
std::vector<ConnectionCount> connection_counts(const Architecture& arch);

/// Compressed list of index sets: set i is items[offsets[i] .. offsets[i+1]).
struct IndexSets {
  std::vector<std::int64_t> offsets{0};
  std::vector<std::int32_t> items;

  std::size_t count() const { return offsets.size() - 1; }
  std::span<const std::int32_t> operator[](std::size_t i) const {
    return {items.data() + offsets[i], static_cast<std::size_t>(offsets[i + 1] - offsets[i])};
  }
  std::int64_t total() const { return offsets.back(); }
  void close_set() { offsets.push_back(static_cast<std::int64_t>(items.size())); }
};

/// s, a, c for every conv output unit; s[i][k] pairs with a[i][k].
struct ForwardMaps {
  IndexSets s;
  IndexSets a;
  std::vector<std::int32_t> c;
};

/// t for every pooled unit and, inversely, d for every pre-pool unit. d holds
/// exactly one entry for exclusive partitions, none for units a floor-truncated
/// grid never visits, and several when windows overlap.
struct PoolMaps {
  IndexSets t;
  IndexSets d;
};

/// j, h, c~ for every layer input unit; j[i][k] pairs with h[i][k].
struct BackwardMaps {
  IndexSets j;
  IndexSets h;
  std::vector<std::int32_t> c_tilde;
};

struct LayerMaps {
  ForwardMaps fwd;
  PoolMaps pool;
  BackwardMaps bwd;
};

ForwardMaps build_forward_maps(const LayerSpec& spec, const LayerShape& shape);
BackwardMaps build_backward_maps(const LayerSpec& spec, const LayerShape& shape);
PoolMaps build_pool_maps(const LayerShape& shape);
LayerMaps build_layer_maps(const LayerSpec& spec, const LayerShape& shape);

}  // namespace asv
