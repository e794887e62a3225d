#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "asv/error.hpp"

namespace asv {

struct Extent2 {
  int w = 1;
  int h = 1;
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

struct Shape3 {
  int w = 1;
  int h = 1;
  int d = 1;
  long long size() const { return 1LL * w * h * d; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

enum class LayerKind { Conv, FullyConnected };
enum class Activation { ReLU, Identity };
enum class PoolKind { Max, Average, GlobalAverage };

struct PoolSpec {
  PoolKind kind = PoolKind::Max;
  Extent2 size{1, 1};  // unused for GlobalAverage
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};
  // Window cardinality used by the variance constants. Defaults to size.w*size.h
  // (or the full map for GlobalAverage) when absent.
  std::optional<int> window;
  friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

/// One Conv+Pool layer: convolution (or affine map), activation, optional pooling.
struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  Extent2 kernel{1, 1};
  Extent2 stride{1, 1};
  Extent2 padding{0, 0};
  int out_channels = 1;
  Activation activation = Activation::ReLU;
  std::optional<PoolSpec> pool;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Architecture {
  std::string name;
  Shape3 input;
  std::vector<LayerSpec> layers;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Parses an architecture file (JSON) and validates it. Throws SchemaError for
/// malformed or unknown fields and ValidationError for invariant violations.
Architecture parse_architecture(std::string_view text);
Architecture load_architecture(const std::string& path);

/// Canonical JSON with every default spelled out.
std::string serialize_architecture(const Architecture& arch);

/// Checks the layer invariants and that shape inference succeeds.
void validate(const Architecture& arch);

/// "arch34" or "arch50"; throws UnknownName otherwise.
Architecture builtin(std::string_view name);

std::string_view to_string(LayerKind k);
std::string_view to_string(Activation a);
std::string_view to_string(PoolKind p);

}  // namespace asv
