#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "asv/shapes.hpp"
#include "asv/variance.hpp"

namespace asv {

/// Shapes plus fully materialized index maps. Immutable and shareable.
struct Topology {
  Architecture arch;
  ShapeReport shapes;
  std::vector<LayerMaps> maps;
  // Conv outputs of channel c occupy [channel_begin[l][c], channel_begin[l][c+1]).
  std::vector<std::vector<std::int64_t>> channel_begin;

  static std::shared_ptr<const Topology> build(const Architecture& arch);
};

struct LayerParams {
  std::vector<double> W;        // C x S, row-major (row c is w_c)
  std::vector<double> b;        // C
  std::vector<double> W_tilde;  // C~ x J, a re-indexing of W
};

/// Backward kernel from the forward one: W~_{n,z1,z2,k} = W_{k,z1,z2,n} for conv
/// layers, the transpose for fully connected ones.
std::vector<double> backward_kernel(const LayerSpec& spec, const LayerShape& shape, std::span<const double> W);

struct VectorNet {
  std::shared_ptr<const Topology> topo;
  std::vector<LayerParams> params;

  /// Recompute every W~ after W was edited in place.
  void refresh_backward_kernels();
};

/// Draws W ~ N(0, sigma_w^2) and b ~ N(0, sigma_b^2) layer by layer from one
/// 64-bit Mersenne Twister seeded with `seed`. sigma_b = 0 yields exact zeros.
VectorNet sample_parameters(std::shared_ptr<const Topology> topo, const InitPlan& plan, std::uint64_t seed);

struct LayerSignals {
  std::vector<double> u, v, z;
  std::vector<std::int32_t> winner;  // max pooling: argmax unit per pooled output
  std::vector<double> du, dv, dz;    // dz is dE/dz^(l); for the last layer it equals du
  std::vector<double> grad_W, grad_b;
};

struct SignalTrace {
  std::vector<double> input;   // z^(0)
  std::vector<double> dinput;  // dE/dz^(0)
  std::vector<LayerSignals> layers;
  bool has_backward = false;
};

enum class Exec { Serial, Parallel };

/// Forward signals u, v, z for every layer.
SignalTrace forward(const VectorNet& net, std::span<const double> z0, Exec exec = Exec::Parallel);

/// Fills the backward fields of `trace` starting from dE/du^(L) = delta_uL.
/// Max-pool gradients go to the lowest-index maximal unit; ReLU'(0) = 1.
void backward(const VectorNet& net, SignalTrace& trace, std::span<const double> delta_uL,
              Exec exec = Exec::Parallel);

/// Plain nested-loop tensor implementation of convolution, activation and
/// pooling, kept as a serial reference for the vectorized engine.
namespace naive {

struct Trace {
  std::vector<std::vector<double>> u, v, z;
};

Trace forward(const Architecture& arch, const std::vector<LayerParams>& params, std::span<const double> z0);

}  // namespace naive

}  // namespace asv
