#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vsd/tensor.hpp"

namespace vsd {

enum class OutputHead { kDepth, kRgb };

// Depth-head floor in meters: keeps predictions strictly positive even when
// the sigmoid underflows to exactly 0 in 32-bit.
inline constexpr double kDepthFloor = 1e-4;

struct UNetConfig {
  int levels = 3;          // skip-connected encoder stages
  int base_channels = 8;   // channels at stage 1, doubling per stage
  int channel_cap = 1024;
  int in_channels = 3;
  int out_channels = 1;
  OutputHead head = OutputHead::kDepth;
  double max_depth = 10.0;  // depth head only

  void validate() const;
  int stage_channels(int stage) const;  // stage in [1, levels]
  int bottleneck_channels() const;

  static UNetConfig reference_square_depth();  // 256x256 inputs
  static UNetConfig reference_wide_depth();    // 256x768 inputs
  static UNetConfig desk_depth(double max_depth = 10.0);
  static UNetConfig desk_rgb(int in_channels = 3);
};

struct StageShape {
  int channels = 0;
  int height = 0;
  int width = 0;
};

// Activation sizes computed symbolically (no allocation): encoder stage i
// sits at (H/2^i, W/2^i), the bottleneck one halving below the last stage.
struct ShapeSchedule {
  std::vector<StageShape> encoder;
  StageShape bottleneck;
  StageShape output;
};

ShapeSchedule shape_schedule(const UNetConfig& cfg, int h, int w);

long unet_parameter_count(const UNetConfig& cfg);

template <typename T>
struct Parameter {
  std::string name;
  Shape shape;
  std::vector<T> values;
};

// Owns the trainable state of one U-Net. Parameters are stored in forward
// consumption order; forward_count lets tests assert a net went unused.
template <typename T>
struct Network {
  UNetConfig config;
  std::vector<Parameter<T>> params;
  mutable long forward_count = 0;

  long value_count() const;
};

template <typename T>
Network<T> build_unet(const UNetConfig& cfg, uint64_t seed);

// Parameters leased onto a tape as leaves, one per parameter. Binding once
// and running the net twice shares the leaves (weight sharing).
template <typename T>
struct BoundNet {
  const Network<T>* net = nullptr;
  std::vector<Tensor<T>> leaves;
};

template <typename T>
BoundNet<T> bind(Tape<T>& tape, const Network<T>& net);

template <typename T>
Tensor<T> unet_forward(const BoundNet<T>& bound, const Tensor<T>& input);

// Head-checked entry points for the two roles.
template <typename T>
Tensor<T> depnet_forward(const BoundNet<T>& bound, const Tensor<T>& rgb);

template <typename T>
Tensor<T> synnet_forward(const BoundNet<T>& bound, const Tensor<T>& warped);

}  // namespace vsd
