#pragma once

#include <memory>
#include <span>

#include "vsd/tensor.hpp"
#include "vsd/warp.hpp"

namespace vsd {

// Per-sample geometry for the tape-level warp: source colors plus the
// transform from the source camera into the target camera.
struct SplatFrame {
  const ImageBuffer* rgb = nullptr;
  CameraIntrinsics intrinsics;
  RigidPose rel;
};

// Warps each sample's source RGB into the target view, driven by a
// tape-resident depth tensor of shape (N, 1, H, W). Returns (N, 3, H, W), or
// (N, 4, H, W) with channel 3 = warped z * depth_channel_scale when
// with_depth_channel is set. Unhit pixels are zero in all channels.
//
// Backward pushes gradients into `depth` through the splat geometry (the
// straight-through z-test of warp_backward); source colors are constants on
// this path. When results_out is given it receives the per-sample
// WarpResults (shared with the recorded op, no copy).
template <typename T>
Tensor<T> splat_to_view(
    const Tensor<T>& depth, std::span<const SplatFrame> frames, SplatMode mode,
    bool with_depth_channel = false, double depth_channel_scale = 1.0,
    std::shared_ptr<std::vector<WarpResult>>* results_out = nullptr);

}  // namespace vsd
