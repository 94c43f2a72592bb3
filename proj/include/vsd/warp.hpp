#pragma once

#include <vector>

#include "vsd/geometry.hpp"

namespace vsd {

enum class SplatMode {
  kBilinear,  // 4-neighbor footprint, differentiable in (u, v)
  kNearest,   // single-pixel footprint, forward-only parity mode
};

// Splats within this distance of the per-pixel minimum z blend together;
// anything farther is occluded and discarded.
inline constexpr double kZBlendTolerance = 1e-3;

// One surviving contribution of a source pixel to a target pixel. Carries the
// projected continuous coordinates, the target-view z, and the derivatives of
// (u, v, z_target) w.r.t. the source depth needed for the backward pass.
struct SplatRecord {
  int target = 0;       // v * width + u in the target raster
  int source = 0;       // v * width + u in the source raster
  double weight = 0.0;  // bilinear (or 1.0 in nearest mode)
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
  double du_dz = 0.0;
  double dv_dz = 0.0;
  double dz_dz = 0.0;
  double color[3] = {0.0, 0.0, 0.0};
};

struct WarpResult {
  ImageBuffer image;            // unhit pixels are exactly (0, 0, 0)
  DepthMap depth;               // blended target-view z; unhit pixels invalid
  std::vector<uint8_t> hit_mask;

  // Populated when recording is enabled: surviving splats grouped per target
  // pixel (CSR layout), plus each target's total weight.
  bool has_records = false;
  std::vector<SplatRecord> records;
  std::vector<int> record_offsets;  // size width*height + 1
  std::vector<double> weight_sum;   // size width*height
  SplatMode mode = SplatMode::kBilinear;
  int width = 0;
  int height = 0;
};

struct WarpGradients {
  std::vector<double> d_depth;  // H*W
  std::vector<double> d_rgb;    // H*W*3
};

// Unprojects every valid source pixel, maps it through rel, and splats color
// and depth into the target raster with a blended z-buffer. With record=false
// the splat records are skipped (forward-only use).
WarpResult forward_warp(const ImageBuffer& rgb1, const DepthMap& depth1,
                        const CameraIntrinsics& k, const RigidPose& rel,
                        SplatMode mode = SplatMode::kBilinear,
                        bool record = true);

// Pushes gradients w.r.t. the warped image (and optionally the warped depth
// raster; pass empty to skip) back to the source depth and color, holding the
// z-test winner sets fixed. grad_image is H*W*3, grad_depth H*W; entries at
// unhit pixels are ignored.
WarpGradients warp_backward(const WarpResult& result,
                            std::span<const double> grad_image,
                            std::span<const double> grad_depth = {});

}  // namespace vsd
