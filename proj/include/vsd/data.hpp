#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "vsd/geometry.hpp"

namespace vsd {

struct SceneSample {
  ImageBuffer rgb1, rgb2;
  DepthMap depth1, depth2;
  RigidPose pose1, pose2;  // camera-to-world
  CameraIntrinsics intrinsics;
  std::string id;

  void validate() const;
};

struct SceneConfig {
  int width = 64;
  int height = 64;
  double focal = 0.0;  // pixels; 0 picks the image width (~53 degree fov)
  double min_depth = 2.0;   // primitive placement range, meters
  double max_depth = 8.0;
  int primitive_count = 4;  // foreground boxes and tilted rectangles
  bool backdrop = true;     // far plane behind the primitives
  double max_rotation_deg = 5.0;
  double max_translation = 0.15;   // meters
  double texture_frequency = 0.4;  // cycles per meter
  uint64_t seed = 0;               // mixed into every per-sample seed

  void validate() const;
  CameraIntrinsics make_intrinsics() const;
};

// Ray-casts an analytic scene from two nearby cameras. Depth is the exact
// ray-primitive intersection; RGB comes from smooth procedural textures.
// RGB is snapped to the 8-bit grid and depth to 32-bit float precision so a
// save/load round-trip reproduces the sample bit for bit.
SceneSample generate_sample(const SceneConfig& cfg, uint64_t seed);

struct DatasetSplits {
  std::vector<SceneSample> train, val, test;
};

// Deterministic 80/10/10 split by sample index.
DatasetSplits generate_dataset(const SceneConfig& cfg, int count,
                               uint64_t seed);

void save_sample(const SceneSample& sample, const std::filesystem::path& dir,
                 bool png_depth = false);
SceneSample load_sample(const std::filesystem::path& dir);

// Layout: <dir>/samples/<id>/..., manifest.txt listing every sample
// directory (one per line, relative), plus train.txt / val.txt / test.txt.
void save_dataset(const DatasetSplits& splits,
                  const std::filesystem::path& dir, bool png_depth = false);
std::vector<SceneSample> load_split(const std::filesystem::path& dir,
                                    const std::string& split);
DatasetSplits load_dataset(const std::filesystem::path& dir);

}  // namespace vsd
