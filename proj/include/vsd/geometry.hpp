#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <span>
#include <vector>

#include "vsd/errors.hpp"

namespace vsd {

// Points with z at or below this are not projectable (behind or grazing the
// image plane).
inline constexpr double kMinProjectionDepth = 1e-6;

struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
};

// Camera-to-world transform. Applied as p_world = R * p_cam + t.
struct RigidPose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  void validate() const;
  RigidPose inverse() const;
  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }
};

// Transform mapping source-camera coordinates into target-camera coordinates.
RigidPose relative_pose(const RigidPose& source, const RigidPose& target);

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;   // row-major H*W, meters
  std::vector<uint8_t> valid;   // row-major H*W, 0 or 1

  DepthMap() = default;
  DepthMap(int w, int h);
  static DepthMap filled(int w, int h, double z);

  double at(int x, int y) const { return values[size_t(y) * width + x]; }
  double& at(int x, int y) { return values[size_t(y) * width + x]; }
  bool is_valid(int x, int y) const { return valid[size_t(y) * width + x] != 0; }
  void set(int x, int y, double z, bool ok = true);
  long valid_count() const;

  // Every valid entry must be strictly positive and finite.
  void validate() const;
};

struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major H*W*3, channel-last, each in [0,1]

  ImageBuffer() = default;
  ImageBuffer(int w, int h);
  static ImageBuffer filled(int w, int h, double r, double g, double b);

  double at(int x, int y, int c) const {
    return values[(size_t(y) * width + x) * 3 + c];
  }
  double& at(int x, int y, int c) {
    return values[(size_t(y) * width + x) * 3 + c];
  }

  void validate() const;
};

// Sparse cloud produced by unprojection: one entry per valid source pixel.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<Eigen::Vector3d> colors;
  std::vector<int> source_index;  // v * width + u of the originating pixel

  size_t size() const { return points.size(); }
};

Eigen::Vector3d unproject_pixel(double u, double v, double z,
                                const CameraIntrinsics& k);

PointCloud unproject(const DepthMap& depth, const ImageBuffer& rgb,
                     const CameraIntrinsics& k);

// Applies rel to every point; colors and source indices carry over.
PointCloud transform_points(PointCloud pc, const RigidPose& rel);

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
  bool projectable = false;
};

PixelProjection project_point(const Eigen::Vector3d& p,
                              const CameraIntrinsics& k);

// Text formats: intrinsics as one line "fx fy cx cy width height", pose as
// 12 decimals row-major [R | t].
CameraIntrinsics load_intrinsics(const std::filesystem::path& file);
void save_intrinsics(const CameraIntrinsics& k,
                     const std::filesystem::path& file);
RigidPose load_pose(const std::filesystem::path& file);
void save_pose(const RigidPose& pose, const std::filesystem::path& file);

}  // namespace vsd
