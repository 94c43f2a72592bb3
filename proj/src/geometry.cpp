#include "vsd/geometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace vsd {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ConfigError("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ConfigError("intrinsics: image dimensions must be positive");
  }
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw ConfigError("intrinsics: principal point outside the image");
  }
}

void RigidPose::validate() const {
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
    throw ConfigError("pose: rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
    throw ConfigError("pose: rotation determinant is not +1");
  }
  if (!translation.allFinite()) {
    throw ConfigError("pose: translation is not finite");
  }
}

RigidPose RigidPose::inverse() const {
  RigidPose inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation.transpose() * translation);
  return inv;
}

RigidPose relative_pose(const RigidPose& source, const RigidPose& target) {
  source.validate();
  target.validate();
  RigidPose rel;
  rel.rotation = target.rotation.transpose() * source.rotation;
  rel.translation =
      target.rotation.transpose() * (source.translation - target.translation);
  return rel;
}

DepthMap::DepthMap(int w, int h)
    : width(w),
      height(h),
      values(size_t(w) * h, 0.0),
      valid(size_t(w) * h, 0) {}

DepthMap DepthMap::filled(int w, int h, double z) {
  DepthMap d(w, h);
  std::fill(d.values.begin(), d.values.end(), z);
  std::fill(d.valid.begin(), d.valid.end(), uint8_t(1));
  return d;
}

void DepthMap::set(int x, int y, double z, bool ok) {
  values[size_t(y) * width + x] = z;
  valid[size_t(y) * width + x] = ok ? 1 : 0;
}

long DepthMap::valid_count() const {
  long n = 0;
  for (uint8_t v : valid) n += v;
  return n;
}

void DepthMap::validate() const {
  if (values.size() != size_t(width) * height ||
      valid.size() != size_t(width) * height) {
    throw ConfigError("depth map: buffer sizes do not match dimensions");
  }
  for (size_t i = 0; i < values.size(); ++i) {
    if (valid[i] && !(values[i] > 0.0 && std::isfinite(values[i]))) {
      throw ConfigError("depth map: valid pixel with nonpositive or "
                        "non-finite value");
    }
  }
}

ImageBuffer::ImageBuffer(int w, int h)
    : width(w), height(h), values(size_t(w) * h * 3, 0.0) {}

ImageBuffer ImageBuffer::filled(int w, int h, double r, double g, double b) {
  ImageBuffer img(w, h);
  for (size_t i = 0; i < size_t(w) * h; ++i) {
    img.values[i * 3 + 0] = r;
    img.values[i * 3 + 1] = g;
    img.values[i * 3 + 2] = b;
  }
  return img;
}

void ImageBuffer::validate() const {
  if (values.size() != size_t(width) * height * 3) {
    throw ConfigError("image: buffer size does not match dimensions");
  }
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ConfigError("image: value outside [0, 1]");
    }
  }
}

Eigen::Vector3d unproject_pixel(double u, double v, double z,
                                const CameraIntrinsics& k) {
  return {(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
}

PointCloud unproject(const DepthMap& depth, const ImageBuffer& rgb,
                     const CameraIntrinsics& k) {
  k.validate();
  if (depth.width != k.width || depth.height != k.height ||
      rgb.width != k.width || rgb.height != k.height) {
    throw ConfigError("unproject: depth/rgb dimensions do not match "
                      "intrinsics");
  }
  PointCloud pc;
  pc.points.reserve(depth.values.size());
  pc.colors.reserve(depth.values.size());
  pc.source_index.reserve(depth.values.size());
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      pc.points.push_back(unproject_pixel(x, y, depth.at(x, y), k));
      pc.colors.emplace_back(rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2));
      pc.source_index.push_back(y * depth.width + x);
    }
  }
  return pc;
}

PointCloud transform_points(PointCloud pc, const RigidPose& rel) {
  rel.validate();
  for (auto& p : pc.points) p = rel.apply(p);
  return pc;
}

PixelProjection project_point(const Eigen::Vector3d& p,
                              const CameraIntrinsics& k) {
  PixelProjection out;
  out.z = p.z();
  if (p.z() <= kMinProjectionDepth) return out;
  out.u = k.fx * p.x() / p.z() + k.cx;
  out.v = k.fy * p.y() / p.z() + k.cy;
  out.projectable = true;
  return out;
}

CameraIntrinsics load_intrinsics(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw IngestionError("cannot open intrinsics file: " + file.string());
  }
  CameraIntrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
    throw IngestionError("malformed intrinsics file: " + file.string());
  }
  try {
    k.validate();
  } catch (const ConfigError& e) {
    throw IngestionError(std::string(e.what()) + " in " + file.string());
  }
  return k;
}

void save_intrinsics(const CameraIntrinsics& k,
                     const std::filesystem::path& file) {
  k.validate();
  std::ofstream out(file);
  if (!out) {
    throw IngestionError("cannot write intrinsics file: " + file.string());
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %.17g %d %d\n", k.fx,
                k.fy, k.cx, k.cy, k.width, k.height);
  out << buf;
}

RigidPose load_pose(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw IngestionError("cannot open pose file: " + file.string());
  }
  double m[12];
  for (double& x : m) {
    if (!(in >> x)) {
      throw IngestionError("malformed pose file: " + file.string());
    }
  }
  RigidPose pose;
  pose.rotation << m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10];
  pose.translation << m[3], m[7], m[11];
  try {
    pose.validate();
  } catch (const ConfigError& e) {
    throw IngestionError(std::string(e.what()) + " in " + file.string());
  }
  return pose;
}

void save_pose(const RigidPose& pose, const std::filesystem::path& file) {
  pose.validate();
  std::ofstream out(file);
  if (!out) {
    throw IngestionError("cannot write pose file: " + file.string());
  }
  char buf[64];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof(buf), "%.12f ", pose.rotation(r, c));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.12f\n", pose.translation(r));
    out << buf;
  }
}

}  // namespace vsd
