#include "vsd/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "vsd/image_io.hpp"

namespace vsd {

void SceneSample::validate() const {
  intrinsics.validate();
  const int w = intrinsics.width, h = intrinsics.height;
  auto check_dims = [&](int rw, int rh, const char* what) {
    if (rw != w || rh != h) {
      throw ConfigError(std::string("sample ") + id + ": " + what +
                        " dimensions do not match intrinsics");
    }
  };
  check_dims(rgb1.width, rgb1.height, "rgb1");
  check_dims(rgb2.width, rgb2.height, "rgb2");
  check_dims(depth1.width, depth1.height, "depth1");
  check_dims(depth2.width, depth2.height, "depth2");
  rgb1.validate();
  rgb2.validate();
  depth1.validate();
  depth2.validate();
  pose1.validate();
  pose2.validate();
}

void SceneConfig::validate() const {
  if (width <= 0 || height <= 0) {
    throw ConfigError("scene: image dimensions must be positive");
  }
  if (!(min_depth > 0.0) || !(min_depth < max_depth)) {
    throw ConfigError("scene: need 0 < min_depth < max_depth");
  }
  if (primitive_count < 0) {
    throw ConfigError("scene: negative primitive count");
  }
  if (!backdrop && primitive_count == 0) {
    throw ConfigError("scene: no primitives and no backdrop");
  }
  if (max_rotation_deg < 0.0 || max_translation < 0.0) {
    throw ConfigError("scene: negative pose bounds");
  }
  if (texture_frequency < 0.0 || focal < 0.0) {
    throw ConfigError("scene: negative texture frequency or focal");
  }
}

CameraIntrinsics SceneConfig::make_intrinsics() const {
  CameraIntrinsics k;
  k.fx = k.fy = focal > 0.0 ? focal : double(width);
  k.cx = width / 2.0;
  k.cy = height / 2.0;
  k.width = width;
  k.height = height;
  return k;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kNearClip = 0.05;

struct Material {
  Eigen::Vector3d base;
  Eigen::Vector3d dir1, dir2;
  double phase1[3];
  double phase2[3];
};

struct Quad {
  Eigen::Vector3d origin;
  Eigen::Vector3d e1, e2, normal;  // e1, e2 orthonormal in the plane
  double half1 = 0.0, half2 = 0.0;
  int material = 0;
};

struct Box {
  Eigen::Vector3d lo, hi;
  int material = 0;
};

struct Scene {
  std::vector<Quad> quads;
  std::vector<Box> boxes;
  std::vector<Material> materials;
  double texture_frequency = 0.0;
};

Eigen::Vector3d random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::Vector3d v;
  do {
    v = {gauss(rng), gauss(rng), gauss(rng)};
  } while (v.norm() < 1e-6);
  return v.normalized();
}

Material random_material(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> base(0.35, 0.65);
  std::uniform_real_distribution<double> phase(0.0, kTwoPi);
  Material m;
  m.base = {base(rng), base(rng), base(rng)};
  m.dir1 = random_unit(rng);
  m.dir2 = random_unit(rng);
  for (int c = 0; c < 3; ++c) {
    m.phase1[c] = phase(rng);
    m.phase2[c] = phase(rng);
  }
  return m;
}

// Two shifted sine fields along fixed world directions; amplitudes keep the
// color inside [0.05, 0.95] without clamping, so the texture stays smooth.
Eigen::Vector3d material_color(const Material& m, double freq,
                               const Eigen::Vector3d& p) {
  Eigen::Vector3d c;
  const double s1 = kTwoPi * freq * m.dir1.dot(p);
  const double s2 = kTwoPi * freq * m.dir2.dot(p);
  for (int ch = 0; ch < 3; ++ch) {
    c[ch] = m.base[ch] + 0.15 * std::sin(s1 + m.phase1[ch]) +
            0.15 * std::sin(s2 + m.phase2[ch]);
  }
  return c;
}

// Frame (e1, e2) spanning the plane orthogonal to n.
void plane_frame(const Eigen::Vector3d& n, Eigen::Vector3d* e1,
                 Eigen::Vector3d* e2) {
  const Eigen::Vector3d ref =
      std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  *e1 = n.cross(ref).normalized();
  *e2 = n.cross(*e1).normalized();
}

// Unit vector near -z, tilted away from it by up to max_tilt_rad.
Eigen::Vector3d tilted_normal(std::mt19937_64& rng, double max_tilt_rad) {
  std::uniform_real_distribution<double> tilt(0.0, max_tilt_rad);
  std::uniform_real_distribution<double> azim(0.0, kTwoPi);
  const double a = tilt(rng), b = azim(rng);
  return {std::sin(a) * std::cos(b), std::sin(a) * std::sin(b), -std::cos(a)};
}

Scene build_scene(const SceneConfig& cfg, std::mt19937_64& rng) {
  Scene scene;
  scene.texture_frequency = cfg.texture_frequency;
  const double range = cfg.max_depth - cfg.min_depth;
  const CameraIntrinsics k = cfg.make_intrinsics();

  if (cfg.backdrop) {
    Quad back;
    // The backdrop is exactly fronto-parallel so that an otherwise empty
    // scene has the constant depth cfg.max_depth in the reference view.
    back.normal = {0.0, 0.0, -1.0};
    back.origin = {0.0, 0.0, cfg.max_depth};
    plane_frame(back.normal, &back.e1, &back.e2);
    back.half1 = back.half2 = 1e4;  // effectively unbounded
    back.material = int(scene.materials.size());
    scene.materials.push_back(random_material(rng));
    scene.quads.push_back(back);
  }

  std::uniform_real_distribution<double> zpos(cfg.min_depth + 0.2 * range,
                                              cfg.min_depth + 0.7 * range);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> extent(0.3, 0.9);
  for (int i = 0; i < cfg.primitive_count; ++i) {
    const double z = zpos(rng);
    const double hw = 0.7 * z * (k.width / 2.0) / k.fx;
    const double hh = 0.7 * z * (k.height / 2.0) / k.fy;
    const Eigen::Vector3d center{(2.0 * unit(rng) - 1.0) * hw,
                                 (2.0 * unit(rng) - 1.0) * hh, z};
    const int material = int(scene.materials.size());
    scene.materials.push_back(random_material(rng));
    if (unit(rng) < 0.5) {
      const Eigen::Vector3d half{extent(rng) / 2.0, extent(rng) / 2.0,
                                 extent(rng) / 2.0};
      scene.boxes.push_back({center - half, center + half, material});
    } else {
      Quad q;
      q.normal = tilted_normal(rng, 30.0 * std::numbers::pi / 180.0);
      q.origin = center;
      plane_frame(q.normal, &q.e1, &q.e2);
      q.half1 = extent(rng);
      q.half2 = extent(rng);
      q.material = material;
      scene.quads.push_back(q);
    }
  }
  return scene;
}

// Returns the ray parameter of the nearest hit, or +inf. Directions carry
// z = 1 in camera coordinates, so the parameter is the camera-space depth.
double cast_ray(const Scene& scene, const Eigen::Vector3d& o,
                const Eigen::Vector3d& d, int* material) {
  double best = std::numeric_limits<double>::infinity();
  for (const Quad& q : scene.quads) {
    const double denom = d.dot(q.normal);
    if (std::abs(denom) < 1e-12) continue;
    const double tau = (q.origin - o).dot(q.normal) / denom;
    if (tau < kNearClip || tau >= best) continue;
    const Eigen::Vector3d p = o + tau * d - q.origin;
    if (std::abs(p.dot(q.e1)) > q.half1 || std::abs(p.dot(q.e2)) > q.half2) {
      continue;
    }
    best = tau;
    *material = q.material;
  }
  for (const Box& b : scene.boxes) {
    double tnear = -std::numeric_limits<double>::infinity();
    double tfar = std::numeric_limits<double>::infinity();
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (std::abs(d[a]) < 1e-15) {
        miss = o[a] < b.lo[a] || o[a] > b.hi[a];
        continue;
      }
      double t1 = (b.lo[a] - o[a]) / d[a];
      double t2 = (b.hi[a] - o[a]) / d[a];
      if (t1 > t2) std::swap(t1, t2);
      tnear = std::max(tnear, t1);
      tfar = std::min(tfar, t2);
      miss = tnear > tfar;
    }
    if (miss || tnear < kNearClip || tnear >= best) continue;
    best = tnear;
    *material = b.material;
  }
  return best;
}

void render_view(const Scene& scene, const CameraIntrinsics& k,
                 const RigidPose& pose, ImageBuffer* rgb, DepthMap* depth) {
  *rgb = ImageBuffer(k.width, k.height);
  *depth = DepthMap(k.width, k.height);
  const Eigen::Vector3d o = pose.translation;
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const Eigen::Vector3d dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d d = pose.rotation * dir_cam;
      int material = -1;
      const double tau = cast_ray(scene, o, d, &material);
      if (!std::isfinite(tau)) continue;  // invalid pixel, black
      depth->set(x, y, double(float(tau)), true);  // snap to f32 precision
      const Eigen::Vector3d c = material_color(
          scene.materials[material], scene.texture_frequency, o + tau * d);
      for (int ch = 0; ch < 3; ++ch) {
        const double q = std::round(std::clamp(c[ch], 0.0, 1.0) * 255.0);
        rgb->at(x, y, ch) = q / 255.0;  // snap to the 8-bit grid
      }
    }
  }
}

uint64_t mix_seed(uint64_t base, uint64_t salt) {
  uint64_t x = base ^ (salt + 0x9e3779b97f4a7c15ULL + (base << 6));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

}  // namespace

SceneSample generate_sample(const SceneConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(mix_seed(cfg.seed, seed));
  const Scene scene = build_scene(cfg, rng);

  SceneSample sample;
  sample.intrinsics = cfg.make_intrinsics();
  sample.pose1 = RigidPose{};
  std::uniform_real_distribution<double> angle(
      0.0, cfg.max_rotation_deg * std::numbers::pi / 180.0);
  std::uniform_real_distribution<double> shift(-cfg.max_translation,
                                               cfg.max_translation);
  const Eigen::Vector3d axis = random_unit(rng);
  sample.pose2.rotation =
      Eigen::AngleAxisd(angle(rng), axis).toRotationMatrix();
  sample.pose2.translation = {shift(rng), shift(rng), shift(rng)};

  render_view(scene, sample.intrinsics, sample.pose1, &sample.rgb1,
              &sample.depth1);
  render_view(scene, sample.intrinsics, sample.pose2, &sample.rgb2,
              &sample.depth2);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sample_%06llu",
                static_cast<unsigned long long>(seed));
  sample.id = buf;
  return sample;
}

DatasetSplits generate_dataset(const SceneConfig& cfg, int count,
                               uint64_t seed) {
  cfg.validate();
  if (count < 3) {
    throw ConfigError("dataset: need at least 3 samples to split");
  }
  SceneConfig mixed = cfg;
  mixed.seed = mix_seed(cfg.seed, seed);
  const int n_train = count * 8 / 10;
  const int n_val = count / 10;
  DatasetSplits splits;
  for (int i = 0; i < count; ++i) {
    SceneSample s = generate_sample(mixed, uint64_t(i));
    if (i < n_train) {
      splits.train.push_back(std::move(s));
    } else if (i < n_train + n_val) {
      splits.val.push_back(std::move(s));
    } else {
      splits.test.push_back(std::move(s));
    }
  }
  return splits;
}

void save_sample(const SceneSample& sample, const std::filesystem::path& dir,
                 bool png_depth) {
  sample.validate();
  std::filesystem::create_directories(dir);
  write_ppm(sample.rgb1, dir / "rgb1.ppm");
  write_ppm(sample.rgb2, dir / "rgb2.ppm");
  if (png_depth) {
    write_depth_png16(sample.depth1, dir / "depth1.png");
    write_depth_png16(sample.depth2, dir / "depth2.png");
  } else {
    write_pfm(sample.depth1, dir / "depth1.pfm");
    write_pfm(sample.depth2, dir / "depth2.pfm");
  }
  save_intrinsics(sample.intrinsics, dir / "intrinsics.txt");
  save_pose(sample.pose1, dir / "pose1.txt");
  save_pose(sample.pose2, dir / "pose2.txt");
}

SceneSample load_sample(const std::filesystem::path& dir) {
  SceneSample sample;
  auto load_depth = [&](const char* stem) {
    const auto pfm = dir / (std::string(stem) + ".pfm");
    if (std::filesystem::exists(pfm)) return read_pfm(pfm);
    const auto png = dir / (std::string(stem) + ".png");
    if (std::filesystem::exists(png)) return read_depth_png16(png);
    throw IngestionError("missing depth file " + pfm.string() + " (or .png)");
  };
  sample.rgb1 = read_ppm(dir / "rgb1.ppm");
  sample.rgb2 = read_ppm(dir / "rgb2.ppm");
  sample.depth1 = load_depth("depth1");
  sample.depth2 = load_depth("depth2");
  sample.intrinsics = load_intrinsics(dir / "intrinsics.txt");
  sample.pose1 = load_pose(dir / "pose1.txt");
  sample.pose2 = load_pose(dir / "pose2.txt");
  auto normalized = dir.lexically_normal();
  if (normalized.filename().empty()) normalized = normalized.parent_path();
  sample.id = normalized.filename().string();
  try {
    sample.validate();
  } catch (const ConfigError& e) {
    throw IngestionError(std::string(e.what()) + " under " + dir.string());
  }
  return sample;
}

namespace {

void write_manifest(const std::filesystem::path& file,
                    const std::vector<std::string>& lines) {
  std::ofstream out(file);
  if (!out) throw IngestionError("cannot write " + file.string());
  for (const auto& line : lines) out << line << "\n";
}

}  // namespace

void save_dataset(const DatasetSplits& splits,
                  const std::filesystem::path& dir, bool png_depth) {
  std::filesystem::create_directories(dir / "samples");
  std::vector<std::string> manifest;
  auto save_split = [&](const std::vector<SceneSample>& split,
                        const char* name) {
    std::vector<std::string> lines;
    for (const SceneSample& s : split) {
      const std::string rel = "samples/" + s.id;
      save_sample(s, dir / rel, png_depth);
      lines.push_back(rel);
      manifest.push_back(rel);
    }
    write_manifest(dir / (std::string(name) + ".txt"), lines);
  };
  save_split(splits.train, "train");
  save_split(splits.val, "val");
  save_split(splits.test, "test");
  write_manifest(dir / "manifest.txt", manifest);
}

std::vector<SceneSample> load_split(const std::filesystem::path& dir,
                                    const std::string& split) {
  const auto file = dir / (split + ".txt");
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open split list " + file.string());
  std::vector<SceneSample> samples;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    samples.push_back(load_sample(dir / line));
  }
  return samples;
}

DatasetSplits load_dataset(const std::filesystem::path& dir) {
  DatasetSplits splits;
  splits.train = load_split(dir, "train");
  splits.val = load_split(dir, "val");
  splits.test = load_split(dir, "test");
  return splits;
}

}  // namespace vsd
