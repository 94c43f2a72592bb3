#include "vsd/warp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace vsd {

namespace {

// Double rounding can leave a projection a few ulps off the integer grid,
// splitting what is geometrically a single-pixel splat into a w~1 splat plus
// a stray w~1e-16 neighbor. Snapping keeps identity-like warps exact.
double snap_to_grid(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < 1e-9 ? r : x;
}

}  // namespace

WarpResult forward_warp(const ImageBuffer& rgb1, const DepthMap& depth1,
                        const CameraIntrinsics& k, const RigidPose& rel,
                        SplatMode mode, bool record) {
  k.validate();
  rel.validate();
  if (rgb1.width != k.width || rgb1.height != k.height ||
      depth1.width != k.width || depth1.height != k.height) {
    throw ConfigError("forward_warp: raster dimensions do not match "
                      "intrinsics");
  }
  depth1.validate();

  const int w = k.width, h = k.height;
  const size_t npix = size_t(w) * h;
  const Eigen::Matrix3d& rot = rel.rotation;
  const Eigen::Vector3d& t = rel.translation;

  std::vector<SplatRecord> cand;
  cand.reserve((mode == SplatMode::kBilinear ? 4 : 1) * npix);
  std::vector<double> minz(npix, std::numeric_limits<double>::infinity());

  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      if (!depth1.is_valid(sx, sy)) continue;
      const double z = depth1.at(sx, sy);
      const Eigen::Vector3d dir((sx - k.cx) / k.fx, (sy - k.cy) / k.fy, 1.0);
      const Eigen::Vector3d r = rot * dir;
      const Eigen::Vector3d q = z * r + t;
      if (q.z() <= kMinProjectionDepth) continue;

      SplatRecord rec;
      rec.source = sy * w + sx;
      rec.u = snap_to_grid(k.fx * q.x() / q.z() + k.cx);
      rec.v = snap_to_grid(k.fy * q.y() / q.z() + k.cy);
      rec.z = q.z();
      // u = fx*(z*r.x + t.x)/(z*r.z + t.z) + cx, so du/dz has the constant
      // numerator fx*(r.x*t.z - r.z*t.x); likewise for v.
      const double inv_z2 = 1.0 / (q.z() * q.z());
      rec.du_dz = k.fx * (r.x() * t.z() - r.z() * t.x()) * inv_z2;
      rec.dv_dz = k.fy * (r.y() * t.z() - r.z() * t.y()) * inv_z2;
      rec.dz_dz = r.z();
      for (int c = 0; c < 3; ++c) rec.color[c] = rgb1.at(sx, sy, c);

      if (mode == SplatMode::kBilinear) {
        const double u0 = std::floor(rec.u), v0 = std::floor(rec.v);
        const double fu = rec.u - u0, fv = rec.v - v0;
        for (int j = 0; j < 2; ++j) {
          const int ty = int(v0) + j;
          if (ty < 0 || ty >= h) continue;
          const double wv = j ? fv : 1.0 - fv;
          for (int i = 0; i < 2; ++i) {
            const int tx = int(u0) + i;
            if (tx < 0 || tx >= w) continue;
            const double wu = i ? fu : 1.0 - fu;
            const double weight = wu * wv;
            if (weight <= 0.0) continue;
            rec.target = ty * w + tx;
            rec.weight = weight;
            minz[rec.target] = std::min(minz[rec.target], rec.z);
            cand.push_back(rec);
          }
        }
      } else {
        const int tx = int(std::lround(rec.u));
        const int ty = int(std::lround(rec.v));
        if (tx < 0 || tx >= w || ty < 0 || ty >= h) continue;
        rec.target = ty * w + tx;
        rec.weight = 1.0;
        minz[rec.target] = std::min(minz[rec.target], rec.z);
        cand.push_back(rec);
      }
    }
  }

  // Group survivors of the z-test by target pixel (counting sort keeps the
  // deterministic source-scan order within each pixel).
  std::vector<int> offsets(npix + 1, 0);
  for (const SplatRecord& rec : cand) {
    if (rec.z <= minz[rec.target] + kZBlendTolerance) {
      offsets[rec.target + 1] += 1;
    }
  }
  for (size_t i = 0; i < npix; ++i) offsets[i + 1] += offsets[i];
  std::vector<SplatRecord> records(offsets[npix]);
  std::vector<int> cursor(offsets.begin(), offsets.end() - 1);
  for (const SplatRecord& rec : cand) {
    if (rec.z <= minz[rec.target] + kZBlendTolerance) {
      records[cursor[rec.target]++] = rec;
    }
  }

  WarpResult out;
  out.width = w;
  out.height = h;
  out.mode = mode;
  out.image = ImageBuffer(w, h);
  out.depth = DepthMap(w, h);
  out.hit_mask.assign(npix, 0);
  out.weight_sum.assign(npix, 0.0);
  for (size_t tgt = 0; tgt < npix; ++tgt) {
    double wsum = 0.0, zacc = 0.0;
    double cacc[3] = {0.0, 0.0, 0.0};
    for (int idx = offsets[tgt]; idx < offsets[tgt + 1]; ++idx) {
      const SplatRecord& rec = records[idx];
      wsum += rec.weight;
      zacc += rec.weight * rec.z;
      for (int c = 0; c < 3; ++c) cacc[c] += rec.weight * rec.color[c];
    }
    out.weight_sum[tgt] = wsum;
    if (wsum > 0.0) {
      out.hit_mask[tgt] = 1;
      out.depth.values[tgt] = zacc / wsum;
      out.depth.valid[tgt] = 1;
      for (int c = 0; c < 3; ++c) out.image.values[tgt * 3 + c] = cacc[c] / wsum;
    }
  }
  if (record) {
    out.has_records = true;
    out.records = std::move(records);
    out.record_offsets = std::move(offsets);
  }
  return out;
}

WarpGradients warp_backward(const WarpResult& result,
                            std::span<const double> grad_image,
                            std::span<const double> grad_depth) {
  if (!result.has_records) {
    throw ContractError("warp_backward: result was produced without records");
  }
  const size_t npix = size_t(result.width) * result.height;
  if (grad_image.size() != npix * 3) {
    throw ContractError("warp_backward: grad_image size mismatch");
  }
  if (!grad_depth.empty() && grad_depth.size() != npix) {
    throw ContractError("warp_backward: grad_depth size mismatch");
  }

  WarpGradients out;
  out.d_depth.assign(npix, 0.0);
  out.d_rgb.assign(npix * 3, 0.0);

  for (size_t tgt = 0; tgt < npix; ++tgt) {
    const double wsum = result.weight_sum[tgt];
    if (wsum <= 0.0) continue;
    const double inv_w = 1.0 / wsum;
    const double* gi = grad_image.data() + tgt * 3;
    const double gd = grad_depth.empty() ? 0.0 : grad_depth[tgt];
    const double* img = result.image.values.data() + tgt * 3;
    const double dep = result.depth.values[tgt];

    for (int idx = result.record_offsets[tgt];
         idx < result.record_offsets[tgt + 1]; ++idx) {
      const SplatRecord& rec = result.records[idx];

      // Color path: image[t] = sum_i w_i c_i / W.
      for (int c = 0; c < 3; ++c) {
        out.d_rgb[size_t(rec.source) * 3 + c] += gi[c] * rec.weight * inv_w;
      }

      // Weight path: d image[t] / d w_i = (c_i - image[t]) / W and
      // d depth[t] / d w_i = (z_i - depth[t]) / W under the fixed winner set.
      double dl_dw = 0.0;
      for (int c = 0; c < 3; ++c) {
        dl_dw += gi[c] * (rec.color[c] - img[c]) * inv_w;
      }
      if (gd != 0.0) {
        dl_dw += gd * (rec.z - dep) * inv_w;
      }

      double dw_dz = 0.0;
      if (result.mode == SplatMode::kBilinear && dl_dw != 0.0) {
        const double u0 = std::floor(rec.u), v0 = std::floor(rec.v);
        const double fu = rec.u - u0, fv = rec.v - v0;
        const int tx = rec.target % result.width;
        const int ty = rec.target / result.width;
        const int i = tx - int(u0);  // which corner of the footprint, 0 or 1
        const int j = ty - int(v0);
        const double wu = i ? fu : 1.0 - fu;
        const double wv = j ? fv : 1.0 - fv;
        const double dw_du = (i ? 1.0 : -1.0) * wv;
        const double dw_dv = wu * (j ? 1.0 : -1.0);
        dw_dz = dw_du * rec.du_dz + dw_dv * rec.dv_dz;
      }

      double acc = dl_dw * dw_dz;
      if (gd != 0.0) {
        acc += gd * rec.weight * inv_w * rec.dz_dz;  // direct z_target path
      }
      out.d_depth[rec.source] += acc;
    }
  }
  return out;
}

}  // namespace vsd
