#include "vsd/splat_op.hpp"

#include <cmath>

namespace vsd {

template <typename T>
Tensor<T> splat_to_view(
    const Tensor<T>& depth, std::span<const SplatFrame> frames, SplatMode mode,
    bool with_depth_channel, double depth_channel_scale,
    std::shared_ptr<std::vector<WarpResult>>* results_out) {
  const Shape s = depth.shape();
  if (s.c != 1) {
    throw ContractError("splat_to_view: depth tensor must have one channel");
  }
  if (frames.size() != size_t(s.n)) {
    throw ContractError("splat_to_view: frame count does not match batch");
  }
  for (const SplatFrame& f : frames) {
    if (!f.rgb || f.rgb->width != s.w || f.rgb->height != s.h ||
        f.intrinsics.width != s.w || f.intrinsics.height != s.h) {
      throw ConfigError("splat_to_view: frame dimensions do not match depth");
    }
  }

  Tape<T>& tape = depth.tape();
  const size_t plane = size_t(s.h) * s.w;
  const int channels = with_depth_channel ? 4 : 3;
  Tensor<T> out = tape.alloc({s.n, channels, s.h, s.w}, "splat_to_view");

  auto results = std::make_shared<std::vector<WarpResult>>();
  results->reserve(s.n);
  const auto dvals = depth.values();
  for (long i = 0; i < depth.shape().numel(); ++i) {
    if (!std::isfinite(double(dvals[i]))) {
      throw NumericalError("splat_to_view: non-finite depth input");
    }
  }
  for (int n = 0; n < s.n; ++n) {
    DepthMap dm(s.w, s.h);
    for (size_t i = 0; i < plane; ++i) {
      dm.values[i] = double(dvals[n * plane + i]);
      dm.valid[i] = 1;
    }
    WarpResult wr = forward_warp(*frames[n].rgb, dm, frames[n].intrinsics,
                                 frames[n].rel, mode, tape.recording());
    T* dst = out.values().data() + size_t(n) * channels * plane;
    for (int c = 0; c < 3; ++c) {
      for (size_t i = 0; i < plane; ++i) {
        dst[c * plane + i] = T(wr.image.values[i * 3 + c]);
      }
    }
    if (with_depth_channel) {
      for (size_t i = 0; i < plane; ++i) {
        dst[3 * plane + i] =
            wr.depth.valid[i] ? T(wr.depth.values[i] * depth_channel_scale)
                              : T(0);
      }
    }
    results->push_back(std::move(wr));
  }
  if (results_out) *results_out = results;

  const int did = depth.id(), oid = out.id();
  const int batch = s.n;
  tape.push_op([=](Tape<T>& t) {
    std::vector<double> gimg(plane * 3);
    std::vector<double> gdep;
    for (int n = 0; n < batch; ++n) {
      const WarpResult& wr = (*results)[n];
      const T* g = t.grad_of(oid).data() + size_t(n) * channels * plane;
      for (size_t i = 0; i < plane; ++i) {
        for (int c = 0; c < 3; ++c) {
          gimg[i * 3 + c] = double(g[c * plane + i]);
        }
      }
      if (with_depth_channel) {
        gdep.resize(plane);
        for (size_t i = 0; i < plane; ++i) {
          gdep[i] = double(g[3 * plane + i]) * depth_channel_scale;
        }
      }
      const WarpGradients wg = warp_backward(wr, gimg, gdep);
      T* gd = t.grad_of(did).data() + size_t(n) * plane;
      for (size_t i = 0; i < plane; ++i) {
        gd[i] += T(wg.d_depth[i]);
      }
    }
  });
  return out;
}

template Tensor<float> splat_to_view(
    const Tensor<float>&, std::span<const SplatFrame>, SplatMode, bool, double,
    std::shared_ptr<std::vector<WarpResult>>*);
template Tensor<double> splat_to_view(
    const Tensor<double>&, std::span<const SplatFrame>, SplatMode, bool,
    double, std::shared_ptr<std::vector<WarpResult>>*);

}  // namespace vsd
