#include "vsd/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace vsd {

void EvalRange::validate() const {
  if (!(min_depth > 0.0) || !(min_depth < max_depth)) {
    throw ConfigError("eval range: need 0 < min_depth < max_depth");
  }
}

MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt,
                              const EvalRange& range, const CropRect& crop) {
  range.validate();
  if (pred.width != gt.width || pred.height != gt.height) {
    throw ConfigError("metrics: prediction and ground truth dimensions "
                      "differ");
  }
  int x0 = 0, y0 = 0, x1 = gt.width, y1 = gt.height;
  if (!crop.empty()) {
    if (crop.x0 < 0 || crop.y0 < 0 || crop.x1 > gt.width ||
        crop.y1 > gt.height) {
      throw ConfigError("metrics: crop rectangle outside the image");
    }
    x0 = crop.x0;
    y0 = crop.y0;
    x1 = crop.x1;
    y1 = crop.y1;
  }

  const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  double rel = 0.0, mse = 0.0, mse_log = 0.0, sq_rel = 0.0;
  long d1 = 0, d2 = 0, d3 = 0, n = 0;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (!gt.is_valid(x, y)) continue;
      const double yv = gt.at(x, y);
      if (yv < range.min_depth || yv > range.max_depth) continue;
      const double p =
          std::clamp(pred.at(x, y), range.min_depth, range.max_depth);
      const double e = yv - p;
      rel += std::abs(e) / yv;
      mse += e * e;
      const double lg = std::log(yv) - std::log(p);
      mse_log += lg * lg;
      sq_rel += e * e / yv;
      const double ratio = std::max(yv / p, p / yv);
      d1 += ratio < t1;
      d2 += ratio < t2;
      d3 += ratio < t3;
      n += 1;
    }
  }
  if (n == 0) {
    throw DegenerateInputError("metrics: no valid ground-truth pixels in "
                               "range");
  }
  MetricsReport out;
  out.rel = rel / n;
  out.rmse = std::sqrt(mse / n);
  out.rmse_log = std::sqrt(mse_log / n);
  out.sq_rel = sq_rel / n;
  out.delta1 = double(d1) / n;
  out.delta2 = double(d2) / n;
  out.delta3 = double(d3) / n;
  out.n_valid = n;
  return out;
}

ErrorMapResult error_map(const DepthMap& pred, const DepthMap& gt,
                         const EvalRange& range) {
  range.validate();
  if (pred.width != gt.width || pred.height != gt.height) {
    throw ConfigError("error_map: prediction and ground truth dimensions "
                      "differ");
  }
  ErrorMapResult out;
  out.width = gt.width;
  out.height = gt.height;
  out.values.assign(size_t(gt.width) * gt.height, 0.0);
  out.valid.assign(out.values.size(), 0);
  double sum = 0.0;
  for (size_t i = 0; i < out.values.size(); ++i) {
    if (!gt.valid[i]) continue;
    const double yv = gt.values[i];
    if (yv < range.min_depth || yv > range.max_depth) continue;
    const double p =
        std::clamp(pred.values[i], range.min_depth, range.max_depth);
    out.values[i] = std::abs(yv - p);
    out.valid[i] = 1;
    sum += out.values[i];
    out.n_valid += 1;
  }
  if (out.n_valid > 0) {
    out.mean = sum / double(out.n_valid);
  }
  return out;
}

}  // namespace vsd
