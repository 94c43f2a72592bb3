#pragma once

#include <vector>

#include "vsd/geometry.hpp"

namespace vsd {

struct EvalRange {
  double min_depth = 0.01;
  double max_depth = 80.0;

  void validate() const;
  static EvalRange kitti() { return {0.01, 80.0}; }
  static EvalRange nyu() { return {0.01, 10.0}; }
};

// Optional evaluation region [x0, x1) x [y0, y1); empty means whole image.
struct CropRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

struct MetricsReport {
  double rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;  // natural log
  double sq_rel = 0.0;
  double delta1 = 0.0;  // ratio < 1.25, strict
  double delta2 = 0.0;  // < 1.25^2
  double delta3 = 0.0;  // < 1.25^3
  long n_valid = 0;
};

// Predictions are clamped to [min_depth, max_depth]; the valid set is the
// gt pixels that carry a measurement inside the range (and the crop).
MetricsReport compute_metrics(const DepthMap& pred, const DepthMap& gt,
                              const EvalRange& range,
                              const CropRect& crop = {});

struct ErrorMapResult {
  std::vector<double> values;  // |y - clamp(y_hat)| on the valid set, else 0
  std::vector<uint8_t> valid;
  int width = 0;
  int height = 0;
  double mean = 0.0;  // over the valid set
  long n_valid = 0;
};

ErrorMapResult error_map(const DepthMap& pred, const DepthMap& gt,
                         const EvalRange& range);

}  // namespace vsd
