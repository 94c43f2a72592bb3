#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>

#include "vsd/geometry.hpp"
#include "vsd/tensor.hpp"

namespace vsd {

struct LossWeights {
  double alpha = 1.0;  // direct and second-view depth terms
  double beta = 0.5;   // synthesized-image term

  void validate() const;
};

struct LossReport {
  std::optional<double> l1;  // view-1 depth
  std::optional<double> l2;  // synthesized image
  std::optional<double> l3;  // view-2 depth
  double total = 0.0;
  long n1 = 0;  // valid-pixel counts behind each mean
  long n2 = 0;
  long n3 = 0;
};

// Recomputes alpha*l1 + beta*l2 + alpha*l3 over the present terms.
double combined_total(const LossReport& report, const LossWeights& w);

// Mean |pred - gt| over gt-valid pixels. pred is (N, 1, H, W); one ground
// truth map per batch sample. Differentiable w.r.t. pred.
template <typename T>
Tensor<T> depth_loss(const Tensor<T>& pred,
                     std::span<const DepthMap* const> gts,
                     long* n_valid = nullptr);

template <typename T>
Tensor<T> depth_loss(const Tensor<T>& pred, const DepthMap& gt,
                     long* n_valid = nullptr);

// Mean |pred - gt| over every pixel and channel, no masking.
// pred is (N, 3, H, W).
template <typename T>
Tensor<T> image_loss(const Tensor<T>& pred,
                     std::span<const ImageBuffer* const> gts);

template <typename T>
Tensor<T> image_loss(const Tensor<T>& pred, const ImageBuffer& gt);

// Same contract as depth_loss, applied at the second view point.
template <typename T>
Tensor<T> second_view_depth_loss(const Tensor<T>& pred2,
                                 std::span<const DepthMap* const> gts2,
                                 long* n_valid = nullptr);

// alpha*l1 + beta*l2 + alpha*l3 over whichever terms exist (at least one).
template <typename T>
Tensor<T> total_loss(const std::optional<Tensor<T>>& l1,
                     const std::optional<Tensor<T>>& l2,
                     const std::optional<Tensor<T>>& l3,
                     const LossWeights& w);

// Appends `step,l1,l2,l3,total` rows; absent terms leave their cell empty.
class LossCsvWriter {
 public:
  explicit LossCsvWriter(const std::filesystem::path& file);
  void append(long step, const LossReport& report);

 private:
  std::ofstream out_;
};

}  // namespace vsd
