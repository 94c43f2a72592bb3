#include "vsd/losses.hpp"

#include <cmath>

namespace vsd {

void LossWeights::validate() const {
  if (alpha < 0.0 || beta < 0.0 || !(alpha + beta > 0.0)) {
    throw ConfigError("loss weights: need alpha, beta >= 0 and "
                      "alpha + beta > 0");
  }
}

double combined_total(const LossReport& report, const LossWeights& w) {
  double total = 0.0;
  if (report.l1) total += w.alpha * *report.l1;
  if (report.l2) total += w.beta * *report.l2;
  if (report.l3) total += w.alpha * *report.l3;
  return total;
}

namespace {

template <typename T>
void check_batch_dims(const Shape& s, int channels, size_t batch,
                      const char* op) {
  if (s.c != channels) {
    throw ConfigError(std::string(op) + ": expected " +
                      std::to_string(channels) + " channels, got " +
                      to_string(s));
  }
  if (batch != size_t(s.n)) {
    throw ConfigError(std::string(op) + ": batch size mismatch");
  }
}

}  // namespace

template <typename T>
Tensor<T> depth_loss(const Tensor<T>& pred,
                     std::span<const DepthMap* const> gts, long* n_valid) {
  const Shape s = pred.shape();
  check_batch_dims<T>(s, 1, gts.size(), "depth_loss");
  const size_t plane = size_t(s.h) * s.w;
  std::vector<T> target(size_t(s.n) * plane, T(0));
  std::vector<T> mask(size_t(s.n) * plane, T(0));
  for (int n = 0; n < s.n; ++n) {
    const DepthMap& gt = *gts[n];
    if (gt.width != s.w || gt.height != s.h) {
      throw ConfigError("depth_loss: ground truth dimensions do not match "
                        "prediction");
    }
    for (size_t i = 0; i < plane; ++i) {
      if (gt.valid[i]) {
        target[n * plane + i] = T(gt.values[i]);
        mask[n * plane + i] = T(1);
      }
    }
  }
  Tape<T>& tape = pred.tape();
  Tensor<T> gt_t = tape.leaf(s, {target.data(), target.size()}, "depth_gt");
  Tensor<T> mask_t = tape.leaf(s, {mask.data(), mask.size()}, "depth_mask");
  return l1_mean(pred, gt_t, &mask_t, n_valid);
}

template <typename T>
Tensor<T> depth_loss(const Tensor<T>& pred, const DepthMap& gt, long* n_valid) {
  const DepthMap* one[] = {&gt};
  return depth_loss(pred, std::span<const DepthMap* const>(one), n_valid);
}

template <typename T>
Tensor<T> image_loss(const Tensor<T>& pred,
                     std::span<const ImageBuffer* const> gts) {
  const Shape s = pred.shape();
  check_batch_dims<T>(s, 3, gts.size(), "image_loss");
  const size_t plane = size_t(s.h) * s.w;
  std::vector<T> target(size_t(s.n) * 3 * plane);
  for (int n = 0; n < s.n; ++n) {
    const ImageBuffer& gt = *gts[n];
    if (gt.width != s.w || gt.height != s.h) {
      throw ConfigError("image_loss: ground truth dimensions do not match "
                        "prediction");
    }
    T* dst = target.data() + size_t(n) * 3 * plane;
    for (size_t i = 0; i < plane; ++i) {
      for (int c = 0; c < 3; ++c) {
        dst[c * plane + i] = T(gt.values[i * 3 + c]);
      }
    }
  }
  Tape<T>& tape = pred.tape();
  Tensor<T> gt_t = tape.leaf(s, {target.data(), target.size()}, "image_gt");
  return l1_mean(pred, gt_t);
}

template <typename T>
Tensor<T> image_loss(const Tensor<T>& pred, const ImageBuffer& gt) {
  const ImageBuffer* one[] = {&gt};
  return image_loss(pred, std::span<const ImageBuffer* const>(one));
}

template <typename T>
Tensor<T> second_view_depth_loss(const Tensor<T>& pred2,
                                 std::span<const DepthMap* const> gts2,
                                 long* n_valid) {
  return depth_loss(pred2, gts2, n_valid);
}

template <typename T>
Tensor<T> total_loss(const std::optional<Tensor<T>>& l1,
                     const std::optional<Tensor<T>>& l2,
                     const std::optional<Tensor<T>>& l3,
                     const LossWeights& w) {
  w.validate();
  std::vector<Tensor<T>> terms;
  std::vector<double> coeffs;
  if (l1) {
    terms.push_back(*l1);
    coeffs.push_back(w.alpha);
  }
  if (l2) {
    terms.push_back(*l2);
    coeffs.push_back(w.beta);
  }
  if (l3) {
    terms.push_back(*l3);
    coeffs.push_back(w.alpha);
  }
  if (terms.empty()) {
    throw ContractError("total_loss: no loss terms present");
  }
  return linear_combination(std::span<const Tensor<T>>(terms),
                            std::span<const double>(coeffs));
}

LossCsvWriter::LossCsvWriter(const std::filesystem::path& file)
    : out_(file) {
  if (!out_) {
    throw IngestionError("cannot write loss log: " + file.string());
  }
  out_ << "step,l1,l2,l3,total\n";
}

void LossCsvWriter::append(long step, const LossReport& report) {
  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", *v);
    return std::string(buf);
  };
  char total[32];
  std::snprintf(total, sizeof(total), "%.9g", report.total);
  out_ << step << ',' << cell(report.l1) << ',' << cell(report.l2) << ','
       << cell(report.l3) << ',' << total << '\n';
  out_.flush();
}

#define VSD_INSTANTIATE(T)                                                   \
  template Tensor<T> depth_loss(const Tensor<T>&,                           \
                                std::span<const DepthMap* const>, long*);    \
  template Tensor<T> depth_loss(const Tensor<T>&, const DepthMap&, long*);   \
  template Tensor<T> image_loss(const Tensor<T>&,                           \
                                std::span<const ImageBuffer* const>);        \
  template Tensor<T> image_loss(const Tensor<T>&, const ImageBuffer&);       \
  template Tensor<T> second_view_depth_loss(                                 \
      const Tensor<T>&, std::span<const DepthMap* const>, long*);            \
  template Tensor<T> total_loss(const std::optional<Tensor<T>>&,             \
                                const std::optional<Tensor<T>>&,             \
                                const std::optional<Tensor<T>>&,             \
                                const LossWeights&);

VSD_INSTANTIATE(float)
VSD_INSTANTIATE(double)

#undef VSD_INSTANTIATE

}  // namespace vsd
