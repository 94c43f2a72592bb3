#pragma once

#include <filesystem>
#include <memory>
#include <optional>

#include "vsd/checkpoint.hpp"
#include "vsd/data.hpp"
#include "vsd/losses.hpp"
#include "vsd/metrics.hpp"
#include "vsd/nets.hpp"
#include "vsd/splat_op.hpp"

namespace vsd {

enum class TrainMode { kDepnetOnly, kDepnetSynnet, kFull };

std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kFull;
  int epochs = 30;
  int batch_size = 8;
  double learning_rate = 1e-4;
  LossWeights weights;  // alpha 1.0, beta 0.5
  UNetConfig depnet = UNetConfig::desk_depth();
  UNetConfig synnet = UNetConfig::desk_rgb();
  EvalRange eval_range = EvalRange::nyu();
  uint64_t seed = 1;
  std::filesystem::path out_dir;  // empty disables checkpoints and logs
  bool detach_warp_for_l2 = false;
  bool symmetric_pairs = false;
  bool use_warped_depth_channel = false;
  SplatMode splat_mode = SplatMode::kBilinear;

  void validate() const;
  // depnet_only cannot produce the image term: zero its weight.
  TrainConfig normalized() const;
};

// Parses the trainer's key=value config file keys into a TrainConfig.
TrainConfig train_config_from_file(const std::filesystem::path& file);
SceneConfig scene_config_from_file(const std::filesystem::path& file);

struct StepLoss {
  long step = 0;
  LossReport report;
};

struct EpochVal {
  int epoch = 0;
  MetricsReport metrics;
};

struct TrainRecord {
  std::vector<StepLoss> steps;
  std::vector<EpochVal> epochs;
  double wall_seconds = 0.0;
};

template <typename T>
struct PipelineResult {
  Tensor<T> pred_depth1;
  std::shared_ptr<std::vector<WarpResult>> warp_results;  // null in depnet_only
  std::optional<Tensor<T>> warped;
  std::optional<Tensor<T>> synth_rgb2;
  std::optional<Tensor<T>> pred_depth2;
  std::optional<Tensor<T>> loss1, loss2, loss3;
  Tensor<T> total;
  LossReport report;
};

// Runs the three-stage forward pass over one batch on the nets' tape:
// depth from view 1, warp to view 2, image completion, depth from the
// synthesized view. Stages beyond the mode's cut are skipped. When
// depth1_override is given it replaces the first DepNet application (the
// injected-depth path used by gradient checking).
template <typename T>
PipelineResult<T> forward_pipeline(const BoundNet<T>& depnet,
                                   const BoundNet<T>& synnet,
                                   std::span<const SceneSample* const> batch,
                                   const TrainConfig& cfg,
                                   const Tensor<T>* depth1_override = nullptr);

struct TrainResult {
  TrainState<float> state;
  TrainRecord record;
};

// Adam over both nets jointly; per-epoch validation metrics and rolling
// checkpoints under cfg.out_dir. Deterministic in cfg.seed.
TrainResult train(const TrainConfig& cfg, const DatasetSplits& data);

// DepNet alone over a split; the mean of per-image metric reports.
MetricsReport evaluate(const Network<float>& depnet,
                       std::span<const SceneSample> split,
                       const EvalRange& range);
// Ground-truth-as-prediction oracle (diagnostic baseline).
MetricsReport evaluate_gt_oracle(std::span<const SceneSample> split,
                                 const EvalRange& range);

// Per-image depth prediction for one sample, eval mode (no recording).
DepthMap predict_depth(const Network<float>& depnet, const SceneSample& sample);

struct AblationRow {
  TrainMode mode;
  MetricsReport test_metrics;
};

struct AblationResult {
  std::vector<AblationRow> rows;        // depnet_only, depnet_synnet, full
  std::vector<TrainRecord> records;
};

// Trains all three modes with identical seeds and data, evaluates each on
// the test split, and (when out_dir is set) writes the comparison table.
AblationResult run_ablation(const TrainConfig& base,
                            const DatasetSplits& data);

}  // namespace vsd
