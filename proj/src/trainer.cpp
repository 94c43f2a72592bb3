#include "vsd/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <utility>

#include "vsd/config.hpp"

namespace vsd {

namespace {

// splitmix64 of a two-word key; decouples the epoch shuffles from each other
// and from the data generator's streams.
uint64_t mix64(uint64_t a, uint64_t b) {
  uint64_t x = a + 0x9e3779b97f4a7c15ull * (b + 0x632be59bd9b4e019ull);
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

void check_finite_params(const Network<float>& net, long step) {
  for (const auto& p : net.params) {
    for (float v : p.values) {
      if (!std::isfinite(v)) {
        throw NumericalError("train: parameter '" + p.name +
                             "' became non-finite after step " +
                             std::to_string(step));
      }
    }
  }
}

void adam_update(Network<float>& net, const BoundNet<float>& bound,
                 std::vector<AdamState<float>>& opt, double lr) {
  for (size_t i = 0; i < net.params.size(); ++i) {
    adam_step<float>(std::span<float>(net.params[i].values),
                     bound.leaves[i].grad(), opt[i], lr);
  }
}

std::vector<AdamState<float>> make_opt_slots(const Network<float>& net) {
  std::vector<AdamState<float>> slots(net.params.size());
  for (size_t i = 0; i < slots.size(); ++i) {
    slots[i].m.assign(net.params[i].values.size(), 0.0f);
    slots[i].v.assign(net.params[i].values.size(), 0.0f);
  }
  return slots;
}

void write_metrics_row(std::ofstream& out, int key, const MetricsReport& m) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", key, m.rel, m.rmse,
                m.rmse_log, m.sq_rel, m.delta1, m.delta2, m.delta3);
  out << buf;
  out.flush();
}

}  // namespace

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::kDepnetOnly:
      return "depnet_only";
    case TrainMode::kDepnetSynnet:
      return "depnet_synnet";
    case TrainMode::kFull:
      return "full";
  }
  throw ContractError("to_string: unknown train mode");
}

TrainMode parse_train_mode(const std::string& name) {
  if (name == "depnet_only") return TrainMode::kDepnetOnly;
  if (name == "depnet_synnet") return TrainMode::kDepnetSynnet;
  if (name == "full") return TrainMode::kFull;
  throw ConfigError("unknown mode '" + name +
                    "' (expected depnet_only, depnet_synnet, or full)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  weights.validate();
  depnet.validate();
  synnet.validate();
  eval_range.validate();
  if (depnet.head != OutputHead::kDepth || depnet.in_channels != 3) {
    throw ConfigError("depnet must map 3 input channels to a depth head");
  }
  if (synnet.head != OutputHead::kRgb) {
    throw ConfigError("synnet must use the rgb head");
  }
  const int want_in = use_warped_depth_channel ? 4 : 3;
  if (synnet.in_channels != want_in) {
    throw ConfigError("synnet.in_channels must be " + std::to_string(want_in) +
                      " for this warped-input layout");
  }
}

TrainConfig TrainConfig::normalized() const {
  TrainConfig out = *this;
  if (out.mode == TrainMode::kDepnetOnly) out.weights.beta = 0.0;
  return out;
}

TrainConfig train_config_from_file(const std::filesystem::path& file) {
  KvReader kv(parse_kv_file(file), file.string());
  TrainConfig cfg;
  cfg.mode = parse_train_mode(kv.get_string("mode", to_string(cfg.mode)));
  cfg.epochs = kv.get_int("epochs", cfg.epochs);
  cfg.batch_size = kv.get_int("batch_size", cfg.batch_size);
  cfg.learning_rate = kv.get_double("learning_rate", cfg.learning_rate);
  cfg.weights.alpha = kv.get_double("alpha", cfg.weights.alpha);
  cfg.weights.beta = kv.get_double("beta", cfg.weights.beta);
  cfg.seed = kv.get_u64("seed", cfg.seed);

  const int levels = kv.get_int("levels", cfg.depnet.levels);
  const int base = kv.get_int("base_channels", cfg.depnet.base_channels);
  const int cap = kv.get_int("channel_cap", cfg.depnet.channel_cap);
  cfg.depnet.levels = cfg.synnet.levels = levels;
  cfg.depnet.base_channels = cfg.synnet.base_channels = base;
  cfg.depnet.channel_cap = cfg.synnet.channel_cap = cap;
  cfg.depnet.max_depth = kv.get_double("max_depth", cfg.depnet.max_depth);

  cfg.eval_range.min_depth =
      kv.get_double("eval_min_depth", cfg.eval_range.min_depth);
  cfg.eval_range.max_depth =
      kv.get_double("eval_max_depth", cfg.eval_range.max_depth);

  cfg.detach_warp_for_l2 =
      kv.get_bool("detach_warp_for_l2", cfg.detach_warp_for_l2);
  cfg.symmetric_pairs = kv.get_bool("symmetric_pairs", cfg.symmetric_pairs);
  cfg.use_warped_depth_channel =
      kv.get_bool("use_warped_depth_channel", cfg.use_warped_depth_channel);
  const std::string splat = kv.get_string("splat_mode", "bilinear");
  if (splat == "bilinear") {
    cfg.splat_mode = SplatMode::kBilinear;
  } else if (splat == "nearest") {
    cfg.splat_mode = SplatMode::kNearest;
  } else {
    throw ConfigError("unknown splat_mode '" + splat +
                      "' in " + kv.source());
  }
  kv.finish();

  if (cfg.use_warped_depth_channel) cfg.synnet.in_channels = 4;
  cfg.validate();
  return cfg;
}

SceneConfig scene_config_from_file(const std::filesystem::path& file) {
  KvReader kv(parse_kv_file(file), file.string());
  SceneConfig cfg;
  cfg.width = kv.get_int("width", cfg.width);
  cfg.height = kv.get_int("height", cfg.height);
  cfg.focal = kv.get_double("focal", cfg.focal);
  cfg.min_depth = kv.get_double("min_depth", cfg.min_depth);
  cfg.max_depth = kv.get_double("max_depth", cfg.max_depth);
  cfg.primitive_count = kv.get_int("primitive_count", cfg.primitive_count);
  cfg.backdrop = kv.get_bool("backdrop", cfg.backdrop);
  cfg.max_rotation_deg =
      kv.get_double("max_rotation_deg", cfg.max_rotation_deg);
  cfg.max_translation = kv.get_double("max_translation", cfg.max_translation);
  cfg.texture_frequency =
      kv.get_double("texture_frequency", cfg.texture_frequency);
  cfg.seed = kv.get_u64("seed", cfg.seed);
  kv.finish();
  cfg.validate();
  return cfg;
}

template <typename T>
PipelineResult<T> forward_pipeline(const BoundNet<T>& depnet,
                                   const BoundNet<T>& synnet,
                                   std::span<const SceneSample* const> batch,
                                   const TrainConfig& raw_cfg,
                                   const Tensor<T>* depth1_override) {
  if (batch.empty()) {
    throw DegenerateInputError("forward_pipeline: empty batch");
  }
  if (depnet.leaves.empty()) {
    throw ContractError("forward_pipeline: depnet is not bound");
  }
  const TrainConfig cfg = raw_cfg.normalized();
  Tape<T>& tape = depnet.leaves.front().tape();

  const int n = int(batch.size());
  const int w = batch[0]->intrinsics.width;
  const int h = batch[0]->intrinsics.height;
  for (const SceneSample* s : batch) {
    if (s->intrinsics.width != w || s->intrinsics.height != h) {
      throw ConfigError("forward_pipeline: mixed image sizes in one batch");
    }
  }

  std::vector<T> host(size_t(n) * 3 * h * w);
  for (int i = 0; i < n; ++i) {
    const ImageBuffer& img = batch[i]->rgb1;
    for (int c = 0; c < 3; ++c) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          host[((size_t(i) * 3 + c) * h + y) * w + x] = T(img.at(x, y, c));
        }
      }
    }
  }
  Tensor<T> rgb1 = tape.leaf({n, 3, h, w}, host, "rgb1");

  PipelineResult<T> out;
  if (depth1_override != nullptr) {
    if (!(depth1_override->shape() == Shape{n, 1, h, w})) {
      throw ContractError("forward_pipeline: depth override is " +
                          to_string(depth1_override->shape()) +
                          ", batch wants " + to_string(Shape{n, 1, h, w}));
    }
    out.pred_depth1 = *depth1_override;
  } else {
    out.pred_depth1 = depnet_forward(depnet, rgb1);
  }

  std::vector<const DepthMap*> gts1(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) gts1[i] = &batch[i]->depth1;
  long n1 = 0;
  out.loss1 = depth_loss(out.pred_depth1,
                         std::span<const DepthMap* const>(gts1), &n1);
  out.report.n1 = n1;

  if (cfg.mode != TrainMode::kDepnetOnly) {
    if (synnet.leaves.empty()) {
      throw ContractError("forward_pipeline: synnet is not bound");
    }
    std::vector<SplatFrame> frames(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      frames[i].rgb = &batch[i]->rgb1;
      frames[i].intrinsics = batch[i]->intrinsics;
      frames[i].rel = relative_pose(batch[i]->pose1, batch[i]->pose2);
    }
    std::shared_ptr<std::vector<WarpResult>> results;
    Tensor<T> warped = splat_to_view(
        out.pred_depth1, std::span<const SplatFrame>(frames), cfg.splat_mode,
        cfg.use_warped_depth_channel, 1.0 / cfg.depnet.max_depth, &results);
    out.warped = warped;
    out.warp_results = results;

    std::vector<const ImageBuffer*> gts_rgb(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) gts_rgb[i] = &batch[i]->rgb2;

    const bool need_l3 = cfg.mode == TrainMode::kFull;
    if (cfg.detach_warp_for_l2) {
      // The image term then trains SynNet alone; DepNet still feels view 2
      // through the third loss.
      Tensor<T> guarded = synnet_forward(synnet, detach(warped));
      out.loss2 =
          image_loss(guarded, std::span<const ImageBuffer* const>(gts_rgb));
      out.synth_rgb2 = need_l3 ? synnet_forward(synnet, warped) : guarded;
    } else {
      Tensor<T> synth = synnet_forward(synnet, warped);
      out.loss2 =
          image_loss(synth, std::span<const ImageBuffer* const>(gts_rgb));
      out.synth_rgb2 = synth;
    }
    out.report.n2 = long(n) * 3 * h * w;

    if (need_l3) {
      out.pred_depth2 = depnet_forward(depnet, *out.synth_rgb2);
      std::vector<const DepthMap*> gts2(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i) gts2[i] = &batch[i]->depth2;
      long n3 = 0;
      out.loss3 = second_view_depth_loss(
          *out.pred_depth2, std::span<const DepthMap* const>(gts2), &n3);
      out.report.n3 = n3;
    }
  }

  out.total = total_loss(out.loss1, out.loss2, out.loss3, cfg.weights);
  out.report.l1 = double(out.loss1->values()[0]);
  if (out.loss2) out.report.l2 = double(out.loss2->values()[0]);
  if (out.loss3) out.report.l3 = double(out.loss3->values()[0]);
  out.report.total = double(out.total.values()[0]);
  return out;
}

template PipelineResult<float> forward_pipeline(
    const BoundNet<float>&, const BoundNet<float>&,
    std::span<const SceneSample* const>, const TrainConfig&,
    const Tensor<float>*);
template PipelineResult<double> forward_pipeline(
    const BoundNet<double>&, const BoundNet<double>&,
    std::span<const SceneSample* const>, const TrainConfig&,
    const Tensor<double>*);

TrainResult train(const TrainConfig& raw_cfg, const DatasetSplits& data) {
  const TrainConfig cfg = raw_cfg.normalized();
  cfg.validate();
  if (data.train.empty()) {
    throw DegenerateInputError("train: empty train split");
  }
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.state.depnet = build_unet<float>(cfg.depnet, cfg.seed);
  result.state.synnet = build_unet<float>(cfg.synnet, cfg.seed + 1000003);
  result.state.depnet_opt = make_opt_slots(result.state.depnet);
  result.state.synnet_opt = make_opt_slots(result.state.synnet);

  std::vector<SceneSample> reversed;
  std::vector<const SceneSample*> pool;
  pool.reserve(data.train.size() * (cfg.symmetric_pairs ? 2 : 1));
  for (const SceneSample& s : data.train) pool.push_back(&s);
  if (cfg.symmetric_pairs) {
    reversed.reserve(data.train.size());
    for (const SceneSample& s : data.train) {
      SceneSample r = s;
      std::swap(r.rgb1, r.rgb2);
      std::swap(r.depth1, r.depth2);
      std::swap(r.pose1, r.pose2);
      r.id += "_rev";
      reversed.push_back(std::move(r));
    }
    for (const SceneSample& s : reversed) pool.push_back(&s);
  }

  std::optional<LossCsvWriter> train_log;
  std::ofstream val_log;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    train_log.emplace(cfg.out_dir / "train_log.csv");
    val_log.open(cfg.out_dir / "val_log.csv",
                 std::ios::out | std::ios::trunc);
    if (!val_log) {
      throw IngestionError("cannot write " +
                           (cfg.out_dir / "val_log.csv").string());
    }
    val_log << "epoch,rel,rmse,rmse_log,sq_rel,d1,d2,d3\n";
  }

  long step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<const SceneSample*> order = pool;
    std::mt19937_64 rng(mix64(cfg.seed, uint64_t(epoch)));
    std::shuffle(order.begin(), order.end(), rng);

    for (size_t begin = 0; begin < order.size();
         begin += size_t(cfg.batch_size)) {
      const size_t count =
          std::min(order.size() - begin, size_t(cfg.batch_size));
      std::span<const SceneSample* const> batch(order.data() + begin, count);

      Tape<float> tape;
      BoundNet<float> dep = bind(tape, result.state.depnet);
      BoundNet<float> syn = bind(tape, result.state.synnet);
      PipelineResult<float> pipe = forward_pipeline(dep, syn, batch, cfg);
      ++step;

      if (!std::isfinite(pipe.report.total)) {
        std::string what =
            "train: non-finite loss at step " + std::to_string(step);
        if (auto bad = tape.first_non_finite()) {
          what += "; first non-finite tensor is '" + bad->label + "'";
        }
        throw NumericalError(what);
      }

      tape.backward(pipe.total);
      adam_update(result.state.depnet, dep, result.state.depnet_opt,
                  cfg.learning_rate);
      adam_update(result.state.synnet, syn, result.state.synnet_opt,
                  cfg.learning_rate);
      check_finite_params(result.state.depnet, step);
      check_finite_params(result.state.synnet, step);

      result.state.global_step = step;
      result.record.steps.push_back({step, pipe.report});
      if (train_log) train_log->append(step, pipe.report);
    }

    if (!data.val.empty()) {
      const MetricsReport m =
          evaluate(result.state.depnet, data.val, cfg.eval_range);
      result.record.epochs.push_back({epoch, m});
      if (val_log.is_open()) write_metrics_row(val_log, epoch, m);
    }
    if (!cfg.out_dir.empty()) {
      save_checkpoint(result.state, cfg.out_dir / "checkpoint.nvsd");
    }
  }

  if (!cfg.out_dir.empty()) {
    save_checkpoint(result.state, cfg.out_dir / "checkpoint_final.nvsd");
  }
  result.record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return result;
}

DepthMap predict_depth(const Network<float>& depnet,
                       const SceneSample& sample) {
  const int w = sample.intrinsics.width;
  const int h = sample.intrinsics.height;
  Tape<float> tape(false);
  BoundNet<float> dep = bind(tape, depnet);

  std::vector<float> host(size_t(3) * h * w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        host[(size_t(c) * h + y) * w + x] = float(sample.rgb1.at(x, y, c));
      }
    }
  }
  Tensor<float> rgb = tape.leaf({1, 3, h, w}, host, "rgb1");
  Tensor<float> pred = depnet_forward(dep, rgb);

  DepthMap out(w, h);
  std::span<const float> v = pred.values();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      out.set(x, y, double(v[size_t(y) * w + x]));
    }
  }
  return out;
}

namespace {

template <typename PredFn>
MetricsReport mean_metrics(std::span<const SceneSample> split,
                           const EvalRange& range, PredFn&& predict) {
  if (split.empty()) throw DegenerateInputError("evaluate: empty split");
  range.validate();
  MetricsReport mean;
  for (const SceneSample& s : split) {
    const MetricsReport m = compute_metrics(predict(s), s.depth1, range);
    mean.rel += m.rel;
    mean.rmse += m.rmse;
    mean.rmse_log += m.rmse_log;
    mean.sq_rel += m.sq_rel;
    mean.delta1 += m.delta1;
    mean.delta2 += m.delta2;
    mean.delta3 += m.delta3;
    mean.n_valid += m.n_valid;
  }
  const double inv = 1.0 / double(split.size());
  mean.rel *= inv;
  mean.rmse *= inv;
  mean.rmse_log *= inv;
  mean.sq_rel *= inv;
  mean.delta1 *= inv;
  mean.delta2 *= inv;
  mean.delta3 *= inv;
  return mean;
}

}  // namespace

MetricsReport evaluate(const Network<float>& depnet,
                       std::span<const SceneSample> split,
                       const EvalRange& range) {
  return mean_metrics(split, range, [&](const SceneSample& s) {
    return predict_depth(depnet, s);
  });
}

MetricsReport evaluate_gt_oracle(std::span<const SceneSample> split,
                                 const EvalRange& range) {
  return mean_metrics(split, range,
                      [](const SceneSample& s) { return s.depth1; });
}

AblationResult run_ablation(const TrainConfig& base,
                            const DatasetSplits& data) {
  base.validate();
  if (data.test.empty()) {
    throw DegenerateInputError("run_ablation: empty test split");
  }
  const TrainMode modes[] = {TrainMode::kDepnetOnly, TrainMode::kDepnetSynnet,
                             TrainMode::kFull};
  AblationResult out;
  for (TrainMode mode : modes) {
    TrainConfig cfg = base;
    cfg.mode = mode;
    if (!base.out_dir.empty()) cfg.out_dir = base.out_dir / to_string(mode);
    TrainResult r = train(cfg, data);
    out.rows.push_back(
        {mode, evaluate(r.state.depnet, data.test, cfg.eval_range)});
    out.records.push_back(std::move(r.record));
  }

  if (!base.out_dir.empty()) {
    std::filesystem::create_directories(base.out_dir);
    const auto file = base.out_dir / "ablation.csv";
    std::ofstream csv(file, std::ios::out | std::ios::trunc);
    if (!csv) throw IngestionError("cannot write " + file.string());
    csv << "mode,rel,rmse,rmse_log,sq_rel,d1,d2,d3\n";
    for (const AblationRow& row : out.rows) {
      const MetricsReport& m = row.test_metrics;
      char buf[256];
      std::snprintf(buf, sizeof(buf),
                    "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                    to_string(row.mode).c_str(), m.rel, m.rmse, m.rmse_log,
                    m.sq_rel, m.delta1, m.delta2, m.delta3);
      csv << buf;
    }
  }
  return out;
}

}  // namespace vsd
