// vsdepth: synthetic data generation, training, evaluation, warping, and
// gradient checking for the view-synthesis depth toolkit.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vsd/data.hpp"
#include "vsd/gradcheck.hpp"
#include "vsd/image_io.hpp"
#include "vsd/metrics.hpp"
#include "vsd/trainer.hpp"
#include "vsd/warp.hpp"

namespace {

using vsd::ConfigError;

vsd::EvalRange parse_range(const std::string& text) {
  if (text == "nyu") return vsd::EvalRange::nyu();
  if (text == "kitti") return vsd::EvalRange::kitti();
  const size_t comma = text.find(',');
  if (comma == std::string::npos) {
    throw ConfigError("--range expects nyu, kitti, or <min>,<max>");
  }
  vsd::EvalRange range;
  size_t pos1 = 0;
  size_t pos2 = 0;
  try {
    range.min_depth = std::stod(text.substr(0, comma), &pos1);
    range.max_depth = std::stod(text.substr(comma + 1), &pos2);
  } catch (const std::exception&) {
    throw ConfigError("--range: cannot parse '" + text + "'");
  }
  if (pos1 != comma || pos2 != text.size() - comma - 1) {
    throw ConfigError("--range: cannot parse '" + text + "'");
  }
  range.validate();
  return range;
}

vsd::SplatMode parse_splat_mode(const std::string& text) {
  if (text == "bilinear") return vsd::SplatMode::kBilinear;
  if (text == "nearest") return vsd::SplatMode::kNearest;
  throw ConfigError("--mode expects bilinear or nearest");
}

nlohmann::json metrics_json(const vsd::MetricsReport& m) {
  return nlohmann::json{{"rel", m.rel},       {"rmse", m.rmse},
                        {"rmse_log", m.rmse_log}, {"sq_rel", m.sq_rel},
                        {"d1", m.delta1},     {"d2", m.delta2},
                        {"d3", m.delta3},     {"n_valid", m.n_valid}};
}

void write_metrics_csv(const std::filesystem::path& file,
                       const vsd::MetricsReport& m) {
  std::ofstream out(file, std::ios::out | std::ios::trunc);
  if (!out) throw vsd::IngestionError("cannot write " + file.string());
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                m.rel, m.rmse, m.rmse_log, m.sq_rel, m.delta1, m.delta2,
                m.delta3);
  out << "rel,rmse,rmse_log,sq_rel,d1,d2,d3\n" << buf;
}

void cmd_gen_data(const std::string& config, const std::string& out, int count,
                  uint64_t seed, const std::string& depth_format) {
  vsd::SceneConfig cfg;
  if (!config.empty()) cfg = vsd::scene_config_from_file(config);
  const vsd::DatasetSplits splits = vsd::generate_dataset(cfg, count, seed);
  vsd::save_dataset(splits, out, depth_format == "png");
  std::cout << "wrote " << count << " samples to " << out << " (train "
            << splits.train.size() << ", val " << splits.val.size()
            << ", test " << splits.test.size() << ")\n";
}

void cmd_train(const std::string& config, const std::string& data,
               const std::string& mode, const std::string& out) {
  vsd::TrainConfig cfg;
  if (!config.empty()) cfg = vsd::train_config_from_file(config);
  if (!mode.empty()) cfg.mode = vsd::parse_train_mode(mode);
  cfg.out_dir = out;
  const vsd::DatasetSplits splits = vsd::load_dataset(data);
  const vsd::TrainResult result = vsd::train(cfg, splits);

  std::cout << "trained " << to_string(cfg.mode) << " for "
            << result.record.steps.size() << " steps in "
            << result.record.wall_seconds << " s\n";
  if (!result.record.steps.empty()) {
    const vsd::LossReport& last = result.record.steps.back().report;
    std::cout << "final step loss: total " << last.total;
    if (last.l1) std::cout << ", l1 " << *last.l1;
    if (last.l2) std::cout << ", l2 " << *last.l2;
    if (last.l3) std::cout << ", l3 " << *last.l3;
    std::cout << "\n";
  }
  std::cout << "checkpoint: " << (cfg.out_dir / "checkpoint_final.nvsd").string()
            << "\n";
}

void cmd_eval(const std::string& checkpoint, const std::string& data,
              const std::string& split, const std::string& range_text,
              const std::string& predictor, const std::string& out) {
  const vsd::EvalRange range = parse_range(range_text);
  const std::vector<vsd::SceneSample> samples = vsd::load_split(data, split);
  if (samples.empty()) {
    throw vsd::DegenerateInputError("eval: split '" + split + "' is empty");
  }

  vsd::TrainState<float> state;
  if (predictor == "net") {
    if (checkpoint.empty()) {
      throw ConfigError("--checkpoint is required with --predictor net");
    }
    state = vsd::load_checkpoint<float>(checkpoint);
  } else if (predictor != "gt") {
    throw ConfigError("--predictor expects net or gt");
  }

  const std::filesystem::path out_dir = out;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  vsd::MetricsReport mean;
  for (const vsd::SceneSample& s : samples) {
    const vsd::DepthMap pred = predictor == "gt"
                                   ? s.depth1
                                   : vsd::predict_depth(state.depnet, s);
    const vsd::MetricsReport m = vsd::compute_metrics(pred, s.depth1, range);
    mean.rel += m.rel;
    mean.rmse += m.rmse;
    mean.rmse_log += m.rmse_log;
    mean.sq_rel += m.sq_rel;
    mean.delta1 += m.delta1;
    mean.delta2 += m.delta2;
    mean.delta3 += m.delta3;
    mean.n_valid += m.n_valid;

    if (!out_dir.empty()) {
      const vsd::ErrorMapResult em = vsd::error_map(pred, s.depth1, range);
      vsd::write_pfm_raster(em.values, em.width, em.height,
                            out_dir / ("error_" + s.id + ".pfm"));
      double vmax = 1e-9;
      for (size_t i = 0; i < em.values.size(); ++i) {
        if (em.valid[i]) vmax = std::max(vmax, em.values[i]);
      }
      vsd::write_ppm(
          vsd::false_color(em.values, em.valid, em.width, em.height, 0.0, vmax),
          out_dir / ("error_" + s.id + ".ppm"));
      vsd::write_pfm(pred, out_dir / ("pred_" + s.id + ".pfm"));
    }
  }
  const double inv = 1.0 / double(samples.size());
  mean.rel *= inv;
  mean.rmse *= inv;
  mean.rmse_log *= inv;
  mean.sq_rel *= inv;
  mean.delta1 *= inv;
  mean.delta2 *= inv;
  mean.delta3 *= inv;

  nlohmann::json j = metrics_json(mean);
  j["split"] = split;
  j["n_samples"] = samples.size();
  std::cout << j.dump(2) << "\n";
  if (!out_dir.empty()) {
    std::ofstream jf(out_dir / "metrics.json");
    jf << j.dump(2) << "\n";
    write_metrics_csv(out_dir / "metrics.csv", mean);
  }
}

void cmd_warp(const std::string& sample_dir, const std::string& out,
              const std::string& mode_text) {
  const vsd::SceneSample sample = vsd::load_sample(sample_dir);
  const vsd::RigidPose rel = vsd::relative_pose(sample.pose1, sample.pose2);
  const vsd::WarpResult warped =
      vsd::forward_warp(sample.rgb1, sample.depth1, sample.intrinsics, rel,
                        parse_splat_mode(mode_text), /*record=*/false);

  const std::filesystem::path dir = out;
  std::filesystem::create_directories(dir);
  vsd::write_ppm(warped.image, dir / "warped.ppm");
  vsd::write_pfm(warped.depth, dir / "warped_depth.pfm");
  vsd::write_pgm(warped.hit_mask, warped.width, warped.height,
                 dir / "hit_mask.pgm");
  long hits = 0;
  for (uint8_t h : warped.hit_mask) hits += h != 0;
  std::cout << "warped " << sample.id << ": " << hits << "/"
            << warped.hit_mask.size() << " target pixels hit\n";
}

int cmd_gradcheck(uint64_t seed) {
  vsd::GradcheckOptions opts;
  opts.seed = seed;
  const vsd::GradcheckResult r = vsd::run_gradcheck(opts);
  std::printf(
      "gradcheck: max relative deviation %.3e over %d probes (%d skipped "
      "for z-test winner changes)\n",
      r.max_deviation, r.checked, r.skipped);
  if (!r.pass) {
    for (const vsd::GradcheckEntry& e : r.entries) {
      if (!e.skipped && e.deviation >= opts.tolerance) {
        std::printf("  %-40s analytic %.9e numeric %.9e deviation %.3e\n",
                    e.name.c_str(), e.analytic, e.numeric, e.deviation);
      }
    }
    std::printf("gradcheck: FAIL (tolerance %.1e)\n", opts.tolerance);
    return 2;
  }
  std::printf("gradcheck: PASS (tolerance %.1e)\n", opts.tolerance);
  return 0;
}

void cmd_ablate(const std::string& config, const std::string& data,
                const std::string& out) {
  vsd::TrainConfig cfg;
  if (!config.empty()) cfg = vsd::train_config_from_file(config);
  cfg.out_dir = out;
  const vsd::DatasetSplits splits = vsd::load_dataset(data);
  const vsd::AblationResult result = vsd::run_ablation(cfg, splits);
  std::cout << "mode,rel,rmse,rmse_log,sq_rel,d1,d2,d3\n";
  for (const vsd::AblationRow& row : result.rows) {
    const vsd::MetricsReport& m = row.test_metrics;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                  to_string(row.mode).c_str(), m.rel, m.rmse, m.rmse_log,
                  m.sq_rel, m.delta1, m.delta2, m.delta3);
    std::cout << buf;
  }
  std::cout << "table written to "
            << (std::filesystem::path(out) / "ablation.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"view-synthesis depth training toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  // gen-data
  std::string gen_config, gen_out, gen_format = "pfm";
  int gen_count = 0;
  uint64_t gen_seed = 0;
  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", gen_config, "scene config file (key=value)");
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--count", gen_count, "number of samples")
      ->required()
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "dataset seed (default 0)");
  gen->add_option("--depth-format", gen_format, "pfm or png (default pfm)")
      ->check(CLI::IsMember({"pfm", "png"}));
  gen->callback(
      [&] { cmd_gen_data(gen_config, gen_out, gen_count, gen_seed, gen_format); });

  // train
  std::string train_config, train_data, train_mode, train_out = "train_out";
  CLI::App* tr = app.add_subcommand("train", "train the depth pipeline");
  tr->add_option("--config", train_config, "train config file (key=value)");
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--mode", train_mode,
                 "depnet_only, depnet_synnet, or full (overrides config)");
  tr->add_option("--out", train_out, "output directory (default train_out)");
  tr->callback([&] { cmd_train(train_config, train_data, train_mode, train_out); });

  // eval
  std::string ev_ckpt, ev_data, ev_split = "test", ev_range = "nyu";
  std::string ev_pred = "net", ev_out;
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint file");
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--split", ev_split, "train, val, or test (default test)");
  ev->add_option("--range", ev_range, "nyu, kitti, or <min>,<max>");
  ev->add_option("--predictor", ev_pred,
                 "net (checkpoint) or gt (oracle baseline)");
  ev->add_option("--out", ev_out, "directory for metrics and error maps");
  ev->callback(
      [&] { cmd_eval(ev_ckpt, ev_data, ev_split, ev_range, ev_pred, ev_out); });

  // warp
  std::string warp_sample, warp_out, warp_mode = "bilinear";
  CLI::App* wp = app.add_subcommand("warp", "warp one sample to its second view");
  wp->add_option("--sample", warp_sample, "sample directory")->required();
  wp->add_option("--out", warp_out, "output directory")->required();
  wp->add_option("--mode", warp_mode, "bilinear or nearest");
  wp->callback([&] { cmd_warp(warp_sample, warp_out, warp_mode); });

  // gradcheck
  uint64_t gc_seed = 7;
  CLI::App* gc =
      app.add_subcommand("gradcheck", "finite-difference gradient check");
  gc->add_option("--seed", gc_seed, "probe seed (default 7)");
  gc->callback([&] { rc = cmd_gradcheck(gc_seed); });

  // ablate
  std::string ab_config, ab_data, ab_out = "ablation_out";
  CLI::App* ab =
      app.add_subcommand("ablate", "train and compare the three pipeline modes");
  ab->add_option("--config", ab_config, "train config file");
  ab->add_option("--data", ab_data, "dataset directory")->required();
  ab->add_option("--out", ab_out, "output directory (default ablation_out)");
  ab->callback([&] { cmd_ablate(ab_config, ab_data, ab_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 64;
  } catch (const vsd::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const vsd::IngestionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 66;
  } catch (const vsd::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 64;
  } catch (const vsd::DegenerateInputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 64;
  } catch (const vsd::ContractError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 70;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 70;
  }
  return rc;
}
