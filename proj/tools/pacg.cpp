#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pacg/config.hpp"
#include "pacg/eval.hpp"
#include "pacg/gradcheck.hpp"
#include "pacg/heatmap.hpp"
#include "pacg/image.hpp"
#include "pacg/predict.hpp"
#include "pacg/text.hpp"
#include "pacg/train.hpp"

namespace fs = std::filesystem;
using namespace pacg;

namespace {

RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return RunConfig::from_file(path);
}

void echo_config(const RunConfig& cfg) {
  std::cout << "resolved configuration:\n" << cfg.resolved();
}

void write_resolved(const RunConfig& cfg, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw std::runtime_error("cannot create output directory: " + dir);
  std::ofstream out(dir + "/config.resolved", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config.resolved in " + dir);
  out << cfg.resolved();
}

void check_split_matches(const RunConfig& cfg, const SplitData& split,
                         const std::string& dir) {
  if (split.num_classes != cfg.synth.num_classes)
    throw std::runtime_error("dataset " + dir + " has num_classes=" +
                             std::to_string(split.num_classes) + " but config says " +
                             std::to_string(cfg.synth.num_classes));
  if (split.image_size != cfg.synth.image_size)
    throw std::runtime_error("dataset " + dir + " has image_size=" +
                             std::to_string(split.image_size) + " but config says " +
                             std::to_string(cfg.synth.image_size));
}

void write_loss_trace(const std::string& path, const TrainResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write loss trace: " + path);
  out << "epoch,total,objectness,classification,box\n";
  for (size_t e = 0; e < result.trace.size(); ++e) {
    const auto& l = result.trace[e];
    out << e << ',' << fmt_double(l.total) << ',' << fmt_double(l.objectness) << ','
        << fmt_double(l.classification) << ',' << fmt_double(l.box) << '\n';
  }
}

EvalResult evaluate_split(const Model& model, const SplitData& split,
                          double score_threshold, double nms_iou) {
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GtBox>> gts;
  for (const auto& scene : split.scenes) {
    dets.push_back(predict(model, scene, score_threshold, nms_iou));
    std::vector<GtBox> g;
    for (const auto& b : scene.boxes)
      g.push_back({b.class_id,
                   {b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2}});
    gts.push_back(std::move(g));
  }
  return evaluate_detections(dets, gts, split.num_classes);
}

RunConfig config_for_checkpoint(const std::string& config_path,
                                const std::string& ckpt_path) {
  if (!config_path.empty()) return RunConfig::from_file(config_path);
  const fs::path sibling = fs::path(ckpt_path).parent_path() / "config.resolved";
  if (!fs::exists(sibling))
    throw std::runtime_error("no --config given and " + sibling.string() + " not found");
  return RunConfig::from_file(sibling.string());
}

int run_synth(const std::string& config_path, const std::string& out, int count) {
  RunConfig cfg = load_run_config(config_path);
  if (!out.empty()) cfg.out_dir = out;
  echo_config(cfg);
  SynthStats stats;
  auto scenes = synth_generate(cfg.synth, count, &stats);
  write_split(cfg.out_dir, scenes, cfg.synth, stats);
  write_resolved(cfg, cfg.out_dir);
  std::cout << "wrote " << scenes.size() << " scenes to " << cfg.out_dir << " ("
            << stats.placed_objects << " objects, " << stats.placement_failures
            << " placement failures)\n";
  return 0;
}

int run_gradcheck_cmd(uint64_t seed, bool corrupt) {
  std::cout << "resolved configuration:\nseed=" << seed << "\n";
  testhooks::corrupt_sigmoid_backward = corrupt;
  const auto t0 = std::chrono::steady_clock::now();
  auto results = run_gradcheck(seed);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool all_pass = true;
  std::string first_fail;
  for (const auto& r : results) {
    std::printf("%-18s worst rel err %.3e  %s\n", r.component.c_str(), r.worst_rel_err,
                r.pass ? "ok" : "FAIL");
    if (!r.pass && first_fail.empty()) first_fail = r.component;
    all_pass = all_pass && r.pass;
  }
  std::printf("%zu components checked in %.1fs\n", results.size(), secs);
  if (!all_pass) {
    std::cout << "gradcheck FAILED: " << first_fail << "\n";
    return 1;
  }
  std::cout << "gradcheck passed\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& data,
              const std::string& out) {
  RunConfig cfg = load_run_config(config_path);
  if (!out.empty()) cfg.out_dir = out;
  echo_config(cfg);
  SplitData split = read_split(data);
  check_split_matches(cfg, split, data);
  Model model(cfg.model_config(), cfg.seed);
  std::cout << "training on " << split.scenes.size() << " scenes, "
            << model.param_count() << " parameters\n";
  TrainResult result = train_model(model, split.scenes, cfg.train_config());
  write_resolved(cfg, cfg.out_dir);
  model.params().save(cfg.out_dir + "/model.ckpt");
  write_loss_trace(cfg.out_dir + "/loss_trace.csv", result);
  if (!result.trace.empty())
    std::printf("final loss %.6f after %lld steps\n", result.trace.back().total,
                result.steps);
  std::cout << "checkpoint written to " << cfg.out_dir << "/model.ckpt\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data,
             const std::string& config_path) {
  RunConfig cfg = config_for_checkpoint(config_path, ckpt);
  echo_config(cfg);
  SplitData split = read_split(data);
  check_split_matches(cfg, split, data);
  Model model(cfg.model_config(), cfg.seed);
  model.params().load(ckpt);
  EvalResult result = evaluate_split(model, split, cfg.score_threshold, cfg.nms_iou);
  std::cout << format_report(result);
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& data,
               const std::string& out) {
  RunConfig cfg = load_run_config(config_path);
  if (!out.empty()) cfg.out_dir = out;
  echo_config(cfg);
  SplitData train_split = read_split(data + "/train");
  SplitData test_split = read_split(data + "/test");
  check_split_matches(cfg, train_split, data + "/train");
  check_split_matches(cfg, test_split, data + "/test");

  struct Variant {
    const char* name;
    bool scg, pfmg;
  };
  const Variant variants[4] = {
      {"baseline", false, false}, {"pfmg", false, true}, {"scg", true, false},
      {"full", true, true}};

  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir))
    throw std::runtime_error("cannot create output directory: " + cfg.out_dir);

  std::ofstream table(cfg.out_dir + "/ablation.csv", std::ios::binary);
  if (!table) throw std::runtime_error("cannot write ablation.csv in " + cfg.out_dir);
  table << "config,map50,params\n";
  std::cout << "config    map50   params\n";
  for (const auto& v : variants) {
    RunConfig vcfg = cfg;
    vcfg.enable_scg = v.scg;
    vcfg.enable_pfmg_gate = v.pfmg;
    vcfg.out_dir = cfg.out_dir + "/" + v.name;
    Model model(vcfg.model_config(), vcfg.seed);
    TrainResult result = train_model(model, train_split.scenes, vcfg.train_config());
    write_resolved(vcfg, vcfg.out_dir);
    model.params().save(vcfg.out_dir + "/model.ckpt");
    write_loss_trace(vcfg.out_dir + "/loss_trace.csv", result);
    EvalResult er = evaluate_split(model, test_split, vcfg.score_threshold, vcfg.nms_iou);
    char map_buf[16];
    std::snprintf(map_buf, sizeof(map_buf), "%.4f", er.map50);
    table << v.name << ',' << map_buf << ',' << model.param_count() << '\n';
    std::printf("%-9s %s  %lld\n", v.name, map_buf, model.param_count());
  }
  return 0;
}

int run_heatmap(const std::string& ckpt, const std::vector<std::string>& scene_files,
                const std::string& out, const std::string& config_path) {
  if (scene_files.size() != 2)
    throw std::runtime_error("--scene expects exactly two files: RGB.ppm IR.ppm");
  RunConfig cfg = config_for_checkpoint(config_path, ckpt);
  if (!out.empty()) cfg.out_dir = out;
  echo_config(cfg);
  Model model(cfg.model_config(), cfg.seed);
  model.params().load(ckpt);

  auto to_tensor = [](const std::string& path) {
    const ImageU8 img = read_ppm(path);
    std::vector<double> data(static_cast<size_t>(3) * img.width * img.height);
    const size_t plane = static_cast<size_t>(img.width) * img.height;
    for (size_t p = 0; p < plane; ++p)
      for (int c = 0; c < 3; ++c)
        data[static_cast<size_t>(c) * plane + p] = img.pixels[p * 3 + c] / 255.0;
    return Tensor::from_vector({1, 3, img.height, img.width}, std::move(data));
  };
  Tensor rgb = to_tensor(scene_files[0]);
  Tensor ir = to_tensor(scene_files[1]);

  const auto maps = fused_heatmaps(model, rgb, ir);
  write_resolved(cfg, cfg.out_dir);
  for (int k = 0; k < 3; ++k) {
    const std::string stem = cfg.out_dir + "/heatmap_p" + std::to_string(k + 3);
    write_heatmap_pgm(stem + ".pgm", maps[k]);
    write_heatmap_csv(stem + ".csv", maps[k]);
    std::printf("P%d: %dx%d, magnitude range [%s, %s]\n", k + 3, maps[k].w, maps[k].h,
                fmt_double(maps[k].min).c_str(), fmt_double(maps[k].max).c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PACGNet toy multimodal detection harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_dir, ckpt;
  std::vector<std::string> scene_files;
  int count = 20;
  uint64_t seed = 1;
  bool corrupt = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset split");
  synth->add_option("--config", config_path, "run configuration file");
  synth->add_option("--out", out_dir, "output split directory");
  synth->add_option("--count", count, "number of scenes");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--seed", seed, "seed for inputs and parameters");
  gradcheck->add_flag("--corrupt-backward", corrupt, "")->group("");

  auto* train = app.add_subcommand("train", "train a model on a dataset split");
  train->add_option("--config", config_path, "run configuration file");
  train->add_option("--data", data_dir, "dataset split directory")->required();
  train->add_option("--out", out_dir, "output directory");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (mAP50 report)");
  eval_cmd->add_option("--ckpt", ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", data_dir, "dataset split directory")->required();
  eval_cmd->add_option("--config", config_path, "run configuration file");

  auto* ablate = app.add_subcommand("ablate", "train the four module configurations");
  ablate->add_option("--config", config_path, "run configuration file");
  ablate->add_option("--data", data_dir, "dataset root with train/ and test/")->required();
  ablate->add_option("--out", out_dir, "output directory");

  auto* heatmap = app.add_subcommand("heatmap", "export fused-feature heatmaps");
  heatmap->add_option("--ckpt", ckpt, "checkpoint file")->required();
  heatmap->add_option("--scene", scene_files, "scene files: RGB.ppm IR.ppm")
      ->required()
      ->expected(2);
  heatmap->add_option("--out", out_dir, "output directory");
  heatmap->add_option("--config", config_path, "run configuration file");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return run_synth(config_path, out_dir, count);
    if (gradcheck->parsed()) return run_gradcheck_cmd(seed, corrupt);
    if (train->parsed()) return run_train(config_path, data_dir, out_dir);
    if (eval_cmd->parsed()) return run_eval(ckpt, data_dir, config_path);
    if (ablate->parsed()) return run_ablate(config_path, data_dir, out_dir);
    if (heatmap->parsed()) return run_heatmap(ckpt, scene_files, out_dir, config_path);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
