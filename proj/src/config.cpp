#include "pacg/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "pacg/text.hpp"

namespace pacg {

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("bad boolean value: '" + v + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "image_size") synth.image_size = static_cast<int>(parse_int(value));
  else if (key == "num_classes") synth.num_classes = static_cast<int>(parse_int(value));
  else if (key == "objects_min") synth.objects_min = static_cast<int>(parse_int(value));
  else if (key == "objects_max") synth.objects_max = static_cast<int>(parse_int(value));
  else if (key == "object_size_min") synth.object_size_min = parse_double(value);
  else if (key == "object_size_max") synth.object_size_max = parse_double(value);
  else if (key == "p_both") synth.p_both = parse_double(value);
  else if (key == "p_rgb_only") synth.p_rgb_only = parse_double(value);
  else if (key == "p_ir_only") synth.p_ir_only = parse_double(value);
  else if (key == "clutter") synth.clutter = parse_double(value);
  else if (key == "clutter_count") synth.clutter_count = static_cast<int>(parse_int(value));
  else if (key == "noise_sigma") synth.noise_sigma = parse_double(value);
  else if (key == "width_p1") widths[0] = static_cast<int>(parse_int(value));
  else if (key == "width_p2") widths[1] = static_cast<int>(parse_int(value));
  else if (key == "width_p3") widths[2] = static_cast<int>(parse_int(value));
  else if (key == "width_p4") widths[3] = static_cast<int>(parse_int(value));
  else if (key == "width_p5") widths[4] = static_cast<int>(parse_int(value));
  else if (key == "enable_scg") enable_scg = parse_bool(value);
  else if (key == "enable_pfmg_gate") enable_pfmg_gate = parse_bool(value);
  else if (key == "epochs") epochs = static_cast<int>(parse_int(value));
  else if (key == "batch_size") batch_size = static_cast<int>(parse_int(value));
  else if (key == "lr") lr = parse_double(value);
  else if (key == "momentum") momentum = parse_double(value);
  else if (key == "weight_decay") weight_decay = parse_double(value);
  else if (key == "warmup_epochs") warmup_epochs = parse_double(value);
  else if (key == "lr_final_factor") lr_final_factor = parse_double(value);
  else if (key == "score_threshold") score_threshold = parse_double(value);
  else if (key == "nms_iou") nms_iou = parse_double(value);
  else if (key == "seed") seed = static_cast<uint64_t>(parse_int(value));
  else if (key == "out_dir") out_dir = value;
  else throw std::invalid_argument("unknown config key: '" + key + "'");
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw std::invalid_argument("config line is not key=value: '" + line + "'");
    cfg.set(std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))));
  }
  cfg.synth.seed = cfg.seed;
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::string RunConfig::resolved() const {
  std::ostringstream out;
  out << "batch_size=" << batch_size << '\n'
      << "clutter=" << fmt_double(synth.clutter) << '\n'
      << "clutter_count=" << synth.clutter_count << '\n'
      << "enable_pfmg_gate=" << (enable_pfmg_gate ? 1 : 0) << '\n'
      << "enable_scg=" << (enable_scg ? 1 : 0) << '\n'
      << "epochs=" << epochs << '\n'
      << "image_size=" << synth.image_size << '\n'
      << "lr=" << fmt_double(lr) << '\n'
      << "lr_final_factor=" << fmt_double(lr_final_factor) << '\n'
      << "momentum=" << fmt_double(momentum) << '\n'
      << "nms_iou=" << fmt_double(nms_iou) << '\n'
      << "noise_sigma=" << fmt_double(synth.noise_sigma) << '\n'
      << "num_classes=" << synth.num_classes << '\n'
      << "object_size_max=" << fmt_double(synth.object_size_max) << '\n'
      << "object_size_min=" << fmt_double(synth.object_size_min) << '\n'
      << "objects_max=" << synth.objects_max << '\n'
      << "objects_min=" << synth.objects_min << '\n'
      << "out_dir=" << out_dir << '\n'
      << "p_both=" << fmt_double(synth.p_both) << '\n'
      << "p_ir_only=" << fmt_double(synth.p_ir_only) << '\n'
      << "p_rgb_only=" << fmt_double(synth.p_rgb_only) << '\n'
      << "score_threshold=" << fmt_double(score_threshold) << '\n'
      << "seed=" << seed << '\n'
      << "warmup_epochs=" << fmt_double(warmup_epochs) << '\n'
      << "weight_decay=" << fmt_double(weight_decay) << '\n'
      << "width_p1=" << widths[0] << '\n'
      << "width_p2=" << widths[1] << '\n'
      << "width_p3=" << widths[2] << '\n'
      << "width_p4=" << widths[3] << '\n'
      << "width_p5=" << widths[4] << '\n';
  return out.str();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig mc;
  mc.image_size = synth.image_size;
  mc.widths = widths;
  mc.num_classes = synth.num_classes;
  mc.enable_scg = enable_scg;
  mc.enable_pfmg = enable_pfmg_gate;
  return mc;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch_size;
  tc.lr = lr;
  tc.momentum = momentum;
  tc.weight_decay = weight_decay;
  tc.warmup_epochs = warmup_epochs;
  tc.lr_final_factor = lr_final_factor;
  tc.seed = seed;
  return tc;
}

}  // namespace pacg
