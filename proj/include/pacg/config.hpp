#pragma once

#include <string>

#include "pacg/model.hpp"
#include "pacg/synth.hpp"
#include "pacg/train.hpp"

namespace pacg {

// Flat key=value run configuration. Every key has a default; unknown keys are
// rejected. One seed drives synthesis, parameter init and training.
struct RunConfig {
  SynthConfig synth;  // image_size/num_classes/seed shared with the model
  std::array<int, 5> widths{8, 16, 32, 64, 128};
  bool enable_scg = true;
  bool enable_pfmg_gate = true;
  int epochs = 200;
  int batch_size = 8;
  double lr = 0.01;
  double momentum = 0.937;
  double weight_decay = 0.0005;
  double warmup_epochs = 3.0;
  double lr_final_factor = 0.01;
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  uint64_t seed = 1;
  std::string out_dir = "out";

  static RunConfig from_file(const std::string& path);  // throws on unknown keys
  static RunConfig from_text(const std::string& text);
  void set(const std::string& key, const std::string& value);
  std::string resolved() const;  // canonical key=value listing

  ModelConfig model_config() const;
  TrainConfig train_config() const;
};

}  // namespace pacg
