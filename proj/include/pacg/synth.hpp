#pragma once

#include <map>
#include <string>
#include <vector>

#include "pacg/tensor.hpp"

namespace pacg {

// Ground truth in pixels, center/size form, axis-aligned.
struct GtBoxPx {
  int class_id = 0;
  double cx = 0, cy = 0, w = 0, h = 0;
};

struct Scene {
  Tensor rgb;  // (1,3,S,S), values in [0,1]
  Tensor ir;
  std::vector<GtBoxPx> boxes;
};

// Complementary-visibility scene generator: every object is drawn into the
// RGB image, the IR image, or both, so single-modality models are blind to a
// slice of the ground truth. Clutter rectangles and noise are sampled
// independently per modality.
struct SynthConfig {
  int image_size = 64;
  int num_classes = 2;
  int objects_min = 2, objects_max = 4;
  double object_size_min = 8, object_size_max = 20;  // pixels, >= 4
  double p_both = 0.34, p_rgb_only = 0.33, p_ir_only = 0.33;
  double clutter = 0.15;  // clutter rectangle amplitude
  int clutter_count = 6;  // rectangles per modality
  double noise_sigma = 0.02;
  uint64_t seed = 1;

  void validate() const;
};

struct SynthStats {
  long long requested_objects = 0;
  long long placed_objects = 0;
  long long placement_failures = 0;
};

// class_id -> rendered intensity for one modality (opposed ramps, so the
// class is identified by the RGB/IR intensity pair)
double class_intensity(int class_id, int num_classes, bool ir);
inline constexpr double kBackgroundLevel = 0.2;

std::vector<Scene> synth_generate(const SynthConfig& cfg, int count,
                                  SynthStats* stats = nullptr);

// On-disk split: per scene NNNN_rgb.ppm / NNNN_ir.ppm / NNNN.txt, plus a
// key=value meta.txt.
void write_split(const std::string& dir, const std::vector<Scene>& scenes,
                 const SynthConfig& cfg, const SynthStats& stats);

struct SplitData {
  std::vector<Scene> scenes;
  std::map<std::string, std::string> meta;
  int num_classes = 0;
  int image_size = 0;
};

SplitData read_split(const std::string& dir);

}  // namespace pacg
