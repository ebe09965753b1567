#pragma once

#include <stdexcept>
#include <vector>

#include "pacg/model.hpp"
#include "pacg/synth.hpp"

namespace pacg {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 8;
  double lr = 0.01;  // lr0; decays linearly to lr*lr_final_factor
  double momentum = 0.937;
  double weight_decay = 0.0005;
  double warmup_epochs = 3.0;     // linear lr/momentum ramp, momentum from 0.8
  double lr_final_factor = 0.01;  // lrf
  uint64_t seed = 1;
};

struct EpochLoss {
  double total = 0, objectness = 0, classification = 0, box = 0;
};

struct TrainResult {
  std::vector<EpochLoss> trace;  // one entry per epoch, mean over scenes
  long long steps = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(long long step)
      : std::runtime_error("training diverged (non-finite loss) at step " +
                           std::to_string(step)),
        step(step) {}
  long long step;
};

// One ground-truth box pinned to the grid cell holding its center, at every
// level whose stride brackets the object size (stride <= max side < 4*stride;
// out-of-range sizes clamp to the nearest level).
struct CellAssignment {
  int level = 0;  // 0..2 -> P3..P5
  int cell_y = 0, cell_x = 0;
  int class_id = 0;
  GtBoxPx box;
};
std::vector<CellAssignment> assign_targets(const std::vector<GtBoxPx>& boxes,
                                           int image_size);

// BCE(objectness over all cells) + BCE(class at positive cells)
// + (1 - IoU(decoded box, ground truth)) at positive cells.
struct SceneLoss {
  Tensor total, objectness, classification, box;
  int positives = 0;
};
SceneLoss scene_loss(const Model& model, const Scene& scene);

// SGD with momentum and weight decay:
//   v = momentum*v + (grad/batch + wd*p); p -= lr*v
// lr and momentum ramp linearly over the warmup epochs (momentum starting at
// 0.8), then lr decays linearly to lr*lr_final_factor at the last epoch.
TrainResult train_model(Model& model, const std::vector<Scene>& scenes,
                        const TrainConfig& cfg);

}  // namespace pacg
