#pragma once

#include <string>
#include <vector>

namespace pacg {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// intersection over union; rejects zero-area boxes
double iou(const Box& a, const Box& b);

struct Detection {
  int class_id = 0;
  double score = 0;  // in [0,1]
  Box box;
};

struct GtBox {
  int class_id = 0;
  Box box;
};

struct PrPoint {
  double recall = 0, precision = 0;
};

// One point per detection, in descending-score order (ties by insertion
// order); ap is the area under the monotone precision envelope.
struct PrCurve {
  std::vector<PrPoint> points;
  double ap = 0;
  long long num_gt = 0;
};

PrCurve average_precision(const std::vector<std::vector<Detection>>& dets_per_image,
                          const std::vector<std::vector<GtBox>>& gts_per_image,
                          int class_id, double iou_thresh = 0.5);

struct ClassAp {
  int class_id = 0;
  long long num_gt = 0;
  double ap = 0;  // meaningless when num_gt == 0 (excluded from the mean)
};

struct EvalResult {
  std::vector<ClassAp> per_class;
  double map50 = 0;
};

// Mean AP over classes with at least one ground-truth box; rejects inputs
// where no class has any.
EvalResult evaluate_detections(const std::vector<std::vector<Detection>>& dets_per_image,
                               const std::vector<std::vector<GtBox>>& gts_per_image,
                               int num_classes, double iou_thresh = 0.5);

// "class <id> ap50 <value>" per class, then "map50 <value>", 4 decimals.
std::string format_report(const EvalResult& r);

}  // namespace pacg
