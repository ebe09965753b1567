#pragma once

#include <vector>

#include "pacg/eval.hpp"
#include "pacg/model.hpp"
#include "pacg/synth.hpp"

namespace pacg {

// Greedy non-maximum suppression; a candidate is dropped when its IoU with an
// already-kept box exceeds iou_thresh (strictly). Returns kept indices in
// descending-score order (ties by index).
std::vector<size_t> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                        double iou_thresh);

// Decode all head cells above score_threshold across the three fused levels,
// apply per-class NMS, return detections sorted by descending score.
// score = sigmoid(objectness) * sigmoid(best class logit).
std::vector<Detection> predict(const Model& model, const Scene& scene,
                               double score_threshold, double nms_iou = 0.5);

}  // namespace pacg
