#include "pacg/predict.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pacg {

namespace {

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<size_t> nms(const std::vector<Box>& boxes, const std::vector<double>& scores,
                        double iou_thresh) {
  if (boxes.size() != scores.size())
    throw std::invalid_argument("nms: boxes/scores size mismatch");
  std::vector<size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  std::vector<size_t> kept;
  for (size_t i : order) {
    bool suppressed = false;
    for (size_t k : kept)
      if (iou(boxes[i], boxes[k]) > iou_thresh) {
        suppressed = true;
        break;
      }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> predict(const Model& model, const Scene& scene,
                               double score_threshold, double nms_iou) {
  NoGradGuard no_grad;
  const auto heads =
      model.head_forward(model.fuse(model.backbone_forward(scene.rgb, scene.ir)));
  const int num_classes = model.config().num_classes;

  std::vector<Detection> candidates;
  for (int k = 0; k < 3; ++k) {
    const Tensor& map = heads[k];
    const Shape s = map.shape();
    const double stride = kFusedStrides[k];
    for (int i = 0; i < s.h; ++i) {
      for (int j = 0; j < s.w; ++j) {
        const double obj = sigmoid_value(map.at(0, 0, i, j));
        int best_cls = 0;
        double best_p = -1;
        for (int c = 0; c < num_classes; ++c) {
          const double p = sigmoid_value(map.at(0, 1 + c, i, j));
          if (p > best_p) {
            best_p = p;
            best_cls = c;
          }
        }
        const double score = obj * best_p;
        if (score <= score_threshold) continue;
        const double tx = map.at(0, 1 + num_classes + 0, i, j);
        const double ty = map.at(0, 1 + num_classes + 1, i, j);
        const double tw = map.at(0, 1 + num_classes + 2, i, j);
        const double th = map.at(0, 1 + num_classes + 3, i, j);
        const double cx = (j + sigmoid_value(tx)) * stride;
        const double cy = (i + sigmoid_value(ty)) * stride;
        const double bw = std::exp(std::clamp(tw, -30.0, 30.0)) * stride;
        const double bh = std::exp(std::clamp(th, -30.0, 30.0)) * stride;
        candidates.push_back(
            {best_cls, score, {cx - bw / 2, cy - bh / 2, cx + bw / 2, cy + bh / 2}});
      }
    }
  }

  std::vector<Detection> result;
  for (int cls = 0; cls < num_classes; ++cls) {
    std::vector<Box> boxes;
    std::vector<double> scores;
    std::vector<size_t> src;
    for (size_t i = 0; i < candidates.size(); ++i)
      if (candidates[i].class_id == cls) {
        boxes.push_back(candidates[i].box);
        scores.push_back(candidates[i].score);
        src.push_back(i);
      }
    for (size_t idx : nms(boxes, scores, nms_iou)) result.push_back(candidates[src[idx]]);
  }
  std::stable_sort(result.begin(), result.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return result;
}

}  // namespace pacg
