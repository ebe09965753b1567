#include "pacg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace pacg {

double iou(const Box& a, const Box& b) {
  const double aw = a.x2 - a.x1, ah = a.y2 - a.y1;
  const double bw = b.x2 - b.x1, bh = b.y2 - b.y1;
  if (aw <= 0 || ah <= 0 || bw <= 0 || bh <= 0)
    throw std::invalid_argument("iou: degenerate box");
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double uni = aw * ah + bw * bh - inter;
  return inter / uni;
}

PrCurve average_precision(const std::vector<std::vector<Detection>>& dets_per_image,
                          const std::vector<std::vector<GtBox>>& gts_per_image,
                          int class_id, double iou_thresh) {
  if (dets_per_image.size() != gts_per_image.size())
    throw std::invalid_argument("average_precision: image count mismatch");

  PrCurve curve;
  std::vector<std::vector<bool>> gt_used(gts_per_image.size());
  for (size_t img = 0; img < gts_per_image.size(); ++img) {
    gt_used[img].assign(gts_per_image[img].size(), false);
    for (const auto& g : gts_per_image[img])
      if (g.class_id == class_id) curve.num_gt++;
  }
  if (curve.num_gt == 0)
    throw std::invalid_argument("average_precision: class " + std::to_string(class_id) +
                                " has no ground truth");

  struct Ref {
    double score;
    size_t img, idx;
  };
  std::vector<Ref> all;
  for (size_t img = 0; img < dets_per_image.size(); ++img)
    for (size_t i = 0; i < dets_per_image[img].size(); ++i) {
      const auto& d = dets_per_image[img][i];
      if (d.class_id == class_id) {
        if (!std::isfinite(d.score))
          throw std::invalid_argument("average_precision: non-finite score");
        all.push_back({d.score, img, i});
      }
    }
  std::stable_sort(all.begin(), all.end(),
                   [](const Ref& a, const Ref& b) { return a.score > b.score; });

  long long tp = 0, fp = 0;
  for (const auto& ref : all) {
    const auto& det = dets_per_image[ref.img][ref.idx];
    const auto& gts = gts_per_image[ref.img];
    int best = -1;
    double best_iou = 0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].class_id != class_id || gt_used[ref.img][g]) continue;
      const double v = iou(det.box, gts[g].box);
      if (v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_thresh) {
      gt_used[ref.img][static_cast<size_t>(best)] = true;
      tp++;
    } else {
      fp++;
    }
    curve.points.push_back({static_cast<double>(tp) / static_cast<double>(curve.num_gt),
                            static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }

  // area under the monotone precision envelope over recall
  double env = 0, ap = 0, prev_recall = 0;
  std::vector<double> envelope(curve.points.size());
  for (size_t i = curve.points.size(); i-- > 0;) {
    env = std::max(env, curve.points[i].precision);
    envelope[i] = env;
  }
  for (size_t i = 0; i < curve.points.size(); ++i) {
    ap += (curve.points[i].recall - prev_recall) * envelope[i];
    prev_recall = curve.points[i].recall;
  }
  curve.ap = ap;
  return curve;
}

EvalResult evaluate_detections(const std::vector<std::vector<Detection>>& dets_per_image,
                               const std::vector<std::vector<GtBox>>& gts_per_image,
                               int num_classes, double iou_thresh) {
  EvalResult r;
  double total = 0;
  int counted = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    long long n_gt = 0;
    for (const auto& gts : gts_per_image)
      for (const auto& g : gts)
        if (g.class_id == cls) n_gt++;
    if (n_gt == 0) {
      r.per_class.push_back({cls, 0, 0});
      continue;
    }
    PrCurve c = average_precision(dets_per_image, gts_per_image, cls, iou_thresh);
    r.per_class.push_back({cls, c.num_gt, c.ap});
    total += c.ap;
    counted++;
  }
  if (counted == 0)
    throw std::invalid_argument("evaluate_detections: no class has any ground truth");
  r.map50 = total / counted;
  return r;
}

std::string format_report(const EvalResult& r) {
  std::string out;
  char buf[96];
  for (const auto& c : r.per_class) {
    if (c.num_gt == 0) {
      std::snprintf(buf, sizeof(buf), "class %d ap50 undefined (no ground truth)\n",
                    c.class_id);
    } else {
      std::snprintf(buf, sizeof(buf), "class %d ap50 %.4f\n", c.class_id, c.ap);
    }
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "map50 %.4f\n", r.map50);
  out += buf;
  return out;
}

}  // namespace pacg
