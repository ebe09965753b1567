#include "pacg/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "pacg/rng.hpp"

namespace pacg {

std::vector<CellAssignment> assign_targets(const std::vector<GtBoxPx>& boxes,
                                           int image_size) {
  std::vector<CellAssignment> out;
  for (const auto& b : boxes) {
    const double max_side = std::max(b.w, b.h);
    bool any = false;
    for (int k = 0; k < 3; ++k) {
      const int stride = kFusedStrides[k];
      if (max_side >= stride && max_side < 4.0 * stride) {
        any = true;
        const int grid = image_size / stride;
        const int cy = std::clamp(static_cast<int>(b.cy / stride), 0, grid - 1);
        const int cx = std::clamp(static_cast<int>(b.cx / stride), 0, grid - 1);
        out.push_back({k, cy, cx, b.class_id, b});
      }
    }
    if (!any) {
      const int k = max_side < kFusedStrides[0] ? 0 : 2;
      const int stride = kFusedStrides[k];
      const int grid = image_size / stride;
      const int cy = std::clamp(static_cast<int>(b.cy / stride), 0, grid - 1);
      const int cx = std::clamp(static_cast<int>(b.cx / stride), 0, grid - 1);
      out.push_back({k, cy, cx, b.class_id, b});
    }
  }
  return out;
}

namespace {

// differentiable 1 - IoU between the decoded cell box and a fixed gt box
Tensor box_iou_loss(const Tensor& tx, const Tensor& ty, const Tensor& tw, const Tensor& th,
                    int cell_x, int cell_y, double stride, const GtBoxPx& gt) {
  Tensor cx = affine(sigmoid(tx), stride, cell_x * stride);
  Tensor cy = affine(sigmoid(ty), stride, cell_y * stride);
  Tensor bw = affine(clamped_exp(tw), stride, 0.0);
  Tensor bh = affine(clamped_exp(th), stride, 0.0);
  Tensor half_w = affine(bw, 0.5, 0.0);
  Tensor half_h = affine(bh, 0.5, 0.0);
  Tensor x1 = sub(cx, half_w), x2 = add(cx, half_w);
  Tensor y1 = sub(cy, half_h), y2 = add(cy, half_h);

  const double gx1 = gt.cx - gt.w / 2, gx2 = gt.cx + gt.w / 2;
  const double gy1 = gt.cy - gt.h / 2, gy2 = gt.cy + gt.h / 2;
  Tensor iw = relu(sub(minimum(x2, Tensor::scalar(gx2)), maximum(x1, Tensor::scalar(gx1))));
  Tensor ih = relu(sub(minimum(y2, Tensor::scalar(gy2)), maximum(y1, Tensor::scalar(gy1))));
  Tensor inter = mul(iw, ih);
  Tensor uni = sub(add(mul(bw, bh), Tensor::scalar(gt.w * gt.h)), inter);
  return affine(div(inter, uni), -1.0, 1.0);
}

}  // namespace

SceneLoss scene_loss(const Model& model, const Scene& scene) {
  const ModelConfig& cfg = model.config();
  const int K = cfg.num_classes;
  const int S = scene.rgb.shape().h;
  const auto heads =
      model.head_forward(model.fuse(model.backbone_forward(scene.rgb, scene.ir)));
  const auto assignments = assign_targets(scene.boxes, S);

  // objectness targets per level
  std::array<std::vector<double>, 3> obj_targets;
  long long total_cells = 0;
  for (int k = 0; k < 3; ++k) {
    const Shape s = heads[k].shape();
    obj_targets[k].assign(static_cast<size_t>(s.h) * s.w, 0.0);
    total_cells += static_cast<long long>(s.h) * s.w;
  }
  for (const auto& a : assignments) {
    const Shape s = heads[a.level].shape();
    obj_targets[a.level][static_cast<size_t>(a.cell_y) * s.w + a.cell_x] = 1.0;
  }

  SceneLoss out;
  Tensor obj_sum, cls_sum, box_sum;
  for (int k = 0; k < 3; ++k) {
    const Shape s = heads[k].shape();
    auto parts = split_channels(heads[k], {1, K, 4});
    Tensor target = Tensor::from_vector({1, 1, s.h, s.w}, obj_targets[k]);
    Tensor term = sum(bce_with_logits(parts[0], target));
    obj_sum = obj_sum.defined() ? add(obj_sum, term) : term;

    for (const auto& a : assignments) {
      if (a.level != k) continue;
      Tensor cls_cell = slice_cell(parts[1], 0, a.cell_y, a.cell_x);
      std::vector<double> one_hot(static_cast<size_t>(K), 0.0);
      one_hot[static_cast<size_t>(a.class_id)] = 1.0;
      Tensor cls_term =
          sum(bce_with_logits(cls_cell, Tensor::from_vector({1, K, 1, 1}, one_hot)));
      cls_sum = cls_sum.defined() ? add(cls_sum, cls_term) : cls_term;

      Tensor box_cell = slice_cell(parts[2], 0, a.cell_y, a.cell_x);
      auto t = split_channels(box_cell, {1, 1, 1, 1});
      Tensor box_term = box_iou_loss(t[0], t[1], t[2], t[3], a.cell_x, a.cell_y,
                                     kFusedStrides[k], a.box);
      box_sum = box_sum.defined() ? add(box_sum, box_term) : box_term;
    }
  }

  out.positives = static_cast<int>(assignments.size());
  out.objectness = affine(obj_sum, 1.0 / static_cast<double>(total_cells), 0.0);
  const double inv_pos = out.positives > 0 ? 1.0 / out.positives : 0.0;
  out.classification =
      cls_sum.defined() ? affine(cls_sum, inv_pos, 0.0) : Tensor::scalar(0.0);
  out.box = box_sum.defined() ? affine(box_sum, inv_pos, 0.0) : Tensor::scalar(0.0);
  Tensor total = add(out.objectness, out.classification);
  out.total = add(total, out.box);
  return out;
}

TrainResult train_model(Model& model, const std::vector<Scene>& scenes,
                        const TrainConfig& cfg) {
  if (scenes.empty()) throw std::invalid_argument("train: dataset is empty");
  if (cfg.epochs < 0 || cfg.batch_size < 1)
    throw std::invalid_argument("train: bad epochs/batch_size");

  ParameterSet& ps = model.params();
  std::map<std::string, std::vector<double>> velocity;
  for (const auto& [name, t] : ps)
    velocity[name].assign(static_cast<size_t>(t.numel()), 0.0);

  Rng shuffle_rng(hash_name(cfg.seed, "train.shuffle"));
  std::vector<size_t> order(scenes.size());
  std::iota(order.begin(), order.end(), 0);

  const long long steps_per_epoch =
      (static_cast<long long>(scenes.size()) + cfg.batch_size - 1) / cfg.batch_size;
  const double warmup_steps = cfg.warmup_epochs * static_cast<double>(steps_per_epoch);

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);

    // linear decay of the post-warmup lr from lr0 to lr0*lrf
    const double decay = cfg.epochs > 1
                             ? 1.0 - (1.0 - cfg.lr_final_factor) * epoch / (cfg.epochs - 1)
                             : 1.0;

    EpochLoss epoch_loss;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      double lr = cfg.lr * decay;
      double mom = cfg.momentum;
      if (warmup_steps > 0 && static_cast<double>(result.steps) < warmup_steps) {
        const double f = (result.steps + 1) / warmup_steps;
        lr = cfg.lr * f;
        mom = 0.8 + (cfg.momentum - 0.8) * f;
      }
      ps.zero_grad();
      for (size_t bi = start; bi < end; ++bi) {
        SceneLoss loss = scene_loss(model, scenes[order[bi]]);
        const double total = loss.total.item();
        if (!std::isfinite(total)) throw DivergenceError(result.steps);
        epoch_loss.total += total;
        epoch_loss.objectness += loss.objectness.item();
        epoch_loss.classification += loss.classification.item();
        epoch_loss.box += loss.box.item();
        backward(loss.total);
      }
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      for (auto& [name, t] : ps) {
        auto& v = t.mutable_values();
        const auto& g = t.grad();
        auto& vel = velocity[name];
        for (size_t i = 0; i < v.size(); ++i) {
          vel[i] = mom * vel[i] + (g[i] * inv_batch + cfg.weight_decay * v[i]);
          v[i] -= lr * vel[i];
        }
      }
      result.steps++;
    }
    const double inv_n = 1.0 / static_cast<double>(scenes.size());
    epoch_loss.total *= inv_n;
    epoch_loss.objectness *= inv_n;
    epoch_loss.classification *= inv_n;
    epoch_loss.box *= inv_n;
    result.trace.push_back(epoch_loss);
  }
  return result;
}

}  // namespace pacg
