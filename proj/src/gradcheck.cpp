#include "pacg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "pacg/model.hpp"
#include "pacg/rng.hpp"
#include "pacg/train.hpp"

namespace pacg {

namespace {

Tensor random_tensor(Rng& rng, const Shape& s, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
  std::vector<double> v(static_cast<size_t>(s.numel()));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_vector(s, std::move(v), requires_grad);
}

// fixed random projection so the checked scalar depends on every output
Tensor to_scalar(Rng& rng, const Tensor& out) {
  return sum(mul(out, random_tensor(rng, out.shape(), -1.0, 1.0, false)));
}

struct Component {
  std::string name;
  std::vector<Tensor> leaves;       // perturbed and differentiated
  std::function<Tensor()> forward;  // closes over leaves, returns (1,1,1,1)
  size_t max_coords = 0;            // 0 = exhaustive
};

double check_component(Component& comp, double step, uint64_t seed) {
  for (auto& leaf : comp.leaves) leaf.zero_grad();
  backward(comp.forward());
  std::vector<std::vector<double>> analytic;
  analytic.reserve(comp.leaves.size());
  for (const auto& leaf : comp.leaves) analytic.push_back(leaf.grad());

  std::vector<std::pair<size_t, size_t>> coords;
  size_t total = 0;
  for (const auto& leaf : comp.leaves) total += static_cast<size_t>(leaf.numel());
  if (comp.max_coords == 0 || comp.max_coords >= total) {
    for (size_t li = 0; li < comp.leaves.size(); ++li)
      for (size_t i = 0; i < static_cast<size_t>(comp.leaves[li].numel()); ++i)
        coords.emplace_back(li, i);
  } else {
    Rng rng(hash_name(seed, comp.name + ".coords"));
    std::set<std::pair<size_t, size_t>> chosen;
    while (chosen.size() < comp.max_coords) {
      size_t flat = rng.next_u64() % total;
      for (size_t li = 0; li < comp.leaves.size(); ++li) {
        const size_t n = static_cast<size_t>(comp.leaves[li].numel());
        if (flat < n) {
          chosen.emplace(li, flat);
          break;
        }
        flat -= n;
      }
    }
    coords.assign(chosen.begin(), chosen.end());
  }

  double worst = 0;
  NoGradGuard no_grad;
  for (const auto& [li, i] : coords) {
    auto& values = comp.leaves[li].mutable_values();
    const double orig = values[i];
    values[i] = orig + step;
    const double f_plus = comp.forward().item();
    values[i] = orig - step;
    const double f_minus = comp.forward().item();
    values[i] = orig;
    const double fd = (f_plus - f_minus) / (2 * step);
    const double a = analytic[li][i];
    // the 1e-6 floor keeps f(x+h)-f(x-h) roundoff from dominating when the
    // true gradient is near zero
    const double rel =
        std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

// keep values away from the kinks of min/max/relu so central differences stay valid
void nudge_away(std::vector<double>& v, double margin) {
  for (auto& x : v)
    if (std::abs(x) < margin) x = x < 0 ? -margin : margin;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(uint64_t seed, double tolerance, double step) {
  std::vector<GradCheckResult> results;
  Rng master(seed);

  auto run = [&](Component comp) {
    const double worst = check_component(comp, step, seed);
    results.push_back({comp.name, worst, worst < tolerance});
  };

  {
    Rng rng(hash_name(seed, "conv1x1"));
    ConvSpec spec{3, 4, 1, 1, 0, 1};
    Component c;
    c.name = "conv1x1";
    c.leaves = {random_tensor(rng, {2, 3, 5, 4}), random_tensor(rng, {4, 3, 1, 1}),
                random_tensor(rng, {1, 4, 1, 1})};
    Rng proj(hash_name(seed, "conv1x1.proj"));
    c.forward = [leaves = c.leaves, spec, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, conv2d(leaves[0], leaves[1], leaves[2], spec));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "conv3x3_s2"));
    ConvSpec spec{3, 4, 3, 2, 1, 1};
    Component c;
    c.name = "conv3x3_s2";
    c.leaves = {random_tensor(rng, {1, 3, 9, 7}), random_tensor(rng, {4, 3, 3, 3}),
                random_tensor(rng, {1, 4, 1, 1})};
    Rng proj(hash_name(seed, "conv3x3_s2.proj"));
    c.forward = [leaves = c.leaves, spec, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, conv2d(leaves[0], leaves[1], leaves[2], spec));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "conv_depthwise"));
    ConvSpec spec{4, 4, 3, 1, 1, 4};
    Component c;
    c.name = "conv_depthwise";
    c.leaves = {random_tensor(rng, {1, 4, 6, 6}), random_tensor(rng, {4, 1, 3, 3}),
                random_tensor(rng, {1, 4, 1, 1})};
    Rng proj(hash_name(seed, "conv_depthwise.proj"));
    c.forward = [leaves = c.leaves, spec, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, conv2d(leaves[0], leaves[1], leaves[2], spec));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "activations"));
    Component c;
    c.name = "activations";
    c.leaves = {random_tensor(rng, {1, 3, 4, 4}, -3.0, 3.0)};
    Rng proj(hash_name(seed, "activations.proj"));
    c.forward = [leaves = c.leaves, proj]() mutable {
      Rng p = proj;
      Tensor y = add(silu(leaves[0]), sigmoid(affine(leaves[0], 0.7, 0.1)));
      return to_scalar(p, add(y, clamped_exp(affine(leaves[0], 0.3, 0.0))));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "mul_broadcast"));
    Component c;
    c.name = "mul_broadcast";
    c.leaves = {random_tensor(rng, {2, 4, 3, 5}), random_tensor(rng, {2, 1, 3, 5}),
                random_tensor(rng, {2, 4, 1, 1})};
    Rng proj(hash_name(seed, "mul_broadcast.proj"));
    c.forward = [leaves = c.leaves, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, mul(mul(leaves[0], leaves[1]), leaves[2]));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "softmax_channels"));
    Component c;
    c.name = "softmax_channels";
    c.leaves = {random_tensor(rng, {1, 5, 3, 3}, -2.0, 2.0)};
    Rng proj(hash_name(seed, "softmax_channels.proj"));
    c.forward = [leaves = c.leaves, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, softmax_channels(leaves[0]));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "concat_split"));
    Component c;
    c.name = "concat_split";
    c.leaves = {random_tensor(rng, {1, 2, 4, 4}), random_tensor(rng, {1, 3, 4, 4})};
    Rng proj(hash_name(seed, "concat_split.proj"));
    c.forward = [leaves = c.leaves, proj]() mutable {
      Rng p = proj;
      auto parts = split_channels(concat_channels({leaves[0], leaves[1]}), {3, 2});
      return add(to_scalar(p, parts[0]), to_scalar(p, parts[1]));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "instance_norm"));
    Component c;
    c.name = "instance_norm";
    c.leaves = {random_tensor(rng, {2, 3, 4, 4}), random_tensor(rng, {1, 3, 1, 1}, 0.5, 1.5),
                random_tensor(rng, {1, 3, 1, 1})};
    Rng proj(hash_name(seed, "instance_norm.proj"));
    c.forward = [leaves = c.leaves, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, instance_norm(leaves[0], leaves[1], leaves[2]));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "bce_with_logits"));
    Component c;
    c.name = "bce_with_logits";
    c.leaves = {random_tensor(rng, {1, 4, 3, 3}, -2.0, 2.0)};
    Tensor targets = random_tensor(rng, {1, 4, 3, 3}, 0.0, 1.0, false);
    Rng proj(hash_name(seed, "bce_with_logits.proj"));
    c.forward = [leaves = c.leaves, targets, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, bce_with_logits(leaves[0], targets));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "minmax_relu_div"));
    Component c;
    c.name = "minmax_relu_div";
    Tensor a = random_tensor(rng, {1, 2, 4, 4}, -2.0, 2.0);
    Tensor b = random_tensor(rng, {1, 2, 4, 4}, -2.0, 2.0);
    // keep |a-b| and |a| away from the non-differentiable points
    for (size_t i = 0; i < a.mutable_values().size(); ++i) {
      double& av = a.mutable_values()[i];
      double& bv = b.mutable_values()[i];
      if (std::abs(av - bv) < 0.05) bv += (bv >= av ? 0.1 : -0.1);
    }
    nudge_away(a.mutable_values(), 0.05);
    c.leaves = {a, b};
    Rng proj(hash_name(seed, "minmax_relu_div.proj"));
    c.forward = [leaves = c.leaves, proj]() mutable {
      Rng p = proj;
      Tensor lo = minimum(leaves[0], leaves[1]);
      Tensor hi = maximum(leaves[0], leaves[1]);
      Tensor r = relu(leaves[0]);
      return to_scalar(p, add(div(lo, affine(hi, 0.0, 3.0)), r));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "ds_bottleneck"));
    Component c;
    c.name = "ds_bottleneck";
    auto block = DsBottleneck::make("gc.ds", 4);
    auto ps = std::make_shared<ParameterSet>();
    block.init(*ps, seed);
    c.leaves.push_back(random_tensor(rng, {1, 4, 5, 5}));
    for (auto& [name, t] : *ps) c.leaves.push_back(t);
    Rng proj(hash_name(seed, "ds_bottleneck.proj"));
    c.forward = [input = c.leaves[0], block, ps, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, block.forward(*ps, input));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "scg"));
    Component c;
    c.name = "scg";
    auto module = ScgModule::make("gc.scg", 4);
    auto ps = std::make_shared<ParameterSet>();
    module.init(*ps, seed);
    Tensor rgb = random_tensor(rng, {1, 4, 6, 6});
    Tensor ir = random_tensor(rng, {1, 4, 6, 6});
    c.leaves = {rgb, ir};
    for (auto& [name, t] : *ps) c.leaves.push_back(t);
    Rng proj(hash_name(seed, "scg.proj"));
    c.forward = [rgb, ir, module, ps, proj]() mutable {
      Rng p = proj;
      auto [a, b] = module.forward(*ps, rgb, ir);
      return add(to_scalar(p, a), to_scalar(p, b));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "pfmg"));
    Component c;
    c.name = "pfmg";
    auto module = PfmgModule::make("gc.pfmg", 4, 4);
    auto ps = std::make_shared<ParameterSet>();
    module.init(*ps, seed);
    Tensor cr = random_tensor(rng, {1, 4, 4, 4});
    Tensor ci = random_tensor(rng, {1, 4, 4, 4});
    Tensor pr = random_tensor(rng, {1, 4, 8, 8});
    Tensor pi = random_tensor(rng, {1, 4, 8, 8});
    c.leaves = {cr, ci, pr, pi};
    for (auto& [name, t] : *ps) c.leaves.push_back(t);
    Rng proj(hash_name(seed, "pfmg.proj"));
    c.forward = [cr, ci, pr, pi, module, ps, proj]() mutable {
      Rng p = proj;
      return to_scalar(p, module.forward(*ps, cr, ci, pr, pi));
    };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "detection_loss"));
    Component c;
    c.name = "detection_loss";
    ModelConfig mc;
    mc.image_size = 32;
    mc.widths = {4, 4, 6, 6, 8};
    mc.num_classes = 2;
    auto model = std::make_shared<Model>(mc, seed);
    auto scene = std::make_shared<Scene>();
    scene->rgb = random_tensor(rng, {1, 3, 32, 32}, 0.0, 1.0);
    scene->ir = random_tensor(rng, {1, 3, 32, 32}, 0.0, 1.0);
    scene->boxes = {{0, 10.0, 12.0, 9.0, 8.0}, {1, 24.0, 20.0, 17.0, 18.0}};
    c.leaves = {scene->rgb, scene->ir};
    for (auto& [name, t] : model->params()) c.leaves.push_back(t);
    c.max_coords = 220;
    c.forward = [model, scene]() { return scene_loss(*model, *scene).total; };
    run(std::move(c));
  }
  {
    Rng rng(hash_name(seed, "end_to_end"));
    Component c;
    c.name = "end_to_end";
    ModelConfig mc;
    mc.image_size = 32;
    mc.widths = {4, 4, 6, 6, 8};
    mc.num_classes = 2;
    auto model = std::make_shared<Model>(mc, seed);
    Tensor rgb = random_tensor(rng, {1, 3, 32, 32}, 0.0, 1.0);
    Tensor ir = random_tensor(rng, {1, 3, 32, 32}, 0.0, 1.0);
    c.leaves = {rgb, ir};
    for (auto& [name, t] : model->params()) c.leaves.push_back(t);
    c.max_coords = 300;
    Rng proj(hash_name(seed, "end_to_end.proj"));
    c.forward = [rgb, ir, model, proj]() mutable {
      Rng p = proj;
      auto heads = model->head_forward(model->fuse(model->backbone_forward(rgb, ir)));
      Tensor loss = to_scalar(p, heads[0]);
      loss = add(loss, to_scalar(p, heads[1]));
      return add(loss, to_scalar(p, heads[2]));
    };
    run(std::move(c));
  }

  (void)master;
  return results;
}

}  // namespace pacg
