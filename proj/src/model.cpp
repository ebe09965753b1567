#include "pacg/model.hpp"

#include <stdexcept>
#include <string>

namespace pacg {

void ModelConfig::validate() const {
  if (image_size < 32 || image_size % 32 != 0)
    throw std::invalid_argument("image_size must be a positive multiple of 32, got " +
                                std::to_string(image_size));
  for (int w : widths)
    if (w < 2 || w % 2 != 0)
      throw std::invalid_argument("pyramid widths must be even and >= 2, got " +
                                  std::to_string(w));
  if (num_classes < 1)
    throw std::invalid_argument("num_classes must be >= 1, got " +
                                std::to_string(num_classes));
}

Model::Model(const ModelConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::array<std::string, 2> stream_name{"rgb", "ir"};
  for (int s = 0; s < 2; ++s) {
    int in_c = 3;
    for (int li = 0; li < 5; ++li) {
      const int out_c = cfg_.widths[li];
      const std::string prefix =
          "backbone." + stream_name[s] + ".s" + std::to_string(li + 1);
      stages_[s][li].stem = {prefix + ".stem", ConvSpec{in_c, out_c, 3, 2, 1, 1}};
      stages_[s][li].norm = {prefix + ".norm", out_c};
      stages_[s][li].block = DsBottleneck::make(prefix + ".block", out_c);
      in_c = out_c;
    }
  }
  if (cfg_.enable_scg) {
    scg_.emplace();
    for (int k = 0; k < 3; ++k)
      (*scg_)[k] = ScgModule::make("scg.p" + std::to_string(k + 2), cfg_.widths[k + 1]);
  }
  if (cfg_.enable_pfmg) {
    pfmg_.emplace();
    for (int k = 0; k < 3; ++k)
      (*pfmg_)[k] = PfmgModule::make("pfmg.p" + std::to_string(k + 3), cfg_.widths[k + 2],
                                     cfg_.widths[k + 1]);
  }
  for (int k = 0; k < 3; ++k)
    head_[k] = {"head.p" + std::to_string(k + 3),
                ConvSpec{cfg_.widths[k + 2], cfg_.head_channels(), 1, 1, 0, 1}};

  for (int s = 0; s < 2; ++s)
    for (int li = 0; li < 5; ++li) {
      stages_[s][li].stem.init(params_, seed);
      stages_[s][li].norm.init(params_);
      stages_[s][li].block.init(params_, seed);
    }
  if (scg_)
    for (const auto& m : *scg_) m.init(params_, seed);
  if (pfmg_)
    for (const auto& m : *pfmg_) m.init(params_, seed);
  for (const auto& h : head_) h.init(params_, seed);
}

const std::array<ScgModule, 3>& Model::scg_modules() const {
  if (!scg_) throw std::logic_error("scg modules are disabled in this configuration");
  return *scg_;
}

const std::array<PfmgModule, 3>& Model::pfmg_modules() const {
  if (!pfmg_) throw std::logic_error("pfmg modules are disabled in this configuration");
  return *pfmg_;
}

void Model::check_image(const Tensor& img) const {
  const Shape s = img.shape();
  if (s.c != 3 || s.h != s.w || s.h % 32 != 0)
    throw std::invalid_argument(
        "backbone input must be (N,3,S,S) with S divisible by 32, got " + s.str());
}

std::array<Tensor, 4> Model::stream_forward(int stream, const Tensor& img) const {
  check_image(img);
  std::array<Tensor, 4> levels;
  Tensor x = img;
  for (int li = 0; li < 5; ++li) {
    const Stage& st = stages_[stream][li];
    x = st.block.forward(params_, silu(st.norm.forward(params_, st.stem.forward(params_, x))));
    if (li >= 1) levels[li - 1] = x;
  }
  return levels;
}

DualPyramid Model::backbone_forward(const Tensor& rgb_img, const Tensor& ir_img) const {
  check_image(rgb_img);
  check_image(ir_img);
  if (rgb_img.shape() != ir_img.shape())
    throw std::invalid_argument("backbone inputs differ: " + rgb_img.shape().str() +
                                " vs " + ir_img.shape().str());
  DualPyramid dp;
  Tensor r = rgb_img, i = ir_img;
  for (int li = 0; li < 5; ++li) {
    const Stage& sr = stages_[0][li];
    const Stage& si = stages_[1][li];
    r = sr.block.forward(params_, silu(sr.norm.forward(params_, sr.stem.forward(params_, r))));
    i = si.block.forward(params_, silu(si.norm.forward(params_, si.stem.forward(params_, i))));
    // cross-gating after the P2, P3 and P4 stages; the exchanged pair is both
    // the level's pyramid tap and the next stage's input
    if (scg_ && li >= 1 && li <= 3) std::tie(r, i) = (*scg_)[li - 1].forward(params_, r, i);
    if (li >= 1) {
      dp.rgb[li - 1] = r;
      dp.ir[li - 1] = i;
    }
  }
  return dp;
}

FusedPyramid Model::fuse(const DualPyramid& dp, std::array<PfmgTrace, 3>* traces) const {
  FusedPyramid fp;
  for (int k = 0; k < 3; ++k) {
    // fused level P(3+k): current pair at dp index k+1, guidance pair at k
    if (pfmg_) {
      fp.levels[k] = (*pfmg_)[k].forward(params_, dp.rgb[k + 1], dp.ir[k + 1], dp.rgb[k],
                                         dp.ir[k], traces ? &(*traces)[k] : nullptr);
    } else {
      fp.levels[k] = affine(add(dp.rgb[k + 1], dp.ir[k + 1]), 0.5, 0.0);
    }
  }
  return fp;
}

std::array<Tensor, 3> Model::head_forward(const FusedPyramid& fp) const {
  std::array<Tensor, 3> out;
  for (int k = 0; k < 3; ++k) out[k] = head_[k].forward(params_, fp.levels[k]);
  return out;
}

}  // namespace pacg
