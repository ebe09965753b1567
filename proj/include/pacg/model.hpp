#pragma once

#include <array>
#include <optional>
#include <vector>

#include "pacg/pfmg.hpp"
#include "pacg/scg.hpp"

namespace pacg {

struct ModelConfig {
  int image_size = 64;  // S; any input divisible by 32 is accepted at runtime
  std::array<int, 5> widths{8, 16, 32, 64, 128};  // channels at P1..P5
  int num_classes = 2;
  bool enable_scg = true;   // cross-gating after the P2/P3/P4 stages
  bool enable_pfmg = true;  // gated fusion; otherwise a fixed 0.5/0.5 average

  int head_channels() const { return 1 + num_classes + 4; }
  void validate() const;
};

// Levels P2..P5 of both streams; index 0 is P2.
struct DualPyramid {
  std::array<Tensor, 4> rgb;
  std::array<Tensor, 4> ir;
};

// Fused P3/P4/P5 at strides 8/16/32.
struct FusedPyramid {
  std::array<Tensor, 3> levels;
};

inline constexpr std::array<int, 3> kFusedStrides{8, 16, 32};

// Dual-stream backbone with identical topology and independent weights per
// stream, cross-gated at P2..P4, fused per level, and read out by a 1x1
// detection head (objectness + class logits + box offsets per cell).
class Model {
 public:
  Model(const ModelConfig& cfg, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  long long param_count() const { return params_.scalar_count(); }

  DualPyramid backbone_forward(const Tensor& rgb_img, const Tensor& ir_img) const;
  // One stream's stage chain with no cross-modal exchange (stream 0 = RGB).
  std::array<Tensor, 4> stream_forward(int stream, const Tensor& img) const;
  FusedPyramid fuse(const DualPyramid& dp,
                    std::array<PfmgTrace, 3>* traces = nullptr) const;
  std::array<Tensor, 3> head_forward(const FusedPyramid& fp) const;

  const std::array<ScgModule, 3>& scg_modules() const;    // valid if enabled
  const std::array<PfmgModule, 3>& pfmg_modules() const;  // valid if enabled

 private:
  void check_image(const Tensor& img) const;

  ModelConfig cfg_;
  // stem conv -> norm -> silu -> bottleneck
  struct Stage {
    ConvLayer stem;
    NormLayer norm;
    DsBottleneck block;
  };
  std::array<std::array<Stage, 5>, 2> stages_;  // [stream][P1..P5]
  std::optional<std::array<ScgModule, 3>> scg_;
  std::optional<std::array<PfmgModule, 3>> pfmg_;
  std::array<ConvLayer, 3> head_;
  ParameterSet params_;
};

}  // namespace pacg
