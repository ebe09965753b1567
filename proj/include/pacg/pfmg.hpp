#pragma once

#include <string>

#include "pacg/blocks.hpp"

namespace pacg {

struct PfmgTrace {
  Tensor hier_gate;       // (N,1,H,W), after sigmoid
  Tensor fusion_weights;  // (N,2,H,W), softmaxed
  Tensor base;            // (N,C,H,W), pre-modulation
};

// Pyramidal feature-aware gating for one level. The previous (finer) level
// pair is downsampled by a single stride-2 conv into a 1-channel spatial
// gate; the current pair is mixed by a 1x1 bottleneck, re-weighted by a
// per-location 2-way softmax, and additively modulated by the gate:
//   m     = sigmoid(conv3x3_s2(concat(prev_rgb, prev_ir)))
//   u     = expand(silu(reduce(concat(curr_rgb, curr_ir))))
//   f_rgb, f_ir = split(u)
//   w_rgb, w_ir = softmax(conv1x1_{2C->2}(u))
//   base  = w_rgb*f_rgb + w_ir*f_ir
//   fused = base + m*base
struct PfmgModule {
  int channels = 0;       // C at the current level
  int prev_channels = 0;  // per-stream channels at the previous level
  ConvLayer hier_gate;    // 3x3 stride 2 pad 1, 2*prev_channels -> 1
  ConvLayer inter_reduce;   // 1x1, 2C -> C
  ConvLayer inter_expand;   // 1x1, C -> 2C
  ConvLayer weight_head;    // 1x1, 2C -> 2

  static PfmgModule make(const std::string& prefix, int channels, int prev_channels);
  void init(ParameterSet& ps, uint64_t seed) const;

  // prev spatial dims must be exactly twice curr's; no resampling fallback.
  Tensor forward(const ParameterSet& ps, const Tensor& curr_rgb, const Tensor& curr_ir,
                 const Tensor& prev_rgb, const Tensor& prev_ir,
                 PfmgTrace* trace = nullptr) const;
};

}  // namespace pacg
