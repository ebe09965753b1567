#pragma once

#include <array>
#include <string>
#include <utility>

#include "pacg/blocks.hpp"

namespace pacg {

// Gate maps captured during a forward pass, for invariant checks.
struct ScgTrace {
  std::array<Tensor, 2> spatial_gate;  // per output side, (N,1,H,W)
  std::array<Tensor, 2> channel_gate;  // per output side, (N,C,H,W)
};

// Symmetrical cross-gating between two shape-matched streams. Each side is
// refined, then enhanced by a spatial gate and a gated guidance projection
// derived from the other side, and renormalized around a residual:
//   r_s   = refine_s(x_s)
//   m_s   = sigmoid(conv1x1_{C->1}(r_o))          o = other side
//   g_s   = sigmoid(conv1x1_{C->C}(G_s)),  G_s = project_{o->s}(r_o)
//   y_s   = norm_s(x_s + r_s*(1+m_s) + g_s*G_s)
// Side 0 is the RGB stream, side 1 the IR stream; the two sides carry
// mirror-image parameter shapes.
struct ScgModule {
  int channels = 0;
  std::array<DsBottleneck, 2> refiner;
  struct Direction {
    ConvLayer spatial_gate;
    ProjectionBlock projection;
    ConvLayer channel_gate;
  };
  std::array<Direction, 2> into;  // into[s]: guidance flowing into side s
  std::array<NormLayer, 2> norm;

  static ScgModule make(const std::string& prefix, int channels);
  void init(ParameterSet& ps, uint64_t seed) const;

  std::pair<Tensor, Tensor> forward(const ParameterSet& ps, const Tensor& rgb,
                                    const Tensor& ir, ScgTrace* trace = nullptr) const;
};

}  // namespace pacg
