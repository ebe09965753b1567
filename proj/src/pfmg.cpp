#include "pacg/pfmg.hpp"

#include <stdexcept>

namespace pacg {

PfmgModule PfmgModule::make(const std::string& prefix, int channels, int prev_channels) {
  PfmgModule m;
  m.channels = channels;
  m.prev_channels = prev_channels;
  m.hier_gate = {prefix + ".hier_gate", ConvSpec{2 * prev_channels, 1, 3, 2, 1, 1}, true};
  m.inter_reduce = {prefix + ".inter.reduce", ConvSpec{2 * channels, channels, 1, 1, 0, 1}};
  m.inter_expand = {prefix + ".inter.expand", ConvSpec{channels, 2 * channels, 1, 1, 0, 1}};
  m.weight_head = {prefix + ".weight_head", ConvSpec{2 * channels, 2, 1, 1, 0, 1}, true};
  return m;
}

void PfmgModule::init(ParameterSet& ps, uint64_t seed) const {
  hier_gate.init(ps, seed);
  inter_reduce.init(ps, seed);
  inter_expand.init(ps, seed);
  weight_head.init(ps, seed);
}

Tensor PfmgModule::forward(const ParameterSet& ps, const Tensor& curr_rgb,
                           const Tensor& curr_ir, const Tensor& prev_rgb,
                           const Tensor& prev_ir, PfmgTrace* trace) const {
  if (curr_rgb.shape() != curr_ir.shape())
    throw std::invalid_argument("pfmg: current-level shapes differ, " +
                                curr_rgb.shape().str() + " vs " + curr_ir.shape().str());
  if (prev_rgb.shape() != prev_ir.shape())
    throw std::invalid_argument("pfmg: previous-level shapes differ, " +
                                prev_rgb.shape().str() + " vs " + prev_ir.shape().str());
  const Shape cs = curr_rgb.shape();
  const Shape ls = prev_rgb.shape();
  if (ls.h != 2 * cs.h || ls.w != 2 * cs.w)
    throw std::invalid_argument("pfmg: previous level " + ls.str() +
                                " is not exactly twice the current level " + cs.str());
  if (cs.c != channels || ls.c != prev_channels)
    throw std::invalid_argument("pfmg: channel mismatch, current " + cs.str() +
                                " previous " + ls.str());

  Tensor gate = sigmoid(hier_gate.forward(ps, concat_channels({prev_rgb, prev_ir})));
  Tensor mixed = inter_expand.forward(
      ps, silu(inter_reduce.forward(ps, concat_channels({curr_rgb, curr_ir}))));
  auto streams = split_channels(mixed, {channels, channels});
  Tensor weights = softmax_channels(weight_head.forward(ps, mixed));
  auto w = split_channels(weights, {1, 1});
  Tensor base = add(mul(streams[0], w[0]), mul(streams[1], w[1]));
  Tensor fused = add(base, mul(base, gate));
  if (trace) {
    trace->hier_gate = gate;
    trace->fusion_weights = weights;
    trace->base = base;
  }
  return fused;
}

}  // namespace pacg
