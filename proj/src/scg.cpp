#include "pacg/scg.hpp"

#include <stdexcept>

namespace pacg {

ScgModule ScgModule::make(const std::string& prefix, int channels) {
  if (channels % 2 != 0)
    throw std::invalid_argument("ScgModule requires an even channel count, got " +
                                std::to_string(channels));
  ScgModule m;
  m.channels = channels;
  const std::array<std::string, 2> side{"rgb", "ir"};
  for (int s = 0; s < 2; ++s) {
    m.refiner[s] = DsBottleneck::make(prefix + "." + side[s] + "_refiner", channels);
    const std::string dir = prefix + ".into_" + side[s];
    m.into[s].spatial_gate = {dir + ".spatial_gate", ConvSpec{channels, 1, 1, 1, 0, 1}, true};
    m.into[s].projection = ProjectionBlock::make(dir + ".proj", channels);
    m.into[s].channel_gate = {dir + ".channel_gate", ConvSpec{channels, channels, 1, 1, 0, 1}, true};
    m.norm[s] = {prefix + "." + side[s] + "_norm", channels};
  }
  return m;
}

void ScgModule::init(ParameterSet& ps, uint64_t seed) const {
  for (int s = 0; s < 2; ++s) {
    refiner[s].init(ps, seed);
    into[s].spatial_gate.init(ps, seed);
    into[s].projection.init(ps, seed);
    into[s].channel_gate.init(ps, seed);
    norm[s].init(ps);
  }
}

std::pair<Tensor, Tensor> ScgModule::forward(const ParameterSet& ps, const Tensor& rgb,
                                             const Tensor& ir, ScgTrace* trace) const {
  if (rgb.shape() != ir.shape())
    throw std::invalid_argument("scg: modality shapes differ, " + rgb.shape().str() +
                                " vs " + ir.shape().str());
  if (rgb.shape().c != channels)
    throw std::invalid_argument("scg: expected " + std::to_string(channels) +
                                " channels, got " + rgb.shape().str());

  const std::array<Tensor, 2> in{rgb, ir};
  std::array<Tensor, 2> refined;
  for (int s = 0; s < 2; ++s) refined[s] = refiner[s].forward(ps, in[s]);

  std::array<Tensor, 2> out;
  for (int s = 0; s < 2; ++s) {
    const int o = 1 - s;
    Tensor m = sigmoid(into[s].spatial_gate.forward(ps, refined[o]));
    Tensor enhanced = mul(refined[s], affine(m, 1.0, 1.0));
    Tensor guidance = into[s].projection.forward(ps, refined[o]);
    Tensor g = sigmoid(into[s].channel_gate.forward(ps, guidance));
    out[s] = norm[s].forward(ps, add(add(in[s], enhanced), mul(g, guidance)));
    if (trace) {
      trace->spatial_gate[s] = m;
      trace->channel_gate[s] = g;
    }
  }
  return {out[0], out[1]};
}

}  // namespace pacg
