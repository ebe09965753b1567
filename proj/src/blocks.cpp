#include "pacg/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "pacg/rng.hpp"

namespace pacg {

void ConvLayer::init(ParameterSet& ps, uint64_t seed) const {
  spec.validate();
  const int icpg = spec.in_channels / spec.groups;
  const double fan_in = static_cast<double>(icpg) * spec.kernel * spec.kernel;
  const double bound = std::sqrt(1.0 / fan_in);
  const double gain = gate_head ? 0.1 : 1.0;

  const Shape ws{spec.out_channels, icpg, spec.kernel, spec.kernel};
  Rng rng(hash_name(seed, name + ".weight"));
  std::vector<double> w(static_cast<size_t>(ws.numel()));
  for (auto& v : w) v = rng.uniform(-bound, bound) * gain;
  ps.add(name + ".weight", Tensor::from_vector(ws, std::move(w), true));
  ps.add(name + ".bias", Tensor::zeros({1, spec.out_channels, 1, 1}, true));
}

Tensor ConvLayer::forward(const ParameterSet& ps, const Tensor& x) const {
  return conv2d(x, ps.at(name + ".weight"), ps.at(name + ".bias"), spec);
}

long long ConvLayer::param_count() const {
  const int icpg = spec.in_channels / spec.groups;
  return static_cast<long long>(spec.out_channels) * icpg * spec.kernel * spec.kernel +
         spec.out_channels;
}

DsBottleneck DsBottleneck::make(const std::string& name, int channels) {
  if (channels % 2 != 0)
    throw std::invalid_argument("DsBottleneck requires an even channel count, got " +
                                std::to_string(channels));
  const int mid = channels / 2;
  DsBottleneck b;
  b.name = name;
  b.channels = channels;
  b.reduce = {name + ".reduce", ConvSpec{channels, mid, 1, 1, 0, 1}};
  b.dw = {name + ".dw", ConvSpec{mid, mid, 3, 1, 1, mid}};
  b.expand = {name + ".expand", ConvSpec{mid, channels, 1, 1, 0, 1}};
  return b;
}

void DsBottleneck::init(ParameterSet& ps, uint64_t seed) const {
  reduce.init(ps, seed);
  dw.init(ps, seed);
  expand.init(ps, seed);
}

Tensor DsBottleneck::forward(const ParameterSet& ps, const Tensor& x) const {
  Tensor y = silu(reduce.forward(ps, x));
  y = silu(dw.forward(ps, y));
  y = expand.forward(ps, y);
  return add(x, y);
}

ProjectionBlock ProjectionBlock::make(const std::string& name, int channels) {
  if (channels % 2 != 0)
    throw std::invalid_argument("ProjectionBlock requires an even channel count, got " +
                                std::to_string(channels));
  const int mid = channels / 2;
  ProjectionBlock p;
  p.name = name;
  p.channels = channels;
  p.reduce = {name + ".reduce", ConvSpec{channels, mid, 1, 1, 0, 1}};
  p.expand = {name + ".expand", ConvSpec{mid, channels, 1, 1, 0, 1}};
  return p;
}

void ProjectionBlock::init(ParameterSet& ps, uint64_t seed) const {
  reduce.init(ps, seed);
  expand.init(ps, seed);
}

Tensor ProjectionBlock::forward(const ParameterSet& ps, const Tensor& x) const {
  return expand.forward(ps, silu(reduce.forward(ps, x)));
}

void NormLayer::init(ParameterSet& ps) const {
  ps.add(name + ".gamma", Tensor::full({1, channels, 1, 1}, 1.0, true));
  ps.add(name + ".beta", Tensor::zeros({1, channels, 1, 1}, true));
}

Tensor NormLayer::forward(const ParameterSet& ps, const Tensor& x) const {
  return instance_norm(x, ps.at(name + ".gamma"), ps.at(name + ".beta"), eps);
}

}  // namespace pacg
