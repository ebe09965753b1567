#pragma once

#include <string>

#include "pacg/params.hpp"
#include "pacg/tensor.hpp"

namespace pacg {

// Convolution with its parameters registered under "<name>.weight" /
// "<name>.bias". Weights init uniform in +-sqrt(1/fan_in), biases zero;
// gate-producing heads are additionally scaled by 0.1 so fresh gates sit
// near 0.5.
struct ConvLayer {
  std::string name;
  ConvSpec spec;
  bool gate_head = false;

  void init(ParameterSet& ps, uint64_t seed) const;
  Tensor forward(const ParameterSet& ps, const Tensor& x) const;
  long long param_count() const;
};

// Residual depthwise-separable bottleneck:
//   x + expand(silu(depthwise(silu(reduce(x)))))
// reduce: 1x1 C->C/2, depthwise: 3x3 groups C/2 pad 1, expand: 1x1 C/2->C.
struct DsBottleneck {
  std::string name;
  int channels = 0;
  ConvLayer reduce, dw, expand;

  static DsBottleneck make(const std::string& name, int channels);  // rejects odd C
  void init(ParameterSet& ps, uint64_t seed) const;
  Tensor forward(const ParameterSet& ps, const Tensor& x) const;
};

// Plain bottleneck projection, no residual: expand(silu(reduce(x))).
// Zero weights give a zero output.
struct ProjectionBlock {
  std::string name;
  int channels = 0;
  ConvLayer reduce, expand;

  static ProjectionBlock make(const std::string& name, int channels);
  void init(ParameterSet& ps, uint64_t seed) const;
  Tensor forward(const ParameterSet& ps, const Tensor& x) const;
};

// Per-(sample, channel) spatial standardization with learnable gamma/beta
// under "<name>.gamma" / "<name>.beta".
struct NormLayer {
  std::string name;
  int channels = 0;
  double eps = 1e-5;

  void init(ParameterSet& ps) const;
  Tensor forward(const ParameterSet& ps, const Tensor& x) const;
};

}  // namespace pacg
