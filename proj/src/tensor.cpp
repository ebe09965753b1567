#include "pacg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace pacg {

namespace testhooks {
bool corrupt_sigmoid_backward = false;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

void ConvSpec::validate() const {
  if (kernel != 1 && kernel != 3)
    throw std::invalid_argument("conv kernel must be 1 or 3, got " + std::to_string(kernel));
  if (stride != 1 && stride != 2)
    throw std::invalid_argument("conv stride must be 1 or 2, got " + std::to_string(stride));
  if (padding != 0 && padding != 1)
    throw std::invalid_argument("conv padding must be 0 or 1, got " + std::to_string(padding));
  if (in_channels < 1 || out_channels < 1 || groups < 1)
    throw std::invalid_argument("conv channels/groups must be positive");
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw std::invalid_argument("conv channels not divisible by groups: in=" +
                                std::to_string(in_channels) + " out=" + std::to_string(out_channels) +
                                " groups=" + std::to_string(groups));
}

namespace detail {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool v) { g_grad_enabled = v; }

}  // namespace detail

NoGradGuard::NoGradGuard() : previous_(detail::grad_enabled()) {
  detail::set_grad_enabled(false);
}

NoGradGuard::~NoGradGuard() { detail::set_grad_enabled(previous_); }

namespace {

void check_shape_valid(const Shape& s) {
  if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1)
    throw std::invalid_argument("all tensor dims must be >= 1, got " + s.str());
}

std::shared_ptr<detail::Node> make_leaf(const Shape& s, std::vector<double> v,
                                        bool requires_grad) {
  check_shape_valid(s);
  if (static_cast<long long>(v.size()) != s.numel())
    throw std::invalid_argument("data length " + std::to_string(v.size()) +
                                " does not match shape " + s.str());
  auto n = std::make_shared<detail::Node>();
  n->shape = s;
  n->value = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

inline size_t idx4(const Shape& s, int n, int c, int h, int w) {
  return ((static_cast<size_t>(n) * s.c + c) * s.h + h) * s.w + w;
}

inline double stable_sigmoid(double x) {
  double y;
  if (x >= 0) {
    y = 1.0 / (1.0 + std::exp(-x));
  } else {
    double e = std::exp(x);
    y = e / (1.0 + e);
  }
  // keep the (0,1) contract exact even for saturating inputs
  if (y <= 0.0) y = std::numeric_limits<double>::min();
  if (y >= 1.0) y = std::nextafter(1.0, 0.0);
  return y;
}

}  // namespace

Tensor make_op_output(const Shape& s, std::vector<double> value,
                      std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn) {
  auto n = std::make_shared<detail::Node>();
  n->shape = s;
  n->value = std::move(value);
  bool any_grad = false;
  for (const auto& t : inputs) any_grad = any_grad || t.requires_grad();
  if (any_grad && detail::grad_enabled()) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const auto& t : inputs) n->parents.push_back(t.node());
    n->backward_fn = std::move(backward_fn);
  }
  struct Access : Tensor {
    explicit Access(std::shared_ptr<detail::Node> nn) : Tensor(std::move(nn)) {}
  };
  return Access(std::move(n));
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
  return Tensor(make_leaf(s, std::vector<double>(static_cast<size_t>(s.numel()), 0.0),
                          requires_grad));
}

Tensor Tensor::full(const Shape& s, double value, bool requires_grad) {
  return Tensor(make_leaf(s, std::vector<double>(static_cast<size_t>(s.numel()), value),
                          requires_grad));
}

Tensor Tensor::from_vector(const Shape& s, std::vector<double> values, bool requires_grad) {
  return Tensor(make_leaf(s, std::move(values), requires_grad));
}

Tensor Tensor::scalar(double v) { return from_vector({1, 1, 1, 1}, {v}); }

double Tensor::at(int n, int c, int h, int w) const {
  return node_->value[idx4(node_->shape, n, c, h, w)];
}

double Tensor::item() const {
  if (shape() != Shape{1, 1, 1, 1})
    throw std::invalid_argument("item() requires a (1,1,1,1) tensor, got " + shape().str());
  return node_->value[0];
}

// ---- conv2d ---------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec) {
  spec.validate();
  const Shape xs = x.shape();
  if (xs.c != spec.in_channels)
    throw std::invalid_argument("conv2d: input " + xs.str() + " does not match spec in_channels " +
                                std::to_string(spec.in_channels));
  const int icpg = spec.in_channels / spec.groups;
  const int ocpg = spec.out_channels / spec.groups;
  const Shape want_w{spec.out_channels, icpg, spec.kernel, spec.kernel};
  if (weight.shape() != want_w)
    throw std::invalid_argument("conv2d: weight " + weight.shape().str() + " does not match " +
                                want_w.str());
  const Shape want_b{1, spec.out_channels, 1, 1};
  if (bias.shape() != want_b)
    throw std::invalid_argument("conv2d: bias " + bias.shape().str() + " does not match " +
                                want_b.str());
  const int oh = spec.out_extent(xs.h);
  const int ow = spec.out_extent(xs.w);
  if (oh < 1 || ow < 1)
    throw std::invalid_argument("conv2d: input " + xs.str() + " too small for kernel " +
                                std::to_string(spec.kernel) + " stride " +
                                std::to_string(spec.stride));

  const Shape os{xs.n, spec.out_channels, oh, ow};
  std::vector<double> out(static_cast<size_t>(os.numel()));
  const double* xv = x.values().data();
  const double* wv = weight.values().data();
  const double* bv = bias.values().data();
  const int k = spec.kernel, st = spec.stride, pd = spec.padding;
  const int H = xs.h, W = xs.w;

  if (k == 1 && st == 1 && pd == 0) {
    // dominant case: pointwise conv, dense over spatial
    const size_t plane = static_cast<size_t>(H) * W;
    for (int n = 0; n < xs.n; ++n) {
      for (int oc = 0; oc < spec.out_channels; ++oc) {
        const int g = oc / ocpg;
        double* op = out.data() + (static_cast<size_t>(n) * os.c + oc) * plane;
        std::fill(op, op + plane, bv[oc]);
        for (int ic = 0; ic < icpg; ++ic) {
          const double wgt = wv[(static_cast<size_t>(oc) * icpg + ic)];
          const double* ip = xv + (static_cast<size_t>(n) * xs.c + g * icpg + ic) * plane;
          for (size_t s = 0; s < plane; ++s) op[s] += wgt * ip[s];
        }
      }
    }
  } else {
    for (int n = 0; n < xs.n; ++n) {
      for (int oc = 0; oc < spec.out_channels; ++oc) {
        const int g = oc / ocpg;
        for (int y = 0; y < oh; ++y) {
          const int ih0 = y * st - pd;
          const int kh_lo = std::max(0, -ih0);
          const int kh_hi = std::min(k, H - ih0);
          for (int xw = 0; xw < ow; ++xw) {
            const int iw0 = xw * st - pd;
            const int kw_lo = std::max(0, -iw0);
            const int kw_hi = std::min(k, W - iw0);
            double acc = bv[oc];
            for (int ic = 0; ic < icpg; ++ic) {
              const double* ip = xv + (static_cast<size_t>(n) * xs.c + g * icpg + ic) *
                                          (static_cast<size_t>(H) * W);
              const double* wp =
                  wv + ((static_cast<size_t>(oc) * icpg + ic) * k) * k;
              for (int kh = kh_lo; kh < kh_hi; ++kh) {
                const double* irow = ip + static_cast<size_t>(ih0 + kh) * W + iw0;
                const double* wrow = wp + kh * k;
                for (int kw = kw_lo; kw < kw_hi; ++kw) acc += irow[kw] * wrow[kw];
              }
            }
            out[idx4(os, n, oc, y, xw)] = acc;
          }
        }
      }
    }
  }

  auto xn = x.node();
  auto wn = weight.node();
  auto bn = bias.node();
  return make_op_output(os, std::move(out), {x, weight, bias},
                        [xn, wn, bn, spec, os](detail::Node& self) {
    const Shape xs = xn->shape;
    const int icpg = spec.in_channels / spec.groups;
    const int ocpg = spec.out_channels / spec.groups;
    const int k = spec.kernel, st = spec.stride, pd = spec.padding;
    const int H = xs.h, W = xs.w;
    const bool need_x = xn->requires_grad;
    const bool need_w = wn->requires_grad;
    const bool need_b = bn->requires_grad;
    if (need_x) xn->ensure_grad();
    if (need_w) wn->ensure_grad();
    if (need_b) bn->ensure_grad();
    const double* gy = self.grad.data();
    const double* xv = xn->value.data();
    const double* wv = wn->value.data();

    if (k == 1 && st == 1 && pd == 0) {
      const size_t plane = static_cast<size_t>(H) * W;
      for (int n = 0; n < xs.n; ++n) {
        for (int oc = 0; oc < spec.out_channels; ++oc) {
          const int g = oc / ocpg;
          const double* gp = gy + (static_cast<size_t>(n) * os.c + oc) * plane;
          if (need_b) {
            double acc = 0;
            for (size_t s = 0; s < plane; ++s) acc += gp[s];
            bn->grad[oc] += acc;
          }
          for (int ic = 0; ic < icpg; ++ic) {
            const size_t xoff = (static_cast<size_t>(n) * xs.c + g * icpg + ic) * plane;
            const size_t wi = static_cast<size_t>(oc) * icpg + ic;
            if (need_x) {
              const double wgt = wv[wi];
              double* dst = xn->grad.data() + xoff;
              for (size_t s = 0; s < plane; ++s) dst[s] += wgt * gp[s];
            }
            if (need_w) {
              const double* ip = xv + xoff;
              double acc = 0;
              for (size_t s = 0; s < plane; ++s) acc += ip[s] * gp[s];
              wn->grad[wi] += acc;
            }
          }
        }
      }
      return;
    }

    for (int n = 0; n < xs.n; ++n) {
      for (int oc = 0; oc < spec.out_channels; ++oc) {
        const int g = oc / ocpg;
        for (int y = 0; y < os.h; ++y) {
          const int ih0 = y * st - pd;
          const int kh_lo = std::max(0, -ih0);
          const int kh_hi = std::min(k, H - ih0);
          for (int xw = 0; xw < os.w; ++xw) {
            const int iw0 = xw * st - pd;
            const int kw_lo = std::max(0, -iw0);
            const int kw_hi = std::min(k, W - iw0);
            const double gout = gy[idx4(os, n, oc, y, xw)];
            if (need_b) bn->grad[oc] += gout;
            for (int ic = 0; ic < icpg; ++ic) {
              const size_t iplane = (static_cast<size_t>(n) * xs.c + g * icpg + ic) *
                                    (static_cast<size_t>(H) * W);
              const size_t wbase = (static_cast<size_t>(oc) * icpg + ic) *
                                   static_cast<size_t>(k) * k;
              for (int kh = kh_lo; kh < kh_hi; ++kh) {
                const size_t xrow = iplane + static_cast<size_t>(ih0 + kh) * W + iw0;
                const size_t wrow = wbase + static_cast<size_t>(kh) * k;
                if (need_x && need_w) {
                  for (int kw = kw_lo; kw < kw_hi; ++kw) {
                    xn->grad[xrow + kw] += wv[wrow + kw] * gout;
                    wn->grad[wrow + kw] += xv[xrow + kw] * gout;
                  }
                } else if (need_x) {
                  for (int kw = kw_lo; kw < kw_hi; ++kw)
                    xn->grad[xrow + kw] += wv[wrow + kw] * gout;
                } else if (need_w) {
                  for (int kw = kw_lo; kw < kw_hi; ++kw)
                    wn->grad[wrow + kw] += xv[xrow + kw] * gout;
                }
              }
            }
          }
        }
      }
    }
  });
}

// ---- elementwise unary ----------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
  const Shape s = x.shape();
  std::vector<double> out(static_cast<size_t>(s.numel()));
  const auto& xv = x.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  auto xn = x.node();
  // bwd(x, y, gy) -> gx
  std::vector<double> saved_out = out;
  return make_op_output(s, std::move(out), {x},
                        [xn, bwd, saved_out = std::move(saved_out)](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += bwd(xn->value[i], saved_out[i], self.grad[i]);
  });
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return stable_sigmoid(v); },
      [](double, double y, double gy) {
        double g = y * (1.0 - y) * gy;
        if (testhooks::corrupt_sigmoid_backward) g *= 1.01;
        return g;
      });
}

Tensor silu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v * stable_sigmoid(v); },
      [](double v, double, double gy) {
        double s = stable_sigmoid(v);
        return (s + v * s * (1.0 - s)) * gy;
      });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double, double gy) { return v > 0.0 ? gy : 0.0; });
}

Tensor clamped_exp(const Tensor& x, double limit) {
  return unary_op(
      x,
      [limit](double v) { return std::exp(std::clamp(v, -limit, limit)); },
      [limit](double v, double y, double gy) {
        return (v > -limit && v < limit) ? y * gy : 0.0;
      });
}

Tensor affine(const Tensor& x, double scale, double shift) {
  return unary_op(
      x, [scale, shift](double v) { return scale * v + shift; },
      [scale](double, double, double gy) { return scale * gy; });
}

// ---- elementwise binary ---------------------------------------------------

namespace {

void require_equal_shapes(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shapes differ, " + a.shape().str() +
                                " vs " + b.shape().str());
}

template <typename Fwd, typename Bwd>
Tensor binary_same_shape(const char* name, const Tensor& a, const Tensor& b, Fwd fwd,
                         Bwd bwd) {
  require_equal_shapes(name, a, b);
  const Shape s = a.shape();
  std::vector<double> out(static_cast<size_t>(s.numel()));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  auto an = a.node();
  auto bn = b.node();
  // bwd(av, bv, gy, &ga, &gb)
  return make_op_output(s, std::move(out), {a, b}, [an, bn, bwd](detail::Node& self) {
    const bool na = an->requires_grad, nb = bn->requires_grad;
    if (na) an->ensure_grad();
    if (nb) bn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double ga = 0, gb = 0;
      bwd(an->value[i], bn->value[i], self.grad[i], ga, gb);
      if (na) an->grad[i] += ga;
      if (nb) bn->grad[i] += gb;
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_same_shape("add", a, b, [](double x, double y) { return x + y; },
                           [](double, double, double gy, double& ga, double& gb) {
                             ga = gy;
                             gb = gy;
                           });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_same_shape("sub", a, b, [](double x, double y) { return x - y; },
                           [](double, double, double gy, double& ga, double& gb) {
                             ga = gy;
                             gb = -gy;
                           });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_same_shape("div", a, b, [](double x, double y) { return x / y; },
                           [](double x, double y, double gy, double& ga, double& gb) {
                             ga = gy / y;
                             gb = -gy * x / (y * y);
                           });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_same_shape("minimum", a, b,
                           [](double x, double y) { return x <= y ? x : y; },
                           [](double x, double y, double gy, double& ga, double& gb) {
                             if (x <= y)
                               ga = gy;
                             else
                               gb = gy;
                           });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_same_shape("maximum", a, b,
                           [](double x, double y) { return x >= y ? x : y; },
                           [](double x, double y, double gy, double& ga, double& gb) {
                             if (x >= y)
                               ga = gy;
                             else
                               gb = gy;
                           });
}

namespace {

enum class Bcast { kNone, kChannel, kSpatial };

// y broadcasts over x: either y has 1 channel (same N,H,W) or y is (N,C,1,1).
Bcast classify_broadcast(const Shape& x, const Shape& y) {
  if (x == y) return Bcast::kNone;
  if (y.n == x.n && y.c == 1 && y.h == x.h && y.w == x.w) return Bcast::kChannel;
  if (y.n == x.n && y.c == x.c && y.h == 1 && y.w == 1) return Bcast::kSpatial;
  throw std::invalid_argument("mul: incompatible broadcast shapes " + x.str() + " vs " +
                              y.str());
}

inline size_t bcast_index(Bcast mode, const Shape& xs, int n, int c, int h, int w) {
  switch (mode) {
    case Bcast::kChannel:
      return (static_cast<size_t>(n) * xs.h + h) * xs.w + w;
    case Bcast::kSpatial:
      return static_cast<size_t>(n) * xs.c + c;
    default:
      return idx4(xs, n, c, h, w);
  }
}

Tensor mul_broadcast(const Tensor& big, const Tensor& small, Bcast mode, bool big_first) {
  const Shape xs = big.shape();
  std::vector<double> out(static_cast<size_t>(xs.numel()));
  const auto& bvv = big.values();
  const auto& svv = small.values();
  size_t i = 0;
  for (int n = 0; n < xs.n; ++n)
    for (int c = 0; c < xs.c; ++c)
      for (int h = 0; h < xs.h; ++h)
        for (int w = 0; w < xs.w; ++w, ++i)
          out[i] = bvv[i] * svv[bcast_index(mode, xs, n, c, h, w)];

  auto bnn = big.node();
  auto snn = small.node();
  std::vector<Tensor> inputs = big_first ? std::vector<Tensor>{big, small}
                                         : std::vector<Tensor>{small, big};
  return make_op_output(xs, std::move(out), std::move(inputs),
                        [bnn, snn, mode, xs](detail::Node& self) {
    const bool nb = bnn->requires_grad, ns = snn->requires_grad;
    if (nb) bnn->ensure_grad();
    if (ns) snn->ensure_grad();
    size_t i = 0;
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < xs.c; ++c)
        for (int h = 0; h < xs.h; ++h)
          for (int w = 0; w < xs.w; ++w, ++i) {
            const size_t si = bcast_index(mode, xs, n, c, h, w);
            if (nb) bnn->grad[i] += snn->value[si] * self.grad[i];
            if (ns) snn->grad[si] += bnn->value[i] * self.grad[i];
          }
  });
}

}  // namespace

Tensor mul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as == bs) {
    return binary_same_shape("mul", a, b, [](double x, double y) { return x * y; },
                             [](double x, double y, double gy, double& ga, double& gb) {
                               ga = y * gy;
                               gb = x * gy;
                             });
  }
  if (as.numel() >= bs.numel()) {
    Bcast mode = classify_broadcast(as, bs);
    return mul_broadcast(a, b, mode, true);
  }
  Bcast mode = classify_broadcast(bs, as);
  return mul_broadcast(b, a, mode, false);
}

// ---- softmax over channels --------------------------------------------------

Tensor softmax_channels(const Tensor& x) {
  const Shape s = x.shape();
  if (s.c < 2)
    throw std::invalid_argument("softmax_channels: need at least 2 channels, got " + s.str());
  std::vector<double> out(static_cast<size_t>(s.numel()));
  const auto& xv = x.values();
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  for (int n = 0; n < s.n; ++n) {
    const size_t base = static_cast<size_t>(n) * s.c * plane;
    for (size_t p = 0; p < plane; ++p) {
      double mx = xv[base + p];
      for (int c = 1; c < s.c; ++c) mx = std::max(mx, xv[base + c * plane + p]);
      double z = 0;
      for (int c = 0; c < s.c; ++c) {
        double e = std::exp(xv[base + c * plane + p] - mx);
        out[base + c * plane + p] = e;
        z += e;
      }
      for (int c = 0; c < s.c; ++c) out[base + c * plane + p] /= z;
    }
  }
  auto xn = x.node();
  std::vector<double> saved = out;
  return make_op_output(s, std::move(out), {x},
                        [xn, s, saved = std::move(saved)](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const size_t plane = static_cast<size_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
      const size_t base = static_cast<size_t>(n) * s.c * plane;
      for (size_t p = 0; p < plane; ++p) {
        double dot = 0;
        for (int c = 0; c < s.c; ++c)
          dot += saved[base + c * plane + p] * self.grad[base + c * plane + p];
        for (int c = 0; c < s.c; ++c) {
          const size_t i = base + c * plane + p;
          xn->grad[i] += saved[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

// ---- concat / split ---------------------------------------------------------

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
  const Shape first = xs[0].shape();
  int total_c = 0;
  for (const auto& t : xs) {
    const Shape s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w)
      throw std::invalid_argument("concat_channels: spatial/batch mismatch " + first.str() +
                                  " vs " + s.str());
    total_c += s.c;
  }
  const Shape os{first.n, total_c, first.h, first.w};
  std::vector<double> out(static_cast<size_t>(os.numel()));
  const size_t plane = static_cast<size_t>(first.h) * first.w;
  for (int n = 0; n < os.n; ++n) {
    size_t coff = 0;
    for (const auto& t : xs) {
      const int tc = t.shape().c;
      const double* src = t.values().data() + static_cast<size_t>(n) * tc * plane;
      double* dst = out.data() + (static_cast<size_t>(n) * os.c + coff) * plane;
      std::copy(src, src + static_cast<size_t>(tc) * plane, dst);
      coff += tc;
    }
  }
  std::vector<std::shared_ptr<detail::Node>> nodes;
  for (const auto& t : xs) nodes.push_back(t.node());
  return make_op_output(os, std::move(out), xs, [nodes, os, plane](detail::Node& self) {
    for (int n = 0; n < os.n; ++n) {
      size_t coff = 0;
      for (const auto& pn : nodes) {
        const int tc = pn->shape.c;
        if (pn->requires_grad) {
          pn->ensure_grad();
          const double* src = self.grad.data() + (static_cast<size_t>(n) * os.c + coff) * plane;
          double* dst = pn->grad.data() + static_cast<size_t>(n) * tc * plane;
          for (size_t i = 0; i < static_cast<size_t>(tc) * plane; ++i) dst[i] += src[i];
        }
        coff += tc;
      }
    }
  });
}

std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes) {
  const Shape s = x.shape();
  int total = 0;
  for (int c : sizes) {
    if (c < 1) throw std::invalid_argument("split_channels: sizes must be >= 1");
    total += c;
  }
  if (total != s.c)
    throw std::invalid_argument("split_channels: sizes sum to " + std::to_string(total) +
                                " but input has " + std::to_string(s.c) + " channels");
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  std::vector<Tensor> parts;
  parts.reserve(sizes.size());
  int coff = 0;
  for (int c : sizes) {
    const Shape ps{s.n, c, s.h, s.w};
    std::vector<double> out(static_cast<size_t>(ps.numel()));
    for (int n = 0; n < s.n; ++n) {
      const double* src = x.values().data() + (static_cast<size_t>(n) * s.c + coff) * plane;
      double* dst = out.data() + static_cast<size_t>(n) * c * plane;
      std::copy(src, src + static_cast<size_t>(c) * plane, dst);
    }
    auto xn = x.node();
    const int offset = coff;
    parts.push_back(make_op_output(ps, std::move(out), {x},
                                   [xn, s, ps, offset, plane](detail::Node& self) {
      if (!xn->requires_grad) return;
      xn->ensure_grad();
      for (int n = 0; n < s.n; ++n) {
        const double* src = self.grad.data() + static_cast<size_t>(n) * ps.c * plane;
        double* dst = xn->grad.data() + (static_cast<size_t>(n) * s.c + offset) * plane;
        for (size_t i = 0; i < static_cast<size_t>(ps.c) * plane; ++i) dst[i] += src[i];
      }
    }));
    coff += c;
  }
  return parts;
}

// ---- instance norm ----------------------------------------------------------

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const Shape s = x.shape();
  const Shape want{1, s.c, 1, 1};
  if (gamma.shape() != want || beta.shape() != want)
    throw std::invalid_argument("instance_norm: gamma/beta must be " + want.str() + ", got " +
                                gamma.shape().str() + " and " + beta.shape().str());
  const size_t plane = static_cast<size_t>(s.h) * s.w;
  const double m = static_cast<double>(plane);
  std::vector<double> out(static_cast<size_t>(s.numel()));
  std::vector<double> mu(static_cast<size_t>(s.n) * s.c);
  std::vector<double> inv_sigma(static_cast<size_t>(s.n) * s.c);
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const size_t base = (static_cast<size_t>(n) * s.c + c) * plane;
      double acc = 0;
      for (size_t p = 0; p < plane; ++p) acc += xv[base + p];
      const double mean = acc / m;
      double var = 0;
      for (size_t p = 0; p < plane; ++p) {
        const double d = xv[base + p] - mean;
        var += d * d;
      }
      var /= m;
      const double is = 1.0 / std::sqrt(var + eps);
      mu[static_cast<size_t>(n) * s.c + c] = mean;
      inv_sigma[static_cast<size_t>(n) * s.c + c] = is;
      for (size_t p = 0; p < plane; ++p)
        out[base + p] = gv[c] * (xv[base + p] - mean) * is + bv[c];
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_op_output(s, std::move(out), {x, gamma, beta},
                        [xn, gn, bn, s, plane, m, mu = std::move(mu),
                         inv_sigma = std::move(inv_sigma)](detail::Node& self) {
    const bool nx = xn->requires_grad, ng = gn->requires_grad, nb = bn->requires_grad;
    if (nx) xn->ensure_grad();
    if (ng) gn->ensure_grad();
    if (nb) bn->ensure_grad();
    std::vector<double> xhat(plane);
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        const size_t nc = static_cast<size_t>(n) * s.c + c;
        const size_t base = nc * plane;
        const double is = inv_sigma[nc];
        const double mean = mu[nc];
        double sum_gy = 0, sum_gy_xhat = 0;
        for (size_t p = 0; p < plane; ++p) {
          xhat[p] = (xn->value[base + p] - mean) * is;
          const double gy = self.grad[base + p];
          sum_gy += gy;
          sum_gy_xhat += gy * xhat[p];
        }
        if (ng) gn->grad[c] += sum_gy_xhat;
        if (nb) bn->grad[c] += sum_gy;
        if (nx) {
          const double g = gn->value[c];
          const double mean_gy = sum_gy / m;
          const double mean_gy_xhat = sum_gy_xhat / m;
          for (size_t p = 0; p < plane; ++p)
            xn->grad[base + p] +=
                g * is * (self.grad[base + p] - mean_gy - xhat[p] * mean_gy_xhat);
        }
      }
    }
  });
}

// ---- reductions and slicing -------------------------------------------------

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (double v : x.values()) acc += v;
  auto xn = x.node();
  return make_op_output({1, 1, 1, 1}, {acc}, {x}, [xn](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    const double g = self.grad[0];
    for (auto& gv : xn->grad) gv += g;
  });
}

Tensor mean(const Tensor& x) {
  return affine(sum(x), 1.0 / static_cast<double>(x.numel()), 0.0);
}

Tensor slice_cell(const Tensor& x, int n, int h, int w) {
  const Shape s = x.shape();
  if (n < 0 || n >= s.n || h < 0 || h >= s.h || w < 0 || w >= s.w)
    throw std::invalid_argument("slice_cell: index out of range for " + s.str());
  const Shape os{1, s.c, 1, 1};
  std::vector<double> out(static_cast<size_t>(s.c));
  for (int c = 0; c < s.c; ++c) out[c] = x.values()[idx4(s, n, c, h, w)];
  auto xn = x.node();
  return make_op_output(os, std::move(out), {x}, [xn, s, n, h, w](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int c = 0; c < s.c; ++c) xn->grad[idx4(s, n, c, h, w)] += self.grad[c];
  });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_equal_shapes("bce_with_logits", logits, targets);
  if (targets.requires_grad())
    throw std::invalid_argument("bce_with_logits: targets must not require grad");
  const Shape s = logits.shape();
  std::vector<double> out(static_cast<size_t>(s.numel()));
  const auto& xv = logits.values();
  const auto& tv = targets.values();
  for (size_t i = 0; i < out.size(); ++i) {
    const double x = xv[i], t = tv[i];
    out[i] = std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
  }
  auto xn = logits.node();
  auto tn = targets.node();
  return make_op_output(s, std::move(out), {logits, targets},
                        [xn, tn](detail::Node& self) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      xn->grad[i] += (stable_sigmoid(xn->value[i]) - tn->value[i]) * self.grad[i];
  });
}

// ---- backward ---------------------------------------------------------------

void backward(const Tensor& loss) {
  if (loss.shape() != Shape{1, 1, 1, 1})
    throw std::invalid_argument("backward: loss must be (1,1,1,1), got " + loss.shape().str());
  auto root = loss.node();
  if (!root->requires_grad)
    throw std::invalid_argument("backward: loss is not connected to any requires-grad input");

  // iterative post-order over the recorded graph
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
}

}  // namespace pacg
