#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace pacg {

// All activations are dense rank-4 arrays in NCHW order, 64-bit reals.
struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  long long numel() const {
    return static_cast<long long>(n) * c * h * w;
  }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;   // 1 or 3
  int stride = 1;   // 1 or 2
  int padding = 0;  // 0 or 1
  int groups = 1;   // 1, or in_channels for depthwise

  int out_extent(int in) const { return (in + 2 * padding - kernel) / stride + 1; }
  void validate() const;  // throws std::invalid_argument
};

namespace detail {

// One node of the recorded computation. Nodes are created per forward op and
// linked to their operands; walking the links backward from a scalar loss
// yields exactly one gradient array per requires-grad leaf.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily during backward / accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

  void ensure_grad() {
    if (grad.empty()) grad.assign(static_cast<size_t>(shape.numel()), 0.0);
  }
};

bool grad_enabled();

}  // namespace detail

// Value-semantic handle to a graph node. Cheap to copy; the underlying buffer
// is immutable after construction except for named parameters, which the
// trainer updates in place between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor full(const Shape& s, double value, bool requires_grad = false);
  static Tensor from_vector(const Shape& s, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v);  // (1,1,1,1), constant

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  long long numel() const { return node_->shape.numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<double>& values() const { return node_->value; }
  // Leaf parameters only; mutating an interior node invalidates the tape.
  std::vector<double>& mutable_values() { return node_->value; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(static_cast<size_t>(numel()), 0.0); }

  double at(int n, int c, int h, int w) const;
  double item() const;  // scalar tensors only

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_output(const Shape&, std::vector<double>,
                               std::vector<Tensor>,
                               std::function<void(detail::Node&)>);
};

// Disables graph recording for the current scope (inference, oracles).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- forward ops ----------------------------------------------------------
// Every op validates shapes up front and throws std::invalid_argument with a
// diagnostic naming the offending shapes.

// weight: (out, in/groups, k, k); bias: (1, out, 1, 1)
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              const ConvSpec& spec);

Tensor sigmoid(const Tensor& x);  // output strictly inside (0,1)
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
// exp with the input clamped to [-limit, limit]; keeps outputs finite.
Tensor clamped_exp(const Tensor& x, double limit = 30.0);

Tensor add(const Tensor& a, const Tensor& b);  // equal shapes
Tensor sub(const Tensor& a, const Tensor& b);
// Elementwise product. One operand may broadcast: a 1-channel map over C
// channels, or a (N,C,1,1) per-channel scalar over space. Anything wider is
// rejected.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);  // equal shapes
Tensor minimum(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, double scale, double shift);  // scale*x + shift

// Softmax across all C channels (C >= 2) at each (n,h,w); max-subtracted.
Tensor softmax_channels(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& xs);
std::vector<Tensor> split_channels(const Tensor& x, const std::vector<int>& sizes);

// Per-(sample, channel) spatial standardization followed by gamma/beta.
// gamma, beta: (1, C, 1, 1).
Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     double eps = 1e-5);

Tensor sum(const Tensor& x);   // -> (1,1,1,1)
Tensor mean(const Tensor& x);  // -> (1,1,1,1)
// Extract one spatial cell of one sample: -> (1, C, 1, 1).
Tensor slice_cell(const Tensor& x, int n, int h, int w);

// Numerically stable elementwise binary cross-entropy on logits.
// targets must not require grad.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// Reverse pass from a (1,1,1,1) loss. Gradients accumulate into the grad
// buffers of every requires-grad node reachable from the loss; leaves keep
// theirs until zero_grad.
void backward(const Tensor& loss);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

namespace testhooks {
// When set, the sigmoid backward rule is deliberately wrong. Lets the
// gradient checker prove it can catch a broken rule.
extern bool corrupt_sigmoid_backward;
}  // namespace testhooks

}  // namespace pacg
