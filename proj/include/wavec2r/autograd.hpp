#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "wavec2r/tensor.hpp"

// Minimal reverse-mode differentiation over Tensor values. A Var is a shared
// handle to a graph node; ops record a backward closure only when gradient
// recording is enabled and at least one input requires a gradient.
namespace wavec2r::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;
using BackwardFn = std::function<void(Node& self)>;

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<NodePtr> inputs;
  BackwardFn backward;

  /// Gradient buffer, zero-allocated on first use.
  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Direct write access, for optimizers and finite-difference probes.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  /// Gradient from the last backward(); empty if none reached this node.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  /// Seeds d(self)/d(self) = 1; self must hold a single element.
  void backward() const;

  const NodePtr& node() const noexcept { return node_; }

  /// Scalar value of a one-element Var.
  double item() const;

 private:
  NodePtr node_;
};

inline Var constant(Tensor t) { return Var(std::move(t), false); }
inline Var parameter(Tensor t) { return Var(std::move(t), true); }

bool grad_enabled() noexcept;

/// Disables graph recording for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds a result node. `fn` reads self.grad and accumulates into the
/// inputs' grad_buffer() when they require gradients.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn fn);

// Elementwise
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var gelu(const Var& x);

// Reductions to a scalar of shape {1}
Var sum(const Var& x);
Var mean(const Var& x);
Var mse(const Var& a, const Var& b);

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// x: (N, Cin, H, W); weight: (Cout, Cin/groups, K, K); bias: (Cout) or
/// undefined.
Var conv2d(const Var& x, const Var& weight, const Var& bias, Conv2dOptions opts = {});

/// gamma, beta: (C). Statistics over (C/groups, H, W) per sample.
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

/// x: (N, C, H, W); e: (N, C). Adds e[n, c] to every pixel of plane (n, c).
Var add_channel_embedding(const Var& x, const Var& e);

/// x: (..., Din); weight: (Din, Dout); bias: (Dout) or undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);

Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& x, int begin, int count);
Var upsample_nearest2x(const Var& x);

/// Haar DWT per plane: (N, C, H, W) -> (N, 4C, H/2, W/2) with channel blocks
/// [ll | lh | hl | hh], each C wide.
Var dwt2(const Var& x);
/// Inverse of dwt2.
Var idwt2(const Var& bands);

/// (N, C, H, W) -> (N * nWindows, wh * ww, C), windows in row-major order.
Var window_partition(const Var& x, int wh, int ww);
/// Inverse of window_partition for an (N, C, H, W) target shape.
Var window_merge(const Var& tokens, const Shape& nchw, int wh, int ww);

/// Receives softmax weights from attention(): (B, heads, T, S).
struct AttentionProbe {
  Tensor weights;
};

/// Multi-head scaled dot-product attention. q: (B, T, C); k, v: (B, S, C);
/// C divisible by heads; scores scaled by 1/sqrt(C / heads).
Var attention(const Var& q, const Var& k, const Var& v, int heads,
              AttentionProbe* probe = nullptr);

}  // namespace wavec2r::ag
