#pragma once

// Minimal reverse-mode automatic differentiation over semstego::Tensor.
// Layouts: images are (B, C, H, W); matrices are (rows, cols) row-major.

#include <functional>
#include <memory>
#include <vector>

#include "semstego/core/tensor.hpp"

namespace semstego::nn {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  // Handle semantics: mutation goes to the shared node.
  Tensor& mutable_value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient of the last backward pass; zeros if none reached this node.
  Tensor grad() const;
  void zero_grad() const;

  // Seeds d(self)/d(self) = 1; self must hold a single element.
  void backward();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// While alive, ops record no graph (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// Convolution, weight (Cout, Cin, k, k), optional bias (Cout).
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
// Transposed convolution, weight (Cin, Cout, k, k), optional bias (Cout).
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
// x (B, Din) times weight (Din, Dout) plus optional bias (Dout).
Var linear(const Var& x, const Var& weight, const Var& bias);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
// x (B, C, H, W) plus per-item channel vector v (B, C).
Var add_channel_vector(const Var& x, const Var& v);

Var silu(const Var& x);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var clamp(const Var& x, double lo, double hi);

Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, std::size_t begin, std::size_t end);
Var reshape(const Var& x, Shape shape);

Var sum(const Var& x);
Var mean(const Var& x);
Var mse_loss(const Var& prediction, const Tensor& target);

// Scales each batch item (B, ...) so its mean squared entry is 1.
Var power_normalize(const Var& x);

// Per-item cross attention. Queries come from the channel vectors of x
// (B, Cq, H, W); keys and values from the item's token embedding (T_b, De).
// Output (B, Dv, H, W) = softmax(Q K^T / sqrt(d)) V with
// Q = X Wq, K = E Wk, V = E Wv.
Var cross_attention(const Var& x, const std::vector<const Tensor*>& embeddings,
                    const Var& wq, const Var& wk, const Var& wv);

}  // namespace semstego::nn
