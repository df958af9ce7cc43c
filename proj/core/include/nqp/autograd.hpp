#pragma once

#include <functional>
#include <span>
#include <vector>

#include "nqp/tensor.hpp"

namespace nqp {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in program order, so walking the
// tape backwards visits every node in reverse topological order exactly
// once. Backward order is fixed by construction; identical graphs give
// bit-identical gradients.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var scale(Var a, double c);

  // y = x w + 1 b^T with x [R, C_in], w [C_in, C_out], b [C_out].
  Var linear(Var x, Var w, Var b);

  Var gelu(Var x);

  Var dft_time(Var x);
  Var idft_time(Var x);

  // Zeroes mode rows >= keep (mode-space tensors only).
  Var zero_modes(Var x, long keep);

  // Per-row complex product out_n = x_n W_n with x [T, 2 C_in] and
  // w [T, C_in, C_out, 2]; differentiable in both arguments.
  Var complex_pointwise_mul(Var x, Var w);

  // Second-order time derivative stencil along rows: central differences
  // inside, one-sided three-point at both ends.
  Var time_fd(Var x, double dt);

  // sum_n ||x_n|| / divisor, a scalar node.
  Var frobenius_rows_mean(Var x, double divisor);

  Var sum_squares(Var x);

  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  // Zero-filled if the node was never reached by backward.
  const Tensor& grad(Var v);
  bool requires_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;  // null for leaves
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> backprop);
  Tensor& ensure_grad(int id);
  void accumulate(int id, const std::function<void(Tensor&)>& fn);

  std::vector<Node> nodes_;
};

// Adam with bias correction. Moment buffers are laid out over the same
// flat parameter order the caller uses.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<double> m;
  std::vector<double> v;

  explicit AdamState(long n = 0, double learning_rate = 1e-4)
      : lr(learning_rate), m(static_cast<size_t>(n), 0.0), v(static_cast<size_t>(n), 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

}  // namespace nqp
