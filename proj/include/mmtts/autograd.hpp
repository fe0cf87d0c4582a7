#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mmtts/rng.hpp"
#include "mmtts/tensor.hpp"

namespace mmtts {

// Reverse-mode tape node. Children own their parents; the backprop closure
// captures raw pointers only (the parents vector keeps them alive), so no
// reference cycles form.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;
};

// Cheap handle over a tape node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool defined() const { return node_ != nullptr; }
  std::shared_ptr<Node> node() const { return node_; }

  void zero_grad();
  double item() const { return node_->value.at(0); }

  static Var wrap(std::shared_ptr<Node> n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  std::shared_ptr<Node> node_;
};

// Global (thread-local) gradient mode. Ops skip tape construction while off.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Seeds root.grad with ones (root must be scalar unless seed given), walks the
// tape in reverse topological order, accumulates into leaf grads, then frees
// the interior of the graph so deep chains never unwind recursively.
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

// --- ops -------------------------------------------------------------------

Var constant(Tensor v);  // leaf, no grad

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);
Var neg(const Var& a);

Var relu(const Var& a);
Var sigmoid(const Var& a);
Var tanh_op(const Var& a);
Var silu(const Var& a);
Var abs_op(const Var& a);

Var matmul(const Var& a, const Var& b);       // [m x k] * [k x n]
Var transpose(const Var& a);                  // rank-2
Var reshape(const Var& a, std::vector<int> shape);
Var slice_rows(const Var& a, int r0, int r1);   // rows [r0, r1)
Var slice_cols(const Var& a, int c0, int c1);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);

Var softmax_rows(const Var& a);
// (x - mean) / (std + eps) per row, population std.
Var row_normalize(const Var& a, double eps);

Var add_row_broadcast(const Var& x, const Var& v);  // x [R x C] + v [C] per row
Var mul_row_broadcast(const Var& x, const Var& v);
Var add_col_broadcast(const Var& x, const Var& v);  // x [R x C] + v [R] per col

Var sum_all(const Var& a);   // -> [1]
Var mean_all(const Var& a);  // -> [1]

// Same-padding 1-D convolution over channel-major input, odd kernel width.
Var conv1d(const Var& x, const Var& w, const Var& b);            // x [Cin x T], w [Cout x Cin x K], b [Cout]
Var conv1d_depthwise(const Var& x, const Var& k, const Var& b);  // x [C x T], k [C x 1 x K], b [C]

Var embedding_lookup(const Var& table, const std::vector<int>& ids);  // -> [L x D]
Var dropout(const Var& x, double p, Rng& rng, bool training);
Var detach(const Var& x);

Var mse(const Var& a, const Var& b);  // mean squared error -> [1]
Var mae(const Var& a, const Var& b);  // mean absolute error -> [1]

}  // namespace mmtts
