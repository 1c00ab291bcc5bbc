#pragma once

#include <functional>
#include <vector>

#include "oob/tensor.hpp"

namespace oob {

class Tape;

// Handle into a Tape. Only meaningful while the owning tape is alive.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// creation order is a valid topological order for the backward sweep.
//
// Convolutions are lowered to im2col + GEMM; everything runs single-threaded
// with a fixed reduction order, so results are bitwise reproducible.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);
  Var scalar(Scalar value, bool requires_grad = false);

  const Tensor& value(Var v) const;
  Scalar scalar_value(Var v) const;
  // Gradient of the last backward() root w.r.t. v. Zero tensor if no
  // gradient reached v.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const;

  // Backward sweep from a scalar root (seeds d(root)/d(root) = 1).
  void backward(Var root);

  std::size_t node_count() const { return nodes_.size(); }

  // ---- elementwise / arithmetic ----
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_scalar(Var a, Scalar s);
  Var mul_scalar(Var a, Scalar s);
  Var square(Var a);
  Var sqrt_guarded(Var a);  // d/dx sqrt(x) taken as 0 at x == 0
  Var sigmoid(Var a);
  Var silu(Var a);
  Var softplus(Var a);
  // clamp to [0,1]; subgradient 1 where the input lies in [0,1], else 0
  Var clamp01(Var a);

  // ---- structure ----
  Var bias_add(Var x, Var bias);            // x: [N,C,H,W], bias: [C]
  Var concat_channels(Var a, Var b);        // [N,Ca,H,W] + [N,Cb,H,W]
  Var upsample2(Var x);                     // nearest-neighbour x2
  Var softmax_channels(Var x);              // softmax over dim 1 of [N,C,H,W]
  Var conv2d(Var x, Var w, int stride, int pad);

  // ---- reductions / indexing ----
  Var sum(Var x);                  // -> [1]
  Var mean(Var x);                 // -> [1]
  Var sum_per_image(Var x);        // [N,...] -> [N]
  Var index(Var x, long flat);     // -> [1]
  Var elem(Var x, long flat) { return index(x, flat); }
  Var max_of(const std::vector<Var>& scalars);  // first-wins ties
  Var mean_of(const std::vector<Var>& scalars);
  Var stack_images(const std::vector<Var>& images);  // k x [C,H,W] -> [k,C,H,W]

  // Custom op escape hatch: `back` receives the upstream gradient and this
  // tape, and is responsible for accumulating into the parents.
  Var custom(Tensor value, std::vector<Var> parents,
             std::function<void(Tape&, const Tensor&)> back);

  // For backward closures: accumulate `delta` into v's gradient buffer
  // (no-op if v does not require grad).
  void accumulate(Var v, const Tensor& delta);
  // Raw gradient buffer access for hot backward loops; nullptr if v does not
  // require grad. Buffer is guaranteed allocated and value-shaped.
  Tensor* grad_buffer(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    bool needs_grad = false;
    std::vector<int> parents;
    std::function<void(Tape&, const Tensor&)> back;
  };

  int push(Tensor value, std::vector<int> parents,
           std::function<void(Tape&, const Tensor&)> back);
  Node& node(Var v);
  const Node& node(Var v) const;
  void ensure_grad(int id);

  std::vector<Node> nodes_;
  Tensor zero_;  // returned by grad() when nothing reached the node
};

// Numeric gradient of `f` at `x` by central differences; used by tests and
// the acceptance suite as the independent oracle.
Tensor finite_difference(const std::function<Scalar(const Tensor&)>& f,
                         const Tensor& x, Scalar step);

// max(|a-b|) / max(|a|,|b|,floor), elementwise worst case.
Scalar max_relative_error(const Tensor& a, const Tensor& b, Scalar floor);

}  // namespace oob
