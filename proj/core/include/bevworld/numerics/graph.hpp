#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bevworld/numerics/tensor.hpp"

namespace bevworld::num {

class Node;
using Var = std::shared_ptr<Node>;

/// One node of the reverse-mode tape. Nodes are created by the op functions
/// below; the graph is held alive by shared ownership from outputs to
/// inputs, so dropping the loss Var releases the whole forward tape while
/// leaf/parameter nodes survive with their accumulated gradients.
///
/// Contract: one backward() per tape. Rebuild the forward graph (and zero
/// parameter gradients) for the next step.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  bool backward_ran = false;
  const char* op = "leaf";

  std::vector<Var> parents;
  std::function<void(Node&)> backprop;

  void ensure_grad();
  bool has_grad() const { return grad.numel() == value.numel() && value.numel() > 0; }
};

Var constant(Tensor t);
Var leaf(Tensor t, bool requires_grad = true);
/// Detached copy: same value, no graph history.
Var stopgrad(const Var& x);

// ---- elementwise (shapes must match exactly; scalars via *_scalar) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var reciprocal(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var softplus(const Var& a);

// ---- reductions ----
Var sum_all(const Var& a);
Var mean_all(const Var& a);
Var norm_l1(const Var& a);
Var norm_l2sq(const Var& a);
/// [..., K] -> [..., 1]
Var sum_lastdim(const Var& a);
/// Drop `axis` by summation.
Var sum_axis(const Var& a, int axis);

// ---- structured ----
Var softmax_lastdim(const Var& a);
/// Mean cross-entropy of softmax(logits) against integer targets.
Var cross_entropy_mean(const Var& logits, const std::vector<int>& targets);
Var matmul(const Var& a, const Var& b);
Var reshape(const Var& a, Shape shape);
Var concat(const std::vector<Var>& parts, int axis);
/// out[m, ...] = x[idx[m], ...]; idx are constants.
Var gather_rows(const Var& x, const std::vector<int64_t>& idx);
/// [N,C] + [C] broadcast over rows.
Var add_rowvec(const Var& x, const Var& v);
/// [N,C] * [N,1] broadcast over columns.
Var mul_colvec(const Var& x, const Var& c);

/// 2D convolution on HWC layout. weight is [Kh,Kw,Cin,Cout], bias [Cout]
/// (pass nullptr to skip). Zero padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);

/// Bilinear gather from map [H,W,C] at pts [N,2] (row, col index coords,
/// constants). Zero padding beyond the node lattice; differentiable wrt the
/// map only.
Var bilinear_gather(const Var& map, const Tensor& pts);

/// Trilinear gather from vol [D0,D1,D2,C] at pts [N,3] (index coords,
/// constants). Zero padding; differentiable wrt the volume only.
Var trilinear_gather(const Var& vol, const Tensor& pts);

/// out[i,j] = x[i-dy, j-dx] with zero fill.
Var shift2d(const Var& x, int dy, int dx);

/// Volume-rendering weights: w[i,j] = exp(-sum_{l<j} sigma[i,l]*delta[l]) *
/// (1 - exp(-sigma[i,j]*delta[j])). sigma is [N,n], delta a constant [n].
Var render_weights(const Var& sigma, const Tensor& delta);

/// Transmittance before each waypoint plus the final slot: [N, n+1],
/// tau[i,0] = 1, tau[i,n] = exp(-sum sigma*delta). Plain values (diagnostic).
Tensor transmittance(const Tensor& sigma, const Tensor& delta);

// ---- composites ----
Var linear(const Var& x, const Var& w, const Var& b);
Var mse(const Var& a, const Var& b);

/// Runs reverse-mode accumulation from a scalar loss. Throws if the loss is
/// not scalar or if backward already ran on this node.
void backward(const Var& loss);

}  // namespace bevworld::num
