#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "pivflow/net/tensor.hpp"

namespace pivflow::net {

/// Reverse-mode autodiff over Tensor values. Graphs are built eagerly by
/// the op functions below; backward() walks the graph in reverse
/// topological order. Every op implements the full derivative (including
/// through sampling coordinates), so analytic gradients match finite
/// differences of the forward computation.
struct Variable {
    Tensor value;
    Tensor grad;            // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Variable>> parents;
    std::function<void(Variable&)> backward_fn; // scatters this->grad into parents

    void ensure_grad();
    void accumulate(const Tensor& g);
};

using Var = std::shared_ptr<Variable>;

/// Leaf with gradient tracking (parameters, differentiable inputs).
Var make_param(Tensor value);
/// Leaf without gradient tracking (inputs, constants).
Var make_const(Tensor value);

/// While false, ops propagate values but record no graph (inference mode).
bool grad_enabled();
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Seeds root->grad with ones (root must be scalar) and runs the chain.
void backward(const Var& root);

// —— elementwise and scalar ops ——
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var relu(const Var& a);
Var tanh_op(const Var& a);
Var sigmoid(const Var& a);
Var abs_op(const Var& a);
Var one_minus(const Var& a); // 1 - a

// —— shape ops ——
Var reshape(const Var& a, std::vector<int> shape);
Var concat_channels(const std::vector<Var>& xs); // [Ci,H,W] -> [sum C,H,W]
Var slice_channels(const Var& a, int c0, int c1); // [C,H,W] channels [c0,c1)

// —— reductions ——
Var sum_all(const Var& a);  // scalar [1]
Var mean_all(const Var& a); // scalar [1]

// —— linear algebra ——
Var matmul(const Var& a, const Var& b);   // [M,K] x [K,N] -> [M,N]
Var transpose2d(const Var& a);            // [M,N] -> [N,M]

// —— NN building blocks ——
/// x [C,H,W], w [O,C,kh,kw], b [O]; zero padding, square stride.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
/// Mean pooling with kernel = stride = k; spatial dims must divide by k.
Var avg_pool(const Var& a, int k);
/// Adds a [C] vector across the spatial dims of [C,H,W].
Var add_channel_vec(const Var& x, const Var& vec);
/// Softmax over groups: a is [G*M,H,W]; normalizes across the G slots
/// {a[g*M + m, y, x] : g in [0,G)} for each (m,y,x).
Var softmax_groups(const Var& a, int groups);

/// Bilinear window lookup in a correlation pyramid. Each level is
/// [h*w, hl, wl] (source location -> target plane pooled by 2^level).
/// flow is [2,h,w] in level-0 pixel units. For each source location the op
/// samples a (2r+1)^2 window per level centered at the flow-displaced
/// target and concatenates over levels: output [L*(2r+1)^2, h, w].
/// Out-of-range samples are zero-padded. Differentiable w.r.t. both the
/// pyramid values and the flow.
Var corr_lookup(const std::vector<Var>& pyramid, const Var& flow, int radius);

/// Learned convex upsampling: flow [2,h,w], weights [9*factor^2,h,w]
/// (already softmax-normalized over the 9 slots). Each fine pixel is a
/// convex combination of the 3x3 coarse neighborhood (zero padded).
Var convex_upsample(const Var& flow, const Var& weights, int factor);

} // namespace pivflow::net
