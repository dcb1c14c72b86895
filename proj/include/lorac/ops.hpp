#pragma once

#include <span>
#include <utility>
#include <vector>

#include "lorac/tensor.hpp"

namespace lorac::ops {

// y[o,i,j] = sum_m sum_u sum_v W[o,m,u,v] * x[m, i*stride-pad+u, j*stride-pad+v]
// with zero padding. x: [c_in, w, h], W: [c_out, c_in, k, k].
Tensor conv2d_forward(const Tensor& x, const Tensor& W, const ConvSpec& spec);

// Adjoints of conv2d_forward. dy must have the forward output shape.
std::pair<Tensor, Tensor> conv2d_backward(const Tensor& x, const Tensor& W,
                                          const ConvSpec& spec, const Tensor& dy);

// Batched variants over [n, c, w, h]; identical per-sample semantics.
Tensor conv2d_forward_batch(const Tensor& x, const Tensor& W, const ConvSpec& spec);
std::pair<Tensor, Tensor> conv2d_backward_batch(const Tensor& x, const Tensor& W,
                                                const ConvSpec& spec, const Tensor& dy);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);

// Reinterpret t as new_shape (row-major), then permute axes by axis_order.
// Result dim i equals new_shape[axis_order[i]]; output is contiguous.
Tensor reshape_permute(const Tensor& t, const std::vector<int>& new_shape,
                       const std::vector<int>& axis_order);

struct CrossEntropyResult {
    float loss;
    Tensor dlogits;
};

// loss = -log softmax(logits)[label], max-subtraction stabilized.
CrossEntropyResult cross_entropy_loss(const Tensor& logits, int label);

// value <- value - lr * (grad + weight_decay * value); grads zeroed after.
// Every param must carry populated grad storage.
void sgd_step(std::span<Param* const> params, float lr, float weight_decay);

}  // namespace lorac::ops
