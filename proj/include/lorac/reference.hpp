#pragma once

#include "lorac/tensor.hpp"

// Serial reference kernels. Each output element is produced by the direct
// per-element sum with the (m, u, v) accumulation order, written as plainly
// as possible. These are the ground truth the parallel kernels are tested
// against, and the baseline of the kernel benchmark. Keep them boring.
namespace lorac::ref {

// x: [n, c_in, w, h], W: [c_out, c_in, k, k], y: [n, c_out, wo, ho].
void conv2d_forward(const float* x, const float* W, float* y, int n,
                    const ConvSpec& spec, int w, int h);

// dy: [n, c_out, wo, ho] -> dx: [n, c_in, w, h]
void conv2d_backward_input(const float* dy, const float* W, float* dx, int n,
                           const ConvSpec& spec, int w, int h);

// dy: [n, c_out, wo, ho] -> dW: [c_out, c_in, k, k]
void conv2d_backward_weight(const float* x, const float* dy, float* dW, int n,
                            const ConvSpec& spec, int w, int h);

// C[p,s] = A[p,q] * B[q,s]
void matmul(const float* A, const float* B, float* C, int p, int q, int s);

}  // namespace lorac::ref
