#pragma once

#include "lorac/tensor.hpp"

// OpenMP-parallel kernels. Work is split across independent output slices
// (sample x channel), and every output element is accumulated by exactly one
// thread with the (m, u, v) tap order, so results are bitwise deterministic
// for any thread count. Tested against lorac::ref.
namespace lorac::kernels {

void conv2d_forward(const float* x, const float* W, float* y, int n,
                    const ConvSpec& spec, int w, int h);

void conv2d_backward_input(const float* dy, const float* W, float* dx, int n,
                           const ConvSpec& spec, int w, int h);

void conv2d_backward_weight(const float* x, const float* dy, float* dW, int n,
                            const ConvSpec& spec, int w, int h);

void matmul(const float* A, const float* B, float* C, int p, int q, int s);

}  // namespace lorac::kernels
