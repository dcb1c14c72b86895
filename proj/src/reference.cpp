#include "lorac/reference.hpp"

namespace lorac::ref {

void conv2d_forward(const float* x, const float* W, float* y, int n,
                    const ConvSpec& spec, int w, int h) {
    const int wo = spec.out_dim(w);
    const int ho = spec.out_dim(h);
    const int k = spec.k;
    for (int s = 0; s < n; ++s) {
        const float* xs = x + static_cast<std::size_t>(s) * spec.c_in * w * h;
        float* ys = y + static_cast<std::size_t>(s) * spec.c_out * wo * ho;
        for (int o = 0; o < spec.c_out; ++o) {
            for (int i = 0; i < wo; ++i) {
                for (int j = 0; j < ho; ++j) {
                    float acc = 0.0f;
                    for (int m = 0; m < spec.c_in; ++m) {
                        for (int u = 0; u < k; ++u) {
                            for (int v = 0; v < k; ++v) {
                                const int a = i * spec.stride - spec.padding + u;
                                const int b = j * spec.stride - spec.padding + v;
                                if (a < 0 || a >= w || b < 0 || b >= h) continue;  // zero pad
                                acc += W[((o * spec.c_in + m) * k + u) * k + v] *
                                       xs[(m * w + a) * h + b];
                            }
                        }
                    }
                    ys[(o * wo + i) * ho + j] = acc;
                }
            }
        }
    }
}

void conv2d_backward_input(const float* dy, const float* W, float* dx, int n,
                           const ConvSpec& spec, int w, int h) {
    const int wo = spec.out_dim(w);
    const int ho = spec.out_dim(h);
    const int k = spec.k;
    for (int s = 0; s < n; ++s) {
        const float* dys = dy + static_cast<std::size_t>(s) * spec.c_out * wo * ho;
        float* dxs = dx + static_cast<std::size_t>(s) * spec.c_in * w * h;
        for (int m = 0; m < spec.c_in; ++m) {
            for (int a = 0; a < w; ++a) {
                for (int b = 0; b < h; ++b) {
                    float acc = 0.0f;
                    for (int o = 0; o < spec.c_out; ++o) {
                        for (int u = 0; u < k; ++u) {
                            for (int v = 0; v < k; ++v) {
                                const int num_i = a + spec.padding - u;
                                const int num_j = b + spec.padding - v;
                                if (num_i < 0 || num_j < 0) continue;
                                if (num_i % spec.stride || num_j % spec.stride) continue;
                                const int i = num_i / spec.stride;
                                const int j = num_j / spec.stride;
                                if (i >= wo || j >= ho) continue;
                                acc += W[((o * spec.c_in + m) * k + u) * k + v] *
                                       dys[(o * wo + i) * ho + j];
                            }
                        }
                    }
                    dxs[(m * w + a) * h + b] = acc;
                }
            }
        }
    }
}

void conv2d_backward_weight(const float* x, const float* dy, float* dW, int n,
                            const ConvSpec& spec, int w, int h) {
    const int wo = spec.out_dim(w);
    const int ho = spec.out_dim(h);
    const int k = spec.k;
    for (int o = 0; o < spec.c_out; ++o) {
        for (int m = 0; m < spec.c_in; ++m) {
            for (int u = 0; u < k; ++u) {
                for (int v = 0; v < k; ++v) {
                    float acc = 0.0f;
                    for (int s = 0; s < n; ++s) {
                        const float* xs = x + static_cast<std::size_t>(s) * spec.c_in * w * h;
                        const float* dys = dy + static_cast<std::size_t>(s) * spec.c_out * wo * ho;
                        for (int i = 0; i < wo; ++i) {
                            for (int j = 0; j < ho; ++j) {
                                const int a = i * spec.stride - spec.padding + u;
                                const int b = j * spec.stride - spec.padding + v;
                                if (a < 0 || a >= w || b < 0 || b >= h) continue;
                                acc += dys[(o * wo + i) * ho + j] * xs[(m * w + a) * h + b];
                            }
                        }
                    }
                    dW[((o * spec.c_in + m) * k + u) * k + v] = acc;
                }
            }
        }
    }
}

void matmul(const float* A, const float* B, float* C, int p, int q, int s) {
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < s; ++j) {
            float acc = 0.0f;
            for (int t = 0; t < q; ++t) {
                acc += A[i * q + t] * B[t * s + j];
            }
            C[i * s + j] = acc;
        }
    }
}

}  // namespace lorac::ref
