#include "lorac/kernels.hpp"

#include <cstring>

namespace lorac::kernels {

namespace {

// Valid output index range [lo, hi] such that idx*stride - padding + tap
// stays inside [0, extent). Empty range when hi < lo.
inline void tap_range(int tap, int extent, int out_extent, int stride, int padding,
                      int& lo, int& hi) {
    const int shift = padding - tap;
    lo = shift <= 0 ? 0 : (shift + stride - 1) / stride;
    const int hi_num = extent - 1 + shift;
    hi = hi_num < 0 ? -1 : hi_num / stride;
    if (hi > out_extent - 1) hi = out_extent - 1;
}

}  // namespace

void conv2d_forward(const float* x, const float* W, float* y, int n,
                    const ConvSpec& spec, int w, int h) {
    const int wo = spec.out_dim(w);
    const int ho = spec.out_dim(h);
    const int k = spec.k, st = spec.stride, pad = spec.padding;
    const std::size_t x_stride = static_cast<std::size_t>(spec.c_in) * w * h;
    const std::size_t y_stride = static_cast<std::size_t>(spec.c_out) * wo * ho;

#pragma omp parallel for collapse(2) schedule(static)
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < spec.c_out; ++o) {
            const float* xs = x + s * x_stride;
            float* ys = y + s * y_stride + static_cast<std::size_t>(o) * wo * ho;
            std::memset(ys, 0, sizeof(float) * wo * ho);
            for (int m = 0; m < spec.c_in; ++m) {
                const float* xm = xs + static_cast<std::size_t>(m) * w * h;
                const float* Wm = W + (static_cast<std::size_t>(o) * spec.c_in + m) * k * k;
                for (int u = 0; u < k; ++u) {
                    int i_lo, i_hi;
                    tap_range(u, w, wo, st, pad, i_lo, i_hi);
                    for (int v = 0; v < k; ++v) {
                        const float wval = Wm[u * k + v];
                        int j_lo, j_hi;
                        tap_range(v, h, ho, st, pad, j_lo, j_hi);
                        const int off = v - pad;
                        for (int i = i_lo; i <= i_hi; ++i) {
                            const int a = i * st - pad + u;
                            float* yrow = ys + i * ho;
                            const float* xrow = xm + a * h;
                            for (int j = j_lo; j <= j_hi; ++j) {
                                yrow[j] += wval * xrow[j * st + off];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(const float* dy, const float* W, float* dx, int n,
                           const ConvSpec& spec, int w, int h) {
    const int wo = spec.out_dim(w);
    const int ho = spec.out_dim(h);
    const int k = spec.k, st = spec.stride, pad = spec.padding;
    const std::size_t dx_stride = static_cast<std::size_t>(spec.c_in) * w * h;
    const std::size_t dy_stride = static_cast<std::size_t>(spec.c_out) * wo * ho;

#pragma omp parallel for collapse(2) schedule(static)
    for (int s = 0; s < n; ++s) {
        for (int m = 0; m < spec.c_in; ++m) {
            float* dxm = dx + s * dx_stride + static_cast<std::size_t>(m) * w * h;
            std::memset(dxm, 0, sizeof(float) * w * h);
            for (int o = 0; o < spec.c_out; ++o) {
                const float* dyo = dy + s * dy_stride + static_cast<std::size_t>(o) * wo * ho;
                const float* Wm = W + (static_cast<std::size_t>(o) * spec.c_in + m) * k * k;
                for (int u = 0; u < k; ++u) {
                    int i_lo, i_hi;
                    tap_range(u, w, wo, st, pad, i_lo, i_hi);
                    for (int v = 0; v < k; ++v) {
                        const float wval = Wm[u * k + v];
                        int j_lo, j_hi;
                        tap_range(v, h, ho, st, pad, j_lo, j_hi);
                        const int off = v - pad;
                        for (int i = i_lo; i <= i_hi; ++i) {
                            const int a = i * st - pad + u;
                            const float* dyrow = dyo + i * ho;
                            float* dxrow = dxm + a * h;
                            for (int j = j_lo; j <= j_hi; ++j) {
                                dxrow[j * st + off] += wval * dyrow[j];
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_weight(const float* x, const float* dy, float* dW, int n,
                            const ConvSpec& spec, int w, int h) {
    const int wo = spec.out_dim(w);
    const int ho = spec.out_dim(h);
    const int k = spec.k, st = spec.stride, pad = spec.padding;
    const std::size_t x_stride = static_cast<std::size_t>(spec.c_in) * w * h;
    const std::size_t dy_stride = static_cast<std::size_t>(spec.c_out) * wo * ho;

#pragma omp parallel for collapse(2) schedule(static)
    for (int o = 0; o < spec.c_out; ++o) {
        for (int m = 0; m < spec.c_in; ++m) {
            float* dWm = dW + (static_cast<std::size_t>(o) * spec.c_in + m) * k * k;
            for (int u = 0; u < k; ++u) {
                int i_lo, i_hi;
                tap_range(u, w, wo, st, pad, i_lo, i_hi);
                for (int v = 0; v < k; ++v) {
                    int j_lo, j_hi;
                    tap_range(v, h, ho, st, pad, j_lo, j_hi);
                    const int off = v - pad;
                    float acc = 0.0f;
                    for (int s = 0; s < n; ++s) {
                        const float* xm = x + s * x_stride + static_cast<std::size_t>(m) * w * h;
                        const float* dyo = dy + s * dy_stride + static_cast<std::size_t>(o) * wo * ho;
                        for (int i = i_lo; i <= i_hi; ++i) {
                            const int a = i * st - pad + u;
                            const float* dyrow = dyo + i * ho;
                            const float* xrow = xm + a * h;
                            for (int j = j_lo; j <= j_hi; ++j) {
                                acc += dyrow[j] * xrow[j * st + off];
                            }
                        }
                    }
                    dWm[u * k + v] = acc;
                }
            }
        }
    }
}

void matmul(const float* A, const float* B, float* C, int p, int q, int s) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < p; ++i) {
        float* crow = C + static_cast<std::size_t>(i) * s;
        std::memset(crow, 0, sizeof(float) * s);
        const float* arow = A + static_cast<std::size_t>(i) * q;
        for (int t = 0; t < q; ++t) {
            const float aval = arow[t];
            const float* brow = B + static_cast<std::size_t>(t) * s;
            for (int j = 0; j < s; ++j) {
                crow[j] += aval * brow[j];
            }
        }
    }
}

}  // namespace lorac::kernels
