#include "lorac/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lorac/kernels.hpp"

namespace lorac::ops {

namespace {

void check_conv_args(const Tensor& x, const Tensor& W, const ConvSpec& spec, bool batched) {
    spec.validate();
    const int want_rank = batched ? 4 : 3;
    if (x.rank() != want_rank) {
        throw std::invalid_argument("conv2d: x must have rank " + std::to_string(want_rank) +
                                    ", got shape " + shape_to_string(x.shape));
    }
    if (W.shape != spec.weight_shape()) {
        throw std::invalid_argument("conv2d: W shape " + shape_to_string(W.shape) +
                                    " does not match spec " + shape_to_string(spec.weight_shape()));
    }
    const int caxis = batched ? 1 : 0;
    if (x.dim(caxis) != spec.c_in) {
        throw std::invalid_argument("conv2d: x channel axis " + std::to_string(caxis) + " is " +
                                    std::to_string(x.dim(caxis)) + ", spec.c_in is " +
                                    std::to_string(spec.c_in));
    }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, const Tensor& W, const ConvSpec& spec) {
    check_conv_args(x, W, spec, false);
    const int w = x.dim(1), h = x.dim(2);
    Tensor y({spec.c_out, spec.out_dim(w), spec.out_dim(h)});
    kernels::conv2d_forward(x.ptr(), W.ptr(), y.ptr(), 1, spec, w, h);
    return y;
}

Tensor conv2d_forward_batch(const Tensor& x, const Tensor& W, const ConvSpec& spec) {
    check_conv_args(x, W, spec, true);
    const int n = x.dim(0), w = x.dim(2), h = x.dim(3);
    Tensor y({n, spec.c_out, spec.out_dim(w), spec.out_dim(h)});
    kernels::conv2d_forward(x.ptr(), W.ptr(), y.ptr(), n, spec, w, h);
    return y;
}

std::pair<Tensor, Tensor> conv2d_backward(const Tensor& x, const Tensor& W,
                                          const ConvSpec& spec, const Tensor& dy) {
    check_conv_args(x, W, spec, false);
    const int w = x.dim(1), h = x.dim(2);
    const std::vector<int> want_dy{spec.c_out, spec.out_dim(w), spec.out_dim(h)};
    if (dy.shape != want_dy) {
        throw std::invalid_argument("conv2d_backward: dy shape " + shape_to_string(dy.shape) +
                                    " does not match forward output " + shape_to_string(want_dy));
    }
    Tensor dx(x.shape);
    Tensor dW(W.shape);
    kernels::conv2d_backward_input(dy.ptr(), W.ptr(), dx.ptr(), 1, spec, w, h);
    kernels::conv2d_backward_weight(x.ptr(), dy.ptr(), dW.ptr(), 1, spec, w, h);
    return {std::move(dx), std::move(dW)};
}

std::pair<Tensor, Tensor> conv2d_backward_batch(const Tensor& x, const Tensor& W,
                                                const ConvSpec& spec, const Tensor& dy) {
    check_conv_args(x, W, spec, true);
    const int n = x.dim(0), w = x.dim(2), h = x.dim(3);
    const std::vector<int> want_dy{n, spec.c_out, spec.out_dim(w), spec.out_dim(h)};
    if (dy.shape != want_dy) {
        throw std::invalid_argument("conv2d_backward: dy shape " + shape_to_string(dy.shape) +
                                    " does not match forward output " + shape_to_string(want_dy));
    }
    Tensor dx(x.shape);
    Tensor dW(W.shape);
    kernels::conv2d_backward_input(dy.ptr(), W.ptr(), dx.ptr(), n, spec, w, h);
    kernels::conv2d_backward_weight(x.ptr(), dy.ptr(), dW.ptr(), n, spec, w, h);
    return {std::move(dx), std::move(dW)};
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2) {
        throw std::invalid_argument("matmul: operands must be rank-2, got " +
                                    shape_to_string(a.shape) + " and " + shape_to_string(b.shape));
    }
    if (a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: inner dims differ: " + shape_to_string(a.shape) +
                                    " x " + shape_to_string(b.shape));
    }
    Tensor c({a.dim(0), b.dim(1)});
    kernels::matmul(a.ptr(), b.ptr(), c.ptr(), a.dim(0), a.dim(1), b.dim(1));
    return c;
}

Tensor transpose(const Tensor& m) {
    return reshape_permute(m, m.shape, {1, 0});
}

Tensor reshape_permute(const Tensor& t, const std::vector<int>& new_shape,
                       const std::vector<int>& axis_order) {
    if (shape_numel(new_shape) != t.numel()) {
        throw std::invalid_argument("reshape_permute: new shape " + shape_to_string(new_shape) +
                                    " has " + std::to_string(shape_numel(new_shape)) +
                                    " elements, tensor has " + std::to_string(t.numel()));
    }
    const int r = static_cast<int>(new_shape.size());
    if (static_cast<int>(axis_order.size()) != r) {
        throw std::invalid_argument("reshape_permute: axis_order rank " +
                                    std::to_string(axis_order.size()) + " != shape rank " +
                                    std::to_string(r));
    }
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    for (int a : axis_order) {
        if (a < 0 || a >= r || seen[static_cast<std::size_t>(a)]) {
            throw std::invalid_argument("reshape_permute: axis_order is not a permutation of 0.." +
                                        std::to_string(r - 1));
        }
        seen[static_cast<std::size_t>(a)] = true;
    }

    std::vector<int> out_shape(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) out_shape[i] = new_shape[axis_order[i]];
    Tensor out(out_shape);

    // Strides of the reshaped view, then gather in output order.
    std::vector<std::int64_t> in_strides(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * new_shape[i + 1];

    std::vector<int> idx(static_cast<std::size_t>(r), 0);
    const std::int64_t total = out.numel();
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t src = 0;
        for (int i = 0; i < r; ++i) src += idx[i] * in_strides[axis_order[i]];
        out.data[static_cast<std::size_t>(flat)] = t.data[static_cast<std::size_t>(src)];
        for (int i = r - 1; i >= 0; --i) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

CrossEntropyResult cross_entropy_loss(const Tensor& logits, int label) {
    if (logits.rank() != 1 || logits.dim(0) < 2) {
        throw std::invalid_argument("cross_entropy_loss: logits must be rank-1 with >= 2 classes, got " +
                                    shape_to_string(logits.shape));
    }
    const int n = logits.dim(0);
    if (label < 0 || label >= n) {
        throw std::invalid_argument("cross_entropy_loss: label " + std::to_string(label) +
                                    " out of range [0," + std::to_string(n) + ")");
    }
    const float m = *std::max_element(logits.data.begin(), logits.data.end());
    double denom = 0.0;
    for (float v : logits.data) denom += std::exp(static_cast<double>(v - m));
    const double log_denom = std::log(denom);

    CrossEntropyResult res;
    res.loss = static_cast<float>(log_denom - static_cast<double>(logits.data[label] - m));
    res.dlogits = Tensor(logits.shape);
    for (int i = 0; i < n; ++i) {
        const double p = std::exp(static_cast<double>(logits.data[i] - m)) / denom;
        res.dlogits.data[i] = static_cast<float>(p) - (i == label ? 1.0f : 0.0f);
    }
    return res;
}

void sgd_step(std::span<Param* const> params, float lr, float weight_decay) {
    for (Param* p : params) {
        if (!p->grad.has_value()) {
            throw std::invalid_argument("sgd_step: param '" + p->name + "' has no grad storage");
        }
        float* v = p->value.ptr();
        float* g = p->grad->ptr();
        const std::int64_t n = p->value.numel();
        for (std::int64_t i = 0; i < n; ++i) {
            v[i] -= lr * (g[i] + weight_decay * v[i]);
            g[i] = 0.0f;
        }
    }
}

}  // namespace lorac::ops
