#include "lorac/lora.hpp"

#include <cmath>
#include <utility>

#include "lorac/ops.hpp"
#include "lorac/rng.hpp"

namespace lorac {

RankVariant select_rank_mode(std::int64_t total_backbone_params) {
    return total_backbone_params >= kPlainRankParamThreshold ? RankVariant::PlainR
                                                             : RankVariant::RTimesK;
}

LowRankFactors init_factors(const ConvSpec& spec, RankMode mode, Granularity granularity,
                            float alpha, std::uint64_t seed) {
    spec.validate();
    if (mode.r < 1) {
        throw std::invalid_argument("init_factors: rank r must be >= 1, got " + std::to_string(mode.r));
    }
    if (alpha < 0.0f) {
        throw std::invalid_argument("init_factors: alpha must be non-negative");
    }
    LowRankFactors f;
    f.spec = spec;
    f.mode = mode;
    f.granularity = granularity;
    f.alpha = alpha;
    const int rho = f.rho();
    if (granularity == Granularity::LayerWise) {
        f.A.value = Tensor({rho, spec.c_in, spec.k});
        f.B.value = Tensor({spec.c_out, spec.k, rho});
    } else {
        f.A.value = Tensor({spec.c_out, rho, spec.c_in, spec.k});
        f.B.value = Tensor({spec.c_out, spec.k, rho});
    }
    f.A.name = "lora_A";
    f.B.name = "lora_B";

    const float bound = std::sqrt(6.0f) / std::sqrt(static_cast<float>(spec.c_in * spec.k));
    Rng rng(Rng::mix(seed, 0x10f4));
    rng.fill_uniform(f.A.value, -bound, bound);
    f.B.value.zero();  // zero-init: the branch starts as an exact no-op

    f.A.make_trainable();
    f.B.make_trainable();
    return f;
}

Tensor compose_delta(const LowRankFactors& f) {
    const ConvSpec& s = f.spec;
    const int rho = f.rho();
    if (f.granularity == Granularity::LayerWise) {
        if (f.A.value.shape != std::vector<int>{rho, s.c_in, s.k} ||
            f.B.value.shape != std::vector<int>{s.c_out, s.k, rho}) {
            throw std::invalid_argument("compose_delta: layer-wise factor shapes inconsistent: A " +
                                        shape_to_string(f.A.value.shape) + ", B " +
                                        shape_to_string(f.B.value.shape));
        }
        // B flattens to (c_out*k) x rho with row o*k+u, A to rho x (c_in*k)
        // with column m*k+v; the product lands on (o,k,m,k) axes.
        Tensor b2 = Tensor::from({s.c_out * s.k, rho}, f.B.value.data);
        Tensor a2 = Tensor::from({rho, s.c_in * s.k}, f.A.value.data);
        Tensor prod = ops::matmul(b2, a2);
        return ops::reshape_permute(prod, {s.c_out, s.k, s.c_in, s.k}, {0, 2, 1, 3});
    }

    if (f.A.value.shape != std::vector<int>{s.c_out, rho, s.c_in, s.k} ||
        f.B.value.shape != std::vector<int>{s.c_out, s.k, rho}) {
        throw std::invalid_argument("compose_delta: kernel-wise factor shapes inconsistent: A " +
                                    shape_to_string(f.A.value.shape) + ", B " +
                                    shape_to_string(f.B.value.shape));
    }
    Tensor dw({s.c_out, s.c_in, s.k, s.k});
    const float* A = f.A.value.ptr();
    const float* B = f.B.value.ptr();
    float* out = dw.ptr();
    for (int i = 0; i < s.c_out; ++i) {
        const float* Ai = A + static_cast<std::size_t>(i) * rho * s.c_in * s.k;
        const float* Bi = B + static_cast<std::size_t>(i) * s.k * rho;
        for (int m = 0; m < s.c_in; ++m) {
            for (int u = 0; u < s.k; ++u) {
                for (int v = 0; v < s.k; ++v) {
                    float acc = 0.0f;
                    for (int p = 0; p < rho; ++p) {
                        acc += Bi[u * rho + p] * Ai[(p * s.c_in + m) * s.k + v];
                    }
                    out[((i * s.c_in + m) * s.k + u) * s.k + v] = acc;
                }
            }
        }
    }
    return dw;
}

void accumulate_factor_grads(LowRankFactors& f, const Tensor& d_merged) {
    if (f.granularity != Granularity::LayerWise) {
        throw std::invalid_argument("accumulate_factor_grads: kernel-wise branches are not trainable");
    }
    const ConvSpec& s = f.spec;
    if (d_merged.shape != s.weight_shape()) {
        throw std::invalid_argument("accumulate_factor_grads: gradient shape " +
                                    shape_to_string(d_merged.shape) + " != weights " +
                                    shape_to_string(s.weight_shape()));
    }
    if (!f.A.grad || !f.B.grad) {
        throw std::invalid_argument("accumulate_factor_grads: factors carry no grad storage");
    }
    const int rho = f.rho();
    // dP[o*k+u, m*k+v] = alpha * dW[o,m,u,v]; dB2 = dP * A2^T; dA2 = B2^T * dP.
    Tensor dp = ops::reshape_permute(d_merged, {s.c_out, s.c_in, s.k, s.k}, {0, 2, 1, 3});
    dp = Tensor::from({s.c_out * s.k, s.c_in * s.k}, std::move(dp.data));
    if (f.alpha != 1.0f) {
        for (float& x : dp.data) x *= f.alpha;
    }
    Tensor a2 = Tensor::from({rho, s.c_in * s.k}, f.A.value.data);
    Tensor b2 = Tensor::from({s.c_out * s.k, rho}, f.B.value.data);
    Tensor db = ops::matmul(dp, ops::transpose(a2));             // (c_out*k) x rho
    Tensor da = ops::matmul(ops::transpose(b2), dp);             // rho x (c_in*k)
    for (std::size_t i = 0; i < db.data.size(); ++i) f.B.grad->data[i] += db.data[i];
    for (std::size_t i = 0; i < da.data.size(); ++i) f.A.grad->data[i] += da.data[i];
}

Tensor merged_conv_weights(const Tensor& w0, const LowRankFactors& f) {
    if (w0.shape != f.spec.weight_shape()) {
        throw std::invalid_argument("merged_conv_weights: W0 shape " + shape_to_string(w0.shape) +
                                    " != spec " + shape_to_string(f.spec.weight_shape()));
    }
    Tensor delta = compose_delta(f);
    Tensor merged = w0;
    for (std::size_t i = 0; i < merged.data.size(); ++i) {
        merged.data[i] += f.alpha * delta.data[i];
    }
    return merged;
}

LoraConvLayer make_lora_conv(const ConvSpec& spec, Tensor w0, RankMode mode, float alpha,
                             std::uint64_t seed) {
    if (w0.shape != spec.weight_shape()) {
        throw std::invalid_argument("make_lora_conv: W0 shape " + shape_to_string(w0.shape) +
                                    " != spec " + shape_to_string(spec.weight_shape()));
    }
    LoraConvLayer layer;
    layer.spec = spec;
    layer.w0 = std::move(w0);
    layer.factors = init_factors(spec, mode, Granularity::LayerWise, alpha, seed);
    return layer;
}

Tensor lora_forward(const LoraConvLayer& layer, const Tensor& x) {
    return ops::conv2d_forward(x, merged_conv_weights(layer.w0, layer.factors), layer.spec);
}

std::int64_t count_full(const ConvSpec& spec) {
    return static_cast<std::int64_t>(spec.c_out) * spec.c_in * spec.k * spec.k;
}

std::int64_t count_kernel_wise(const ConvSpec& spec, int r) {
    return static_cast<std::int64_t>(spec.c_out) *
           (static_cast<std::int64_t>(spec.c_in) * r * spec.k + static_cast<std::int64_t>(r) * spec.k);
}

std::int64_t count_layer_wise(const ConvSpec& spec, RankMode mode) {
    return static_cast<std::int64_t>(spec.c_out + spec.c_in) * mode.rho_dim(spec.k) * spec.k;
}

Ratio ratio_kernel_wise(const ConvSpec& spec, int r) {
    return Ratio{static_cast<std::int64_t>(spec.c_in) * r + r,
                 static_cast<std::int64_t>(spec.c_in) * spec.k};
}

Ratio ratio_layer_wise(const ConvSpec& spec, RankMode mode) {
    return Ratio{static_cast<std::int64_t>(spec.c_out + spec.c_in) * mode.rho_dim(spec.k),
                 static_cast<std::int64_t>(spec.c_out) * spec.c_in * spec.k};
}

}  // namespace lorac
