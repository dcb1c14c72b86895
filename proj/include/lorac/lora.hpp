#pragma once

#include <cstdint>

#include "lorac/tensor.hpp"

namespace lorac {

enum class RankVariant { PlainR, RTimesK };
enum class Granularity { LayerWise, KernelWise };

// Inner dimension of the factorization: r, or r*k tied to the kernel size.
struct RankMode {
    RankVariant variant = RankVariant::PlainR;
    int r = 1;

    int rho_dim(int k) const { return variant == RankVariant::PlainR ? r : r * k; }
};

// Model-size rule: the plain-r setting on backbones at ResNet-50 scale and
// above, r*k below it.
inline constexpr std::int64_t kPlainRankParamThreshold = 23'500'000;
RankVariant select_rank_mode(std::int64_t total_backbone_params);

// The (A, B, alpha) bundle attached to one frozen conv layer.
//   LayerWise:  A: [rho, c_in, k]         B: [c_out, k, rho]
//   KernelWise: A: [c_out, rho, c_in, k]  B: [c_out, k, rho]  (one pair per kernel)
// B starts at zero, so the branch contributes nothing until trained.
struct LowRankFactors {
    ConvSpec spec;
    RankMode mode;
    Granularity granularity = Granularity::LayerWise;
    float alpha = 1.0f;
    Param A;
    Param B;

    int rho() const { return mode.rho_dim(spec.k); }
};

// B = 0, A ~ Kaiming uniform U(-b, b) with b = sqrt(6)/sqrt(c_in * k).
LowRankFactors init_factors(const ConvSpec& spec, RankMode mode, Granularity granularity,
                            float alpha, std::uint64_t seed);

// Recompose the factor pair into a dense increment of shape [c_out, c_in, k, k].
//   LayerWise:  dW[o,m,u,v] = sum_rho B[o,u,rho] * A[rho,m,v]
//   KernelWise: dW[i,m,u,v] = sum_rho B[i,u,rho] * A[i,rho,m,v]
Tensor compose_delta(const LowRankFactors& f);

// Chain dL/d(merged weights) into the factor grads (includes the alpha
// scale). LayerWise only; KernelWise is not wired into training.
void accumulate_factor_grads(LowRankFactors& f, const Tensor& d_merged);

// W0 + alpha * compose_delta(f).
Tensor merged_conv_weights(const Tensor& w0, const LowRankFactors& f);

// A frozen conv with a trainable branch; forward runs one convolution over
// the recomposed weights.
struct LoraConvLayer {
    ConvSpec spec;
    Tensor w0;  // frozen, no grad storage
    LowRankFactors factors;
};

LoraConvLayer make_lora_conv(const ConvSpec& spec, Tensor w0, RankMode mode, float alpha,
                             std::uint64_t seed);
Tensor lora_forward(const LoraConvLayer& layer, const Tensor& x);

// Closed-form updated-parameter accounting.
std::int64_t count_full(const ConvSpec& spec);                        // c_out * c_in * k^2
std::int64_t count_kernel_wise(const ConvSpec& spec, int r);          // c_out * (c_in*r*k + r*k)
std::int64_t count_layer_wise(const ConvSpec& spec, RankMode mode);   // (c_out + c_in) * rho * k

// Exact rational, kept unreduced so tests can check cross-multiplied equality.
struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool equals(std::int64_t n2, std::int64_t d2) const { return num * d2 == n2 * den; }
};

Ratio ratio_kernel_wise(const ConvSpec& spec, int r);     // (c_in*r + r) / (c_in*k)
Ratio ratio_layer_wise(const ConvSpec& spec, RankMode mode);  // ((c_out+c_in)*rho) / (c_out*c_in*k)

}  // namespace lorac
