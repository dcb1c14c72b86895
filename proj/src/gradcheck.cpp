#include "lorac/gradcheck.hpp"

#include <cmath>

#include "lorac/lora.hpp"
#include "lorac/ops.hpp"
#include "lorac/rng.hpp"
#include "lorac/tensor.hpp"

namespace lorac::gradcheck {

std::vector<double> finite_diff(const std::function<double(const std::vector<float>&)>& f,
                                std::vector<float> x, float h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const float orig = x[i];
        x[i] = orig + h;
        const double up = f(x);
        x[i] = orig - h;
        const double down = f(x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * static_cast<double>(h));
    }
    return g;
}

double max_rel_err(const std::vector<double>& fd, const std::vector<float>& analytic, double floor) {
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        const double a = std::abs(fd[i]);
        const double b = std::abs(static_cast<double>(analytic[i]));
        const double denom = std::max(a, b);
        if (denom <= floor) continue;
        worst = std::max(worst, std::abs(fd[i] - static_cast<double>(analytic[i])) / denom);
    }
    return worst;
}

namespace {

// Projection loss sum(R * y) accumulated in double; linear in y, so central
// differences are exact up to f32 forward rounding and a coarse step is safe.
double projected(const Tensor& y, const Tensor& r) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        s += static_cast<double>(y.data[i]) * static_cast<double>(r.data[i]);
    }
    return s;
}

// The checked ops are linear in every perturbed element, so central
// differences have zero truncation error and a coarse step just averages
// away f32 forward rounding noise.
constexpr float kLinearStep = 0.5f;  // 2^-1

ConvSpec random_small_spec(Rng& rng, int* w, int* h) {
    ConvSpec spec;
    spec.c_in = rng.uniform_int(1, 3);
    spec.c_out = rng.uniform_int(1, 3);
    spec.k = rng.uniform_int(1, 3);
    spec.stride = rng.uniform_int(1, 2);
    spec.padding = rng.uniform_int(0, 1);
    *w = rng.uniform_int(spec.k, spec.k + 4);
    *h = rng.uniform_int(spec.k, spec.k + 4);
    return spec;
}

}  // namespace

Result check_conv2d(std::uint64_t seed) {
    Rng rng(seed);
    int w = 0, h = 0;
    const ConvSpec spec = random_small_spec(rng, &w, &h);
    Tensor x({spec.c_in, w, h});
    Tensor wt(spec.weight_shape());
    rng.fill_uniform(x, -1.0f, 1.0f);
    rng.fill_uniform(wt, -1.0f, 1.0f);
    Tensor y = ops::conv2d_forward(x, wt, spec);
    Tensor r(y.shape);
    rng.fill_uniform(r, -1.0f, 1.0f);

    auto [dx, dw] = ops::conv2d_backward(x, wt, spec, r);

    const auto fd_x = finite_diff(
        [&](const std::vector<float>& v) {
            Tensor xa = Tensor::from(x.shape, v);
            return projected(ops::conv2d_forward(xa, wt, spec), r);
        },
        x.data, kLinearStep);
    const auto fd_w = finite_diff(
        [&](const std::vector<float>& v) {
            Tensor wa = Tensor::from(wt.shape, v);
            return projected(ops::conv2d_forward(x, wa, spec), r);
        },
        wt.data, kLinearStep);

    Result res;
    res.op = "conv2d";
    res.max_rel_err = std::max(max_rel_err(fd_x, dx.data, 1e-6),
                               max_rel_err(fd_w, dw.data, 1e-6));
    res.pass = res.max_rel_err <= kRelTol;
    return res;
}

Result check_matmul(std::uint64_t seed) {
    Rng rng(seed);
    const int p = rng.uniform_int(1, 5), q = rng.uniform_int(1, 5), s = rng.uniform_int(1, 5);
    Tensor a({p, q}), b({q, s});
    rng.fill_uniform(a, -1.0f, 1.0f);
    rng.fill_uniform(b, -1.0f, 1.0f);
    Tensor r({p, s});
    rng.fill_uniform(r, -1.0f, 1.0f);

    // dL/dA = R B^T, dL/dB = A^T R for L = sum(R * AB)
    Tensor da = ops::matmul(r, ops::transpose(b));
    Tensor db = ops::matmul(ops::transpose(a), r);

    const auto fd_a = finite_diff(
        [&](const std::vector<float>& v) {
            return projected(ops::matmul(Tensor::from(a.shape, v), b), r);
        },
        a.data, kLinearStep);
    const auto fd_b = finite_diff(
        [&](const std::vector<float>& v) {
            return projected(ops::matmul(a, Tensor::from(b.shape, v)), r);
        },
        b.data, kLinearStep);

    Result res;
    res.op = "matmul";
    res.max_rel_err = std::max(max_rel_err(fd_a, da.data, 1e-6),
                               max_rel_err(fd_b, db.data, 1e-6));
    res.pass = res.max_rel_err <= kRelTol;
    return res;
}

Result check_cross_entropy(std::uint64_t seed) {
    Rng rng(seed);
    const int n = rng.uniform_int(2, 8);
    Tensor logits({n});
    rng.fill_uniform(logits, -3.0f, 3.0f);
    const int label = rng.uniform_int(0, n - 1);

    const auto res_ce = ops::cross_entropy_loss(logits, label);

    // Reference loss in double over the perturbed f32 logits.
    auto loss_fn = [&](const std::vector<float>& v) {
        double m = v[0];
        for (float x : v) m = std::max(m, static_cast<double>(x));
        double denom = 0.0;
        for (float x : v) denom += std::exp(static_cast<double>(x) - m);
        return std::log(denom) - (static_cast<double>(v[static_cast<std::size_t>(label)]) - m);
    };
    const auto fd = finite_diff(loss_fn, logits.data, 0.0009765625f);  // 2^-10

    Result res;
    res.op = "cross_entropy";
    res.max_rel_err = max_rel_err(fd, res_ce.dlogits.data, 1e-6);
    res.pass = res.max_rel_err <= kRelTol;
    return res;
}

Result check_lora_branch(std::uint64_t seed) {
    Rng rng(seed);
    int w = 0, h = 0;
    const ConvSpec spec = random_small_spec(rng, &w, &h);
    RankMode mode;
    mode.r = rng.uniform_int(1, 2);
    mode.variant = rng.uniform_int(0, 1) == 0 ? RankVariant::PlainR : RankVariant::RTimesK;
    const float alpha = static_cast<float>(rng.uniform_int(1, 4));

    Tensor w0(spec.weight_shape());
    rng.fill_uniform(w0, -1.0f, 1.0f);
    LoraConvLayer layer = make_lora_conv(spec, w0, mode, alpha, seed ^ 0x77);
    // Check at a generic point, not the all-zero init.
    rng.fill_uniform(layer.factors.B.value, -0.5f, 0.5f);

    Tensor x({spec.c_in, w, h});
    rng.fill_uniform(x, -1.0f, 1.0f);
    Tensor y = lora_forward(layer, x);
    Tensor r(y.shape);
    rng.fill_uniform(r, -1.0f, 1.0f);

    // Analytic: dL/dW_merged via conv backward, chained into the factors.
    auto [dx, dw] = ops::conv2d_backward(x, merged_conv_weights(layer.w0, layer.factors), spec, r);
    (void)dx;
    layer.factors.A.zero_grad();
    layer.factors.B.zero_grad();
    accumulate_factor_grads(layer.factors, dw);

    const auto fd_a = finite_diff(
        [&](const std::vector<float>& v) {
            LowRankFactors f = layer.factors;
            f.A.value = Tensor::from(f.A.value.shape, v);
            return projected(ops::conv2d_forward(x, merged_conv_weights(layer.w0, f), spec), r);
        },
        layer.factors.A.value.data, kLinearStep);
    const auto fd_b = finite_diff(
        [&](const std::vector<float>& v) {
            LowRankFactors f = layer.factors;
            f.B.value = Tensor::from(f.B.value.shape, v);
            return projected(ops::conv2d_forward(x, merged_conv_weights(layer.w0, f), spec), r);
        },
        layer.factors.B.value.data, kLinearStep);

    Result res;
    res.op = "lora_branch";
    res.max_rel_err = std::max(max_rel_err(fd_a, layer.factors.A.grad->data, 1e-6),
                               max_rel_err(fd_b, layer.factors.B.grad->data, 1e-6));
    res.pass = res.max_rel_err <= kRelTol;
    return res;
}

}  // namespace lorac::gradcheck
