#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lorac/gradcheck.hpp"
#include "lorac/ops.hpp"
#include "lorac/reference.hpp"
#include "lorac/rng.hpp"
#include "support/test_util.hpp"

using namespace lorac;
using test_util::max_abs_diff;

TEST_CASE("conv2d_forward: 1x1 kernel is a scalar scale") {
    Tensor x({1, 3, 3}, 1.0f);
    Tensor w = Tensor::from({1, 1, 1, 1}, {2.0f});
    Tensor y = ops::conv2d_forward(x, w, ConvSpec{1, 1, 1, 1, 0});
    CHECK(y.shape == std::vector<int>{1, 3, 3});
    for (float v : y.data) CHECK(v == 2.0f);
}

TEST_CASE("conv2d_forward: all-ones 3x3 kernel sums the input") {
    Tensor x = Tensor::from({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    Tensor w({1, 1, 3, 3}, 1.0f);
    Tensor y = ops::conv2d_forward(x, w, ConvSpec{1, 1, 3, 1, 0});
    CHECK(y.shape == std::vector<int>{1, 1, 1});
    CHECK(y.data[0] == 45.0f);
}

TEST_CASE("conv2d_forward matches the direct-loop oracle on random instances") {
    Rng rng(1234);
    for (int trial = 0; trial < 60; ++trial) {
        ConvSpec spec;
        spec.c_in = rng.uniform_int(1, 4);
        spec.c_out = rng.uniform_int(1, 4);
        spec.k = rng.uniform_int(1, 3);
        spec.stride = rng.uniform_int(1, 2);
        spec.padding = rng.uniform_int(0, 1);
        const int w = rng.uniform_int(spec.k, 8), h = rng.uniform_int(spec.k, 8);
        Tensor x({spec.c_in, w, h}), wt(spec.weight_shape());
        rng.fill_uniform(x, -1.0f, 1.0f);
        rng.fill_uniform(wt, -1.0f, 1.0f);

        Tensor got = ops::conv2d_forward(x, wt, spec);
        Tensor want({spec.c_out, spec.out_dim(w), spec.out_dim(h)});
        ref::conv2d_forward(x.ptr(), wt.ptr(), want.ptr(), 1, spec, w, h);
        CHECK(max_abs_diff(got, want) <= 1e-6);
    }
}

TEST_CASE("conv2d_forward: the fixed paper example 2x5x5 * 3x2x3x3 pad 1") {
    Rng rng(99);
    ConvSpec spec{3, 2, 3, 1, 1};
    Tensor x({2, 5, 5}), wt(spec.weight_shape());
    rng.fill_uniform(x, -1.0f, 1.0f);
    rng.fill_uniform(wt, -1.0f, 1.0f);
    Tensor got = ops::conv2d_forward(x, wt, spec);
    Tensor want({3, 5, 5});
    ref::conv2d_forward(x.ptr(), wt.ptr(), want.ptr(), 1, spec, 5, 5);
    CHECK(max_abs_diff(got, want) <= 1e-6);
}

TEST_CASE("conv2d_forward rejects mismatched shapes, naming the axis") {
    Tensor x({2, 4, 4});
    Tensor w({3, 3, 3, 3});  // c_in mismatch
    CHECK_THROWS_WITH_AS(ops::conv2d_forward(x, w, ConvSpec{3, 3, 3, 1, 1}),
                         doctest::Contains("channel axis"), std::invalid_argument);
    Tensor w2({3, 2, 3, 3});
    CHECK_THROWS_AS(ops::conv2d_forward(x, w2, ConvSpec{3, 2, 5, 1, 0}), std::invalid_argument);
}

TEST_CASE("conv2d_backward: zero upstream gradient gives zero gradients") {
    Rng rng(5);
    ConvSpec spec{2, 2, 3, 1, 1};
    Tensor x({2, 4, 4}), w(spec.weight_shape());
    rng.fill_uniform(x, -1.0f, 1.0f);
    rng.fill_uniform(w, -1.0f, 1.0f);
    Tensor dy({2, 4, 4});
    auto [dx, dw] = ops::conv2d_backward(x, w, spec, dy);
    for (float v : dx.data) CHECK(v == 0.0f);
    for (float v : dw.data) CHECK(v == 0.0f);
}

TEST_CASE("conv2d_backward: identity 1x1 kernel passes the gradient through") {
    Rng rng(6);
    ConvSpec spec{1, 1, 1, 1, 0};
    Tensor x({1, 4, 4});
    rng.fill_uniform(x, -1.0f, 1.0f);
    Tensor w = Tensor::from({1, 1, 1, 1}, {1.0f});
    Tensor dy({1, 4, 4});
    rng.fill_uniform(dy, -1.0f, 1.0f);
    auto [dx, dw] = ops::conv2d_backward(x, w, spec, dy);
    CHECK(dx.bitwise_equal(dy));
    (void)dw;
}

TEST_CASE("conv2d_backward matches finite differences") {
    for (int trial = 0; trial < 10; ++trial) {
        const auto res = gradcheck::check_conv2d(1000 + trial);
        CHECK(res.pass);
        CHECK(res.max_rel_err <= 1e-3);
    }
}

TEST_CASE("matmul: identity, hand example, and the triple-loop oracle") {
    Tensor id = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Rng rng(77);
    Tensor m({3, 3});
    rng.fill_uniform(m, -2.0f, 2.0f);
    CHECK(ops::matmul(id, m).bitwise_equal(m));

    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 1}, {0, 1});
    Tensor c = ops::matmul(a, b);
    CHECK(c.data == std::vector<float>{2, 4});

    Tensor p({7, 5}), q({5, 4});
    rng.fill_uniform(p, -1.0f, 1.0f);
    rng.fill_uniform(q, -1.0f, 1.0f);
    Tensor got = ops::matmul(p, q);
    Tensor want({7, 4});
    ref::matmul(p.ptr(), q.ptr(), want.ptr(), 7, 5, 4);
    CHECK(max_abs_diff(got, want) <= 1e-6);

    CHECK_THROWS_AS(ops::matmul(p, Tensor({4, 4})), std::invalid_argument);
}

TEST_CASE("matmul gradients match finite differences") {
    for (int trial = 0; trial < 10; ++trial) {
        CHECK(gradcheck::check_matmul(2000 + trial).pass);
    }
}

TEST_CASE("reshape_permute: identity is bitwise, (1,0) is transpose") {
    Rng rng(8);
    Tensor t({2, 3});
    rng.fill_uniform(t, -1.0f, 1.0f);
    Tensor same = ops::reshape_permute(t, {2, 3}, {0, 1});
    CHECK(same.bitwise_equal(t));

    Tensor tr = ops::reshape_permute(t, {2, 3}, {1, 0});
    CHECK(tr.shape == std::vector<int>{3, 2});
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 3; ++j) CHECK(tr.at2(j, i) == t.at2(i, j));
    }
}

TEST_CASE("reshape_permute: product matrix to conv weights follows the index formula") {
    const int c_out = 2, c_in = 2, k = 3;
    Rng rng(9);
    Tensor p({c_out * k, c_in * k});
    rng.fill_uniform(p, -1.0f, 1.0f);
    Tensor dw = ops::reshape_permute(p, {c_out, k, c_in, k}, {0, 2, 1, 3});
    CHECK(dw.shape == std::vector<int>{c_out, c_in, k, k});
    for (int o = 0; o < c_out; ++o) {
        for (int m = 0; m < c_in; ++m) {
            for (int u = 0; u < k; ++u) {
                for (int v = 0; v < k; ++v) {
                    const float got = dw.data[((o * c_in + m) * k + u) * k + v];
                    CHECK(got == p.at2(o * k + u, m * k + v));
                }
            }
        }
    }
}

TEST_CASE("reshape_permute rejects bad sizes and non-permutations") {
    Tensor t({2, 3});
    CHECK_THROWS_AS(ops::reshape_permute(t, {7}, {0}), std::invalid_argument);
    CHECK_THROWS_AS(ops::reshape_permute(t, {2, 3}, {0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(ops::reshape_permute(t, {2, 3}, {0}), std::invalid_argument);
}

TEST_CASE("reshape_permute leaves its input unchanged") {
    Rng rng(10);
    Tensor t({4, 5});
    rng.fill_uniform(t, -1.0f, 1.0f);
    const Tensor copy = t;
    (void)ops::reshape_permute(t, {5, 4}, {1, 0});
    CHECK(t.bitwise_equal(copy));
}

TEST_CASE("cross_entropy_loss: uniform logits, saturated logits, bad label") {
    Tensor logits({4}, 0.5f);
    const auto res = ops::cross_entropy_loss(logits, 2);
    CHECK(res.loss == doctest::Approx(std::log(4.0)).epsilon(1e-6));

    Tensor sat = Tensor::from({2}, {10.0f, -10.0f});
    CHECK(ops::cross_entropy_loss(sat, 0).loss < 1e-4f);

    CHECK_THROWS_AS(ops::cross_entropy_loss(logits, 4), std::invalid_argument);
    CHECK_THROWS_AS(ops::cross_entropy_loss(logits, -1), std::invalid_argument);
}

TEST_CASE("cross_entropy_loss gradient matches finite differences") {
    for (int trial = 0; trial < 10; ++trial) {
        CHECK(gradcheck::check_cross_entropy(3000 + trial).pass);
    }
}

TEST_CASE("sgd_step: fixed point, plain step, decay-only step") {
    Param p;
    p.name = "p";
    p.value = Tensor({1}, 1.0f);
    p.make_trainable();
    Param* params[] = {&p};

    SUBCASE("zero grad and zero decay leave the value unchanged") {
        ops::sgd_step(params, 0.1f, 0.0f);
        CHECK(p.value.data[0] == 1.0f);
    }
    SUBCASE("one-step arithmetic") {
        p.grad->data[0] = 1.0f;
        ops::sgd_step(params, 0.1f, 0.0f);
        CHECK(p.value.data[0] == doctest::Approx(0.9f));
        CHECK(p.grad->data[0] == 0.0f);  // grads zeroed
    }
    SUBCASE("decay-only step uses the paper's 5e-4") {
        ops::sgd_step(params, 0.1f, 5e-4f);
        CHECK(p.value.data[0] == doctest::Approx(0.99995f));
    }
}

TEST_CASE("sgd_step refuses params without grad storage") {
    Param frozen;
    frozen.name = "w0";
    frozen.value = Tensor({2}, 1.0f);
    Param* params[] = {&frozen};
    CHECK_THROWS_WITH_AS(ops::sgd_step(params, 0.1f, 0.0f), doctest::Contains("w0"),
                         std::invalid_argument);
}

TEST_CASE("ops are pure: conv2d inputs are untouched") {
    Rng rng(11);
    ConvSpec spec{2, 2, 3, 1, 1};
    Tensor x({2, 5, 5}), w(spec.weight_shape());
    rng.fill_uniform(x, -1.0f, 1.0f);
    rng.fill_uniform(w, -1.0f, 1.0f);
    const Tensor xc = x, wc = w;
    Tensor y = ops::conv2d_forward(x, w, spec);
    auto [dx, dw] = ops::conv2d_backward(x, w, spec, y);
    CHECK(x.bitwise_equal(xc));
    CHECK(w.bitwise_equal(wc));
    (void)dx;
    (void)dw;
}

TEST_CASE("determinism: identical inputs give bitwise identical outputs") {
    Rng rng(12);
    ConvSpec spec{3, 2, 3, 2, 1};
    Tensor x({4, 2, 9, 9}), w(spec.weight_shape());
    rng.fill_uniform(x, -1.0f, 1.0f);
    rng.fill_uniform(w, -1.0f, 1.0f);
    Tensor y1 = ops::conv2d_forward_batch(x, w, spec);
    Tensor y2 = ops::conv2d_forward_batch(x, w, spec);
    CHECK(y1.bitwise_equal(y2));
}

TEST_CASE("outputs stay finite on random inputs") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        ConvSpec spec{rng.uniform_int(1, 4), rng.uniform_int(1, 4), rng.uniform_int(1, 3), 1, 1};
        const int w = rng.uniform_int(spec.k, 8), h = rng.uniform_int(spec.k, 8);
        Tensor x({spec.c_in, w, h}), wt(spec.weight_shape());
        rng.fill_uniform(x, -10.0f, 10.0f);
        rng.fill_uniform(wt, -10.0f, 10.0f);
        Tensor y = ops::conv2d_forward(x, wt, spec);
        CHECK(y.all_finite());
    }
}

TEST_CASE("batched conv equals a loop of per-sample convs") {
    Rng rng(14);
    ConvSpec spec{3, 2, 3, 1, 1};
    const int n = 5, w = 6, h = 6;
    Tensor x({n, spec.c_in, w, h}), wt(spec.weight_shape());
    rng.fill_uniform(x, -1.0f, 1.0f);
    rng.fill_uniform(wt, -1.0f, 1.0f);
    Tensor batched = ops::conv2d_forward_batch(x, wt, spec);
    const std::size_t in_stride = static_cast<std::size_t>(spec.c_in) * w * h;
    const std::size_t out_stride = batched.data.size() / n;
    for (int s = 0; s < n; ++s) {
        Tensor xs({spec.c_in, w, h});
        std::copy_n(x.ptr() + s * in_stride, in_stride, xs.ptr());
        Tensor ys = ops::conv2d_forward(xs, wt, spec);
        for (std::size_t i = 0; i < out_stride; ++i) {
            CHECK(ys.data[i] == batched.data[s * out_stride + i]);
        }
    }
}
