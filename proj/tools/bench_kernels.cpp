// Benchmark of the OpenMP kernels against the serial reference. Each case
// prints both timings, the speedup, and the max abs difference between the
// two results as a correctness column.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <omp.h>
#include <string>
#include <vector>

#include "lorac/kernels.hpp"
#include "lorac/reference.hpp"
#include "lorac/rng.hpp"
#include "lorac/tensor.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int iters) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) fn();
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / iters;
}

double max_abs_diff(const std::vector<float>& a, const std::vector<float>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a[i]) - b[i]));
    }
    return worst;
}

void print_row(const std::string& name, double serial_ms, double omp_ms, double diff) {
    std::printf("%-28s %10.3f %10.3f %8.2fx %12.3e\n", name.c_str(), serial_ms, omp_ms,
                serial_ms / omp_ms, diff);
}

void bench_conv(int n, int c_in, int c_out, int size, int k, int stride, int pad, int iters) {
    lorac::ConvSpec spec{c_out, c_in, k, stride, pad};
    const int wo = spec.out_dim(size), ho = spec.out_dim(size);
    lorac::Rng rng(42);
    lorac::Tensor x({n, c_in, size, size}), w(spec.weight_shape());
    rng.fill_uniform(x, -1.0f, 1.0f);
    rng.fill_uniform(w, -1.0f, 1.0f);
    lorac::Tensor y_ref({n, c_out, wo, ho}), y_omp({n, c_out, wo, ho});
    lorac::Tensor dy({n, c_out, wo, ho});
    rng.fill_uniform(dy, -1.0f, 1.0f);
    lorac::Tensor dx_ref(x.shape), dx_omp(x.shape), dw_ref(w.shape), dw_omp(w.shape);

    char label[128];
    std::snprintf(label, sizeof(label), "conv fwd n%d %dx%dx%d k%d s%d", n, c_in, size, size, k,
                  stride);
    const double s_f = time_ms(
        [&] { lorac::ref::conv2d_forward(x.ptr(), w.ptr(), y_ref.ptr(), n, spec, size, size); },
        iters);
    const double p_f = time_ms(
        [&] { lorac::kernels::conv2d_forward(x.ptr(), w.ptr(), y_omp.ptr(), n, spec, size, size); },
        iters);
    print_row(label, s_f, p_f, max_abs_diff(y_ref.data, y_omp.data));

    std::snprintf(label, sizeof(label), "conv bwd-input%s", "");
    const double s_bi = time_ms(
        [&] { lorac::ref::conv2d_backward_input(dy.ptr(), w.ptr(), dx_ref.ptr(), n, spec, size, size); },
        iters);
    const double p_bi = time_ms(
        [&] {
            lorac::kernels::conv2d_backward_input(dy.ptr(), w.ptr(), dx_omp.ptr(), n, spec, size,
                                                  size);
        },
        iters);
    print_row(label, s_bi, p_bi, max_abs_diff(dx_ref.data, dx_omp.data));

    std::snprintf(label, sizeof(label), "conv bwd-weight%s", "");
    const double s_bw = time_ms(
        [&] { lorac::ref::conv2d_backward_weight(x.ptr(), dy.ptr(), dw_ref.ptr(), n, spec, size, size); },
        iters);
    const double p_bw = time_ms(
        [&] {
            lorac::kernels::conv2d_backward_weight(x.ptr(), dy.ptr(), dw_omp.ptr(), n, spec, size,
                                                   size);
        },
        iters);
    print_row(label, s_bw, p_bw, max_abs_diff(dw_ref.data, dw_omp.data));
}

void bench_matmul(int p, int q, int s, int iters) {
    lorac::Rng rng(7);
    lorac::Tensor a({p, q}), b({q, s}), c_ref({p, s}), c_omp({p, s});
    rng.fill_uniform(a, -1.0f, 1.0f);
    rng.fill_uniform(b, -1.0f, 1.0f);
    char label[128];
    std::snprintf(label, sizeof(label), "matmul %dx%dx%d", p, q, s);
    const double sm = time_ms([&] { lorac::ref::matmul(a.ptr(), b.ptr(), c_ref.ptr(), p, q, s); },
                              iters);
    const double pm = time_ms(
        [&] { lorac::kernels::matmul(a.ptr(), b.ptr(), c_omp.ptr(), p, q, s); }, iters);
    print_row(label, sm, pm, max_abs_diff(c_ref.data, c_omp.data));
}

}  // namespace

int main(int argc, char** argv) {
    int iters = 5;
    bool small = false;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--small") small = true;
        if (arg == "--iters" && i + 1 < argc) iters = std::atoi(argv[++i]);
    }

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %10s %10s %9s %12s\n", "case", "serial ms", "omp ms", "speedup",
                "max |diff|");
    if (small) {
        bench_conv(4, 8, 16, 12, 3, 1, 1, iters);
        bench_matmul(64, 64, 64, iters);
    } else {
        bench_conv(16, 16, 32, 16, 3, 1, 1, iters);
        bench_conv(16, 32, 64, 8, 3, 2, 1, iters);
        bench_conv(16, 64, 64, 4, 1, 1, 0, iters);
        bench_matmul(256, 256, 256, iters);
        bench_matmul(512, 128, 64, iters);
    }
    return 0;
}
