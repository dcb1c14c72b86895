#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <unistd.h>
#include <vector>

#include "lorac/tensor.hpp"

namespace test_util {

inline double max_abs_diff(const lorac::Tensor& a, const lorac::Tensor& b) {
    if (a.shape != b.shape) throw std::runtime_error("max_abs_diff: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    }
    return worst;
}

// Relative difference with the denominator floored at a fraction of the
// array's magnitude, so exact cancellation near zero does not blow up the
// metric.
inline double max_rel_diff(const lorac::Tensor& a, const lorac::Tensor& b,
                           double floor_frac = 1e-3) {
    if (a.shape != b.shape) throw std::runtime_error("max_rel_diff: shape mismatch");
    double scale = 0.0;
    for (float v : a.data) scale = std::max(scale, std::abs(static_cast<double>(v)));
    for (float v : b.data) scale = std::max(scale, std::abs(static_cast<double>(v)));
    const double floor = std::max(scale * floor_frac, 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double x = a.data[i], y = b.data[i];
        const double denom = std::max({std::abs(x), std::abs(y), floor});
        worst = std::max(worst, std::abs(x - y) / denom);
    }
    return worst;
}

// Scratch directory for file-format tests; removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("lorac_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }

  private:
    static int& counter() {
        static int c = 0;
        return c;
    }
};

}  // namespace test_util
