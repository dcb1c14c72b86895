#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lorac::gradcheck {

struct Result {
    std::string op;
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central differences of a double-valued scalar function of a float vector.
// h should be an exactly representable step (a power of two).
std::vector<double> finite_diff(const std::function<double(const std::vector<float>&)>& f,
                                std::vector<float> x, float h);

// Per-element relative error between analytic and finite-difference grads,
// ignoring entries where both are below `floor`.
double max_rel_err(const std::vector<double>& fd, const std::vector<float>& analytic, double floor);

// Each check builds a random small instance, compares analytic gradients
// against central differences, and passes at rel error <= 1e-3.
Result check_conv2d(std::uint64_t seed);
Result check_matmul(std::uint64_t seed);
Result check_cross_entropy(std::uint64_t seed);
Result check_lora_branch(std::uint64_t seed);

inline constexpr double kRelTol = 1e-3;

}  // namespace lorac::gradcheck
