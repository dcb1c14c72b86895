#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lorac {

// Configuration / file-format problems. CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// I/O problems (missing file, truncation, bad magic). CLI exit code 2.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failure during computation (divergence, NaN loss). CLI exit code 1.
struct ComputeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string shape_to_string(const std::vector<int>& shape);

// Dense row-major float32 tensor (last axis fastest).
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    Tensor(std::vector<int> s, float fill_value);

    static Tensor from(std::vector<int> s, std::vector<float> values);

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int axis) const;
    bool empty() const { return data.empty(); }

    float* ptr() { return data.data(); }
    const float* ptr() const { return data.data(); }

    void fill(float v);
    void zero() { fill(0.0f); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool bitwise_equal(const Tensor& other) const;
    bool all_finite() const;

    // 2-D accessors for matrix-shaped tensors.
    float& at2(int i, int j);
    float at2(int i, int j) const;
};

std::int64_t shape_numel(const std::vector<int>& shape);

// One convolutional layer geometry: square k x k kernels, zero padding.
struct ConvSpec {
    int c_out = 0;
    int c_in = 0;
    int k = 0;
    int stride = 1;
    int padding = 0;

    void validate() const;
    // Output spatial extent for an input extent `w` (floor semantics); the
    // result must be >= 1 or the spec/input pair is rejected.
    int out_dim(int w) const;
    std::vector<int> weight_shape() const { return {c_out, c_in, k, k}; }
};

// A value with optional gradient storage. Frozen parameters carry no grad
// (grad == nullopt); sgd_step refuses to touch them.
struct Param {
    std::string name;
    Tensor value;
    std::optional<Tensor> grad;

    bool trainable() const { return grad.has_value(); }
    void make_trainable();
    void freeze() { grad.reset(); }
    void zero_grad();
};

}  // namespace lorac
