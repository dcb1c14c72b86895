#include "lorac/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace lorac {

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

static void check_shape_dims(const std::vector<int>& shape) {
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] <= 0) {
            throw std::invalid_argument("Tensor: axis " + std::to_string(i) +
                                        " of shape " + shape_to_string(shape) +
                                        " must be positive");
        }
    }
}

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    check_shape_dims(shape);
    data.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0f);
}

Tensor::Tensor(std::vector<int> s, float fill_value) : Tensor(std::move(s)) {
    fill(fill_value);
}

Tensor Tensor::from(std::vector<int> s, std::vector<float> values) {
    check_shape_dims(s);
    if (shape_numel(s) != static_cast<std::int64_t>(values.size())) {
        throw std::invalid_argument("Tensor::from: shape " + shape_to_string(s) +
                                    " wants " + std::to_string(shape_numel(s)) +
                                    " values, got " + std::to_string(values.size()));
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(values);
    return t;
}

int Tensor::dim(int axis) const {
    if (axis < 0 || axis >= rank()) {
        throw std::invalid_argument("Tensor::dim: axis " + std::to_string(axis) +
                                    " out of range for rank " + std::to_string(rank()));
    }
    return shape[static_cast<std::size_t>(axis)];
}

void Tensor::fill(float v) {
    for (float& x : data) x = v;
}

bool Tensor::bitwise_equal(const Tensor& other) const {
    if (shape != other.shape) return false;
    if (data.empty()) return other.data.empty();
    return std::memcmp(data.data(), other.data.data(), data.size() * sizeof(float)) == 0;
}

bool Tensor::all_finite() const {
    for (float x : data) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

float& Tensor::at2(int i, int j) {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
}

float Tensor::at2(int i, int j) const {
    return data[static_cast<std::size_t>(i) * shape[1] + j];
}

void ConvSpec::validate() const {
    if (c_out < 1) throw std::invalid_argument("ConvSpec: c_out must be >= 1, got " + std::to_string(c_out));
    if (c_in < 1) throw std::invalid_argument("ConvSpec: c_in must be >= 1, got " + std::to_string(c_in));
    if (k < 1) throw std::invalid_argument("ConvSpec: k must be >= 1, got " + std::to_string(k));
    if (stride < 1) throw std::invalid_argument("ConvSpec: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw std::invalid_argument("ConvSpec: padding must be >= 0, got " + std::to_string(padding));
}

int ConvSpec::out_dim(int w) const {
    const int span = w + 2 * padding - k;
    if (span < 0) {
        throw std::invalid_argument("ConvSpec: input extent " + std::to_string(w) +
                                    " with padding " + std::to_string(padding) +
                                    " is smaller than kernel " + std::to_string(k));
    }
    const int out = span / stride + 1;
    if (out < 1) {
        throw std::invalid_argument("ConvSpec: output extent for input " + std::to_string(w) +
                                    " is not positive");
    }
    return out;
}

void Param::make_trainable() {
    if (!grad.has_value()) {
        grad = Tensor(value.shape);
    }
}

void Param::zero_grad() {
    if (grad.has_value()) grad->zero();
}

}  // namespace lorac
