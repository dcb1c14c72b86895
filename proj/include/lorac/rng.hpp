#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "lorac/tensor.hpp"

namespace lorac {

// Seeded generator with fully specified output. Floats are derived from the
// mt19937 word stream by explicit scaling, so identical seeds give bitwise
// identical draws on every platform and standard library.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(static_cast<std::uint32_t>(mix(seed, 0x6c07a63f9bf3e1cdULL))) {}

    // Derive an independent stream id from a base seed, e.g. per layer or per
    // epoch. SplitMix64 finalizer.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint32_t next_u32() { return gen_(); }

    // Uniform in [0, 1) with 24 bits of mantissa.
    float uniform() { return static_cast<float>(gen_() >> 8) * (1.0f / 16777216.0f); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const std::uint32_t span = static_cast<std::uint32_t>(hi - lo + 1);
        return lo + static_cast<int>(gen_() % span);
    }

    // Box-Muller on the explicit uniform stream.
    float normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        float u1 = 0.0f;
        do {
            u1 = uniform();
        } while (u1 <= 1e-12f);
        const float u2 = uniform();
        const float mag = std::sqrt(-2.0f * std::log(u1));
        const float two_pi = 6.28318530717958647692f;
        spare_ = mag * std::sin(two_pi * u2);
        have_spare_ = true;
        return mag * std::cos(two_pi * u2);
    }

    void fill_uniform(Tensor& t, float lo, float hi) {
        for (float& x : t.data) x = uniform(lo, hi);
    }

    void fill_normal(Tensor& t, float mean, float stddev) {
        for (float& x : t.data) x = mean + stddev * normal();
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = gen_() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937 gen_;
    bool have_spare_ = false;
    float spare_ = 0.0f;
};

}  // namespace lorac
