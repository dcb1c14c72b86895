#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lorac/tensor.hpp"

namespace lorac {

struct DatasetMeta {
    int num_classes = 0;
    std::uint64_t seed = 0;
    std::string corruption = "none";
};

struct Dataset {
    Tensor images;  // [n, c, w, h], values in [0, 1]
    std::vector<std::uint16_t> labels;
    DatasetMeta meta;

    int size() const { return images.empty() ? 0 : images.dim(0); }
    void validate() const;
};

enum class CorruptionFamily { Noise, Blur, Weather, Digital };

std::string family_name(CorruptionFamily f);

// Two kinds per family, eight total:
//   Noise:   gaussian, salt_pepper
//   Blur:    gaussian_blur, box_blur
//   Weather: fog, brightness
//   Digital: pixelate, contrast
const std::vector<std::pair<CorruptionFamily, std::string>>& corruption_kinds();

struct CorruptionSpec {
    CorruptionFamily family = CorruptionFamily::Noise;
    std::string kind = "gaussian";
    int severity = 1;  // 1..5
    std::uint64_t seed = 0;

    void validate() const;
};

// Class-conditional parametric patterns (oriented gratings, blob
// constellations, checkerboards) with per-sample jitter. Same seed, same
// bits. style_shift selects a disjoint render-parameter regime.
Dataset generate_synthetic(int num_classes, int n_per_class, int w, int h, std::uint64_t seed,
                           bool style_shift = false);

Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec);

// Deterministic mixed corruption: image i gets kind (i mod 8) at severity
// 1 + (i/8 mod 5). The fine-tuning side of the desk robustness scenario.
Dataset corrupt_mixed(const Dataset& ds, std::uint64_t seed);

// "LRCD" file: magic, u16 version, length-prefixed text header, f32 image
// payload, u16 labels; all little-endian. Bit-exact round trip.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace lorac
