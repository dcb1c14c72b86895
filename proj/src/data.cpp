#include "lorac/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "nlohmann/json.hpp"

#include "lorac/rng.hpp"

namespace lorac {

using json = nlohmann::json;

void Dataset::validate() const {
    if (images.rank() != 4) {
        throw ConfigError("dataset: images must be [n,c,w,h], got " + shape_to_string(images.shape));
    }
    if (static_cast<std::size_t>(images.dim(0)) != labels.size()) {
        throw ConfigError("dataset: image count " + std::to_string(images.dim(0)) +
                          " != label count " + std::to_string(labels.size()));
    }
    if (meta.num_classes < 2) throw ConfigError("dataset: num_classes must be >= 2");
    for (std::uint16_t l : labels) {
        if (l >= meta.num_classes) {
            throw ConfigError("dataset: label " + std::to_string(l) + " out of range [0," +
                              std::to_string(meta.num_classes) + ")");
        }
    }
}

std::string family_name(CorruptionFamily f) {
    switch (f) {
        case CorruptionFamily::Noise: return "noise";
        case CorruptionFamily::Blur: return "blur";
        case CorruptionFamily::Weather: return "weather";
        case CorruptionFamily::Digital: return "digital";
    }
    return "?";
}

const std::vector<std::pair<CorruptionFamily, std::string>>& corruption_kinds() {
    static const std::vector<std::pair<CorruptionFamily, std::string>> kinds = {
        {CorruptionFamily::Noise, "gaussian"},
        {CorruptionFamily::Noise, "salt_pepper"},
        {CorruptionFamily::Blur, "gaussian_blur"},
        {CorruptionFamily::Blur, "box_blur"},
        {CorruptionFamily::Weather, "fog"},
        {CorruptionFamily::Weather, "brightness"},
        {CorruptionFamily::Digital, "pixelate"},
        {CorruptionFamily::Digital, "contrast"},
    };
    return kinds;
}

void CorruptionSpec::validate() const {
    if (severity < 1 || severity > 5) {
        throw ConfigError("corruption: severity must be in 1..5, got " + std::to_string(severity));
    }
    for (const auto& [fam, k] : corruption_kinds()) {
        if (k == kind) {
            if (fam != family) {
                throw ConfigError("corruption: kind '" + kind + "' belongs to family " +
                                  family_name(fam) + ", not " + family_name(family));
            }
            return;
        }
    }
    throw ConfigError("corruption: unknown kind '" + kind + "'");
}

// ------------------------------------------------------------- generator

namespace {

struct RenderRegime {
    float bg_lo, bg_hi;
    float amp_lo, amp_hi;
    float freq_scale_lo, freq_scale_hi;
    float gain_lo, gain_hi;
    float noise_sigma;
};

RenderRegime regime_for(bool style_shift) {
    if (!style_shift) {
        return {0.45f, 0.55f, 0.32f, 0.45f, 0.90f, 1.10f, 0.85f, 1.15f, 0.02f};
    }
    // Disjoint parameter band: dimmer, lower contrast, higher frequency.
    return {0.33f, 0.43f, 0.20f, 0.30f, 1.20f, 1.45f, 0.65f, 1.00f, 0.03f};
}

constexpr float kTwoPi = 6.28318530717958647692f;

}  // namespace

Dataset generate_synthetic(int num_classes, int n_per_class, int w, int h, std::uint64_t seed,
                           bool style_shift) {
    if (num_classes < 2) throw ConfigError("generate_synthetic: num_classes must be >= 2");
    if (n_per_class < 1) throw ConfigError("generate_synthetic: n_per_class must be >= 1");
    if (w < 8 || h < 8) throw ConfigError("generate_synthetic: image size must be >= 8");

    const int n = num_classes * n_per_class;
    const int channels = 3;
    const RenderRegime reg = regime_for(style_shift);

    // Blob constellations are fixed per class, jittered per sample.
    std::vector<std::vector<float>> blob_cx(num_classes), blob_cy(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        Rng crng(Rng::mix(seed, 0xb10bULL * 131 + c));
        for (int i = 0; i < 3; ++i) {
            blob_cx[c].push_back(crng.uniform(0.2f, 0.8f));
            blob_cy[c].push_back(crng.uniform(0.2f, 0.8f));
        }
    }

    Dataset ds;
    ds.images = Tensor({n, channels, w, h});
    ds.labels.resize(static_cast<std::size_t>(n));
    ds.meta = {num_classes, seed, style_shift ? "none(style-shift)" : "none"};

    for (int idx = 0; idx < n; ++idx) {
        const int cls = idx % num_classes;
        ds.labels[static_cast<std::size_t>(idx)] = static_cast<std::uint16_t>(cls);
        Rng rng(Rng::mix(seed, 0x5a3d0000ULL + static_cast<std::uint64_t>(idx)));

        const float bg = rng.uniform(reg.bg_lo, reg.bg_hi);
        const float amp = rng.uniform(reg.amp_lo, reg.amp_hi);
        const float fscale = rng.uniform(reg.freq_scale_lo, reg.freq_scale_hi);
        const float phase = rng.uniform(0.0f, kTwoPi);
        float gains[3];
        for (float& g : gains) g = rng.uniform(reg.gain_lo, reg.gain_hi);

        const int pattern = cls % 3;
        float theta = 0.0f, freq = 0.0f, phase2 = 0.0f;
        float jx = 0.0f, jy = 0.0f;
        if (pattern == 0) {  // oriented grating
            theta = kTwoPi / 2.0f * (static_cast<float>(cls) + rng.uniform(-0.12f, 0.12f)) /
                    static_cast<float>(num_classes);
            freq = 2.5f * fscale;
        } else if (pattern == 1) {  // blob constellation
            jx = rng.uniform(-0.06f, 0.06f);
            jy = rng.uniform(-0.06f, 0.06f);
        } else {  // checkerboard
            freq = (2.0f + static_cast<float>(cls % 2)) * fscale;
            phase2 = rng.uniform(0.0f, kTwoPi);
        }

        for (int ch = 0; ch < channels; ++ch) {
            float* img = ds.images.ptr() +
                         (static_cast<std::size_t>(idx) * channels + ch) *
                             static_cast<std::size_t>(w) * h;
            for (int x = 0; x < w; ++x) {
                const float fx = static_cast<float>(x) / static_cast<float>(w);
                for (int y = 0; y < h; ++y) {
                    const float fy = static_cast<float>(y) / static_cast<float>(h);
                    float val = 0.0f;
                    if (pattern == 0) {
                        val = std::sin(kTwoPi * freq * (fx * std::cos(theta) + fy * std::sin(theta)) +
                                       phase);
                    } else if (pattern == 1) {
                        const float sig = 1.0f / 6.0f;
                        for (int bi = 0; bi < 3; ++bi) {
                            const float dx = fx - (blob_cx[cls][bi] + jx);
                            const float dy = fy - (blob_cy[cls][bi] + jy);
                            const float bump = std::exp(-(dx * dx + dy * dy) / (2.0f * sig * sig));
                            val += (bi % 2 == 0 ? 1.5f : -1.5f) * bump;
                        }
                    } else {
                        val = std::sin(kTwoPi * freq * fx + phase) *
                              std::sin(kTwoPi * freq * fy + phase2);
                    }
                    float pix = bg + amp * gains[ch] * val + reg.noise_sigma * rng.normal();
                    img[x * h + y] = std::clamp(pix, 0.0f, 1.0f);
                }
            }
        }
    }
    return ds;
}

// ----------------------------------------------------------- corruptions

namespace {

inline int clamp_idx(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Separable filter along both axes with replicate padding; taps normalized.
void filter_image(float* img, int w, int h, const std::vector<float>& taps, int radius) {
    std::vector<float> tmp(static_cast<std::size_t>(w) * h);
    for (int x = 0; x < w; ++x) {  // along y
        for (int y = 0; y < h; ++y) {
            float acc = 0.0f;
            for (int t = -radius; t <= radius; ++t) {
                acc += taps[static_cast<std::size_t>(t + radius)] * img[x * h + clamp_idx(y + t, h)];
            }
            tmp[static_cast<std::size_t>(x) * h + y] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {  // along x
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int t = -radius; t <= radius; ++t) {
                acc += taps[static_cast<std::size_t>(t + radius)] *
                       tmp[static_cast<std::size_t>(clamp_idx(x + t, w)) * h + y];
            }
            img[x * h + y] = acc;
        }
    }
}

std::vector<float> gaussian_taps(float sigma, int radius) {
    std::vector<float> taps(static_cast<std::size_t>(2 * radius + 1));
    float sum = 0.0f;
    for (int t = -radius; t <= radius; ++t) {
        const float v = std::exp(-0.5f * static_cast<float>(t) * t / (sigma * sigma));
        taps[static_cast<std::size_t>(t + radius)] = v;
        sum += v;
    }
    for (float& v : taps) v /= sum;
    return taps;
}

void corrupt_image(float* img, int channels, int w, int h, const std::string& kind, int severity,
                   Rng& rng) {
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    const float s = static_cast<float>(severity);

    if (kind == "gaussian") {
        const float sigma = 0.04f * s;
        for (std::size_t i = 0; i < plane * channels; ++i) img[i] += sigma * rng.normal();
    } else if (kind == "salt_pepper") {
        const float p = 0.02f * s;
        for (std::size_t i = 0; i < plane * channels; ++i) {
            const float u = rng.uniform();
            if (u < p * 0.5f) img[i] = 0.0f;
            else if (u < p) img[i] = 1.0f;
        }
    } else if (kind == "gaussian_blur") {
        const float sigma = 0.4f + 0.4f * s;
        const int radius = std::max(1, static_cast<int>(std::ceil(2.5f * sigma)));
        const auto taps = gaussian_taps(sigma, radius);
        for (int c = 0; c < channels; ++c) filter_image(img + c * plane, w, h, taps, radius);
    } else if (kind == "box_blur") {
        const int radius = severity;
        const std::vector<float> taps(static_cast<std::size_t>(2 * radius + 1),
                                      1.0f / static_cast<float>(2 * radius + 1));
        for (int c = 0; c < channels; ++c) filter_image(img + c * plane, w, h, taps, radius);
    } else if (kind == "fog") {
        const float t = 0.13f * s;
        const float ax = rng.uniform(0.5f, 1.5f), ay = rng.uniform(0.5f, 1.5f);
        const float phi = rng.uniform(0.0f, kTwoPi);
        for (int c = 0; c < channels; ++c) {
            for (int x = 0; x < w; ++x) {
                for (int y = 0; y < h; ++y) {
                    const float field =
                        0.5f + 0.5f * std::sin(kTwoPi * (ax * x / w + ay * y / h) + phi);
                    const float veil = 0.9f * (0.75f + 0.25f * field);
                    float& px = img[c * plane + static_cast<std::size_t>(x) * h + y];
                    px = (1.0f - t) * px + t * veil;
                }
            }
        }
    } else if (kind == "brightness") {
        const float shift = 0.09f * s;
        for (std::size_t i = 0; i < plane * channels; ++i) img[i] += shift;
    } else if (kind == "pixelate") {
        const int block = severity + 1;
        for (int c = 0; c < channels; ++c) {
            float* p = img + c * plane;
            for (int bx = 0; bx < w; bx += block) {
                for (int by = 0; by < h; by += block) {
                    const int ex = std::min(bx + block, w), ey = std::min(by + block, h);
                    float acc = 0.0f;
                    for (int x = bx; x < ex; ++x)
                        for (int y = by; y < ey; ++y) acc += p[x * h + y];
                    const float mean = acc / static_cast<float>((ex - bx) * (ey - by));
                    for (int x = bx; x < ex; ++x)
                        for (int y = by; y < ey; ++y) p[x * h + y] = mean;
                }
            }
        }
    } else if (kind == "contrast") {
        const float factor = 1.0f - 0.15f * s;
        double mean = 0.0;
        for (std::size_t i = 0; i < plane * channels; ++i) mean += img[i];
        mean /= static_cast<double>(plane * channels);
        for (std::size_t i = 0; i < plane * channels; ++i) {
            img[i] = static_cast<float>(mean + (img[i] - mean) * factor);
        }
    } else {
        throw ConfigError("corruption: unknown kind '" + kind + "'");
    }

    for (std::size_t i = 0; i < plane * channels; ++i) img[i] = std::clamp(img[i], 0.0f, 1.0f);
}

}  // namespace

Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec) {
    spec.validate();
    ds.validate();
    Dataset out = ds;
    out.meta.corruption = spec.kind + "@" + std::to_string(spec.severity);
    const int n = ds.size();
    const int channels = ds.images.dim(1), w = ds.images.dim(2), h = ds.images.dim(3);
    const std::size_t img_stride = static_cast<std::size_t>(channels) * w * h;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        Rng rng(Rng::mix(spec.seed, 0xc0520000ULL + static_cast<std::uint64_t>(i)));
        corrupt_image(out.images.ptr() + i * img_stride, channels, w, h, spec.kind, spec.severity,
                      rng);
    }
    return out;
}

Dataset corrupt_mixed(const Dataset& ds, std::uint64_t seed) {
    ds.validate();
    const auto& kinds = corruption_kinds();
    Dataset out = ds;
    out.meta.corruption = "mixed";
    const int n = ds.size();
    const int channels = ds.images.dim(1), w = ds.images.dim(2), h = ds.images.dim(3);
    const std::size_t img_stride = static_cast<std::size_t>(channels) * w * h;
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const auto& [family, kind] = kinds[static_cast<std::size_t>(i) % kinds.size()];
        (void)family;
        const int severity = 1 + (i / static_cast<int>(kinds.size())) % 5;
        Rng rng(Rng::mix(seed, 0xc0520000ULL + static_cast<std::uint64_t>(i)));
        corrupt_image(out.images.ptr() + i * img_stride, channels, w, h, kind, severity, rng);
    }
    return out;
}

// ------------------------------------------------------------ LRCD files

namespace {

constexpr char kDatasetMagic[4] = {'L', 'R', 'C', 'D'};
constexpr std::uint16_t kDatasetVersion = 1;

template <typename T>
void write_raw(std::ofstream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& f, T& v, const std::string& path) {
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw IoError("truncated dataset file: " + path);
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
    if (ds.size() == 0) throw ConfigError("write_dataset: refusing to write an empty dataset");
    ds.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);

    json header = {
        {"n", ds.images.dim(0)},      {"c", ds.images.dim(1)},
        {"w", ds.images.dim(2)},      {"h", ds.images.dim(3)},
        {"num_classes", ds.meta.num_classes},
        {"seed", ds.meta.seed},       {"corruption", ds.meta.corruption},
    };
    const std::string htext = header.dump();

    f.write(kDatasetMagic, 4);
    write_raw(f, kDatasetVersion);
    const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    write_raw(f, hlen);
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    f.write(reinterpret_cast<const char*>(ds.images.ptr()),
            static_cast<std::streamsize>(ds.images.data.size() * sizeof(float)));
    f.write(reinterpret_cast<const char*>(ds.labels.data()),
            static_cast<std::streamsize>(ds.labels.size() * sizeof(std::uint16_t)));
    if (!f) throw IoError("write failed: " + path);
}

Dataset read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open dataset: " + path);

    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kDatasetMagic, 4) != 0) {
        throw IoError("not a LRCD dataset file: " + path);
    }
    std::uint16_t version;
    read_raw(f, version, path);
    if (version != kDatasetVersion) {
        throw IoError("unsupported dataset version " + std::to_string(version) + ": " + path);
    }
    std::uint32_t hlen;
    read_raw(f, hlen, path);
    std::string htext(hlen, '\0');
    f.read(htext.data(), hlen);
    if (!f) throw IoError("truncated dataset file: " + path);

    json header;
    try {
        header = json::parse(htext);
    } catch (const json::exception& e) {
        throw IoError("bad dataset header in " + path + ": " + e.what());
    }

    Dataset ds;
    const int n = header.at("n"), c = header.at("c"), w = header.at("w"), h = header.at("h");
    ds.meta.num_classes = header.at("num_classes");
    ds.meta.seed = header.at("seed");
    ds.meta.corruption = header.at("corruption");
    ds.images = Tensor({n, c, w, h});
    f.read(reinterpret_cast<char*>(ds.images.ptr()),
           static_cast<std::streamsize>(ds.images.data.size() * sizeof(float)));
    if (!f) throw IoError("truncated dataset file: " + path);
    ds.labels.resize(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(ds.labels.data()),
           static_cast<std::streamsize>(ds.labels.size() * sizeof(std::uint16_t)));
    if (!f) throw IoError("truncated dataset file: " + path);
    ds.validate();
    return ds;
}

}  // namespace lorac
