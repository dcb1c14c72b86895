#include "lorac/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "nlohmann/json.hpp"

namespace lorac {

using json = nlohmann::json;

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash_hex(const ModelConfig& cfg) {
    std::ostringstream os;
    os << std::hex << fnv1a64(cfg.canonical_text());
    return os.str();
}

std::uint64_t tensor_hash(const Tensor& t) {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(t.ptr()),
                                    t.data.size() * sizeof(float)));
}

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;

struct ManifestEntry {
    std::string name;
    std::vector<int> shape;
};

void write_frame(const std::string& path, const char magic[4], const json& header,
                 const std::vector<const Tensor*>& tensors, std::int64_t* bytes_out) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    const std::string htext = header.dump();
    f.write(magic, 4);
    f.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof(kCheckpointVersion));
    const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(htext.data(), static_cast<std::streamsize>(htext.size()));
    std::int64_t bytes = 4 + 2 + 4 + static_cast<std::int64_t>(htext.size());
    for (const Tensor* t : tensors) {
        f.write(reinterpret_cast<const char*>(t->ptr()),
                static_cast<std::streamsize>(t->data.size() * sizeof(float)));
        bytes += static_cast<std::int64_t>(t->data.size() * sizeof(float));
    }
    if (!f) throw IoError("write failed: " + path);
    if (bytes_out) *bytes_out = bytes;
}

json read_frame_header(std::ifstream& f, const char magic[4], const std::string& path) {
    char got[4];
    f.read(got, 4);
    if (!f || std::memcmp(got, magic, 4) != 0) {
        throw IoError("bad magic (expected " + std::string(magic, 4) + "): " + path);
    }
    std::uint16_t version;
    f.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (!f) throw IoError("truncated checkpoint: " + path);
    if (version != kCheckpointVersion) {
        throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    std::uint32_t hlen;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f) throw IoError("truncated checkpoint: " + path);
    std::string htext(hlen, '\0');
    f.read(htext.data(), hlen);
    if (!f) throw IoError("truncated checkpoint: " + path);
    try {
        return json::parse(htext);
    } catch (const json::exception& e) {
        throw IoError("bad checkpoint header in " + path + ": " + e.what());
    }
}

json manifest_json(const std::vector<TensorRef>& refs) {
    json m = json::array();
    for (const TensorRef& r : refs) {
        m.push_back({{"name", r.name}, {"shape", r.tensor->shape}});
    }
    return m;
}

void read_payload(std::ifstream& f, const json& manifest,
                  const std::vector<TensorRef>& refs, const std::string& path) {
    if (manifest.size() != refs.size()) {
        throw IoError("checkpoint manifest has " + std::to_string(manifest.size()) +
                      " tensors, network wants " + std::to_string(refs.size()) + ": " + path);
    }
    for (std::size_t i = 0; i < refs.size(); ++i) {
        const std::string name = manifest[i].at("name");
        const std::vector<int> shape = manifest[i].at("shape").get<std::vector<int>>();
        if (name != refs[i].name) {
            throw IoError("checkpoint tensor " + std::to_string(i) + " is '" + name +
                          "', network wants '" + refs[i].name + "': " + path);
        }
        if (shape != refs[i].tensor->shape) {
            throw IoError("checkpoint tensor '" + name + "' has shape " + shape_to_string(shape) +
                          ", network wants " + shape_to_string(refs[i].tensor->shape) + ": " + path);
        }
        f.read(reinterpret_cast<char*>(refs[i].tensor->ptr()),
               static_cast<std::streamsize>(refs[i].tensor->data.size() * sizeof(float)));
        if (!f) throw IoError("truncated checkpoint payload at '" + name + "': " + path);
    }
}

// Adapter subset: factor tensors, trainable params (stem conv + head), and
// BN buffers, in the network's canonical order.
std::vector<TensorRef> adapter_refs(std::vector<TensorRef> all) {
    std::vector<TensorRef> out;
    for (TensorRef& r : all) {
        if (r.role == TensorRole::LoraFactor || r.role == TensorRole::TrainableParam ||
            r.role == TensorRole::Buffer) {
            out.push_back(r);
        }
    }
    return out;
}

}  // namespace

std::int64_t save_full_checkpoint(const Network& net, const std::string& path) {
    const auto refs = net.named_tensors();
    json header = {
        {"format", "lrcf"},
        {"config", net.cfg.canonical_text()},
        {"config_hash", config_hash_hex(net.cfg)},
        {"lora", net.lora_enabled},
        {"alpha", net.alpha},
        {"r", net.rank_mode.r},
        {"rank_variant", net.rank_mode.variant == RankVariant::PlainR ? "plain" : "rk"},
        {"merged", net.merged},
        {"bn_fused", net.bn_fused},
        {"tensors", manifest_json(refs)},
    };
    std::vector<const Tensor*> tensors;
    for (const TensorRef& r : refs) tensors.push_back(r.tensor);
    std::int64_t bytes = 0;
    write_frame(path, "LRCF", header, tensors, &bytes);
    return bytes;
}

Network load_full_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    const json header = read_frame_header(f, "LRCF", path);

    const ModelConfig cfg = ModelConfig::parse_canonical(header.at("config"));
    Network net;
    const bool lora = header.at("lora");
    if (lora) {
        const int r = header.at("r");
        const float alpha = header.at("alpha");
        const RankVariant variant =
            header.at("rank_variant") == "plain" ? RankVariant::PlainR : RankVariant::RTimesK;
        net = build_network(cfg, r, alpha, variant);
    } else {
        net = build_plain_network(cfg);
    }
    net.merged = header.at("merged");
    net.bn_fused = header.at("bn_fused");
    if (net.bn_fused) {
        // Fused checkpoints carry conv biases and identity BN layers; reshape
        // the freshly built net accordingly before reading the payload.
        net.apply_bn_fusion_structure();
    }
    read_payload(f, header.at("tensors"), net.named_tensors(), path);
    return net;
}

std::int64_t save_adapter_checkpoint(const Network& net, const std::string& path) {
    if (!net.lora_enabled || net.merged) {
        throw ConfigError("save_adapter_checkpoint: network has no live LoRA branches");
    }
    const auto refs = adapter_refs(net.named_tensors());
    json header = {
        {"format", "lrca"},
        {"config", net.cfg.canonical_text()},
        {"config_hash", config_hash_hex(net.cfg)},
        {"alpha", net.alpha},
        {"r", net.rank_mode.r},
        {"rank_variant", net.rank_mode.variant == RankVariant::PlainR ? "plain" : "rk"},
        {"tensors", manifest_json(refs)},
    };
    std::vector<const Tensor*> tensors;
    for (const TensorRef& r : refs) tensors.push_back(r.tensor);
    std::int64_t bytes = 0;
    write_frame(path, "LRCA", header, tensors, &bytes);
    return bytes;
}

Network load_adapter_checkpoint(const Network& pretrained_base, const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open adapter: " + path);
    const json header = read_frame_header(f, "LRCA", path);

    if (std::string(header.at("config_hash")) != config_hash_hex(pretrained_base.cfg)) {
        throw ConfigError("adapter was trained for config '" + std::string(header.at("config")) +
                          "', base model is '" + pretrained_base.cfg.canonical_text() + "'");
    }
    const int r = header.at("r");
    const float alpha = header.at("alpha");
    const RankVariant variant =
        header.at("rank_variant") == "plain" ? RankVariant::PlainR : RankVariant::RTimesK;

    Network net = adapt_network(pretrained_base, r, alpha, variant);
    read_payload(f, header.at("tensors"), adapter_refs(net.named_tensors()), path);
    return net;
}

}  // namespace lorac
