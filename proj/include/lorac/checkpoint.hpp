#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "lorac/model.hpp"

namespace lorac {

std::uint64_t fnv1a64(std::string_view bytes);
std::string config_hash_hex(const ModelConfig& cfg);

// Hash of raw f32 bytes; used for freeze-contract checks.
std::uint64_t tensor_hash(const Tensor& t);

// "LRCF": full model file. Header carries the config document, LoRA/merge
// flags and the tensor manifest; payload is every named tensor (including BN
// buffers) as little-endian f32 in manifest order.
std::int64_t save_full_checkpoint(const Network& net, const std::string& path);
Network load_full_checkpoint(const std::string& path);

// "LRCA": adapter-only delta. Factors, trainable stem/head, and the BN
// running statistics that drifted during fine-tuning; plus alpha/r/mode in
// the header. Base W0 comes from the pretrained model at load time.
std::int64_t save_adapter_checkpoint(const Network& net, const std::string& path);
Network load_adapter_checkpoint(const Network& pretrained_base, const std::string& path);

}  // namespace lorac
