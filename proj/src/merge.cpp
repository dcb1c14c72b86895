#include "lorac/merge.hpp"

#include <cmath>

#include "lorac/checkpoint.hpp"

namespace lorac {

Tensor merge_layer(const LoraConvLayer& layer) {
    return merged_conv_weights(layer.w0, layer.factors);
}

std::pair<Tensor, Tensor> fuse_batchnorm(const Tensor& conv_w, const Tensor& gamma,
                                         const Tensor& beta, const Tensor& mean,
                                         const Tensor& var, float eps) {
    const int c_out = conv_w.dim(0);
    auto check_chan = [&](const Tensor& t, const char* what) {
        if (t.rank() != 1 || t.dim(0) != c_out) {
            throw std::invalid_argument(std::string("fuse_batchnorm: ") + what + " has shape " +
                                        shape_to_string(t.shape) + ", conv has " +
                                        std::to_string(c_out) + " output channels");
        }
    };
    check_chan(gamma, "gamma");
    check_chan(beta, "beta");
    check_chan(mean, "mean");
    check_chan(var, "var");
    for (float v : var.data) {
        if (v < 0.0f) throw std::invalid_argument("fuse_batchnorm: negative variance");
    }

    Tensor w_fused = conv_w;
    Tensor b_fused({c_out});
    const std::size_t per_out = conv_w.data.size() / static_cast<std::size_t>(c_out);
    for (int o = 0; o < c_out; ++o) {
        const float inv = 1.0f / std::sqrt(var.data[o] + eps);
        const float scale = gamma.data[o] * inv;
        float* w = w_fused.ptr() + static_cast<std::size_t>(o) * per_out;
        for (std::size_t i = 0; i < per_out; ++i) w[i] *= scale;
        b_fused.data[o] = beta.data[o] - gamma.data[o] * mean.data[o] * inv;
    }
    return {std::move(w_fused), std::move(b_fused)};
}

namespace {

void merge_unit(ConvUnit& cu) {
    if (!cu.lora.has_value()) return;
    cu.weight.value = merged_conv_weights(cu.weight.value, *cu.lora);
    cu.lora.reset();
    cu.policy = LayerPolicy::Frozen;
}

void fuse_unit(ConvUnit& cu, BatchNorm& bn) {
    auto [w, b] = fuse_batchnorm(cu.weight.value, bn.gamma.value, bn.beta.value, bn.running_mean,
                                 bn.running_var, bn.eps);
    cu.weight.value = std::move(w);
    cu.bias = std::move(b);
    bn.fused = true;
}

}  // namespace

void merge_all(Network& net) {
    if (net.merged) {
        throw ConfigError("merge: branches already consumed; re-register factors to fine-tune again");
    }
    if (!net.lora_enabled) {
        throw ConfigError("merge: network has no LoRA branches");
    }
    merge_unit(net.stem);
    for (ResBlock& blk : net.blocks) {
        merge_unit(blk.conv1);
        merge_unit(blk.conv2);
        if (blk.conv3.has_value()) merge_unit(*blk.conv3);
        if (blk.proj.has_value()) merge_unit(*blk.proj);
    }
    net.merged = true;
    net.lora_enabled = false;
}

Network export_inference_model(const Network& net, bool fuse_bn, const std::string& path) {
    Network out = net;
    merge_all(out);
    if (fuse_bn) {
        fuse_unit(out.stem, out.stem_bn);
        for (ResBlock& blk : out.blocks) {
            fuse_unit(blk.conv1, blk.bn1);
            fuse_unit(blk.conv2, blk.bn2);
            if (blk.conv3.has_value()) fuse_unit(*blk.conv3, *blk.bn3);
            if (blk.proj.has_value()) fuse_unit(*blk.proj, *blk.proj_bn);
        }
        out.bn_fused = true;
    }
    save_full_checkpoint(out, path);
    return out;
}

}  // namespace lorac
