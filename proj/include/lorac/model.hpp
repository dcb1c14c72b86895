#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lorac/lora.hpp"
#include "lorac/tensor.hpp"

namespace lorac {

enum class BlockKind { Basic, Bottleneck };

struct StageSpec {
    int num_blocks = 0;
    int channels = 0;  // planes; bottleneck blocks output channels * 4
    int stride = 1;
};

struct ModelConfig {
    std::vector<StageSpec> stages;
    int num_classes = 0;
    int input_channels = 3;
    BlockKind block_kind = BlockKind::Basic;
    std::uint64_t seed = 0;

    void validate() const;
    // Stable one-line serialization; basis of the config hash.
    std::string canonical_text() const;

    // key = value document with one `stage = blocks channels stride` line per
    // stage. '#' starts a comment.
    static ModelConfig parse(const std::string& text);
    static ModelConfig parse_file(const std::string& path);
    // Inverse of canonical_text(); checkpoints embed that form.
    static ModelConfig parse_canonical(const std::string& text);
};

enum class LayerPolicy { Trainable, FrozenWithLora, Frozen };

// Conv weights plus optional LoRA branch and optional post-fusion bias.
struct ConvUnit {
    std::string name;
    ConvSpec spec;
    LayerPolicy policy = LayerPolicy::Trainable;
    Param weight;
    std::optional<Tensor> bias;  // only after BN fusion
    std::optional<LowRankFactors> lora;

    // training caches
    Tensor x_cache;
    Tensor w_eff_cache;

    Tensor effective_weights() const;
    Tensor forward_eval(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

struct BatchNorm {
    std::string name;
    int channels = 0;
    float eps = 1e-5f;
    float momentum = 0.1f;
    Param gamma, beta;
    Tensor running_mean, running_var;
    bool fused = false;  // identity after BN fusion into the preceding conv

    // training caches
    Tensor x_hat_cache;
    std::vector<float> inv_std_cache;

    void init(const std::string& n, int c, bool affine_trainable);
    Tensor forward_eval(const Tensor& x) const;
    Tensor forward_train(const Tensor& x, bool update_stats);
    Tensor backward(const Tensor& dy);
};

// Residual block; Basic (two 3x3) or Bottleneck (1x1 / 3x3 / 1x1, expansion 4).
struct ResBlock {
    BlockKind kind = BlockKind::Basic;
    ConvUnit conv1, conv2;
    BatchNorm bn1, bn2;
    std::optional<ConvUnit> conv3;
    std::optional<BatchNorm> bn3;
    std::optional<ConvUnit> proj;
    std::optional<BatchNorm> proj_bn;

    Tensor mask1, mask2, mask3, mask_out;  // relu masks, training only
    Tensor forward_eval(const Tensor& x, bool bn_fused_bias_ok) const;
    Tensor forward_train(const Tensor& x, bool update_bn_stats);
    Tensor backward(const Tensor& dy);
};

enum class TensorRole { TrainableParam, FrozenParam, Buffer, LoraFactor };

struct TensorRef {
    std::string name;
    Tensor* tensor;
    TensorRole role;
};

struct Network {
    ModelConfig cfg;
    bool lora_enabled = false;
    RankMode rank_mode;
    float alpha = 1.0f;
    bool merged = false;
    bool bn_fused = false;
    bool freeze_bn_stats = false;

    ConvUnit stem;
    BatchNorm stem_bn;
    Tensor stem_mask;
    std::vector<ResBlock> blocks;
    Param head_w, head_b;  // logits = gap(x) * W^T + b

    Tensor head_in_cache;
    int feat_w = 0, feat_h = 0;

    // batch: [n, input_channels, w, h] -> logits [n, num_classes]
    Tensor forward_eval(const Tensor& batch) const;
    Tensor forward_train(const Tensor& batch);
    void backward(const Tensor& dlogits);

    std::vector<Param*> trainable_parameters();
    void zero_grads();
    std::vector<TensorRef> named_tensors();
    std::vector<TensorRef> named_tensors() const;

    std::int64_t trainable_scalar_count() const;
    int final_channels() const;

    // Give every conv a zero bias slot and mark every BN fused; the layout a
    // BN-fused checkpoint expects before its payload is read.
    void apply_bn_fusion_structure();
};

// LoRA-adapted network with the default freeze policy: stem and head
// trainable, every other conv frozen with a branch, BN affine frozen.
// variant defaults via select_rank_mode on the backbone size.
Network build_network(const ModelConfig& cfg, int r, float alpha,
                      std::optional<RankVariant> variant = std::nullopt);

// All-trainable network without branches (pretraining / merged inference).
Network build_plain_network(const ModelConfig& cfg);

// LoRA-adapted network whose frozen backbone (weights, BN affine, BN stats)
// and trainable stem/head start from a pretrained plain network.
Network adapt_network(const Network& pretrained_base, int r, float alpha,
                      std::optional<RankVariant> variant = std::nullopt);

// Geometry of every conv layer the config implies, stem first.
std::vector<ConvSpec> conv_specs_of(const ModelConfig& cfg);

// Full parameter count of the plain model (convs + BN affine + head).
std::int64_t backbone_param_count(const ModelConfig& cfg);

// ResNet-18 geometry with the 3x3 replacement stem; used by reports/tests.
ModelConfig resnet18_shaped_config(int num_classes);

float batch_accuracy(const Tensor& logits, const std::vector<std::uint16_t>& labels);

}  // namespace lorac
