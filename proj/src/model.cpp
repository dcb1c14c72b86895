#include "lorac/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lorac/ops.hpp"
#include "lorac/rng.hpp"

namespace lorac {

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
    if (stages.empty()) throw ConfigError("model config: at least one stage is required");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageSpec& s = stages[i];
        if (s.num_blocks < 1 || s.channels < 1 || s.stride < 1) {
            throw ConfigError("model config: stage " + std::to_string(i) +
                              " must have positive blocks/channels/stride");
        }
    }
    if (num_classes < 2) throw ConfigError("model config: num_classes must be >= 2");
    if (input_channels < 1) throw ConfigError("model config: input_channels must be >= 1");
}

std::string ModelConfig::canonical_text() const {
    std::ostringstream os;
    os << "block=" << (block_kind == BlockKind::Basic ? "basic" : "bottleneck")
       << ";in=" << input_channels << ";classes=" << num_classes << ";seed=" << seed
       << ";stages=";
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (i) os << ",";
        os << stages[i].num_blocks << ":" << stages[i].channels << ":" << stages[i].stride;
    }
    return os.str();
}

static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

ModelConfig ModelConfig::parse(const std::string& text) {
    ModelConfig cfg;
    bool saw_classes = false;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("model config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "block") {
                if (val == "basic") cfg.block_kind = BlockKind::Basic;
                else if (val == "bottleneck") cfg.block_kind = BlockKind::Bottleneck;
                else throw ConfigError("unknown block kind '" + val + "'");
            } else if (key == "input_channels") {
                cfg.input_channels = std::stoi(val);
            } else if (key == "num_classes") {
                cfg.num_classes = std::stoi(val);
                saw_classes = true;
            } else if (key == "seed") {
                cfg.seed = std::stoull(val);
            } else if (key == "stage") {
                std::istringstream sv(val);
                StageSpec st;
                if (!(sv >> st.num_blocks >> st.channels >> st.stride)) {
                    throw ConfigError("stage wants 'blocks channels stride'");
                }
                cfg.stages.push_back(st);
            } else {
                throw ConfigError("unknown key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw ConfigError("model config line " + std::to_string(lineno) + ": bad number in '" +
                              val + "'");
        } catch (const ConfigError& e) {
            throw ConfigError("model config line " + std::to_string(lineno) + ": " +
                              std::string(e.what()));
        }
    }
    if (!saw_classes) throw ConfigError("model config: num_classes is required");
    cfg.validate();
    return cfg;
}

ModelConfig ModelConfig::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open model config: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

ModelConfig ModelConfig::parse_canonical(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string field;
    while (std::getline(in, field, ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw ConfigError("bad canonical config: " + text);
        const std::string key = field.substr(0, eq);
        const std::string val = field.substr(eq + 1);
        if (key == "block") {
            cfg.block_kind = val == "bottleneck" ? BlockKind::Bottleneck : BlockKind::Basic;
        } else if (key == "in") {
            cfg.input_channels = std::stoi(val);
        } else if (key == "classes") {
            cfg.num_classes = std::stoi(val);
        } else if (key == "seed") {
            cfg.seed = std::stoull(val);
        } else if (key == "stages") {
            std::istringstream sv(val);
            std::string item;
            while (std::getline(sv, item, ',')) {
                StageSpec st;
                if (std::sscanf(item.c_str(), "%d:%d:%d", &st.num_blocks, &st.channels,
                                &st.stride) != 3) {
                    throw ConfigError("bad canonical stage '" + item + "'");
                }
                cfg.stages.push_back(st);
            }
        } else {
            throw ConfigError("bad canonical config key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

ModelConfig resnet18_shaped_config(int num_classes) {
    ModelConfig cfg;
    cfg.stages = {{2, 64, 1}, {2, 128, 2}, {2, 256, 2}, {2, 512, 2}};
    cfg.num_classes = num_classes;
    cfg.input_channels = 3;
    cfg.block_kind = BlockKind::Basic;
    return cfg;
}

// ---------------------------------------------------------- small helpers

namespace {

Tensor relu_eval(const Tensor& x) {
    Tensor y = x;
    for (float& v : y.data) v = v > 0.0f ? v : 0.0f;
    return y;
}

Tensor relu_train(const Tensor& x, Tensor& mask) {
    mask = Tensor(x.shape);
    Tensor y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        if (y.data[i] > 0.0f) {
            mask.data[i] = 1.0f;
        } else {
            y.data[i] = 0.0f;
        }
    }
    return y;
}

Tensor relu_backward(const Tensor& dy, const Tensor& mask) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask.data[i];
    return dx;
}

void add_inplace(Tensor& a, const Tensor& b) {
    if (a.shape != b.shape) {
        throw std::invalid_argument("residual add: shapes differ: " + shape_to_string(a.shape) +
                                    " vs " + shape_to_string(b.shape));
    }
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void add_channel_bias(Tensor& y, const Tensor& bias) {
    const int n = y.dim(0), c = y.dim(1);
    const std::size_t plane = static_cast<std::size_t>(y.dim(2)) * y.dim(3);
    for (int s = 0; s < n; ++s) {
        for (int o = 0; o < c; ++o) {
            float* p = y.ptr() + (static_cast<std::size_t>(s) * c + o) * plane;
            const float b = bias.data[static_cast<std::size_t>(o)];
            for (std::size_t i = 0; i < plane; ++i) p[i] += b;
        }
    }
}

// [n,c,w,h] -> [n,c] spatial mean
Tensor global_avg_pool(const Tensor& x) {
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor y({n, c});
    for (int s = 0; s < n; ++s) {
        for (int ch = 0; ch < c; ++ch) {
            const float* p = x.ptr() + (static_cast<std::size_t>(s) * c + ch) * plane;
            float acc = 0.0f;
            for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            y.at2(s, ch) = acc / static_cast<float>(plane);
        }
    }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& dfeat, int w, int h) {
    const int n = dfeat.dim(0), c = dfeat.dim(1);
    Tensor dx({n, c, w, h});
    const std::size_t plane = static_cast<std::size_t>(w) * h;
    const float scale = 1.0f / static_cast<float>(plane);
    for (int s = 0; s < n; ++s) {
        for (int ch = 0; ch < c; ++ch) {
            float* p = dx.ptr() + (static_cast<std::size_t>(s) * c + ch) * plane;
            const float g = dfeat.at2(s, ch) * scale;
            for (std::size_t i = 0; i < plane; ++i) p[i] = g;
        }
    }
    return dx;
}

float conv_init_bound(const ConvSpec& spec) {
    return std::sqrt(6.0f) / std::sqrt(static_cast<float>(spec.c_in * spec.k * spec.k));
}

}  // namespace

// -------------------------------------------------------------- ConvUnit

Tensor ConvUnit::effective_weights() const {
    if (lora.has_value()) return merged_conv_weights(weight.value, *lora);
    return weight.value;
}

Tensor ConvUnit::forward_eval(const Tensor& x) const {
    Tensor y = ops::conv2d_forward_batch(x, effective_weights(), spec);
    if (bias.has_value()) add_channel_bias(y, *bias);
    return y;
}

Tensor ConvUnit::forward_train(const Tensor& x) {
    x_cache = x;
    w_eff_cache = effective_weights();
    Tensor y = ops::conv2d_forward_batch(x, w_eff_cache, spec);
    if (bias.has_value()) add_channel_bias(y, *bias);
    return y;
}

Tensor ConvUnit::backward(const Tensor& dy) {
    if (x_cache.empty()) {
        throw std::invalid_argument("ConvUnit::backward: no cached forward for '" + name + "'");
    }
    auto [dx, dw] = ops::conv2d_backward_batch(x_cache, w_eff_cache, spec, dy);
    if (weight.grad.has_value()) {
        for (std::size_t i = 0; i < dw.data.size(); ++i) weight.grad->data[i] += dw.data[i];
    }
    if (lora.has_value()) {
        accumulate_factor_grads(*lora, dw);
    }
    return std::move(dx);
}

// ------------------------------------------------------------- BatchNorm

void BatchNorm::init(const std::string& n, int c, bool affine_trainable) {
    name = n;
    channels = c;
    gamma.name = n + ".gamma";
    gamma.value = Tensor({c}, 1.0f);
    beta.name = n + ".beta";
    beta.value = Tensor({c});
    if (affine_trainable) {
        gamma.make_trainable();
        beta.make_trainable();
    }
    running_mean = Tensor({c});
    running_var = Tensor({c}, 1.0f);
}

Tensor BatchNorm::forward_eval(const Tensor& x) const {
    if (fused) return x;
    if (x.dim(1) != channels) {
        throw std::invalid_argument(name + ": channel axis is " + std::to_string(x.dim(1)) +
                                    ", expected " + std::to_string(channels));
    }
    Tensor y = x;
    const int n = x.dim(0);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    for (int c = 0; c < channels; ++c) {
        const float inv = 1.0f / std::sqrt(running_var.data[c] + eps);
        const float g = gamma.value.data[c] * inv;
        const float b = beta.value.data[c] - running_mean.data[c] * g;
        for (int s = 0; s < n; ++s) {
            float* p = y.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] * g + b;
        }
    }
    return y;
}

Tensor BatchNorm::forward_train(const Tensor& x, bool update_stats) {
    if (fused) throw std::invalid_argument(name + ": cannot train a fused BN layer");
    if (x.dim(1) != channels) {
        throw std::invalid_argument(name + ": channel axis is " + std::to_string(x.dim(1)) +
                                    ", expected " + std::to_string(channels));
    }
    const int n = x.dim(0);
    const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const double count = static_cast<double>(n) * plane;

    x_hat_cache = Tensor(x.shape);
    inv_std_cache.assign(static_cast<std::size_t>(channels), 0.0f);
    Tensor y(x.shape);

    for (int c = 0; c < channels; ++c) {
        double sum = 0.0, sq = 0.0;
        for (int s = 0; s < n; ++s) {
            const float* p = x.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum += p[i];
                sq += static_cast<double>(p[i]) * p[i];
            }
        }
        const float mean = static_cast<float>(sum / count);
        const float var = static_cast<float>(std::max(0.0, sq / count - (sum / count) * (sum / count)));
        const float inv = 1.0f / std::sqrt(var + eps);
        inv_std_cache[c] = inv;
        const float g = gamma.value.data[c];
        const float b = beta.value.data[c];
        for (int s = 0; s < n; ++s) {
            const float* p = x.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            float* xh = x_hat_cache.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            float* py = y.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                xh[i] = (p[i] - mean) * inv;
                py[i] = xh[i] * g + b;
            }
        }
        if (update_stats) {
            running_mean.data[c] = (1.0f - momentum) * running_mean.data[c] + momentum * mean;
            running_var.data[c] = (1.0f - momentum) * running_var.data[c] + momentum * var;
        }
    }
    return y;
}

Tensor BatchNorm::backward(const Tensor& dy) {
    if (x_hat_cache.empty()) {
        throw std::invalid_argument(name + ": backward without cached forward");
    }
    const int n = dy.dim(0);
    const std::size_t plane = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3);
    const double count = static_cast<double>(n) * plane;
    Tensor dx(dy.shape);

    for (int c = 0; c < channels; ++c) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int s = 0; s < n; ++s) {
            const float* pd = dy.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            const float* xh = x_hat_cache.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                sum_dy += pd[i];
                sum_dy_xhat += static_cast<double>(pd[i]) * xh[i];
            }
        }
        if (gamma.grad.has_value()) gamma.grad->data[c] += static_cast<float>(sum_dy_xhat);
        if (beta.grad.has_value()) beta.grad->data[c] += static_cast<float>(sum_dy);

        const float g = gamma.value.data[c];
        const float inv = inv_std_cache[c];
        const float mean_dy = static_cast<float>(sum_dy / count);
        const float mean_dy_xhat = static_cast<float>(sum_dy_xhat / count);
        for (int s = 0; s < n; ++s) {
            const float* pd = dy.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            const float* xh = x_hat_cache.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            float* px = dx.ptr() + (static_cast<std::size_t>(s) * channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                px[i] = g * inv * (pd[i] - mean_dy - xh[i] * mean_dy_xhat);
            }
        }
    }
    return dx;
}

// -------------------------------------------------------------- ResBlock

Tensor ResBlock::forward_eval(const Tensor& x, bool) const {
    Tensor y = relu_eval(bn1.forward_eval(conv1.forward_eval(x)));
    if (kind == BlockKind::Basic) {
        y = bn2.forward_eval(conv2.forward_eval(y));
    } else {
        y = relu_eval(bn2.forward_eval(conv2.forward_eval(y)));
        y = bn3->forward_eval(conv3->forward_eval(y));
    }
    Tensor shortcut = proj.has_value() ? proj_bn->forward_eval(proj->forward_eval(x)) : x;
    add_inplace(y, shortcut);
    return relu_eval(y);
}

Tensor ResBlock::forward_train(const Tensor& x, bool update_bn_stats) {
    Tensor y = relu_train(bn1.forward_train(conv1.forward_train(x), update_bn_stats), mask1);
    if (kind == BlockKind::Basic) {
        y = bn2.forward_train(conv2.forward_train(y), update_bn_stats);
    } else {
        y = relu_train(bn2.forward_train(conv2.forward_train(y), update_bn_stats), mask2);
        y = bn3->forward_train(conv3->forward_train(y), update_bn_stats);
    }
    Tensor shortcut = proj.has_value()
                          ? proj_bn->forward_train(proj->forward_train(x), update_bn_stats)
                          : x;
    add_inplace(y, shortcut);
    return relu_train(y, mask_out);
}

Tensor ResBlock::backward(const Tensor& dy) {
    Tensor d = relu_backward(dy, mask_out);

    Tensor dmain;
    if (kind == BlockKind::Basic) {
        dmain = conv2.backward(bn2.backward(d));
    } else {
        dmain = conv3->backward(bn3->backward(d));
        dmain = relu_backward(dmain, mask2);
        dmain = conv2.backward(bn2.backward(dmain));
    }
    dmain = relu_backward(dmain, mask1);
    dmain = conv1.backward(bn1.backward(dmain));

    if (proj.has_value()) {
        Tensor dshort = proj->backward(proj_bn->backward(d));
        add_inplace(dmain, dshort);
    } else {
        add_inplace(dmain, d);
    }
    return dmain;
}

// --------------------------------------------------------------- Network

namespace {

int block_expansion(BlockKind kind) { return kind == BlockKind::Basic ? 1 : 4; }

ConvUnit make_conv(const std::string& name, const ConvSpec& spec, LayerPolicy policy,
                   std::uint64_t init_seed) {
    ConvUnit cu;
    cu.name = name;
    cu.spec = spec;
    cu.policy = policy;
    cu.weight.name = name + ".weight";
    cu.weight.value = Tensor(spec.weight_shape());
    Rng rng(init_seed);
    const float b = conv_init_bound(spec);
    rng.fill_uniform(cu.weight.value, -b, b);
    if (policy == LayerPolicy::Trainable) cu.weight.make_trainable();
    return cu;
}

// Shared skeleton for the plain and LoRA-adapted builds. `adapt` attaches a
// branch to every non-stem conv when set.
Network build_impl(const ModelConfig& cfg, bool adapt, RankMode mode, float alpha) {
    cfg.validate();
    Network net;
    net.cfg = cfg;
    net.lora_enabled = adapt;
    net.rank_mode = mode;
    net.alpha = alpha;

    const LayerPolicy conv_policy = adapt ? LayerPolicy::FrozenWithLora : LayerPolicy::Trainable;
    const bool bn_trainable = !adapt;
    std::uint64_t layer_idx = 0;
    auto next_seed = [&]() { return Rng::mix(cfg.seed, 0x200 + layer_idx++); };
    auto lora_seed = [&](std::uint64_t i) { return Rng::mix(cfg.seed, 0x9000 + i); };
    std::uint64_t lora_idx = 0;

    auto attach = [&](ConvUnit& cu) {
        if (adapt) {
            cu.lora = init_factors(cu.spec, mode, Granularity::LayerWise, alpha, lora_seed(lora_idx++));
        }
    };

    const int stem_out = cfg.stages[0].channels;
    net.stem = make_conv("stem", ConvSpec{stem_out, cfg.input_channels, 3, 1, 1},
                         LayerPolicy::Trainable, next_seed());
    net.stem_bn.init("stem_bn", stem_out, bn_trainable);

    const int exp = block_expansion(cfg.block_kind);
    int in_ch = stem_out;
    for (std::size_t si = 0; si < cfg.stages.size(); ++si) {
        const StageSpec& st = cfg.stages[si];
        for (int bi = 0; bi < st.num_blocks; ++bi) {
            const int stride = bi == 0 ? st.stride : 1;
            const int planes = st.channels;
            const int out_ch = planes * exp;
            const std::string bn = "s" + std::to_string(si) + "b" + std::to_string(bi);
            ResBlock blk;
            blk.kind = cfg.block_kind;
            if (cfg.block_kind == BlockKind::Basic) {
                blk.conv1 = make_conv(bn + ".conv1", ConvSpec{planes, in_ch, 3, stride, 1},
                                      conv_policy, next_seed());
                blk.bn1.init(bn + ".bn1", planes, bn_trainable);
                blk.conv2 = make_conv(bn + ".conv2", ConvSpec{planes, planes, 3, 1, 1},
                                      conv_policy, next_seed());
                blk.bn2.init(bn + ".bn2", planes, bn_trainable);
            } else {
                blk.conv1 = make_conv(bn + ".conv1", ConvSpec{planes, in_ch, 1, 1, 0},
                                      conv_policy, next_seed());
                blk.bn1.init(bn + ".bn1", planes, bn_trainable);
                blk.conv2 = make_conv(bn + ".conv2", ConvSpec{planes, planes, 3, stride, 1},
                                      conv_policy, next_seed());
                blk.bn2.init(bn + ".bn2", planes, bn_trainable);
                blk.conv3 = make_conv(bn + ".conv3", ConvSpec{out_ch, planes, 1, 1, 0},
                                      conv_policy, next_seed());
                blk.bn3.emplace();
                blk.bn3->init(bn + ".bn3", out_ch, bn_trainable);
            }
            if (stride != 1 || in_ch != out_ch) {
                blk.proj = make_conv(bn + ".proj", ConvSpec{out_ch, in_ch, 1, stride, 0},
                                     conv_policy, next_seed());
                blk.proj_bn.emplace();
                blk.proj_bn->init(bn + ".proj_bn", out_ch, bn_trainable);
            }
            attach(blk.conv1);
            attach(blk.conv2);
            if (blk.conv3.has_value()) attach(*blk.conv3);
            if (blk.proj.has_value()) attach(*blk.proj);
            net.blocks.push_back(std::move(blk));
            in_ch = out_ch;
        }
    }

    net.head_w.name = "head.weight";
    net.head_w.value = Tensor({cfg.num_classes, in_ch});
    net.head_b.name = "head.bias";
    net.head_b.value = Tensor({cfg.num_classes});
    Rng hr(next_seed());
    const float hb = 1.0f / std::sqrt(static_cast<float>(in_ch));
    hr.fill_uniform(net.head_w.value, -hb, hb);
    hr.fill_uniform(net.head_b.value, -hb, hb);
    net.head_w.make_trainable();
    net.head_b.make_trainable();
    return net;
}

}  // namespace

Network build_network(const ModelConfig& cfg, int r, float alpha,
                      std::optional<RankVariant> variant) {
    RankMode mode;
    mode.r = r;
    mode.variant = variant.value_or(select_rank_mode(backbone_param_count(cfg)));
    return build_impl(cfg, true, mode, alpha);
}

Network build_plain_network(const ModelConfig& cfg) {
    return build_impl(cfg, false, RankMode{}, 1.0f);
}

Network adapt_network(const Network& pretrained_base, int r, float alpha,
                      std::optional<RankVariant> variant) {
    if (pretrained_base.lora_enabled) {
        throw ConfigError("adapt_network: base must be a plain pretrained network");
    }
    Network net = build_network(pretrained_base.cfg, r, alpha, variant);
    const auto base_refs = pretrained_base.named_tensors();
    auto refs = net.named_tensors();
    std::size_t j = 0;
    for (TensorRef& ref : refs) {
        if (ref.role == TensorRole::LoraFactor) continue;
        if (j >= base_refs.size() || base_refs[j].name != ref.name ||
            base_refs[j].tensor->shape != ref.tensor->shape) {
            throw ConfigError("adapt_network: base tensor mismatch at '" + ref.name + "'");
        }
        ref.tensor->data = base_refs[j].tensor->data;
        ++j;
    }
    if (j != base_refs.size()) {
        throw ConfigError("adapt_network: base network has unexpected extra tensors");
    }
    return net;
}

std::vector<ConvSpec> conv_specs_of(const ModelConfig& cfg) {
    cfg.validate();
    std::vector<ConvSpec> specs;
    const int exp = block_expansion(cfg.block_kind);
    const int stem_out = cfg.stages[0].channels;
    specs.push_back(ConvSpec{stem_out, cfg.input_channels, 3, 1, 1});
    int in_ch = stem_out;
    for (const StageSpec& st : cfg.stages) {
        for (int bi = 0; bi < st.num_blocks; ++bi) {
            const int stride = bi == 0 ? st.stride : 1;
            const int planes = st.channels;
            const int out_ch = planes * exp;
            if (cfg.block_kind == BlockKind::Basic) {
                specs.push_back(ConvSpec{planes, in_ch, 3, stride, 1});
                specs.push_back(ConvSpec{planes, planes, 3, 1, 1});
            } else {
                specs.push_back(ConvSpec{planes, in_ch, 1, 1, 0});
                specs.push_back(ConvSpec{planes, planes, 3, stride, 1});
                specs.push_back(ConvSpec{out_ch, planes, 1, 1, 0});
            }
            if (stride != 1 || in_ch != out_ch) {
                specs.push_back(ConvSpec{out_ch, in_ch, 1, stride, 0});
            }
            in_ch = out_ch;
        }
    }
    return specs;
}

std::int64_t backbone_param_count(const ModelConfig& cfg) {
    std::int64_t total = 0;
    for (const ConvSpec& s : conv_specs_of(cfg)) total += count_full(s);
    // BN affine pairs track conv output channels.
    for (const ConvSpec& s : conv_specs_of(cfg)) total += 2 * static_cast<std::int64_t>(s.c_out);
    const int final_ch = cfg.stages.back().channels * block_expansion(cfg.block_kind);
    total += static_cast<std::int64_t>(final_ch) * cfg.num_classes + cfg.num_classes;
    return total;
}

int Network::final_channels() const {
    return cfg.stages.back().channels * block_expansion(cfg.block_kind);
}

Tensor Network::forward_eval(const Tensor& batch) const {
    Tensor x = relu_eval(stem_bn.forward_eval(stem.forward_eval(batch)));
    for (const ResBlock& blk : blocks) x = blk.forward_eval(x, bn_fused);
    Tensor feat = global_avg_pool(x);
    Tensor logits = ops::matmul(feat, ops::transpose(head_w.value));
    for (int s = 0; s < logits.dim(0); ++s) {
        for (int c = 0; c < logits.dim(1); ++c) logits.at2(s, c) += head_b.value.data[c];
    }
    return logits;
}

Tensor Network::forward_train(const Tensor& batch) {
    if (bn_fused) throw std::invalid_argument("forward_train: network has fused BN layers");
    const bool update = !freeze_bn_stats;
    Tensor x = relu_train(stem_bn.forward_train(stem.forward_train(batch), update), stem_mask);
    for (ResBlock& blk : blocks) x = blk.forward_train(x, update);
    feat_w = x.dim(2);
    feat_h = x.dim(3);
    head_in_cache = global_avg_pool(x);
    Tensor logits = ops::matmul(head_in_cache, ops::transpose(head_w.value));
    for (int s = 0; s < logits.dim(0); ++s) {
        for (int c = 0; c < logits.dim(1); ++c) logits.at2(s, c) += head_b.value.data[c];
    }
    return logits;
}

void Network::backward(const Tensor& dlogits) {
    if (head_in_cache.empty()) {
        throw std::invalid_argument("Network::backward: no cached forward");
    }
    Tensor dfeat = ops::matmul(dlogits, head_w.value);
    Tensor dw = ops::matmul(ops::transpose(dlogits), head_in_cache);
    for (std::size_t i = 0; i < dw.data.size(); ++i) head_w.grad->data[i] += dw.data[i];
    for (int s = 0; s < dlogits.dim(0); ++s) {
        for (int c = 0; c < dlogits.dim(1); ++c) head_b.grad->data[c] += dlogits.at2(s, c);
    }
    Tensor dx = global_avg_pool_backward(dfeat, feat_w, feat_h);
    for (auto it = blocks.rbegin(); it != blocks.rend(); ++it) dx = it->backward(dx);
    dx = relu_backward(dx, stem_mask);
    dx = stem_bn.backward(dx);
    stem.backward(dx);
}

std::vector<Param*> Network::trainable_parameters() {
    std::vector<Param*> out;
    auto maybe = [&](Param& p) {
        if (p.trainable()) out.push_back(&p);
    };
    auto conv_params = [&](ConvUnit& cu) {
        maybe(cu.weight);
        if (cu.lora.has_value()) {
            out.push_back(&cu.lora->A);
            out.push_back(&cu.lora->B);
        }
    };
    conv_params(stem);
    maybe(stem_bn.gamma);
    maybe(stem_bn.beta);
    for (ResBlock& blk : blocks) {
        conv_params(blk.conv1);
        maybe(blk.bn1.gamma);
        maybe(blk.bn1.beta);
        conv_params(blk.conv2);
        maybe(blk.bn2.gamma);
        maybe(blk.bn2.beta);
        if (blk.conv3.has_value()) {
            conv_params(*blk.conv3);
            maybe(blk.bn3->gamma);
            maybe(blk.bn3->beta);
        }
        if (blk.proj.has_value()) {
            conv_params(*blk.proj);
            maybe(blk.proj_bn->gamma);
            maybe(blk.proj_bn->beta);
        }
    }
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
}

void Network::zero_grads() {
    for (Param* p : trainable_parameters()) p->zero_grad();
}

std::int64_t Network::trainable_scalar_count() const {
    std::int64_t total = 0;
    for (Param* p : const_cast<Network*>(this)->trainable_parameters()) total += p->value.numel();
    return total;
}

std::vector<TensorRef> Network::named_tensors() {
    std::vector<TensorRef> refs;
    auto param_role = [](const Param& p) {
        return p.trainable() ? TensorRole::TrainableParam : TensorRole::FrozenParam;
    };
    auto conv_refs = [&](ConvUnit& cu) {
        refs.push_back({cu.weight.name, &cu.weight.value, param_role(cu.weight)});
        if (cu.lora.has_value()) {
            refs.push_back({cu.name + ".lora_A", &cu.lora->A.value, TensorRole::LoraFactor});
            refs.push_back({cu.name + ".lora_B", &cu.lora->B.value, TensorRole::LoraFactor});
        }
        if (cu.bias.has_value()) {
            refs.push_back({cu.name + ".bias", &*cu.bias, TensorRole::FrozenParam});
        }
    };
    auto bn_refs = [&](BatchNorm& bn) {
        refs.push_back({bn.gamma.name, &bn.gamma.value, param_role(bn.gamma)});
        refs.push_back({bn.beta.name, &bn.beta.value, param_role(bn.beta)});
        refs.push_back({bn.name + ".running_mean", &bn.running_mean, TensorRole::Buffer});
        refs.push_back({bn.name + ".running_var", &bn.running_var, TensorRole::Buffer});
    };
    conv_refs(stem);
    bn_refs(stem_bn);
    for (ResBlock& blk : blocks) {
        conv_refs(blk.conv1);
        bn_refs(blk.bn1);
        conv_refs(blk.conv2);
        bn_refs(blk.bn2);
        if (blk.conv3.has_value()) {
            conv_refs(*blk.conv3);
            bn_refs(*blk.bn3);
        }
        if (blk.proj.has_value()) {
            conv_refs(*blk.proj);
            bn_refs(*blk.proj_bn);
        }
    }
    refs.push_back({head_w.name, &head_w.value, TensorRole::TrainableParam});
    refs.push_back({head_b.name, &head_b.value, TensorRole::TrainableParam});
    return refs;
}

std::vector<TensorRef> Network::named_tensors() const {
    return const_cast<Network*>(this)->named_tensors();
}

void Network::apply_bn_fusion_structure() {
    auto fuse_slot = [](ConvUnit& cu, BatchNorm& bn) {
        cu.bias = Tensor({cu.spec.c_out});
        bn.fused = true;
    };
    fuse_slot(stem, stem_bn);
    for (ResBlock& blk : blocks) {
        fuse_slot(blk.conv1, blk.bn1);
        fuse_slot(blk.conv2, blk.bn2);
        if (blk.conv3.has_value()) fuse_slot(*blk.conv3, *blk.bn3);
        if (blk.proj.has_value()) fuse_slot(*blk.proj, *blk.proj_bn);
    }
    bn_fused = true;
}

float batch_accuracy(const Tensor& logits, const std::vector<std::uint16_t>& labels) {
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<std::size_t>(n) != labels.size()) {
        throw std::invalid_argument("batch_accuracy: logits rows " + std::to_string(n) +
                                    " != labels " + std::to_string(labels.size()));
    }
    int hits = 0;
    for (int s = 0; s < n; ++s) {
        int best = 0;
        for (int j = 1; j < c; ++j) {
            if (logits.at2(s, j) > logits.at2(s, best)) best = j;
        }
        if (best == labels[static_cast<std::size_t>(s)]) ++hits;
    }
    return static_cast<float>(hits) / static_cast<float>(n);
}

}  // namespace lorac
