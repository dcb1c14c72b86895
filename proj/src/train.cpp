#include "lorac/train.hpp"

#include <chrono>
#include <cmath>

#include "lorac/checkpoint.hpp"
#include "lorac/ops.hpp"
#include "lorac/rng.hpp"

namespace lorac {

float LrSchedule::lr_at(float base_lr, int epoch) const {
    float lr = base_lr;
    switch (kind) {
        case Kind::Constant:
            break;
        case Kind::Step:
            if (every_n > 0) {
                for (int e = every_n; e <= epoch; e += every_n) lr *= gamma;
            }
            break;
        case Kind::Milestones:
            for (int m : milestones) {
                if (epoch >= m) lr *= gamma;
            }
            break;
    }
    return lr;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1, got " + std::to_string(epochs));
    if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
    if (lr < 0.0f) throw ConfigError("train config: lr must be >= 0");
    if (weight_decay < 0.0f) throw ConfigError("train config: weight_decay must be >= 0");
}

LrSchedule TrainConfig::default_schedule(int epochs) {
    LrSchedule s;
    s.kind = LrSchedule::Kind::Milestones;
    s.gamma = 0.1f;
    s.milestones = {epochs / 2, epochs * 3 / 4};
    return s;
}

EvalSuite EvalSuite::clean_only(const Dataset& clean_eval) {
    EvalSuite suite;
    suite.clean = clean_eval;
    return suite;
}

EvalSuite EvalSuite::build(const Dataset& clean_eval, int severity, std::uint64_t seed) {
    EvalSuite suite;
    suite.clean = clean_eval;
    std::vector<std::pair<std::string, std::vector<Dataset>>> fams = {
        {"noise", {}}, {"blur", {}}, {"weather", {}}, {"digital", {}}};
    for (const auto& [family, kind] : corruption_kinds()) {
        CorruptionSpec spec;
        spec.family = family;
        spec.kind = kind;
        spec.severity = severity;
        spec.seed = Rng::mix(seed, fnv1a64(kind));
        fams[static_cast<std::size_t>(family)].second.push_back(corrupt(clean_eval, spec));
    }
    suite.families = std::move(fams);
    return suite;
}

nlohmann::json TrainReport::to_json(bool include_timing) const {
    nlohmann::json recs = nlohmann::json::array();
    for (const EpochRecord& r : records) {
        nlohmann::json fam = nlohmann::json::object();
        for (const auto& [name, acc] : r.family_acc) fam[name] = acc;
        recs.push_back({
            {"epoch", r.epoch},
            {"lr", r.lr},
            {"train_loss", r.train_loss},
            {"train_acc", r.train_acc},
            {"eval_clean_acc", r.eval_clean_acc},
            {"family_acc", fam},
            {"corrupt_mean_acc", r.corrupt_mean_acc},
        });
    }
    nlohmann::json j = {
        {"schema", "lorac.train_report.v1"},
        {"seed", seed},
        {"epochs", epochs},
        {"updated_parameter_count", updated_parameter_count},
        {"updated_parameter_fraction", updated_parameter_fraction},
        {"epoch_records", recs},
    };
    if (include_timing) j["timing"] = {{"wall_time_s", wall_time_s}};
    return j;
}

BatchLoss batch_cross_entropy(const Tensor& logits, const std::vector<std::uint16_t>& labels) {
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<std::size_t>(n) != labels.size()) {
        throw std::invalid_argument("batch_cross_entropy: logits rows != labels");
    }
    BatchLoss out;
    out.dlogits = Tensor(logits.shape);
    double loss_sum = 0.0;
    int hits = 0;
    Tensor row({c});
    for (int s = 0; s < n; ++s) {
        for (int j = 0; j < c; ++j) row.data[static_cast<std::size_t>(j)] = logits.at2(s, j);
        const auto res = ops::cross_entropy_loss(row, labels[static_cast<std::size_t>(s)]);
        loss_sum += res.loss;
        int best = 0;
        for (int j = 1; j < c; ++j) {
            if (row.data[static_cast<std::size_t>(j)] > row.data[static_cast<std::size_t>(best)]) best = j;
        }
        if (best == labels[static_cast<std::size_t>(s)]) ++hits;
        const float scale = 1.0f / static_cast<float>(n);
        for (int j = 0; j < c; ++j) {
            out.dlogits.at2(s, j) = res.dlogits.data[static_cast<std::size_t>(j)] * scale;
        }
    }
    out.loss = static_cast<float>(loss_sum / n);
    out.accuracy = static_cast<float>(hits) / static_cast<float>(n);
    return out;
}

namespace {

Tensor slice_batch(const Tensor& images, const std::vector<int>& order, int begin, int end,
                   std::vector<std::uint16_t>* batch_labels, const std::vector<std::uint16_t>& labels) {
    const int c = images.dim(1), w = images.dim(2), h = images.dim(3);
    const std::size_t stride = static_cast<std::size_t>(c) * w * h;
    Tensor batch({end - begin, c, w, h});
    batch_labels->resize(static_cast<std::size_t>(end - begin));
    for (int i = begin; i < end; ++i) {
        const int src = order[static_cast<std::size_t>(i)];
        std::copy_n(images.ptr() + src * stride, stride, batch.ptr() + (i - begin) * stride);
        (*batch_labels)[static_cast<std::size_t>(i - begin)] = labels[static_cast<std::size_t>(src)];
    }
    return batch;
}

}  // namespace

float evaluate(const Network& net, const Dataset& ds, int batch_size) {
    const int n = ds.size();
    if (n == 0) throw ConfigError("evaluate: empty dataset");
    const int c = ds.images.dim(1), w = ds.images.dim(2), h = ds.images.dim(3);
    const std::size_t stride = static_cast<std::size_t>(c) * w * h;
    int hits = 0;
    for (int begin = 0; begin < n; begin += batch_size) {
        const int end = std::min(n, begin + batch_size);
        Tensor batch({end - begin, c, w, h});
        std::copy_n(ds.images.ptr() + begin * stride, (end - begin) * stride, batch.ptr());
        const Tensor logits = net.forward_eval(batch);
        for (int s = 0; s < end - begin; ++s) {
            int best = 0;
            for (int j = 1; j < logits.dim(1); ++j) {
                if (logits.at2(s, j) > logits.at2(s, best)) best = j;
            }
            if (best == ds.labels[static_cast<std::size_t>(begin + s)]) ++hits;
        }
    }
    return static_cast<float>(hits) / static_cast<float>(n);
}

TrainReport finetune(Network& net, const Dataset& train_data, const EvalSuite& eval_suite,
                     const TrainConfig& cfg) {
    cfg.validate();
    train_data.validate();
    if (train_data.size() == 0) throw ConfigError("finetune: empty training dataset");
    if (train_data.meta.num_classes != net.cfg.num_classes) {
        throw ConfigError("finetune: dataset has " + std::to_string(train_data.meta.num_classes) +
                          " classes, model expects " + std::to_string(net.cfg.num_classes));
    }
    const auto t0 = std::chrono::steady_clock::now();

    net.freeze_bn_stats = cfg.freeze_bn_stats;
    const std::vector<Param*> params = net.trainable_parameters();
    net.zero_grads();

    TrainReport report;
    report.seed = cfg.seed;
    report.epochs = cfg.epochs;
    report.updated_parameter_count = net.trainable_scalar_count();
    std::int64_t total_scalars = 0;
    for (const TensorRef& r : net.named_tensors()) {
        if (r.role != TensorRole::Buffer) total_scalars += r.tensor->numel();
    }
    report.updated_parameter_fraction =
        static_cast<double>(report.updated_parameter_count) / static_cast<double>(total_scalars);

    const int n = train_data.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const float lr = cfg.schedule.lr_at(cfg.lr, epoch);
        Rng shuffle_rng(Rng::mix(cfg.seed, 0xe90c0000ULL + static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        double acc_sum = 0.0;
        int batches = 0;
        for (int begin = 0; begin < n; begin += cfg.batch_size) {
            const int end = std::min(n, begin + cfg.batch_size);
            std::vector<std::uint16_t> labels;
            Tensor batch = slice_batch(train_data.images, order, begin, end, &labels,
                                       train_data.labels);
            const Tensor logits = net.forward_train(batch);
            BatchLoss bl = batch_cross_entropy(logits, labels);
            if (!std::isfinite(bl.loss)) {
                throw ComputeError("finetune: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batches));
            }
            net.backward(bl.dlogits);
            ops::sgd_step(params, lr, cfg.weight_decay);
            loss_sum += bl.loss;
            acc_sum += bl.accuracy * (end - begin);
            ++batches;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        rec.train_loss = static_cast<float>(loss_sum / batches);
        rec.train_acc = static_cast<float>(acc_sum / n);
        rec.eval_clean_acc = evaluate(net, eval_suite.clean, cfg.batch_size);
        double fam_sum = 0.0;
        for (const auto& [name, sets] : eval_suite.families) {
            double acc = 0.0;
            for (const Dataset& ds : sets) acc += evaluate(net, ds, cfg.batch_size);
            acc /= static_cast<double>(sets.size());
            rec.family_acc.emplace_back(name, static_cast<float>(acc));
            fam_sum += acc;
        }
        rec.corrupt_mean_acc = eval_suite.families.empty()
                                   ? 0.0f
                                   : static_cast<float>(fam_sum / eval_suite.families.size());
        report.records.push_back(std::move(rec));
    }

    report.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace lorac
