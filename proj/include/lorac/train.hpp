#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

#include "lorac/data.hpp"
#include "lorac/model.hpp"

namespace lorac {

struct LrSchedule {
    enum class Kind { Constant, Step, Milestones };
    Kind kind = Kind::Constant;
    float gamma = 0.1f;
    int every_n = 0;              // Step: decay every n epochs
    std::vector<int> milestones;  // Milestones: decay at these epochs

    float lr_at(float base_lr, int epoch) const;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    float lr = 0.1f;
    float weight_decay = 5e-4f;
    std::uint64_t seed = 0;
    LrSchedule schedule;
    bool freeze_bn_stats = false;

    void validate() const;
    // x0.1 at 50% and 75% of the epoch budget.
    static LrSchedule default_schedule(int epochs);
};

// Evaluation side of the desk scenario: a clean split plus per-family
// corrupted variants of it.
struct EvalSuite {
    Dataset clean;
    std::vector<std::pair<std::string, std::vector<Dataset>>> families;

    // clean split corrupted with every kind of every family at `severity`.
    static EvalSuite build(const Dataset& clean_eval, int severity, std::uint64_t seed);
    static EvalSuite clean_only(const Dataset& clean_eval);
};

struct EpochRecord {
    int epoch = 0;
    float lr = 0.0f;
    float train_loss = 0.0f;
    float train_acc = 0.0f;
    float eval_clean_acc = 0.0f;
    std::vector<std::pair<std::string, float>> family_acc;
    float corrupt_mean_acc = 0.0f;  // mean over families; 0 when none
};

struct TrainReport {
    std::uint64_t seed = 0;
    int epochs = 0;
    std::int64_t updated_parameter_count = 0;
    double updated_parameter_fraction = 0.0;
    std::vector<EpochRecord> records;
    double wall_time_s = 0.0;

    const EpochRecord& final_record() const { return records.back(); }
    // include_timing=false gives the canonical form used for determinism
    // comparisons; wall time is informational.
    nlohmann::json to_json(bool include_timing) const;
    std::string canonical_json() const { return to_json(false).dump(2); }
};

// Mean cross-entropy over the batch plus the scaled logit gradient.
struct BatchLoss {
    float loss;
    float accuracy;
    Tensor dlogits;
};
BatchLoss batch_cross_entropy(const Tensor& logits, const std::vector<std::uint16_t>& labels);

float evaluate(const Network& net, const Dataset& ds, int batch_size = 64);

// Epoch / minibatch loop over whatever the network marks trainable. Data
// order is reshuffled per epoch from (cfg.seed, epoch). Aborts on NaN loss.
TrainReport finetune(Network& net, const Dataset& train_data, const EvalSuite& eval_suite,
                     const TrainConfig& cfg);

}  // namespace lorac
