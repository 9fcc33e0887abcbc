#pragma once
// Training loops for every model kind, clip-level evaluation, and the
// patient-wise cross-validation harness.
//
// Determinism contract: for a fixed (config, seed) the run is bitwise
// reproducible regardless of worker-thread count. Per-sample gradients go
// into private buffers that are reduced in sample order, and every random
// decision derives from seed_for(seed, epoch, sample) rather than from
// shared-stream consumption order. TFW_THREADS caps the worker pool.
#include <cstdint>
#include <string>
#include <vector>

#include "tfw/dataset.h"
#include "tfw/metrics.h"
#include "tfw/models.h"
#include "tfw/optim.h"

namespace tfw {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::adam;
    double max_lr = 3e-3;
    double momentum = 0.75;  // SGD momentum, or Adam beta1
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double l2 = 5e-4;
    int64_t batch_size = 16;
    int64_t epochs = 40;
    bool cyclic = true;  // triangular schedule, base = max/10, 10-epoch cycles
    SamplingMode sampling = SamplingMode::consecutive;
    bool per_step_loss = true;       // sequence heads: mean CE over steps; false = final step only
    bool finetune_backbone = false;  // sequence heads: propagate gradients into the backbone
    bool all_windows = true;         // sequence heads: every non-overlapping window is a sample
    uint64_t seed = 0;
    AugmentSpec augment;
};

struct EpochStats {
    double mean_loss = 0.0;
    double train_accuracy = 0.0;  // percent
};

struct TrainResult {
    std::vector<EpochStats> history;
};

int64_t worker_count();  // TFW_THREADS-capped hardware concurrency

// Train `model` in place on the given clips of `index`.
TrainResult train(Model& model, const DatasetIndex& index, const std::vector<int64_t>& clip_ids,
                  const TrainConfig& cfg);

// One prediction per clip: a single seeded random frame for the image kind,
// spaced-frame mean voting for mean_vote, and window-averaged final-step
// probabilities for the sequence kinds. Dropout off throughout.
MetricsReport evaluate(Model& model, const DatasetIndex& index, const std::vector<int64_t>& clip_ids,
                       SamplingMode sampling, uint64_t seed);

// Classifier pretraining stage for the sequence kinds: within each fold a
// single-frame classifier is trained first and donates its backbone.
struct PretrainSpec {
    bool enabled = true;
    double dropout = 0.3;
    TrainConfig cfg;
};

// Build and train a model on the given clips. Sequence heads go through
// the two-stage pipeline (classifier first, backbone donated); image kinds
// train directly. All randomness derives from `seed`.
Model train_pipeline(const ModelSpec& spec, const TrainConfig& cfg, const PretrainSpec& pretrain,
                     const DatasetIndex& index, const std::vector<int64_t>& train_ids, uint64_t seed,
                     TrainResult* history_out = nullptr);

CrossValReport cross_validate(const ModelSpec& spec, const TrainConfig& cfg, const PretrainSpec& pretrain,
                              const DatasetIndex& index, int64_t k, uint64_t seed,
                              std::vector<FoldPlan>* plans_out = nullptr);

}  // namespace tfw
