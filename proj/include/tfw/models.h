#pragma once
// Model zoo: the small residual backbone plus the five heads that get
// compared — single-frame classifier, mean-voting, plain GRU, GRU over
// weaved rows, and the self-attention baseline.
//
// Parameters live in a ParamStore under stable dotted names so the binary
// checkpoint format round-trips across model rebuilds. Forward passes fill
// optional cache structs; the matching backward accumulates into the
// store's gradient slots.
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfw/kernels.h"
#include "tfw/optim.h"
#include "tfw/rng.h"
#include "tfw/tensor.h"
#include "tfw/weave.h"

namespace tfw {

// ---------------------------------------------------------------- specs

struct Stage {
    int64_t channels = 8;
    int64_t blocks = 1;
    bool downsample = false;
};

struct BackboneSpec {
    std::vector<Stage> stages;  // empty => flatten mode: one dense layer on raw pixels
    int64_t input_size = 32;
    int64_t feature_dim = 64;
};

inline BackboneSpec desk_backbone(int64_t input_size = 32, int64_t feature_dim = 64) {
    BackboneSpec b;
    b.input_size = input_size;
    b.feature_dim = feature_dim;
    b.stages = {{8, 1, false}, {16, 1, true}, {32, 1, true}};
    return b;
}

enum class HeadKind { image, mean_vote, gru, gru_tfw, attention };

std::string head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& name);

struct HeadSpec {
    HeadKind kind = HeadKind::image;
    int64_t n_classes = 0;
    double dropout = 0.0;
    int64_t hidden = 64;     // gru kinds
    int64_t weave_k = 0;     // gru_tfw: 0 means K = N
    int64_t token_dim = 0;   // attention
    int64_t n_heads = 4;     // attention
    int64_t fc_dim = 0;      // attention: 0 means feature_dim
};

struct ModelSpec {
    BackboneSpec backbone;
    HeadSpec head;
    int64_t n_frames = 4;  // sequence length N for the sequence heads
};

void validate_model_spec(const ModelSpec& spec);

// --------------------------------------------------------------- model

struct Model {
    ModelSpec spec;
    ParamStore params;
};

Model build_model(const ModelSpec& spec, Rng& rng);
int64_t param_count(const ModelSpec& spec);

// copy every backbone parameter (bb.*) from src into dst; shapes must match
void transfer_backbone(const Model& src, Model& dst);
void set_backbone_trainable(Model& m, bool trainable);

// -------------------------------------------------------------- caches

struct BlockCache {
    Tensor x, a1, c1, a2, c2, y;
};

struct BackboneCache {
    Tensor input;            // [1, S, S]
    Tensor stem;             // post-stem conv
    std::vector<std::vector<BlockCache>> blocks;
    Tensor last, last_relu;  // final stage output and its relu
    Tensor gap;              // pooled [C_last]
    Tensor feat;             // projected [D]
};

struct ClassifierCache {
    BackboneCache bb;
    Tensor drop_mask, dropped;
    Tensor logits, probs;
};

struct GruStepCache {
    GruCache<float> cell;
    Tensor h;            // hidden after the step
    Tensor drop_mask, dropped;
    Tensor logits, probs;
};

struct AttnCache {
    Tensor tokens;       // [S, dt] after positional add
    MhsaCache<float> mhsa;
    Tensor attended;     // [S, dt]
    Tensor pooled;       // [dt]
    Tensor fc1, fc1_relu, drop_mask, dropped;
    Tensor logits, probs;
};

// ------------------------------------------------------------- forward

// frame: [S, S] or [1, S, S]; returns features [D]
Tensor backbone_features(Model& m, const Tensor& frame, BackboneCache* cache = nullptr);
// gradient wrt backbone params from d(loss)/d(feat); input gradient discarded
void backbone_backward(Model& m, const BackboneCache& cache, const Tensor& gfeat);

// single-frame classifier; probs returned, cache optional for training
Tensor classify_image(Model& m, const Tensor& frame, bool training, Rng* rng,
                      ClassifierCache* cache = nullptr);
float classifier_loss_grad(Model& m, const Tensor& frame, int64_t label, Rng& rng);

// arithmetic mean of probability rows [N, C] -> [C]
Tensor mean_vote(const Tensor& prob_rows);

// GRU over ready-made rows [K, Din]; per-step probabilities [K, C]
Tensor gru_sequence_forward(Model& m, const Tensor& rows, bool training, Rng* rng,
                            std::vector<GruStepCache>* caches = nullptr);
// loss over the sequence: mean per-step CE when per_step, else final-step CE;
// accumulates parameter gradients; grows (optional) receives d loss/d rows
float gru_loss_grad(Model& m, const Tensor& rows, int64_t label, bool per_step, Rng& rng,
                    Tensor* grows = nullptr);

// full pipelines from a stack of frames (eval path, no dropout)
Tensor gru_tfw_forward(Model& m, const std::vector<Tensor>& frames);
Tensor gru_plain_forward(Model& m, const std::vector<Tensor>& frames);

// attention over the concatenated features of N frames
Tensor attention_forward_features(Model& m, const Tensor& featmat, bool training, Rng* rng,
                                  AttnCache* cache = nullptr);
float attention_loss_grad(Model& m, const Tensor& featmat, int64_t label, Rng& rng,
                          Tensor* gfeatmat = nullptr);
Tensor attention_forward(Model& m, const std::vector<Tensor>& frames);

// rows fed to the recurrent head: weaved for gru_tfw, raw features for gru
Tensor sequence_rows(const Model& m, const Tensor& featmat);
// route d loss/d rows back to d loss/d features
Tensor sequence_rows_backward(const Model& m, const Tensor& grows, int64_t N, int64_t D);

}  // namespace tfw
