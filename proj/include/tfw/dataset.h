#pragma once
// Dataset index, frame-sequence sampling, sequence-wide augmentation, and
// the patient-wise K-fold splitter.
//
// On-disk layout: root/<patient_id>/<viewpoint>/<clip_id>/frame_NNNN.png,
// or a CSV manifest (patient_id,viewpoint,clip_id,frame_index,path). When
// both exist, the manifest wins.
#include <cstdint>
#include <string>
#include <vector>

#include "tfw/image.h"
#include "tfw/rng.h"
#include "tfw/tensor.h"

namespace tfw {

struct ClipRecord {
    std::string patient_id;
    std::string viewpoint;
    std::string clip_id;
    std::vector<std::string> frame_paths;  // ordered by frame index
    int64_t label = -1;                    // position of viewpoint in label_set
};

struct DatasetIndex {
    std::vector<ClipRecord> clips;
    std::vector<std::string> label_set;

    std::vector<std::string> patients() const;  // sorted unique patient ids
};

// Built-in viewpoint presets (12- and 16-label neonatal echo protocols).
const std::vector<std::string>& ned12_labels();
const std::vector<std::string>& ned16_labels();

// Load from a directory tree or a manifest CSV. `labels` fixes the label
// set and rejects anything outside it; empty means infer the sorted set of
// viewpoints present.
DatasetIndex load_index(const std::string& path, const std::vector<std::string>& labels = {});

// ------------------------------------------------------------- sampling

enum class SamplingMode { consecutive, spaced };

std::string sampling_mode_name(SamplingMode m);
SamplingMode sampling_mode_from_name(const std::string& name);

std::vector<int64_t> sample_consecutive(const ClipRecord& clip, int64_t n, Rng& rng);
std::vector<int64_t> sample_spaced(const ClipRecord& clip, int64_t n);

// ---------------------------------------------------------- augmentation

struct AugmentSpec {
    double rotation_max_deg = 0.0;  // draw in [-max, +max]
    bool auto_contrast = false;     // sequence-wide min/max remap
    double scale_min = 1.0, scale_max = 1.0;
    double shift_max = 0.0;  // pixels, each axis in [-max, +max]
    double hflip_prob = 0.0;
    double vflip_prob = 0.0;
};

struct FrameSequence {
    std::vector<Tensor> frames;
    std::string patient_id, clip_id;
    int64_t label = -1;
};

// One parameter draw per sequence; the identical transform hits every
// frame, and contrast is normalized against the sequence-wide min/max so
// relative brightness across time is preserved.
FrameSequence augment_sequence(const FrameSequence& seq, const AugmentSpec& spec, Rng& rng);

// --------------------------------------------------------------- folding

struct FoldPlan {
    int64_t k = 0;
    uint64_t seed = 0;
    std::vector<std::vector<std::string>> test_patients;  // one set per fold
};

FoldPlan patient_kfold(const DatasetIndex& index, int64_t k, uint64_t seed);

// Single patient-wise train/test split (k = 1), reserving roughly
// test_fraction of the patients for the test side.
FoldPlan holdout_plan(const DatasetIndex& index, double test_fraction, uint64_t seed);

// clip indices for one side of a fold
std::vector<int64_t> fold_clips(const DatasetIndex& index, const FoldPlan& plan, int64_t fold, bool test_side);

}  // namespace tfw
