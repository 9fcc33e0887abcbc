#pragma once
// Synthetic echo-like dataset generator. Every class owns a static spatial
// template (one dim chamber ellipse plus two bright blobs) and a "valve"
// whose size and brightness oscillate at a class-specific frequency.
// Classes listed as an ambiguous pair share the template and valve
// geometry exactly and differ only in oscillation frequency, so no single
// frame can separate them — only the temporal signature can.
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tfw/dataset.h"

namespace tfw {

struct SyntheticSpec {
    int64_t n_classes = 12;
    int64_t n_patients = 20;
    int64_t clips_per_patient = 4;  // per (patient, class)
    int64_t frames_per_clip = 16;
    int64_t image_size = 32;
    std::vector<std::pair<int64_t, int64_t>> ambiguous_pairs;
    double noise_level = 0.05;
    uint64_t seed = 0;
};

// writes PNG frames + manifest.csv under out_root and returns the index
DatasetIndex gen_synthetic(const SyntheticSpec& spec, const std::string& out_root);

}  // namespace tfw
