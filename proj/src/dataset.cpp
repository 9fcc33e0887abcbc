#include "tfw/dataset.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <unordered_set>

namespace fs = std::filesystem;

namespace tfw {

const std::vector<std::string>& ned12_labels() {
    static const std::vector<std::string> labels = {
        "APICAL_4C_LVRV", "APICAL_5C",  "APICAL_3C_RV", "APICAL_3C_LV",
        "APICAL_2C_LV",   "PLAX_LV",    "PLAX_RV_IN",   "PLAX_RV_OUT",
        "PSAX_APEX",      "PSAX_PAPS",  "PSAX_MV",      "PSAX_AV",
    };
    return labels;
}

const std::vector<std::string>& ned16_labels() {
    static const std::vector<std::string> labels = [] {
        std::vector<std::string> v = ned12_labels();
        v.insert(v.end(), {"BRANCH_PA", "DUCTAL_CUT", "ARCH", "SUBCOSTAL_IVC"});
        return v;
    }();
    return labels;
}

std::vector<std::string> DatasetIndex::patients() const {
    std::set<std::string> uniq;
    for (const auto& c : clips) uniq.insert(c.patient_id);
    return {uniq.begin(), uniq.end()};
}

namespace {

int64_t label_of(const std::string& viewpoint, const std::vector<std::string>& label_set) {
    auto it = std::find(label_set.begin(), label_set.end(), viewpoint);
    if (it == label_set.end()) return -1;
    return static_cast<int64_t>(it - label_set.begin());
}

std::string valid_labels_msg(const std::vector<std::string>& label_set) {
    std::string msg = "valid labels:";
    for (const auto& l : label_set) msg += " " + l;
    return msg;
}

struct RawRow {
    std::string patient, viewpoint, clip, path;
    int64_t frame_index;
};

std::vector<RawRow> read_manifest(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw StateError("cannot open manifest: " + manifest_path);
    std::string line;
    if (!std::getline(is, line)) throw StateError("empty manifest: " + manifest_path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "patient_id,viewpoint,clip_id,frame_index,path")
        throw StateError("bad manifest header in " + manifest_path + ": " + line);
    std::vector<RawRow> rows;
    size_t lineno = 1;
    const fs::path base = fs::path(manifest_path).parent_path();
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        RawRow r;
        std::string idx;
        if (!std::getline(ss, r.patient, ',') || !std::getline(ss, r.viewpoint, ',') ||
            !std::getline(ss, r.clip, ',') || !std::getline(ss, idx, ',') || !std::getline(ss, r.path))
            throw StateError("malformed manifest line " + std::to_string(lineno) + " in " + manifest_path);
        try {
            r.frame_index = std::stoll(idx);
        } catch (const std::exception&) {
            throw StateError("bad frame_index at manifest line " + std::to_string(lineno));
        }
        if (fs::path(r.path).is_relative()) r.path = (base / r.path).string();
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<RawRow> scan_tree(const std::string& root) {
    std::vector<RawRow> rows;
    for (const auto& pdir : fs::directory_iterator(root)) {
        if (!pdir.is_directory()) continue;
        for (const auto& vdir : fs::directory_iterator(pdir.path())) {
            if (!vdir.is_directory()) continue;
            for (const auto& cdir : fs::directory_iterator(vdir.path())) {
                if (!cdir.is_directory()) continue;
                for (const auto& fent : fs::directory_iterator(cdir.path())) {
                    if (!fent.is_regular_file() || fent.path().extension() != ".png") continue;
                    RawRow r;
                    r.patient = pdir.path().filename().string();
                    r.viewpoint = vdir.path().filename().string();
                    r.clip = cdir.path().filename().string();
                    r.path = fent.path().string();
                    // frame_NNNN.png -> NNNN; anything unparsable sorts by name via -1 fallback
                    const std::string stem = fent.path().stem().string();
                    const auto us = stem.rfind('_');
                    try {
                        r.frame_index = std::stoll(stem.substr(us == std::string::npos ? 0 : us + 1));
                    } catch (const std::exception&) {
                        throw StateError("cannot parse frame index from " + fent.path().string());
                    }
                    rows.push_back(std::move(r));
                }
            }
        }
    }
    return rows;
}

}  // namespace

DatasetIndex load_index(const std::string& path, const std::vector<std::string>& labels) {
    std::vector<RawRow> rows;
    if (fs::is_directory(path)) {
        const fs::path manifest = fs::path(path) / "manifest.csv";
        rows = fs::exists(manifest) ? read_manifest(manifest.string()) : scan_tree(path);
    } else if (fs::is_regular_file(path)) {
        rows = read_manifest(path);
    } else {
        throw StateError("no such dataset root or manifest: " + path);
    }

    std::sort(rows.begin(), rows.end(), [](const RawRow& a, const RawRow& b) {
        return std::tie(a.patient, a.viewpoint, a.clip, a.frame_index) <
               std::tie(b.patient, b.viewpoint, b.clip, b.frame_index);
    });

    DatasetIndex index;
    if (labels.empty()) {
        std::set<std::string> seen;
        for (const auto& r : rows) seen.insert(r.viewpoint);
        index.label_set.assign(seen.begin(), seen.end());
    } else {
        index.label_set = labels;
    }

    std::unordered_set<std::string> clip_keys;
    for (const auto& r : rows) {
        const int64_t lab = label_of(r.viewpoint, index.label_set);
        if (lab < 0)
            throw StateError("unknown viewpoint '" + r.viewpoint + "' in " + path + "; " +
                             valid_labels_msg(index.label_set));
        const bool fresh = index.clips.empty() || index.clips.back().patient_id != r.patient ||
                           index.clips.back().viewpoint != r.viewpoint ||
                           index.clips.back().clip_id != r.clip;
        if (fresh) {
            const std::string key = r.patient + "\x1f" + r.clip;
            if (!clip_keys.insert(key).second)
                throw StateError("duplicate (patient, clip) pair: " + r.patient + "/" + r.clip);
            ClipRecord c;
            c.patient_id = r.patient;
            c.viewpoint = r.viewpoint;
            c.clip_id = r.clip;
            c.label = lab;
            index.clips.push_back(std::move(c));
        }
        index.clips.back().frame_paths.push_back(r.path);
    }
    // empty clips can only arise from directory scans of folders with no
    // frames; those never produced rows, so nothing to skip here — but a
    // directory crawl may still have found empty clip dirs worth noting
    if (fs::is_directory(path) && !fs::exists(fs::path(path) / "manifest.csv")) {
        for (const auto& pdir : fs::directory_iterator(path)) {
            if (!pdir.is_directory()) continue;
            for (const auto& vdir : fs::directory_iterator(pdir.path())) {
                if (!vdir.is_directory()) continue;
                for (const auto& cdir : fs::directory_iterator(vdir.path())) {
                    if (!cdir.is_directory()) continue;
                    bool any = false;
                    for (const auto& fent : fs::directory_iterator(cdir.path()))
                        if (fent.is_regular_file() && fent.path().extension() == ".png") any = true;
                    if (!any)
                        std::cerr << "warning: skipping empty clip " << cdir.path().string() << "\n";
                }
            }
        }
    }
    return index;
}

std::string sampling_mode_name(SamplingMode m) {
    return m == SamplingMode::consecutive ? "consecutive" : "spaced";
}

SamplingMode sampling_mode_from_name(const std::string& name) {
    if (name == "consecutive") return SamplingMode::consecutive;
    if (name == "spaced") return SamplingMode::spaced;
    throw ConfigError("unknown sampling mode '" + name + "' (expected consecutive or spaced)");
}

std::vector<int64_t> sample_consecutive(const ClipRecord& clip, int64_t n, Rng& rng) {
    const int64_t L = static_cast<int64_t>(clip.frame_paths.size());
    if (L < n)
        throw ConfigError("clip " + clip.patient_id + "/" + clip.clip_id + " has " + std::to_string(L) +
                          " frames, need " + std::to_string(n));
    const int64_t start = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(L - n + 1)));
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = start + i;
    return idx;
}

std::vector<int64_t> sample_spaced(const ClipRecord& clip, int64_t n) {
    const int64_t L = static_cast<int64_t>(clip.frame_paths.size());
    if (L < n)
        throw ConfigError("clip " + clip.patient_id + "/" + clip.clip_id + " has " + std::to_string(L) +
                          " frames, need " + std::to_string(n));
    std::vector<int64_t> idx(static_cast<size_t>(n));
    if (n == 1) {
        idx[0] = 0;
        return idx;
    }
    for (int64_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) * static_cast<double>(L - 1) / static_cast<double>(n - 1);
        idx[static_cast<size_t>(i)] = static_cast<int64_t>(std::floor(pos + 0.5));
    }
    return idx;
}

FrameSequence augment_sequence(const FrameSequence& seq, const AugmentSpec& spec, Rng& rng) {
    AffineParams p;
    if (spec.rotation_max_deg > 0.0)
        p.angle = rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg) * std::numbers::pi / 180.0;
    if (spec.scale_min != 1.0 || spec.scale_max != 1.0) p.scale = rng.uniform(spec.scale_min, spec.scale_max);
    if (spec.shift_max > 0.0) {
        p.shift_y = rng.uniform(-spec.shift_max, spec.shift_max);
        p.shift_x = rng.uniform(-spec.shift_max, spec.shift_max);
    }
    if (spec.hflip_prob > 0.0) p.hflip = rng.uniform() < spec.hflip_prob;
    if (spec.vflip_prob > 0.0) p.vflip = rng.uniform() < spec.vflip_prob;

    FrameSequence out;
    out.patient_id = seq.patient_id;
    out.clip_id = seq.clip_id;
    out.label = seq.label;
    out.frames.reserve(seq.frames.size());
    for (const auto& f : seq.frames) out.frames.push_back(warp_affine(f, p));

    if (spec.auto_contrast && !out.frames.empty()) {
        // one min/max across the whole sequence so inter-frame brightness
        // ratios survive the remap
        float lo = out.frames[0].ptr()[0], hi = lo;
        for (const auto& f : out.frames)
            for (int64_t i = 0; i < f.numel(); ++i) {
                lo = std::min(lo, f.ptr()[i]);
                hi = std::max(hi, f.ptr()[i]);
            }
        if (hi > lo) {
            const float inv = 1.0f / (hi - lo);
            for (auto& f : out.frames)
                for (int64_t i = 0; i < f.numel(); ++i) f.ptr()[i] = (f.ptr()[i] - lo) * inv;
        }
    }
    return out;
}

FoldPlan patient_kfold(const DatasetIndex& index, int64_t k, uint64_t seed) {
    const std::vector<std::string> pats = index.patients();
    if (static_cast<int64_t>(pats.size()) < k)
        throw ConfigError("patient_kfold: " + std::to_string(pats.size()) + " patients < k=" + std::to_string(k));
    if (k <= 0) throw ConfigError("patient_kfold: k must be positive");
    Rng rng(seed);
    const std::vector<int64_t> perm = rng.permutation(pats.size());
    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.test_patients.resize(static_cast<size_t>(k));
    for (size_t i = 0; i < pats.size(); ++i)
        plan.test_patients[i % static_cast<size_t>(k)].push_back(pats[perm[i]]);
    return plan;
}

FoldPlan holdout_plan(const DatasetIndex& index, double test_fraction, uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("holdout_plan: test_fraction must lie in (0, 1)");
    const std::vector<std::string> pats = index.patients();
    int64_t n_test = static_cast<int64_t>(std::llround(test_fraction * static_cast<double>(pats.size())));
    n_test = std::max<int64_t>(1, std::min<int64_t>(n_test, static_cast<int64_t>(pats.size()) - 1));
    if (pats.size() < 2) throw ConfigError("holdout_plan: need at least 2 patients");
    Rng rng(seed);
    const std::vector<int64_t> perm = rng.permutation(pats.size());
    FoldPlan plan;
    plan.k = 1;
    plan.seed = seed;
    plan.test_patients.resize(1);
    for (int64_t i = 0; i < n_test; ++i)
        plan.test_patients[0].push_back(pats[perm[static_cast<size_t>(i)]]);
    return plan;
}

std::vector<int64_t> fold_clips(const DatasetIndex& index, const FoldPlan& plan, int64_t fold, bool test_side) {
    if (fold < 0 || fold >= plan.k) throw ConfigError("fold " + std::to_string(fold) + " out of range");
    std::unordered_set<std::string> test_set(plan.test_patients[static_cast<size_t>(fold)].begin(),
                                             plan.test_patients[static_cast<size_t>(fold)].end());
    std::vector<int64_t> out;
    for (size_t i = 0; i < index.clips.size(); ++i) {
        const bool in_test = test_set.count(index.clips[i].patient_id) != 0;
        if (in_test == test_side) out.push_back(static_cast<int64_t>(i));
    }
    return out;
}

}  // namespace tfw
