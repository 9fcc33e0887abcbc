#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "tfw/dataset.h"
#include "tfw/png_io.h"

using namespace tfw;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path root;
    explicit TmpDir(const std::string& tag) {
        root = fs::temp_directory_path() /
               ("tfw_ds_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TmpDir() { fs::remove_all(root); }
};

void write_frame(const fs::path& path, float value) {
    fs::create_directories(path.parent_path());
    write_png_gray(path.string(), Tensor::full({4, 4}, value));
}

// p01: VIEW_A/clip01 (frames 0,1,2,10 — exercises numeric ordering),
//      VIEW_B/clip02 (3 frames); p02: VIEW_A/clip03; p03: VIEW_B/clip04
void build_tree(const fs::path& root) {
    for (int i : {0, 1, 2, 10})
        write_frame(root / "p01" / "VIEW_A" / "clip01" / ("frame_" + std::to_string(i) + ".png"),
                    0.1f * static_cast<float>(i + 1));
    for (int i : {0, 1, 2})
        write_frame(root / "p01" / "VIEW_B" / "clip02" / ("frame_" + std::to_string(i) + ".png"), 0.5f);
    for (int i : {0, 1, 2})
        write_frame(root / "p02" / "VIEW_A" / "clip03" / ("frame_" + std::to_string(i) + ".png"), 0.5f);
    for (int i : {0, 1, 2})
        write_frame(root / "p03" / "VIEW_B" / "clip04" / ("frame_" + std::to_string(i) + ".png"), 0.5f);
}

ClipRecord fake_clip(const std::string& id, int64_t n_frames) {
    ClipRecord c;
    c.patient_id = "pX";
    c.clip_id = id;
    c.viewpoint = "VIEW_A";
    c.frame_paths.assign(static_cast<size_t>(n_frames), "unused.png");
    return c;
}

DatasetIndex fake_index(const std::vector<std::string>& patient_ids) {
    DatasetIndex idx;
    idx.label_set = {"VIEW_A"};
    int n = 0;
    for (const auto& p : patient_ids) {
        ClipRecord c;
        c.patient_id = p;
        c.viewpoint = "VIEW_A";
        c.clip_id = "c" + std::to_string(n++);
        c.label = 0;
        idx.clips.push_back(std::move(c));
    }
    return idx;
}

}  // namespace

TEST_CASE("directory scan builds a sorted index with numeric frame order") {
    TmpDir tmp("tree");
    build_tree(tmp.root);
    const DatasetIndex idx = load_index(tmp.root.string());

    REQUIRE(idx.clips.size() == 4);
    CHECK(idx.label_set == std::vector<std::string>{"VIEW_A", "VIEW_B"});
    CHECK(idx.patients() == std::vector<std::string>{"p01", "p02", "p03"});

    const ClipRecord& c0 = idx.clips[0];
    CHECK(c0.patient_id == "p01");
    CHECK(c0.clip_id == "clip01");
    CHECK(c0.viewpoint == "VIEW_A");
    CHECK(c0.label == 0);
    REQUIRE(c0.frame_paths.size() == 4);
    // frame_10 sorts after frame_2 numerically, not lexicographically
    CHECK(c0.frame_paths.back().find("frame_10.png") != std::string::npos);
    CHECK(c0.frame_paths[2].find("frame_2.png") != std::string::npos);

    CHECK(idx.clips[1].label == 1);  // VIEW_B
    CHECK(idx.clips[2].patient_id == "p02");
}

TEST_CASE("manifest load matches the tree scan regardless of row order") {
    TmpDir tmp("manifest");
    build_tree(tmp.root);
    const DatasetIndex from_tree = load_index(tmp.root.string());

    // write shuffled rows into a standalone manifest with absolute paths
    std::vector<std::string> rows;
    for (const auto& c : from_tree.clips)
        for (size_t f = 0; f < c.frame_paths.size(); ++f)
            rows.push_back(c.patient_id + "," + c.viewpoint + "," + c.clip_id + "," +
                           std::to_string(10 * f) + "," + c.frame_paths[f]);
    std::reverse(rows.begin(), rows.end());

    TmpDir mtmp("manifest_file");
    const fs::path mpath = mtmp.root / "index.csv";
    {
        std::ofstream os(mpath);
        os << "patient_id,viewpoint,clip_id,frame_index,path\n";
        for (const auto& r : rows) os << r << "\n";
    }
    const DatasetIndex from_manifest = load_index(mpath.string());
    REQUIRE(from_manifest.clips.size() == from_tree.clips.size());
    for (size_t i = 0; i < from_tree.clips.size(); ++i) {
        CHECK(from_manifest.clips[i].patient_id == from_tree.clips[i].patient_id);
        CHECK(from_manifest.clips[i].clip_id == from_tree.clips[i].clip_id);
        CHECK(from_manifest.clips[i].label == from_tree.clips[i].label);
        CHECK(from_manifest.clips[i].frame_paths == from_tree.clips[i].frame_paths);
    }
}

TEST_CASE("a manifest inside the root shadows the directory scan") {
    TmpDir tmp("shadow");
    build_tree(tmp.root);
    {
        std::ofstream os(tmp.root / "manifest.csv");
        os << "patient_id,viewpoint,clip_id,frame_index,path\n";
        os << "p01,VIEW_A,clip01,0," << (tmp.root / "p01/VIEW_A/clip01/frame_0.png").string() << "\n";
    }
    const DatasetIndex idx = load_index(tmp.root.string());
    REQUIRE(idx.clips.size() == 1);
    CHECK(idx.clips[0].clip_id == "clip01");
}

TEST_CASE("relative manifest paths resolve against the manifest directory") {
    TmpDir tmp("relpaths");
    write_frame(tmp.root / "p01" / "VIEW_A" / "c1" / "frame_0.png", 0.5f);
    {
        std::ofstream os(tmp.root / "manifest.csv");
        os << "patient_id,viewpoint,clip_id,frame_index,path\n";
        os << "p01,VIEW_A,c1,0,p01/VIEW_A/c1/frame_0.png\n";
    }
    const DatasetIndex idx = load_index(tmp.root.string());
    REQUIRE(idx.clips.size() == 1);
    CHECK(fs::exists(idx.clips[0].frame_paths[0]));
}

TEST_CASE("duplicate patient/clip pairs across viewpoints are rejected") {
    TmpDir tmp("dup");
    const fs::path f1 = tmp.root / "a.png";
    write_frame(f1, 0.5f);
    const fs::path mpath = tmp.root / "m.csv";
    {
        std::ofstream os(mpath);
        os << "patient_id,viewpoint,clip_id,frame_index,path\n";
        os << "p01,VIEW_A,clipX,0," << f1.string() << "\n";
        os << "p01,VIEW_B,clipX,0," << f1.string() << "\n";
    }
    CHECK_THROWS_AS(load_index(mpath.string()), StateError);
}

TEST_CASE("unknown viewpoints fail with the valid label list") {
    TmpDir tmp("badlabel");
    build_tree(tmp.root);
    try {
        load_index(tmp.root.string(), {"VIEW_A"});
        FAIL("expected StateError");
    } catch (const StateError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("VIEW_B") != std::string::npos);
        CHECK(msg.find("valid labels") != std::string::npos);
    }
}

TEST_CASE("empty clip directories are skipped, not fatal") {
    TmpDir tmp("emptyclip");
    build_tree(tmp.root);
    fs::create_directories(tmp.root / "p04" / "VIEW_A" / "hollow");
    const DatasetIndex idx = load_index(tmp.root.string());
    CHECK(idx.clips.size() == 4);
    for (const auto& c : idx.clips) CHECK(c.clip_id != "hollow");
}

TEST_CASE("missing roots and malformed manifests raise StateError") {
    CHECK_THROWS_AS(load_index("/nonexistent/nowhere"), StateError);

    TmpDir tmp("badmanifest");
    const fs::path mpath = tmp.root / "m.csv";
    {
        std::ofstream os(mpath);
        os << "wrong,header\n";
    }
    CHECK_THROWS_AS(load_index(mpath.string()), StateError);
}

TEST_CASE("viewpoint presets have the documented sizes and ordering") {
    CHECK(ned12_labels().size() == 12);
    CHECK(ned16_labels().size() == 16);
    CHECK(ned12_labels().front() == "APICAL_4C_LVRV");
    CHECK(ned12_labels().back() == "PSAX_AV");
    CHECK(ned16_labels().back() == "SUBCOSTAL_IVC");
    for (size_t i = 0; i < 12; ++i) CHECK(ned16_labels()[i] == ned12_labels()[i]);
}

TEST_CASE("spaced sampling covers the clip endpoints") {
    CHECK(sample_spaced(fake_clip("a", 10), 4) == std::vector<int64_t>{0, 3, 6, 9});
    CHECK(sample_spaced(fake_clip("b", 30), 4) == std::vector<int64_t>{0, 10, 19, 29});
    CHECK(sample_spaced(fake_clip("c", 4), 4) == std::vector<int64_t>{0, 1, 2, 3});
    CHECK(sample_spaced(fake_clip("d", 9), 1) == std::vector<int64_t>{0});

    try {
        sample_spaced(fake_clip("shorty", 3), 4);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("shorty") != std::string::npos);
    }
}

TEST_CASE("consecutive sampling returns a contiguous window inside the clip") {
    Rng rng(11);
    const ClipRecord clip = fake_clip("e", 10);
    std::set<int64_t> starts;
    for (int rep = 0; rep < 200; ++rep) {
        const auto idx = sample_consecutive(clip, 4, rng);
        REQUIRE(idx.size() == 4);
        CHECK(idx[0] >= 0);
        CHECK(idx[3] < 10);
        for (int i = 1; i < 4; ++i) CHECK(idx[i] == idx[i - 1] + 1);
        starts.insert(idx[0]);
    }
    CHECK(starts.size() > 3);  // the start really is randomized

    const auto tight = sample_consecutive(fake_clip("f", 4), 4, rng);
    CHECK(tight == std::vector<int64_t>{0, 1, 2, 3});

    CHECK_THROWS_AS(sample_consecutive(fake_clip("g", 2), 4, rng), ConfigError);
}

TEST_CASE("sampling mode names round-trip") {
    CHECK(sampling_mode_name(SamplingMode::consecutive) == "consecutive");
    CHECK(sampling_mode_name(SamplingMode::spaced) == "spaced");
    CHECK(sampling_mode_from_name("spaced") == SamplingMode::spaced);
    CHECK_THROWS_AS(sampling_mode_from_name("random"), ConfigError);
}

TEST_CASE("augmentation applies one transform to every frame") {
    FrameSequence seq;
    seq.label = 3;
    Tensor base({8, 8});
    Rng noise(7);
    for (int64_t i = 0; i < base.numel(); ++i) base.ptr()[i] = static_cast<float>(noise.uniform());
    seq.frames = {base, base, base};

    AugmentSpec spec;
    spec.rotation_max_deg = 15.0;
    spec.scale_min = 0.9;
    spec.scale_max = 1.1;
    spec.shift_max = 2.0;
    spec.hflip_prob = 0.5;

    Rng rng(42);
    const FrameSequence out = augment_sequence(seq, spec, rng);
    REQUIRE(out.frames.size() == 3);
    CHECK(out.label == 3);
    // identical inputs + one shared parameter draw => identical outputs
    for (int f = 1; f < 3; ++f)
        for (int64_t i = 0; i < base.numel(); ++i)
            CHECK(out.frames[static_cast<size_t>(f)].ptr()[i] == out.frames[0].ptr()[i]);
    // and the transform actually did something
    bool moved = false;
    for (int64_t i = 0; i < base.numel(); ++i)
        if (out.frames[0].ptr()[i] != base.ptr()[i]) moved = true;
    CHECK(moved);

    Rng rng2(42);
    const FrameSequence rerun = augment_sequence(seq, spec, rng2);
    for (int64_t i = 0; i < base.numel(); ++i) CHECK(rerun.frames[0].ptr()[i] == out.frames[0].ptr()[i]);
}

TEST_CASE("contrast normalization is sequence-wide") {
    FrameSequence seq;
    seq.frames = {Tensor::full({4, 4}, 0.2f), Tensor::full({4, 4}, 0.6f)};
    AugmentSpec spec;
    spec.auto_contrast = true;

    Rng rng(1);
    const FrameSequence out = augment_sequence(seq, spec, rng);
    // min over the whole sequence -> 0, max -> 1; per-frame remap would
    // flatten both frames to a constant instead
    for (int64_t i = 0; i < 16; ++i) {
        CHECK(out.frames[0].ptr()[i] == doctest::Approx(0.0));
        CHECK(out.frames[1].ptr()[i] == doctest::Approx(1.0));
    }
}

TEST_CASE("patient folds partition the patients") {
    const DatasetIndex idx = fake_index({"a", "b", "c", "d", "e", "f", "g"});
    const FoldPlan plan = patient_kfold(idx, 3, 99);
    REQUIRE(plan.k == 3);
    std::set<std::string> seen;
    for (const auto& fold : plan.test_patients) {
        CHECK(!fold.empty());
        for (const auto& p : fold) CHECK(seen.insert(p).second);  // disjoint
    }
    CHECK(seen.size() == 7);  // exhaustive
    // sizes differ by at most one
    for (const auto& fold : plan.test_patients) {
        CHECK(fold.size() >= 2);
        CHECK(fold.size() <= 3);
    }

    const FoldPlan again = patient_kfold(idx, 3, 99);
    CHECK(again.test_patients == plan.test_patients);

    CHECK_THROWS_AS(patient_kfold(fake_index({"a", "b"}), 3, 0), ConfigError);
    CHECK_THROWS_AS(patient_kfold(idx, 0, 0), ConfigError);
}

TEST_CASE("fold_clips separates train and test by patient") {
    DatasetIndex idx = fake_index({"a", "a", "b", "b", "c", "c"});
    const FoldPlan plan = patient_kfold(idx, 3, 5);
    for (int64_t f = 0; f < 3; ++f) {
        const auto test = fold_clips(idx, plan, f, true);
        const auto train = fold_clips(idx, plan, f, false);
        CHECK(test.size() + train.size() == idx.clips.size());
        std::set<std::string> test_pats;
        for (int64_t i : test) test_pats.insert(idx.clips[static_cast<size_t>(i)].patient_id);
        for (int64_t i : train) CHECK(test_pats.count(idx.clips[static_cast<size_t>(i)].patient_id) == 0);
    }
    CHECK_THROWS_AS(fold_clips(idx, plan, 3, true), ConfigError);
    CHECK_THROWS_AS(fold_clips(idx, plan, -1, true), ConfigError);
}

TEST_CASE("holdout reserves a patient-wise test slice") {
    const DatasetIndex idx = fake_index({"a", "b", "c", "d", "e", "f", "g", "h", "i", "j"});
    const FoldPlan p10 = holdout_plan(idx, 0.1, 7);
    REQUIRE(p10.k == 1);
    CHECK(p10.test_patients[0].size() == 1);
    const FoldPlan p50 = holdout_plan(idx, 0.5, 7);
    CHECK(p50.test_patients[0].size() == 5);
    // even a tiny fraction keeps at least one test patient
    const FoldPlan tiny = holdout_plan(idx, 0.001, 7);
    CHECK(tiny.test_patients[0].size() == 1);
    // and a huge one leaves at least one for training
    const FoldPlan big = holdout_plan(idx, 0.999, 7);
    CHECK(big.test_patients[0].size() == 9);

    CHECK_THROWS_AS(holdout_plan(idx, 0.0, 7), ConfigError);
    CHECK_THROWS_AS(holdout_plan(idx, 1.0, 7), ConfigError);

    const FoldPlan rerun = holdout_plan(idx, 0.5, 7);
    CHECK(rerun.test_patients == p50.test_patients);
}
