#include "tfw/synth.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "tfw/png_io.h"
#include "tfw/rng.h"

namespace fs = std::filesystem;

namespace tfw {

namespace {

struct Ellipse {
    double cx, cy, ax, ay, rot, inten;
};

struct ClassDef {
    std::vector<Ellipse> structs;  // chamber + blobs, static
    Ellipse valve;                 // axes/intensity scaled by the motion program
    double freq;
};

// soft-edged ellipse splat: logistic falloff on the elliptical quadratic form

void add_ellipse(Tensor& img, const Ellipse& e, double ox, double oy) {
    const int64_t S = img.dim(0);
    const double c = std::cos(e.rot), s = std::sin(e.rot);
    for (int64_t y = 0; y < S; ++y) {
        for (int64_t x = 0; x < S; ++x) {
            const double dx = static_cast<double>(x) - (e.cx + ox);
            const double dy = static_cast<double>(y) - (e.cy + oy);
            const double xr = dx * c + dy * s;
            const double yr = -dx * s + dy * c;
            const double v = (xr / e.ax) * (xr / e.ax) + (yr / e.ay) * (yr / e.ay);
            const double arg = std::min((v - 1.0) / 0.25, 30.0);
            img.ptr()[y * S + x] += static_cast<float>(e.inten / (1.0 + std::exp(arg)));
        }
    }
}

std::vector<ClassDef> make_class_defs(const SyntheticSpec& spec) {
    const double sc = static_cast<double>(spec.image_size) / 32.0;  // geometry calibrated at 32px
    std::vector<ClassDef> defs(static_cast<size_t>(spec.n_classes));
    for (int64_t c = 0; c < spec.n_classes; ++c) {
        Rng r(seed_for(spec.seed, 0, static_cast<uint64_t>(c), 0));
        ClassDef d;
        // one large dim chamber
        d.structs.push_back({r.uniform(10, 22) * sc, r.uniform(10, 22) * sc, r.uniform(6, 11) * sc,
                             r.uniform(6, 11) * sc, r.uniform(0.0, std::numbers::pi), r.uniform(0.25, 0.4)});
        // two small bright blobs
        for (int b = 0; b < 2; ++b)
            d.structs.push_back({r.uniform(4, 28) * sc, r.uniform(4, 28) * sc, r.uniform(1.5, 3.5) * sc,
                                 r.uniform(1.5, 3.5) * sc, r.uniform(0.0, std::numbers::pi),
                                 r.uniform(0.45, 0.7)});
        d.valve = {r.uniform(8, 24) * sc, r.uniform(8, 24) * sc, 6.0 * sc, 3.0 * sc,
                   r.uniform(0.0, std::numbers::pi), 1.0};
        d.freq = r.uniform(1.0, 2.0);
        defs[static_cast<size_t>(c)] = std::move(d);
    }
    // ambiguous pairs share appearance entirely; the two fixed frequencies
    // are far apart so the motion signature separates them cleanly
    for (const auto& [a, b] : spec.ambiguous_pairs) {
        defs[static_cast<size_t>(b)] = defs[static_cast<size_t>(a)];
        defs[static_cast<size_t>(a)].freq = 0.7;
        defs[static_cast<size_t>(b)].freq = 2.8;
    }
    return defs;
}

void validate(const SyntheticSpec& spec) {
    if (spec.n_classes < 1 || spec.n_patients < 1 || spec.clips_per_patient < 1)
        throw ConfigError("synthetic spec: counts must be positive");
    if (spec.frames_per_clip < 8)
        throw ConfigError("synthetic spec: frames_per_clip must be >= 8, got " +
                          std::to_string(spec.frames_per_clip));
    if (spec.image_size < 16) throw ConfigError("synthetic spec: image_size must be >= 16");
    if (spec.noise_level < 0.0) throw ConfigError("synthetic spec: noise_level must be >= 0");
    std::set<int64_t> used;
    for (const auto& [a, b] : spec.ambiguous_pairs) {
        if (a < 0 || a >= spec.n_classes || b < 0 || b >= spec.n_classes || a == b)
            throw ConfigError("synthetic spec: bad ambiguous pair (" + std::to_string(a) + "," +
                              std::to_string(b) + ")");
        if (!used.insert(a).second || !used.insert(b).second)
            throw ConfigError("synthetic spec: ambiguous pairs must be disjoint");
    }
}

std::string zpad(int64_t v, int width) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%0*lld", width, static_cast<long long>(v));
    return buf;
}

}  // namespace

DatasetIndex gen_synthetic(const SyntheticSpec& spec, const std::string& out_root) {
    validate(spec);
    const auto defs = make_class_defs(spec);
    const int64_t S = spec.image_size;
    const double jitter_sc = static_cast<double>(S) / 32.0;

    fs::create_directories(out_root);
    DatasetIndex index;
    for (int64_t c = 0; c < spec.n_classes; ++c) index.label_set.push_back("CLASS_" + zpad(c, 2));

    std::ofstream manifest(fs::path(out_root) / "manifest.csv");
    if (!manifest) throw StateError("cannot write manifest under " + out_root);
    manifest << "patient_id,viewpoint,clip_id,frame_index,path\n";

    for (int64_t p = 0; p < spec.n_patients; ++p) {
        const std::string patient = "patient_" + zpad(p, 3);
        Rng prng(seed_for(spec.seed, 1, static_cast<uint64_t>(p), 0));
        const double gain = 1.0 + prng.normal(0.0, 0.06);
        const double ox = prng.uniform(-1.5, 1.5) * jitter_sc;
        const double oy = prng.uniform(-1.5, 1.5) * jitter_sc;
        int64_t clip_counter = 0;
        for (int64_t c = 0; c < spec.n_classes; ++c) {
            const ClassDef& d = defs[static_cast<size_t>(c)];
            for (int64_t k = 0; k < spec.clips_per_patient; ++k, ++clip_counter) {
                const std::string clip = "clip_" + zpad(clip_counter, 3);
                const fs::path dir = fs::path(out_root) / patient / index.label_set[static_cast<size_t>(c)] / clip;
                fs::create_directories(dir);
                Rng crng(seed_for(spec.seed, 2, static_cast<uint64_t>(p), static_cast<uint64_t>(clip_counter)));
                const double phase = crng.uniform(0.0, 2.0 * std::numbers::pi);
                ClipRecord rec;
                rec.patient_id = patient;
                rec.viewpoint = index.label_set[static_cast<size_t>(c)];
                rec.clip_id = clip;
                rec.label = c;
                for (int64_t t = 0; t < spec.frames_per_clip; ++t) {
                    const double u = std::sin(phase + 2.0 * std::numbers::pi * d.freq *
                                                          static_cast<double>(t) /
                                                          static_cast<double>(spec.frames_per_clip));
                    Tensor img = Tensor::full({S, S}, 0.08f);
                    for (const auto& e : d.structs) add_ellipse(img, e, ox, oy);
                    // valve openness drives both its size and its brightness
                    const double open = 0.25 + 0.75 * (u + 1.0) / 2.0;
                    Ellipse v = d.valve;
                    v.ax *= open;
                    v.ay *= open;
                    v.inten *= open;
                    add_ellipse(img, v, ox, oy);
                    for (int64_t i = 0; i < img.numel(); ++i) {
                        double px = std::clamp(static_cast<double>(img.ptr()[i]) * gain, 0.0, 1.0);
                        if (spec.noise_level > 0.0) px += crng.normal(0.0, spec.noise_level);
                        px = std::clamp(px, 0.0, 1.0);
                        img.ptr()[i] = static_cast<float>(std::round(px * 255.0) / 255.0);
                    }
                    const std::string fname = "frame_" + zpad(t, 4) + ".png";
                    const fs::path fpath = dir / fname;
                    write_png_gray(fpath.string(), img);
                    rec.frame_paths.push_back(fpath.string());
                    manifest << patient << ',' << rec.viewpoint << ',' << clip << ',' << t << ','
                             << fs::relative(fpath, out_root).string() << '\n';
                }
                index.clips.push_back(std::move(rec));
            }
        }
    }
    if (!manifest) throw StateError("manifest write failed under " + out_root);
    return index;
}

}  // namespace tfw
