#include "tfw/config.h"

#include <fstream>
#include <initializer_list>
#include <set>

#include "tfw/dataset.h"

namespace tfw {

namespace {

using nlohmann::json;

// strict schema: every present key must be in the allowed list
void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: '" + where + "' must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, _] : j.items())
        if (!ok.count(key)) throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value for '" + std::string(key) + "': " + e.what());
    }
}

std::string require_string(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError("config: missing required key '" + std::string(key) + "' in " + where);
    if (!j.at(key).is_string()) throw ConfigError("config: '" + std::string(key) + "' must be a string");
    return j.at(key).get<std::string>();
}

AugmentSpec augment_from_json(const json& j) {
    check_keys(j,
               {"rotation_max_deg", "auto_contrast", "scale_min", "scale_max", "shift_max", "hflip_prob",
                "vflip_prob"},
               "train.augment");
    AugmentSpec a;
    a.rotation_max_deg = get_or(j, "rotation_max_deg", a.rotation_max_deg);
    a.auto_contrast = get_or(j, "auto_contrast", a.auto_contrast);
    a.scale_min = get_or(j, "scale_min", a.scale_min);
    a.scale_max = get_or(j, "scale_max", a.scale_max);
    a.shift_max = get_or(j, "shift_max", a.shift_max);
    a.hflip_prob = get_or(j, "hflip_prob", a.hflip_prob);
    a.vflip_prob = get_or(j, "vflip_prob", a.vflip_prob);
    return a;
}

TrainConfig train_from_json(const json& j, const std::string& where) {
    check_keys(j,
               {"optimizer", "max_lr", "momentum", "beta2", "adam_eps", "l2", "batch_size", "epochs",
                "cyclic", "sampling", "per_step_loss", "finetune_backbone", "all_windows", "augment"},
               where);
    TrainConfig c;
    const std::string opt = get_or<std::string>(j, "optimizer", "adam");
    if (opt == "adam")
        c.optimizer = OptimizerKind::adam;
    else if (opt == "sgd")
        c.optimizer = OptimizerKind::sgd;
    else
        throw ConfigError("config: unknown optimizer '" + opt + "' (expected adam or sgd)");
    c.max_lr = get_or(j, "max_lr", c.max_lr);
    c.momentum = get_or(j, "momentum", c.momentum);
    c.beta2 = get_or(j, "beta2", c.beta2);
    c.adam_eps = get_or(j, "adam_eps", c.adam_eps);
    c.l2 = get_or(j, "l2", c.l2);
    c.batch_size = get_or(j, "batch_size", c.batch_size);
    c.epochs = get_or(j, "epochs", c.epochs);
    c.cyclic = get_or(j, "cyclic", c.cyclic);
    if (j.contains("sampling"))
        c.sampling = sampling_mode_from_name(j.at("sampling").get<std::string>());
    c.per_step_loss = get_or(j, "per_step_loss", c.per_step_loss);
    c.finetune_backbone = get_or(j, "finetune_backbone", c.finetune_backbone);
    c.all_windows = get_or(j, "all_windows", c.all_windows);
    if (j.contains("augment")) c.augment = augment_from_json(j.at("augment"));
    if (c.max_lr <= 0.0) throw ConfigError("config: max_lr must be positive");
    if (c.batch_size < 1 || c.epochs < 1)
        throw ConfigError("config: batch_size and epochs must be >= 1");
    return c;
}

BackboneSpec backbone_from_json(const json& j) {
    check_keys(j, {"input_size", "feature_dim", "stages"}, "model.backbone");
    BackboneSpec b = desk_backbone();
    b.input_size = get_or(j, "input_size", b.input_size);
    b.feature_dim = get_or(j, "feature_dim", b.feature_dim);
    if (j.contains("stages")) {
        if (!j.at("stages").is_array()) throw ConfigError("config: model.backbone.stages must be an array");
        b.stages.clear();
        for (const auto& sj : j.at("stages")) {
            check_keys(sj, {"channels", "blocks", "downsample"}, "model.backbone.stages[]");
            Stage s;
            s.channels = get_or(sj, "channels", s.channels);
            s.blocks = get_or(sj, "blocks", s.blocks);
            s.downsample = get_or(sj, "downsample", s.downsample);
            b.stages.push_back(s);
        }
    }
    return b;
}

}  // namespace

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    check_keys(j, {"head", "n_classes", "n_frames", "dropout", "hidden", "weave_k", "token_dim", "n_heads",
                   "fc_dim", "backbone"},
               "model");
    ModelSpec spec;
    spec.head.kind = head_kind_from_name(require_string(j, "head", "model"));
    spec.head.n_classes = get_or<int64_t>(j, "n_classes", 0);
    spec.n_frames = get_or(j, "n_frames", spec.n_frames);
    spec.head.dropout = get_or(j, "dropout", spec.head.dropout);
    spec.head.hidden = get_or(j, "hidden", spec.head.hidden);
    spec.head.weave_k = get_or(j, "weave_k", spec.head.weave_k);
    spec.head.token_dim = get_or(j, "token_dim", spec.head.token_dim);
    spec.head.n_heads = get_or(j, "n_heads", spec.head.n_heads);
    spec.head.fc_dim = get_or(j, "fc_dim", spec.head.fc_dim);
    if (j.contains("backbone")) spec.backbone = backbone_from_json(j.at("backbone"));
    return spec;
}

nlohmann::json model_spec_to_json(const ModelSpec& spec) {
    json j;
    j["head"] = head_kind_name(spec.head.kind);
    j["n_classes"] = spec.head.n_classes;
    j["n_frames"] = spec.n_frames;
    j["dropout"] = spec.head.dropout;
    j["hidden"] = spec.head.hidden;
    j["weave_k"] = spec.head.weave_k;
    j["token_dim"] = spec.head.token_dim;
    j["n_heads"] = spec.head.n_heads;
    j["fc_dim"] = spec.head.fc_dim;
    json bb;
    bb["input_size"] = spec.backbone.input_size;
    bb["feature_dim"] = spec.backbone.feature_dim;
    bb["stages"] = json::array();
    for (const Stage& s : spec.backbone.stages)
        bb["stages"].push_back({{"channels", s.channels}, {"blocks", s.blocks}, {"downsample", s.downsample}});
    j["backbone"] = bb;
    return j;
}

SyntheticSpec synth_spec_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"n_classes", "n_patients", "clips_per_patient", "frames_per_clip", "image_size",
                "ambiguous_pairs", "noise_level", "seed"},
               "synth spec");
    SyntheticSpec s;
    s.n_classes = get_or(j, "n_classes", s.n_classes);
    s.n_patients = get_or(j, "n_patients", s.n_patients);
    s.clips_per_patient = get_or(j, "clips_per_patient", s.clips_per_patient);
    s.frames_per_clip = get_or(j, "frames_per_clip", s.frames_per_clip);
    s.image_size = get_or(j, "image_size", s.image_size);
    s.noise_level = get_or(j, "noise_level", s.noise_level);
    s.seed = get_or(j, "seed", s.seed);
    if (j.contains("ambiguous_pairs")) {
        if (!j.at("ambiguous_pairs").is_array())
            throw ConfigError("config: ambiguous_pairs must be an array of [a, b] pairs");
        s.ambiguous_pairs.clear();
        for (const auto& pj : j.at("ambiguous_pairs")) {
            if (!pj.is_array() || pj.size() != 2)
                throw ConfigError("config: each ambiguous pair must be a 2-element array");
            s.ambiguous_pairs.emplace_back(pj.at(0).get<int64_t>(), pj.at(1).get<int64_t>());
        }
    }
    return s;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    check_keys(j,
               {"dataset", "out", "params", "labels", "seed", "folds", "holdout_fraction", "model", "train",
                "pretrain"},
               "run config");
    RunConfig rc;
    rc.dataset = get_or<std::string>(j, "dataset", "");
    rc.out = get_or<std::string>(j, "out", "");
    rc.params = get_or<std::string>(j, "params", "");
    rc.seed = get_or<uint64_t>(j, "seed", rc.seed);
    rc.folds = get_or(j, "folds", rc.folds);
    rc.holdout_fraction = get_or(j, "holdout_fraction", rc.holdout_fraction);

    if (!j.contains("labels")) throw ConfigError("config: missing required key 'labels'");
    const json& lj = j.at("labels");
    check_keys(lj, {"preset", "names"}, "labels");
    rc.label_preset = require_string(lj, "preset", "labels");
    if (rc.label_preset == "ned12") {
        rc.labels = ned12_labels();
    } else if (rc.label_preset == "ned16") {
        rc.labels = ned16_labels();
    } else if (rc.label_preset == "custom") {
        if (!lj.contains("names") || !lj.at("names").is_array() || lj.at("names").empty())
            throw ConfigError("config: labels.preset 'custom' requires a non-empty labels.names array");
        for (const auto& n : lj.at("names")) rc.labels.push_back(n.get<std::string>());
    } else {
        throw ConfigError("config: unknown labels.preset '" + rc.label_preset +
                          "' (expected ned12, ned16, or custom)");
    }
    if (lj.contains("names") && rc.label_preset != "custom")
        throw ConfigError("config: labels.names only applies to the custom preset");

    if (!j.contains("model")) throw ConfigError("config: missing required key 'model'");
    rc.model = model_spec_from_json(j.at("model"));
    if (rc.model.head.n_classes == 0) rc.model.head.n_classes = static_cast<int64_t>(rc.labels.size());
    if (rc.model.head.n_classes != static_cast<int64_t>(rc.labels.size()))
        throw ConfigError("config: model.n_classes " + std::to_string(rc.model.head.n_classes) +
                          " does not match the " + std::to_string(rc.labels.size()) + "-label set");

    if (j.contains("train")) rc.train = train_from_json(j.at("train"), "train");
    if (j.contains("pretrain")) {
        const json& pj = j.at("pretrain");
        check_keys(pj, {"enabled", "dropout", "train"}, "pretrain");
        rc.pretrain.enabled = get_or(pj, "enabled", rc.pretrain.enabled);
        rc.pretrain.dropout = get_or(pj, "dropout", rc.pretrain.dropout);
        if (pj.contains("train")) rc.pretrain.cfg = train_from_json(pj.at("train"), "pretrain.train");
    }
    if (rc.folds < 1) throw ConfigError("config: folds must be >= 1");
    return rc;
}

uint64_t config_hash(const nlohmann::json& j) {
    const std::string canon = j.dump();  // object keys are stored sorted
    uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : canon) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace tfw
