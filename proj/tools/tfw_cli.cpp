// tfw — dataset synthesis, training, evaluation, cross-validation, and
// weave/gradient inspection from JSON run configs.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error. Diagnostics go to
// stderr; machine-readable results go to files under --out (or stdout for
// the inspection subcommands).
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tfw/config.h"
#include "tfw/dataset.h"
#include "tfw/layer_checks.h"
#include "tfw/metrics.h"
#include "tfw/models.h"
#include "tfw/optim.h"
#include "tfw/synth.h"
#include "tfw/train.h"
#include "tfw/version.h"
#include "tfw/weave.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v, int prec) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", prec, v);
    return buf;
}

std::string hex64(uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw tfw::StateError("cannot write " + path.string());
    out << content;
    if (!out) throw tfw::StateError("write failed: " + path.string());
}

void write_run_meta(const fs::path& out_dir, const std::string& command, uint64_t config_hash,
                    uint64_t seed) {
    json meta;
    meta["command"] = command;
    meta["config_hash"] = hex64(config_hash);
    meta["seed"] = seed;
    meta["versions"] = {{"tfw", tfw::kVersion},
                        {"params_format", tfw::kParamsFormatVersion},
                        {"config_schema", tfw::kConfigSchemaVersion}};
    write_text(out_dir / "run_meta.json", meta.dump(2) + "\n");
}

std::string history_csv(const tfw::TrainResult& result) {
    std::string s = "epoch,mean_loss,train_accuracy\n";
    for (size_t e = 0; e < result.history.size(); ++e)
        s += std::to_string(e) + "," + fmt(result.history[e].mean_loss, 6) + "," +
             fmt(result.history[e].train_accuracy, 4) + "\n";
    return s;
}

std::string metrics_row(const tfw::MetricsReport& m) {
    return fmt(m.accuracy, 4) + "," + fmt(m.precision, 4) + "," + fmt(m.recall, 4) + "," + fmt(m.f1, 4);
}

std::string confusion_csv(const tfw::ConfusionMatrix& cm, const std::vector<std::string>& labels) {
    std::string s;
    for (const auto& name : labels) s += "," + name;
    s += "\n";
    for (int64_t t = 0; t < cm.C; ++t) {
        s += labels[static_cast<size_t>(t)];
        for (int64_t p = 0; p < cm.C; ++p) s += "," + std::to_string(cm.at(t, p));
        s += "\n";
    }
    return s;
}

json metrics_json(const tfw::MetricsReport& m) {
    json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision;
    j["recall"] = m.recall;
    j["f1"] = m.f1;
    j["n_samples"] = m.n_samples;
    return j;
}

// config file + flag overrides -> effective config document (hashed as-is)
json effective_config(const std::string& config_path, const std::string& seed_flag,
                      const std::string& preset_flag, const std::string& out_flag) {
    json j = tfw::load_json_file(config_path);
    if (!j.is_object()) throw tfw::ConfigError("config root must be a JSON object");
    if (!seed_flag.empty()) j["seed"] = static_cast<uint64_t>(std::stoull(seed_flag));
    if (!preset_flag.empty()) j["labels"] = {{"preset", preset_flag}};
    if (!out_flag.empty()) j["out"] = out_flag;
    return j;
}

fs::path resolve_out_dir(const tfw::RunConfig& rc) {
    if (rc.out.empty()) throw tfw::ConfigError("no output directory: pass --out or set \"out\" in the config");
    fs::create_directories(rc.out);
    return fs::path(rc.out);
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, const std::string& seed_flag) {
    json j = tfw::load_json_file(spec_path);
    if (!seed_flag.empty()) j["seed"] = static_cast<uint64_t>(std::stoull(seed_flag));
    const tfw::SyntheticSpec spec = tfw::synth_spec_from_json(j);
    fs::create_directories(out_dir);
    const tfw::DatasetIndex index = tfw::gen_synthetic(spec, out_dir);
    write_run_meta(out_dir, "synth", tfw::config_hash(j), spec.seed);
    std::cerr << "synth: " << index.clips.size() << " clips, " << index.label_set.size() << " classes, "
              << index.patients().size() << " patients -> " << out_dir << "\n";
    return 0;
}

int cmd_train(const json& cfg_json, const std::string& command) {
    const tfw::RunConfig rc = tfw::run_config_from_json(cfg_json);
    if (rc.dataset.empty()) throw tfw::ConfigError("config: 'dataset' is required for " + command);
    const fs::path out = resolve_out_dir(rc);
    const tfw::DatasetIndex index = tfw::load_index(rc.dataset, rc.labels);

    std::vector<int64_t> train_ids, test_ids;
    if (rc.holdout_fraction > 0.0) {
        const tfw::FoldPlan plan = tfw::holdout_plan(index, rc.holdout_fraction, rc.seed);
        train_ids = tfw::fold_clips(index, plan, 0, false);
        test_ids = tfw::fold_clips(index, plan, 0, true);
    } else {
        for (size_t i = 0; i < index.clips.size(); ++i) train_ids.push_back(static_cast<int64_t>(i));
    }
    std::cerr << command << ": " << train_ids.size() << " train clips, " << test_ids.size()
              << " held-out clips\n";

    tfw::TrainResult history;
    tfw::Model model =
        tfw::train_pipeline(rc.model, rc.train, rc.pretrain, index, train_ids, rc.seed, &history);

    tfw::save_params(model.params, (out / "params.bin").string());
    write_text(out / "model.json", tfw::model_spec_to_json(model.spec).dump(2) + "\n");
    write_text(out / "history.csv", history_csv(history));
    write_run_meta(out, command, tfw::config_hash(cfg_json), rc.seed);
    if (!history.history.empty())
        std::cerr << "final epoch: loss " << fmt(history.history.back().mean_loss, 4) << ", train acc "
                  << fmt(history.history.back().train_accuracy, 2) << "%\n";

    if (!test_ids.empty()) {
        const tfw::MetricsReport m =
            tfw::evaluate(model, index, test_ids, rc.train.sampling, tfw::seed_for(rc.seed, 0xE7A1, 0));
        write_text(out / "metrics.json", metrics_json(m).dump(2) + "\n");
        write_text(out / "confusion_holdout.csv", confusion_csv(m.confusion, rc.labels));
        std::cerr << "holdout: accuracy " << fmt(m.accuracy, 2) << "%, weighted F1 " << fmt(m.f1, 2)
                  << "%\n";
    }
    return 0;
}

int cmd_eval(const json& cfg_json) {
    const tfw::RunConfig rc = tfw::run_config_from_json(cfg_json);
    if (rc.dataset.empty()) throw tfw::ConfigError("config: 'dataset' is required for eval");
    if (rc.params.empty()) throw tfw::ConfigError("config: 'params' (checkpoint path) is required for eval");
    const fs::path out = resolve_out_dir(rc);
    const tfw::DatasetIndex index = tfw::load_index(rc.dataset, rc.labels);

    tfw::Rng init(tfw::seed_for(rc.seed, 1, 0));
    tfw::Model model = tfw::build_model(rc.model, init);
    tfw::load_params(model.params, rc.params);

    std::vector<int64_t> ids;
    for (size_t i = 0; i < index.clips.size(); ++i) ids.push_back(static_cast<int64_t>(i));
    const tfw::MetricsReport m =
        tfw::evaluate(model, index, ids, rc.train.sampling, tfw::seed_for(rc.seed, 0xE7A1, 0));

    write_text(out / "metrics.json", metrics_json(m).dump(2) + "\n");
    write_text(out / "confusion_eval.csv", confusion_csv(m.confusion, rc.labels));
    write_run_meta(out, "eval", tfw::config_hash(cfg_json), rc.seed);
    std::cerr << "eval: " << ids.size() << " clips, accuracy " << fmt(m.accuracy, 2) << "%, weighted F1 "
              << fmt(m.f1, 2) << "%\n";
    return 0;
}

int cmd_crossval(const json& cfg_json) {
    const tfw::RunConfig rc = tfw::run_config_from_json(cfg_json);
    if (rc.dataset.empty()) throw tfw::ConfigError("config: 'dataset' is required for crossval");
    const fs::path out = resolve_out_dir(rc);
    const tfw::DatasetIndex index = tfw::load_index(rc.dataset, rc.labels);

    std::cerr << "crossval: " << rc.folds << " patient-wise folds over " << index.clips.size()
              << " clips\n";
    const tfw::CrossValReport report =
        tfw::cross_validate(rc.model, rc.train, rc.pretrain, index, rc.folds, rc.seed);

    std::string csv = "fold,accuracy,precision,recall,f1\n";
    for (size_t f = 0; f < report.folds.size(); ++f) {
        csv += std::to_string(f) + "," + metrics_row(report.folds[f]) + "\n";
        write_text(out / ("confusion_" + std::to_string(f) + ".csv"),
                   confusion_csv(report.folds[f].confusion, rc.labels));
    }
    csv += "aggregate," + fmt(report.mean_accuracy, 4) + "," + fmt(report.mean_precision, 4) + "," +
           fmt(report.mean_recall, 4) + "," + fmt(report.mean_f1, 4) + "\n";
    write_text(out / "folds.csv", csv);
    write_run_meta(out, "crossval", tfw::config_hash(cfg_json), rc.seed);
    std::cerr << "aggregate: accuracy " << fmt(report.mean_accuracy, 2) << "% (+-"
              << fmt(report.std_accuracy, 2) << "), weighted F1 " << fmt(report.mean_f1, 2) << "% (+-"
              << fmt(report.std_f1, 2) << ")\n";
    return 0;
}

int cmd_weave_inspect(int64_t n, int64_t d, int64_t k) {
    tfw::weave_check(n, d, k);  // divisibility / positivity
    // run the real transform over position codes and decode the sources
    tfw::Tensor codes({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) codes.ptr()[i * d + j] = static_cast<float>(i * d + j);
    const tfw::Tensor wov = tfw::weave(codes, k);
    const int64_t row_len = n * d / k;
    for (int64_t r = 0; r < k; ++r) {
        std::string line = "W_" + std::to_string(r + 1) + ":";
        for (int64_t c = 0; c < row_len; ++c) {
            const int64_t code = static_cast<int64_t>(wov.ptr()[r * row_len + c]);
            line += (c == 0 ? " " : ",");
            line += "(f" + std::to_string(code / d + 1) + "," + std::to_string(code % d) + ")";
        }
        std::cout << line << "\n";
    }
    return 0;
}

int cmd_gradcheck(int seeds, double tol) {
    const auto& checks = tfw::standard_layer_checks();
    const std::vector<double> worst = tfw::run_layer_checks(seeds, 1e-5);
    bool ok = true;
    for (size_t i = 0; i < checks.size(); ++i) {
        const bool pass = worst[i] < tol;
        ok = ok && pass;
        std::printf("%-20s max_rel_err %.3e  %s\n", checks[i].name.c_str(), worst[i],
                    pass ? "PASS" : "FAIL");
    }
    if (!ok) {
        std::cerr << "gradcheck: at least one layer exceeded tolerance " << tol << "\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"temporal feature weaving pipeline"};
    app.require_subcommand(1);

    std::string config_path, spec_path, out_dir, seed_flag, preset_flag;
    int64_t wn = 4, wd = 8, wk = 4;
    int gc_seeds = 5;
    double gc_tol = 1e-4;

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--spec", spec_path, "synthetic spec JSON")->required();
    synth->add_option("--out", out_dir, "output dataset directory")->required();
    synth->add_option("--seed", seed_flag, "override the spec seed");

    const auto add_run_flags = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run config JSON")->required();
        cmd->add_option("--out", out_dir, "output directory (overrides config)");
        cmd->add_option("--seed", seed_flag, "override the config seed");
        cmd->add_option("--preset", preset_flag, "label preset override")
            ->check(CLI::IsMember({"ned12", "ned16"}));
    };
    CLI::App* train = app.add_subcommand("train", "train one model");
    add_run_flags(train);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    add_run_flags(eval);
    CLI::App* crossval = app.add_subcommand("crossval", "patient-wise cross-validation");
    add_run_flags(crossval);

    CLI::App* weave = app.add_subcommand("weave-inspect", "print the weave permutation table");
    weave->add_option("--n", wn, "frames")->required();
    weave->add_option("--d", wd, "feature dim")->required();
    weave->add_option("--k", wk, "chunks")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference layer checks");
    gradcheck->add_option("--seeds", gc_seeds, "seeds per layer");
    gradcheck->add_option("--tol", gc_tol, "max relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(spec_path, out_dir, seed_flag);
        if (weave->parsed()) return cmd_weave_inspect(wn, wd, wk);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seeds, gc_tol);
        const json cfg = effective_config(config_path, seed_flag, preset_flag, out_dir);
        if (train->parsed()) return cmd_train(cfg, "train");
        if (eval->parsed()) return cmd_eval(cfg);
        if (crossval->parsed()) return cmd_crossval(cfg);
        std::cerr << "no subcommand\n";
        return 1;
    } catch (const tfw::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
