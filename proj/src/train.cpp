#include "tfw/train.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <set>
#include <thread>

#include "tfw/png_io.h"
#include "tfw/weave.h"

namespace tfw {

int64_t worker_count() {
    int64_t n = static_cast<int64_t>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* env = std::getenv("TFW_THREADS")) {
        const int64_t cap = std::atoll(env);
        if (cap >= 1) n = std::min(n, cap);
    }
    return n;
}

namespace {

bool is_sequence(HeadKind k) {
    return k == HeadKind::gru || k == HeadKind::gru_tfw || k == HeadKind::attention;
}

bool augment_active(const AugmentSpec& a) {
    return a.rotation_max_deg > 0.0 || a.auto_contrast || a.scale_min != 1.0 || a.scale_max != 1.0 ||
           a.shift_max > 0.0 || a.hflip_prob > 0.0 || a.vflip_prob > 0.0;
}

// run fn(i, worker) for i in [0, n); worker ids are dense in [0, workers)
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
    const int64_t workers = std::min(worker_count(), n);
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i, 0);
        return;
    }
    std::atomic<int64_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int64_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i, w);
        });
    for (auto& t : pool) t.join();
}

std::vector<Tensor> load_clip_frames(const ClipRecord& clip) {
    std::vector<Tensor> frames;
    frames.reserve(clip.frame_paths.size());
    for (const auto& p : clip.frame_paths) frames.push_back(read_png_gray(p));
    return frames;
}

// all frames of the chosen clips, decoded once up front (indexed writes only)
std::vector<std::vector<Tensor>> load_all(const DatasetIndex& index, const std::vector<int64_t>& clip_ids) {
    std::vector<std::vector<Tensor>> out(clip_ids.size());
    parallel_for(static_cast<int64_t>(clip_ids.size()), [&](int64_t i, int64_t) {
        out[static_cast<size_t>(i)] =
            load_clip_frames(index.clips[static_cast<size_t>(clip_ids[static_cast<size_t>(i)])]);
    });
    return out;
}

// non-overlapping window starts: 0, n, 2n, ... while a full window fits
std::vector<int64_t> window_starts(int64_t L, int64_t n) {
    std::vector<int64_t> s;
    for (int64_t start = 0; start + n <= L; start += n) s.push_back(start);
    if (s.empty())
        throw ConfigError("clip of length " + std::to_string(L) + " cannot fit a window of " +
                          std::to_string(n));
    return s;
}

struct SampleRef {
    int64_t clip_pos;  // position within clip_ids
    int64_t start;     // fixed window start, or -1 to draw per epoch
};

// per-frame feature rows [L, D] with the backbone frozen
Tensor clip_features(Model& m, const std::vector<Tensor>& frames) {
    const int64_t L = static_cast<int64_t>(frames.size());
    const int64_t D = m.spec.backbone.feature_dim;
    Tensor feats({L, D});
    for (int64_t t = 0; t < L; ++t) {
        const Tensor f = backbone_features(m, frames[static_cast<size_t>(t)]);
        for (int64_t j = 0; j < D; ++j) feats.ptr()[t * D + j] = f.ptr()[j];
    }
    return feats;
}

Tensor feature_window(const Tensor& feats, int64_t start, int64_t n) {
    const int64_t D = feats.dim(1);
    Tensor w({n, D});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < D; ++j) w.ptr()[i * D + j] = feats.ptr()[(start + i) * D + j];
    return w;
}

// loss + gradient for one sequence sample given raw frames (finetune path)
float sequence_loss_grad_frames(Model& m, const std::vector<Tensor>& frames, int64_t label,
                                const TrainConfig& cfg, Rng& rng) {
    const int64_t N = static_cast<int64_t>(frames.size());
    const int64_t D = m.spec.backbone.feature_dim;
    std::vector<BackboneCache> caches(static_cast<size_t>(N));
    Tensor featmat({N, D});
    for (int64_t i = 0; i < N; ++i) {
        const Tensor f = backbone_features(m, frames[static_cast<size_t>(i)], &caches[static_cast<size_t>(i)]);
        for (int64_t j = 0; j < D; ++j) featmat.ptr()[i * D + j] = f.ptr()[j];
    }
    float loss;
    Tensor gfeat;
    if (m.spec.head.kind == HeadKind::attention) {
        loss = attention_loss_grad(m, featmat, label, rng, &gfeat);
    } else {
        const Tensor rows = sequence_rows(m, featmat);
        Tensor grows;
        loss = gru_loss_grad(m, rows, label, cfg.per_step_loss, rng, &grows);
        gfeat = sequence_rows_backward(m, grows, N, D);
    }
    Tensor grow({D});
    for (int64_t i = 0; i < N; ++i) {
        for (int64_t j = 0; j < D; ++j) grow.ptr()[j] = gfeat.ptr()[i * D + j];
        backbone_backward(m, caches[static_cast<size_t>(i)], grow);
    }
    return loss;
}

// loss + gradient from a ready feature window (frozen backbone path)
float sequence_loss_grad_features(Model& m, const Tensor& featmat, int64_t label, const TrainConfig& cfg,
                                  Rng& rng) {
    if (m.spec.head.kind == HeadKind::attention) return attention_loss_grad(m, featmat, label, rng);
    const Tensor rows = sequence_rows(m, featmat);
    return gru_loss_grad(m, rows, label, cfg.per_step_loss, rng);
}

int64_t argmax_of(const Tensor& v) {
    int64_t best = 0;
    for (int64_t i = 1; i < v.numel(); ++i)
        if (v.ptr()[i] > v.ptr()[best]) best = i;
    return best;
}

// final-step (or direct) probabilities for one window, eval mode
Tensor window_probs(Model& m, const Tensor& featmat) {
    if (m.spec.head.kind == HeadKind::attention)
        return attention_forward_features(m, featmat, /*training=*/false, nullptr);
    const Tensor rows = sequence_rows(m, featmat);
    const Tensor per_step = gru_sequence_forward(m, rows, /*training=*/false, nullptr);
    const int64_t K = per_step.dim(0), C = per_step.dim(1);
    Tensor out({C});
    for (int64_t c = 0; c < C; ++c) out.ptr()[c] = per_step.ptr()[(K - 1) * C + c];
    return out;
}

}  // namespace

TrainResult train(Model& model, const DatasetIndex& index, const std::vector<int64_t>& clip_ids,
                  const TrainConfig& cfg) {
    if (clip_ids.empty()) throw ConfigError("train: empty clip list");
    if (cfg.batch_size < 1 || cfg.epochs < 1) throw ConfigError("train: batch_size and epochs must be >= 1");
    const HeadKind kind = model.spec.head.kind;
    const int64_t N = model.spec.n_frames;
    const bool seq = is_sequence(kind);
    const bool aug = augment_active(cfg.augment);
    const bool frozen_features = seq && !cfg.finetune_backbone && !aug;

    const auto frames = load_all(index, clip_ids);

    // frozen backbone + no augmentation: per-frame features never change,
    // so compute them once and train the head on cached rows
    std::vector<Tensor> feat_cache;
    if (frozen_features) {
        feat_cache.resize(clip_ids.size());
        std::vector<Model> fw(static_cast<size_t>(std::min<int64_t>(worker_count(),
                                                                    static_cast<int64_t>(clip_ids.size()))),
                              model);
        parallel_for(static_cast<int64_t>(clip_ids.size()), [&](int64_t i, int64_t w) {
            feat_cache[static_cast<size_t>(i)] =
                clip_features(fw[static_cast<size_t>(w)], frames[static_cast<size_t>(i)]);
        });
    }

    // the fixed (clip, window) sample list; start -1 means "drawn per epoch"
    std::vector<SampleRef> samples;
    for (size_t i = 0; i < clip_ids.size(); ++i) {
        const ClipRecord& clip = index.clips[static_cast<size_t>(clip_ids[i])];
        const int64_t L = static_cast<int64_t>(clip.frame_paths.size());
        if (seq && cfg.all_windows && cfg.sampling == SamplingMode::consecutive) {
            for (int64_t s : window_starts(L, N)) samples.push_back({static_cast<int64_t>(i), s});
        } else {
            samples.push_back({static_cast<int64_t>(i), -1});
        }
    }

    const int64_t n_samples = static_cast<int64_t>(samples.size());
    const int64_t steps_per_epoch = (n_samples + cfg.batch_size - 1) / cfg.batch_size;
    const LrSchedule sched = cfg.cyclic ? cyclic_lr(cfg.max_lr, cfg.max_lr / 10.0, 10 * steps_per_epoch)
                                        : constant_lr(cfg.max_lr);

    const size_t n_params = model.params.size();
    std::vector<std::vector<Tensor>> grad_buf(static_cast<size_t>(cfg.batch_size));
    for (auto& buf : grad_buf) {
        buf.reserve(n_params);
        for (const auto& p : model.params.all()) buf.emplace_back(p.value.shape);
    }
    std::vector<float> losses(static_cast<size_t>(cfg.batch_size));
    std::vector<int8_t> corrects(static_cast<size_t>(cfg.batch_size));
    std::vector<Model> worker_models(static_cast<size_t>(std::min<int64_t>(worker_count(), cfg.batch_size)));

    TrainResult result;
    int64_t step = 0;
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng order_rng(seed_for(cfg.seed, 0xE90C, static_cast<uint64_t>(epoch)));
        const std::vector<int64_t> order = order_rng.permutation(static_cast<size_t>(n_samples));
        double loss_sum = 0.0;
        int64_t correct_sum = 0;

        for (int64_t b0 = 0; b0 < n_samples; b0 += cfg.batch_size) {
            const int64_t bsz = std::min<int64_t>(cfg.batch_size, n_samples - b0);
            const double lr = lr_at(sched, step);

            for (auto& wm : worker_models) wm = model;  // snapshot current values

            parallel_for(bsz, [&](int64_t bi, int64_t w) {
                Model& wm = worker_models[static_cast<size_t>(w)];
                wm.params.zero_grad();

                const int64_t pos = static_cast<int64_t>(order[static_cast<size_t>(b0 + bi)]);
                const SampleRef& ref = samples[static_cast<size_t>(pos)];
                const ClipRecord& clip =
                    index.clips[static_cast<size_t>(clip_ids[static_cast<size_t>(ref.clip_pos)])];
                const auto& clip_frames = frames[static_cast<size_t>(ref.clip_pos)];
                const int64_t L = static_cast<int64_t>(clip_frames.size());
                Rng srng(seed_for(cfg.seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(pos)));

                float loss;
                int64_t pred;
                if (!seq) {
                    // one frame per clip per epoch
                    const int64_t t = static_cast<int64_t>(srng.uniform_int(static_cast<uint64_t>(L)));
                    Tensor frame = clip_frames[static_cast<size_t>(t)];
                    if (aug) {
                        FrameSequence one;
                        one.frames.push_back(std::move(frame));
                        frame = augment_sequence(one, cfg.augment, srng).frames[0];
                    }
                    ClassifierCache cc;
                    classify_image(wm, frame, /*training=*/true, &srng, &cc);
                    Tensor probs;
                    softmax_xent_forward(cc.logits, clip.label, loss, probs);
                    Tensor glogits, gdropped, gfeat;
                    softmax_xent_backward(probs, clip.label, 1.0f, glogits);
                    dense_backward(wm.params.at("head.fc.w").value, cc.dropped, glogits,
                                   wm.params.at("head.fc.w").grad, wm.params.at("head.fc.b").grad,
                                   gdropped);
                    dropout_backward(cc.drop_mask, gdropped, gfeat);
                    backbone_backward(wm, cc.bb, gfeat);
                    pred = argmax_of(cc.probs);
                } else {
                    std::vector<int64_t> idx;
                    if (ref.start >= 0) {
                        for (int64_t j = 0; j < N; ++j) idx.push_back(ref.start + j);
                    } else if (cfg.sampling == SamplingMode::consecutive) {
                        idx = sample_consecutive(clip, N, srng);
                    } else {
                        idx = sample_spaced(clip, N);
                    }
                    if (frozen_features) {
                        const Tensor fmw =
                            feature_window(feat_cache[static_cast<size_t>(ref.clip_pos)], idx[0], N);
                        loss = sequence_loss_grad_features(wm, fmw, clip.label, cfg, srng);
                        pred = argmax_of(window_probs(wm, fmw));
                    } else {
                        FrameSequence seq_in;
                        for (int64_t j : idx) seq_in.frames.push_back(clip_frames[static_cast<size_t>(j)]);
                        std::vector<Tensor> fr = aug ? augment_sequence(seq_in, cfg.augment, srng).frames
                                                     : std::move(seq_in.frames);
                        loss = sequence_loss_grad_frames(wm, fr, clip.label, cfg, srng);
                        const int64_t D = wm.spec.backbone.feature_dim;
                        Tensor fm({N, D});
                        for (int64_t r = 0; r < N; ++r) {
                            const Tensor f = backbone_features(wm, fr[static_cast<size_t>(r)]);
                            for (int64_t j = 0; j < D; ++j) fm.ptr()[r * D + j] = f.ptr()[j];
                        }
                        pred = argmax_of(window_probs(wm, fm));
                    }
                }
                losses[static_cast<size_t>(bi)] = loss;
                corrects[static_cast<size_t>(bi)] = pred == clip.label ? 1 : 0;
                auto& buf = grad_buf[static_cast<size_t>(bi)];
                const auto& ps = wm.params.all();
                for (size_t pi = 0; pi < ps.size(); ++pi) buf[pi].data = ps[pi].grad.data;
            });

            // reduce in sample order so the thread count never changes results
            model.params.zero_grad();
            const float inv_b = 1.0f / static_cast<float>(bsz);
            auto& target = model.params.all();
            for (int64_t bi = 0; bi < bsz; ++bi) {
                if (!std::isfinite(losses[static_cast<size_t>(bi)]))
                    throw StateError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(b0 / cfg.batch_size) + ", lr " + std::to_string(lr));
                loss_sum += losses[static_cast<size_t>(bi)];
                correct_sum += corrects[static_cast<size_t>(bi)];
                const auto& buf = grad_buf[static_cast<size_t>(bi)];
                for (size_t pi = 0; pi < n_params; ++pi) {
                    float* dst = target[pi].grad.ptr();
                    const float* src = buf[pi].ptr();
                    for (int64_t j = 0; j < target[pi].grad.numel(); ++j) dst[j] += src[j] * inv_b;
                }
            }

            if (cfg.optimizer == OptimizerKind::sgd)
                sgd_momentum_step(model.params, lr, cfg.momentum, cfg.l2);
            else
                adam_step(model.params, lr, cfg.momentum, cfg.beta2, cfg.adam_eps, cfg.l2);
            ++step;
        }

        EpochStats es;
        es.mean_loss = loss_sum / static_cast<double>(n_samples);
        es.train_accuracy = 100.0 * static_cast<double>(correct_sum) / static_cast<double>(n_samples);
        result.history.push_back(es);
    }
    return result;
}

MetricsReport evaluate(Model& model, const DatasetIndex& index, const std::vector<int64_t>& clip_ids,
                       SamplingMode sampling, uint64_t seed) {
    if (clip_ids.empty()) throw ConfigError("evaluate: empty clip list");
    const HeadKind kind = model.spec.head.kind;
    const int64_t N = model.spec.n_frames;
    const int64_t C = model.spec.head.n_classes;
    const auto frames = load_all(index, clip_ids);

    std::vector<int64_t> preds(clip_ids.size()), labels(clip_ids.size());
    std::vector<Model> workers(static_cast<size_t>(std::min<int64_t>(worker_count(),
                                                                     static_cast<int64_t>(clip_ids.size()))),
                               model);
    parallel_for(static_cast<int64_t>(clip_ids.size()), [&](int64_t i, int64_t w) {
        Model& wm = workers[static_cast<size_t>(w)];
        const ClipRecord& clip = index.clips[static_cast<size_t>(clip_ids[static_cast<size_t>(i)])];
        const auto& clip_frames = frames[static_cast<size_t>(i)];
        const int64_t L = static_cast<int64_t>(clip_frames.size());
        labels[static_cast<size_t>(i)] = clip.label;

        Tensor probs;
        switch (kind) {
            case HeadKind::image: {
                Rng erng(seed_for(seed, 0xEA1, static_cast<uint64_t>(i)));
                const int64_t t = static_cast<int64_t>(erng.uniform_int(static_cast<uint64_t>(L)));
                probs = classify_image(wm, clip_frames[static_cast<size_t>(t)], false, nullptr);
                break;
            }
            case HeadKind::mean_vote: {
                const std::vector<int64_t> idx = sample_spaced(clip, std::min(N, L));
                Tensor rows({static_cast<int64_t>(idx.size()), C});
                for (size_t r = 0; r < idx.size(); ++r) {
                    const Tensor p =
                        classify_image(wm, clip_frames[static_cast<size_t>(idx[r])], false, nullptr);
                    for (int64_t c = 0; c < C; ++c) rows.ptr()[static_cast<int64_t>(r) * C + c] = p.ptr()[c];
                }
                probs = mean_vote(rows);
                break;
            }
            default: {
                // sequence kinds: average final probabilities over windows
                std::vector<std::vector<int64_t>> windows;
                if (sampling == SamplingMode::consecutive) {
                    for (int64_t s : window_starts(L, N)) {
                        std::vector<int64_t> win;
                        for (int64_t j = 0; j < N; ++j) win.push_back(s + j);
                        windows.push_back(std::move(win));
                    }
                } else {
                    windows.push_back(sample_spaced(clip, N));
                }
                const int64_t D = wm.spec.backbone.feature_dim;
                probs = Tensor({C});
                for (const auto& win : windows) {
                    Tensor fm({N, D});
                    for (int64_t r = 0; r < N; ++r) {
                        const Tensor f = backbone_features(
                            wm, clip_frames[static_cast<size_t>(win[static_cast<size_t>(r)])]);
                        for (int64_t j = 0; j < D; ++j) fm.ptr()[r * D + j] = f.ptr()[j];
                    }
                    const Tensor p = window_probs(wm, fm);
                    for (int64_t c = 0; c < C; ++c) probs.ptr()[c] += p.ptr()[c];
                }
                for (int64_t c = 0; c < C; ++c) probs.ptr()[c] /= static_cast<float>(windows.size());
                break;
            }
        }
        preds[static_cast<size_t>(i)] = argmax_of(probs);
    });

    return metrics_from_confusion(confusion_matrix(preds, labels, C));
}

Model train_pipeline(const ModelSpec& spec, const TrainConfig& cfg, const PretrainSpec& pretrain,
                     const DatasetIndex& index, const std::vector<int64_t>& train_ids, uint64_t seed,
                     TrainResult* history_out) {
    validate_model_spec(spec);
    if (!is_sequence(spec.head.kind) || !pretrain.enabled) {
        Rng init(seed_for(seed, 1, 0));
        Model m = build_model(spec, init);
        TrainConfig c = cfg;
        c.seed = seed_for(seed, 2, 0);
        TrainResult h = train(m, index, train_ids, c);
        if (history_out) *history_out = std::move(h);
        return m;
    }
    // stage 1: single-frame classifier on the same training clips
    ModelSpec cspec;
    cspec.backbone = spec.backbone;
    cspec.head.kind = HeadKind::image;
    cspec.head.n_classes = spec.head.n_classes;
    cspec.head.dropout = pretrain.dropout;
    cspec.n_frames = 1;
    Rng cinit(seed_for(seed, 1, 0));
    Model cls = build_model(cspec, cinit);
    TrainConfig cc = pretrain.cfg;
    cc.seed = seed_for(seed, 2, 0);
    train(cls, index, train_ids, cc);
    // stage 2: sequence head on the donated backbone
    Rng sinit(seed_for(seed, 3, 0));
    Model m = build_model(spec, sinit);
    transfer_backbone(cls, m);
    set_backbone_trainable(m, cfg.finetune_backbone);
    TrainConfig sc = cfg;
    sc.seed = seed_for(seed, 4, 0);
    TrainResult h = train(m, index, train_ids, sc);
    if (history_out) *history_out = std::move(h);
    return m;
}

CrossValReport cross_validate(const ModelSpec& spec, const TrainConfig& cfg, const PretrainSpec& pretrain,
                              const DatasetIndex& index, int64_t k, uint64_t seed,
                              std::vector<FoldPlan>* plans_out) {
    validate_model_spec(spec);
    const FoldPlan plan = patient_kfold(index, k, seed);
    if (plans_out) plans_out->push_back(plan);

    std::vector<MetricsReport> folds;
    for (int64_t f = 0; f < k; ++f) {
        const std::vector<int64_t> train_ids = fold_clips(index, plan, f, /*test_side=*/false);
        const std::vector<int64_t> test_ids = fold_clips(index, plan, f, /*test_side=*/true);
        if (train_ids.empty() || test_ids.empty())
            throw StateError("fold " + std::to_string(f) + " has an empty side");

        // leakage guard: no patient on both sides of the fold
        std::set<std::string> train_p;
        for (int64_t id : train_ids) train_p.insert(index.clips[static_cast<size_t>(id)].patient_id);
        for (int64_t id : test_ids)
            if (train_p.count(index.clips[static_cast<size_t>(id)].patient_id))
                throw StateError("patient leakage in fold " + std::to_string(f) + ": " +
                                 index.clips[static_cast<size_t>(id)].patient_id);

        const uint64_t fold_seed = seed_for(seed, 0xF01D, static_cast<uint64_t>(f));
        try {
            Model model = train_pipeline(spec, cfg, pretrain, index, train_ids, fold_seed);
            folds.push_back(evaluate(model, index, test_ids, cfg.sampling, seed_for(fold_seed, 5, 0)));
        } catch (const std::exception& e) {
            throw StateError("fold " + std::to_string(f) + ": " + e.what());
        }
    }
    return aggregate_folds(std::move(folds));
}

}  // namespace tfw
