#include "tfw/models.h"

#include <cmath>

namespace tfw {

std::string head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::image: return "image";
        case HeadKind::mean_vote: return "mean_vote";
        case HeadKind::gru: return "gru";
        case HeadKind::gru_tfw: return "gru_tfw";
        case HeadKind::attention: return "attention";
    }
    throw StateError("unreachable head kind");
}

HeadKind head_kind_from_name(const std::string& name) {
    if (name == "image") return HeadKind::image;
    if (name == "mean_vote") return HeadKind::mean_vote;
    if (name == "gru") return HeadKind::gru;
    if (name == "gru_tfw") return HeadKind::gru_tfw;
    if (name == "attention") return HeadKind::attention;
    throw ConfigError("unknown model kind '" + name +
                      "' (expected image|mean_vote|gru|gru_tfw|attention)");
}

namespace {

int64_t effective_k(const ModelSpec& spec) {
    return spec.head.weave_k > 0 ? spec.head.weave_k : spec.n_frames;
}

// GRU input width: weaved rows are N*D/K long, plain rows are D long
int64_t gru_input_dim(const ModelSpec& spec) {
    if (spec.head.kind == HeadKind::gru_tfw)
        return spec.n_frames * spec.backbone.feature_dim / effective_k(spec);
    return spec.backbone.feature_dim;
}

int64_t token_count(const ModelSpec& spec) {
    return spec.n_frames * spec.backbone.feature_dim / spec.head.token_dim;
}

Tensor uniform_init(Rng& rng, const std::vector<int64_t>& shape, double bound) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i)
        t.ptr()[i] = static_cast<float>(rng.uniform(-bound, bound));
    return t;
}

Tensor normal_init(Rng& rng, const std::vector<int64_t>& shape, double std) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = static_cast<float>(rng.normal(0.0, std));
    return t;
}

struct BlockDims {
    int64_t cin, cout;
    bool ds;  // downsampling block: 2x2 stride-2 first conv and skip
};

BlockDims block_dims(const BackboneSpec& bb, size_t si, int64_t bi) {
    const Stage& st = bb.stages[si];
    BlockDims d;
    d.cout = st.channels;
    d.cin = bi == 0 ? (si == 0 ? bb.stages[0].channels : bb.stages[si - 1].channels) : st.channels;
    d.ds = bi == 0 && st.downsample;
    return d;
}

std::string block_prefix(size_t si, int64_t bi) {
    return "bb.s" + std::to_string(si) + ".b" + std::to_string(bi) + ".";
}

}  // namespace

void validate_model_spec(const ModelSpec& spec) {
    const HeadSpec& h = spec.head;
    const BackboneSpec& bb = spec.backbone;
    if (h.n_classes < 2) throw ConfigError("model: n_classes must be >= 2");
    if (h.dropout < 0.0 || h.dropout >= 1.0) throw ConfigError("model: dropout must lie in [0, 1)");
    if (spec.n_frames < 1) throw ConfigError("model: n_frames must be >= 1");
    if (bb.input_size < 4) throw ConfigError("model: input_size must be >= 4");
    if (bb.feature_dim < 1) throw ConfigError("model: feature_dim must be >= 1");
    int64_t size = bb.input_size;
    for (const auto& st : bb.stages) {
        if (st.channels < 1 || st.blocks < 1) throw ConfigError("model: stage channels/blocks must be >= 1");
        if (st.downsample) {
            if (size % 2 != 0)
                throw ConfigError("model: downsample stage needs an even extent, got " + std::to_string(size));
            size /= 2;
        }
    }
    if (h.kind == HeadKind::gru || h.kind == HeadKind::gru_tfw) {
        if (h.hidden < 1) throw ConfigError("model: gru hidden size must be >= 1");
    }
    if (h.kind == HeadKind::gru_tfw) {
        const int64_t k = h.weave_k > 0 ? h.weave_k : spec.n_frames;
        if (bb.feature_dim % k != 0)
            throw ConfigError("model: weave K=" + std::to_string(k) + " must divide feature_dim=" +
                              std::to_string(bb.feature_dim));
    } else if (h.weave_k != 0) {
        throw ConfigError("model: weave_k applies only to the gru_tfw kind");
    }
    if (h.kind == HeadKind::attention) {
        if (h.token_dim < 1) throw ConfigError("model: attention requires token_dim");
        if ((spec.n_frames * bb.feature_dim) % h.token_dim != 0)
            throw ConfigError("model: token_dim " + std::to_string(h.token_dim) + " must divide N*D = " +
                              std::to_string(spec.n_frames * bb.feature_dim));
        if (h.n_heads < 1 || h.token_dim % h.n_heads != 0)
            throw ConfigError("model: n_heads " + std::to_string(h.n_heads) + " must divide token_dim " +
                              std::to_string(h.token_dim));
    } else if (h.token_dim != 0) {
        throw ConfigError("model: token_dim applies only to the attention kind");
    }
}

Model build_model(const ModelSpec& spec, Rng& rng) {
    validate_model_spec(spec);
    Model m;
    m.spec = spec;
    ParamStore& ps = m.params;
    const BackboneSpec& bb = spec.backbone;
    const HeadSpec& h = spec.head;
    const int64_t D = bb.feature_dim;

    if (bb.stages.empty()) {
        const int64_t in = bb.input_size * bb.input_size;
        ps.add("bb.flat.w", uniform_init(rng, {D, in}, 1.0 / std::sqrt(static_cast<double>(in))));
        ps.add("bb.flat.b", Tensor({D}), /*decay=*/false);
    } else {
        const int64_t c0 = bb.stages[0].channels;
        ps.add("bb.stem.w", uniform_init(rng, {c0, 1, 3, 3}, 1.0 / 3.0));
        ps.add("bb.stem.b", Tensor({c0}), false);
        for (size_t si = 0; si < bb.stages.size(); ++si) {
            for (int64_t bi = 0; bi < bb.stages[si].blocks; ++bi) {
                const BlockDims d = block_dims(bb, si, bi);
                const std::string pre = block_prefix(si, bi);
                const int64_t k1 = d.ds ? 2 : 3;
                ps.add(pre + "c1.w", uniform_init(rng, {d.cout, d.cin, k1, k1},
                                                  1.0 / std::sqrt(static_cast<double>(d.cin * k1 * k1))));
                ps.add(pre + "c1.b", Tensor({d.cout}), false);
                ps.add(pre + "c2.w", uniform_init(rng, {d.cout, d.cout, 3, 3},
                                                  1.0 / std::sqrt(static_cast<double>(d.cout * 9))));
                ps.add(pre + "c2.b", Tensor({d.cout}), false);
                if (d.ds || d.cin != d.cout) {
                    const int64_t ks = d.ds ? 2 : 1;
                    ps.add(pre + "skip.w", uniform_init(rng, {d.cout, d.cin, ks, ks},
                                                        1.0 / std::sqrt(static_cast<double>(d.cin * ks * ks))));
                    ps.add(pre + "skip.b", Tensor({d.cout}), false);
                }
            }
        }
        const int64_t clast = bb.stages.back().channels;
        ps.add("bb.proj.w", uniform_init(rng, {D, clast}, 1.0 / std::sqrt(static_cast<double>(clast))));
        ps.add("bb.proj.b", Tensor({D}), false);
    }

    switch (h.kind) {
        case HeadKind::image:
        case HeadKind::mean_vote: {
            ps.add("head.fc.w", uniform_init(rng, {h.n_classes, D}, 1.0 / std::sqrt(static_cast<double>(D))));
            ps.add("head.fc.b", Tensor({h.n_classes}), false);
            break;
        }
        case HeadKind::gru:
        case HeadKind::gru_tfw: {
            const int64_t din = gru_input_dim(spec);
            const int64_t H = h.hidden;
            const double bound = 1.0 / std::sqrt(static_cast<double>(H));
            for (const char* gate : {"z", "r", "h"}) {
                ps.add(std::string("gru.W") + gate, uniform_init(rng, {H, din}, bound));
                ps.add(std::string("gru.U") + gate, uniform_init(rng, {H, H}, bound));
                ps.add(std::string("gru.b") + gate, uniform_init(rng, {H}, bound), false);
            }
            ps.add("gru.head.w", uniform_init(rng, {h.n_classes, H}, bound));
            ps.add("gru.head.b", Tensor({h.n_classes}), false);
            break;
        }
        case HeadKind::attention: {
            const int64_t dt = h.token_dim;
            const int64_t S = token_count(spec);
            const int64_t fc = h.fc_dim > 0 ? h.fc_dim : D;
            const double bound = 1.0 / std::sqrt(static_cast<double>(dt));
            ps.add("attn.pos", normal_init(rng, {S, dt}, 0.02));
            for (const char* nm : {"q", "k", "v", "o"}) {
                ps.add(std::string("attn.W") + nm, uniform_init(rng, {dt, dt}, bound));
                ps.add(std::string("attn.b") + nm, Tensor({dt}), false);
            }
            ps.add("attn.fc1.w", uniform_init(rng, {fc, dt}, bound));
            ps.add("attn.fc1.b", Tensor({fc}), false);
            ps.add("attn.fc2.w", uniform_init(rng, {h.n_classes, fc},
                                              1.0 / std::sqrt(static_cast<double>(fc))));
            ps.add("attn.fc2.b", Tensor({h.n_classes}), false);
            break;
        }
    }
    return m;
}

int64_t param_count(const ModelSpec& spec) {
    Rng dummy(0);
    return build_model(spec, dummy).params.scalar_count();
}

void transfer_backbone(const Model& src, Model& dst) {
    for (const auto& p : src.params.all()) {
        if (p.name.rfind("bb.", 0) != 0) continue;
        Param& q = dst.params.at(p.name);
        if (q.value.shape != p.value.shape)
            throw ShapeError("backbone transfer: " + p.name + " " + shape_str(p.value.shape) + " vs " +
                             shape_str(q.value.shape));
        q.value = p.value;
    }
}

void set_backbone_trainable(Model& m, bool trainable) {
    for (auto& p : m.params.all())
        if (p.name.rfind("bb.", 0) == 0) p.trainable = trainable;
}

// ------------------------------------------------------------- backbone

namespace {

Tensor as_chw(const Tensor& frame, int64_t expect) {
    if (frame.rank() == 2) {
        if (frame.dim(0) != expect || frame.dim(1) != expect)
            throw ShapeError("backbone: frame " + shape_str(frame.shape) + " vs input size " +
                             std::to_string(expect));
        Tensor x({1, frame.dim(0), frame.dim(1)});
        x.data = frame.data;
        return x;
    }
    if (frame.rank() == 3 && frame.dim(0) == 1 && frame.dim(1) == expect && frame.dim(2) == expect)
        return frame;
    throw ShapeError("backbone: expected [S,S] or [1,S,S] with S=" + std::to_string(expect) + ", got " +
                     shape_str(frame.shape));
}

void block_forward(Model& m, size_t si, int64_t bi, const Tensor& x, BlockCache* c, Tensor& y) {
    const std::string pre = block_prefix(si, bi);
    const BlockDims d = block_dims(m.spec.backbone, si, bi);
    const int64_t stride1 = d.ds ? 2 : 1;
    const int64_t k1 = d.ds ? 2 : 3;
    const int64_t pad1 = d.ds ? 0 : 1;
    Tensor a1, c1, a2, c2;
    relu_forward(x, a1);
    conv2d_forward(m.params.at(pre + "c1.w").value, m.params.at(pre + "c1.b").value, a1, stride1, pad1, c1);
    relu_forward(c1, a2);
    conv2d_forward(m.params.at(pre + "c2.w").value, m.params.at(pre + "c2.b").value, a2, 1, 1, c2);
    if (m.params.has(pre + "skip.w")) {
        Tensor s;
        conv2d_forward(m.params.at(pre + "skip.w").value, m.params.at(pre + "skip.b").value, x,
                       d.ds ? 2 : 1, 0, s);
        y = Tensor(c2.shape);
        for (int64_t i = 0; i < y.numel(); ++i) y.ptr()[i] = c2.ptr()[i] + s.ptr()[i];
    } else {
        y = Tensor(c2.shape);
        for (int64_t i = 0; i < y.numel(); ++i) y.ptr()[i] = c2.ptr()[i] + x.ptr()[i];
    }
    (void)k1;
    if (c) {
        c->x = x;
        c->a1 = std::move(a1);
        c->c1 = std::move(c1);
        c->a2 = std::move(a2);
        c->c2 = std::move(c2);
        c->y = y;
    }
}

// returns gradient wrt the block input
Tensor block_backward(Model& m, size_t si, int64_t bi, const BlockCache& c, const Tensor& gy) {
    const std::string pre = block_prefix(si, bi);
    const BlockDims d = block_dims(m.spec.backbone, si, bi);
    const int64_t stride1 = d.ds ? 2 : 1;
    const int64_t pad1 = d.ds ? 0 : 1;
    Tensor ga2, gc1, ga1, gx1;
    conv2d_backward(m.params.at(pre + "c2.w").value, c.a2, gy, 1, 1,
                    m.params.at(pre + "c2.w").grad, m.params.at(pre + "c2.b").grad, ga2);
    relu_backward(c.c1, ga2, gc1);
    conv2d_backward(m.params.at(pre + "c1.w").value, c.a1, gc1, stride1, pad1,
                    m.params.at(pre + "c1.w").grad, m.params.at(pre + "c1.b").grad, ga1);
    relu_backward(c.x, ga1, gx1);
    Tensor gx(c.x.shape);
    if (m.params.has(pre + "skip.w")) {
        Tensor gskip;
        conv2d_backward(m.params.at(pre + "skip.w").value, c.x, gy, d.ds ? 2 : 1, 0,
                        m.params.at(pre + "skip.w").grad, m.params.at(pre + "skip.b").grad, gskip);
        for (int64_t i = 0; i < gx.numel(); ++i) gx.ptr()[i] = gx1.ptr()[i] + gskip.ptr()[i];
    } else {
        for (int64_t i = 0; i < gx.numel(); ++i) gx.ptr()[i] = gx1.ptr()[i] + gy.ptr()[i];
    }
    return gx;
}

}  // namespace

Tensor backbone_features(Model& m, const Tensor& frame, BackboneCache* cache) {
    const BackboneSpec& bb = m.spec.backbone;
    if (bb.stages.empty()) {
        Tensor x({bb.input_size * bb.input_size});
        const Tensor chw = as_chw(frame, bb.input_size);
        x.data = chw.data;
        Tensor feat;
        dense_forward(m.params.at("bb.flat.w").value, m.params.at("bb.flat.b").value, x, feat);
        if (cache) {
            cache->input = chw;
            cache->feat = feat;
        }
        return feat;
    }
    Tensor x = as_chw(frame, bb.input_size);
    BackboneCache local;
    BackboneCache& c = cache ? *cache : local;
    c.input = x;
    conv2d_forward(m.params.at("bb.stem.w").value, m.params.at("bb.stem.b").value, x, 1, 1, c.stem);
    Tensor cur = c.stem;
    c.blocks.assign(bb.stages.size(), {});
    for (size_t si = 0; si < bb.stages.size(); ++si) {
        c.blocks[si].resize(static_cast<size_t>(bb.stages[si].blocks));
        for (int64_t bi = 0; bi < bb.stages[si].blocks; ++bi) {
            Tensor y;
            block_forward(m, si, bi, cur, cache ? &c.blocks[si][static_cast<size_t>(bi)] : nullptr, y);
            cur = std::move(y);
        }
    }
    c.last = cur;
    relu_forward(c.last, c.last_relu);
    global_avg_pool_forward(c.last_relu, c.gap);
    dense_forward(m.params.at("bb.proj.w").value, m.params.at("bb.proj.b").value, c.gap, c.feat);
    return c.feat;
}

void backbone_backward(Model& m, const BackboneCache& cache, const Tensor& gfeat) {
    const BackboneSpec& bb = m.spec.backbone;
    if (bb.stages.empty()) {
        Tensor x({bb.input_size * bb.input_size});
        x.data = cache.input.data;
        Tensor gx;
        dense_backward(m.params.at("bb.flat.w").value, x, gfeat, m.params.at("bb.flat.w").grad,
                       m.params.at("bb.flat.b").grad, gx);
        return;
    }
    Tensor ggap;
    dense_backward(m.params.at("bb.proj.w").value, cache.gap, gfeat, m.params.at("bb.proj.w").grad,
                   m.params.at("bb.proj.b").grad, ggap);
    Tensor glast_relu, glast;
    global_avg_pool_backward(cache.last_relu, ggap, glast_relu);
    relu_backward(cache.last, glast_relu, glast);
    Tensor g = std::move(glast);
    for (size_t si = bb.stages.size(); si-- > 0;) {
        for (int64_t bi = bb.stages[si].blocks; bi-- > 0;)
            g = block_backward(m, si, bi, cache.blocks[si][static_cast<size_t>(bi)], g);
    }
    Tensor gstem_in;
    conv2d_backward(m.params.at("bb.stem.w").value, cache.input, g, 1, 1, m.params.at("bb.stem.w").grad,
                    m.params.at("bb.stem.b").grad, gstem_in);
}

// ----------------------------------------------------------- classifier

Tensor classify_image(Model& m, const Tensor& frame, bool training, Rng* rng, ClassifierCache* cache) {
    if (m.spec.head.kind != HeadKind::image && m.spec.head.kind != HeadKind::mean_vote)
        throw StateError("classify_image called on a " + head_kind_name(m.spec.head.kind) + " model");
    if (training && m.spec.head.dropout > 0.0 && !rng)
        throw StateError("classify_image: training with dropout needs an rng");
    ClassifierCache local;
    ClassifierCache& c = cache ? *cache : local;
    Tensor feat = backbone_features(m, frame, cache ? &c.bb : nullptr);
    dropout_forward(feat, m.spec.head.dropout, training, rng, c.dropped, c.drop_mask);
    dense_forward(m.params.at("head.fc.w").value, m.params.at("head.fc.b").value, c.dropped, c.logits);
    c.probs = Tensor({c.logits.numel()});
    c.probs.data = c.logits.data;
    softmax_inplace(c.probs.ptr(), c.probs.numel());
    (void)feat;
    return c.probs;
}

float classifier_loss_grad(Model& m, const Tensor& frame, int64_t label, Rng& rng) {
    ClassifierCache c;
    classify_image(m, frame, /*training=*/true, &rng, &c);
    float loss;
    Tensor probs;
    softmax_xent_forward(c.logits, label, loss, probs);
    Tensor glogits, gdropped, gfeat;
    softmax_xent_backward(probs, label, 1.0f, glogits);
    dense_backward(m.params.at("head.fc.w").value, c.dropped, glogits, m.params.at("head.fc.w").grad,
                   m.params.at("head.fc.b").grad, gdropped);
    dropout_backward(c.drop_mask, gdropped, gfeat);
    const std::string bbkey = m.spec.backbone.stages.empty() ? "bb.flat.w" : "bb.stem.w";
    if (m.params.at(bbkey).trainable) backbone_backward(m, c.bb, gfeat);
    return loss;
}

Tensor mean_vote(const Tensor& prob_rows) {
    if (prob_rows.rank() != 2) throw ShapeError("mean_vote: expected [N, C], got " + shape_str(prob_rows.shape));
    const int64_t N = prob_rows.dim(0), C = prob_rows.dim(1);
    Tensor out({C});
    for (int64_t c = 0; c < C; ++c) {
        float acc = 0.0f;
        for (int64_t i = 0; i < N; ++i) acc += prob_rows.ptr()[i * C + c];
        out.ptr()[c] = acc / static_cast<float>(N);
    }
    return out;
}

// ------------------------------------------------------------ GRU heads

namespace {

GruParamsRef<float> gru_params(Model& m) {
    ParamStore& ps = m.params;
    return {ps.at("gru.Wz").value, ps.at("gru.Uz").value, ps.at("gru.bz").value,
            ps.at("gru.Wr").value, ps.at("gru.Ur").value, ps.at("gru.br").value,
            ps.at("gru.Wh").value, ps.at("gru.Uh").value, ps.at("gru.bh").value};
}

GruGradsRef<float> gru_grads(Model& m) {
    ParamStore& ps = m.params;
    return {ps.at("gru.Wz").grad, ps.at("gru.Uz").grad, ps.at("gru.bz").grad,
            ps.at("gru.Wr").grad, ps.at("gru.Ur").grad, ps.at("gru.br").grad,
            ps.at("gru.Wh").grad, ps.at("gru.Uh").grad, ps.at("gru.bh").grad};
}

}  // namespace

Tensor gru_sequence_forward(Model& m, const Tensor& rows, bool training, Rng* rng,
                            std::vector<GruStepCache>* caches) {
    if (m.spec.head.kind != HeadKind::gru && m.spec.head.kind != HeadKind::gru_tfw)
        throw StateError("gru_sequence_forward called on a " + head_kind_name(m.spec.head.kind) + " model");
    if (rows.rank() != 2 || rows.dim(0) < 1) throw ShapeError("gru: expected non-empty [K, Din] rows");
    if (training && m.spec.head.dropout > 0.0 && !rng)
        throw StateError("gru_sequence_forward: training with dropout needs an rng");
    const int64_t K = rows.dim(0), din = rows.dim(1);
    const int64_t H = m.spec.head.hidden, C = m.spec.head.n_classes;
    const GruParamsRef<float> p = gru_params(m);
    if (caches) caches->assign(static_cast<size_t>(K), {});
    Tensor h = Tensor({H});
    Tensor out({K, C});
    Tensor x({din});
    for (int64_t k = 0; k < K; ++k) {
        for (int64_t j = 0; j < din; ++j) x.ptr()[j] = rows.ptr()[k * din + j];
        GruStepCache local;
        GruStepCache& sc = caches ? (*caches)[static_cast<size_t>(k)] : local;
        Tensor h_next;
        gru_cell_forward(p, x, h, h_next, caches ? &sc.cell : nullptr);
        h = std::move(h_next);
        // fresh dropout mask at every step, on the hidden state
        dropout_forward(h, m.spec.head.dropout, training, rng, sc.dropped, sc.drop_mask);
        dense_forward(m.params.at("gru.head.w").value, m.params.at("gru.head.b").value, sc.dropped,
                      sc.logits);
        sc.probs = Tensor({C});
        sc.probs.data = sc.logits.data;
        softmax_inplace(sc.probs.ptr(), C);
        for (int64_t c = 0; c < C; ++c) out.ptr()[k * C + c] = sc.probs.ptr()[c];
        if (caches) sc.h = h;
    }
    return out;
}

float gru_loss_grad(Model& m, const Tensor& rows, int64_t label, bool per_step, Rng& rng,
                    Tensor* grows) {
    std::vector<GruStepCache> caches;
    gru_sequence_forward(m, rows, /*training=*/true, &rng, &caches);
    const int64_t K = rows.dim(0), din = rows.dim(1);
    const int64_t H = m.spec.head.hidden;
    const GruParamsRef<float> p = gru_params(m);
    GruGradsRef<float> g = gru_grads(m);

    float total_loss = 0.0f;
    if (grows && (grows->rank() != 2 || grows->shape != rows.shape)) *grows = Tensor(rows.shape);
    Tensor gh_carry({H});
    for (int64_t k = K - 1; k >= 0; --k) {
        GruStepCache& sc = caches[static_cast<size_t>(k)];
        float gscale = 0.0f;
        if (per_step) gscale = 1.0f / static_cast<float>(K);
        else if (k == K - 1) gscale = 1.0f;
        float loss_k;
        Tensor probs;
        softmax_xent_forward(sc.logits, label, loss_k, probs);
        if (per_step) total_loss += loss_k / static_cast<float>(K);
        else if (k == K - 1) total_loss = loss_k;
        Tensor gh({H});
        gh.data = gh_carry.data;
        if (gscale != 0.0f) {
            Tensor glogits, gdropped, gh_head;
            softmax_xent_backward(probs, label, gscale, glogits);
            dense_backward(m.params.at("gru.head.w").value, sc.dropped, glogits,
                           m.params.at("gru.head.w").grad, m.params.at("gru.head.b").grad, gdropped);
            dropout_backward(sc.drop_mask, gdropped, gh_head);
            for (int64_t i = 0; i < H; ++i) gh.ptr()[i] += gh_head.ptr()[i];
        }
        Tensor gx, gh_prev;
        gru_cell_backward(p, sc.cell, gh, g, gx, gh_prev);
        if (grows)
            for (int64_t j = 0; j < din; ++j) grows->ptr()[k * din + j] = gx.ptr()[j];
        gh_carry = std::move(gh_prev);
    }
    return total_loss;
}

Tensor sequence_rows(const Model& m, const Tensor& featmat) {
    if (m.spec.head.kind == HeadKind::gru_tfw) return weave(featmat, effective_k(m.spec));
    return featmat;
}

Tensor sequence_rows_backward(const Model& m, const Tensor& grows, int64_t N, int64_t D) {
    if (m.spec.head.kind == HeadKind::gru_tfw) return unweave(grows, N, D, effective_k(m.spec));
    return grows;
}

namespace {

Tensor stack_features(Model& m, const std::vector<Tensor>& frames) {
    if (frames.empty()) throw ShapeError("sequence model: empty frame list");
    const int64_t D = m.spec.backbone.feature_dim;
    Tensor featmat({static_cast<int64_t>(frames.size()), D});
    for (size_t i = 0; i < frames.size(); ++i) {
        Tensor f = backbone_features(m, frames[i]);
        for (int64_t j = 0; j < D; ++j) featmat.ptr()[static_cast<int64_t>(i) * D + j] = f.ptr()[j];
    }
    return featmat;
}

Tensor final_row(const Tensor& per_step) {
    const int64_t K = per_step.dim(0), C = per_step.dim(1);
    Tensor out({C});
    for (int64_t c = 0; c < C; ++c) out.ptr()[c] = per_step.ptr()[(K - 1) * C + c];
    return out;
}

}  // namespace

Tensor gru_tfw_forward(Model& m, const std::vector<Tensor>& frames) {
    if (m.spec.head.kind != HeadKind::gru_tfw)
        throw StateError("gru_tfw_forward called on a " + head_kind_name(m.spec.head.kind) + " model");
    const Tensor rows = sequence_rows(m, stack_features(m, frames));
    return final_row(gru_sequence_forward(m, rows, /*training=*/false, nullptr));
}

Tensor gru_plain_forward(Model& m, const std::vector<Tensor>& frames) {
    if (m.spec.head.kind != HeadKind::gru)
        throw StateError("gru_plain_forward called on a " + head_kind_name(m.spec.head.kind) + " model");
    const Tensor rows = stack_features(m, frames);
    return final_row(gru_sequence_forward(m, rows, /*training=*/false, nullptr));
}

// ------------------------------------------------------------ attention

namespace {

MhsaParamsRef<float> mhsa_params(Model& m) {
    ParamStore& ps = m.params;
    return {ps.at("attn.Wq").value, ps.at("attn.bq").value, ps.at("attn.Wk").value,
            ps.at("attn.bk").value, ps.at("attn.Wv").value, ps.at("attn.bv").value,
            ps.at("attn.Wo").value, ps.at("attn.bo").value, m.spec.head.n_heads};
}

MhsaGradsRef<float> mhsa_grads(Model& m) {
    ParamStore& ps = m.params;
    return {ps.at("attn.Wq").grad, ps.at("attn.bq").grad, ps.at("attn.Wk").grad,
            ps.at("attn.bk").grad, ps.at("attn.Wv").grad, ps.at("attn.bv").grad,
            ps.at("attn.Wo").grad, ps.at("attn.bo").grad};
}

}  // namespace

Tensor attention_forward_features(Model& m, const Tensor& featmat, bool training, Rng* rng,
                                  AttnCache* cache) {
    if (m.spec.head.kind != HeadKind::attention)
        throw StateError("attention_forward called on a " + head_kind_name(m.spec.head.kind) + " model");
    if (training && m.spec.head.dropout > 0.0 && !rng)
        throw StateError("attention: training with dropout needs an rng");
    const int64_t N = featmat.dim(0), D = featmat.dim(1);
    if (N != m.spec.n_frames || D != m.spec.backbone.feature_dim)
        throw ShapeError("attention: features " + shape_str(featmat.shape) + " vs spec N=" +
                         std::to_string(m.spec.n_frames) + " D=" +
                         std::to_string(m.spec.backbone.feature_dim));
    const int64_t dt = m.spec.head.token_dim;
    const int64_t S = token_count(m.spec);
    AttnCache local;
    AttnCache& c = cache ? *cache : local;
    // concat features across frames, then chop into S tokens of dt
    c.tokens = Tensor({S, dt});
    const Tensor& pos = m.params.at("attn.pos").value;
    for (int64_t i = 0; i < S * dt; ++i) c.tokens.ptr()[i] = featmat.ptr()[i] + pos.ptr()[i];
    mhsa_forward(mhsa_params(m), c.tokens, c.attended, cache ? &c.mhsa : nullptr);
    c.pooled = Tensor({dt});
    for (int64_t d = 0; d < dt; ++d) {
        float acc = 0.0f;
        for (int64_t s = 0; s < S; ++s) acc += c.attended.ptr()[s * dt + d];
        c.pooled.ptr()[d] = acc / static_cast<float>(S);
    }
    dense_forward(m.params.at("attn.fc1.w").value, m.params.at("attn.fc1.b").value, c.pooled, c.fc1);
    relu_forward(c.fc1, c.fc1_relu);
    dropout_forward(c.fc1_relu, m.spec.head.dropout, training, rng, c.dropped, c.drop_mask);
    dense_forward(m.params.at("attn.fc2.w").value, m.params.at("attn.fc2.b").value, c.dropped, c.logits);
    c.probs = Tensor({m.spec.head.n_classes});
    c.probs.data = c.logits.data;
    softmax_inplace(c.probs.ptr(), c.probs.numel());
    return c.probs;
}

float attention_loss_grad(Model& m, const Tensor& featmat, int64_t label, Rng& rng, Tensor* gfeatmat) {
    AttnCache c;
    attention_forward_features(m, featmat, /*training=*/true, &rng, &c);
    float loss;
    Tensor probs;
    softmax_xent_forward(c.logits, label, loss, probs);
    Tensor glogits, gdropped, gfc1_relu, gfc1, gpooled;
    softmax_xent_backward(probs, label, 1.0f, glogits);
    dense_backward(m.params.at("attn.fc2.w").value, c.dropped, glogits, m.params.at("attn.fc2.w").grad,
                   m.params.at("attn.fc2.b").grad, gdropped);
    dropout_backward(c.drop_mask, gdropped, gfc1_relu);
    relu_backward(c.fc1, gfc1_relu, gfc1);
    dense_backward(m.params.at("attn.fc1.w").value, c.pooled, gfc1, m.params.at("attn.fc1.w").grad,
                   m.params.at("attn.fc1.b").grad, gpooled);
    const int64_t dt = m.spec.head.token_dim;
    const int64_t S = token_count(m.spec);
    Tensor gattended({S, dt});
    for (int64_t s = 0; s < S; ++s)
        for (int64_t d = 0; d < dt; ++d)
            gattended.ptr()[s * dt + d] = gpooled.ptr()[d] / static_cast<float>(S);
    Tensor gtokens;
    mhsa_backward(mhsa_params(m), c.mhsa, gattended, mhsa_grads(m), gtokens);
    Tensor& gpos = m.params.at("attn.pos").grad;
    for (int64_t i = 0; i < S * dt; ++i) gpos.ptr()[i] += gtokens.ptr()[i];
    if (gfeatmat) {
        *gfeatmat = Tensor({m.spec.n_frames, m.spec.backbone.feature_dim});
        gfeatmat->data = gtokens.data;
    }
    return loss;
}

Tensor attention_forward(Model& m, const std::vector<Tensor>& frames) {
    const Tensor featmat = stack_features(m, frames);
    return attention_forward_features(m, featmat, /*training=*/false, nullptr);
}

}  // namespace tfw
