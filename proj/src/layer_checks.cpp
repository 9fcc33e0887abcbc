#include "tfw/layer_checks.h"

#include <algorithm>

#include "tfw/kernels.h"
#include "tfw/rng.h"

namespace tfw {

namespace {

DTensor rand_t(Rng& rng, const std::vector<int64_t>& shape, double lo = -1.0, double hi = 1.0) {
    DTensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = rng.uniform(lo, hi);
    return t;
}

// values on a coarse grid, offset per index: keeps every entry at least
// ~0.03 away from relu/max kinks and from ties, so +-eps probes stay on
// one side of the nonlinearity
DTensor kink_safe_t(Rng& rng, const std::vector<int64_t>& shape) {
    DTensor t(shape);
    for (int64_t i = 0; i < t.numel(); ++i) {
        int64_t q = static_cast<int64_t>(rng.uniform_int(20)) - 10;  // -10..9
        if (q >= 0) ++q;                                             // skip 0
        t.ptr()[i] = 0.1 * static_cast<double>(q) + 1e-3 * static_cast<double>(i);
    }
    return t;
}

// fixed projection weights so the scalar loss exercises every output
DTensor loss_weights(const std::vector<int64_t>& shape, uint64_t seed) {
    Rng rng(mix64(seed ^ 0xB055ull));
    return rand_t(rng, shape);
}

double weighted_sum(const DTensor& y, const DTensor& w) {
    double s = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) s += y.ptr()[i] * w.ptr()[i];
    return s;
}

void ensure_zeros(std::vector<DTensor>& g, const std::vector<DTensor>& inputs) {
    g.resize(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) {
        g[i] = DTensor(inputs[i].shape);  // zero-initialized
    }
}

LayerCase make_dense(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {rand_t(rng, {4, 5}), rand_t(rng, {4}), rand_t(rng, {5})};
    c.names = {"W", "b", "x"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        DTensor y;
        dense_forward(in[0], in[1], in[2], y);
        const DTensor w = loss_weights(y.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            dense_backward(in[0], in[2], w, (*g)[0], (*g)[1], (*g)[2]);
        }
        return weighted_sum(y, w);
    };
    return c;
}

LayerCase make_conv(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {rand_t(rng, {3, 2, 3, 3}), rand_t(rng, {3}), rand_t(rng, {2, 6, 6})};
    c.names = {"kern", "bias", "x"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        DTensor y;
        conv2d_forward(in[0], in[1], in[2], /*stride=*/1, /*pad=*/1, y);
        const DTensor w = loss_weights(y.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            conv2d_backward(in[0], in[2], w, 1, 1, (*g)[0], (*g)[1], (*g)[2]);
        }
        return weighted_sum(y, w);
    };
    return c;
}

LayerCase make_conv_strided(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {rand_t(rng, {3, 2, 2, 2}), rand_t(rng, {3}), rand_t(rng, {2, 6, 6})};
    c.names = {"kern", "bias", "x"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        DTensor y;
        conv2d_forward(in[0], in[1], in[2], /*stride=*/2, /*pad=*/0, y);
        const DTensor w = loss_weights(y.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            conv2d_backward(in[0], in[2], w, 2, 0, (*g)[0], (*g)[1], (*g)[2]);
        }
        return weighted_sum(y, w);
    };
    return c;
}

LayerCase make_relu(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {kink_safe_t(rng, {12})};
    c.names = {"x"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        DTensor y;
        relu_forward(in[0], y);
        const DTensor w = loss_weights(y.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            relu_backward(in[0], w, (*g)[0]);
        }
        return weighted_sum(y, w);
    };
    return c;
}

LayerCase make_avgpool(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {rand_t(rng, {2, 4, 4})};
    c.names = {"x"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        DTensor y;
        avgpool2d_forward(in[0], 2, y);
        const DTensor w = loss_weights(y.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            avgpool2d_backward(in[0], 2, w, (*g)[0]);
        }
        return weighted_sum(y, w);
    };
    return c;
}

LayerCase make_maxpool(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {kink_safe_t(rng, {2, 4, 4})};
    c.names = {"x"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        DTensor y;
        std::vector<int64_t> argmax;
        maxpool2d_forward(in[0], 2, y, argmax);
        const DTensor w = loss_weights(y.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            maxpool2d_backward(in[0], 2, w, argmax, (*g)[0]);
        }
        return weighted_sum(y, w);
    };
    return c;
}

LayerCase make_gap(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {rand_t(rng, {3, 4, 4})};
    c.names = {"x"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        DTensor y;
        global_avg_pool_forward(in[0], y);
        const DTensor w = loss_weights(y.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            global_avg_pool_backward(in[0], w, (*g)[0]);
        }
        return weighted_sum(y, w);
    };
    return c;
}

// inference-mode dropout is the identity; the train-mode mask path is
// exercised separately with a frozen mask in the unit tests
LayerCase make_dropout_off(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {rand_t(rng, {10})};
    c.names = {"x"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        DTensor y, mask;
        dropout_forward(in[0], 0.5, /*training=*/false, nullptr, y, mask);
        const DTensor w = loss_weights(y.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            dropout_backward(mask, w, (*g)[0]);
        }
        return weighted_sum(y, w);
    };
    return c;
}

LayerCase make_gru(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    const int64_t D = 3, H = 4;
    c.inputs = {rand_t(rng, {D}),    rand_t(rng, {H}),    rand_t(rng, {H, D}), rand_t(rng, {H, H}),
                rand_t(rng, {H}),    rand_t(rng, {H, D}), rand_t(rng, {H, H}), rand_t(rng, {H}),
                rand_t(rng, {H, D}), rand_t(rng, {H, H}), rand_t(rng, {H})};
    c.names = {"x", "h_prev", "Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        const GruParamsRef<double> p{in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9], in[10]};
        DTensor h_out;
        GruCache<double> cache;
        gru_cell_forward(p, in[0], in[1], h_out, &cache);
        const DTensor w = loss_weights(h_out.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            GruGradsRef<double> gr{(*g)[2], (*g)[3], (*g)[4], (*g)[5], (*g)[6],
                                   (*g)[7], (*g)[8], (*g)[9], (*g)[10]};
            gru_cell_backward(p, cache, w, gr, (*g)[0], (*g)[1]);
        }
        return weighted_sum(h_out, w);
    };
    return c;
}

LayerCase make_softmax_xent(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    c.inputs = {rand_t(rng, {5}, -2.0, 2.0)};
    c.names = {"logits"};
    const int64_t label = static_cast<int64_t>(seed % 5);
    c.fn = [label](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        double loss;
        DTensor probs;
        softmax_xent_forward(in[0], label, loss, probs);
        if (g) {
            ensure_zeros(*g, in);
            DTensor gl;
            softmax_xent_backward(probs, label, 1.0, gl);
            (*g)[0] = gl;
        }
        return loss;
    };
    return c;
}

LayerCase make_mhsa(uint64_t seed) {
    Rng rng(seed);
    LayerCase c;
    const int64_t S = 4, dt = 6;
    c.inputs = {rand_t(rng, {S, dt}),  rand_t(rng, {dt, dt}), rand_t(rng, {dt}),
                rand_t(rng, {dt, dt}), rand_t(rng, {dt}),     rand_t(rng, {dt, dt}),
                rand_t(rng, {dt}),     rand_t(rng, {dt, dt}), rand_t(rng, {dt})};
    c.names = {"x", "Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo"};
    c.fn = [seed](const std::vector<DTensor>& in, std::vector<DTensor>* g) {
        const MhsaParamsRef<double> p{in[1], in[2], in[3], in[4], in[5], in[6], in[7], in[8], /*n_heads=*/2};
        DTensor out;
        MhsaCache<double> cache;
        mhsa_forward(p, in[0], out, &cache);
        const DTensor w = loss_weights(out.shape, seed);
        if (g) {
            ensure_zeros(*g, in);
            MhsaGradsRef<double> gr{(*g)[1], (*g)[2], (*g)[3], (*g)[4], (*g)[5], (*g)[6], (*g)[7], (*g)[8]};
            mhsa_backward(p, cache, w, gr, (*g)[0]);
        }
        return weighted_sum(out, w);
    };
    return c;
}

}  // namespace

const std::vector<LayerCheck>& standard_layer_checks() {
    static const std::vector<LayerCheck> checks = {
        {"dense", make_dense},
        {"conv3x3_s1p1", make_conv},
        {"conv2x2_s2", make_conv_strided},
        {"relu", make_relu},
        {"avgpool2x2", make_avgpool},
        {"maxpool2x2", make_maxpool},
        {"global_avg_pool", make_gap},
        {"dropout_inference", make_dropout_off},
        {"gru_cell", make_gru},
        {"softmax_xent", make_softmax_xent},
        {"mhsa", make_mhsa},
    };
    return checks;
}

std::vector<double> run_layer_checks(int seeds, double eps) {
    const auto& checks = standard_layer_checks();
    std::vector<double> worst(checks.size(), 0.0);
    for (size_t li = 0; li < checks.size(); ++li) {
        for (int s = 0; s < seeds; ++s) {
            LayerCase lc = checks[li].make(static_cast<uint64_t>(s) + 1);
            const GradCheckReport rep = grad_check(lc.fn, lc.inputs, lc.names, eps);
            worst[li] = std::max(worst[li], rep.max_rel_err);
        }
    }
    return worst;
}

}  // namespace tfw
