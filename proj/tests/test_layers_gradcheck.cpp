#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cmath>

#include "tfw/kernels.h"
#include "tfw/layer_checks.h"
#include "tfw/rng.h"

using namespace tfw;

// Every differentiable layer against central finite differences: 20 seeds
// each, double precision, max relative error below 1e-4.
TEST_CASE("finite-difference gradients for every layer") {
    const auto t0 = std::chrono::steady_clock::now();
    for (const LayerCheck& check : standard_layer_checks()) {
        CAPTURE(check.name);
        double worst = 0.0;
        for (uint64_t seed = 1; seed <= 20; ++seed) {
            LayerCase lc = check.make(seed);
            const GradCheckReport rep = grad_check(lc.fn, lc.inputs, lc.names);
            worst = std::max(worst, rep.max_rel_err);
            if (!rep.pass(1e-4)) {
                for (const auto& e : rep.entries) {
                    CAPTURE(e.name);
                    CAPTURE(e.max_rel_err);
                    CAPTURE(e.analytic);
                    CAPTURE(e.numeric);
                    CHECK(e.max_rel_err < 1e-4);
                }
            }
        }
        CHECK(worst < 1e-4);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 60.0);
    MESSAGE("gradient suite: ", secs, " s for 20 seeds x ", standard_layer_checks().size(), " layers");
}

TEST_CASE("train-mode dropout backward routes through the saved mask") {
    Rng rng(5);
    DTensor x({64});
    for (int64_t i = 0; i < x.numel(); ++i) x.ptr()[i] = rng.uniform(-1.0, 1.0);
    DTensor y, mask;
    dropout_forward(x, 0.5, /*training=*/true, &rng, y, mask);

    // inverted scaling: kept entries are x / (1 - p), dropped are zero
    int64_t kept = 0;
    for (int64_t i = 0; i < x.numel(); ++i) {
        if (mask.ptr()[i] != 0.0) {
            ++kept;
            CHECK(y.ptr()[i] == doctest::Approx(x.ptr()[i] * 2.0));
            CHECK(mask.ptr()[i] == doctest::Approx(2.0));
        } else {
            CHECK(y.ptr()[i] == 0.0);
        }
    }
    CHECK(kept > 8);           // p = 0.5 on 64 values: all-dropped would be astronomically unlikely
    CHECK(kept < 56);

    DTensor gy({64});
    gy.fill(1.0);
    DTensor gx;
    dropout_backward(mask, gy, gx);
    for (int64_t i = 0; i < x.numel(); ++i) CHECK(gx.ptr()[i] == mask.ptr()[i]);
}

TEST_CASE("dropout expectation is preserved") {
    Rng rng(17);
    DTensor x = DTensor::full({2000}, 1.0);
    DTensor y, mask;
    dropout_forward(x, 0.3, true, &rng, y, mask);
    double mean = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) mean += y.ptr()[i];
    mean /= static_cast<double>(y.numel());
    CHECK(mean == doctest::Approx(1.0).epsilon(0.1));
    CHECK_THROWS_AS(dropout_forward(x, 1.0, true, &rng, y, mask), ConfigError);
}

TEST_CASE("conv rejects non-integral output geometry") {
    CHECK(conv_out_dim(32, 3, 1, 1) == 32);
    CHECK(conv_out_dim(32, 2, 2, 0) == 16);
    CHECK(conv_out_dim(5, 3, 1, 0) == 3);
    // (32 + 2 - 3) / 2 is not integral: stride-2 3x3 pad-1 is rejected
    CHECK_THROWS_AS(conv_out_dim(32, 3, 2, 1), ConfigError);
    CHECK_THROWS_AS(conv_out_dim(3, 5, 1, 0), ConfigError);
}

TEST_CASE("softmax cross-entropy basics") {
    DTensor logits({3});
    logits.fill(0.0);
    double loss;
    DTensor probs;
    softmax_xent_forward(logits, 1, loss, probs);
    CHECK(loss == doctest::Approx(std::log(3.0)));
    for (int64_t i = 0; i < 3; ++i) CHECK(probs.ptr()[i] == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(softmax_xent_forward(logits, 3, loss, probs), std::out_of_range);
    CHECK_THROWS_AS(softmax_xent_forward(logits, -1, loss, probs), std::out_of_range);
}

TEST_CASE("gru cell output stays in (-1, 1) blend range") {
    // h' is a convex blend of h and tanh(...), so |h'| <= max(|h|, 1)
    Rng rng(23);
    const int64_t D = 5, H = 7;
    auto mk = [&](std::vector<int64_t> s) {
        DTensor t(std::move(s));
        for (int64_t i = 0; i < t.numel(); ++i) t.ptr()[i] = rng.uniform(-1.0, 1.0);
        return t;
    };
    const DTensor Wz = mk({H, D}), Uz = mk({H, H}), bz = mk({H});
    const DTensor Wr = mk({H, D}), Ur = mk({H, H}), br = mk({H});
    const DTensor Wh = mk({H, D}), Uh = mk({H, H}), bh = mk({H});
    const GruParamsRef<double> p{Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh};
    const DTensor x = mk({D}), h0 = mk({H});
    GruCache<double>* no_cache = nullptr;
    DTensor h1;
    gru_cell_forward(p, x, h0, h1, no_cache);
    for (int64_t i = 0; i < H; ++i) {
        CHECK(std::fabs(h1.ptr()[i]) <= std::max(std::fabs(h0.ptr()[i]), 1.0) + 1e-12);
    }
    DTensor bad({D + 1});
    DTensor out;
    CHECK_THROWS_AS(gru_cell_forward(p, bad, h0, out, no_cache), ShapeError);
}

TEST_CASE("pooling geometry errors") {
    DTensor x({2, 5, 5});
    DTensor y;
    CHECK_THROWS_AS(avgpool2d_forward(x, 2, y), ConfigError);
    std::vector<int64_t> argmax;
    CHECK_THROWS_AS(maxpool2d_forward(x, 2, y, argmax), ConfigError);
}
